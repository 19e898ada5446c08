// SPDX-License-Identifier: Apache-2.0
//
// mmce - mmWave massive MIMO-OFDM channel estimation toolkit
// Copyright (C) 2026 mmce contributors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file
// except in compliance with the License. You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0.
//
// Unless required by applicable law or agreed to in writing, software distributed under the
// License is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND,
// either express or implied. See the License for the specific language governing permissions
// and limitations under the License.
// ------------------------------------------------------------------------

#include "mmce/datapipe.hpp"
#include "mmce/rng.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace mmce::datapipe
{

using json = nlohmann::ordered_json;

static constexpr char bin_magic[8] = {'M', 'M', 'C', 'E', 'D', 'A', 'T', '1'};
static constexpr unsigned max_attempts = 1000;
static constexpr unsigned n0_pool = 4; // temporal kinds draw n0 from [0, n0_pool)

void DatasetManifest::validate() const
{
    cfg.validate();
    require(count > 0, "DatasetManifest: count must be positive");
    require(q >= 1, "DatasetManifest: q must be positive");
    require(q <= cfg.n_subcarriers, "DatasetManifest: q exceeds subcarrier count");
    require(scale_c > 0.0, "DatasetManifest: scale_c must be positive");
    require(s_or_d >= 1, "DatasetManifest: s_or_d must be positive");
    if (kind == NetKind::sf)
        require(s_or_d == 1, "DatasetManifest: sf datasets have s_or_d = 1");
    else
        require(interval_s > 0.0, "DatasetManifest: temporal kinds need interval_s > 0");
    if (kind == NetKind::spr)
        require(ceu_position <= s_or_d, "DatasetManifest: ceu_position exceeds family size");
    else
        require(ceu_position == 0, "DatasetManifest: ceu_position is spr-only");
    require(!snr_db.empty(), "DatasetManifest: snr_db must not be empty");
    for (double s : snr_db)
        require(std::isfinite(s), "DatasetManifest: snr_db entries must be finite");
    if (!schedule.per_interval.empty())
    {
        require(schedule.per_interval.size() == n_intervals(),
                "DatasetManifest: schedule length must match interval count");
        for (const auto &pc : schedule.per_interval)
            pc.validate(cfg);
    }
}

PilotSchedule default_schedule(NetKind kind, const SystemConfig &cfg, unsigned n_intervals)
{
    require(n_intervals >= 1, "default_schedule: interval count must be positive");
    PilotSchedule sched;
    sched.per_interval.push_back(pilotfront::make_dft_pilots(cfg, cfg.n_tx, cfg.n_rx, 1.0));
    for (unsigned d = 1; d < n_intervals; ++d)
    {
        if (kind == NetKind::spr)
            sched.per_interval.push_back(
                pilotfront::make_dft_pilots(cfg, cfg.n_tx / 2, cfg.n_rx / 4, 1.0));
        else
            sched.per_interval.push_back(
                pilotfront::make_dft_pilots(cfg, cfg.n_tx, cfg.n_rx, 1.0));
    }
    return sched;
}

void Dataset::validate() const
{
    manifest.validate();
    data.validate();
    require(data.count() == manifest.count, "Dataset: manifest count mismatch");
    require(meta.size() == manifest.count, "Dataset: meta length mismatch");
    require(data.h == manifest.cfg.n_rx && data.w == manifest.cfg.n_tx,
            "Dataset: tensor shape does not match cfg");
    require(data.in_planes == 2 * manifest.n_input_matrices(),
            "Dataset: input plane count does not match manifest");
    require(data.tgt_planes == 2 * manifest.q, "Dataset: target plane count mismatch");
    require(std::abs(data.scale_c - manifest.scale_c) <= 1e-12, "Dataset: scale_c mismatch");
}

// ---- manifest JSON ----------------------------------------------------------

static json manifest_to_json(const DatasetManifest &m)
{
    json j;
    j["schema"] = "dataset/1";
    j["kind"] = neuralest::to_string(m.kind);
    j["scenario"] = m.scenario;
    j["profile_hash"] = m.profile_hash;
    j["cfg"] = {{"n_tx", m.cfg.n_tx},
                {"n_rx", m.cfg.n_rx},
                {"n_tx_rf", m.cfg.n_tx_rf},
                {"n_rx_rf", m.cfg.n_rx_rf},
                {"n_subcarriers", m.cfg.n_subcarriers},
                {"sample_rate_hz", m.cfg.sample_rate_hz},
                {"carrier_hz", m.cfg.carrier_hz},
                {"spacing_ratio", m.cfg.spacing_ratio}};
    j["q"] = m.q;
    j["s_or_d"] = m.s_or_d;
    j["ceu_position"] = m.ceu_position;
    j["snr_db"] = m.snr_db;
    j["count"] = m.count;
    j["scale_c"] = m.scale_c;
    j["seed"] = m.seed;
    j["interval_s"] = m.interval_s;
    j["schedule"] = json::array();
    for (const auto &pc : m.schedule.per_interval)
        j["schedule"].push_back({{"m_tx", pc.m_tx}, {"m_rx", pc.m_rx}});
    j["rejected"] = m.rejected;
    return j;
}

static DatasetManifest manifest_from_json(const json &j)
{
    DatasetManifest m;
    if (j.at("schema").get<std::string>() != "dataset/1")
        throw integrity_error("dataset manifest: unsupported schema '" +
                              j.at("schema").get<std::string>() + "'");
    m.kind = neuralest::net_kind_from_string(j.at("kind").get<std::string>());
    m.scenario = j.at("scenario").get<std::string>();
    m.profile_hash = j.at("profile_hash").get<std::string>();
    const auto &c = j.at("cfg");
    m.cfg.n_tx = c.at("n_tx").get<unsigned>();
    m.cfg.n_rx = c.at("n_rx").get<unsigned>();
    m.cfg.n_tx_rf = c.at("n_tx_rf").get<unsigned>();
    m.cfg.n_rx_rf = c.at("n_rx_rf").get<unsigned>();
    m.cfg.n_subcarriers = c.at("n_subcarriers").get<unsigned>();
    m.cfg.sample_rate_hz = c.at("sample_rate_hz").get<double>();
    m.cfg.carrier_hz = c.at("carrier_hz").get<double>();
    m.cfg.spacing_ratio = c.at("spacing_ratio").get<double>();
    m.q = j.at("q").get<unsigned>();
    m.s_or_d = j.at("s_or_d").get<unsigned>();
    m.ceu_position = j.at("ceu_position").get<unsigned>();
    m.snr_db = j.at("snr_db").get<std::vector<double>>();
    m.count = j.at("count").get<std::uint64_t>();
    m.scale_c = j.at("scale_c").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.interval_s = j.at("interval_s").get<double>();
    for (const auto &sj : j.at("schedule"))
        m.schedule.per_interval.push_back(pilotfront::make_dft_pilots(
            m.cfg, sj.at("m_tx").get<unsigned>(), sj.at("m_rx").get<unsigned>(), 1.0));
    m.rejected = j.at("rejected").get<std::uint64_t>();
    m.validate();
    return m;
}

// ---- binary record I/O ------------------------------------------------------

static void write_u64(std::ostream &os, std::uint64_t v)
{
    os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

static std::uint64_t read_u64(std::istream &is)
{
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char *>(&v), sizeof(v));
    return v;
}

// Appends one complex matrix as row-major interleaved re/im float32.
static void pack_matrix(const arma::cx_mat &m, double scale, std::vector<float> &out)
{
    for (arma::uword y = 0; y < m.n_rows; ++y)
        for (arma::uword x = 0; x < m.n_cols; ++x)
        {
            const auto v = m(y, x);
            out.push_back(static_cast<float>(v.real() * scale));
            out.push_back(static_cast<float>(v.imag() * scale));
        }
}

// ---- sample generation ------------------------------------------------------

namespace
{

struct SlotResult
{
    SampleMeta meta;
    std::uint64_t rejected = 0;
    std::vector<std::vector<float>> payload; // one record per output dataset
};

struct GenPlan
{
    const DatasetManifest *m;
    const ScenarioProfile *profile;
    const PilotSchedule *schedule;
    unsigned n_intervals;
    unsigned n_files; // 1, or D for spr
    double rho;
};

} // namespace

// One generation attempt; returns false when a scaled target leaves [-1, 1].
static bool gen_attempt(const GenPlan &plan, std::uint64_t attempt_seed, SlotResult &out)
{
    const DatasetManifest &m = *plan.m;
    Rng misc(derive_seed(attempt_seed, 0));
    const std::uint64_t k0 = 1 + misc.next_u64() % (m.cfg.n_subcarriers - m.q + 1);
    std::uint64_t n0 = 0;
    if (m.kind != NetKind::sf)
        n0 = misc.next_u64() % n0_pool;
    double snr = m.snr_db.front();
    if (m.snr_db.size() > 1)
        snr = m.snr_db[misc.next_u64() % m.snr_db.size()];
    const double power = std::pow(10.0, snr / 10.0);

    const auto paths = chanmodel::draw_paths(*plan.profile, derive_seed(attempt_seed, 1));
    const auto chain = chanmodel::make_channel_tensor(
        paths, m.cfg, static_cast<unsigned>(k0), m.q,
        static_cast<unsigned>(n0) + plan.n_intervals, plan.rho, derive_seed(attempt_seed, 2));

    // Reject on target bound violations before simulating any pilots. Targets
    // live at the last interval (sf/sft) or at every interval (spr).
    const unsigned d_first = m.kind == NetKind::spr ? 1 : plan.n_intervals;
    for (unsigned d = d_first; d <= plan.n_intervals; ++d)
        for (unsigned j = 0; j < m.q; ++j)
        {
            const auto &h = chain.at(j, n0 + d - 1);
            if (arma::abs(arma::real(h)).max() > m.scale_c ||
                arma::abs(arma::imag(h)).max() > m.scale_c)
                return false;
        }

    arma::field<arma::cx_mat> te(m.q, plan.n_intervals);
    for (unsigned d = 1; d <= plan.n_intervals; ++d)
    {
        pilotfront::PilotConfig pc = plan.schedule->per_interval[d - 1];
        pc.power = power;
        for (unsigned j = 0; j < m.q; ++j)
        {
            const auto y = pilotfront::received_pilots(
                chain.at(j, n0 + d - 1), pc, derive_seed(attempt_seed, 3 + (d - 1) * m.q + j));
            te(j, d - 1) = pilotfront::tentative_estimate(y, pc, m.cfg);
        }
    }

    out.meta = {k0, n0, attempt_seed};
    out.payload.assign(plan.n_files, {});
    const double inv_c = 1.0 / m.scale_c;
    for (unsigned f = 0; f < plan.n_files; ++f)
    {
        // File f covers intervals 1..d_in with targets at interval d_tgt.
        const unsigned d_in = plan.n_files > 1 ? f + 1 : plan.n_intervals;
        const unsigned d_tgt = d_in;
        auto &rec = out.payload[f];
        rec.reserve(std::size_t(2) * m.cfg.n_rx * m.cfg.n_tx * m.q * (d_in + 1));
        for (unsigned d = 1; d <= d_in; ++d)
            for (unsigned j = 0; j < m.q; ++j)
                pack_matrix(te(j, d - 1), 1.0, rec);
        for (unsigned j = 0; j < m.q; ++j)
            pack_matrix(chain.at(j, n0 + d_tgt - 1), inv_c, rec);
    }
    return true;
}

static SlotResult gen_slot(const GenPlan &plan, std::uint64_t index)
{
    const std::uint64_t slot_seed = derive_seed(plan.m->seed, index);
    SlotResult res;
    for (unsigned r = 0; r < max_attempts; ++r)
    {
        if (gen_attempt(plan, derive_seed(slot_seed, 1000 + r), res))
        {
            res.rejected = r;
            return res;
        }
    }
    throw numerical_error("generate_dataset: sample " + std::to_string(index) + " rejected " +
                          std::to_string(max_attempts) +
                          " times; scale_c is too small for this scenario");
}

static void write_checksums(const std::string &dir, const std::vector<std::string> &names)
{
    std::ofstream cs(dir + "/checksums.txt");
    if (!cs)
        throw integrity_error("generate_dataset: cannot write '" + dir + "/checksums.txt'");
    for (const auto &name : names)
        cs << to_hex(file_fnv1a64(dir + "/" + name)) << "  " << name << '\n';
}

static void write_manifest_files(const DatasetManifest &m, const std::string &dir)
{
    std::ofstream os(dir + "/manifest.json");
    if (!os)
        throw integrity_error("generate_dataset: cannot write '" + dir + "/manifest.json'");
    os << manifest_to_json(m).dump(2) << '\n';
    os.close();
    write_checksums(dir, {"manifest.json", "samples.bin"});
}

DatasetManifest generate_dataset(const DatasetManifest &manifest, const ScenarioProfile &profile,
                                 const std::string &out_dir, unsigned n_workers)
{
    DatasetManifest m = manifest;
    profile.validate();
    m.scenario = profile.name;
    m.profile_hash = chanmodel::profile_hash(profile);
    if (m.schedule.per_interval.empty())
        m.schedule = default_schedule(m.kind, m.cfg, m.n_intervals());
    require(m.ceu_position == 0, "generate_dataset: ceu_position is assigned per sub-dataset");
    m.validate();
    require(n_workers >= 1, "generate_dataset: n_workers must be positive");

    GenPlan plan;
    plan.m = &m;
    plan.profile = &profile;
    plan.schedule = &m.schedule;
    plan.n_intervals = m.n_intervals();
    plan.n_files = m.kind == NetKind::spr ? m.s_or_d : 1;
    // sf chains have a single interval, so rho is never applied there.
    plan.rho = m.interval_s > 0.0
                   ? chanmodel::rho_from_doppler(profile.doppler_max_hz, m.interval_s)
                   : 1.0;

    // Open all output streams and write headers.
    std::vector<std::string> dirs;
    for (unsigned f = 0; f < plan.n_files; ++f)
        dirs.push_back(plan.n_files > 1 ? out_dir + "/d" + std::to_string(f + 1) : out_dir);
    std::vector<std::ofstream> streams;
    for (unsigned f = 0; f < plan.n_files; ++f)
    {
        std::filesystem::create_directories(dirs[f]);
        streams.emplace_back(dirs[f] + "/samples.bin", std::ios::binary);
        if (!streams.back())
            throw integrity_error("generate_dataset: cannot write '" + dirs[f] + "/samples.bin'");
        const unsigned n_in = plan.n_files > 1 ? m.q * (f + 1) : m.q * plan.n_intervals;
        streams[f].write(bin_magic, sizeof(bin_magic));
        write_u64(streams[f], m.count);
        write_u64(streams[f], m.cfg.n_rx);
        write_u64(streams[f], m.cfg.n_tx);
        write_u64(streams[f], n_in);
        write_u64(streams[f], m.q);
    }

    // Chunked generation: workers fill a chunk in any order, writes stay
    // sequential in sample order, so output bytes are worker-count invariant.
    const std::uint64_t chunk = 256;
    std::uint64_t rejected_total = 0;
    std::vector<SlotResult> results;
    for (std::uint64_t base = 0; base < m.count; base += chunk)
    {
        const std::uint64_t cnt = std::min(chunk, m.count - base);
        results.assign(cnt, {});
        std::atomic<std::uint64_t> next{0};
        std::exception_ptr err;
        std::mutex err_mx;
        auto work = [&]() {
            for (;;)
            {
                const std::uint64_t i = next.fetch_add(1);
                if (i >= cnt)
                    return;
                try
                {
                    results[i] = gen_slot(plan, base + i);
                }
                catch (...)
                {
                    std::lock_guard<std::mutex> lk(err_mx);
                    if (!err)
                        err = std::current_exception();
                    return;
                }
            }
        };
        if (n_workers == 1)
            work();
        else
        {
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < n_workers; ++t)
                pool.emplace_back(work);
            for (auto &th : pool)
                th.join();
        }
        if (err)
            std::rethrow_exception(err);

        for (std::uint64_t i = 0; i < cnt; ++i)
        {
            rejected_total += results[i].rejected;
            for (unsigned f = 0; f < plan.n_files; ++f)
            {
                write_u64(streams[f], results[i].meta.k0);
                write_u64(streams[f], results[i].meta.n0);
                write_u64(streams[f], results[i].meta.seed);
                const auto &rec = results[i].payload[f];
                streams[f].write(reinterpret_cast<const char *>(rec.data()),
                                 static_cast<std::streamsize>(rec.size() * sizeof(float)));
            }
        }
    }
    for (unsigned f = 0; f < plan.n_files; ++f)
    {
        streams[f].close();
        if (!streams[f])
            throw integrity_error("generate_dataset: write to '" + dirs[f] +
                                  "/samples.bin' failed");
    }

    m.rejected = rejected_total;
    for (unsigned f = 0; f < plan.n_files; ++f)
    {
        DatasetManifest sub = m;
        sub.ceu_position = plan.n_files > 1 ? f + 1 : 0;
        write_manifest_files(sub, dirs[f]);
    }
    return m;
}

// ---- split ------------------------------------------------------------------

std::array<Dataset, 3> split(const Dataset &ds, const std::array<double, 3> &fractions,
                             std::uint64_t seed)
{
    ds.validate();
    double sum = 0.0;
    for (double f : fractions)
    {
        require(f >= 0.0, "split: fractions must be nonnegative");
        sum += f;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "split: fractions must sum to one");

    const arma::uword n = ds.data.count();
    arma::uvec perm(n);
    for (arma::uword i = 0; i < n; ++i)
        perm[i] = i;
    Rng rng(seed);
    for (arma::uword i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.next_u64() % i]);

    const auto n1 = std::min<arma::uword>(
        n, static_cast<arma::uword>(std::llround(fractions[0] * double(n))));
    const auto n12 = std::min<arma::uword>(
        n, static_cast<arma::uword>(std::llround((fractions[0] + fractions[1]) * double(n))));
    const arma::uword bounds[4] = {0, n1, std::max(n1, n12), n};

    std::array<Dataset, 3> out;
    for (int k = 0; k < 3; ++k)
    {
        arma::uvec idx(bounds[k + 1] - bounds[k]);
        for (arma::uword i = 0; i < idx.n_elem; ++i)
            idx[i] = perm[bounds[k] + i];
        out[k].manifest = ds.manifest;
        out[k].manifest.count = idx.n_elem;
        out[k].data.h = ds.data.h;
        out[k].data.w = ds.data.w;
        out[k].data.in_planes = ds.data.in_planes;
        out[k].data.tgt_planes = ds.data.tgt_planes;
        out[k].data.scale_c = ds.data.scale_c;
        out[k].data.inputs = ds.data.inputs.cols(idx);
        out[k].data.targets = ds.data.targets.cols(idx);
        out[k].meta.resize(idx.n_elem);
        for (arma::uword i = 0; i < idx.n_elem; ++i)
            out[k].meta[i] = ds.meta[idx[i]];
    }
    return out;
}

// ---- load/save --------------------------------------------------------------

static std::map<std::string, std::string> read_checksums(const std::string &dir)
{
    std::ifstream cs(dir + "/checksums.txt");
    if (!cs)
        throw integrity_error("load_dataset: missing '" + dir + "/checksums.txt'");
    std::map<std::string, std::string> sums;
    std::string line;
    while (std::getline(cs, line))
    {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string hex, name;
        if (!(ls >> hex >> name) || hex.size() != 16)
            throw integrity_error("load_dataset: malformed checksums.txt in '" + dir + "'");
        sums[name] = hex;
    }
    return sums;
}

static void verify_checksums(const std::string &dir)
{
    const auto sums = read_checksums(dir);
    for (const char *name : {"manifest.json", "samples.bin"})
    {
        auto it = sums.find(name);
        if (it == sums.end())
            throw integrity_error("load_dataset: '" + std::string(name) +
                                  "' missing from checksums.txt in '" + dir + "'");
        if (to_hex(file_fnv1a64(dir + "/" + name)) != it->second)
            throw integrity_error("load_dataset: checksum mismatch for '" + dir + "/" + name +
                                  "'");
    }
}

DatasetManifest load_manifest(const std::string &dir)
{
    std::ifstream is(dir + "/manifest.json");
    if (!is)
        throw integrity_error("load_manifest: cannot open '" + dir + "/manifest.json'");
    try
    {
        json j;
        is >> j;
        return manifest_from_json(j);
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_manifest: malformed manifest in '" + dir + "': " + e.what());
    }
    catch (const std::invalid_argument &e)
    {
        throw integrity_error("load_manifest: invalid manifest in '" + dir + "': " + e.what());
    }
}

Dataset load_dataset(const std::string &dir)
{
    verify_checksums(dir);

    Dataset ds;
    ds.manifest = load_manifest(dir);
    const auto &m = ds.manifest;
    const unsigned n_in = m.n_input_matrices();
    require(n_in >= 1, "load_dataset: manifest has no input matrices");

    std::ifstream is(dir + "/samples.bin", std::ios::binary);
    if (!is)
        throw integrity_error("load_dataset: cannot open '" + dir + "/samples.bin'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, bin_magic, sizeof(magic)) != 0)
        throw integrity_error("load_dataset: '" + dir + "/samples.bin' has a bad header");
    const std::uint64_t n_samples = read_u64(is);
    const std::uint64_t h = read_u64(is), w = read_u64(is);
    const std::uint64_t f_in = read_u64(is), f_tgt = read_u64(is);
    if (!is || n_samples != m.count || h != m.cfg.n_rx || w != m.cfg.n_tx || f_in != n_in ||
        f_tgt != m.q)
        throw integrity_error("load_dataset: samples.bin header disagrees with manifest in '" +
                              dir + "'");

    const std::uint64_t plane = h * w;
    const std::uint64_t in_floats = 2 * plane * n_in;
    const std::uint64_t tgt_floats = 2 * plane * m.q;
    ds.data.h = static_cast<unsigned>(h);
    ds.data.w = static_cast<unsigned>(w);
    ds.data.in_planes = 2 * n_in;
    ds.data.tgt_planes = 2 * m.q;
    ds.data.scale_c = m.scale_c;
    ds.data.inputs.set_size(in_floats, n_samples);
    ds.data.targets.set_size(tgt_floats, n_samples);
    ds.meta.resize(n_samples);

    std::vector<float> buf(std::max(in_floats, tgt_floats));
    auto scatter = [&](const float *rec, std::uint64_t n_mats, float *col) {
        // file record: matrix-major, row-major, re/im interleaved
        // memory column: plane-major (2 planes per matrix), row-major
        for (std::uint64_t mm = 0; mm < n_mats; ++mm)
            for (std::uint64_t y = 0; y < h; ++y)
                for (std::uint64_t x = 0; x < w; ++x)
                {
                    const float *v = rec + 2 * (mm * plane + y * w + x);
                    col[(2 * mm) * plane + y * w + x] = v[0];
                    col[(2 * mm + 1) * plane + y * w + x] = v[1];
                }
    };
    for (std::uint64_t i = 0; i < n_samples; ++i)
    {
        ds.meta[i].k0 = read_u64(is);
        ds.meta[i].n0 = read_u64(is);
        ds.meta[i].seed = read_u64(is);
        is.read(reinterpret_cast<char *>(buf.data()),
                static_cast<std::streamsize>(in_floats * sizeof(float)));
        scatter(buf.data(), n_in, ds.data.inputs.colptr(i));
        is.read(reinterpret_cast<char *>(buf.data()),
                static_cast<std::streamsize>(tgt_floats * sizeof(float)));
        scatter(buf.data(), m.q, ds.data.targets.colptr(i));
        if (!is)
            throw integrity_error("load_dataset: truncated samples.bin in '" + dir + "'");
    }
    if (is.peek() != EOF)
        throw integrity_error("load_dataset: trailing bytes in '" + dir + "/samples.bin'");
    ds.validate();
    return ds;
}

void save_dataset(const Dataset &ds, const std::string &dir)
{
    ds.validate();
    const auto &m = ds.manifest;
    std::filesystem::create_directories(dir);
    std::ofstream os(dir + "/samples.bin", std::ios::binary);
    if (!os)
        throw integrity_error("save_dataset: cannot write '" + dir + "/samples.bin'");

    const std::uint64_t h = ds.data.h, w = ds.data.w, plane = h * w;
    const std::uint64_t n_in = m.n_input_matrices();
    os.write(bin_magic, sizeof(bin_magic));
    write_u64(os, m.count);
    write_u64(os, h);
    write_u64(os, w);
    write_u64(os, n_in);
    write_u64(os, m.q);

    std::vector<float> buf;
    auto gather = [&](const float *col, std::uint64_t n_mats) {
        buf.clear();
        for (std::uint64_t mm = 0; mm < n_mats; ++mm)
            for (std::uint64_t y = 0; y < h; ++y)
                for (std::uint64_t x = 0; x < w; ++x)
                {
                    buf.push_back(col[(2 * mm) * plane + y * w + x]);
                    buf.push_back(col[(2 * mm + 1) * plane + y * w + x]);
                }
        os.write(reinterpret_cast<const char *>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    };
    for (std::uint64_t i = 0; i < m.count; ++i)
    {
        write_u64(os, ds.meta[i].k0);
        write_u64(os, ds.meta[i].n0);
        write_u64(os, ds.meta[i].seed);
        gather(ds.data.inputs.colptr(i), n_in);
        gather(ds.data.targets.colptr(i), m.q);
    }
    os.close();
    if (!os)
        throw integrity_error("save_dataset: write to '" + dir + "/samples.bin' failed");
    write_manifest_files(m, dir);
}

} // namespace mmce::datapipe
