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

#include <doctest.h>

#include "mmce/datapipe.hpp"
#include "mmce/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

using namespace mmce;
using namespace mmce::datapipe;
namespace fs = std::filesystem;

namespace
{

chanmodel::ScenarioProfile small_profile()
{
    chanmodel::ScenarioProfile p;
    p.name = "test-small";
    p.n_paths = 6;
    p.delay_spread_s = 200e-9;
    p.aoa_spread = {3, 0.5};
    p.aod_spread = {3, 0.3};
    p.power_profile = arma::vec{0.10, 0.10, 0.10, 0.12, 0.12, 0.46};
    p.doppler_max_hz = 200.0;
    return p;
}

chanmodel::SystemConfig small_cfg()
{
    chanmodel::SystemConfig cfg;
    cfg.n_tx = 8;
    cfg.n_rx = 4;
    cfg.n_tx_rf = 2;
    cfg.n_rx_rf = 2;
    cfg.n_subcarriers = 32;
    return cfg;
}

DatasetManifest sf_manifest(std::uint64_t count, std::uint64_t seed)
{
    DatasetManifest m;
    m.kind = NetKind::sf;
    m.cfg = small_cfg();
    m.q = 2;
    m.s_or_d = 1;
    m.snr_db = {10.0};
    m.count = count;
    m.scale_c = 4.0;
    m.seed = seed;
    return m;
}

std::string slurp(const fs::path &p)
{
    std::ifstream is(p, std::ios::binary);
    REQUIRE(bool(is));
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string &leaf)
{
    const auto d = fs::temp_directory_path() / leaf;
    fs::remove_all(d);
    return d;
}

// Re-derives sample `index` of a generated dataset from nothing but its
// manifest, following the documented slot/attempt seed recipe, and returns the
// loader's column layout (plane-major, row-major planes).
struct OracleSample
{
    SampleMeta meta;
    std::vector<float> inputs;
    std::vector<float> targets;
};

void append_plane_pair(const arma::cx_mat &m, double scale, std::vector<float> &out)
{
    for (arma::uword y = 0; y < m.n_rows; ++y)
        for (arma::uword x = 0; x < m.n_cols; ++x)
            out.push_back(static_cast<float>(m(y, x).real() * scale));
    for (arma::uword y = 0; y < m.n_rows; ++y)
        for (arma::uword x = 0; x < m.n_cols; ++x)
            out.push_back(static_cast<float>(m(y, x).imag() * scale));
}

OracleSample oracle_sample(const DatasetManifest &m, const chanmodel::ScenarioProfile &profile,
                           std::uint64_t index)
{
    const unsigned n_int = m.n_intervals();
    const double rho =
        m.interval_s > 0.0 ? chanmodel::rho_from_doppler(profile.doppler_max_hz, m.interval_s)
                           : 1.0;
    const std::uint64_t slot_seed = derive_seed(m.seed, index);
    for (unsigned r = 0; r < 1000; ++r)
    {
        const std::uint64_t a = derive_seed(slot_seed, 1000 + r);
        Rng misc(derive_seed(a, 0));
        const std::uint64_t k0 = 1 + misc.next_u64() % (m.cfg.n_subcarriers - m.q + 1);
        std::uint64_t n0 = 0;
        if (m.kind != NetKind::sf)
            n0 = misc.next_u64() % 4;
        double snr = m.snr_db.front();
        if (m.snr_db.size() > 1)
            snr = m.snr_db[misc.next_u64() % m.snr_db.size()];
        const double power = std::pow(10.0, snr / 10.0);

        const auto paths = chanmodel::draw_paths(profile, derive_seed(a, 1));
        const auto chain = chanmodel::make_channel_tensor(paths, m.cfg, unsigned(k0), m.q,
                                                          unsigned(n0) + n_int, rho,
                                                          derive_seed(a, 2));
        const unsigned d_first = m.kind == NetKind::spr ? 1 : n_int;
        bool ok = true;
        for (unsigned d = d_first; ok && d <= n_int; ++d)
            for (unsigned j = 0; j < m.q; ++j)
            {
                const auto &h = chain.at(j, n0 + d - 1);
                if (arma::abs(arma::real(h)).max() > m.scale_c ||
                    arma::abs(arma::imag(h)).max() > m.scale_c)
                {
                    ok = false;
                    break;
                }
            }
        if (!ok)
            continue;

        // matches sub-dataset d_in = ceu_position for spr, n_intervals otherwise
        const unsigned d_in = m.kind == NetKind::spr ? m.ceu_position : n_int;
        OracleSample s;
        s.meta = {k0, n0, a};
        for (unsigned d = 1; d <= d_in; ++d)
        {
            pilotfront::PilotConfig pc = m.schedule.per_interval[d - 1];
            pc.power = power;
            for (unsigned j = 0; j < m.q; ++j)
            {
                const auto y = pilotfront::received_pilots(chain.at(j, n0 + d - 1), pc,
                                                           derive_seed(a, 3 + (d - 1) * m.q + j));
                append_plane_pair(pilotfront::tentative_estimate(y, pc, m.cfg), 1.0, s.inputs);
            }
        }
        for (unsigned j = 0; j < m.q; ++j)
            append_plane_pair(chain.at(j, n0 + d_in - 1), 1.0 / m.scale_c, s.targets);
        return s;
    }
    throw std::runtime_error("oracle_sample: no accepted attempt");
}

void check_against_oracle(const Dataset &ds, const chanmodel::ScenarioProfile &profile)
{
    for (std::uint64_t i = 0; i < ds.manifest.count; ++i)
    {
        const auto s = oracle_sample(ds.manifest, profile, i);
        CHECK(ds.meta[i].k0 == s.meta.k0);
        CHECK(ds.meta[i].n0 == s.meta.n0);
        CHECK(ds.meta[i].seed == s.meta.seed);
        REQUIRE(ds.data.inputs.n_rows == s.inputs.size());
        REQUIRE(ds.data.targets.n_rows == s.targets.size());
        for (arma::uword r = 0; r < ds.data.inputs.n_rows; ++r)
            CHECK(ds.data.inputs(r, i) == s.inputs[r]);
        for (arma::uword r = 0; r < ds.data.targets.n_rows; ++r)
            CHECK(ds.data.targets(r, i) == s.targets[r]);
    }
}

} // namespace

TEST_SUITE("datapipe")
{
    TEST_CASE("default schedules per family")
    {
        const auto cfg = small_cfg();
        const auto sf = default_schedule(NetKind::sf, cfg, 1);
        REQUIRE(sf.per_interval.size() == 1);
        CHECK(sf.per_interval[0].m_tx == 8);
        CHECK(sf.per_interval[0].m_rx == 4);

        const auto sft = default_schedule(NetKind::sft, cfg, 3);
        REQUIRE(sft.per_interval.size() == 3);
        for (const auto &pc : sft.per_interval)
        {
            CHECK(pc.m_tx == 8);
            CHECK(pc.m_rx == 4);
        }

        const auto spr = default_schedule(NetKind::spr, cfg, 3);
        REQUIRE(spr.per_interval.size() == 3);
        CHECK(spr.per_interval[0].m_tx == 8);
        CHECK(spr.per_interval[0].m_rx == 4);
        CHECK(spr.per_interval[1].m_tx == 4); // n_tx / 2
        CHECK(spr.per_interval[1].m_rx == 1); // n_rx / 4
        CHECK(spr.per_interval[2].m_tx == 4);
        CHECK(spr.per_interval[2].m_rx == 1);
    }

    TEST_CASE("generation is byte-identical across runs and worker counts")
    {
        const auto prof = small_profile();
        const auto m = sf_manifest(12, 77);
        const auto da = fresh_dir("mmce-test-dp-a");
        const auto db = fresh_dir("mmce-test-dp-b");
        const auto ra = generate_dataset(m, prof, da.string(), 1);
        const auto rb = generate_dataset(m, prof, db.string(), 3);
        CHECK(ra.rejected == rb.rejected);
        CHECK(ra.profile_hash == rb.profile_hash);
        CHECK(slurp(da / "samples.bin") == slurp(db / "samples.bin"));
        CHECK(slurp(da / "manifest.json") == slurp(db / "manifest.json"));
        fs::remove_all(db);

        const auto ds = load_dataset(da.string());
        CHECK(ds.manifest.count == 12);
        CHECK(ds.data.count() == 12);
        CHECK(ds.data.h == 4);
        CHECK(ds.data.w == 8);
        CHECK(ds.data.in_planes == 4);  // 2 Q for sf
        CHECK(ds.data.tgt_planes == 4);
        CHECK(arma::abs(ds.data.targets).max() <= 1.0f); // acceptance bound
        for (const auto &meta : ds.meta)
        {
            CHECK(meta.k0 >= 1);
            CHECK(meta.k0 <= 31); // K - Q + 1
            CHECK(meta.n0 == 0); // sf has no temporal offset
        }
        fs::remove_all(da);
    }

    TEST_CASE("every sample is reproducible from the manifest recipe")
    {
        const auto prof = small_profile();
        const auto dir = fresh_dir("mmce-test-dp-oracle");
        generate_dataset(sf_manifest(5, 3), prof, dir.string(), 1);
        const auto ds = load_dataset(dir.string());
        check_against_oracle(ds, prof);
        fs::remove_all(dir);
    }

    TEST_CASE("save_dataset round trips the on-disk layout")
    {
        const auto prof = small_profile();
        const auto d1 = fresh_dir("mmce-test-dp-rt1");
        const auto d2 = fresh_dir("mmce-test-dp-rt2");
        generate_dataset(sf_manifest(7, 5), prof, d1.string(), 1);
        const auto ds = load_dataset(d1.string());
        save_dataset(ds, d2.string());
        CHECK(slurp(d1 / "samples.bin") == slurp(d2 / "samples.bin"));
        CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
        CHECK(slurp(d1 / "checksums.txt") == slurp(d2 / "checksums.txt"));
        fs::remove_all(d1);
        fs::remove_all(d2);
    }

    TEST_CASE("rejection accounting and the give-up path")
    {
        const auto prof = small_profile();
        auto m = sf_manifest(16, 11);
        m.scale_c = 2.0; // tight enough that some attempts reject
        const auto dir = fresh_dir("mmce-test-dp-rej");
        const auto res = generate_dataset(m, prof, dir.string(), 1);
        CHECK(res.rejected > 0);
        const auto ds = load_dataset(dir.string());
        CHECK(arma::abs(ds.data.targets).max() <= 1.0f);
        check_against_oracle(ds, prof); // recipe holds through rejections too
        fs::remove_all(dir);

        auto impossible = sf_manifest(1, 1);
        impossible.scale_c = 0.2; // nothing passes in 1000 attempts
        const auto d2 = fresh_dir("mmce-test-dp-rej2");
        CHECK_THROWS_AS(generate_dataset(impossible, prof, d2.string(), 1), numerical_error);
        fs::remove_all(d2);
    }

    TEST_CASE("split partitions samples exactly")
    {
        const auto prof = small_profile();
        const auto dir = fresh_dir("mmce-test-dp-split");
        generate_dataset(sf_manifest(12, 21), prof, dir.string(), 1);
        const auto ds = load_dataset(dir.string());

        const auto parts = split(ds, {0.5, 0.25, 0.25}, 99);
        CHECK(parts[0].data.count() == 6);
        CHECK(parts[1].data.count() == 3);
        CHECK(parts[2].data.count() == 3);

        // union of attempt seeds is the original set, no duplicates
        std::set<std::uint64_t> seen, expect;
        for (const auto &meta : ds.meta)
            expect.insert(meta.seed);
        for (const auto &part : parts)
        {
            part.validate();
            for (std::size_t i = 0; i < part.meta.size(); ++i)
            {
                CHECK(seen.insert(part.meta[i].seed).second); // never twice
                // the column travelled with its meta
                const auto src = std::find_if(ds.meta.begin(), ds.meta.end(), [&](const auto &x) {
                    return x.seed == part.meta[i].seed;
                });
                REQUIRE(src != ds.meta.end());
                const auto col = arma::uword(src - ds.meta.begin());
                CHECK(arma::approx_equal(part.data.inputs.col(i), ds.data.inputs.col(col),
                                         "absdiff", 0.0f));
                CHECK(arma::approx_equal(part.data.targets.col(i), ds.data.targets.col(col),
                                         "absdiff", 0.0f));
            }
        }
        CHECK(seen == expect);

        // deterministic in the seed, different for a different seed
        const auto again = split(ds, {0.5, 0.25, 0.25}, 99);
        const auto other = split(ds, {0.5, 0.25, 0.25}, 100);
        bool same = true, diff = false;
        for (int k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < parts[k].meta.size(); ++i)
            {
                same = same && again[k].meta[i].seed == parts[k].meta[i].seed;
                diff = diff || other[k].meta[i].seed != parts[k].meta[i].seed;
            }
        CHECK(same);
        CHECK(diff);

        CHECK_THROWS_AS(split(ds, {0.5, 0.5, 0.1}, 1), std::invalid_argument);
        fs::remove_all(dir);
    }

    TEST_CASE("spr family shares realizations across sub-datasets")
    {
        const auto prof = small_profile();
        DatasetManifest m;
        m.kind = NetKind::spr;
        m.cfg = small_cfg();
        m.q = 2;
        m.s_or_d = 2;
        m.snr_db = {10.0};
        m.count = 5;
        m.scale_c = 4.0;
        m.seed = 31;
        m.interval_s = 5e-5;
        const auto dir = fresh_dir("mmce-test-dp-spr");
        const auto res = generate_dataset(m, prof, dir.string(), 1);
        CHECK(res.s_or_d == 2);

        const auto d1 = load_dataset((dir / "d1").string());
        const auto d2 = load_dataset((dir / "d2").string());
        CHECK(d1.manifest.ceu_position == 1);
        CHECK(d2.manifest.ceu_position == 2);
        CHECK(d1.data.in_planes == 4);  // interval 1 only
        CHECK(d2.data.in_planes == 8);  // intervals 1..2
        CHECK(d1.data.tgt_planes == 4);
        CHECK(d2.data.tgt_planes == 4);

        // reduced-overhead schedule recorded in both manifests
        REQUIRE(d2.manifest.schedule.per_interval.size() == 2);
        CHECK(d2.manifest.schedule.per_interval[0].m_tx == 8);
        CHECK(d2.manifest.schedule.per_interval[1].m_tx == 4);
        CHECK(d2.manifest.schedule.per_interval[1].m_rx == 1);

        bool tgt_differ = false;
        for (std::uint64_t i = 0; i < 5; ++i)
        {
            CHECK(d1.meta[i].seed == d2.meta[i].seed); // one attempt feeds both
            CHECK(d1.meta[i].k0 == d2.meta[i].k0);
            CHECK(d1.meta[i].n0 == d2.meta[i].n0);
            CHECK(d1.meta[i].n0 < 4);
            // d2's first-interval planes are d1's input, bitwise
            for (arma::uword r = 0; r < d1.data.inputs.n_rows; ++r)
                CHECK(d2.data.inputs(r, i) == d1.data.inputs(r, i));
            tgt_differ = tgt_differ ||
                         arma::abs(d2.data.targets.col(i) - d1.data.targets.col(i)).max() > 0;
        }
        CHECK(tgt_differ); // targets track each sub-dataset's own interval

        // the recipe also pins spr sub-datasets
        check_against_oracle(d1, prof);
        check_against_oracle(d2, prof);
        fs::remove_all(dir);
    }

    TEST_CASE("corruption and truncation are detected")
    {
        const auto prof = small_profile();
        const auto dir = fresh_dir("mmce-test-dp-corrupt");
        generate_dataset(sf_manifest(3, 41), prof, dir.string(), 1);
        CHECK_NOTHROW(load_dataset(dir.string()));

        // truncated tensor file
        {
            const auto all = slurp(dir / "samples.bin");
            std::ofstream os(dir / "samples.bin", std::ios::binary | std::ios::trunc);
            os.write(all.data(), static_cast<std::streamsize>(all.size() - 4));
        }
        CHECK_THROWS_AS(load_dataset(dir.string()), integrity_error);

        fs::remove_all(dir);
        generate_dataset(sf_manifest(3, 41), prof, dir.string(), 1);

        // tampered manifest
        {
            auto text = slurp(dir / "manifest.json");
            text.replace(text.find("\"count\": 3"), 10, "\"count\": 4");
            std::ofstream os(dir / "manifest.json", std::ios::trunc);
            os << text;
        }
        CHECK_THROWS_AS(load_dataset(dir.string()), integrity_error);

        // missing checksums entirely
        fs::remove(dir / "checksums.txt");
        CHECK_THROWS_AS(load_dataset(dir.string()), integrity_error);
        CHECK_THROWS_AS(load_manifest((dir / "nope").string()), integrity_error);
        fs::remove_all(dir);
    }

    TEST_CASE("manifest validation rejects inconsistent requests")
    {
        const auto prof = small_profile();
        auto m = sf_manifest(1, 1);
        m.s_or_d = 2; // sf is single-interval
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);

        m = sf_manifest(1, 1);
        m.kind = NetKind::sft;
        m.s_or_d = 2; // missing interval_s
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);

        m = sf_manifest(1, 1);
        m.snr_db.clear();
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);

        m = sf_manifest(1, 1);
        m.ceu_position = 1; // spr-only field
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);

        DatasetManifest spr;
        spr.kind = NetKind::spr;
        spr.cfg = small_cfg();
        spr.q = 2;
        spr.s_or_d = 2;
        spr.count = 1;
        spr.interval_s = 5e-5;
        spr.ceu_position = 3; // exceeds family size
        CHECK_THROWS_AS(spr.validate(), std::invalid_argument);

        spr.ceu_position = 1; // caller must leave assignment to the generator
        const auto dir = fresh_dir("mmce-test-dp-badgen");
        CHECK_THROWS_AS(generate_dataset(spr, prof, dir.string(), 1), std::invalid_argument);
        fs::remove_all(dir);
    }

    TEST_CASE("sft datasets carry temporal context")
    {
        const auto prof = small_profile();
        DatasetManifest m;
        m.kind = NetKind::sft;
        m.cfg = small_cfg();
        m.q = 2;
        m.s_or_d = 2;
        m.snr_db = {5.0, 10.0, 15.0};
        m.count = 12;
        m.scale_c = 4.0;
        m.seed = 51;
        m.interval_s = 5e-5;
        const auto dir = fresh_dir("mmce-test-dp-sft");
        generate_dataset(m, prof, dir.string(), 1);
        const auto ds = load_dataset(dir.string());
        CHECK(ds.data.in_planes == 8); // 2 Q S
        CHECK(ds.data.tgt_planes == 4);
        std::set<std::uint64_t> n0s;
        for (const auto &meta : ds.meta)
        {
            CHECK(meta.n0 < 4);
            n0s.insert(meta.n0);
        }
        CHECK(n0s.size() >= 2); // temporal offset actually varies
        check_against_oracle(ds, prof); // multi-SNR, multi-interval recipe
        fs::remove_all(dir);
    }
}
