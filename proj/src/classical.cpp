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

#include "mmce/classical.hpp"
#include "mmce/rng.hpp"

#include <json.hpp>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace mmce::classical
{

using json = nlohmann::ordered_json;

void JointDims::validate() const
{
    require(q >= 1 && s >= 1, "JointDims: q and s must be positive");
    require(n_rx >= 1 && n_tx >= 1, "JointDims: antenna counts must be positive");
}

void CovarianceModel::validate() const
{
    dims.validate();
    require(r.n_rows == dims.total_dim() && r.n_cols == dims.total_dim(),
            "CovarianceModel: matrix shape does not match dims");
    require(r.is_finite(), "CovarianceModel: non-finite covariance");
    require(loading >= 0.0, "CovarianceModel: loading must be nonnegative");
}

arma::cx_vec joint_vec(const ChannelTensor &grid)
{
    require(grid.n_freq() >= 1 && grid.n_time() >= 1, "joint_vec: empty grid");
    const arma::uword block = grid.at(0, 0).n_elem;
    arma::cx_vec v(grid.n_freq() * grid.n_time() * block);
    arma::uword off = 0;
    for (arma::uword k = 0; k < grid.n_freq(); ++k)
        for (arma::uword n = 0; n < grid.n_time(); ++n)
        {
            const arma::cx_mat &h = grid.at(k, n);
            require(h.n_elem == block, "joint_vec: inconsistent block shapes");
            std::memcpy(v.memptr() + off, h.memptr(), block * sizeof(arma::cx_double));
            off += block;
        }
    return v;
}

ChannelTensor joint_unvec(const arma::cx_vec &v, const JointDims &dims)
{
    dims.validate();
    require(v.n_elem == dims.total_dim(), "joint_unvec: vector length does not match dims");
    ChannelTensor grid;
    grid.slots.set_size(dims.q, dims.s);
    arma::uword off = 0;
    for (unsigned k = 0; k < dims.q; ++k)
        for (unsigned n = 0; n < dims.s; ++n)
        {
            grid.slots(k, n) = arma::reshape(arma::cx_vec(v.subvec(off, off + dims.block_dim() - 1)),
                                             dims.n_rx, dims.n_tx);
            off += dims.block_dim();
        }
    return grid;
}

arma::cx_vec ls_estimate(const arma::field<arma::cx_mat> &y_grid, const PilotSchedule &schedule,
                         const SystemConfig &cfg)
{
    schedule.validate();
    require(y_grid.n_rows >= 1, "ls_estimate: empty pilot grid");
    require(y_grid.n_cols == schedule.per_interval.size(),
            "ls_estimate: schedule length does not match pilot grid");

    ChannelTensor te;
    te.slots.set_size(y_grid.n_rows, y_grid.n_cols);
    for (arma::uword n = 0; n < y_grid.n_cols; ++n)
    {
        const auto &pc = schedule.per_interval[n];
        pc.validate(cfg);
        for (arma::uword k = 0; k < y_grid.n_rows; ++k)
            te.slots(k, n) = pilotfront::tentative_estimate(y_grid(k, n), pc, cfg);
    }
    return joint_vec(te);
}

CovarianceModel ensemble_covariance(const ScenarioProfile &profile, const SystemConfig &cfg,
                                    unsigned q, unsigned s, unsigned n_mc, std::uint64_t seed,
                                    double interval_s, double gain_var, unsigned n_workers)
{
    profile.validate();
    cfg.validate();
    require(n_mc >= 2, "ensemble_covariance: n_mc must be at least 2");
    require(q >= 1 && q <= cfg.n_subcarriers, "ensemble_covariance: q out of range");
    require(s >= 1, "ensemble_covariance: s must be positive");
    require(s == 1 || interval_s > 0.0,
            "ensemble_covariance: interval_s must be positive when s > 1");
    require(n_workers >= 1, "ensemble_covariance: n_workers must be positive");

    JointDims dims{q, s, cfg.n_rx, cfg.n_tx};
    const arma::uword dim = dims.total_dim();
    const double rho =
        s > 1 ? chanmodel::rho_from_doppler(profile.doppler_max_hz, interval_s) : 1.0;

    // Fixed-size realization blocks folded into the sum strictly in block
    // order keep the result bit-identical for any worker count; bounding the
    // in-flight partials keeps memory flat at O(n_workers * dim^2).
    const unsigned block_sz = 32;
    const unsigned n_blocks = (n_mc + block_sz - 1) / block_sz;

    auto run_block = [&](unsigned b) {
        const unsigned lo = b * block_sz;
        const unsigned hi = std::min(n_mc, lo + block_sz);
        arma::cx_mat v(dim, hi - lo);
        for (unsigned i = lo; i < hi; ++i)
        {
            const std::uint64_t si = derive_seed(seed, i);
            const auto paths = chanmodel::draw_paths(profile, derive_seed(si, 0), gain_var);
            const auto grid = chanmodel::make_channel_tensor(paths, cfg, 1, q, s, rho,
                                                             derive_seed(si, 1), gain_var);
            v.col(i - lo) = joint_vec(grid);
        }
        return arma::cx_mat(v * v.t());
    };

    arma::cx_mat r(dim, dim, arma::fill::zeros);
    if (n_workers == 1)
    {
        for (unsigned b = 0; b < n_blocks; ++b)
            r += run_block(b);
    }
    else
    {
        std::mutex mu;
        std::condition_variable cv_room, cv_ready;
        std::map<unsigned, arma::cx_mat> ready;
        std::atomic<unsigned> next{0};
        unsigned next_fold = 0;
        const unsigned window = 2 * n_workers + 2;
        std::exception_ptr err;

        std::vector<std::thread> pool;
        for (unsigned w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                try
                {
                    for (unsigned b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1))
                    {
                        auto p = run_block(b);
                        std::unique_lock<std::mutex> lk(mu);
                        cv_room.wait(lk, [&] { return err || b < next_fold + window; });
                        if (err)
                            return;
                        ready.emplace(b, std::move(p));
                        cv_ready.notify_all();
                    }
                }
                catch (...)
                {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err)
                        err = std::current_exception();
                    cv_ready.notify_all();
                    cv_room.notify_all();
                }
            });

        // The calling thread folds partials in index order.
        {
            std::unique_lock<std::mutex> lk(mu);
            while (next_fold < n_blocks && !err)
            {
                cv_ready.wait(lk, [&] { return err || ready.count(next_fold) > 0; });
                if (err)
                    break;
                arma::cx_mat p = std::move(ready.at(next_fold));
                ready.erase(next_fold);
                ++next_fold;
                cv_room.notify_all();
                lk.unlock();
                r += p;
                lk.lock();
            }
        }
        for (auto &t : pool)
            t.join();
        if (err)
            std::rethrow_exception(err);
    }
    r /= static_cast<double>(n_mc);
    // Enforce exact Hermitian symmetry lost to floating-point accumulation.
    r = 0.5 * (r + r.t());

    CovarianceModel cov;
    cov.r = std::move(r);
    cov.dims = dims;
    cov.source = CovSource::ensemble;
    cov.loading = 0.0;
    cov.profile_hash = chanmodel::profile_hash(profile);
    cov.n_mc = n_mc;
    cov.seed = seed;
    cov.interval_s = s > 1 ? interval_s : 0.0;
    return cov;
}

CovarianceModel sample_covariance_from_ls(const arma::cx_vec &h_ls, const JointDims &dims,
                                          double loading)
{
    dims.validate();
    require(h_ls.n_elem == dims.total_dim(),
            "sample_covariance_from_ls: vector length does not match dims");
    require(h_ls.is_finite(), "sample_covariance_from_ls: non-finite input");
    require(loading >= 0.0, "sample_covariance_from_ls: loading must be nonnegative");

    const arma::uword block = dims.block_dim();
    const arma::uword n_blocks = arma::uword(dims.q) * dims.s;
    arma::cx_mat rbar(block, block, arma::fill::zeros);
    for (arma::uword b = 0; b < n_blocks; ++b)
    {
        const arma::cx_vec vb = h_ls.subvec(b * block, (b + 1) * block - 1);
        rbar += vb * vb.t();
    }
    rbar /= static_cast<double>(n_blocks);
    rbar.diag() += loading;

    CovarianceModel cov;
    cov.r = arma::kron(arma::eye<arma::cx_mat>(n_blocks, n_blocks), rbar);
    cov.dims = dims;
    cov.source = CovSource::sample;
    cov.loading = loading;
    return cov;
}

double recommended_loading(const arma::cx_vec &h_ls, const JointDims &dims)
{
    dims.validate();
    require(h_ls.n_elem == dims.total_dim(), "recommended_loading: vector length mismatch");
    const double tr = std::pow(arma::norm(h_ls, 2), 2) / (double(dims.q) * dims.s);
    return 1e-3 * tr / static_cast<double>(dims.block_dim());
}

static arma::cx_vec mmse_apply_solve(const arma::cx_mat &r, const arma::cx_vec &h_ls,
                                     double noise_var)
{
    // R (R + s2 I)^{-1} h = h - s2 (R + s2 I)^{-1} h.
    arma::cx_mat a = r;
    a.diag() += noise_var;
    arma::cx_vec x;
    const bool ok = arma::solve(x, a, h_ls, arma::solve_opts::likely_sympd + arma::solve_opts::no_approx);
    if (!ok || !x.is_finite())
        throw numerical_error("mmse_refine: covariance system is singular");
    return h_ls - noise_var * x;
}

arma::cx_vec mmse_refine(const arma::cx_vec &h_ls, const CovarianceModel &cov, double noise_var)
{
    cov.validate();
    require(h_ls.n_elem == cov.dims.total_dim(), "mmse_refine: vector length does not match model");
    require(h_ls.is_finite(), "mmse_refine: non-finite input");
    require(noise_var >= 0.0 && std::isfinite(noise_var),
            "mmse_refine: noise_var must be nonnegative");
    return mmse_apply_solve(cov.r, h_ls, noise_var);
}

MmseFilter MmseFilter::build(const CovarianceModel &cov, double noise_var)
{
    cov.validate();
    require(noise_var >= 0.0 && std::isfinite(noise_var),
            "MmseFilter: noise_var must be nonnegative");
    arma::cx_mat a = cov.r;
    a.diag() += noise_var;
    arma::cx_mat x;
    const bool ok = arma::solve(x, a, cov.r, arma::solve_opts::likely_sympd + arma::solve_opts::no_approx);
    if (!ok || !x.is_finite())
        throw numerical_error("MmseFilter: covariance system is singular");
    // solve gives (R + s2 I)^{-1} R; the filter is its Hermitian transpose.
    return MmseFilter{x.t()};
}

arma::cx_vec MmseFilter::apply(const arma::cx_vec &h_ls) const
{
    require(h_ls.n_elem == w.n_cols, "MmseFilter: vector length does not match filter");
    return w * h_ls;
}

std::uint64_t flops_mmse(unsigned q, unsigned s, const SystemConfig &cfg)
{
    cfg.validate();
    require(q >= 1 && s >= 1, "flops_mmse: q and s must be positive");
    const std::uint64_t dim = std::uint64_t(q) * s * cfg.n_rx * cfg.n_tx;
    return dim * dim * dim;
}

// ---- cache files -----------------------------------------------------------

static const char cov_magic[8] = {'M', 'M', 'C', 'E', 'C', 'O', 'V', '1'};

void save_covariance(const CovarianceModel &cov, const std::string &path)
{
    cov.validate();

    const arma::uword dim = cov.r.n_rows;
    const std::size_t payload_bytes = dim * dim * sizeof(arma::cx_double);
    const std::uint64_t checksum = fnv1a64(cov.r.memptr(), payload_bytes);

    json h;
    h["schema"] = "covcache/1";
    h["dims"] = {{"q", cov.dims.q}, {"s", cov.dims.s}, {"n_rx", cov.dims.n_rx}, {"n_tx", cov.dims.n_tx}};
    h["source"] = cov.source == CovSource::ensemble ? "ensemble" : "sample";
    h["loading"] = cov.loading;
    h["profile_hash"] = cov.profile_hash;
    h["n_mc"] = cov.n_mc;
    h["seed"] = cov.seed;
    h["interval_s"] = cov.interval_s;
    h["payload_checksum"] = to_hex(checksum);
    const std::string header = h.dump();
    const std::uint64_t header_len = header.size();

    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw integrity_error("save_covariance: cannot open '" + path + "' for writing");
    os.write(cov_magic, sizeof(cov_magic));
    os.write(reinterpret_cast<const char *>(&header_len), sizeof(header_len));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    os.write(reinterpret_cast<const char *>(cov.r.memptr()),
             static_cast<std::streamsize>(payload_bytes));
    if (!os)
        throw integrity_error("save_covariance: write to '" + path + "' failed");
}

CovarianceModel load_covariance(const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw integrity_error("load_covariance: cannot open '" + path + "'");

    char magic[8];
    std::uint64_t header_len = 0;
    is.read(magic, sizeof(magic));
    is.read(reinterpret_cast<char *>(&header_len), sizeof(header_len));
    if (!is || std::memcmp(magic, cov_magic, sizeof(magic)) != 0)
        throw integrity_error("load_covariance: '" + path + "' is not a covariance cache");
    if (header_len == 0 || header_len > (1u << 20))
        throw integrity_error("load_covariance: implausible header length in '" + path + "'");

    std::string header(header_len, '\0');
    is.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!is)
        throw integrity_error("load_covariance: truncated header in '" + path + "'");

    CovarianceModel cov;
    std::string checksum_hex;
    try
    {
        const json h = json::parse(header);
        if (h.at("schema").get<std::string>() != "covcache/1")
            throw integrity_error("load_covariance: unsupported schema in '" + path + "'");
        cov.dims.q = h.at("dims").at("q").get<unsigned>();
        cov.dims.s = h.at("dims").at("s").get<unsigned>();
        cov.dims.n_rx = h.at("dims").at("n_rx").get<unsigned>();
        cov.dims.n_tx = h.at("dims").at("n_tx").get<unsigned>();
        cov.source = h.at("source").get<std::string>() == "sample" ? CovSource::sample
                                                                   : CovSource::ensemble;
        cov.loading = h.at("loading").get<double>();
        cov.profile_hash = h.at("profile_hash").get<std::string>();
        cov.n_mc = h.at("n_mc").get<unsigned>();
        cov.seed = h.at("seed").get<std::uint64_t>();
        cov.interval_s = h.at("interval_s").get<double>();
        checksum_hex = h.at("payload_checksum").get<std::string>();
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_covariance: bad header in '" + path + "': " + e.what());
    }

    const arma::uword dim = cov.dims.total_dim();
    cov.r.set_size(dim, dim);
    is.read(reinterpret_cast<char *>(cov.r.memptr()),
            static_cast<std::streamsize>(dim * dim * sizeof(arma::cx_double)));
    if (!is || is.peek() != EOF)
        throw integrity_error("load_covariance: payload size mismatch in '" + path + "'");

    const std::uint64_t checksum = fnv1a64(cov.r.memptr(), dim * dim * sizeof(arma::cx_double));
    if (to_hex(checksum) != checksum_hex)
        throw integrity_error("load_covariance: payload checksum mismatch in '" + path + "'");

    cov.validate();
    return cov;
}

std::string covariance_cache_name(const std::string &profile_hash, unsigned q, unsigned s,
                                  unsigned n_mc, std::uint64_t seed)
{
    return "cov-" + profile_hash + "-q" + std::to_string(q) + "s" + std::to_string(s) + "-n" +
           std::to_string(n_mc) + "-seed" + std::to_string(seed) + ".bin";
}

} // namespace mmce::classical
