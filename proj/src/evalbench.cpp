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

#include "mmce/evalbench.hpp"
#include "mmce/rng.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace mmce::evalbench
{

using json = nlohmann::ordered_json;

// ---- nmse -------------------------------------------------------------------

NmseStat nmse(const std::vector<std::vector<arma::cx_mat>> &h_true,
              const std::vector<std::vector<arma::cx_mat>> &h_est)
{
    require(!h_true.empty() && h_true.size() == h_est.size(), "nmse: realization count mismatch");
    std::vector<double> ratios;
    ratios.reserve(h_true.size());
    std::uint64_t excluded = 0;
    for (std::size_t i = 0; i < h_true.size(); ++i)
    {
        require(!h_true[i].empty() && h_true[i].size() == h_est[i].size(),
                "nmse: matrix count mismatch");
        double num = 0.0, den = 0.0;
        for (std::size_t m = 0; m < h_true[i].size(); ++m)
        {
            require(arma::size(h_true[i][m]) == arma::size(h_est[i][m]),
                    "nmse: matrix shape mismatch");
            num += std::pow(arma::norm(h_true[i][m] - h_est[i][m], "fro"), 2);
            den += std::pow(arma::norm(h_true[i][m], "fro"), 2);
        }
        if (den == 0.0)
        {
            ++excluded;
            continue;
        }
        ratios.push_back(num / den);
    }
    if (excluded > 0)
        std::cerr << "nmse: excluded " << excluded << " zero-norm realization(s)\n";
    if (ratios.empty())
        throw numerical_error("nmse: every realization had zero channel norm");

    double mean = 0.0;
    for (double r : ratios)
        mean += r;
    mean /= static_cast<double>(ratios.size());
    double var = 0.0;
    for (double r : ratios)
        var += (r - mean) * (r - mean);
    var = ratios.size() > 1 ? var / static_cast<double>(ratios.size() - 1) : 0.0;

    NmseStat st;
    st.nmse = mean;
    st.nmse_db = 10.0 * std::log10(mean);
    st.ci_half = 1.96 * std::sqrt(var / static_cast<double>(ratios.size()));
    st.n = ratios.size();
    st.excluded = excluded;
    return st;
}

// ---- estimators -------------------------------------------------------------

std::vector<std::vector<arma::cx_mat>> LsEstimator::run(const std::vector<Realization> &batch,
                                                        double)
{
    std::vector<std::vector<arma::cx_mat>> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
    {
        const auto &te = batch[i].te;
        out[i].reserve(te.n_rows);
        for (arma::uword j = 0; j < te.n_rows; ++j)
            out[i].push_back(te(j, te.n_cols - 1));
    }
    return out;
}

IdealMmseEstimator::IdealMmseEstimator(CovarianceModel cov, SystemConfig cfg,
                                       std::string profile_name)
    : cov_(std::move(cov)), cfg_(std::move(cfg)), profile_name_(std::move(profile_name))
{
    cov_.validate();
    cfg_.validate();
}

std::string IdealMmseEstimator::name() const
{
    return "mmse-ideal[" + profile_name_ + "]";
}

// TE grid of the final s_cov intervals as a joint LS vector.
static arma::cx_vec joint_from_te(const arma::field<arma::cx_mat> &te, unsigned s_cov)
{
    chanmodel::ChannelTensor grid;
    grid.slots.set_size(te.n_rows, s_cov);
    const arma::uword off = te.n_cols - s_cov;
    for (arma::uword j = 0; j < te.n_rows; ++j)
        for (arma::uword d = 0; d < s_cov; ++d)
            grid.slots(j, d) = te(j, off + d);
    return classical::joint_vec(grid);
}

static std::vector<arma::cx_mat> final_interval_blocks(const arma::cx_vec &v,
                                                       const classical::JointDims &dims)
{
    const auto grid = classical::joint_unvec(v, dims);
    std::vector<arma::cx_mat> out;
    out.reserve(dims.q);
    for (unsigned j = 0; j < dims.q; ++j)
        out.push_back(grid.at(j, dims.s - 1));
    return out;
}

std::vector<std::vector<arma::cx_mat>> IdealMmseEstimator::run(
    const std::vector<Realization> &batch, double snr_db)
{
    auto it = filters_.find(snr_db);
    if (it == filters_.end())
    {
        const auto pc = pilotfront::make_dft_pilots(cfg_, cfg_.n_tx, cfg_.n_rx,
                                                    std::pow(10.0, snr_db / 10.0));
        const double noise_var = pilotfront::ls_noise_variance(pc, cfg_);
        it = filters_.emplace(snr_db, classical::MmseFilter::build(cov_, noise_var)).first;
    }
    std::vector<std::vector<arma::cx_mat>> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
    {
        require(batch[i].te.n_rows == cov_.dims.q && batch[i].te.n_cols >= cov_.dims.s,
                "mmse-ideal: covariance dims do not fit the sweep window");
        const arma::cx_vec h = it->second.apply(joint_from_te(batch[i].te, cov_.dims.s));
        out[i] = final_interval_blocks(h, cov_.dims);
    }
    return out;
}

SampleMmseEstimator::SampleMmseEstimator(SystemConfig cfg, double loading)
    : cfg_(std::move(cfg)), loading_(loading)
{
    cfg_.validate();
}

std::vector<std::vector<arma::cx_mat>> SampleMmseEstimator::run(
    const std::vector<Realization> &batch, double snr_db)
{
    const auto pc =
        pilotfront::make_dft_pilots(cfg_, cfg_.n_tx, cfg_.n_rx, std::pow(10.0, snr_db / 10.0));
    const double noise_var = pilotfront::ls_noise_variance(pc, cfg_);
    std::vector<std::vector<arma::cx_mat>> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
    {
        const auto &te = batch[i].te;
        classical::JointDims dims{static_cast<unsigned>(te.n_rows),
                                  static_cast<unsigned>(te.n_cols),
                                  static_cast<unsigned>(te(0, 0).n_rows),
                                  static_cast<unsigned>(te(0, 0).n_cols)};
        const arma::cx_vec h_ls = joint_from_te(te, dims.s);
        const double eps =
            loading_ < 0.0 ? classical::recommended_loading(h_ls, dims) : loading_;
        const auto cov = classical::sample_covariance_from_ls(h_ls, dims, eps);
        const arma::cx_vec h = classical::mmse_refine(h_ls, cov, noise_var);
        out[i] = final_interval_blocks(h, dims);
    }
    return out;
}

CnnEstimator::CnnEstimator(const TrainedNet *tn, std::string profile_name,
                           std::string profile_hash)
    : tn_(tn), profile_name_(std::move(profile_name)), profile_hash_(std::move(profile_hash))
{
    require(tn_ != nullptr, "CnnEstimator: null network");
    tn_->spec.validate();
    require(tn_->spec.kind != neuralest::NetKind::spr,
            "CnnEstimator: spr networks run through overhead_experiment");
}

std::string CnnEstimator::name() const
{
    const auto &sp = tn_->spec;
    std::string n = neuralest::to_string(sp.kind) + "-cnn[q=" + std::to_string(sp.q);
    if (sp.kind == neuralest::NetKind::sft)
        n += ",s=" + std::to_string(sp.s_or_d);
    if (!profile_name_.empty())
        n += "," + profile_name_;
    return n + "]";
}

std::vector<std::vector<arma::cx_mat>> CnnEstimator::run(const std::vector<Realization> &batch,
                                                         double)
{
    const auto &sp = tn_->spec;
    const unsigned q_net = sp.q;
    const unsigned s_net = sp.kind == neuralest::NetKind::sft ? sp.s_or_d : 1;
    require(!batch.empty(), "cnn: empty batch");
    const unsigned q = static_cast<unsigned>(batch.front().te.n_rows);
    const unsigned s = static_cast<unsigned>(batch.front().te.n_cols);
    require(q % q_net == 0, "cnn: sweep window not divisible by the net's q");
    require(s >= s_net, "cnn: sweep provides fewer intervals than the net consumes");
    const unsigned n_chunks = q / q_net;
    const unsigned h = sp.spatial_h, w = sp.spatial_w;
    const arma::uword plane = arma::uword(h) * w;

    arma::fmat cols(plane * sp.input_maps, arma::uword(batch.size()) * n_chunks);
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (unsigned c = 0; c < n_chunks; ++c)
        {
            float *col = cols.colptr(i * n_chunks + c);
            unsigned m = 0;
            for (unsigned d = 0; d < s_net; ++d)
                for (unsigned j = 0; j < q_net; ++j, ++m)
                {
                    const arma::cx_mat &t = batch[i].te(c * q_net + j, s - s_net + d);
                    require(t.n_rows == h && t.n_cols == w, "cnn: TE shape mismatch");
                    for (unsigned y = 0; y < h; ++y)
                        for (unsigned x = 0; x < w; ++x)
                        {
                            const auto v = t(y, x);
                            col[(2 * m) * plane + arma::uword(y) * w + x] =
                                static_cast<float>(v.real());
                            col[(2 * m + 1) * plane + arma::uword(y) * w + x] =
                                static_cast<float>(v.imag());
                        }
                }
        }

    const arma::fmat est_cols = neuralest::infer_planes(*tn_, cols, 256);

    std::vector<std::vector<arma::cx_mat>> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
    {
        out[i].resize(q);
        for (unsigned c = 0; c < n_chunks; ++c)
        {
            const float *col = est_cols.colptr(i * n_chunks + c);
            for (unsigned j = 0; j < q_net; ++j)
            {
                arma::mat re(h, w), im(h, w);
                for (unsigned y = 0; y < h; ++y)
                    for (unsigned x = 0; x < w; ++x)
                    {
                        re(y, x) = col[(2 * j) * plane + arma::uword(y) * w + x];
                        im(y, x) = col[(2 * j + 1) * plane + arma::uword(y) * w + x];
                    }
                out[i][c * q_net + j] = sp.scale_c * arma::cx_mat(re, im);
            }
        }
    }
    return out;
}

// ---- realization synthesis ----------------------------------------------------

void SweepConfig::validate() const
{
    cfg.validate();
    require(q >= 1 && q <= cfg.n_subcarriers, "SweepConfig: bad window size");
    require(s >= 1, "SweepConfig: s must be positive");
    if (s > 1)
        require(interval_s > 0.0, "SweepConfig: interval_s required when s > 1");
    require(n_mc >= 1, "SweepConfig: n_mc must be positive");
    require(n_workers >= 1, "SweepConfig: n_workers must be positive");
    if (!schedule.per_interval.empty())
    {
        require(schedule.per_interval.size() == s, "SweepConfig: schedule length != s");
        for (const auto &pc : schedule.per_interval)
            pc.validate(cfg);
    }
}

static std::uint64_t digest_mats(std::uint64_t h, const arma::cx_mat &m)
{
    return fnv1a64(m.memptr(), m.n_elem * sizeof(arma::cx_double), h);
}

// Draws realization r of one sweep point: channels under the profile, pilots
// under the schedule at the given power. Seed layout mirrors the dataset
// pipeline: misc draws from derive(a,0) (k0), paths derive(a,1), chain
// derive(a,2), noise derive(a, 3 + d*q + j).
static Realization make_realization(const ScenarioProfile &profile, const SweepConfig &sc,
                                    const PilotSchedule &schedule, double power,
                                    std::uint64_t attempt_seed)
{
    Rng misc(derive_seed(attempt_seed, 0));
    const unsigned k0 =
        1 + static_cast<unsigned>(misc.next_u64() % (sc.cfg.n_subcarriers - sc.q + 1));
    const auto paths = chanmodel::draw_paths(profile, derive_seed(attempt_seed, 1));
    const double rho =
        sc.s > 1 ? chanmodel::rho_from_doppler(profile.doppler_max_hz, sc.interval_s) : 1.0;
    const auto chain = chanmodel::make_channel_tensor(paths, sc.cfg, k0, sc.q, sc.s, rho,
                                                      derive_seed(attempt_seed, 2));

    Realization r;
    r.te.set_size(sc.q, sc.s);
    std::uint64_t dig = 0xcbf29ce484222325ULL;
    for (unsigned d = 0; d < sc.s; ++d)
    {
        pilotfront::PilotConfig pc = schedule.per_interval[d];
        pc.power = power;
        for (unsigned j = 0; j < sc.q; ++j)
        {
            const auto y = pilotfront::received_pilots(chain.at(j, d), pc,
                                                       derive_seed(attempt_seed, 3 + d * sc.q + j));
            r.te(j, d) = pilotfront::tentative_estimate(y, pc, sc.cfg);
            dig = digest_mats(dig, r.te(j, d));
        }
    }
    r.h_true.reserve(sc.q);
    for (unsigned j = 0; j < sc.q; ++j)
    {
        r.h_true.push_back(chain.at(j, sc.s - 1));
        dig = digest_mats(dig, r.h_true.back());
    }
    r.digest = dig;
    return r;
}

// Parallel map over realization indices with deterministic output order.
template <typename F>
static void parallel_slots(std::uint64_t n, unsigned n_workers, F &&fill)
{
    if (n_workers <= 1)
    {
        for (std::uint64_t i = 0; i < n; ++i)
            fill(i);
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr err;
    std::mutex err_mx;
    auto work = [&]() {
        for (;;)
        {
            const std::uint64_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try
            {
                fill(i);
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
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_workers; ++t)
        pool.emplace_back(work);
    for (auto &th : pool)
        th.join();
    if (err)
        std::rethrow_exception(err);
}

static std::string digest_of_point(const std::vector<Realization> &batch)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto &r : batch)
        h = fnv1a64(&r.digest, sizeof(r.digest), h);
    return to_hex(h);
}

static PilotSchedule full_schedule(const SystemConfig &cfg, unsigned s)
{
    PilotSchedule sched;
    for (unsigned d = 0; d < s; ++d)
        sched.per_interval.push_back(pilotfront::make_dft_pilots(cfg, cfg.n_tx, cfg.n_rx, 1.0));
    return sched;
}

// Core sweep over one test profile; appends curves and the realization digest.
static void sweep_profile(const std::vector<std::shared_ptr<Estimator>> &estimators,
                          const std::vector<double> &snr_db, const ScenarioProfile &profile,
                          const SweepConfig &sc, const PilotSchedule &schedule, EvalReport &report)
{
    const std::string test_hash = chanmodel::profile_hash(profile);
    RealizationDigest digest;
    digest.profile_hash = test_hash;

    std::vector<std::vector<Curve>::size_type> curve_idx;
    for (const auto &est : estimators)
    {
        Curve c;
        c.estimator = est->name();
        c.train_profile_hash = est->train_profile_hash();
        c.test_profile_hash = test_hash;
        curve_idx.push_back(report.curves.size());
        report.curves.push_back(std::move(c));
    }

    for (std::size_t p = 0; p < snr_db.size(); ++p)
    {
        const double power = std::pow(10.0, snr_db[p] / 10.0);
        const std::uint64_t point_seed =
            derive_seed(derive_seed(sc.seed, fnv1a64(test_hash.data(), test_hash.size())), p);
        std::vector<Realization> batch(sc.n_mc);
        parallel_slots(sc.n_mc, sc.n_workers, [&](std::uint64_t i) {
            batch[i] =
                make_realization(profile, sc, schedule, power, derive_seed(point_seed, i));
        });
        digest.per_snr.push_back(digest_of_point(batch));

        std::vector<std::vector<arma::cx_mat>> truth(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
            truth[i] = batch[i].h_true;

        for (std::size_t e = 0; e < estimators.size(); ++e)
        {
            const auto est = estimators[e]->run(batch, snr_db[p]);
            report.curves[curve_idx[e]].points.push_back({snr_db[p], nmse(truth, est)});
        }
    }
    report.realizations.push_back(std::move(digest));
    report.profiles_test.emplace_back(profile.name, test_hash);
}

EvalReport snr_sweep(const std::vector<std::shared_ptr<Estimator>> &estimators,
                     const std::vector<double> &snr_db, const ScenarioProfile &profile,
                     const SweepConfig &sc)
{
    require(!estimators.empty(), "snr_sweep: no estimators");
    require(!snr_db.empty(), "snr_sweep: no SNR points");
    sc.validate();
    profile.validate();

    EvalReport report;
    report.experiment = "snr_sweep";
    report.seed = sc.seed;
    report.n_mc = sc.n_mc;
    report.snr_db = snr_db;
    const PilotSchedule sched =
        sc.schedule.per_interval.empty() ? full_schedule(sc.cfg, sc.s) : sc.schedule;
    sweep_profile(estimators, snr_db, profile, sc, sched, report);
    return report;
}

EvalReport robustness_eval(const std::vector<std::shared_ptr<Estimator>> &estimators,
                           const ScenarioProfile &profile_a, const ScenarioProfile &profile_b,
                           const std::vector<double> &snr_db, const SweepConfig &sc)
{
    require(!estimators.empty(), "robustness_eval: no estimators");
    require(!snr_db.empty(), "robustness_eval: no SNR points");
    sc.validate();
    profile_a.validate();
    profile_b.validate();
    require(chanmodel::profile_hash(profile_a) != chanmodel::profile_hash(profile_b),
            "robustness_eval: profiles must differ");

    EvalReport report;
    report.experiment = "robustness";
    report.seed = sc.seed;
    report.n_mc = sc.n_mc;
    report.snr_db = snr_db;
    report.profile_train_name = profile_a.name;
    report.profile_train_hash = chanmodel::profile_hash(profile_a);
    const PilotSchedule sched =
        sc.schedule.per_interval.empty() ? full_schedule(sc.cfg, sc.s) : sc.schedule;
    sweep_profile(estimators, snr_db, profile_a, sc, sched, report);
    sweep_profile(estimators, snr_db, profile_b, sc, sched, report);
    return report;
}

// ---- overhead experiment ------------------------------------------------------

namespace
{

struct CeuRealization
{
    arma::field<arma::cx_mat> pilots;    // raw Y, (q, D), schedule pilots
    arma::field<arma::cx_mat> te_full;   // full-pilot TEs for the baseline, (q, D)
    arma::field<arma::cx_mat> h;         // true channels, (q, D)
    std::uint64_t digest = 0;
};

} // namespace

// Baseline noise seeds live far from the schedule noise range (3 + d*q + j).
static constexpr std::uint64_t baseline_noise_base = 1000003;

static CeuRealization make_ceu_realization(const ScenarioProfile &profile, const SweepConfig &sc,
                                           const PilotSchedule &schedule, bool want_baseline,
                                           double power, std::uint64_t attempt_seed)
{
    const unsigned d_total = static_cast<unsigned>(schedule.per_interval.size());
    Rng misc(derive_seed(attempt_seed, 0));
    const unsigned k0 =
        1 + static_cast<unsigned>(misc.next_u64() % (sc.cfg.n_subcarriers - sc.q + 1));
    const auto paths = chanmodel::draw_paths(profile, derive_seed(attempt_seed, 1));
    const double rho = chanmodel::rho_from_doppler(profile.doppler_max_hz, sc.interval_s);
    const auto chain = chanmodel::make_channel_tensor(paths, sc.cfg, k0, sc.q, d_total, rho,
                                                      derive_seed(attempt_seed, 2));

    CeuRealization r;
    r.pilots.set_size(sc.q, d_total);
    r.h.set_size(sc.q, d_total);
    if (want_baseline)
        r.te_full.set_size(sc.q, d_total);
    const auto pc_full = pilotfront::make_dft_pilots(sc.cfg, sc.cfg.n_tx, sc.cfg.n_rx, power);
    std::uint64_t dig = 0xcbf29ce484222325ULL;
    for (unsigned d = 0; d < d_total; ++d)
    {
        pilotfront::PilotConfig pc = schedule.per_interval[d];
        pc.power = power;
        for (unsigned j = 0; j < sc.q; ++j)
        {
            r.h(j, d) = chain.at(j, d);
            r.pilots(j, d) = pilotfront::received_pilots(
                r.h(j, d), pc, derive_seed(attempt_seed, 3 + d * sc.q + j));
            dig = digest_mats(dig, r.pilots(j, d));
            dig = digest_mats(dig, r.h(j, d));
            if (want_baseline)
            {
                const auto y_full = pilotfront::received_pilots(
                    r.h(j, d), pc_full,
                    derive_seed(attempt_seed, baseline_noise_base + d * sc.q + j));
                r.te_full(j, d) = pilotfront::tentative_estimate(y_full, pc_full, sc.cfg);
                dig = digest_mats(dig, r.te_full(j, d));
            }
        }
    }
    r.digest = dig;
    return r;
}

EvalReport overhead_experiment(const std::vector<const TrainedNet *> &spr_nets,
                               const TrainedNet *sf_baseline, const PilotSchedule &schedule,
                               const ScenarioProfile &profile, const std::vector<double> &snr_db,
                               const SweepConfig &sc)
{
    require(!spr_nets.empty(), "overhead_experiment: no networks");
    require(!snr_db.empty(), "overhead_experiment: no SNR points");
    schedule.validate();
    require(schedule.per_interval.size() == spr_nets.size(),
            "overhead_experiment: schedule length must match network count");
    sc.validate();
    require(sc.interval_s > 0.0, "overhead_experiment: interval_s required");
    profile.validate();
    const unsigned d_total = static_cast<unsigned>(spr_nets.size());

    EvalReport report;
    report.experiment = "overhead";
    report.seed = sc.seed;
    report.n_mc = sc.n_mc;
    report.snr_db = snr_db;
    const std::string test_hash = chanmodel::profile_hash(profile);
    report.profiles_test.emplace_back(profile.name, test_hash);

    // Overhead account.
    std::uint64_t full = pilotfront::pilot_overhead(sc.cfg.n_tx, sc.cfg.n_rx, sc.cfg.n_rx_rf);
    std::uint64_t total = 0;
    for (const auto &pc : schedule.per_interval)
    {
        const auto o = pilotfront::pilot_overhead(pc.m_tx, pc.m_rx, sc.cfg.n_rx_rf);
        report.per_interval_overhead.push_back(o);
        total += o;
    }
    report.avg_overhead = static_cast<double>(total) / static_cast<double>(d_total);
    report.overhead_ratio = report.avg_overhead / static_cast<double>(full);

    // Curves: spr per interval, spr pooled, optional sf baseline.
    std::vector<Curve> curves;
    for (unsigned d = 1; d <= d_total; ++d)
        curves.push_back({"spr-cnn[d=" + std::to_string(d) + "]", {}, test_hash, {}});
    curves.push_back({"spr-cnn[avg]", {}, test_hash, {}});
    if (sf_baseline)
        curves.push_back({"sf-cnn[full-pilots]", {}, test_hash, {}});

    RealizationDigest digest;
    digest.profile_hash = test_hash;

    for (std::size_t p = 0; p < snr_db.size(); ++p)
    {
        const double power = std::pow(10.0, snr_db[p] / 10.0);
        const std::uint64_t point_seed =
            derive_seed(derive_seed(sc.seed, fnv1a64(test_hash.data(), test_hash.size())), p);
        std::vector<CeuRealization> batch(sc.n_mc);
        parallel_slots(sc.n_mc, sc.n_workers, [&](std::uint64_t i) {
            batch[i] = make_ceu_realization(profile, sc, schedule, sf_baseline != nullptr, power,
                                            derive_seed(point_seed, i));
        });
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto &r : batch)
            h = fnv1a64(&r.digest, sizeof(r.digest), h);
        digest.per_snr.push_back(to_hex(h));

        // CEU chains, one per realization (cache empty between realizations).
        std::vector<std::vector<std::vector<arma::cx_mat>>> ceu(batch.size());
        neuralest::CeuCache cache;
        for (std::size_t i = 0; i < batch.size(); ++i)
            ceu[i] = neuralest::sprcnn_run_ceu(spr_nets, batch[i].pilots, schedule, sc.cfg, cache);

        // Per-interval and pooled stats.
        for (unsigned d = 0; d < d_total; ++d)
        {
            std::vector<std::vector<arma::cx_mat>> truth(batch.size()), est(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i)
            {
                est[i] = ceu[i][d];
                for (unsigned j = 0; j < sc.q; ++j)
                    truth[i].push_back(batch[i].h(j, d));
            }
            curves[d].points.push_back({snr_db[p], nmse(truth, est)});
        }
        {
            std::vector<std::vector<arma::cx_mat>> truth(batch.size()), est(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i)
                for (unsigned d = 0; d < d_total; ++d)
                    for (unsigned j = 0; j < sc.q; ++j)
                    {
                        est[i].push_back(ceu[i][d][j]);
                        truth[i].push_back(batch[i].h(j, d));
                    }
            curves[d_total].points.push_back({snr_db[p], nmse(truth, est)});
        }

        if (sf_baseline)
        {
            // Full-pilot SF baseline on every interval, pooled like spr[avg].
            CnnEstimator base(sf_baseline, sf_baseline->train_scenario,
                              sf_baseline->train_profile_hash);
            std::vector<std::vector<arma::cx_mat>> truth(batch.size()), est(batch.size());
            for (unsigned d = 0; d < d_total; ++d)
            {
                std::vector<Realization> sub(batch.size());
                for (std::size_t i = 0; i < batch.size(); ++i)
                {
                    sub[i].te.set_size(sc.q, 1);
                    for (unsigned j = 0; j < sc.q; ++j)
                        sub[i].te(j, 0) = batch[i].te_full(j, d);
                }
                const auto est_d = base.run(sub, snr_db[p]);
                for (std::size_t i = 0; i < batch.size(); ++i)
                    for (unsigned j = 0; j < sc.q; ++j)
                    {
                        est[i].push_back(est_d[i][j]);
                        truth[i].push_back(batch[i].h(j, d));
                    }
            }
            curves[d_total + 1].points.push_back({snr_db[p], nmse(truth, est)});
        }
    }

    report.curves = std::move(curves);
    report.realizations.push_back(std::move(digest));
    return report;
}

// ---- complexity ---------------------------------------------------------------

static int order_of(std::uint64_t flops)
{
    return flops == 0 ? 0 : static_cast<int>(std::floor(std::log10(double(flops))));
}

EvalReport complexity_report(unsigned q, unsigned s, const SystemConfig &cfg,
                             const std::vector<neuralest::NetSpec> &netspecs)
{
    cfg.validate();
    require(q >= 1 && s >= 1, "complexity_report: bad window");

    EvalReport report;
    report.experiment = "complexity";

    const std::uint64_t te_one =
        std::uint64_t(cfg.n_tx) * cfg.n_rx * (std::uint64_t(cfg.n_tx) + cfg.n_rx);
    const std::uint64_t te = std::uint64_t(q) * s * te_one;
    report.complexity.push_back({"tentative-estimate[q=" + std::to_string(q) +
                                     ",s=" + std::to_string(s) + "]",
                                 te, order_of(te)});
    for (const auto &spec : netspecs)
    {
        const std::uint64_t conv = neuralest::flops_cnn(spec);
        const std::string base = neuralest::to_string(spec.kind) +
                                 "-cnn[q=" + std::to_string(spec.q) +
                                 (spec.kind == neuralest::NetKind::sf
                                      ? ""
                                      : ",sd=" + std::to_string(spec.s_or_d)) +
                                 "]";
        report.complexity.push_back({base + " conv", conv, order_of(conv)});
        report.complexity.push_back({base + " total(conv+te)", conv + te, order_of(conv + te)});
    }
    const std::uint64_t mm = classical::flops_mmse(q, s, cfg);
    report.complexity.push_back(
        {"mmse[q=" + std::to_string(q) + ",s=" + std::to_string(s) + "]", mm, order_of(mm)});
    return report;
}

// ---- report JSON -----------------------------------------------------------

void save_report(const EvalReport &report, const std::string &path)
{
    json j;
    j["schema"] = "report/1";
    j["experiment"] = report.experiment;
    j["version"] = report.version;
    j["seed"] = report.seed;
    j["n_mc"] = report.n_mc;
    j["snr_db"] = report.snr_db;
    j["profile_train"] = {{"name", report.profile_train_name},
                          {"hash", report.profile_train_hash}};
    j["profiles_test"] = json::array();
    for (const auto &[name, hash] : report.profiles_test)
        j["profiles_test"].push_back({{"name", name}, {"hash", hash}});
    j["curves"] = json::array();
    for (const auto &c : report.curves)
    {
        json cj;
        cj["estimator"] = c.estimator;
        cj["train_profile_hash"] = c.train_profile_hash;
        cj["test_profile_hash"] = c.test_profile_hash;
        cj["points"] = json::array();
        for (const auto &pt : c.points)
            cj["points"].push_back({{"snr_db", pt.snr_db},
                                    {"nmse", pt.stat.nmse},
                                    {"nmse_db", pt.stat.nmse_db},
                                    {"ci_half", pt.stat.ci_half},
                                    {"n", pt.stat.n},
                                    {"excluded", pt.stat.excluded}});
        j["curves"].push_back(std::move(cj));
    }
    j["realizations"] = json::array();
    for (const auto &d : report.realizations)
        j["realizations"].push_back({{"profile_hash", d.profile_hash}, {"per_snr", d.per_snr}});
    if (!report.per_interval_overhead.empty())
        j["overhead"] = {{"per_interval", report.per_interval_overhead},
                         {"average", report.avg_overhead},
                         {"ratio", report.overhead_ratio}};
    if (!report.complexity.empty())
    {
        j["complexity"] = json::array();
        for (const auto &row : report.complexity)
            j["complexity"].push_back(
                {{"name", row.name}, {"flops", row.flops}, {"order", row.order}});
    }
    std::ofstream os(path);
    if (!os)
        throw integrity_error("save_report: cannot open '" + path + "' for writing");
    os << j.dump(2) << '\n';
    if (!os)
        throw integrity_error("save_report: write to '" + path + "' failed");
}

EvalReport load_report(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        throw integrity_error("load_report: cannot open '" + path + "'");
    try
    {
        json j;
        is >> j;
        if (j.at("schema").get<std::string>() != "report/1")
            throw integrity_error("load_report: unsupported schema in '" + path + "'");
        EvalReport r;
        r.experiment = j.at("experiment").get<std::string>();
        r.version = j.at("version").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.n_mc = j.at("n_mc").get<std::uint64_t>();
        r.snr_db = j.at("snr_db").get<std::vector<double>>();
        r.profile_train_name = j.at("profile_train").at("name").get<std::string>();
        r.profile_train_hash = j.at("profile_train").at("hash").get<std::string>();
        for (const auto &pj : j.at("profiles_test"))
            r.profiles_test.emplace_back(pj.at("name").get<std::string>(),
                                         pj.at("hash").get<std::string>());
        for (const auto &cj : j.at("curves"))
        {
            Curve c;
            c.estimator = cj.at("estimator").get<std::string>();
            c.train_profile_hash = cj.at("train_profile_hash").get<std::string>();
            c.test_profile_hash = cj.at("test_profile_hash").get<std::string>();
            for (const auto &pj : cj.at("points"))
            {
                CurvePoint pt;
                pt.snr_db = pj.at("snr_db").get<double>();
                pt.stat.nmse = pj.at("nmse").get<double>();
                pt.stat.nmse_db = pj.at("nmse_db").get<double>();
                pt.stat.ci_half = pj.at("ci_half").get<double>();
                pt.stat.n = pj.at("n").get<std::uint64_t>();
                pt.stat.excluded = pj.at("excluded").get<std::uint64_t>();
                c.points.push_back(pt);
            }
            r.curves.push_back(std::move(c));
        }
        for (const auto &dj : j.at("realizations"))
        {
            RealizationDigest d;
            d.profile_hash = dj.at("profile_hash").get<std::string>();
            d.per_snr = dj.at("per_snr").get<std::vector<std::string>>();
            r.realizations.push_back(std::move(d));
        }
        if (j.contains("overhead"))
        {
            r.per_interval_overhead =
                j["overhead"].at("per_interval").get<std::vector<std::uint64_t>>();
            r.avg_overhead = j["overhead"].at("average").get<double>();
            r.overhead_ratio = j["overhead"].at("ratio").get<double>();
        }
        if (j.contains("complexity"))
            for (const auto &rj : j["complexity"])
                r.complexity.push_back({rj.at("name").get<std::string>(),
                                        rj.at("flops").get<std::uint64_t>(),
                                        rj.at("order").get<int>()});
        return r;
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_report: malformed report in '" + path + "': " + e.what());
    }
}

} // namespace mmce::evalbench
