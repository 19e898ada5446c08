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
//
// Acceptance harness: verifies the toolkit's headline numerical claims end to
// end and prints one [Cn] PASS/FAIL line per criterion. Heavy artifacts
// (datasets, trained networks, covariance and report caches) live under the
// work directory (MMCE_ACCEPT_WORK, default "acceptance-work"); rerunning
// reuses them, deleting the directory forces a full rebuild, which trains six
// networks (10k samples / 60 epochs each) and takes roughly half a day on one
// core. Evaluation reports are invalidated automatically when a network is
// retrained.

#include "mmce/chanmodel.hpp"
#include "mmce/classical.hpp"
#include "mmce/common.hpp"
#include "mmce/datapipe.hpp"
#include "mmce/evalbench.hpp"
#include "mmce/neuralest.hpp"
#include "mmce/nn.hpp"
#include "mmce/pilotfront.hpp"
#include "mmce/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace mmce;
namespace fs = std::filesystem;

namespace
{

// ---- bookkeeping ------------------------------------------------------------

struct Criterion
{
    int id = 0;
    bool pass = false;
    std::string detail;
};

std::vector<Criterion> g_results;

void record(int id, bool pass, const std::string &detail)
{
    g_results.push_back({id, pass, detail});
    std::cout << "-- C" << id << (pass ? " ok: " : " FAILED: ") << detail << std::endl;
}

void run_criterion(int id, const std::function<void()> &fn)
{
    try
    {
        fn();
    }
    catch (const std::exception &e)
    {
        record(id, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v, int prec = 3)
{
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string fmt_sci(double v)
{
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

// ---- shared fixtures ---------------------------------------------------------

const chanmodel::SystemConfig g_cfg; // 32x16, K = 64

fs::path work_dir()
{
    const char *env = std::getenv("MMCE_ACCEPT_WORK");
    return env && *env ? fs::path(env) : fs::path("acceptance-work");
}

chanmodel::ScenarioProfile load_bundled_profile(const std::string &name)
{
    return chanmodel::load_profile(std::string(MMCE_PROFILE_DIR) + "/" + name + ".json");
}

arma::cx_mat random_cx(unsigned h, unsigned w, Rng &rng)
{
    arma::cx_mat m(h, w);
    for (arma::uword i = 0; i < m.n_elem; ++i)
        m(i) = rng.cgaussian(1.0);
    return m;
}

// ---- cached artifacts ---------------------------------------------------------

// Training scale fixed by the acceptance setup: 10k samples, 60 epochs,
// batch 128 at SNR 10 dB. The staged learning-rate schedule was selected on a
// held-out pilot run (flat 1e-4 is far too slow at this step budget).
neuralest::TrainConfig accept_train_config()
{
    neuralest::TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 128;
    tc.lr_schedule = {{20, 1e-3}, {25, 3e-4}, {15, 1e-4}};
    tc.seed = 7;
    return tc;
}

constexpr std::uint64_t n_train_samples = 10000;
constexpr double train_snr_db = 10.0;
constexpr double ceu_interval_s = 5e-5;
constexpr unsigned cov_draws = 20000;

// Generates a dataset into dir unless its final artifact is already present.
// Returns the directory holding (or now holding) the data.
fs::path ensure_dataset(const fs::path &dir, const chanmodel::ScenarioProfile &profile,
                        neuralest::NetKind kind, unsigned q, unsigned s_or_d,
                        std::uint64_t seed)
{
    const fs::path last = kind == neuralest::NetKind::spr
                              ? dir / ("d" + std::to_string(s_or_d)) / "checksums.txt"
                              : dir / "checksums.txt";
    if (fs::exists(last))
        return dir;
    fs::remove_all(dir);
    fs::create_directories(dir);
    datapipe::DatasetManifest m;
    m.kind = kind;
    m.cfg = g_cfg;
    m.q = q;
    m.s_or_d = s_or_d;
    m.snr_db = {train_snr_db};
    m.count = n_train_samples;
    m.scale_c = 4.0;
    m.seed = seed;
    m.interval_s = kind == neuralest::NetKind::sf ? 0.0 : ceu_interval_s;
    std::cout << "-- generating " << dir.string() << std::endl;
    const auto resolved = datapipe::generate_dataset(m, profile, dir.string(), 1);
    std::cout << "-- generated " << resolved.count << " samples (" << resolved.rejected
              << " rejected attempts)" << std::endl;
    return dir;
}

// Trains (or reloads) one network; sets *fresh when a training actually ran.
std::shared_ptr<neuralest::TrainedNet> ensure_model(const fs::path &model_dir,
                                                    const fs::path &dataset_dir,
                                                    neuralest::NetKind kind, unsigned sd,
                                                    bool *fresh)
{
    if (fs::exists(model_dir / "netspec.json"))
    {
        try
        {
            return std::make_shared<neuralest::TrainedNet>(
                neuralest::load_model(model_dir.string()));
        }
        catch (const std::exception &e)
        {
            std::cout << "-- cached model " << model_dir.string() << " unusable (" << e.what()
                      << "), retraining" << std::endl;
            fs::remove_all(model_dir);
        }
    }
    const auto ds = datapipe::load_dataset(dataset_dir.string());
    auto base = neuralest::table1_template();
    base.spatial_h = ds.manifest.cfg.n_rx;
    base.spatial_w = ds.manifest.cfg.n_tx;
    base.scale_c = ds.manifest.scale_c;
    const auto spec = neuralest::build_net(kind, ds.manifest.q, sd, base);
    const auto tc = accept_train_config();
    const auto parts = datapipe::split(ds, {0.9, 0.1, 0.0}, derive_seed(tc.seed, 2001));
    std::cout << "-- training " << model_dir.string() << " (" << parts[0].data.count()
              << " train / " << parts[1].data.count() << " val)" << std::endl;
    auto tn = std::make_shared<neuralest::TrainedNet>(
        neuralest::train(spec, parts[0].data, parts[1].data, tc));
    tn->train_scenario = ds.manifest.scenario;
    tn->train_profile_hash = ds.manifest.profile_hash;
    neuralest::save_model(*tn, model_dir.string());
    std::cout << "-- trained " << model_dir.string() << ": best val loss "
              << tn->history.best_val_loss << " (epoch " << tn->history.best_epoch << ")"
              << std::endl;
    *fresh = true;
    return tn;
}

classical::CovarianceModel ensure_covariance(const fs::path &cache_dir,
                                             const chanmodel::ScenarioProfile &profile,
                                             unsigned q, unsigned s, std::uint64_t seed,
                                             double interval_s)
{
    const auto name = classical::covariance_cache_name(chanmodel::profile_hash(profile), q, s,
                                                       cov_draws, seed);
    const fs::path path = cache_dir / name;
    if (fs::exists(path))
    {
        try
        {
            return classical::load_covariance(path.string());
        }
        catch (const std::exception &e)
        {
            std::cout << "-- cached covariance " << path.string() << " unusable (" << e.what()
                      << "), rebuilding" << std::endl;
            fs::remove(path);
        }
    }
    std::cout << "-- building " << cov_draws << "-draw covariance for " << profile.name
              << " (q=" << q << ", s=" << s << ")" << std::endl;
    const auto cov =
        classical::ensemble_covariance(profile, g_cfg, q, s, cov_draws, seed, interval_s);
    fs::create_directories(cache_dir);
    classical::save_covariance(cov, path.string());
    return cov;
}

// Reports are rebuilt whenever any model was retrained this run.
evalbench::EvalReport ensure_report(const fs::path &path, bool models_fresh,
                                    const std::function<evalbench::EvalReport()> &build)
{
    if (!models_fresh && fs::exists(path))
    {
        try
        {
            return evalbench::load_report(path.string());
        }
        catch (const std::exception &e)
        {
            std::cout << "-- cached report " << path.string() << " unusable (" << e.what()
                      << "), recomputing" << std::endl;
        }
    }
    auto rep = build();
    fs::create_directories(path.parent_path());
    evalbench::save_report(rep, path.string());
    return rep;
}

const evalbench::CurvePoint &point_at(const evalbench::Curve &c, double snr)
{
    for (const auto &p : c.points)
        if (std::abs(p.snr_db - snr) < 1e-9)
            return p;
    throw std::runtime_error("report lacks an SNR point at " + fmt(snr));
}

// All trained artifacts used by criteria 5-8.
struct Artifacts
{
    chanmodel::ScenarioProfile umi, uma;
    std::shared_ptr<neuralest::TrainedNet> sf_q2, sf_q1, sft, spr2, spr3, spr4;
    bool fresh = false; // any training ran this invocation
};

Artifacts build_artifacts()
{
    Artifacts a;
    a.umi = load_bundled_profile("umi-nlos-like");
    a.uma = load_bundled_profile("uma-nlos-like");
    const fs::path w = work_dir();

    const auto ds_sf_q2 = ensure_dataset(w / "ds-sf-q2", a.umi, neuralest::NetKind::sf, 2, 1, 101);
    const auto ds_sf_q1 = ensure_dataset(w / "ds-sf-q1", a.umi, neuralest::NetKind::sf, 1, 1, 102);
    const auto ds_sft = ensure_dataset(w / "ds-sft", a.umi, neuralest::NetKind::sft, 2, 2, 103);
    const auto ds_spr = ensure_dataset(w / "ds-spr", a.umi, neuralest::NetKind::spr, 2, 4, 104);

    a.sf_q2 = ensure_model(w / "model-sf-q2", ds_sf_q2, neuralest::NetKind::sf, 1, &a.fresh);
    a.sf_q1 = ensure_model(w / "model-sf-q1", ds_sf_q1, neuralest::NetKind::sf, 1, &a.fresh);
    a.sft = ensure_model(w / "model-sft", ds_sft, neuralest::NetKind::sft, 2, &a.fresh);
    // CEU position 1 sees exactly the SF-CNN input (one full-pilot interval,
    // q = 2), so the SF network doubles as SPR-CNN-1.
    a.spr2 = ensure_model(w / "model-spr-2", ds_spr / "d2", neuralest::NetKind::spr, 2, &a.fresh);
    a.spr3 = ensure_model(w / "model-spr-3", ds_spr / "d3", neuralest::NetKind::spr, 3, &a.fresh);
    a.spr4 = ensure_model(w / "model-spr-4", ds_spr / "d4", neuralest::NetKind::spr, 4, &a.fresh);
    return a;
}

// ---- criteria ------------------------------------------------------------------

// C1: tentative estimation inverts the full-pilot frontend without noise.
void criterion_1()
{
    const auto pc = pilotfront::make_dft_pilots(g_cfg, g_cfg.n_tx, g_cfg.n_rx, 2.7);
    Rng rng(501);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i)
    {
        const auto h = random_cx(g_cfg.n_rx, g_cfg.n_tx, rng);
        const auto y = pilotfront::received_pilots(h, pc, 0, /*noiseless=*/true);
        const auto te = pilotfront::tentative_estimate(y, pc, g_cfg);
        worst = std::max(worst, arma::norm(te - h, "fro") / arma::norm(h, "fro"));
    }
    record(1, worst < 1e-9,
           "full-pilot TE round-trip max rel err " + fmt_sci(worst) +
               " over 100 random channels (tol 1e-9)");
}

// C2: LS NMSE matches the 1/SNR closed form with unit-variance gains.
void criterion_2()
{
    const auto umi = load_bundled_profile("umi-nlos-like");
    std::vector<std::shared_ptr<evalbench::Estimator>> ests{
        std::make_shared<evalbench::LsEstimator>()};
    evalbench::SweepConfig sc;
    sc.cfg = g_cfg;
    sc.q = 1;
    sc.s = 1;
    sc.n_mc = 2000;
    sc.seed = 210;
    const auto rep = evalbench::snr_sweep(ests, {0.0, 10.0, 20.0}, umi, sc);
    bool ok = true;
    std::string detail = "LS NMSE vs 1/SNR rel dev:";
    for (const auto &p : rep.curves.at(0).points)
    {
        const double want = std::pow(10.0, -p.snr_db / 10.0);
        const double dev = std::abs(p.stat.nmse - want) / want;
        ok = ok && dev <= 0.05;
        detail += " " + fmt(p.snr_db, 2) + "dB " + fmt(100.0 * dev, 2) + "%";
    }
    record(2, ok, detail + " (tol 5%, n_mc 2000)");
}

// C3: FLOP accounts match the independent summations and stated orders.
void criterion_3()
{
    const auto spec = neuralest::table1_template();
    std::uint64_t indep = 0;
    for (const auto &l : spec.layers)
        indep += std::uint64_t(spec.spatial_h) * spec.spatial_w * l.filter_side * l.filter_side *
                 l.in_maps * l.out_maps;
    const std::uint64_t cnn = neuralest::flops_cnn(spec);
    const std::uint64_t mmse = classical::flops_mmse(2, 1, g_cfg);
    const bool ok = cnn == indep && cnn == 153354240ULL &&
                    std::uint64_t(std::floor(std::log10(double(cnn)))) == 8 &&
                    mmse == 1073741824ULL &&
                    std::abs(double(mmse) - 1.07e9) / 1.07e9 < 0.01 &&
                    std::uint64_t(std::floor(std::log10(double(mmse)))) == 9 && cnn < mmse;
    record(3, ok,
           "flops_cnn = " + std::to_string(cnn) + " (independent sum " + std::to_string(indep) +
               ", order 1e8); flops_mmse(q=2,s=1) = " + std::to_string(mmse) +
               " (order 1e9); cnn < mmse");
}

// C4: ideal MMSE never loses to LS on paired realizations.
void criterion_4()
{
    const auto umi = load_bundled_profile("umi-nlos-like");
    const auto cov = ensure_covariance(work_dir() / "cov", umi, 2, 1, 301, 0.0);
    std::vector<std::shared_ptr<evalbench::Estimator>> ests{
        std::make_shared<evalbench::LsEstimator>(),
        std::make_shared<evalbench::IdealMmseEstimator>(cov, g_cfg, umi.name)};
    evalbench::SweepConfig sc;
    sc.cfg = g_cfg;
    sc.q = 2;
    sc.s = 1;
    sc.n_mc = 2000;
    sc.seed = 211;
    const auto rep = ensure_report(work_dir() / "report-c4.json", false, [&] {
        return evalbench::snr_sweep(ests, {0.0, 5.0, 10.0, 15.0, 20.0}, umi, sc);
    });
    bool ok = true;
    double worst = 0.0, worst_snr = 0.0;
    for (std::size_t i = 0; i < rep.snr_db.size(); ++i)
    {
        const double ls = rep.curves.at(0).points.at(i).stat.nmse;
        const double mm = rep.curves.at(1).points.at(i).stat.nmse;
        const double ratio = mm / ls;
        if (ratio > worst)
        {
            worst = ratio;
            worst_snr = rep.snr_db[i];
        }
        ok = ok && mm <= ls * 1.02;
    }
    record(4, ok,
           "ideal-MMSE/LS NMSE ratio <= 1.02 at 0/5/10/15/20 dB; worst " + fmt(worst) + " at " +
               fmt(worst_snr, 2) + " dB (n_mc 2000, paired)");
}

// C5: SF-CNN ordering at 10 dB (Q=2 beats Q=1 beats LS; Q=2 beats the
// per-realization sample MMSE).
void criterion_5(const Artifacts &a)
{
    std::vector<std::shared_ptr<evalbench::Estimator>> ests{
        std::make_shared<evalbench::LsEstimator>(),
        std::make_shared<evalbench::SampleMmseEstimator>(g_cfg),
        std::make_shared<evalbench::CnnEstimator>(a.sf_q2.get(), a.umi.name,
                                                  a.sf_q2->train_profile_hash),
        std::make_shared<evalbench::CnnEstimator>(a.sf_q1.get(), a.umi.name,
                                                  a.sf_q1->train_profile_hash)};
    evalbench::SweepConfig sc;
    sc.cfg = g_cfg;
    sc.q = 2;
    sc.s = 1;
    sc.n_mc = 2000;
    sc.seed = 212;
    const auto rep = ensure_report(work_dir() / "report-c5.json", a.fresh, [&] {
        return evalbench::snr_sweep(ests, {train_snr_db}, a.umi, sc);
    });
    const double ls = point_at(rep.curves.at(0), train_snr_db).stat.nmse;
    const double mm = point_at(rep.curves.at(1), train_snr_db).stat.nmse;
    const auto &p2 = point_at(rep.curves.at(2), train_snr_db).stat;
    const double q1 = point_at(rep.curves.at(3), train_snr_db).stat.nmse;
    const bool ok = p2.nmse < q1 && q1 < ls && p2.nmse < mm;
    record(5, ok,
           "NMSE @10 dB: sf-q2 " + fmt(p2.nmse) + " (ci " + fmt_sci(p2.ci_half) + ") < sf-q1 " +
               fmt(q1) + " < ls " + fmt(ls) + "; sf-q2 < sample-mmse " + fmt(mm) +
               " (n_mc 2000)");
}

// C6: temporal correlation helps (SFT beats SF at the same budget).
void criterion_6(const Artifacts &a)
{
    std::vector<std::shared_ptr<evalbench::Estimator>> ests{
        std::make_shared<evalbench::CnnEstimator>(a.sft.get(), a.umi.name,
                                                  a.sft->train_profile_hash),
        std::make_shared<evalbench::CnnEstimator>(a.sf_q2.get(), a.umi.name,
                                                  a.sf_q2->train_profile_hash)};
    evalbench::SweepConfig sc;
    sc.cfg = g_cfg;
    sc.q = 2;
    sc.s = 2;
    sc.interval_s = ceu_interval_s;
    sc.n_mc = 2000;
    sc.seed = 213;
    const auto rep = ensure_report(work_dir() / "report-c6.json", a.fresh, [&] {
        return evalbench::snr_sweep(ests, {train_snr_db}, a.umi, sc);
    });
    const auto &sft = point_at(rep.curves.at(0), train_snr_db).stat;
    const auto &sf = point_at(rep.curves.at(1), train_snr_db).stat;
    const double rho = chanmodel::rho_from_doppler(a.umi.doppler_max_hz, ceu_interval_s);
    record(6, sft.nmse < sf.nmse,
           "NMSE @10 dB, rho = " + fmt(rho) + ": sft " + fmt(sft.nmse) + " (ci " +
               fmt_sci(sft.ci_half) + ") < sf " + fmt(sf.nmse) + " (n_mc 2000)");
}

// C7: the reduced-pilot CEU protocol accounts for exactly 88/256 overhead and
// stays within 3 dB of the full-pilot single-subcarrier SF baseline.
void criterion_7(const Artifacts &a)
{
    const std::vector<const neuralest::TrainedNet *> nets{a.sf_q2.get(), a.spr2.get(),
                                                          a.spr3.get(), a.spr4.get()};
    const auto sched = datapipe::default_schedule(neuralest::NetKind::spr, g_cfg, 4);
    evalbench::SweepConfig sc;
    sc.cfg = g_cfg;
    sc.q = 2;
    sc.s = 4;
    sc.interval_s = ceu_interval_s;
    sc.n_mc = 2000;
    sc.seed = 214;
    const auto rep = ensure_report(work_dir() / "report-c7.json", a.fresh, [&] {
        return evalbench::overhead_experiment(nets, a.sf_q1.get(), sched, a.umi,
                                              {5.0, 10.0, 15.0}, sc);
    });
    const bool account_ok = rep.per_interval_overhead ==
                                std::vector<std::uint64_t>{256, 32, 32, 32} &&
                            rep.avg_overhead == 88.0 && rep.overhead_ratio == 88.0 / 256.0;
    const auto &avg = rep.curves.at(4);      // spr-cnn[avg]
    const auto &base = rep.curves.at(5);     // sf-cnn[full-pilots]
    bool within = true;
    double worst_gap = -1e9;
    for (double snr : {5.0, 10.0, 15.0})
    {
        const double gap =
            point_at(avg, snr).stat.nmse_db - point_at(base, snr).stat.nmse_db;
        worst_gap = std::max(worst_gap, gap);
        within = within && gap <= 3.0;
    }
    record(7, account_ok && within,
           "overhead {256,32,32,32}, average 88, ratio 88/256; spr[avg] within 3 dB of sf-q1 "
           "full-pilot baseline at 5/10/15 dB (worst gap " +
               fmt(worst_gap, 2) + " dB, n_mc 2000)");
}

// C8: umi-trained SF-CNN transfers to uma better than the sample MMSE, and a
// mismatched ideal-MMSE covariance degrades against the matched one.
void criterion_8(const Artifacts &a)
{
    const auto cov_uma = ensure_covariance(work_dir() / "cov", a.uma, 2, 1, 301, 0.0);
    const auto cov_umi = ensure_covariance(work_dir() / "cov", a.umi, 2, 1, 301, 0.0);
    std::vector<std::shared_ptr<evalbench::Estimator>> ests{
        std::make_shared<evalbench::CnnEstimator>(a.sf_q2.get(), a.umi.name,
                                                  a.sf_q2->train_profile_hash),
        std::make_shared<evalbench::SampleMmseEstimator>(g_cfg),
        std::make_shared<evalbench::IdealMmseEstimator>(cov_uma, g_cfg, a.uma.name),
        std::make_shared<evalbench::IdealMmseEstimator>(cov_umi, g_cfg, a.umi.name)};
    evalbench::SweepConfig sc;
    sc.cfg = g_cfg;
    sc.q = 2;
    sc.s = 1;
    sc.n_mc = 2000;
    sc.seed = 215;
    const auto rep = ensure_report(work_dir() / "report-c8.json", a.fresh, [&] {
        return evalbench::snr_sweep(ests, {train_snr_db}, a.uma, sc);
    });
    const auto &cnn = point_at(rep.curves.at(0), train_snr_db).stat;
    const auto &smp = point_at(rep.curves.at(1), train_snr_db).stat;
    const double matched = point_at(rep.curves.at(2), train_snr_db).stat.nmse;
    const double mismatched = point_at(rep.curves.at(3), train_snr_db).stat.nmse;
    const bool ok = cnn.nmse < smp.nmse && mismatched > matched;
    record(8, ok,
           "uma test @10 dB: umi-trained sf-q2 " + fmt(cnn.nmse) + " (ci " +
               fmt_sci(cnn.ci_half) + ") < sample-mmse " + fmt(smp.nmse) + " (ci " +
               fmt_sci(smp.ci_half) + "); mismatched ideal-MMSE " + fmt(mismatched) +
               " > matched " + fmt(matched) + " (n_mc 2000)");
}

// C9: gradient, invariant, and determinism suite.
void criterion_9()
{
    std::vector<std::string> fails;

    // Finite-difference gradient check in double precision.
    {
        const unsigned n = 3, h = 4, w = 6, cin = 2;
        auto net = nn::NetworkD::make(
            cin, h, w, {{3, nn::Act::relu, true}, {2, nn::Act::tanh_act, false}}, 5);
        Rng prng(17);
        for (auto &blk : net.blocks)
        {
            for (arma::uword i = 0; i < blk.b.n_elem; ++i)
                blk.b(i) = prng.uniform(-0.2, 0.2);
            if (blk.bn)
                for (arma::uword i = 0; i < blk.gamma.n_elem; ++i)
                {
                    blk.gamma(i) = prng.uniform(0.5, 1.5);
                    blk.beta(i) = prng.uniform(-0.3, 0.3);
                }
        }
        auto x = nn::PlaneBatch<double>::zeros(n, h, w, cin);
        auto tgt = nn::PlaneBatch<double>::zeros(n, h, w, 2);
        std::vector<double> plane(std::size_t(h) * w);
        auto fill = [&](nn::PlaneBatch<double> &pb, double scale) {
            for (unsigned s = 0; s < pb.n; ++s)
                for (unsigned c = 0; c < pb.channels(); ++c)
                {
                    for (auto &v : plane)
                        v = scale * prng.gaussian();
                    pb.set_plane(s, c, plane.data());
                }
        };
        fill(x, 1.0);
        fill(tgt, 0.5);
        auto loss_of = [&]() {
            auto y = net.forward(x, true);
            return arma::accu(arma::square(y.data - tgt.data));
        };
        auto y = net.forward(x, true);
        nn::PlaneBatch<double> dout = y;
        dout.data = 2.0 * (y.data - tgt.data);
        net.backward(dout);
        const double fd_h = 1e-6;
        double worst = 0.0;
        auto check_tensor = [&](arma::Mat<double> &p, const arma::Mat<double> &g) {
            for (arma::uword i = 0; i < p.n_elem; ++i)
            {
                const double keep = p(i);
                p(i) = keep + fd_h;
                const double lp = loss_of();
                p(i) = keep - fd_h;
                const double lm = loss_of();
                p(i) = keep;
                const double num = (lp - lm) / (2.0 * fd_h);
                worst = std::max(worst, std::abs(num - g(i)) / std::max(1.0, std::abs(num)));
            }
        };
        for (auto &blk : net.blocks)
        {
            check_tensor(blk.w, blk.gw);
            check_tensor(blk.b, blk.gb);
            if (blk.bn)
            {
                check_tensor(blk.gamma, blk.ggamma);
                check_tensor(blk.beta, blk.gbeta);
            }
        }
        if (!(worst < 1e-4))
            fails.push_back("gradient rel err " + fmt_sci(worst));
        else
            std::cout << "--   gradient check max rel err " << fmt_sci(worst) << std::endl;
    }

    // tanh head bounds estimates by the scaling constant even on huge inputs.
    {
        auto base = neuralest::table1_template();
        base.spatial_h = 8;
        base.spatial_w = 8;
        base.scale_c = 4.0;
        const auto spec = neuralest::build_net(neuralest::NetKind::sf, 2, 1, base);
        neuralest::TrainedNet tn;
        tn.spec = spec;
        std::vector<nn::BlockSpec> blocks;
        for (const auto &l : spec.layers)
            blocks.push_back({l.out_maps, l.activation, l.batch_norm});
        tn.net = nn::NetworkF::make(spec.input_maps, spec.spatial_h, spec.spatial_w, blocks, 9);
        tn.best = tn.net;
        Rng rng(31);
        const std::vector<arma::cx_mat> stack{1e3 * random_cx(8, 8, rng),
                                              1e3 * random_cx(8, 8, rng)};
        const auto est = neuralest::estimate(tn, neuralest::stack_inputs(stack));
        double peak = 0.0;
        for (const auto &m : est)
            peak = std::max({peak, arma::abs(arma::real(m)).max(),
                             arma::abs(arma::imag(m)).max()});
        if (!(peak <= spec.scale_c + 1e-6))
            fails.push_back("estimate exceeds c: " + fmt(peak));
    }

    // Loss nonnegativity (and exact zero on identical inputs).
    {
        Rng rng(33);
        const std::vector<std::vector<arma::cx_mat>> t{{random_cx(4, 6, rng)}};
        const std::vector<std::vector<arma::cx_mat>> e{{random_cx(4, 6, rng)}};
        if (!(neuralest::mse_loss(t, e, 2.0) >= 0.0) || neuralest::mse_loss(t, t, 2.0) != 0.0)
            fails.push_back("mse_loss invariant");
    }

    // Dataset regeneration is byte-identical.
    {
        const auto umi = load_bundled_profile("umi-nlos-like");
        const fs::path tmp = work_dir() / "tmp-determinism";
        fs::remove_all(tmp);
        datapipe::DatasetManifest m;
        m.kind = neuralest::NetKind::sf;
        m.cfg = g_cfg;
        m.q = 2;
        m.s_or_d = 1;
        m.count = 24;
        m.scale_c = 4.0;
        m.seed = 77;
        datapipe::generate_dataset(m, umi, (tmp / "a").string(), 1);
        datapipe::generate_dataset(m, umi, (tmp / "b").string(), 1);
        auto bytes = [](const fs::path &p) {
            std::ifstream is(p, std::ios::binary);
            std::ostringstream ss;
            ss << is.rdbuf();
            return ss.str();
        };
        bool same = true;
        for (const char *f : {"samples.bin", "manifest.json", "checksums.txt"})
            same = same && bytes(tmp / "a" / f) == bytes(tmp / "b" / f);
        if (!same)
            fails.push_back("dataset regeneration differs");
        fs::remove_all(tmp);
    }

    // Gauss-Markov evolution keeps the channel energy stationary.
    {
        const auto umi = load_bundled_profile("umi-nlos-like");
        const double rho = chanmodel::rho_from_doppler(umi.doppler_max_hz, ceu_interval_s);
        const unsigned n_chains = 2000, n_steps = 50;
        arma::vec energy(n_steps, arma::fill::zeros);
        for (unsigned i = 0; i < n_chains; ++i)
        {
            const auto paths = chanmodel::draw_paths(umi, derive_seed(405, 2 * i));
            const auto chain = chanmodel::make_channel_tensor(paths, g_cfg, 1, 1, n_steps, rho,
                                                              derive_seed(405, 2 * i + 1));
            for (unsigned t = 0; t < n_steps; ++t)
                energy(t) += std::pow(arma::norm(chain.at(0, t), "fro"), 2) / n_chains;
        }
        const double drift = arma::abs(energy / energy(0) - 1.0).max();
        if (!(drift < 0.05))
            fails.push_back("GM energy drift " + fmt(100.0 * drift, 2) + "%");
        else
            std::cout << "--   GM energy drift " << fmt(100.0 * drift, 2) << "% over "
                      << n_steps << " steps" << std::endl;
    }

    std::string detail = "gradient < 1e-4, |estimate| <= c, loss >= 0, byte-identical "
                         "regeneration, GM drift < 5%";
    if (!fails.empty())
    {
        detail = "failed:";
        for (const auto &f : fails)
            detail += " [" + f + "]";
    }
    record(9, fails.empty(), detail);
}

} // namespace

int main(int, char **argv)
{
    ensure_fast_blas(argv);
    std::cout << "acceptance work directory: " << fs::absolute(work_dir()).string() << std::endl;

    run_criterion(1, criterion_1);
    run_criterion(2, criterion_2);
    run_criterion(3, criterion_3);
    run_criterion(4, criterion_4);
    run_criterion(9, criterion_9);

    bool have_artifacts = false;
    Artifacts arts;
    try
    {
        arts = build_artifacts();
        have_artifacts = true;
    }
    catch (const std::exception &e)
    {
        const std::string why = std::string("artifact build failed: ") + e.what();
        for (int id : {5, 6, 7, 8})
            record(id, false, why);
    }
    if (have_artifacts)
    {
        run_criterion(5, [&] { criterion_5(arts); });
        run_criterion(6, [&] { criterion_6(arts); });
        run_criterion(7, [&] { criterion_7(arts); });
        run_criterion(8, [&] { criterion_8(arts); });
    }

    std::sort(g_results.begin(), g_results.end(),
              [](const Criterion &a, const Criterion &b) { return a.id < b.id; });
    std::size_t passed = 0;
    std::cout << "\n=== acceptance results ===" << std::endl;
    for (const auto &r : g_results)
    {
        std::cout << "[C" << r.id << "] " << (r.pass ? "PASS" : "FAIL") << ": " << r.detail
                  << std::endl;
        passed += r.pass ? 1 : 0;
    }
    std::cout << "acceptance: " << passed << "/" << g_results.size() << " criteria passed"
              << std::endl;
    return passed == g_results.size() ? 0 : 1;
}
