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

#pragma once

#include "mmce/classical.hpp"
#include "mmce/neuralest.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mmce::evalbench
{

using chanmodel::ScenarioProfile;
using chanmodel::SystemConfig;
using classical::CovarianceModel;
using neuralest::TrainedNet;
using pilotfront::PilotSchedule;

// Sample statistics of the per-realization error ratio ||H - H_hat||_F^2 /
// ||H||_F^2 (matrices of one realization pooled before the ratio).
struct NmseStat
{
    double nmse = 0.0;    // mean ratio
    double nmse_db = 0.0; // 10 log10(mean ratio)
    double ci_half = 0.0; // 1.96 * sd / sqrt(n)
    std::uint64_t n = 0;  // realizations included
    std::uint64_t excluded = 0; // zero-norm realizations dropped
};

// NMSE over realizations; h_true[i] and h_est[i] are one realization's
// matched matrix lists. Zero-norm realizations are excluded (with a warning);
// an all-excluded input raises numerical_error.
NmseStat nmse(const std::vector<std::vector<arma::cx_mat>> &h_true,
              const std::vector<std::vector<arma::cx_mat>> &h_est);

struct CurvePoint
{
    double snr_db = 0.0;
    NmseStat stat;
};

struct Curve
{
    std::string estimator;          // descriptor, e.g. "sf-cnn[q=2]"
    std::string train_profile_hash; // empty when training-free
    std::string test_profile_hash;
    std::vector<CurvePoint> points;
};

struct ComplexityRow
{
    std::string name;
    std::uint64_t flops = 0;
    int order = 0; // floor(log10(flops))
};

// Pairing proof: per test profile, one digest per SNR point covering every
// (channel, noise) realization evaluated there.
struct RealizationDigest
{
    std::string profile_hash;
    std::vector<std::string> per_snr;
};

// Machine-readable result of one experiment (schema report/1).
struct EvalReport
{
    std::string experiment; // snr_sweep | robustness | overhead | complexity
    std::string version = mmce::version;
    std::uint64_t seed = 0;
    std::uint64_t n_mc = 0;
    std::vector<double> snr_db;
    std::string profile_train_name, profile_train_hash;
    std::vector<std::pair<std::string, std::string>> profiles_test; // (name, hash)
    std::vector<Curve> curves;
    std::vector<RealizationDigest> realizations;
    std::vector<std::uint64_t> per_interval_overhead; // overhead experiment
    double avg_overhead = 0.0;
    double overhead_ratio = 0.0;
    std::vector<ComplexityRow> complexity;
};

void save_report(const EvalReport &report, const std::string &path);
EvalReport load_report(const std::string &path);

// One channel/pilot realization handed to every estimator of a sweep point:
// tentative estimates for each (window subcarrier, interval) and the true
// channels of the estimated (final) interval.
struct Realization
{
    arma::field<arma::cx_mat> te;     // (q, s)
    std::vector<arma::cx_mat> h_true; // q matrices, final interval
    std::uint64_t digest = 0;
};

// An estimation scheme under test: consumes the shared realizations of one
// sweep point and returns per-realization estimates of the q target channels.
class Estimator
{
  public:
    virtual ~Estimator() = default;
    virtual std::string name() const = 0;
    virtual std::string train_profile_hash() const { return {}; }
    virtual std::vector<std::vector<arma::cx_mat>>
    run(const std::vector<Realization> &batch, double snr_db) = 0;
};

// LS: the tentative estimate of the final interval, unmodified.
class LsEstimator : public Estimator
{
  public:
    std::string name() const override { return "ls"; }
    std::vector<std::vector<arma::cx_mat>> run(const std::vector<Realization> &batch,
                                               double snr_db) override;
};

// MMSE with a fixed (ensemble) covariance; the filter is rebuilt per SNR and
// cached. Covariance dims must match the sweep window (s = 1 applies the
// filter to the final interval only).
class IdealMmseEstimator : public Estimator
{
  public:
    IdealMmseEstimator(CovarianceModel cov, SystemConfig cfg, std::string profile_name);
    std::string name() const override;
    std::string train_profile_hash() const override { return cov_.profile_hash; }
    std::vector<std::vector<arma::cx_mat>> run(const std::vector<Realization> &batch,
                                               double snr_db) override;

  private:
    CovarianceModel cov_;
    SystemConfig cfg_;
    std::string profile_name_;
    std::map<double, classical::MmseFilter> filters_;
};

// MMSE with a per-realization sample covariance (block-averaged outer
// products, diagonal loading); nothing is learned across realizations.
class SampleMmseEstimator : public Estimator
{
  public:
    SampleMmseEstimator(SystemConfig cfg, double loading = -1.0); // <0: recommended_loading
    std::string name() const override { return "mmse-sample"; }
    std::vector<std::vector<arma::cx_mat>> run(const std::vector<Realization> &batch,
                                               double snr_db) override;

  private:
    SystemConfig cfg_;
    double loading_;
};

// A trained sf/sft network applied in batch. The net's window may be narrower
// than the sweep's (sweep q divisible by net q: chunked application); an sft
// net consumes exactly its S most recent intervals.
class CnnEstimator : public Estimator
{
  public:
    CnnEstimator(const TrainedNet *tn, std::string profile_name, std::string profile_hash);
    std::string name() const override;
    std::string train_profile_hash() const override { return profile_hash_; }
    std::vector<std::vector<arma::cx_mat>> run(const std::vector<Realization> &batch,
                                               double snr_db) override;

  private:
    const TrainedNet *tn_;
    std::string profile_name_, profile_hash_;
};

// Monte-Carlo setup shared by the sweep experiments. Realizations are drawn
// per SNR point from derive_seed(seed, point_index); estimators within a
// point always see identical realizations.
struct SweepConfig
{
    SystemConfig cfg;
    unsigned q = 2;          // window subcarriers
    unsigned s = 1;          // pilot intervals simulated
    double interval_s = 0.0; // slot spacing, required when s > 1
    std::uint64_t n_mc = 2000;
    std::uint64_t seed = 1;
    PilotSchedule schedule; // empty: full pilots every interval
    unsigned n_workers = 1;

    void validate() const;
};

// NMSE vs SNR for all estimators on shared realizations (paired comparison).
EvalReport snr_sweep(const std::vector<std::shared_ptr<Estimator>> &estimators,
                     const std::vector<double> &snr_db, const ScenarioProfile &profile,
                     const SweepConfig &sc);

// Matched-vs-mismatched evaluation: every estimator (typically trained on
// profile_a) is tested on both profiles; curves are keyed by test profile hash.
EvalReport robustness_eval(const std::vector<std::shared_ptr<Estimator>> &estimators,
                           const ScenarioProfile &profile_a, const ScenarioProfile &profile_b,
                           const std::vector<double> &snr_db, const SweepConfig &sc);

// Reduced-overhead protocol bench: runs the CEU chain (nets for d = 1..D) on
// schedule pilots, reporting per-interval and pooled NMSE plus the overhead
// account; sf_baseline (optional) is evaluated with full pilots per interval.
EvalReport overhead_experiment(const std::vector<const TrainedNet *> &spr_nets,
                               const TrainedNet *sf_baseline, const PilotSchedule &schedule,
                               const ScenarioProfile &profile, const std::vector<double> &snr_db,
                               const SweepConfig &sc);

// FLOP account of the estimator families at the given window size.
EvalReport complexity_report(unsigned q, unsigned s, const SystemConfig &cfg,
                             const std::vector<neuralest::NetSpec> &netspecs);

} // namespace mmce::evalbench
