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

#include "mmce/pilotfront.hpp"

namespace mmce::classical
{

using chanmodel::ChannelTensor;
using chanmodel::ScenarioProfile;
using chanmodel::SystemConfig;
using pilotfront::PilotSchedule;

// Shape of the jointly processed channel vector: q adjacent subcarriers over
// s consecutive intervals, each block an n_rx x n_tx matrix.
struct JointDims
{
    unsigned q = 1;
    unsigned s = 1;
    unsigned n_rx = 0;
    unsigned n_tx = 0;

    arma::uword block_dim() const { return arma::uword(n_rx) * n_tx; }
    arma::uword total_dim() const { return arma::uword(q) * s * block_dim(); }
    void validate() const;
    bool operator==(const JointDims &) const = default;
};

enum class CovSource
{
    ensemble, // ideal: averaged over true channel realizations
    sample    // non-ideal: built from one realization's LS estimate
};

// Second-order model R = E{ h h^H } of the joint vector, with provenance.
struct CovarianceModel
{
    arma::cx_mat r;
    JointDims dims;
    CovSource source = CovSource::ensemble;
    double loading = 0.0;        // diagonal loading added (sample covariance)
    std::string profile_hash;    // scenario the ensemble was drawn from
    unsigned n_mc = 0;           // ensemble size (ensemble covariance)
    std::uint64_t seed = 0;      // ensemble draw seed
    double interval_s = 0.0;     // interval spacing used when s > 1

    void validate() const;
};

// Stacks a (q, s) grid of channel blocks into the joint vector: block index
// runs subcarrier-major (q outer, s inner), each block column-major vectorised.
arma::cx_vec joint_vec(const ChannelTensor &grid);

// Inverse of joint_vec for known dimensions.
ChannelTensor joint_unvec(const arma::cx_vec &v, const JointDims &dims);

// Least-squares (tentative) estimate of the joint vector from raw pilot
// blocks y_grid(k, n) observed under schedule.per_interval[n].
arma::cx_vec ls_estimate(const arma::field<arma::cx_mat> &y_grid, const PilotSchedule &schedule,
                         const SystemConfig &cfg);

// Ideal covariance: ensemble average (1/n_mc) sum v v^H over n_mc independent
// channel draws from the profile (Gauss-Markov evolution across intervals when
// s > 1, correlation from the profile's Doppler and interval_s). The reduction
// is blocked in fixed index order, so results are worker-count independent.
CovarianceModel ensemble_covariance(const ScenarioProfile &profile, const SystemConfig &cfg,
                                    unsigned q, unsigned s, unsigned n_mc, std::uint64_t seed,
                                    double interval_s = 0.0, double gain_var = 1.0,
                                    unsigned n_workers = 1);

// Non-ideal covariance from a single LS estimate: per-block outer products are
// averaged into one block covariance, diagonally loaded with epsilon = loading,
// and replicated block-diagonally (cross-block terms are not estimable from
// one realization).
CovarianceModel sample_covariance_from_ls(const arma::cx_vec &h_ls, const JointDims &dims,
                                          double loading);

// Default diagonal loading 1e-3 * trace(R_block)/block_dim for the given LS vector.
double recommended_loading(const arma::cx_vec &h_ls, const JointDims &dims);

// MMSE refinement h_hat = R (R + noise_var I)^{-1} h_ls.
arma::cx_vec mmse_refine(const arma::cx_vec &h_ls, const CovarianceModel &cov, double noise_var);

// Precomputed MMSE filter for repeated application at one noise level.
struct MmseFilter
{
    arma::cx_mat w;

    static MmseFilter build(const CovarianceModel &cov, double noise_var);
    arma::cx_vec apply(const arma::cx_vec &h_ls) const;
};

// Dominant cost of the joint MMSE estimator: (q * s * n_rx * n_tx)^3 flops.
std::uint64_t flops_mmse(unsigned q, unsigned s, const SystemConfig &cfg);

// Covariance cache files: JSON header + raw little-endian payload, checksummed.
void save_covariance(const CovarianceModel &cov, const std::string &path);
CovarianceModel load_covariance(const std::string &path);

// Canonical cache file name for an ensemble covariance request.
std::string covariance_cache_name(const std::string &profile_hash, unsigned q, unsigned s,
                                  unsigned n_mc, std::uint64_t seed);

} // namespace mmce::classical
