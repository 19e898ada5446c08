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

#ifndef ARMA_DONT_USE_WRAPPER
#define ARMA_DONT_USE_WRAPPER
#endif
#include <armadillo>

#include <cstdint>
#include <string>

#include "mmce/common.hpp"

namespace mmce::chanmodel
{

// Static geometry and OFDM numerology of the simulated link. Defaults follow
// the 28 GHz hybrid-array setup used throughout the evaluation benches.
struct SystemConfig
{
    unsigned n_tx = 32;              // transmit antennas (ULA)
    unsigned n_rx = 16;              // receive antennas (ULA)
    unsigned n_tx_rf = 2;            // transmit RF chains
    unsigned n_rx_rf = 2;            // receive RF chains
    unsigned n_subcarriers = 64;     // OFDM subcarriers K
    double sample_rate_hz = 100e6;   // system bandwidth f_s
    double carrier_hz = 28e9;        // carrier frequency
    double spacing_ratio = 0.5;      // element spacing d / wavelength

    void validate() const;
};

// Per-cluster angular dispersion: paths are grouped into n_clusters clusters
// whose centres are uniform on [0, 2*pi) and whose subpaths deviate from the
// centre by at most +/- spread_rad.
struct AngleSpread
{
    unsigned n_clusters = 3;
    double spread_rad = 0.0;
};

// Named statistical scenario from which path realizations are drawn.
struct ScenarioProfile
{
    std::string name;
    unsigned n_paths = 0;
    double delay_spread_s = 0.0;     // delays are uniform on [0, delay_spread_s]
    AngleSpread aoa_spread;
    AngleSpread aod_spread;
    arma::vec power_profile;         // per-path relative powers, sums to 1
    double doppler_max_hz = 0.0;

    void validate() const;
};

// One multipath realization: L paths with complex gains, delays, angles and
// Doppler shifts. gain_var records the E{|alpha|^2} normalization in force.
struct PathSet
{
    arma::cx_vec gains;
    arma::vec delays_s;
    arma::vec aoa_rad;
    arma::vec aod_rad;
    arma::vec doppler_hz;
    double gain_var = 1.0;

    arma::uword n_paths() const { return gains.n_elem; }
    void validate() const;
};

// Frequency-time grid of channel matrices: slot(k, n) is the n_rx x n_tx
// channel at subcarrier index k (within the selected window) and symbol n.
struct ChannelTensor
{
    arma::field<arma::cx_mat> slots; // (n_freq, n_time)

    arma::uword n_freq() const { return slots.n_rows; }
    arma::uword n_time() const { return slots.n_cols; }
    const arma::cx_mat &at(arma::uword k, arma::uword n) const { return slots(k, n); }
};

// Unit-norm ULA steering vector (1/sqrt(N)) [1, e^{-j2*pi*(d/lambda)sin},...].
arma::cx_vec steering_vector(double angle_rad, unsigned n_elems, double spacing_ratio);

// Draws one PathSet from the profile: cluster centres, per-path angle offsets,
// delays (sorted), Doppler shifts and complex Gaussian gains with
// E{|alpha_l|^2} = gain_var * n_paths * power_profile[l].
PathSet draw_paths(const ScenarioProfile &profile, std::uint64_t seed, double gain_var = 1.0);

// Frequency response at 1-based subcarrier k:
//   H_k = sqrt(N_T*N_R/L) * sum_l alpha_l e^{-j*2*pi*tau_l*f_s*k/K} a_R a_T^H.
arma::cx_mat freq_channel(const PathSet &paths, const SystemConfig &cfg, unsigned k);

// Same with per-path Doppler rotation e^{+j*2*pi*nu_l*t} applied at time t.
arma::cx_mat freq_channel_at_time(const PathSet &paths, const SystemConfig &cfg, unsigned k, double t_s);

// First-order Gauss-Markov step H[n] = rho*H[n-1] + sqrt(1-rho^2)*Theta with
// Theta iid CN(0, theta_var) entries drawn from Rng(seed) in column-major order.
arma::cx_mat evolve_gauss_markov(const arma::cx_mat &h_prev, double rho, std::uint64_t seed,
                                 double theta_var = 1.0);

// Jakes correlation coefficient rho = clamp(J0(2*pi*f_d*T), 0, 1).
double rho_from_doppler(double doppler_hz, double interval_s);

// Builds the (n_freq x n_time) grid for subcarriers k0..k0+n_freq-1 (1-based):
// column 0 from the PathSet at t = 0, later columns by per-subcarrier
// Gauss-Markov evolution with innovation seeds derive_seed(seed, n*n_freq+k).
ChannelTensor make_channel_tensor(const PathSet &paths, const SystemConfig &cfg, unsigned k0,
                                  unsigned n_freq, unsigned n_time, double rho, std::uint64_t seed,
                                  double theta_var = 1.0);

ScenarioProfile load_profile(const std::string &path);
void save_profile(const ScenarioProfile &profile, const std::string &path);

// Canonical-form content hash of a profile (used to key covariance caches,
// dataset manifests and evaluation reports).
std::string profile_hash(const ScenarioProfile &profile);

} // namespace mmce::chanmodel
