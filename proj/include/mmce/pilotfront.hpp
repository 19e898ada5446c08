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

#include "mmce/chanmodel.hpp"

#include <utility>
#include <vector>

namespace mmce::pilotfront
{

using chanmodel::SystemConfig;

// One pilot interval's analog configuration: transmit beamformer F
// (n_tx x m_tx), receive combiner W (n_rx x m_rx) and pilot power P.
struct PilotConfig
{
    unsigned m_tx = 0;
    unsigned m_rx = 0;
    double power = 1.0;
    arma::cx_mat beamformer; // F, one column per transmit beam
    arma::cx_mat combiner;   // W, one column per receive beam

    void validate() const;
    void validate(const SystemConfig &cfg) const;
};

// Pilot configuration for each estimation interval of a multi-interval
// protocol (index 0 = oldest interval).
struct PilotSchedule
{
    std::vector<PilotConfig> per_interval;

    void validate() const;
};

// First n_cols columns of the n_antennas-point unitary DFT matrix.
arma::cx_mat dft_codebook(unsigned n_antennas, unsigned n_cols);

// DFT-codebook pilot configuration for one interval.
PilotConfig make_dft_pilots(const SystemConfig &cfg, unsigned m_tx, unsigned m_rx, double power);

// Received pilot block Y = sqrt(P) W^H H F + W^H N with N iid CN(0,1) of
// shape (n_rx, m_tx) drawn column-major from Rng(seed). noiseless=true omits N.
arma::cx_mat received_pilots(const arma::cx_mat &h, const PilotConfig &pc, std::uint64_t seed,
                             bool noiseless = false);

// Reconstruction pair {G_left (n_rx x m_rx), G_right (m_tx x n_tx)}:
// G_left = W when m_rx < n_rx, else (W W^H)^{-1} W; G_right = F^H when
// m_tx < n_tx, else F^H (F F^H)^{-1}. Singular Grams raise numerical_error.
std::pair<arma::cx_mat, arma::cx_mat> te_matrices(const PilotConfig &pc, const SystemConfig &cfg);

// Tentative estimate R = (1/sqrt(P)) G_left Y G_right, shape (n_rx, n_tx).
// With full unitary DFT codebooks this inverts the frontend exactly in the
// noiseless case.
arma::cx_mat tentative_estimate(const arma::cx_mat &y, const PilotConfig &pc,
                                const SystemConfig &cfg);

// Pilot symbols consumed by one interval: m_tx * ceil(m_rx / n_rx_rf).
std::uint64_t pilot_overhead(std::uint64_t m_tx, std::uint64_t m_rx, std::uint64_t n_rx_rf);

// Average per-entry noise variance of the tentative estimate:
// ||G_left||_F^2 * ||G_right||_F^2 / (P * n_tx * n_rx). Equals 1/P for full
// unitary codebooks.
double ls_noise_variance(const PilotConfig &pc, const SystemConfig &cfg);

// Codebook interchange files (schema codebook/1, base64 little-endian float32
// with interleaved real/imaginary parts, column-major).
void save_codebook(const arma::cx_mat &codebook, const std::string &path);
arma::cx_mat load_codebook(const std::string &path);

} // namespace mmce::pilotfront
