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

#include "mmce/nn.hpp"
#include "mmce/pilotfront.hpp"

#include <string>
#include <vector>

namespace mmce::neuralest
{

using chanmodel::SystemConfig;
using pilotfront::PilotSchedule;

enum class NetKind
{
    sf, // spatial-frequency: q adjacent subcarriers, one interval
    sft, // adds the previous interval's tentative estimates as extra inputs
    spr // pilot-reduction CEU member d: inputs from intervals 1..d
};

std::string to_string(NetKind kind);
NetKind net_kind_from_string(const std::string &s);

struct LayerSpec
{
    unsigned filter_side = 3;
    unsigned in_maps = 0;
    unsigned out_maps = 0;
    nn::Act activation = nn::Act::relu;
    bool batch_norm = true;
};

// Architecture description, serializable as netspec.json (schema netspec/1).
struct NetSpec
{
    NetKind kind = NetKind::sf;
    unsigned q = 2;         // jointly estimated adjacent subcarriers
    unsigned s_or_d = 1;    // S for sft, CEU interval index d for spr, 1 for sf
    unsigned input_maps = 0;
    unsigned output_maps = 0;
    unsigned spatial_h = 0; // N_R
    unsigned spatial_w = 0; // N_T
    double scale_c = 2.0;
    std::vector<LayerSpec> layers;

    void validate() const;
    unsigned n_input_matrices() const { return input_maps / 2; }
};

struct TrainConfig
{
    unsigned epochs = 800;
    // (epoch_span, learning_rate) segments; spans must partition [1, epochs].
    std::vector<std::pair<unsigned, double>> lr_schedule = {{200, 1e-4}, {400, 5e-5}, {200, 1e-5}};
    unsigned batch_size = 128;
    std::string optimizer = "adam";
    std::uint64_t seed = 1;

    void validate() const;
    double lr_at(unsigned epoch) const; // 1-based epoch
};

struct TrainHistory
{
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> lr;
    unsigned best_epoch = 0; // 1-based, epoch of lowest val loss
    double best_val_loss = 0.0;
};

// In-memory sample matrix pair: one column per sample, features laid out
// plane-major ((plane * h + y) * w + x). Targets are scaled by 1/scale_c.
struct SampleSet
{
    unsigned h = 0, w = 0;
    unsigned in_planes = 0, tgt_planes = 0;
    double scale_c = 0.0;
    arma::fmat inputs;
    arma::fmat targets;

    arma::uword count() const { return inputs.n_cols; }
    void validate() const;
};

// A trained estimator: final weights, best-validation checkpoint, history.
struct TrainedNet
{
    NetSpec spec;
    nn::Network<float> net;  // final epoch
    nn::Network<float> best; // lowest validation loss
    TrainHistory history;
    TrainConfig tcfg;
    std::string train_scenario;     // dataset provenance, optional
    std::string train_profile_hash; // dataset provenance, optional
};

// Canonical 10-layer architecture (64-map 3x3 hidden layers, tanh output),
// i.e. the SF-CNN layer table for q = 2.
NetSpec table1_template();

// Derives the concrete NetSpec for an estimator family from a template:
// sf -> input_maps 2q; sft -> 2q*s; spr interval d -> 2q*d; output_maps 2q.
NetSpec build_net(NetKind kind, unsigned q, unsigned s_or_d, const NetSpec &base);

// (N_R, N_T, 2*len) stack with slice order [Re R1, Im R1, Re R2, ...].
arma::fcube stack_inputs(const std::vector<arma::cx_mat> &r_list);
std::vector<arma::cx_mat> unstack(const arma::fcube &stack);

// Single-input inference: forward, scale by c, recombine planes into Q
// complex matrices. Inference always runs the best-validation checkpoint.
std::vector<arma::cx_mat> estimate(const TrainedNet &tn, const arma::fcube &r_stack);

// Batched inference (best-validation checkpoint) on SampleSet-layout
// columns; returns output planes ((h*w*output_maps) x n), still in 1/c scale.
arma::fmat infer_planes(const TrainedNet &tn, const arma::fmat &input_cols,
                        unsigned batch_size = 256);

// Batch MSE loss (1/(N c^2)) sum_i sum_q ||H - H_hat||_F^2; lists are indexed
// [sample][matrix].
double mse_loss(const std::vector<std::vector<arma::cx_mat>> &h_true,
                const std::vector<std::vector<arma::cx_mat>> &h_est, double c);

// Trains spec on train_data with Adam under the piecewise-constant LR
// schedule; per-epoch losses recorded; raises numerical_error on divergence.
TrainedNet train(const NetSpec &spec, const SampleSet &train_data, const SampleSet &val_data,
                 const TrainConfig &tc);

// Cache of tentative-estimate stacks from earlier intervals of the current
// channel-estimation unit (CEU).
struct CeuCache
{
    std::vector<std::vector<arma::cx_mat>> stored; // [interval][subcarrier]

    std::size_t depth() const { return stored.size(); }
    void clear() { stored.clear(); }
};

// Runs one full CEU of the pilot-reduction protocol: interval d (1-based)
// computes TE stacks from pilots(k, d-1) under schedule.per_interval[d-1],
// feeds net d the concatenation of cached stacks + the current stack, caches
// the current stack for later intervals, and empties the cache at the end.
// pilots is indexed (subcarrier, interval). Returns estimates[interval][q].
std::vector<std::vector<arma::cx_mat>> sprcnn_run_ceu(const std::vector<const TrainedNet *> &nets,
                                                      const arma::field<arma::cx_mat> &pilots,
                                                      const PilotSchedule &schedule,
                                                      const SystemConfig &cfg, CeuCache &cache);

// Exact per-inference multiply count: sum_l M1 * M2 * F_l^2 * N_{l-1} * N_l.
std::uint64_t flops_cnn(const NetSpec &spec);

// Model artifact directory: netspec.json + weights.bin (+ weights_best.bin,
// history.json). Named float32 tensors, little-endian, checksummed.
void save_model(const TrainedNet &tn, const std::string &dir);
TrainedNet load_model(const std::string &dir);

} // namespace mmce::neuralest
