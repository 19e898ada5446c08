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
// Minimal convolutional network engine: 3x3 same-padding convolutions with
// per-block activation and batch normalization, trained with Adam. The
// engine exists because the estimators need full training (not just
// inference) on a BLAS-only budget; it is not a general-purpose framework.
//
// Activations live in a "plane batch": one matrix of shape
// (n * (h+2) * (w+2)) x channels, column-major, i.e. each channel is a
// contiguous column holding all samples' zero-padded planes. Convolution then
// reduces to nine row-shifted GEMMs (or a Winograd F(4x4,3x3) fast path in
// float), and the pad rows double as the zero padding of the convolution.
// Invariant maintained throughout: pad rows are exactly zero after every op.

#pragma once

#ifndef ARMA_DONT_USE_WRAPPER
#define ARMA_DONT_USE_WRAPPER
#endif
#include <armadillo>

#include <cstdint>
#include <vector>

namespace mmce::nn
{

template <typename T> struct PlaneBatch
{
    arma::Mat<T> data; // (n * (h+2) * (w+2)) x channels
    unsigned n = 0, h = 0, w = 0;

    unsigned hp() const { return h + 2; }
    unsigned wp() const { return w + 2; }
    arma::uword n_pix() const { return arma::uword(n) * hp() * wp(); }
    unsigned channels() const { return static_cast<unsigned>(data.n_cols); }

    static PlaneBatch zeros(unsigned n, unsigned h, unsigned w, unsigned channels);

    // Zeroes every pad row in every channel column.
    void zero_border();

    // Copies one sample's channel plane from/to a row-major (y, x) buffer.
    void set_plane(unsigned sample, unsigned channel, const T *src);
    void get_plane(unsigned sample, unsigned channel, T *dst) const;
};

enum class Act
{
    relu,
    tanh_act
};

enum class ConvImpl
{
    automatic, // Winograd when eligible (float, 4|h, 4|w), else direct
    direct,    // nine shifted GEMMs
    winograd   // F(4x4,3x3); float only
};

// One network stage: 3x3 conv (+bias), activation, optional batch norm
// (applied after the activation).
template <typename T> struct ConvBlock
{
    unsigned cin = 0, cout = 0;
    Act act = Act::relu;
    bool bn = true;

    // Weights: (9 * cin) x cout; row k * cin + ci corresponds to tap
    // k = (dy + 1) * 3 + (dx + 1) of input channel ci.
    arma::Mat<T> w;
    arma::Col<T> b;
    arma::Col<T> gamma, beta, run_mean, run_var;

    // Gradients (overwritten by each backward pass).
    arma::Mat<T> gw;
    arma::Col<T> gb, ggamma, gbeta;

    // Adam first/second moments.
    arma::Mat<T> mw, vw;
    arma::Col<T> mb, vb, mgamma, vgamma, mbeta, vbeta;
};

struct BlockSpec
{
    unsigned out_maps = 0;
    Act act = Act::relu;
    bool bn = true;
};

template <typename T> class Network
{
  public:
    // He-uniform init for relu blocks, Glorot-uniform for tanh blocks;
    // weight draws use Rng(derive_seed(seed, block_index)).
    static Network make(unsigned in_maps, unsigned h, unsigned w,
                        const std::vector<BlockSpec> &blocks, std::uint64_t seed);

    // training=true uses batch statistics and retains the caches backward()
    // needs; training=false uses running statistics and stores nothing.
    PlaneBatch<T> forward(const PlaneBatch<T> &x, bool training);

    // Backpropagates d(loss)/d(output), overwriting every block's gradients.
    // Requires a preceding forward(..., true) with the same batch.
    PlaneBatch<T> backward(const PlaneBatch<T> &dout);

    // One Adam update from the stored gradients (step count advances).
    void adam_step(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8));

    // Frees the training-mode activation caches (hundreds of MB at real batch
    // sizes); call before copying or storing a network.
    void clear_cache();

    std::uint64_t param_count() const;

    std::vector<ConvBlock<T>> blocks;
    unsigned in_maps = 0, h = 0, w = 0;
    ConvImpl impl = ConvImpl::automatic;
    std::uint64_t adam_t = 0;
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;

  private:
    bool winograd_eligible() const;

    // forward caches (training mode)
    std::vector<PlaneBatch<T>> acts;     // acts[0] = input, acts[l+1] = block l output
    std::vector<PlaneBatch<T>> postact;  // activation output before BN (bn blocks)
    std::vector<arma::Col<T>> bn_mean, bn_invstd;
    std::vector<std::vector<arma::Mat<T>>> wino_v; // cached input transforms
    std::vector<std::vector<arma::Mat<T>>> wino_u; // cached filter transforms
    bool have_cache = false;
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

} // namespace mmce::nn
