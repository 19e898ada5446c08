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

#include <complex>
#include <cstdint>

namespace mmce
{

// Portable, platform-independent generator (xoshiro256++ seeded via splitmix64).
// All stochastic draws in the toolkit go through this class so that identical
// seeds give bit-identical streams on any conforming platform; std::mt19937
// distributions are implementation-defined and deliberately avoided.
class Rng
{
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform();

    // Uniform on [lo, hi).
    double uniform(double lo, double hi);

    // Standard normal via the Marsaglia polar method (pairs are cached).
    double gaussian();

    // Circularly-symmetric complex Gaussian CN(0, var).
    std::complex<double> cgaussian(double var);

  private:
    std::uint64_t state[4];
    double spare = 0.0;
    bool have_spare = false;
};

// Stable per-index stream derivation: hashes (master, index) through
// splitmix64 so that sample i's stream never depends on neighbouring indices.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

} // namespace mmce
