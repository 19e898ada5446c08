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

#include "mmce/common.hpp"
#include "mmce/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <unistd.h>

extern "C"
{
    char *openblas_get_corename(void);
    void openblas_set_num_threads(int);
}

namespace mmce
{

std::uint64_t fnv1a64(const void *data, std::size_t n_bytes, std::uint64_t seed)
{
    const auto *p = static_cast<const unsigned char *>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n_bytes; ++i)
    {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t value)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

std::uint64_t file_fnv1a64(const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw integrity_error("file_fnv1a64: cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(is.gcount()), h);
    return h;
}

void ensure_fast_blas(char **argv)
{
    openblas_set_num_threads(1);

#if defined(__x86_64__)
    // Some hypervisors mask the CPU model string, which makes OpenBLAS's
    // dynamic dispatch fall back to pre-AVX kernels (~3x slower GEMM). The
    // kernel family is chosen inside the library's ELF constructor, so by the
    // time user code runs it can only be fixed via the environment + re-exec.
    if (std::getenv("OPENBLAS_CORETYPE") == nullptr && __builtin_cpu_supports("avx512f"))
    {
        const char *core = openblas_get_corename();
        if (core != nullptr && std::strcmp(core, "Prescott") == 0)
        {
            setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
            execv("/proc/self/exe", argv);
            // If the re-exec fails we continue on the slow kernels.
            unsetenv("OPENBLAS_CORETYPE");
        }
    }
#else
    (void)argv;
#endif
}

// ---- rng.hpp implementation --------------------------------------------

static inline std::uint64_t splitmix64(std::uint64_t &x)
{
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

static inline std::uint64_t rotl64(std::uint64_t x, int k)
{
    return (x << k) | (x >> (64 - k));
}

Rng::Rng(std::uint64_t seed)
{
    std::uint64_t x = seed;
    for (auto &s : state)
        s = splitmix64(x);
}

std::uint64_t Rng::next_u64()
{
    const std::uint64_t result = rotl64(state[0] + state[3], 23) + state[0];
    const std::uint64_t t = state[1] << 17;
    state[2] ^= state[0];
    state[3] ^= state[1];
    state[1] ^= state[2];
    state[0] ^= state[3];
    state[2] ^= t;
    state[3] = rotl64(state[3], 45);
    return result;
}

double Rng::uniform()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi)
{
    return lo + (hi - lo) * uniform();
}

double Rng::gaussian()
{
    if (have_spare)
    {
        have_spare = false;
        return spare;
    }
    double u, v, s;
    do
    {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare = v * m;
    have_spare = true;
    return u * m;
}

std::complex<double> Rng::cgaussian(double var)
{
    const double sd = std::sqrt(0.5 * var);
    const double re = gaussian();
    const double im = gaussian();
    return {sd * re, sd * im};
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    std::uint64_t x = master ^ (0x9e3779b97f4a7c15ULL + index * 0xbf58476d1ce4e5b9ULL);
    std::uint64_t a = splitmix64(x);
    std::uint64_t b = splitmix64(x);
    return a ^ rotl64(b, 32);
}

} // namespace mmce
