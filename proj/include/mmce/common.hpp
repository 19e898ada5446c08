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

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmce
{

inline constexpr const char *version = "0.1.0";

// Raised when stored artifacts (datasets, models, reports, caches) fail
// checksum or schema validation.
struct integrity_error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// Raised when a numerical routine cannot produce a finite, usable result
// (singular solves, divergent training, non-finite values).
struct numerical_error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// Raised when a multi-interval estimation protocol is driven inconsistently
// (schedule/cache/net mismatches).
struct protocol_error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg)
{
    if (!cond)
        throw std::invalid_argument(msg);
}

// FNV-1a 64-bit over a byte range; the only content hash used by the toolkit.
std::uint64_t fnv1a64(const void *data, std::size_t n_bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// FNV-1a (64-bit) over a whole file; integrity_error when unreadable.
std::uint64_t file_fnv1a64(const std::string &path);

std::string to_hex(std::uint64_t value);

// Pins BLAS to one thread and, when the backend misdetects the CPU on a
// hypervisor that masks the model string, re-executes the process with the
// kernel family fixed. Call first thing in main(), before any BLAS use.
void ensure_fast_blas(char **argv);

} // namespace mmce
