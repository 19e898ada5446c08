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

#include "mmce/neuralest.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mmce::datapipe
{

using chanmodel::ScenarioProfile;
using chanmodel::SystemConfig;
using neuralest::NetKind;
using neuralest::SampleSet;
using pilotfront::PilotSchedule;

// Provenance of one sample: first pilot subcarrier (1-based), first pilot
// interval (0-based slot) and the accepted attempt seed.
struct SampleMeta
{
    std::uint64_t k0 = 1;
    std::uint64_t n0 = 0;
    std::uint64_t seed = 0;
};

// Self-describing recipe for a dataset (schema dataset/1). Every sample is
// reproducible from this manifest alone:
//
//   slot_seed = derive_seed(seed, i);  attempt r uses a = derive_seed(slot_seed, 1000 + r)
//     k0  = 1 + u64 % (K - Q + 1)                   from Rng(derive_seed(a, 0))
//     n0  = u64 % 4 for sft/spr, 0 for sf           (same Rng, next draw)
//     snr = snr_db[u64 % len] when len > 1          (same Rng, next draw)
//     paths drawn with derive_seed(a, 1); channel chain with derive_seed(a, 2)
//     noise for interval d, window subcarrier j:    derive_seed(a, 3 + (d-1)*Q + j)
//   An attempt whose scaled targets leave [-1, 1] is rejected and counted;
//   the next attempt (r+1) redraws everything for that slot only.
struct DatasetManifest
{
    NetKind kind = NetKind::sf;
    std::string scenario;        // profile name (filled by generate_dataset)
    std::string profile_hash;    // filled by generate_dataset
    SystemConfig cfg;
    unsigned q = 2;              // estimated subcarriers per interval
    unsigned s_or_d = 1;         // 1 for sf, S for sft, family size D for spr
    unsigned ceu_position = 0;   // spr sub-dataset position 1..D; 0 otherwise
    std::vector<double> snr_db{10.0}; // one entry = fixed SNR, several = per-sample pick
    std::uint64_t count = 0;     // samples to emit
    double scale_c = 4.0;        // target scaling constant c
    std::uint64_t seed = 1;      // master seed
    double interval_s = 0.0;     // pilot interval spacing (s); required when s_or_d > 1
    PilotSchedule schedule;      // per-interval pilots; empty selects default_schedule
    std::uint64_t rejected = 0;  // rejected attempts (filled by generate_dataset)

    unsigned n_intervals() const { return kind == NetKind::sf ? 1 : s_or_d; }
    unsigned n_input_matrices() const
    {
        return kind == NetKind::spr ? q * ceu_position : q * n_intervals();
    }
    void validate() const;
};

// Full-power DFT pilots for every interval, except the spr reduced-overhead
// protocol: full pilots on interval 1, then m_tx = n_tx/2, m_rx = n_rx/4.
PilotSchedule default_schedule(NetKind kind, const SystemConfig &cfg, unsigned n_intervals);

// In-memory dataset: manifest + tensors + per-sample provenance. Input planes
// are ordered interval-major then window-subcarrier, each complex matrix
// contributing a (Re, Im) plane pair; targets are the Q true channels of the
// estimated interval scaled by 1/c, same plane order.
struct Dataset
{
    DatasetManifest manifest;
    SampleSet data;
    std::vector<SampleMeta> meta;

    void validate() const;
};

// Generates manifest.count samples and writes manifest.json + samples.bin +
// checksums.txt under out_dir (for spr: sub-datasets out_dir/d1 .. out_dir/dD
// sharing channel/noise realizations). Byte-identical for identical manifests
// regardless of n_workers. Returns the resolved manifest (hash, rejected).
DatasetManifest generate_dataset(const DatasetManifest &manifest, const ScenarioProfile &profile,
                                 const std::string &out_dir, unsigned n_workers = 1);

// Deterministic shuffle-split into (train, val, test); fractions must sum to
// one. Split k receives round(sum(fractions[0..k]) * n) - already-assigned
// samples, so the union is the exact input multiset.
std::array<Dataset, 3> split(const Dataset &ds, const std::array<double, 3> &fractions,
                             std::uint64_t seed);

// Manifest-only read (no tensor I/O).
DatasetManifest load_manifest(const std::string &dir);

// Verifies checksums.txt before parsing; round-trips generate_dataset/
// save_dataset exactly. Failures raise integrity_error.
Dataset load_dataset(const std::string &dir);

// Writes the same on-disk layout as generate_dataset (single dataset only).
void save_dataset(const Dataset &ds, const std::string &dir);

} // namespace mmce::datapipe
