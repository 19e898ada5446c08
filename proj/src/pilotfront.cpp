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

#include "mmce/pilotfront.hpp"
#include "mmce/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace mmce::pilotfront
{

using json = nlohmann::ordered_json;

void PilotConfig::validate() const
{
    require(m_tx >= 1 && m_rx >= 1, "PilotConfig: beam counts must be positive");
    require(power > 0.0 && std::isfinite(power), "PilotConfig: power must be positive");
    require(beamformer.n_cols == m_tx, "PilotConfig: beamformer column count != m_tx");
    require(combiner.n_cols == m_rx, "PilotConfig: combiner column count != m_rx");
    require(beamformer.n_rows >= m_tx, "PilotConfig: more beams than transmit antennas");
    require(combiner.n_rows >= m_rx, "PilotConfig: more beams than receive antennas");
    require(beamformer.is_finite() && combiner.is_finite(), "PilotConfig: non-finite codebook");
}

void PilotConfig::validate(const SystemConfig &cfg) const
{
    validate();
    require(beamformer.n_rows == cfg.n_tx, "PilotConfig: beamformer row count != n_tx");
    require(combiner.n_rows == cfg.n_rx, "PilotConfig: combiner row count != n_rx");
}

void PilotSchedule::validate() const
{
    require(!per_interval.empty(), "PilotSchedule: must cover at least one interval");
    for (const auto &pc : per_interval)
        pc.validate();
}

arma::cx_mat dft_codebook(unsigned n_antennas, unsigned n_cols)
{
    require(n_antennas >= 1, "dft_codebook: n_antennas must be positive");
    require(n_cols >= 1 && n_cols <= n_antennas, "dft_codebook: n_cols must lie in [1, n_antennas]");

    arma::cx_mat c(n_antennas, n_cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_antennas));
    for (unsigned j = 0; j < n_cols; ++j)
        for (unsigned i = 0; i < n_antennas; ++i)
            c(i, j) = std::polar(scale, -2.0 * arma::datum::pi * static_cast<double>(i) *
                                            static_cast<double>(j) / static_cast<double>(n_antennas));
    return c;
}

PilotConfig make_dft_pilots(const SystemConfig &cfg, unsigned m_tx, unsigned m_rx, double power)
{
    cfg.validate();
    PilotConfig pc;
    pc.m_tx = m_tx;
    pc.m_rx = m_rx;
    pc.power = power;
    pc.beamformer = dft_codebook(cfg.n_tx, m_tx);
    pc.combiner = dft_codebook(cfg.n_rx, m_rx);
    pc.validate(cfg);
    return pc;
}

arma::cx_mat received_pilots(const arma::cx_mat &h, const PilotConfig &pc, std::uint64_t seed,
                             bool noiseless)
{
    pc.validate();
    require(h.n_rows == pc.combiner.n_rows && h.n_cols == pc.beamformer.n_rows,
            "received_pilots: channel shape does not match codebooks");
    require(h.is_finite(), "received_pilots: non-finite channel");

    arma::cx_mat y = std::sqrt(pc.power) * (pc.combiner.t() * h * pc.beamformer);
    if (!noiseless)
    {
        Rng rng(seed);
        arma::cx_mat n(h.n_rows, pc.m_tx);
        for (arma::uword j = 0; j < n.n_cols; ++j)
            for (arma::uword i = 0; i < n.n_rows; ++i)
                n(i, j) = rng.cgaussian(1.0);
        y += pc.combiner.t() * n;
    }
    return y;
}

std::pair<arma::cx_mat, arma::cx_mat> te_matrices(const PilotConfig &pc, const SystemConfig &cfg)
{
    pc.validate(cfg);
    const arma::cx_mat &w = pc.combiner;
    const arma::cx_mat &f = pc.beamformer;

    arma::cx_mat g_left, g_right;
    try
    {
        if (pc.m_rx < w.n_rows)
            g_left = w;
        else
            g_left = arma::solve(w * w.t(), w, arma::solve_opts::no_approx);

        if (pc.m_tx < f.n_rows)
            g_right = f.t();
        else
            g_right = arma::solve(f * f.t(), f, arma::solve_opts::no_approx).t();
    }
    catch (const std::runtime_error &)
    {
        throw numerical_error("te_matrices: codebook Gram matrix is singular");
    }
    return {g_left, g_right};
}

arma::cx_mat tentative_estimate(const arma::cx_mat &y, const PilotConfig &pc,
                                const SystemConfig &cfg)
{
    require(y.n_rows == pc.m_rx && y.n_cols == pc.m_tx,
            "tentative_estimate: pilot block shape does not match PilotConfig");
    require(y.is_finite(), "tentative_estimate: non-finite pilots");
    const auto [g_left, g_right] = te_matrices(pc, cfg);
    return (1.0 / std::sqrt(pc.power)) * (g_left * y * g_right);
}

std::uint64_t pilot_overhead(std::uint64_t m_tx, std::uint64_t m_rx, std::uint64_t n_rx_rf)
{
    require(m_tx >= 1 && m_rx >= 1 && n_rx_rf >= 1, "pilot_overhead: arguments must be positive");
    return m_tx * ((m_rx + n_rx_rf - 1) / n_rx_rf);
}

double ls_noise_variance(const PilotConfig &pc, const SystemConfig &cfg)
{
    pc.validate(cfg);
    const auto [g_left, g_right] = te_matrices(pc, cfg);
    const double gl2 = std::pow(arma::norm(g_left, "fro"), 2);
    const double gr2 = std::pow(arma::norm(g_right, "fro"), 2);
    return gl2 * gr2 / (pc.power * static_cast<double>(cfg.n_tx) * static_cast<double>(cfg.n_rx));
}

// ---- codebook files ------------------------------------------------------

static const char *b64_alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

static std::string b64_encode(const unsigned char *data, std::size_t n)
{
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3)
    {
        unsigned v = data[i] << 16;
        if (i + 1 < n)
            v |= data[i + 1] << 8;
        if (i + 2 < n)
            v |= data[i + 2];
        out.push_back(b64_alphabet[(v >> 18) & 63]);
        out.push_back(b64_alphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < n ? b64_alphabet[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < n ? b64_alphabet[v & 63] : '=');
    }
    return out;
}

static std::vector<unsigned char> b64_decode(const std::string &s)
{
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z')
            return c - 'A';
        if (c >= 'a' && c <= 'z')
            return c - 'a' + 26;
        if (c >= '0' && c <= '9')
            return c - '0' + 52;
        if (c == '+')
            return 62;
        if (c == '/')
            return 63;
        return -1;
    };
    if (s.size() % 4 != 0)
        throw integrity_error("codebook: base64 payload length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4)
    {
        int pad = 0;
        unsigned v = 0;
        for (int k = 0; k < 4; ++k)
        {
            char c = s[i + k];
            if (c == '=')
            {
                ++pad;
                v <<= 6;
                continue;
            }
            const int d = val(c);
            if (d < 0 || pad > 0)
                throw integrity_error("codebook: invalid base64 payload");
            v = (v << 6) | static_cast<unsigned>(d);
        }
        out.push_back((v >> 16) & 0xff);
        if (pad < 2)
            out.push_back((v >> 8) & 0xff);
        if (pad < 1)
            out.push_back(v & 0xff);
    }
    return out;
}

void save_codebook(const arma::cx_mat &codebook, const std::string &path)
{
    require(codebook.n_elem > 0, "save_codebook: empty codebook");
    require(codebook.is_finite(), "save_codebook: non-finite codebook");

    // Column-major little-endian float32, real/imag interleaved.
    std::vector<float> buf;
    buf.reserve(2 * codebook.n_elem);
    for (arma::uword j = 0; j < codebook.n_cols; ++j)
        for (arma::uword i = 0; i < codebook.n_rows; ++i)
        {
            buf.push_back(static_cast<float>(codebook(i, j).real()));
            buf.push_back(static_cast<float>(codebook(i, j).imag()));
        }

    json j;
    j["schema"] = "codebook/1";
    j["n_rows"] = codebook.n_rows;
    j["n_cols"] = codebook.n_cols;
    j["data_b64"] = b64_encode(reinterpret_cast<const unsigned char *>(buf.data()),
                               buf.size() * sizeof(float));

    std::ofstream os(path);
    if (!os)
        throw integrity_error("save_codebook: cannot open '" + path + "' for writing");
    os << j.dump(2) << '\n';
    if (!os)
        throw integrity_error("save_codebook: write to '" + path + "' failed");
}

arma::cx_mat load_codebook(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        throw integrity_error("load_codebook: cannot open '" + path + "'");
    json j;
    try
    {
        is >> j;
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_codebook: malformed JSON in '" + path + "': " + e.what());
    }

    arma::uword n_rows = 0, n_cols = 0;
    std::vector<unsigned char> raw;
    try
    {
        if (j.at("schema").get<std::string>() != "codebook/1")
            throw integrity_error("load_codebook: unsupported schema in '" + path + "'");
        n_rows = j.at("n_rows").get<arma::uword>();
        n_cols = j.at("n_cols").get<arma::uword>();
        raw = b64_decode(j.at("data_b64").get<std::string>());
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_codebook: missing or mistyped field in '" + path + "': " +
                              e.what());
    }

    if (n_rows == 0 || n_cols == 0 || raw.size() != 2 * n_rows * n_cols * sizeof(float))
        throw integrity_error("load_codebook: payload size does not match dimensions in '" + path +
                              "'");

    arma::cx_mat c(n_rows, n_cols);
    const float *f = reinterpret_cast<const float *>(raw.data());
    for (arma::uword jx = 0; jx < n_cols; ++jx)
        for (arma::uword i = 0; i < n_rows; ++i)
        {
            c(i, jx) = std::complex<double>(f[0], f[1]);
            f += 2;
        }
    if (!c.is_finite())
        throw integrity_error("load_codebook: non-finite entries in '" + path + "'");
    return c;
}

} // namespace mmce::pilotfront
