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

#include "mmce/chanmodel.hpp"
#include "mmce/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace mmce::chanmodel
{

using json = nlohmann::ordered_json;

void SystemConfig::validate() const
{
    require(n_tx >= 1 && n_rx >= 1, "SystemConfig: antenna counts must be positive");
    require(n_tx_rf >= 1 && n_tx_rf <= n_tx, "SystemConfig: n_tx_rf must lie in [1, n_tx]");
    require(n_rx_rf >= 1 && n_rx_rf <= n_rx, "SystemConfig: n_rx_rf must lie in [1, n_rx]");
    require(n_subcarriers >= 1, "SystemConfig: n_subcarriers must be positive");
    require(sample_rate_hz > 0.0, "SystemConfig: sample_rate_hz must be positive");
    require(carrier_hz > 0.0, "SystemConfig: carrier_hz must be positive");
    require(spacing_ratio > 0.0, "SystemConfig: spacing_ratio must be positive");
}

void ScenarioProfile::validate() const
{
    require(!name.empty(), "ScenarioProfile: name must not be empty");
    require(n_paths >= 1, "ScenarioProfile: n_paths must be positive");
    require(delay_spread_s >= 0.0, "ScenarioProfile: delay_spread_s must be nonnegative");
    require(doppler_max_hz >= 0.0, "ScenarioProfile: doppler_max_hz must be nonnegative");
    for (const AngleSpread *sp : {&aoa_spread, &aod_spread})
    {
        require(sp->n_clusters >= 1 && sp->n_clusters <= n_paths,
                "ScenarioProfile: n_clusters must lie in [1, n_paths]");
        require(sp->spread_rad >= 0.0, "ScenarioProfile: spread_rad must be nonnegative");
    }
    require(power_profile.n_elem == n_paths, "ScenarioProfile: power_profile length != n_paths");
    require(power_profile.min() > 0.0, "ScenarioProfile: powers must be positive");
    require(std::abs(arma::accu(power_profile) - 1.0) <= 1e-9,
            "ScenarioProfile: power_profile must sum to 1");
}

void PathSet::validate() const
{
    const arma::uword n = gains.n_elem;
    require(n >= 1, "PathSet: must contain at least one path");
    require(delays_s.n_elem == n && aoa_rad.n_elem == n && aod_rad.n_elem == n &&
                doppler_hz.n_elem == n,
            "PathSet: field lengths disagree");
    require(gain_var > 0.0, "PathSet: gain_var must be positive");
    require(gains.is_finite() && delays_s.is_finite() && aoa_rad.is_finite() &&
                aod_rad.is_finite() && doppler_hz.is_finite(),
            "PathSet: non-finite entries");
    require(delays_s.min() >= 0.0, "PathSet: delays must be nonnegative");
}

arma::cx_vec steering_vector(double angle_rad, unsigned n_elems, double spacing_ratio)
{
    require(n_elems >= 1, "steering_vector: n_elems must be positive");
    require(spacing_ratio > 0.0, "steering_vector: spacing_ratio must be positive");
    require(std::isfinite(angle_rad), "steering_vector: angle must be finite");

    arma::cx_vec a(n_elems);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_elems));
    const double step = -2.0 * arma::datum::pi * spacing_ratio * std::sin(angle_rad);
    for (unsigned i = 0; i < n_elems; ++i)
        a(i) = std::polar(scale, step * static_cast<double>(i));
    return a;
}

static double wrap_angle(double a)
{
    const double two_pi = 2.0 * arma::datum::pi;
    a = std::fmod(a, two_pi);
    if (a > arma::datum::pi)
        a -= two_pi;
    else if (a <= -arma::datum::pi)
        a += two_pi;
    return a;
}

PathSet draw_paths(const ScenarioProfile &profile, std::uint64_t seed, double gain_var)
{
    profile.validate();
    require(gain_var > 0.0, "draw_paths: gain_var must be positive");

    const unsigned n = profile.n_paths;
    Rng rng(seed);

    // Draw order is part of the reproducibility contract: AoA cluster centres,
    // AoD cluster centres, delays, then per-path AoA/AoD/Doppler/gain.
    arma::vec aoa_centre(profile.aoa_spread.n_clusters);
    for (auto &c : aoa_centre)
        c = rng.uniform(0.0, 2.0 * arma::datum::pi);
    arma::vec aod_centre(profile.aod_spread.n_clusters);
    for (auto &c : aod_centre)
        c = rng.uniform(0.0, 2.0 * arma::datum::pi);

    PathSet ps;
    ps.gain_var = gain_var;
    ps.delays_s.set_size(n);
    for (auto &d : ps.delays_s)
        d = rng.uniform(0.0, profile.delay_spread_s);
    ps.delays_s = arma::sort(ps.delays_s);

    ps.aoa_rad.set_size(n);
    ps.aod_rad.set_size(n);
    ps.doppler_hz.set_size(n);
    ps.gains.set_size(n);
    for (unsigned l = 0; l < n; ++l)
    {
        const unsigned ca = l * profile.aoa_spread.n_clusters / n;
        const unsigned cd = l * profile.aod_spread.n_clusters / n;
        ps.aoa_rad(l) = wrap_angle(aoa_centre(ca) +
                                   rng.uniform(-profile.aoa_spread.spread_rad,
                                               profile.aoa_spread.spread_rad));
        ps.aod_rad(l) = wrap_angle(aod_centre(cd) +
                                   rng.uniform(-profile.aod_spread.spread_rad,
                                               profile.aod_spread.spread_rad));
        ps.doppler_hz(l) = rng.uniform(-profile.doppler_max_hz, profile.doppler_max_hz);
        // E{|alpha_l|^2} = gain_var * n * p_l, so that the sqrt(N_T N_R / L)
        // normalization in freq_channel gives E{ ||H_k||_F^2 } = N_T N_R gain_var.
        ps.gains(l) = rng.cgaussian(gain_var * static_cast<double>(n) * profile.power_profile(l));
    }
    return ps;
}

static arma::cx_mat freq_channel_impl(const PathSet &paths, const SystemConfig &cfg, unsigned k,
                                      double t_s)
{
    paths.validate();
    cfg.validate();
    require(k >= 1 && k <= cfg.n_subcarriers, "freq_channel: subcarrier index out of range");

    const arma::uword n = paths.n_paths();
    const double scale = std::sqrt(static_cast<double>(cfg.n_tx) * static_cast<double>(cfg.n_rx) /
                                   static_cast<double>(n));
    arma::cx_mat h(cfg.n_rx, cfg.n_tx, arma::fill::zeros);
    for (arma::uword l = 0; l < n; ++l)
    {
        const double phase = -2.0 * arma::datum::pi * paths.delays_s(l) * cfg.sample_rate_hz *
                                 static_cast<double>(k) / static_cast<double>(cfg.n_subcarriers) +
                             2.0 * arma::datum::pi * paths.doppler_hz(l) * t_s;
        const std::complex<double> g = paths.gains(l) * std::polar(1.0, phase);
        const arma::cx_vec ar = steering_vector(paths.aoa_rad(l), cfg.n_rx, cfg.spacing_ratio);
        const arma::cx_vec at = steering_vector(paths.aod_rad(l), cfg.n_tx, cfg.spacing_ratio);
        h += g * (ar * at.t());
    }
    return scale * h;
}

arma::cx_mat freq_channel(const PathSet &paths, const SystemConfig &cfg, unsigned k)
{
    return freq_channel_impl(paths, cfg, k, 0.0);
}

arma::cx_mat freq_channel_at_time(const PathSet &paths, const SystemConfig &cfg, unsigned k,
                                  double t_s)
{
    require(std::isfinite(t_s), "freq_channel_at_time: time must be finite");
    return freq_channel_impl(paths, cfg, k, t_s);
}

arma::cx_mat evolve_gauss_markov(const arma::cx_mat &h_prev, double rho, std::uint64_t seed,
                                 double theta_var)
{
    require(h_prev.n_elem > 0, "evolve_gauss_markov: empty channel matrix");
    require(rho >= 0.0 && rho <= 1.0, "evolve_gauss_markov: rho must lie in [0, 1]");
    require(theta_var > 0.0, "evolve_gauss_markov: theta_var must be positive");

    Rng rng(seed);
    const double innov = std::sqrt(1.0 - rho * rho);
    arma::cx_mat h(h_prev.n_rows, h_prev.n_cols);
    for (arma::uword j = 0; j < h.n_cols; ++j)
        for (arma::uword i = 0; i < h.n_rows; ++i)
            h(i, j) = rho * h_prev(i, j) + innov * rng.cgaussian(theta_var);
    return h;
}

double rho_from_doppler(double doppler_hz, double interval_s)
{
    require(doppler_hz >= 0.0, "rho_from_doppler: doppler_hz must be nonnegative");
    require(interval_s > 0.0, "rho_from_doppler: interval_s must be positive");
    const double x = 2.0 * arma::datum::pi * doppler_hz * interval_s;
    const double j0 = std::cyl_bessel_j(0.0, x);
    return std::clamp(j0, 0.0, 1.0);
}

ChannelTensor make_channel_tensor(const PathSet &paths, const SystemConfig &cfg, unsigned k0,
                                  unsigned n_freq, unsigned n_time, double rho, std::uint64_t seed,
                                  double theta_var)
{
    cfg.validate();
    require(n_freq >= 1 && n_time >= 1, "make_channel_tensor: grid must be nonempty");
    require(k0 >= 1 && k0 + n_freq - 1 <= cfg.n_subcarriers,
            "make_channel_tensor: subcarrier window out of range");

    ChannelTensor t;
    t.slots.set_size(n_freq, n_time);
    for (unsigned k = 0; k < n_freq; ++k)
        t.slots(k, 0) = freq_channel(paths, cfg, k0 + k);
    for (unsigned n = 1; n < n_time; ++n)
        for (unsigned k = 0; k < n_freq; ++k)
            t.slots(k, n) = evolve_gauss_markov(t.slots(k, n - 1), rho,
                                                derive_seed(seed, static_cast<std::uint64_t>(n) * n_freq + k),
                                                theta_var);
    return t;
}

static json profile_to_json(const ScenarioProfile &p)
{
    json j;
    j["schema"] = "scenario/1";
    j["name"] = p.name;
    j["n_paths"] = p.n_paths;
    j["delay_spread_s"] = p.delay_spread_s;
    j["aoa_spread"] = {{"n_clusters", p.aoa_spread.n_clusters}, {"spread_rad", p.aoa_spread.spread_rad}};
    j["aod_spread"] = {{"n_clusters", p.aod_spread.n_clusters}, {"spread_rad", p.aod_spread.spread_rad}};
    j["power_profile"] = std::vector<double>(p.power_profile.begin(), p.power_profile.end());
    j["doppler_max_hz"] = p.doppler_max_hz;
    return j;
}

void save_profile(const ScenarioProfile &profile, const std::string &path)
{
    profile.validate();
    std::ofstream os(path);
    if (!os)
        throw integrity_error("save_profile: cannot open '" + path + "' for writing");
    os << profile_to_json(profile).dump(2) << '\n';
    if (!os)
        throw integrity_error("save_profile: write to '" + path + "' failed");
}

ScenarioProfile load_profile(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        throw integrity_error("load_profile: cannot open '" + path + "'");
    json j;
    try
    {
        is >> j;
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_profile: malformed JSON in '" + path + "': " + e.what());
    }

    ScenarioProfile p;
    try
    {
        if (j.at("schema").get<std::string>() != "scenario/1")
            throw integrity_error("load_profile: unsupported schema in '" + path + "'");
        p.name = j.at("name").get<std::string>();
        p.n_paths = j.at("n_paths").get<unsigned>();
        p.delay_spread_s = j.at("delay_spread_s").get<double>();
        p.aoa_spread.n_clusters = j.at("aoa_spread").at("n_clusters").get<unsigned>();
        p.aoa_spread.spread_rad = j.at("aoa_spread").at("spread_rad").get<double>();
        p.aod_spread.n_clusters = j.at("aod_spread").at("n_clusters").get<unsigned>();
        p.aod_spread.spread_rad = j.at("aod_spread").at("spread_rad").get<double>();
        const auto powers = j.at("power_profile").get<std::vector<double>>();
        p.power_profile = arma::vec(powers);
        p.doppler_max_hz = j.at("doppler_max_hz").get<double>();
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_profile: missing or mistyped field in '" + path + "': " + e.what());
    }
    try
    {
        p.validate();
    }
    catch (const std::invalid_argument &e)
    {
        throw integrity_error("load_profile: invalid profile in '" + path + "': " + e.what());
    }
    return p;
}

std::string profile_hash(const ScenarioProfile &profile)
{
    profile.validate();
    const std::string canon = profile_to_json(profile).dump();
    return to_hex(fnv1a64(canon.data(), canon.size()));
}

} // namespace mmce::chanmodel
