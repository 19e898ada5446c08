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

#include "mmce/datapipe.hpp"
#include "mmce/evalbench.hpp"
#include "mmce/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace
{

using json = nlohmann::ordered_json;
using mmce::derive_seed;
using mmce::chanmodel::ScenarioProfile;
using mmce::chanmodel::SystemConfig;
using mmce::evalbench::EvalReport;
using mmce::neuralest::NetKind;
using mmce::neuralest::TrainedNet;
using mmce::pilotfront::PilotSchedule;

// JSON config files: flat or dotted keys ("gen.count"), arrays allowed.
class JsonConfig : public CLI::Config
{
  public:
    std::string to_config(const CLI::App *, bool, bool, std::string) const override
    {
        return "{}\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream &input) const override
    {
        json j;
        try
        {
            input >> j;
        }
        catch (const json::exception &e)
        {
            throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
        }
        std::vector<CLI::ConfigItem> out;
        if (!j.is_object())
            throw CLI::FileError("config root must be a JSON object");
        for (const auto &[key, value] : j.items())
        {
            CLI::ConfigItem item;
            auto parts = CLI::detail::split(key, '.');
            item.name = parts.back();
            parts.pop_back();
            item.parents = std::move(parts);
            auto as_string = [](const json &v) {
                return v.is_string() ? v.get<std::string>() : v.dump();
            };
            if (value.is_array())
                for (const auto &e : value)
                    item.inputs.push_back(as_string(e));
            else
                item.inputs.push_back(as_string(value));
            out.push_back(std::move(item));
        }
        return out;
    }
};

unsigned default_workers()
{
    const unsigned n = std::thread::hardware_concurrency();
    return n ? n : 1;
}

// ---- flag-value parsers ------------------------------------------------------

// "10" | "0,5,10" | "start:step:stop" (inclusive)
std::vector<double> parse_snr_spec(const std::string &spec)
{
    std::vector<double> out;
    try
    {
        if (spec.find(':') != std::string::npos)
        {
            const auto parts = CLI::detail::split(spec, ':');
            if (parts.size() != 3)
                throw std::invalid_argument("expected start:step:stop");
            const double start = std::stod(parts[0]);
            const double step = std::stod(parts[1]);
            const double stop = std::stod(parts[2]);
            if (!(step > 0.0) || stop < start)
                throw std::invalid_argument("need step > 0 and stop >= start");
            for (double v = start; v <= stop + 1e-9; v += step)
                out.push_back(v);
        }
        else
        {
            for (const auto &tok : CLI::detail::split(spec, ','))
                out.push_back(std::stod(tok));
        }
    }
    catch (const std::invalid_argument &)
    {
        throw std::invalid_argument("bad SNR spec '" + spec +
                                    "' (use a value, a comma list, or start:step:stop)");
    }
    if (out.empty())
        throw std::invalid_argument("empty SNR spec");
    return out;
}

// "200:1e-4,400:5e-5,200:1e-5" -> {(span, lr)}
std::vector<std::pair<unsigned, double>> parse_lr_schedule(const std::string &spec)
{
    std::vector<std::pair<unsigned, double>> out;
    for (const auto &tok : CLI::detail::split(spec, ','))
    {
        const auto pos = tok.find(':');
        if (pos == std::string::npos)
            throw std::invalid_argument("bad LR schedule entry '" + tok +
                                        "' (use span:lr, e.g. 200:1e-4)");
        try
        {
            out.emplace_back(static_cast<unsigned>(std::stoul(tok.substr(0, pos))),
                             std::stod(tok.substr(pos + 1)));
        }
        catch (const std::exception &)
        {
            throw std::invalid_argument("bad LR schedule entry '" + tok + "'");
        }
    }
    if (out.empty())
        throw std::invalid_argument("empty LR schedule");
    return out;
}

std::map<std::string, std::string> parse_models(const std::vector<std::string> &entries)
{
    std::map<std::string, std::string> out;
    for (const auto &e : entries)
    {
        const auto pos = e.find('=');
        if (pos == std::string::npos || pos == 0 || pos + 1 == e.size())
            throw std::invalid_argument("bad --model entry '" + e + "' (use name=path)");
        out[e.substr(0, pos)] = e.substr(pos + 1);
    }
    return out;
}

// "full,16x4,16x4,16x4"
PilotSchedule parse_pilot_schedule(const std::string &spec, const SystemConfig &cfg)
{
    PilotSchedule sched;
    for (const auto &tok : CLI::detail::split(spec, ','))
    {
        unsigned m_tx = cfg.n_tx, m_rx = cfg.n_rx;
        if (tok != "full")
        {
            const auto pos = tok.find('x');
            if (pos == std::string::npos)
                throw std::invalid_argument("bad schedule entry '" + tok +
                                            "' (use full or MTxMR, e.g. 16x4)");
            try
            {
                m_tx = static_cast<unsigned>(std::stoul(tok.substr(0, pos)));
                m_rx = static_cast<unsigned>(std::stoul(tok.substr(pos + 1)));
            }
            catch (const std::exception &)
            {
                throw std::invalid_argument("bad schedule entry '" + tok + "'");
            }
        }
        sched.per_interval.push_back(mmce::pilotfront::make_dft_pilots(cfg, m_tx, m_rx, 1.0));
    }
    return sched;
}

// "sf" -> (sf, 1); "sft" -> (sft, s_flag); "spr-3" -> (spr, 3)
std::pair<NetKind, unsigned> parse_net_name(const std::string &net, unsigned s_flag)
{
    if (net == "sf")
        return {NetKind::sf, 1};
    if (net == "sft")
        return {NetKind::sft, s_flag};
    if (net.rfind("spr-", 0) == 0)
    {
        try
        {
            const unsigned d = static_cast<unsigned>(std::stoul(net.substr(4)));
            if (d >= 1)
                return {NetKind::spr, d};
        }
        catch (const std::exception &)
        {
        }
    }
    throw std::invalid_argument("bad --net '" + net + "' (use sf, sft, or spr-<d>)");
}

void write_resolved(const std::string &path, json j)
{
    j["version"] = mmce::version;
    std::ofstream os(path);
    if (!os)
        throw mmce::integrity_error("cannot write resolved config '" + path + "'");
    os << j.dump(2) << '\n';
}

// ---- report pretty printer ----------------------------------------------------

void print_report(const EvalReport &r)
{
    if (!r.complexity.empty())
    {
        std::size_t w = 0;
        for (const auto &row : r.complexity)
            w = std::max(w, row.name.size());
        for (const auto &row : r.complexity)
            std::cout << std::left << std::setw(static_cast<int>(w) + 2) << row.name
                      << std::right << std::setw(14) << row.flops << "  (~1e" << row.order
                      << ")\n";
    }
    if (!r.per_interval_overhead.empty())
    {
        std::cout << "pilot overhead per interval:";
        for (auto o : r.per_interval_overhead)
            std::cout << ' ' << o;
        std::cout << "  average " << r.avg_overhead << "  ratio " << r.overhead_ratio << '\n';
    }
    if (r.curves.empty())
        return;
    std::size_t w = 9;
    for (const auto &c : r.curves)
        w = std::max(w, c.estimator.size());
    std::cout << std::left << std::setw(static_cast<int>(w) + 2) << "estimator" << std::right
              << std::setw(8) << "snr_db" << std::setw(13) << "nmse" << std::setw(10)
              << "nmse_db" << std::setw(12) << "ci95" << std::setw(7) << "test" << '\n';
    for (const auto &c : r.curves)
        for (const auto &p : c.points)
        {
            std::ostringstream nm;
            nm << std::scientific << std::setprecision(3) << p.stat.nmse;
            std::ostringstream ci;
            ci << std::scientific << std::setprecision(1) << p.stat.ci_half;
            std::cout << std::left << std::setw(static_cast<int>(w) + 2) << c.estimator
                      << std::right << std::fixed << std::setprecision(1) << std::setw(8)
                      << p.snr_db << std::setw(13) << nm.str() << std::setprecision(2)
                      << std::setw(10) << p.stat.nmse_db << std::setw(12) << ci.str()
                      << std::setw(7) << c.test_profile_hash.substr(0, 5) << '\n';
        }
}

// ---- SVG rendering --------------------------------------------------------------

std::string fmt_num(double v, int prec = 6)
{
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string render_svg(const EvalReport &r)
{
    static const char *palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
                                    "#bcbd22", "#17becf"};
    const double width = 880, height = 560;
    const double ml = 70, mr = 250, mt = 48, mb = 58;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const auto &c : r.curves)
        for (const auto &p : c.points)
        {
            x_min = std::min(x_min, p.snr_db);
            x_max = std::max(x_max, p.snr_db);
            const double lo = p.stat.nmse - p.stat.ci_half, hi = p.stat.nmse + p.stat.ci_half;
            if (lo > 0.0)
                y_min = std::min(y_min, 10.0 * std::log10(lo));
            y_min = std::min(y_min, p.stat.nmse_db);
            y_max = std::max(y_max, hi > 0.0 ? 10.0 * std::log10(hi) : p.stat.nmse_db);
        }
    if (x_max <= x_min)
        x_max = x_min + 1.0;
    if (y_max <= y_min)
        y_max = y_min + 1.0;
    y_min = std::floor(y_min / 5.0) * 5.0 - 1.0;
    y_max = std::ceil(y_max / 5.0) * 5.0 + 1.0;

    auto X = [&](double v) { return ml + (v - x_min) / (x_max - x_min) * pw; };
    auto Y = [&](double v) { return mt + (y_max - v) / (y_max - y_min) * ph; };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << ml << "\" y=\"26\" font-family=\"sans-serif\" font-size=\"16\" "
         "font-weight=\"bold\">"
      << r.experiment << " (n_mc=" << r.n_mc << ", seed=" << r.seed << ")</text>\n";

    // grid + ticks
    s << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
    for (double v = y_min + 1.0; v <= y_max - 1.0 + 1e-9; v += 5.0)
    {
        s << "<line x1=\"" << ml << "\" y1=\"" << Y(v) << "\" x2=\"" << ml + pw << "\" y2=\""
          << Y(v) << "\" stroke=\"#ddd\"/>\n"
          << "<text x=\"" << ml - 8 << "\" y=\"" << Y(v) + 4
          << "\" text-anchor=\"end\">" << fmt_num(v, 3) << "</text>\n";
    }
    const double x_step = (x_max - x_min) >= 20.0 ? 5.0 : ((x_max - x_min) >= 8.0 ? 2.0 : 1.0);
    for (double v = std::ceil(x_min / x_step) * x_step; v <= x_max + 1e-9; v += x_step)
    {
        s << "<line x1=\"" << X(v) << "\" y1=\"" << mt << "\" x2=\"" << X(v) << "\" y2=\""
          << mt + ph << "\" stroke=\"#eee\"/>\n"
          << "<text x=\"" << X(v) << "\" y=\"" << mt + ph + 18
          << "\" text-anchor=\"middle\">" << fmt_num(v, 3) << "</text>\n";
    }
    s << "</g>\n"
      << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n"
      << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 14
      << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">SNR "
         "(dB)</text>\n"
      << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 18 "
      << mt + ph / 2 << ")\">NMSE (dB)</text>\n";

    // curves
    for (std::size_t ci = 0; ci < r.curves.size(); ++ci)
    {
        const auto &c = r.curves[ci];
        const char *col = palette[ci % (sizeof(palette) / sizeof(palette[0]))];
        std::ostringstream pts;
        for (const auto &p : c.points)
            pts << X(p.snr_db) << ',' << Y(p.stat.nmse_db) << ' ';
        s << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << col
          << "\" stroke-width=\"2\"/>\n";
        for (const auto &p : c.points)
        {
            const double lo = p.stat.nmse - p.stat.ci_half, hi = p.stat.nmse + p.stat.ci_half;
            if (lo > 0.0 && hi > lo)
                s << "<line x1=\"" << X(p.snr_db) << "\" y1=\"" << Y(10.0 * std::log10(lo))
                  << "\" x2=\"" << X(p.snr_db) << "\" y2=\"" << Y(10.0 * std::log10(hi))
                  << "\" stroke=\"" << col << "\" stroke-width=\"1\"/>\n";
            s << "<circle cx=\"" << X(p.snr_db) << "\" cy=\"" << Y(p.stat.nmse_db)
              << "\" r=\"3.2\" fill=\"" << col << "\"/>\n";
        }
        // legend row
        const double ly = mt + 10 + 20.0 * double(ci);
        s << "<line x1=\"" << ml + pw + 14 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 40
          << "\" y2=\"" << ly << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n"
          << "<circle cx=\"" << ml + pw + 27 << "\" cy=\"" << ly << "\" r=\"3.2\" fill=\""
          << col << "\"/>\n"
          << "<text x=\"" << ml + pw + 46 << "\" y=\"" << ly + 4
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << c.estimator << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

// ---- commands -------------------------------------------------------------------

struct GenOpts
{
    std::string scenario, kind = "sf", snr = "10", out;
    unsigned q = 2, intervals = 0; // 0: by kind (sf 1, sft 3, spr 4)
    std::uint64_t count = 1000, seed = 1;
    double scale_c = 4.0, interval_s = 0.0; // 0: 5e-5 for temporal kinds
    unsigned workers = 0;
};

void cmd_gen(const GenOpts &o)
{
    const auto profile = mmce::chanmodel::load_profile(o.scenario);
    mmce::datapipe::DatasetManifest m;
    m.kind = mmce::neuralest::net_kind_from_string(o.kind);
    m.q = o.q;
    m.s_or_d = o.intervals ? o.intervals
                           : (m.kind == NetKind::sf ? 1 : (m.kind == NetKind::sft ? 3 : 4));
    m.snr_db = parse_snr_spec(o.snr);
    m.count = o.count;
    m.scale_c = o.scale_c;
    m.seed = o.seed;
    m.interval_s = o.interval_s > 0.0 ? o.interval_s : (m.kind == NetKind::sf ? 0.0 : 5e-5);
    const unsigned workers = o.workers ? o.workers : default_workers();

    const auto resolved = mmce::datapipe::generate_dataset(m, profile, o.out, workers);

    json j;
    j["command"] = "gen";
    j["scenario"] = o.scenario;
    j["profile_hash"] = resolved.profile_hash;
    j["kind"] = o.kind;
    j["q"] = m.q;
    j["s_or_d"] = m.s_or_d;
    j["snr_db"] = m.snr_db;
    j["count"] = m.count;
    j["scale_c"] = m.scale_c;
    j["seed"] = m.seed;
    j["interval_s"] = m.interval_s;
    j["rejected"] = resolved.rejected;
    write_resolved(o.out + "/resolved.json", j);
    std::cout << "gen: wrote " << resolved.count << " samples ("
              << (m.kind == NetKind::spr ? std::to_string(m.s_or_d) + " sub-datasets, " : "")
              << resolved.rejected << " rejected attempts) to " << o.out << '\n';
}

struct TrainOpts
{
    std::string data, net = "sf", lr_schedule, out;
    unsigned epochs = 800, batch = 128;
    std::uint64_t seed = 1;
    double val_frac = 0.1;
};

void cmd_train(const TrainOpts &o)
{
    if (!(o.val_frac > 0.0 && o.val_frac < 1.0))
        throw std::invalid_argument("--val-frac must lie in (0, 1)");
    const auto ds = mmce::datapipe::load_dataset(o.data);
    const auto &m = ds.manifest;

    auto [kind, sd] = parse_net_name(o.net, m.s_or_d);
    if (kind != m.kind)
        throw std::invalid_argument("--net " + o.net + " does not match dataset kind '" +
                                    mmce::neuralest::to_string(m.kind) + "'");
    if (kind == NetKind::spr && sd != m.ceu_position)
        throw std::invalid_argument("--net " + o.net + " does not match dataset CEU position " +
                                    std::to_string(m.ceu_position));
    if (kind == NetKind::sft)
        sd = m.s_or_d;

    auto base = mmce::neuralest::table1_template();
    base.spatial_h = m.cfg.n_rx;
    base.spatial_w = m.cfg.n_tx;
    base.scale_c = m.scale_c;
    const auto spec = mmce::neuralest::build_net(kind, m.q, sd, base);

    mmce::neuralest::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch;
    tc.seed = o.seed;
    if (!o.lr_schedule.empty())
        tc.lr_schedule = parse_lr_schedule(o.lr_schedule);
    else if (o.epochs != 800)
        tc.lr_schedule = {{o.epochs, 1e-4}};

    const auto splits =
        mmce::datapipe::split(ds, {1.0 - o.val_frac, o.val_frac, 0.0}, derive_seed(o.seed, 2001));
    std::cout << "train: " << splits[0].data.count() << " train / " << splits[1].data.count()
              << " val samples, net " << o.net << " q=" << m.q << ", " << tc.epochs
              << " epochs\n";
    auto tn = mmce::neuralest::train(spec, splits[0].data, splits[1].data, tc);
    tn.train_scenario = m.scenario;
    tn.train_profile_hash = m.profile_hash;
    mmce::neuralest::save_model(tn, o.out);

    json sched = json::array();
    for (const auto &[span, lr] : tc.lr_schedule)
        sched.push_back({span, lr});
    json j;
    j["command"] = "train";
    j["data"] = o.data;
    j["net"] = o.net;
    j["epochs"] = tc.epochs;
    j["lr_schedule"] = sched;
    j["batch"] = tc.batch_size;
    j["seed"] = tc.seed;
    j["val_frac"] = o.val_frac;
    j["scenario"] = m.scenario;
    j["profile_hash"] = m.profile_hash;
    write_resolved(o.out + "/resolved.json", j);
    std::cout << "train: final val loss " << tn.history.val_loss.back() << ", best "
              << tn.history.best_val_loss << " (epoch " << tn.history.best_epoch
              << "), model saved to " << o.out << '\n';
}

// Shared estimator-construction options for sweep/eval.
struct BenchOpts
{
    std::string estimators = "ls";
    std::vector<std::string> models;
    unsigned q = 2, s = 1;
    double interval_s = 0.0;
    std::uint64_t n_mc = 2000, seed = 1;
    unsigned cov_mc = 20000;
    std::string cov_cache;
    unsigned workers = 0;
};

struct EstimatorSet
{
    std::vector<std::shared_ptr<mmce::evalbench::Estimator>> ests;
    std::vector<std::shared_ptr<TrainedNet>> keep;
};

mmce::classical::CovarianceModel get_covariance(const ScenarioProfile &profile,
                                                const SystemConfig &cfg, const BenchOpts &o,
                                                unsigned workers)
{
    const std::uint64_t cov_seed = derive_seed(o.seed, 1001);
    std::string path;
    if (!o.cov_cache.empty())
    {
        path = o.cov_cache + "/" +
               mmce::classical::covariance_cache_name(mmce::chanmodel::profile_hash(profile),
                                                      o.q, o.s, o.cov_mc, cov_seed);
        if (std::filesystem::exists(path))
        {
            auto cov = mmce::classical::load_covariance(path);
            std::cout << "covariance: loaded cache " << path << '\n';
            return cov;
        }
    }
    std::cout << "covariance: averaging " << o.cov_mc << " realizations for " << profile.name
              << " (q=" << o.q << ", s=" << o.s << ")\n";
    auto cov = mmce::classical::ensemble_covariance(profile, cfg, o.q, o.s, o.cov_mc, cov_seed,
                                                    o.interval_s, 1.0, workers);
    if (!path.empty())
    {
        std::filesystem::create_directories(o.cov_cache);
        mmce::classical::save_covariance(cov, path);
        std::cout << "covariance: cached to " << path << '\n';
    }
    return cov;
}

EstimatorSet build_estimators(const BenchOpts &o, const ScenarioProfile &profile,
                              const SystemConfig &cfg, unsigned workers)
{
    const auto models = parse_models(o.models);
    EstimatorSet set;
    for (const auto &name : CLI::detail::split(o.estimators, ','))
    {
        if (name == "ls")
            set.ests.push_back(std::make_shared<mmce::evalbench::LsEstimator>());
        else if (name == "mmse-ideal")
            set.ests.push_back(std::make_shared<mmce::evalbench::IdealMmseEstimator>(
                get_covariance(profile, cfg, o, workers), cfg, profile.name));
        else if (name == "mmse-sample")
            set.ests.push_back(std::make_shared<mmce::evalbench::SampleMmseEstimator>(cfg));
        else if (name == "sf-cnn" || name == "sft-cnn")
        {
            const auto it = models.find(name);
            if (it == models.end())
                throw std::invalid_argument("estimator '" + name + "' needs --model " + name +
                                            "=<model dir>");
            auto tn = std::make_shared<TrainedNet>(mmce::neuralest::load_model(it->second));
            set.keep.push_back(tn);
            set.ests.push_back(std::make_shared<mmce::evalbench::CnnEstimator>(
                tn.get(), tn->train_scenario, tn->train_profile_hash));
        }
        else
            throw std::invalid_argument("unknown estimator '" + name +
                                        "' (use ls, mmse-ideal, mmse-sample, sf-cnn, sft-cnn)");
    }
    if (set.ests.empty())
        throw std::invalid_argument("no estimators selected");
    return set;
}

json bench_json(const BenchOpts &o, const std::string &snr)
{
    json j;
    j["estimators"] = o.estimators;
    j["models"] = o.models;
    j["snr"] = snr;
    j["q"] = o.q;
    j["s"] = o.s;
    j["interval_s"] = o.interval_s;
    j["n_mc"] = o.n_mc;
    j["seed"] = o.seed;
    j["cov_mc"] = o.cov_mc;
    return j;
}

struct SweepOpts
{
    std::string scenario, snr = "0:5:30", out;
    BenchOpts bench;
};

void cmd_sweep(const SweepOpts &o)
{
    const auto profile = mmce::chanmodel::load_profile(o.scenario);
    const SystemConfig cfg;
    const unsigned workers = o.bench.workers ? o.bench.workers : default_workers();
    const auto snrs = parse_snr_spec(o.snr);
    auto set = build_estimators(o.bench, profile, cfg, workers);

    mmce::evalbench::SweepConfig sc;
    sc.cfg = cfg;
    sc.q = o.bench.q;
    sc.s = o.bench.s;
    sc.interval_s = o.bench.interval_s;
    sc.n_mc = o.bench.n_mc;
    sc.seed = o.bench.seed;
    sc.n_workers = workers;
    const auto report = mmce::evalbench::snr_sweep(set.ests, snrs, profile, sc);
    mmce::evalbench::save_report(report, o.out);

    json j = bench_json(o.bench, o.snr);
    j["command"] = "sweep";
    j["scenario"] = o.scenario;
    j["out"] = o.out;
    write_resolved(o.out + ".resolved.json", j);
    print_report(report);
    std::cout << "sweep: report written to " << o.out << '\n';
}

struct EvalOpts
{
    std::string experiment, scenario_a, scenario_b, scenario, schedule, snr = "0:5:30", out;
    BenchOpts bench;
};

void cmd_eval(const EvalOpts &o)
{
    const SystemConfig cfg;
    const unsigned workers = o.bench.workers ? o.bench.workers : default_workers();
    const auto snrs = parse_snr_spec(o.snr);

    EvalReport report;
    json j = bench_json(o.bench, o.snr);
    j["command"] = "eval";
    j["experiment"] = o.experiment;

    if (o.experiment == "robustness")
    {
        if (o.scenario_a.empty() || o.scenario_b.empty())
            throw std::invalid_argument("robustness needs --scenario-a and --scenario-b");
        const auto pa = mmce::chanmodel::load_profile(o.scenario_a);
        const auto pb = mmce::chanmodel::load_profile(o.scenario_b);
        auto set = build_estimators(o.bench, pa, cfg, workers);
        mmce::evalbench::SweepConfig sc;
        sc.cfg = cfg;
        sc.q = o.bench.q;
        sc.s = o.bench.s;
        sc.interval_s = o.bench.interval_s;
        sc.n_mc = o.bench.n_mc;
        sc.seed = o.bench.seed;
        sc.n_workers = workers;
        report = mmce::evalbench::robustness_eval(set.ests, pa, pb, snrs, sc);
        j["scenario_a"] = o.scenario_a;
        j["scenario_b"] = o.scenario_b;
    }
    else if (o.experiment == "overhead")
    {
        if (o.scenario.empty())
            throw std::invalid_argument("overhead needs --scenario");
        const auto profile = mmce::chanmodel::load_profile(o.scenario);
        const auto models = parse_models(o.bench.models);
        std::vector<std::shared_ptr<TrainedNet>> keep;
        std::vector<const TrainedNet *> nets;
        for (unsigned d = 1;; ++d)
        {
            const auto it = models.find("spr-" + std::to_string(d));
            if (it == models.end())
                break;
            keep.push_back(
                std::make_shared<TrainedNet>(mmce::neuralest::load_model(it->second)));
            nets.push_back(keep.back().get());
        }
        if (nets.empty())
            throw std::invalid_argument("overhead needs --model spr-1=<dir> [spr-2=...]");
        const TrainedNet *baseline = nullptr;
        if (const auto it = models.find("baseline"); it != models.end())
        {
            keep.push_back(
                std::make_shared<TrainedNet>(mmce::neuralest::load_model(it->second)));
            baseline = keep.back().get();
        }
        PilotSchedule sched;
        if (!o.schedule.empty())
            sched = parse_pilot_schedule(o.schedule, cfg);
        else
            sched = mmce::datapipe::default_schedule(NetKind::spr, cfg,
                                                     static_cast<unsigned>(nets.size()));

        mmce::evalbench::SweepConfig sc;
        sc.cfg = cfg;
        sc.q = o.bench.q;
        sc.s = static_cast<unsigned>(nets.size());
        sc.interval_s = o.bench.interval_s > 0.0 ? o.bench.interval_s : 5e-5;
        sc.n_mc = o.bench.n_mc;
        sc.seed = o.bench.seed;
        sc.n_workers = workers;
        report = mmce::evalbench::overhead_experiment(nets, baseline, sched, profile, snrs, sc);
        j["scenario"] = o.scenario;
        j["schedule"] = o.schedule.empty() ? "default" : o.schedule;
    }
    else
        throw std::invalid_argument("unknown --experiment '" + o.experiment +
                                    "' (use robustness or overhead)");

    mmce::evalbench::save_report(report, o.out);
    j["out"] = o.out;
    write_resolved(o.out + ".resolved.json", j);
    print_report(report);
    std::cout << "eval: report written to " << o.out << '\n';
}

struct FlopsOpts
{
    std::vector<std::string> nets{"sf"};
    unsigned q = 2, s = 1;
    std::string out;
};

void cmd_flops(const FlopsOpts &o)
{
    const SystemConfig cfg;
    std::vector<mmce::neuralest::NetSpec> specs;
    for (const auto &net : o.nets)
    {
        auto [kind, sd] = parse_net_name(net, o.s);
        auto base = mmce::neuralest::table1_template();
        base.spatial_h = cfg.n_rx;
        base.spatial_w = cfg.n_tx;
        specs.push_back(mmce::neuralest::build_net(kind, o.q, sd, base));
    }
    const auto report = mmce::evalbench::complexity_report(o.q, o.s, cfg, specs);
    print_report(report);
    if (!o.out.empty())
    {
        mmce::evalbench::save_report(report, o.out);
        json j;
        j["command"] = "flops";
        j["nets"] = o.nets;
        j["q"] = o.q;
        j["s"] = o.s;
        j["out"] = o.out;
        write_resolved(o.out + ".resolved.json", j);
        std::cout << "flops: report written to " << o.out << '\n';
    }
}

struct PlotOpts
{
    std::string report, out;
};

void cmd_plot(const PlotOpts &o)
{
    const auto report = mmce::evalbench::load_report(o.report);
    if (report.curves.empty())
        throw std::invalid_argument("report '" + o.report + "' has no curves to plot");
    const auto svg = render_svg(report);
    std::ofstream os(o.out);
    if (!os)
        throw mmce::integrity_error("cannot write '" + o.out + "'");
    os << svg;
    os.close();
    if (!os)
        throw mmce::integrity_error("write to '" + o.out + "' failed");
    json j;
    j["command"] = "plot";
    j["report"] = o.report;
    j["out"] = o.out;
    write_resolved(o.out + ".resolved.json", j);
    std::cout << "plot: " << report.curves.size() << " curve(s) written to " << o.out << '\n';
}

void add_bench_flags(CLI::App *sub, BenchOpts &b)
{
    sub->add_option("--estimators", b.estimators,
                    "comma list: ls, mmse-ideal, mmse-sample, sf-cnn, sft-cnn");
    sub->add_option("--model", b.models, "model artifact, name=path (repeatable)");
    sub->add_option("--q", b.q, "window subcarriers");
    sub->add_option("--s", b.s, "pilot intervals");
    sub->add_option("--interval-s", b.interval_s, "interval spacing in seconds");
    sub->add_option("--n-mc", b.n_mc, "Monte-Carlo realizations per SNR point");
    sub->add_option("--seed", b.seed, "master seed");
    sub->add_option("--cov-mc", b.cov_mc, "ensemble size for mmse-ideal covariance");
    sub->add_option("--cov-cache", b.cov_cache, "directory for covariance caches");
    sub->add_option("--workers", b.workers, "worker threads (default: logical cores)");
}

} // namespace

int main(int argc, char **argv)
{
    mmce::ensure_fast_blas(argv);

    CLI::App app{"mmce: mmWave massive MIMO-OFDM channel estimation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mmce::version));
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file (flags override file values)");

    GenOpts gen;
    auto *sub_gen = app.add_subcommand("gen", "generate a dataset");
    sub_gen->add_option("--scenario", gen.scenario, "scenario profile JSON")->required();
    sub_gen->add_option("--kind", gen.kind, "dataset kind: sf | sft | spr")
        ->check(CLI::IsMember({"sf", "sft", "spr"}));
    sub_gen->add_option("--q", gen.q, "subcarriers per sample window");
    sub_gen->add_option("--intervals", gen.intervals,
                        "pilot intervals: S (sft) or CEU depth D (spr); default 1/3/4 by kind");
    sub_gen->add_option("--snr-db", gen.snr, "training SNR: value, comma list, or start:step:stop");
    sub_gen->add_option("--count", gen.count, "sample count");
    sub_gen->add_option("--seed", gen.seed, "master seed");
    sub_gen->add_option("--scale-c", gen.scale_c, "target scaling constant c");
    sub_gen->add_option("--interval-s", gen.interval_s,
                        "interval spacing in seconds (default 5e-5 for sft/spr)");
    sub_gen->add_option("--workers", gen.workers, "worker threads (default: logical cores)");
    sub_gen->add_option("--out", gen.out, "output dataset directory")->required();
    sub_gen->callback([&]() { cmd_gen(gen); });

    TrainOpts train;
    auto *sub_train = app.add_subcommand("train", "train a CNN estimator");
    sub_train->add_option("--data", train.data, "dataset directory")->required();
    sub_train->add_option("--net", train.net, "network: sf | sft | spr-<d>");
    sub_train->add_option("--epochs", train.epochs, "training epochs");
    sub_train->add_option("--lr-schedule", train.lr_schedule,
                          "span:lr pairs, e.g. 200:1e-4,400:5e-5,200:1e-5");
    sub_train->add_option("--batch", train.batch, "batch size");
    sub_train->add_option("--seed", train.seed, "training seed");
    sub_train->add_option("--val-frac", train.val_frac, "validation fraction of the dataset");
    sub_train->add_option("--out", train.out, "model output directory")->required();
    sub_train->callback([&]() { cmd_train(train); });

    SweepOpts sweep;
    auto *sub_sweep = app.add_subcommand("sweep", "NMSE vs SNR benchmark");
    sub_sweep->add_option("--scenario", sweep.scenario, "scenario profile JSON")->required();
    sub_sweep->add_option("--snr", sweep.snr, "SNR points: value, comma list, or start:step:stop");
    add_bench_flags(sub_sweep, sweep.bench);
    sub_sweep->add_option("--out", sweep.out, "report JSON path")->required();
    sub_sweep->callback([&]() { cmd_sweep(sweep); });

    EvalOpts eval;
    auto *sub_eval = app.add_subcommand("eval", "run a named experiment");
    sub_eval->add_option("--experiment", eval.experiment, "robustness | overhead")->required();
    sub_eval->add_option("--scenario-a", eval.scenario_a, "training/matched profile JSON");
    sub_eval->add_option("--scenario-b", eval.scenario_b, "mismatched profile JSON");
    sub_eval->add_option("--scenario", eval.scenario, "test profile JSON (overhead)");
    sub_eval->add_option("--schedule", eval.schedule,
                         "pilot schedule, e.g. full,16x4,16x4,16x4 (overhead)");
    sub_eval->add_option("--snr", eval.snr, "SNR points: value, comma list, or start:step:stop");
    add_bench_flags(sub_eval, eval.bench);
    sub_eval->add_option("--out", eval.out, "report JSON path")->required();
    sub_eval->callback([&]() { cmd_eval(eval); });

    FlopsOpts flops;
    auto *sub_flops = app.add_subcommand("flops", "print estimator FLOP accounts");
    sub_flops->add_option("--net", flops.nets, "network: sf | sft | spr-<d> (repeatable)");
    sub_flops->add_option("--q", flops.q, "window subcarriers");
    sub_flops->add_option("--s", flops.s, "pilot intervals");
    sub_flops->add_option("--out", flops.out, "optional report JSON path");
    sub_flops->callback([&]() { cmd_flops(flops); });

    PlotOpts plot;
    auto *sub_plot = app.add_subcommand("plot", "render a report as an SVG figure");
    sub_plot->add_option("report", plot.report, "report JSON path")->required();
    sub_plot->add_option("--out", plot.out, "SVG output path")->required();
    sub_plot->callback([&]() { cmd_plot(plot); });

    try
    {
        app.parse(argc, argv);
        return 0;
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    catch (const mmce::integrity_error &e)
    {
        std::cerr << "integrity error: " << e.what() << '\n';
        return 3;
    }
    catch (const mmce::numerical_error &e)
    {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    }
    catch (const mmce::protocol_error &e)
    {
        std::cerr << "protocol error: " << e.what() << '\n';
        return 3;
    }
    catch (const std::invalid_argument &e)
    {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
