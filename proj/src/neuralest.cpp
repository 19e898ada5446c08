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

#include "mmce/neuralest.hpp"
#include "mmce/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

namespace mmce::neuralest
{

using json = nlohmann::ordered_json;

std::string to_string(NetKind kind)
{
    switch (kind)
    {
        case NetKind::sf:
            return "sf";
        case NetKind::sft:
            return "sft";
        case NetKind::spr:
            return "spr";
    }
    throw std::invalid_argument("to_string: unknown NetKind");
}

NetKind net_kind_from_string(const std::string &s)
{
    if (s == "sf")
        return NetKind::sf;
    if (s == "sft")
        return NetKind::sft;
    if (s == "spr")
        return NetKind::spr;
    throw std::invalid_argument("net_kind_from_string: unknown kind '" + s + "'");
}

void NetSpec::validate() const
{
    require(!layers.empty(), "NetSpec: needs at least one layer");
    require(q >= 1 && s_or_d >= 1, "NetSpec: q and s_or_d must be positive");
    require(input_maps >= 2 && input_maps % 2 == 0, "NetSpec: input_maps must be a positive even count");
    require(output_maps >= 2 && output_maps % 2 == 0, "NetSpec: output_maps must be a positive even count");
    require(spatial_h >= 1 && spatial_w >= 1, "NetSpec: spatial shape must be positive");
    require(scale_c > 0.0, "NetSpec: scale_c must be positive");
    require(layers.front().in_maps == input_maps, "NetSpec: first layer in_maps != input_maps");
    require(layers.back().out_maps == output_maps, "NetSpec: last layer out_maps != output_maps");
    for (std::size_t l = 0; l < layers.size(); ++l)
    {
        const auto &ls = layers[l];
        require(ls.filter_side >= 1 && ls.filter_side % 2 == 1,
                "NetSpec: filter sides must be odd (same-padding)");
        require(ls.in_maps >= 1 && ls.out_maps >= 1, "NetSpec: layer map counts must be positive");
        if (l + 1 < layers.size())
        {
            require(ls.out_maps == layers[l + 1].in_maps, "NetSpec: layer map chain broken");
            require(ls.activation == nn::Act::relu, "NetSpec: hidden activations must be relu");
        }
        else
        {
            require(ls.activation == nn::Act::tanh_act, "NetSpec: final activation must be tanh");
        }
    }
}

void TrainConfig::validate() const
{
    require(epochs >= 1, "TrainConfig: epochs must be positive");
    require(batch_size >= 1, "TrainConfig: batch_size must be positive");
    require(optimizer == "adam", "TrainConfig: only the adam optimizer is supported");
    require(!lr_schedule.empty(), "TrainConfig: lr_schedule must not be empty");
    unsigned covered = 0;
    for (const auto &[span, lr] : lr_schedule)
    {
        require(span >= 1, "TrainConfig: lr spans must be positive");
        require(lr > 0.0 && std::isfinite(lr), "TrainConfig: learning rates must be positive");
        covered += span;
    }
    require(covered == epochs, "TrainConfig: lr spans must partition [1, epochs]");
}

double TrainConfig::lr_at(unsigned epoch) const
{
    require(epoch >= 1 && epoch <= epochs, "TrainConfig: epoch out of range");
    unsigned bound = 0;
    for (const auto &[span, lr] : lr_schedule)
    {
        bound += span;
        if (epoch <= bound)
            return lr;
    }
    return lr_schedule.back().second;
}

void SampleSet::validate() const
{
    require(h >= 1 && w >= 1 && in_planes >= 1 && tgt_planes >= 1, "SampleSet: empty shape");
    require(scale_c > 0.0, "SampleSet: scale_c must be positive");
    require(inputs.n_rows == arma::uword(h) * w * in_planes, "SampleSet: input feature rows mismatch");
    require(targets.n_rows == arma::uword(h) * w * tgt_planes,
            "SampleSet: target feature rows mismatch");
    require(inputs.n_cols == targets.n_cols, "SampleSet: input/target sample counts differ");
    require(inputs.n_cols >= 1, "SampleSet: no samples");
}

NetSpec table1_template()
{
    NetSpec spec;
    spec.kind = NetKind::sf;
    spec.q = 2;
    spec.s_or_d = 1;
    spec.input_maps = 4;
    spec.output_maps = 4;
    spec.spatial_h = 16;
    spec.spatial_w = 32;
    spec.scale_c = 2.0;
    spec.layers.push_back({3, 4, 64, nn::Act::relu, true});
    for (int l = 0; l < 8; ++l)
        spec.layers.push_back({3, 64, 64, nn::Act::relu, true});
    spec.layers.push_back({3, 64, 4, nn::Act::tanh_act, false});
    return spec;
}

NetSpec build_net(NetKind kind, unsigned q, unsigned s_or_d, const NetSpec &base)
{
    require(q >= 1, "build_net: q must be positive");
    require(s_or_d >= 1, "build_net: s_or_d must be positive");
    require(!base.layers.empty(), "build_net: base template has no layers");

    NetSpec spec = base;
    spec.kind = kind;
    spec.q = q;
    spec.s_or_d = kind == NetKind::sf ? 1 : s_or_d;
    const unsigned n_intervals = kind == NetKind::sf ? 1 : s_or_d;
    spec.input_maps = 2 * q * n_intervals;
    spec.output_maps = 2 * q;
    spec.layers.front().in_maps = spec.input_maps;
    spec.layers.back().out_maps = spec.output_maps;
    spec.validate();
    return spec;
}

arma::fcube stack_inputs(const std::vector<arma::cx_mat> &r_list)
{
    require(!r_list.empty(), "stack_inputs: empty list");
    const arma::uword h = r_list.front().n_rows, w = r_list.front().n_cols;
    arma::fcube t(h, w, 2 * r_list.size());
    for (std::size_t m = 0; m < r_list.size(); ++m)
    {
        require(r_list[m].n_rows == h && r_list[m].n_cols == w, "stack_inputs: shape mismatch");
        t.slice(2 * m) = arma::conv_to<arma::fmat>::from(arma::real(r_list[m]));
        t.slice(2 * m + 1) = arma::conv_to<arma::fmat>::from(arma::imag(r_list[m]));
    }
    return t;
}

std::vector<arma::cx_mat> unstack(const arma::fcube &stack)
{
    require(stack.n_slices >= 2 && stack.n_slices % 2 == 0,
            "unstack: slice count must be a positive even number");
    std::vector<arma::cx_mat> out(stack.n_slices / 2);
    for (std::size_t m = 0; m < out.size(); ++m)
        out[m] = arma::cx_mat(arma::conv_to<arma::mat>::from(stack.slice(2 * m)),
                              arma::conv_to<arma::mat>::from(stack.slice(2 * m + 1)));
    return out;
}

// Builds the runtime network for a spec (the engine supports 3x3 kernels).
static nn::Network<float> build_network(const NetSpec &spec, std::uint64_t seed)
{
    spec.validate();
    std::vector<nn::BlockSpec> blocks;
    for (const auto &ls : spec.layers)
    {
        require(ls.filter_side == 3, "build_network: engine supports 3x3 kernels only");
        blocks.push_back({ls.out_maps, ls.activation, ls.batch_norm});
    }
    return nn::Network<float>::make(spec.input_maps, spec.spatial_h, spec.spatial_w, blocks, seed);
}

// ---- batch assembly ---------------------------------------------------------

static void fill_batch(const arma::fmat &cols, const std::vector<arma::uword> &idx,
                       std::size_t lo, std::size_t hi, unsigned h, unsigned w, unsigned planes,
                       nn::PlaneBatch<float> &batch)
{
    const arma::uword plane_sz = arma::uword(h) * w;
    for (std::size_t i = lo; i < hi; ++i)
    {
        const float *col = cols.colptr(idx[i]);
        for (unsigned p = 0; p < planes; ++p)
            batch.set_plane(static_cast<unsigned>(i - lo), p, col + p * plane_sz);
    }
}

static double eval_loss(nn::Network<float> &net, const SampleSet &data, unsigned batch_size)
{
    const arma::uword n = data.count();
    std::vector<arma::uword> idx(n);
    for (arma::uword i = 0; i < n; ++i)
        idx[i] = i;
    double sum = 0.0;
    for (arma::uword lo = 0; lo < n; lo += batch_size)
    {
        const arma::uword hi = std::min(n, lo + batch_size);
        auto in = nn::PlaneBatch<float>::zeros(static_cast<unsigned>(hi - lo), data.h, data.w,
                                               data.in_planes);
        auto tgt = nn::PlaneBatch<float>::zeros(static_cast<unsigned>(hi - lo), data.h, data.w,
                                                data.tgt_planes);
        fill_batch(data.inputs, idx, lo, hi, data.h, data.w, data.in_planes, in);
        fill_batch(data.targets, idx, lo, hi, data.h, data.w, data.tgt_planes, tgt);
        auto out = net.forward(in, false);
        const arma::fmat diff = out.data - tgt.data;
        sum += arma::accu(arma::square(arma::conv_to<arma::mat>::from(diff)));
    }
    return sum / static_cast<double>(n);
}

TrainedNet train(const NetSpec &spec, const SampleSet &train_data, const SampleSet &val_data,
                 const TrainConfig &tc)
{
    spec.validate();
    tc.validate();
    train_data.validate();
    val_data.validate();
    for (const SampleSet *ds : {&train_data, &val_data})
    {
        require(ds->h == spec.spatial_h && ds->w == spec.spatial_w,
                "train: dataset spatial shape does not match spec");
        require(ds->in_planes == spec.input_maps, "train: dataset input planes do not match spec");
        require(ds->tgt_planes == spec.output_maps,
                "train: dataset target planes do not match spec");
        require(std::abs(ds->scale_c - spec.scale_c) <= 1e-12,
                "train: dataset scale_c does not match spec");
    }

    nn::Network<float> net = build_network(spec, tc.seed);

    TrainHistory hist;
    hist.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<nn::ConvBlock<float>> best_blocks = net.blocks;
    unsigned best_epoch = 0;

    const arma::uword n = train_data.count();
    std::vector<arma::uword> idx(n);
    for (arma::uword i = 0; i < n; ++i)
        idx[i] = i;

    for (unsigned epoch = 1; epoch <= tc.epochs; ++epoch)
    {
        const double lr = tc.lr_at(epoch);

        // Deterministic per-epoch Fisher-Yates shuffle.
        Rng shuffle_rng(derive_seed(tc.seed, 1000000ULL + epoch));
        for (arma::uword i = n; i > 1; --i)
        {
            const arma::uword j = shuffle_rng.next_u64() % i;
            std::swap(idx[i - 1], idx[j]);
        }

        double loss_sum = 0.0;
        for (arma::uword lo = 0; lo < n; lo += tc.batch_size)
        {
            const arma::uword hi = std::min(n, lo + tc.batch_size);
            const unsigned nb = static_cast<unsigned>(hi - lo);
            auto in = nn::PlaneBatch<float>::zeros(nb, spec.spatial_h, spec.spatial_w,
                                                   spec.input_maps);
            auto tgt = nn::PlaneBatch<float>::zeros(nb, spec.spatial_h, spec.spatial_w,
                                                    spec.output_maps);
            fill_batch(train_data.inputs, idx, lo, hi, spec.spatial_h, spec.spatial_w,
                       spec.input_maps, in);
            fill_batch(train_data.targets, idx, lo, hi, spec.spatial_h, spec.spatial_w,
                       spec.output_maps, tgt);

            auto out = net.forward(in, true);
            nn::PlaneBatch<float> dout = out;
            dout.data -= tgt.data;
            loss_sum += arma::accu(arma::square(arma::conv_to<arma::mat>::from(dout.data)));
            dout.data *= 2.0f / static_cast<float>(nb);
            net.backward(dout);
            net.adam_step(static_cast<float>(lr));
        }
        const double train_loss = loss_sum / static_cast<double>(n);
        const double val_loss = eval_loss(net, val_data, tc.batch_size);

        hist.train_loss.push_back(train_loss);
        hist.val_loss.push_back(val_loss);
        hist.lr.push_back(lr);

        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw numerical_error("train: diverged at epoch " + std::to_string(epoch) +
                                  " (train loss " + std::to_string(train_loss) + ", val loss " +
                                  std::to_string(val_loss) + ")");

        if (val_loss < hist.best_val_loss)
        {
            hist.best_val_loss = val_loss;
            best_epoch = epoch;
            best_blocks = net.blocks;
        }
    }
    hist.best_epoch = best_epoch;

    net.clear_cache();
    TrainedNet tn{spec, net, net, hist, tc};
    tn.best.blocks = std::move(best_blocks);
    return tn;
}

arma::fmat infer_planes(const TrainedNet &tn, const arma::fmat &input_cols, unsigned batch_size)
{
    tn.spec.validate();
    require(batch_size >= 1, "infer_planes: batch_size must be positive");
    const unsigned h = tn.spec.spatial_h, w = tn.spec.spatial_w;
    require(input_cols.n_rows == arma::uword(h) * w * tn.spec.input_maps,
            "infer_planes: feature rows do not match spec");

    // Inference runs the best-validation checkpoint. forward() mutates BN
    // running stats only in training mode; the local copy keeps the API const.
    nn::Network<float> net = tn.best;

    const arma::uword n = input_cols.n_cols;
    const arma::uword plane_sz = arma::uword(h) * w;
    arma::fmat out_cols(plane_sz * tn.spec.output_maps, n);
    std::vector<arma::uword> idx(n);
    for (arma::uword i = 0; i < n; ++i)
        idx[i] = i;
    std::vector<float> plane(plane_sz);
    for (arma::uword lo = 0; lo < n; lo += batch_size)
    {
        const arma::uword hi = std::min(n, lo + batch_size);
        auto in = nn::PlaneBatch<float>::zeros(static_cast<unsigned>(hi - lo), h, w,
                                               tn.spec.input_maps);
        fill_batch(input_cols, idx, lo, hi, h, w, tn.spec.input_maps, in);
        auto out = net.forward(in, false);
        for (arma::uword i = lo; i < hi; ++i)
            for (unsigned p = 0; p < tn.spec.output_maps; ++p)
            {
                out.get_plane(static_cast<unsigned>(i - lo), p, plane.data());
                std::memcpy(out_cols.colptr(i) + p * plane_sz, plane.data(),
                            plane_sz * sizeof(float));
            }
    }
    return out_cols;
}

std::vector<arma::cx_mat> estimate(const TrainedNet &tn, const arma::fcube &r_stack)
{
    tn.spec.validate();
    require(r_stack.n_rows == tn.spec.spatial_h && r_stack.n_cols == tn.spec.spatial_w &&
                r_stack.n_slices == tn.spec.input_maps,
            "estimate: input stack shape does not match spec");

    const unsigned h = tn.spec.spatial_h, w = tn.spec.spatial_w;
    const arma::uword plane_sz = arma::uword(h) * w;
    arma::fmat col(plane_sz * tn.spec.input_maps, 1);
    for (unsigned p = 0; p < tn.spec.input_maps; ++p)
        for (unsigned y = 0; y < h; ++y)
            for (unsigned x = 0; x < w; ++x)
                col(p * plane_sz + arma::uword(y) * w + x, 0) = r_stack(y, x, p);

    const arma::fmat out = infer_planes(tn, col, 1);

    std::vector<arma::cx_mat> est(tn.spec.output_maps / 2);
    for (std::size_t m = 0; m < est.size(); ++m)
    {
        arma::mat re(h, w), im(h, w);
        for (unsigned y = 0; y < h; ++y)
            for (unsigned x = 0; x < w; ++x)
            {
                re(y, x) = out((2 * m) * plane_sz + arma::uword(y) * w + x, 0);
                im(y, x) = out((2 * m + 1) * plane_sz + arma::uword(y) * w + x, 0);
            }
        est[m] = tn.spec.scale_c * arma::cx_mat(re, im);
    }
    return est;
}

double mse_loss(const std::vector<std::vector<arma::cx_mat>> &h_true,
                const std::vector<std::vector<arma::cx_mat>> &h_est, double c)
{
    require(c > 0.0, "mse_loss: c must be positive");
    require(!h_true.empty() && h_true.size() == h_est.size(), "mse_loss: batch size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < h_true.size(); ++i)
    {
        require(h_true[i].size() == h_est[i].size(), "mse_loss: per-sample matrix count mismatch");
        for (std::size_t m = 0; m < h_true[i].size(); ++m)
        {
            require(arma::size(h_true[i][m]) == arma::size(h_est[i][m]),
                    "mse_loss: matrix shape mismatch");
            sum += std::pow(arma::norm(h_true[i][m] - h_est[i][m], "fro"), 2);
        }
    }
    return sum / (static_cast<double>(h_true.size()) * c * c);
}

std::vector<std::vector<arma::cx_mat>> sprcnn_run_ceu(const std::vector<const TrainedNet *> &nets,
                                                      const arma::field<arma::cx_mat> &pilots,
                                                      const PilotSchedule &schedule,
                                                      const SystemConfig &cfg, CeuCache &cache)
{
    const std::size_t d_total = nets.size();
    if (d_total == 0 || schedule.per_interval.size() != d_total)
        throw protocol_error("sprcnn_run_ceu: schedule length does not match network count");
    if (pilots.n_cols != d_total)
        throw protocol_error("sprcnn_run_ceu: pilot grid interval count does not match networks");
    if (cache.depth() != 0)
        throw protocol_error("sprcnn_run_ceu: cache must be empty at a CEU boundary");
    schedule.validate();

    const unsigned q = static_cast<unsigned>(pilots.n_rows);
    // First interval must carry full pilots (the protocol's anchor measurement).
    if (schedule.per_interval.front().m_tx < cfg.n_tx ||
        schedule.per_interval.front().m_rx < cfg.n_rx)
        throw protocol_error("sprcnn_run_ceu: first interval must use full pilots");

    std::vector<std::vector<arma::cx_mat>> estimates(d_total);
    for (std::size_t d = 0; d < d_total; ++d)
    {
        const TrainedNet *tn = nets[d];
        require(tn != nullptr, "sprcnn_run_ceu: null network");
        if (tn->spec.q != q)
            throw protocol_error("sprcnn_run_ceu: network q does not match pilot grid");
        if (tn->spec.input_maps != 2 * q * (d + 1))
            throw protocol_error("sprcnn_run_ceu: network " + std::to_string(d + 1) +
                                 " input maps do not match its CEU position");

        const auto &pc = schedule.per_interval[d];
        std::vector<arma::cx_mat> te_stack(q);
        for (unsigned k = 0; k < q; ++k)
            te_stack[k] = pilotfront::tentative_estimate(pilots(k, d), pc, cfg);

        std::vector<arma::cx_mat> net_in;
        for (const auto &past : cache.stored)
            net_in.insert(net_in.end(), past.begin(), past.end());
        net_in.insert(net_in.end(), te_stack.begin(), te_stack.end());

        estimates[d] = estimate(*tn, stack_inputs(net_in));

        if (d + 1 < d_total)
            cache.stored.push_back(std::move(te_stack));
    }
    cache.clear();
    return estimates;
}

std::uint64_t flops_cnn(const NetSpec &spec)
{
    spec.validate();
    std::uint64_t total = 0;
    for (const auto &ls : spec.layers)
        total += std::uint64_t(spec.spatial_h) * spec.spatial_w * ls.filter_side * ls.filter_side *
                 ls.in_maps * ls.out_maps;
    return total;
}

// ---- model artifacts --------------------------------------------------------

static json netspec_to_json(const NetSpec &spec)
{
    json j;
    j["schema"] = "netspec/1";
    j["kind"] = to_string(spec.kind);
    j["q"] = spec.q;
    j["s_or_d"] = spec.s_or_d;
    j["input_maps"] = spec.input_maps;
    j["output_maps"] = spec.output_maps;
    j["spatial_shape"] = {spec.spatial_h, spec.spatial_w};
    j["scale_c"] = spec.scale_c;
    j["layers"] = json::array();
    for (const auto &ls : spec.layers)
        j["layers"].push_back({{"filter_side", ls.filter_side},
                               {"in_maps", ls.in_maps},
                               {"out_maps", ls.out_maps},
                               {"activation", ls.activation == nn::Act::relu ? "relu" : "tanh"},
                               {"batch_norm", ls.batch_norm}});
    return j;
}

static NetSpec netspec_from_json(const json &j)
{
    NetSpec spec;
    spec.kind = net_kind_from_string(j.at("kind").get<std::string>());
    spec.q = j.at("q").get<unsigned>();
    spec.s_or_d = j.at("s_or_d").get<unsigned>();
    spec.input_maps = j.at("input_maps").get<unsigned>();
    spec.output_maps = j.at("output_maps").get<unsigned>();
    spec.spatial_h = j.at("spatial_shape").at(0).get<unsigned>();
    spec.spatial_w = j.at("spatial_shape").at(1).get<unsigned>();
    spec.scale_c = j.at("scale_c").get<double>();
    for (const auto &lj : j.at("layers"))
    {
        LayerSpec ls;
        ls.filter_side = lj.at("filter_side").get<unsigned>();
        ls.in_maps = lj.at("in_maps").get<unsigned>();
        ls.out_maps = lj.at("out_maps").get<unsigned>();
        ls.activation = lj.at("activation").get<std::string>() == "tanh" ? nn::Act::tanh_act
                                                                         : nn::Act::relu;
        ls.batch_norm = lj.at("batch_norm").get<bool>();
        spec.layers.push_back(ls);
    }
    spec.validate();
    return spec;
}

static const char wts_magic[8] = {'M', 'M', 'C', 'E', 'W', 'T', 'S', '1'};

static void write_tensor(std::ofstream &os, const std::string &name, const float *data,
                         std::uint64_t n)
{
    const std::uint64_t name_len = name.size();
    os.write(reinterpret_cast<const char *>(&name_len), sizeof(name_len));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.write(reinterpret_cast<const char *>(&n), sizeof(n));
    os.write(reinterpret_cast<const char *>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

static void save_weights(const nn::Network<float> &net, const std::string &path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw integrity_error("save_model: cannot open '" + path + "' for writing");
    os.write(wts_magic, sizeof(wts_magic));
    std::uint64_t count = 0;
    for (const auto &blk : net.blocks)
        count += blk.bn ? 6 : 2;
    os.write(reinterpret_cast<const char *>(&count), sizeof(count));
    for (std::size_t l = 0; l < net.blocks.size(); ++l)
    {
        const auto &blk = net.blocks[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        write_tensor(os, prefix + "weight", blk.w.memptr(), blk.w.n_elem);
        write_tensor(os, prefix + "bias", blk.b.memptr(), blk.b.n_elem);
        if (blk.bn)
        {
            write_tensor(os, prefix + "bn_gamma", blk.gamma.memptr(), blk.gamma.n_elem);
            write_tensor(os, prefix + "bn_beta", blk.beta.memptr(), blk.beta.n_elem);
            write_tensor(os, prefix + "bn_mean", blk.run_mean.memptr(), blk.run_mean.n_elem);
            write_tensor(os, prefix + "bn_var", blk.run_var.memptr(), blk.run_var.n_elem);
        }
    }
    if (!os)
        throw integrity_error("save_model: write to '" + path + "' failed");
}

static std::string file_checksum(const std::string &path)
{
    return to_hex(file_fnv1a64(path));
}

static void load_weights(nn::Network<float> &net, const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw integrity_error("load_model: cannot open '" + path + "'");
    char magic[8];
    std::uint64_t count = 0;
    is.read(magic, sizeof(magic));
    is.read(reinterpret_cast<char *>(&count), sizeof(count));
    if (!is || std::memcmp(magic, wts_magic, sizeof(magic)) != 0)
        throw integrity_error("load_model: '" + path + "' is not a weights blob");

    std::map<std::string, std::vector<float>> tensors;
    for (std::uint64_t t = 0; t < count; ++t)
    {
        std::uint64_t name_len = 0, n = 0;
        is.read(reinterpret_cast<char *>(&name_len), sizeof(name_len));
        if (!is || name_len == 0 || name_len > 4096)
            throw integrity_error("load_model: corrupt tensor name in '" + path + "'");
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        is.read(reinterpret_cast<char *>(&n), sizeof(n));
        if (!is || n > (1ULL << 32))
            throw integrity_error("load_model: corrupt tensor size in '" + path + "'");
        std::vector<float> data(n);
        is.read(reinterpret_cast<char *>(data.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!is)
            throw integrity_error("load_model: truncated tensor payload in '" + path + "'");
        tensors.emplace(std::move(name), std::move(data));
    }
    if (is.peek() != EOF)
        throw integrity_error("load_model: trailing bytes in '" + path + "'");

    auto fill = [&](const std::string &name, float *dst, std::uint64_t n) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw integrity_error("load_model: tensor '" + name + "' missing in '" + path + "'");
        if (it->second.size() != n)
            throw integrity_error("load_model: tensor '" + name + "' size mismatch in '" + path +
                                  "'");
        std::memcpy(dst, it->second.data(), n * sizeof(float));
    };
    for (std::size_t l = 0; l < net.blocks.size(); ++l)
    {
        auto &blk = net.blocks[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        fill(prefix + "weight", blk.w.memptr(), blk.w.n_elem);
        fill(prefix + "bias", blk.b.memptr(), blk.b.n_elem);
        if (blk.bn)
        {
            fill(prefix + "bn_gamma", blk.gamma.memptr(), blk.gamma.n_elem);
            fill(prefix + "bn_beta", blk.beta.memptr(), blk.beta.n_elem);
            fill(prefix + "bn_mean", blk.run_mean.memptr(), blk.run_mean.n_elem);
            fill(prefix + "bn_var", blk.run_var.memptr(), blk.run_var.n_elem);
        }
    }
}

void save_model(const TrainedNet &tn, const std::string &dir)
{
    tn.spec.validate();
    std::filesystem::create_directories(dir);
    const std::string wpath = dir + "/weights.bin";
    const std::string bpath = dir + "/weights_best.bin";
    save_weights(tn.net, wpath);
    save_weights(tn.best, bpath);

    json j = netspec_to_json(tn.spec);
    json sched = json::array();
    for (const auto &[span, lr] : tn.tcfg.lr_schedule)
        sched.push_back({span, lr});
    j["training"] = {{"epochs", tn.tcfg.epochs},
                     {"batch_size", tn.tcfg.batch_size},
                     {"optimizer", tn.tcfg.optimizer},
                     {"seed", tn.tcfg.seed},
                     {"lr_schedule", sched},
                     {"scenario", tn.train_scenario},
                     {"profile_hash", tn.train_profile_hash}};
    j["weights_checksum"] = file_checksum(wpath);
    j["weights_best_checksum"] = file_checksum(bpath);

    std::ofstream os(dir + "/netspec.json");
    if (!os)
        throw integrity_error("save_model: cannot open '" + dir + "/netspec.json' for writing");
    os << j.dump(2) << '\n';

    json hj;
    hj["schema"] = "history/1";
    hj["train_loss"] = tn.history.train_loss;
    hj["val_loss"] = tn.history.val_loss;
    hj["lr"] = tn.history.lr;
    hj["best_epoch"] = tn.history.best_epoch;
    hj["best_val_loss"] = tn.history.best_val_loss;
    std::ofstream hs(dir + "/history.json");
    if (!hs)
        throw integrity_error("save_model: cannot open '" + dir + "/history.json' for writing");
    hs << hj.dump(2) << '\n';
}

TrainedNet load_model(const std::string &dir)
{
    std::ifstream is(dir + "/netspec.json");
    if (!is)
        throw integrity_error("load_model: cannot open '" + dir + "/netspec.json'");
    json j;
    try
    {
        is >> j;
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_model: malformed netspec.json in '" + dir + "': " + e.what());
    }

    TrainedNet tn;
    try
    {
        if (j.at("schema").get<std::string>() != "netspec/1")
            throw integrity_error("load_model: unsupported schema in '" + dir + "'");
        tn.spec = netspec_from_json(j);
        const auto &tj = j.at("training");
        tn.tcfg.epochs = tj.at("epochs").get<unsigned>();
        tn.tcfg.batch_size = tj.at("batch_size").get<unsigned>();
        tn.tcfg.optimizer = tj.at("optimizer").get<std::string>();
        tn.tcfg.seed = tj.at("seed").get<std::uint64_t>();
        tn.tcfg.lr_schedule.clear();
        for (const auto &sj : tj.at("lr_schedule"))
            tn.tcfg.lr_schedule.emplace_back(sj.at(0).get<unsigned>(), sj.at(1).get<double>());
        tn.train_scenario = tj.value("scenario", std::string{});
        tn.train_profile_hash = tj.value("profile_hash", std::string{});

        const std::string wpath = dir + "/weights.bin";
        const std::string bpath = dir + "/weights_best.bin";
        if (file_checksum(wpath) != j.at("weights_checksum").get<std::string>())
            throw integrity_error("load_model: weights.bin checksum mismatch in '" + dir + "'");
        if (file_checksum(bpath) != j.at("weights_best_checksum").get<std::string>())
            throw integrity_error("load_model: weights_best.bin checksum mismatch in '" + dir +
                                  "'");
        tn.net = build_network(tn.spec, 0);
        load_weights(tn.net, wpath);
        tn.best = build_network(tn.spec, 0);
        load_weights(tn.best, bpath);
    }
    catch (const json::exception &e)
    {
        throw integrity_error("load_model: missing or mistyped field in '" + dir + "': " +
                              e.what());
    }

    std::ifstream hs(dir + "/history.json");
    if (hs)
    {
        try
        {
            json hj;
            hs >> hj;
            tn.history.train_loss = hj.at("train_loss").get<std::vector<double>>();
            tn.history.val_loss = hj.at("val_loss").get<std::vector<double>>();
            tn.history.lr = hj.at("lr").get<std::vector<double>>();
            tn.history.best_epoch = hj.at("best_epoch").get<unsigned>();
            tn.history.best_val_loss = hj.at("best_val_loss").get<double>();
        }
        catch (const json::exception &)
        {
            // history is auxiliary; a malformed one does not block model use
            tn.history = TrainHistory{};
        }
    }
    return tn;
}

} // namespace mmce::neuralest
