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

#include "mmce/nn.hpp"
#include "mmce/common.hpp"
#include "mmce/rng.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

namespace mmce::nn
{

// ---- plane batches ---------------------------------------------------------

template <typename T> PlaneBatch<T> PlaneBatch<T>::zeros(unsigned n, unsigned h, unsigned w,
                                                         unsigned channels)
{
    require(n >= 1 && h >= 1 && w >= 1 && channels >= 1, "PlaneBatch: empty shape");
    PlaneBatch<T> p;
    p.n = n;
    p.h = h;
    p.w = w;
    p.data.zeros(arma::uword(n) * (h + 2) * (w + 2), channels);
    return p;
}

template <typename T> void PlaneBatch<T>::zero_border()
{
    const unsigned hp_ = hp(), wp_ = wp();
    for (unsigned c = 0; c < channels(); ++c)
    {
        T *col = data.colptr(c);
        for (unsigned i = 0; i < n; ++i)
        {
            T *s = col + arma::uword(i) * hp_ * wp_;
            std::memset(s, 0, wp_ * sizeof(T));                    // top pad row
            std::memset(s + arma::uword(hp_ - 1) * wp_, 0, wp_ * sizeof(T)); // bottom
            for (unsigned y = 1; y + 1 < hp_; ++y)
            {
                s[arma::uword(y) * wp_] = T(0);          // left pad column
                s[arma::uword(y) * wp_ + wp_ - 1] = T(0); // right pad column
            }
        }
    }
}

template <typename T> void PlaneBatch<T>::set_plane(unsigned sample, unsigned channel, const T *src)
{
    require(sample < n && channel < channels(), "PlaneBatch::set_plane: index out of range");
    T *col = data.colptr(channel) + arma::uword(sample) * hp() * wp();
    for (unsigned y = 0; y < h; ++y)
        std::memcpy(col + arma::uword(y + 1) * wp() + 1, src + arma::uword(y) * w, w * sizeof(T));
}

template <typename T> void PlaneBatch<T>::get_plane(unsigned sample, unsigned channel, T *dst) const
{
    require(sample < n && channel < channels(), "PlaneBatch::get_plane: index out of range");
    const T *col = data.colptr(channel) + arma::uword(sample) * hp() * wp();
    for (unsigned y = 0; y < h; ++y)
        std::memcpy(dst + arma::uword(y) * w, col + arma::uword(y + 1) * wp() + 1, w * sizeof(T));
}

// ---- BLAS dispatch ---------------------------------------------------------

static void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float *a, int lda,
                 const float *b, int ldb, float beta, float *c, int ldc)
{
    cblas_sgemm(CblasColMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

static void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double *a, int lda,
                 const double *b, int ldb, double beta, double *c, int ldc)
{
    cblas_dgemm(CblasColMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// ---- direct convolution (nine shifted GEMMs) -------------------------------

// Tap k = (dy+1)*3 + (dx+1) corresponds to a row shift of dy*wp + dx in the
// padded plane layout; pad rows supply the zeros, so no im2col copy is needed.
template <typename T>
static void conv_forward_direct(const PlaneBatch<T> &x, const arma::Mat<T> &w,
                                const arma::Col<T> &b, PlaneBatch<T> &y)
{
    const int npix = static_cast<int>(x.n_pix());
    const int cin = static_cast<int>(x.channels());
    const int cout = static_cast<int>(w.n_cols);
    const int wp = static_cast<int>(x.wp());

    for (int co = 0; co < cout; ++co)
        y.data.col(co).fill(b(co));

    for (int k = 0; k < 9; ++k)
    {
        const int o = (k / 3 - 1) * wp + (k % 3 - 1);
        const int mr = npix - std::abs(o);
        gemm(false, false, mr, cout, cin, T(1), x.data.memptr() + std::max(0, o), npix,
             w.memptr() + arma::uword(k) * cin, 9 * cin, T(1),
             y.data.memptr() + std::max(0, -o), npix);
    }
    y.zero_border();
}

template <typename T>
static void conv_backward_direct(const PlaneBatch<T> &x, const arma::Mat<T> &w,
                                 const PlaneBatch<T> &dz, arma::Mat<T> &gw, PlaneBatch<T> &dx)
{
    const int npix = static_cast<int>(x.n_pix());
    const int cin = static_cast<int>(x.channels());
    const int cout = static_cast<int>(w.n_cols);
    const int wp = static_cast<int>(x.wp());

    dx.data.zeros();
    for (int k = 0; k < 9; ++k)
    {
        const int o = (k / 3 - 1) * wp + (k % 3 - 1);
        const int mr = npix - std::abs(o);
        // dW_k = X_shifted^T dZ
        gemm(true, false, cin, cout, mr, T(1), x.data.memptr() + std::max(0, o), npix,
             dz.data.memptr() + std::max(0, -o), npix, T(0),
             gw.memptr() + arma::uword(k) * cin, 9 * cin);
        // dX += dZ_shifted W_k^T
        gemm(false, true, mr, cin, cout, T(1), dz.data.memptr() + std::max(0, -o), npix,
             w.memptr() + arma::uword(k) * cin, 9 * cin, T(1),
             dx.data.memptr() + std::max(0, o), npix);
    }
    dx.zero_border();
}

// ---- Winograd F(4x4, 3x3), float -------------------------------------------

// 1D stages of the standard F(4,3) transform set. 2D transforms apply a stage
// down the columns and then along the rows of a 6x6 (or 3x3 / 4x4) patch.

static inline void wg_bt6(const float x[6], float y[6])
{
    y[0] = 4.f * x[0] - 5.f * x[2] + x[4];
    y[1] = -4.f * x[1] - 4.f * x[2] + x[3] + x[4];
    y[2] = 4.f * x[1] - 4.f * x[2] - x[3] + x[4];
    y[3] = -2.f * x[1] - x[2] + 2.f * x[3] + x[4];
    y[4] = 2.f * x[1] - x[2] - 2.f * x[3] + x[4];
    y[5] = 4.f * x[1] - 5.f * x[3] + x[5];
}

static inline void wg_b6(const float x[6], float y[6])
{
    y[0] = 4.f * x[0];
    y[1] = -4.f * x[1] + 4.f * x[2] - 2.f * x[3] + 2.f * x[4] + 4.f * x[5];
    y[2] = -5.f * x[0] - 4.f * x[1] - 4.f * x[2] - x[3] - x[4];
    y[3] = x[1] - x[2] + 2.f * x[3] - 2.f * x[4] - 5.f * x[5];
    y[4] = x[0] + x[1] + x[2] + x[3] + x[4];
    y[5] = x[5];
}

static inline void wg_g3(const float x[3], float y[6])
{
    y[0] = 0.25f * x[0];
    y[1] = (-x[0] - x[1] - x[2]) * (1.f / 6.f);
    y[2] = (-x[0] + x[1] - x[2]) * (1.f / 6.f);
    y[3] = x[0] * (1.f / 24.f) + x[1] * (1.f / 12.f) + x[2] * (1.f / 6.f);
    y[4] = x[0] * (1.f / 24.f) - x[1] * (1.f / 12.f) + x[2] * (1.f / 6.f);
    y[5] = x[2];
}

static inline void wg_gt6(const float x[6], float y[3])
{
    y[0] = 0.25f * x[0] - (x[1] + x[2]) * (1.f / 6.f) + (x[3] + x[4]) * (1.f / 24.f);
    y[1] = (-x[1] + x[2]) * (1.f / 6.f) + (x[3] - x[4]) * (1.f / 12.f);
    y[2] = (-x[1] - x[2]) * (1.f / 6.f) + (x[3] + x[4]) * (1.f / 6.f) + x[5];
}

static inline void wg_at6(const float x[6], float y[4])
{
    y[0] = x[0] + x[1] + x[2] + x[3] + x[4];
    y[1] = x[1] - x[2] + 2.f * (x[3] - x[4]);
    y[2] = x[1] + x[2] + 4.f * (x[3] + x[4]);
    y[3] = x[1] - x[2] + 8.f * (x[3] - x[4]) + x[5];
}

static inline void wg_a4(const float x[4], float y[6])
{
    y[0] = x[0];
    y[1] = x[0] + x[1] + x[2] + x[3];
    y[2] = x[0] - x[1] + x[2] - x[3];
    y[3] = x[0] + 2.f * x[1] + 4.f * x[2] + 8.f * x[3];
    y[4] = x[0] - 2.f * x[1] + 4.f * x[2] - 8.f * x[3];
    y[5] = x[3];
}

struct WinoGeom
{
    unsigned th, tw, tiles, hp, wp, plane;
    WinoGeom(const unsigned n, const unsigned h, const unsigned w)
        : th(h / 4), tw(w / 4), tiles(n * th * tw), hp(h + 2), wp(w + 2), plane(hp * wp)
    {
    }
};

static void wino_filter_transform(const arma::fmat &w, unsigned cin, unsigned cout,
                                  std::vector<arma::fmat> &u)
{
    u.assign(36, arma::fmat(cin, cout));
    for (unsigned co = 0; co < cout; ++co)
        for (unsigned ci = 0; ci < cin; ++ci)
        {
            float g[3][3];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    g[a][b] = w(arma::uword(a * 3 + b) * cin + ci, co);
            float t[6][3], full[6][6];
            for (int b = 0; b < 3; ++b)
            {
                const float xcol[3] = {g[0][b], g[1][b], g[2][b]};
                float ycol[6];
                wg_g3(xcol, ycol);
                for (int a = 0; a < 6; ++a)
                    t[a][b] = ycol[a];
            }
            for (int a = 0; a < 6; ++a)
                wg_g3(t[a], full[a]);
            for (int p = 0; p < 36; ++p)
                u[p](ci, co) = full[p / 6][p % 6];
        }
}

static void wino_input_transform(const PlaneBatch<float> &x, std::vector<arma::fmat> &v)
{
    const WinoGeom g(x.n, x.h, x.w);
    const unsigned cin = x.channels();
    v.assign(36, arma::fmat(g.tiles, cin));
    float *vp[36];
    for (int p = 0; p < 36; ++p)
        vp[p] = v[p].memptr();

    for (unsigned c = 0; c < cin; ++c)
    {
        const float *col = x.data.colptr(c);
        arma::uword t = 0;
        for (unsigned i = 0; i < x.n; ++i)
            for (unsigned ty = 0; ty < g.th; ++ty)
                for (unsigned tx = 0; tx < g.tw; ++tx, ++t)
                {
                    const float *s = col + arma::uword(i) * g.plane + arma::uword(4 * ty) * g.wp +
                                     4 * tx;
                    float tmp[6][6], out[6][6];
                    for (int b = 0; b < 6; ++b)
                    {
                        const float xcol[6] = {s[b], s[g.wp + b], s[2 * g.wp + b],
                                               s[3 * g.wp + b], s[4 * g.wp + b], s[5 * g.wp + b]};
                        float ycol[6];
                        wg_bt6(xcol, ycol);
                        for (int a = 0; a < 6; ++a)
                            tmp[a][b] = ycol[a];
                    }
                    for (int a = 0; a < 6; ++a)
                        wg_bt6(tmp[a], out[a]);
                    const arma::uword off = arma::uword(c) * g.tiles + t;
                    for (int p = 0; p < 36; ++p)
                        vp[p][off] = out[p / 6][p % 6];
                }
    }
}

static void wino_forward(const PlaneBatch<float> &x, const arma::fmat &w, const arma::fvec &b,
                         PlaneBatch<float> &y, std::vector<arma::fmat> &v,
                         std::vector<arma::fmat> &u)
{
    const WinoGeom g(x.n, x.h, x.w);
    const unsigned cin = x.channels();
    const unsigned cout = static_cast<unsigned>(w.n_cols);

    wino_filter_transform(w, cin, cout, u);
    wino_input_transform(x, v);

    std::vector<arma::fmat> m(36);
    for (int p = 0; p < 36; ++p)
    {
        m[p].set_size(g.tiles, cout);
        gemm(false, false, static_cast<int>(g.tiles), static_cast<int>(cout),
             static_cast<int>(cin), 1.f, v[p].memptr(), static_cast<int>(g.tiles), u[p].memptr(),
             static_cast<int>(cin), 0.f, m[p].memptr(), static_cast<int>(g.tiles));
    }

    y.data.zeros();
    const float *mp[36];
    for (int p = 0; p < 36; ++p)
        mp[p] = m[p].memptr();
    for (unsigned co = 0; co < cout; ++co)
    {
        float *col = y.data.colptr(co);
        const float bias = b(co);
        arma::uword t = 0;
        for (unsigned i = 0; i < x.n; ++i)
            for (unsigned ty = 0; ty < g.th; ++ty)
                for (unsigned tx = 0; tx < g.tw; ++tx, ++t)
                {
                    float m6[6][6], tmp[4][6], out[4][4];
                    const arma::uword off = arma::uword(co) * g.tiles + t;
                    for (int p = 0; p < 36; ++p)
                        m6[p / 6][p % 6] = mp[p][off];
                    for (int bb = 0; bb < 6; ++bb)
                    {
                        const float xcol[6] = {m6[0][bb], m6[1][bb], m6[2][bb],
                                               m6[3][bb], m6[4][bb], m6[5][bb]};
                        float ycol[4];
                        wg_at6(xcol, ycol);
                        for (int a = 0; a < 4; ++a)
                            tmp[a][bb] = ycol[a];
                    }
                    for (int a = 0; a < 4; ++a)
                        wg_at6(tmp[a], out[a]);
                    float *d = col + arma::uword(i) * g.plane + arma::uword(4 * ty + 1) * g.wp +
                               (4 * tx + 1);
                    for (int yy = 0; yy < 4; ++yy)
                        for (int xx = 0; xx < 4; ++xx)
                            d[arma::uword(yy) * g.wp + xx] = out[yy][xx] + bias;
                }
    }
}

static void wino_backward(const PlaneBatch<float> &dz, const std::vector<arma::fmat> &v,
                          const std::vector<arma::fmat> &u, arma::fmat &gw, PlaneBatch<float> &dx)
{
    const WinoGeom g(dz.n, dz.h, dz.w);
    const unsigned cout = dz.channels();
    const unsigned cin = static_cast<unsigned>(u[0].n_rows);

    // dM = A dZ A^T per tile.
    std::vector<arma::fmat> dm(36);
    for (int p = 0; p < 36; ++p)
        dm[p].set_size(g.tiles, cout);
    float *dmp[36];
    for (int p = 0; p < 36; ++p)
        dmp[p] = dm[p].memptr();
    for (unsigned co = 0; co < cout; ++co)
    {
        const float *col = dz.data.colptr(co);
        arma::uword t = 0;
        for (unsigned i = 0; i < dz.n; ++i)
            for (unsigned ty = 0; ty < g.th; ++ty)
                for (unsigned tx = 0; tx < g.tw; ++tx, ++t)
                {
                    const float *s = col + arma::uword(i) * g.plane +
                                     arma::uword(4 * ty + 1) * g.wp + (4 * tx + 1);
                    float z4[4][4], tmp[6][4], out[6][6];
                    for (int yy = 0; yy < 4; ++yy)
                        for (int xx = 0; xx < 4; ++xx)
                            z4[yy][xx] = s[arma::uword(yy) * g.wp + xx];
                    for (int bb = 0; bb < 4; ++bb)
                    {
                        const float xcol[4] = {z4[0][bb], z4[1][bb], z4[2][bb], z4[3][bb]};
                        float ycol[6];
                        wg_a4(xcol, ycol);
                        for (int a = 0; a < 6; ++a)
                            tmp[a][bb] = ycol[a];
                    }
                    for (int a = 0; a < 6; ++a)
                        wg_a4(tmp[a], out[a]);
                    const arma::uword off = arma::uword(co) * g.tiles + t;
                    for (int p = 0; p < 36; ++p)
                        dmp[p][off] = out[p / 6][p % 6];
                }
    }

    // dV = dM U^T, dU = V^T dM, then inverse transforms.
    std::vector<arma::fmat> dv(36), du(36);
    dx.data.zeros();
    for (int p = 0; p < 36; ++p)
    {
        dv[p].set_size(g.tiles, cin);
        gemm(false, true, static_cast<int>(g.tiles), static_cast<int>(cin),
             static_cast<int>(cout), 1.f, dm[p].memptr(), static_cast<int>(g.tiles),
             u[p].memptr(), static_cast<int>(cin), 0.f, dv[p].memptr(),
             static_cast<int>(g.tiles));
    }

    const float *dvp[36];
    for (int p = 0; p < 36; ++p)
        dvp[p] = dv[p].memptr();
    for (unsigned ci = 0; ci < cin; ++ci)
    {
        float *col = dx.data.colptr(ci);
        arma::uword t = 0;
        for (unsigned i = 0; i < dz.n; ++i)
            for (unsigned ty = 0; ty < g.th; ++ty)
                for (unsigned tx = 0; tx < g.tw; ++tx, ++t)
                {
                    float v6[6][6], tmp[6][6], out[6][6];
                    const arma::uword off = arma::uword(ci) * g.tiles + t;
                    for (int p = 0; p < 36; ++p)
                        v6[p / 6][p % 6] = dvp[p][off];
                    for (int bb = 0; bb < 6; ++bb)
                    {
                        const float xcol[6] = {v6[0][bb], v6[1][bb], v6[2][bb],
                                               v6[3][bb], v6[4][bb], v6[5][bb]};
                        float ycol[6];
                        wg_b6(xcol, ycol);
                        for (int a = 0; a < 6; ++a)
                            tmp[a][bb] = ycol[a];
                    }
                    for (int a = 0; a < 6; ++a)
                        wg_b6(tmp[a], out[a]);
                    float *d = col + arma::uword(i) * g.plane + arma::uword(4 * ty) * g.wp +
                               4 * tx;
                    for (int yy = 0; yy < 6; ++yy)
                        for (int xx = 0; xx < 6; ++xx)
                            d[arma::uword(yy) * g.wp + xx] += out[yy][xx];
                }
    }
    dx.zero_border();

    for (int p = 0; p < 36; ++p)
    {
        du[p].set_size(cin, cout);
        gemm(true, false, static_cast<int>(cin), static_cast<int>(cout),
             static_cast<int>(g.tiles), 1.f, v[p].memptr(), static_cast<int>(g.tiles),
             dm[p].memptr(), static_cast<int>(g.tiles), 0.f, du[p].memptr(),
             static_cast<int>(cin));
    }
    for (unsigned co = 0; co < cout; ++co)
        for (unsigned ci = 0; ci < cin; ++ci)
        {
            float u6[6][6], tmp[3][6], g3[3][3];
            for (int p = 0; p < 36; ++p)
                u6[p / 6][p % 6] = du[p](ci, co);
            for (int bb = 0; bb < 6; ++bb)
            {
                const float xcol[6] = {u6[0][bb], u6[1][bb], u6[2][bb],
                                       u6[3][bb], u6[4][bb], u6[5][bb]};
                float ycol[3];
                wg_gt6(xcol, ycol);
                for (int a = 0; a < 3; ++a)
                    tmp[a][bb] = ycol[a];
            }
            for (int a = 0; a < 3; ++a)
                wg_gt6(tmp[a], g3[a]);
            for (int a = 0; a < 3; ++a)
                for (int bb = 0; bb < 3; ++bb)
                    gw(arma::uword(a * 3 + bb) * cin + ci, co) = g3[a][bb];
        }
}

// ---- activation and batch norm ----------------------------------------------

template <typename T> static void act_forward(PlaneBatch<T> &y, Act act)
{
    T *p = y.data.memptr();
    const arma::uword n = y.data.n_elem;
    if (act == Act::relu)
    {
        for (arma::uword i = 0; i < n; ++i)
            p[i] = p[i] > T(0) ? p[i] : T(0);
    }
    else
    {
        for (arma::uword i = 0; i < n; ++i)
            p[i] = std::tanh(p[i]);
    }
}

template <typename T>
static void bn_forward(PlaneBatch<T> &y, ConvBlock<T> &blk, bool training, double momentum,
                       double eps, arma::Col<T> &mean_out, arma::Col<T> &invstd_out)
{
    const arma::uword rows = y.data.n_rows;
    const double n_int = double(y.n) * y.h * y.w; // pad rows are zero: sums are interior sums
    const unsigned c = y.channels();
    mean_out.set_size(c);
    invstd_out.set_size(c);

    for (unsigned j = 0; j < c; ++j)
    {
        T *col = y.data.colptr(j);
        T scale, shift;
        if (training)
        {
            double s1 = 0.0, s2 = 0.0;
            for (arma::uword r = 0; r < rows; ++r)
            {
                const double v = double(col[r]);
                s1 += v;
                s2 += v * v;
            }
            const double m = s1 / n_int;
            const double var = std::max(0.0, s2 / n_int - m * m);
            const double is = 1.0 / std::sqrt(var + eps);
            mean_out(j) = T(m);
            invstd_out(j) = T(is);
            blk.run_mean(j) = T(momentum * double(blk.run_mean(j)) + (1.0 - momentum) * m);
            blk.run_var(j) = T(momentum * double(blk.run_var(j)) + (1.0 - momentum) * var);
            scale = T(double(blk.gamma(j)) * is);
            shift = T(double(blk.beta(j)) - m * is * double(blk.gamma(j)));
        }
        else
        {
            const double is = 1.0 / std::sqrt(double(blk.run_var(j)) + eps);
            scale = T(double(blk.gamma(j)) * is);
            shift = T(double(blk.beta(j)) - double(blk.run_mean(j)) * is * double(blk.gamma(j)));
        }
        for (arma::uword r = 0; r < rows; ++r)
            col[r] = col[r] * scale + shift;
    }
    y.zero_border();
}

template <typename T>
static void bn_backward(PlaneBatch<T> &d, const PlaneBatch<T> &a, const arma::Col<T> &mean,
                        const arma::Col<T> &invstd, ConvBlock<T> &blk)
{
    const arma::uword rows = d.data.n_rows;
    const double n_int = double(d.n) * d.h * d.w;
    for (unsigned j = 0; j < d.channels(); ++j)
    {
        T *dc = d.data.colptr(j);
        const T *ac = a.data.colptr(j);
        const double m = double(mean(j)), is = double(invstd(j));
        double s1 = 0.0, s2 = 0.0;
        for (arma::uword r = 0; r < rows; ++r)
        {
            const double dv = double(dc[r]);
            s1 += dv;
            s2 += dv * (double(ac[r]) - m) * is;
        }
        blk.gbeta(j) = T(s1);
        blk.ggamma(j) = T(s2);
        const double k1 = s1 / n_int, k2 = s2 / n_int;
        const double g = double(blk.gamma(j)) * is;
        for (arma::uword r = 0; r < rows; ++r)
        {
            const double xh = (double(ac[r]) - m) * is;
            dc[r] = T(g * (double(dc[r]) - k1 - xh * k2));
        }
    }
    d.zero_border();
}

// ---- network ----------------------------------------------------------------

template <typename T>
Network<T> Network<T>::make(unsigned in_maps, unsigned h, unsigned w,
                            const std::vector<BlockSpec> &specs, std::uint64_t seed)
{
    require(in_maps >= 1 && h >= 1 && w >= 1, "Network: empty input shape");
    require(!specs.empty(), "Network: needs at least one block");

    Network<T> net;
    net.in_maps = in_maps;
    net.h = h;
    net.w = w;
    unsigned cin = in_maps;
    for (std::size_t l = 0; l < specs.size(); ++l)
    {
        const auto &sp = specs[l];
        require(sp.out_maps >= 1, "Network: block out_maps must be positive");
        ConvBlock<T> blk;
        blk.cin = cin;
        blk.cout = sp.out_maps;
        blk.act = sp.act;
        blk.bn = sp.bn;

        Rng rng(derive_seed(seed, l));
        const double fan_in = 9.0 * cin;
        const double fan_out = 9.0 * sp.out_maps;
        const double limit = sp.act == Act::relu ? std::sqrt(6.0 / fan_in)
                                                 : std::sqrt(6.0 / (fan_in + fan_out));
        blk.w.set_size(arma::uword(9) * cin, sp.out_maps);
        for (arma::uword i = 0; i < blk.w.n_elem; ++i)
            blk.w(i) = T(rng.uniform(-limit, limit));
        blk.b.zeros(sp.out_maps);
        blk.gamma.ones(sp.out_maps);
        blk.beta.zeros(sp.out_maps);
        blk.run_mean.zeros(sp.out_maps);
        blk.run_var.ones(sp.out_maps);

        blk.gw.zeros(arma::size(blk.w));
        blk.gb.zeros(sp.out_maps);
        blk.ggamma.zeros(sp.out_maps);
        blk.gbeta.zeros(sp.out_maps);
        blk.mw.zeros(arma::size(blk.w));
        blk.vw.zeros(arma::size(blk.w));
        blk.mb.zeros(sp.out_maps);
        blk.vb.zeros(sp.out_maps);
        blk.mgamma.zeros(sp.out_maps);
        blk.vgamma.zeros(sp.out_maps);
        blk.mbeta.zeros(sp.out_maps);
        blk.vbeta.zeros(sp.out_maps);

        net.blocks.push_back(std::move(blk));
        cin = sp.out_maps;
    }
    return net;
}

template <typename T> bool Network<T>::winograd_eligible() const
{
    return std::is_same_v<T, float> && h % 4 == 0 && w % 4 == 0;
}

template <typename T> PlaneBatch<T> Network<T>::forward(const PlaneBatch<T> &x, bool training)
{
    require(x.h == h && x.w == w && x.channels() == in_maps && x.n >= 1,
            "Network::forward: input shape mismatch");
    if (impl == ConvImpl::winograd)
        require(winograd_eligible(), "Network::forward: Winograd path needs float and 4 | h, w");
    const bool wino = impl == ConvImpl::winograd ||
                      (impl == ConvImpl::automatic && winograd_eligible());

    const std::size_t nl = blocks.size();
    if (training)
    {
        acts.assign(nl + 1, PlaneBatch<T>{});
        postact.assign(nl, PlaneBatch<T>{});
        bn_mean.assign(nl, arma::Col<T>{});
        bn_invstd.assign(nl, arma::Col<T>{});
        wino_v.assign(nl, {});
        wino_u.assign(nl, {});
        acts[0] = x;
    }

    PlaneBatch<T> cur = x;
    for (std::size_t l = 0; l < nl; ++l)
    {
        ConvBlock<T> &blk = blocks[l];
        PlaneBatch<T> y = PlaneBatch<T>::zeros(cur.n, h, w, blk.cout);
        if (wino)
        {
            if constexpr (std::is_same_v<T, float>)
            {
                std::vector<arma::fmat> vtmp, utmp;
                auto &v = training ? wino_v[l] : vtmp;
                auto &u = training ? wino_u[l] : utmp;
                wino_forward(cur, blk.w, blk.b, y, v, u);
            }
        }
        else
        {
            conv_forward_direct(cur, blk.w, blk.b, y);
        }
        act_forward(y, blk.act);
        if (blk.bn)
        {
            if (training)
            {
                postact[l] = y;
                bn_forward(y, blk, true, bn_momentum, bn_eps, bn_mean[l], bn_invstd[l]);
            }
            else
            {
                arma::Col<T> mtmp, istmp;
                bn_forward(y, blk, false, bn_momentum, bn_eps, mtmp, istmp);
            }
        }
        if (training)
            acts[l + 1] = y;
        cur = std::move(y);
    }
    have_cache = training;
    return cur;
}

template <typename T> PlaneBatch<T> Network<T>::backward(const PlaneBatch<T> &dout)
{
    require(have_cache, "Network::backward: no cached forward pass");
    require(dout.h == h && dout.w == w && dout.n == acts[0].n &&
                dout.channels() == blocks.back().cout,
            "Network::backward: gradient shape mismatch");
    const bool wino = impl == ConvImpl::winograd ||
                      (impl == ConvImpl::automatic && winograd_eligible());

    PlaneBatch<T> d = dout;
    d.zero_border();
    for (std::size_t li = blocks.size(); li-- > 0;)
    {
        ConvBlock<T> &blk = blocks[li];
        const PlaneBatch<T> &aout = blk.bn ? postact[li] : acts[li + 1];
        if (blk.bn)
            bn_backward(d, postact[li], bn_mean[li], bn_invstd[li], blk);
        // activation derivative from the activation output
        {
            T *dp = d.data.memptr();
            const T *ap = aout.data.memptr();
            const arma::uword ne = d.data.n_elem;
            if (blk.act == Act::relu)
            {
                for (arma::uword i = 0; i < ne; ++i)
                    dp[i] = ap[i] > T(0) ? dp[i] : T(0);
            }
            else
            {
                for (arma::uword i = 0; i < ne; ++i)
                    dp[i] *= (T(1) - ap[i] * ap[i]);
            }
        }
        // bias gradient
        for (unsigned j = 0; j < blk.cout; ++j)
        {
            const T *dc = d.data.colptr(j);
            double s = 0.0;
            for (arma::uword r = 0; r < d.data.n_rows; ++r)
                s += double(dc[r]);
            blk.gb(j) = T(s);
        }
        PlaneBatch<T> dx = PlaneBatch<T>::zeros(d.n, h, w, blk.cin);
        if (wino)
        {
            if constexpr (std::is_same_v<T, float>)
                wino_backward(d, wino_v[li], wino_u[li], blk.gw, dx);
        }
        else
        {
            conv_backward_direct(acts[li], blk.w, d, blk.gw, dx);
        }
        d = std::move(dx);
    }
    return d;
}

template <typename T>
static void adam_tensor(arma::Mat<T> &p, const arma::Mat<T> &g, arma::Mat<T> &m, arma::Mat<T> &v,
                        double lr, double b1, double b2, double eps, double bc1, double bc2)
{
    T *pp = p.memptr();
    const T *gp = g.memptr();
    T *mp = m.memptr();
    T *vp = v.memptr();
    for (arma::uword i = 0; i < p.n_elem; ++i)
    {
        const double gi = double(gp[i]);
        const double mi = b1 * double(mp[i]) + (1.0 - b1) * gi;
        const double vi = b2 * double(vp[i]) + (1.0 - b2) * gi * gi;
        mp[i] = T(mi);
        vp[i] = T(vi);
        pp[i] = T(double(pp[i]) - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
}

template <typename T>
static void adam_tensor(arma::Col<T> &p, const arma::Col<T> &g, arma::Col<T> &m, arma::Col<T> &v,
                        double lr, double b1, double b2, double eps, double bc1, double bc2)
{
    arma::Mat<T> &pm = p;
    const arma::Mat<T> &gm = g;
    arma::Mat<T> &mm = m;
    arma::Mat<T> &vm = v;
    adam_tensor(pm, gm, mm, vm, lr, b1, b2, eps, bc1, bc2);
}

template <typename T> void Network<T>::adam_step(T lr, T beta1, T beta2, T eps)
{
    require(lr > T(0), "Network::adam_step: learning rate must be positive");
    ++adam_t;
    const double bc1 = 1.0 - std::pow(double(beta1), double(adam_t));
    const double bc2 = 1.0 - std::pow(double(beta2), double(adam_t));
    for (auto &blk : blocks)
    {
        adam_tensor(blk.w, blk.gw, blk.mw, blk.vw, double(lr), double(beta1), double(beta2),
                    double(eps), bc1, bc2);
        adam_tensor(blk.b, blk.gb, blk.mb, blk.vb, double(lr), double(beta1), double(beta2),
                    double(eps), bc1, bc2);
        if (blk.bn)
        {
            adam_tensor(blk.gamma, blk.ggamma, blk.mgamma, blk.vgamma, double(lr), double(beta1),
                        double(beta2), double(eps), bc1, bc2);
            adam_tensor(blk.beta, blk.gbeta, blk.mbeta, blk.vbeta, double(lr), double(beta1),
                        double(beta2), double(eps), bc1, bc2);
        }
    }
    have_cache = false; // caches refer to stale weights now
}

template <typename T> void Network<T>::clear_cache()
{
    acts.clear();
    postact.clear();
    bn_mean.clear();
    bn_invstd.clear();
    wino_v.clear();
    wino_u.clear();
    have_cache = false;
}

template <typename T> std::uint64_t Network<T>::param_count() const
{
    std::uint64_t n = 0;
    for (const auto &blk : blocks)
    {
        n += blk.w.n_elem + blk.b.n_elem;
        if (blk.bn)
            n += blk.gamma.n_elem + blk.beta.n_elem;
    }
    return n;
}

template struct PlaneBatch<float>;
template struct PlaneBatch<double>;
template class Network<float>;
template class Network<double>;

} // namespace mmce::nn
