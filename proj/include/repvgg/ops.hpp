// Copyright 2026 the repvgg-kit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

#include "repvgg/tensor.hpp"

namespace repvgg {

inline std::pair<int, int> conv2d_output_hw(int h, int w, int kh, int kw, int stride, int padding) {
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;
    if (h + 2 * padding < kh || w + 2 * padding < kw || oh <= 0 || ow <= 0)
        throw std::invalid_argument("conv2d: zero-size spatial output for input " + std::to_string(h) +
                                    "x" + std::to_string(w) + ", kernel " + std::to_string(kh) +
                                    ", stride " + std::to_string(stride) + ", padding " +
                                    std::to_string(padding));
    return {oh, ow};
}

template <typename T>
void check_conv_input(const Tensor4<T>& x, const ConvParams<T>& p) {
    p.validate();
    if (x.c() != p.in_channels())
        throw std::invalid_argument("conv2d: input has " + std::to_string(x.c()) +
                                    " channels, kernel expects " + std::to_string(p.in_channels()) +
                                    " (" + std::to_string(p.groups) + " groups x " +
                                    std::to_string(p.kernel.c()) + ")");
    if (x.c() % p.groups != 0)
        throw std::invalid_argument("conv2d: cIn " + std::to_string(x.c()) +
                                    " not divisible by groups " + std::to_string(p.groups));
}

// Serial reference convolution. The classic 7-nested-loop form with explicit
// zero padding, accumulating in double regardless of T; kept as the oracle
// the parallel kernels are tested against.
template <typename T>
Tensor4<T> conv2d_reference(const Tensor4<T>& x, const ConvParams<T>& p) {
    check_conv_input(x, p);
    const int kh = p.kernel_h(), kw = p.kernel_w();
    const auto [oh, ow] = conv2d_output_hw(x.h(), x.w(), kh, kw, p.stride, p.padding);
    const int cing = p.kernel.c();
    const int coutg = p.out_channels() / p.groups;

    Tensor4<T> y(x.n(), p.out_channels(), oh, ow);
    for (int in = 0; in < x.n(); ++in) {
        for (int oc = 0; oc < p.out_channels(); ++oc) {
            const int g = oc / coutg;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int ic = 0; ic < cing; ++ic) {
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * p.stride + ky - p.padding;
                                const int ix = ox * p.stride + kx - p.padding;
                                const double xv =
                                    (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w())
                                        ? 0.0
                                        : static_cast<double>(x.at(in, g * cing + ic, iy, ix));
                                acc += xv * static_cast<double>(p.kernel.at(oc, ic, ky, kx));
                            }
                        }
                    }
                    if (p.bias) acc += static_cast<double>((*p.bias)[oc]);
                    y.at(in, oc, oy, ox) = static_cast<T>(acc);
                }
            }
        }
    }
    return y;
}

// Production direct convolution. Same term order as the reference (so f64
// results are bit-identical), native-precision accumulation, bounds checks
// hoisted out of the inner kernel loops, parallel over (batch, out channel).
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvParams<T>& p) {
    check_conv_input(x, p);
    const int kh = p.kernel_h(), kw = p.kernel_w();
    const auto [oh, ow] = conv2d_output_hw(x.h(), x.w(), kh, kw, p.stride, p.padding);
    const int cing = p.kernel.c();
    const int coutg = p.out_channels() / p.groups;
    const int n = x.n(), cout = p.out_channels(), h = x.h(), w = x.w();
    const int stride = p.stride, pad = p.padding;

    Tensor4<T> y(n, cout, oh, ow);
#pragma omp parallel for collapse(2) schedule(static)
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < cout; ++oc) {
            const int g = oc / coutg;
            const T* kbase = p.kernel.plane(oc, 0);
            const T bias = p.bias ? (*p.bias)[oc] : T(0);
            T* out = y.plane(in, oc);
            for (int oy = 0; oy < oh; ++oy) {
                const int iy0 = oy * stride - pad;
                const int ky_lo = std::max(0, -iy0);
                const int ky_hi = std::min(kh, h - iy0);
                for (int ox = 0; ox < ow; ++ox) {
                    const int ix0 = ox * stride - pad;
                    const int kx_lo = std::max(0, -ix0);
                    const int kx_hi = std::min(kw, w - ix0);
                    T acc = T(0);
                    const T* xc = x.plane(in, g * cing);
                    const T* kc = kbase;
                    for (int ic = 0; ic < cing; ++ic, xc += static_cast<std::int64_t>(h) * w, kc += kh * kw) {
                        for (int ky = ky_lo; ky < ky_hi; ++ky) {
                            const T* xrow = xc + static_cast<std::int64_t>(iy0 + ky) * w + ix0;
                            const T* krow = kc + ky * kw;
                            for (int kx = kx_lo; kx < kx_hi; ++kx) acc += xrow[kx] * krow[kx];
                        }
                    }
                    out[static_cast<std::int64_t>(oy) * ow + ox] = acc + bias;
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> batch_norm_infer(const Tensor4<T>& x, const BnParams<T>& bn) {
    bn.validate();
    if (bn.channels() != x.c())
        throw std::invalid_argument("batch_norm_infer: " + std::to_string(bn.channels()) +
                                    " BN channels vs " + std::to_string(x.c()) + " input channels");
    Tensor4<T> y(x.n(), x.c(), x.h(), x.w());
    const std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
#pragma omp parallel for collapse(2) schedule(static)
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            const T scale = bn.gamma[ic] / static_cast<T>(std::sqrt(static_cast<double>(bn.var[ic]) +
                                                                    static_cast<double>(bn.eps)));
            const T mu = bn.mu[ic], beta = bn.beta[ic];
            const T* src = x.plane(in, ic);
            T* dst = y.plane(in, ic);
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) * scale + beta;
        }
    }
    return y;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> y(x.n(), x.c(), x.h(), x.w());
    const std::int64_t sz = x.size();
    const T* src = x.data();
    T* dst = y.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < sz; ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
    return y;
}

// (n, c, h, w) -> (n, c, 1, 1) by spatial mean.
template <typename T>
Tensor4<T> global_avg_pool(const Tensor4<T>& x) {
    if (x.h() < 1 || x.w() < 1) throw std::invalid_argument("global_avg_pool: empty spatial dims");
    Tensor4<T> y(x.n(), x.c(), 1, 1);
    const std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
#pragma omp parallel for collapse(2) schedule(static)
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            const T* src = x.plane(in, ic);
            T acc = T(0);
            for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
            y.at(in, ic, 0, 0) = acc / static_cast<T>(plane);
        }
    }
    return y;
}

// Per-batch-element matrix-vector product. Input (n, c, 1, 1), weight
// (k, c, 1, 1), bias length k; returns (n, k, 1, 1).
template <typename T>
Tensor4<T> fully_connected(const Tensor4<T>& x, const Tensor4<T>& weight, const std::vector<T>& bias) {
    if (x.h() != 1 || x.w() != 1)
        throw std::invalid_argument("fully_connected: input must be (n, c, 1, 1), got " + x.shape_str());
    if (weight.c() != x.c() || weight.h() != 1 || weight.w() != 1)
        throw std::invalid_argument("fully_connected: weight " + weight.shape_str() +
                                    " incompatible with input " + x.shape_str());
    if (static_cast<int>(bias.size()) != weight.n())
        throw std::invalid_argument("fully_connected: bias length " + std::to_string(bias.size()) +
                                    " != out features " + std::to_string(weight.n()));
    Tensor4<T> y(x.n(), weight.n(), 1, 1);
#pragma omp parallel for collapse(2) schedule(static)
    for (int in = 0; in < x.n(); ++in) {
        for (int k = 0; k < weight.n(); ++k) {
            const T* xv = x.plane(in, 0);
            const T* wv = weight.plane(k, 0);
            T acc = bias[k];
            for (int ic = 0; ic < x.c(); ++ic) acc += xv[ic] * wv[ic];
            y.at(in, k, 0, 0) = acc;
        }
    }
    return y;
}

}  // namespace repvgg
