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

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "repvgg/cost.hpp"
#include "repvgg/ops.hpp"
#include "repvgg/tensor.hpp"

namespace repvgg {

// Raised when a conv configuration cannot go through the Winograd path;
// callers fall back to direct convolution.
class UnsupportedConvError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct WinogradStats {
    std::int64_t elementwise_muls = 0;  // scalar multiplies in the Hadamard stage
    std::int64_t tiles = 0;             // 2x2 output tiles, summed over batch and groups
};

// F(2x2, 3x3) transform constants. All entries are dyadic rationals, so the
// transforms are exact in floating point:
//   B^T = [ 1  0 -1  0 ]   G = [  1    0    0  ]   A^T = [ 1  1  1  0 ]
//         [ 0  1  1  0 ]       [ 1/2  1/2  1/2 ]         [ 0  1 -1 -1 ]
//         [ 0 -1  1  0 ]       [ 1/2 -1/2  1/2 ]
//         [ 0  1  0 -1 ]       [  0    0    1  ]
// and for any 3x3 kernel k and 4x4 tile d,
//   A^T [ (G k G^T) .* (B^T d B) ] A  ==  valid 2x2 correlation of d by k.
namespace wino {

// d (4x4, row stride ld) -> v (16), v = B^T d B
template <typename T>
inline void transform_input_tile(const T* d, int ld, T* v) {
    T t[16];
    for (int j = 0; j < 4; ++j) {
        t[0 * 4 + j] = d[0 * ld + j] - d[2 * ld + j];
        t[1 * 4 + j] = d[1 * ld + j] + d[2 * ld + j];
        t[2 * 4 + j] = d[2 * ld + j] - d[1 * ld + j];
        t[3 * 4 + j] = d[1 * ld + j] - d[3 * ld + j];
    }
    for (int i = 0; i < 4; ++i) {
        v[i * 4 + 0] = t[i * 4 + 0] - t[i * 4 + 2];
        v[i * 4 + 1] = t[i * 4 + 1] + t[i * 4 + 2];
        v[i * 4 + 2] = t[i * 4 + 2] - t[i * 4 + 1];
        v[i * 4 + 3] = t[i * 4 + 1] - t[i * 4 + 3];
    }
}

// k (3x3) -> u (16), u = G k G^T
template <typename T>
inline void transform_kernel(const T* k, T* u) {
    const T half = T(0.5);
    T t[12];  // 4x3
    for (int j = 0; j < 3; ++j) {
        t[0 * 3 + j] = k[0 * 3 + j];
        t[1 * 3 + j] = (k[0 * 3 + j] + k[1 * 3 + j] + k[2 * 3 + j]) * half;
        t[2 * 3 + j] = (k[0 * 3 + j] - k[1 * 3 + j] + k[2 * 3 + j]) * half;
        t[3 * 3 + j] = k[2 * 3 + j];
    }
    for (int i = 0; i < 4; ++i) {
        u[i * 4 + 0] = t[i * 3 + 0];
        u[i * 4 + 1] = (t[i * 3 + 0] + t[i * 3 + 1] + t[i * 3 + 2]) * half;
        u[i * 4 + 2] = (t[i * 3 + 0] - t[i * 3 + 1] + t[i * 3 + 2]) * half;
        u[i * 4 + 3] = t[i * 3 + 2];
    }
}

// m (16) -> y (2x2), y = A^T m A
template <typename T>
inline void transform_output_tile(const T* m, T* y) {
    T t[8];  // 2x4
    for (int j = 0; j < 4; ++j) {
        t[0 * 4 + j] = m[0 * 4 + j] + m[1 * 4 + j] + m[2 * 4 + j];
        t[1 * 4 + j] = m[1 * 4 + j] - m[2 * 4 + j] - m[3 * 4 + j];
    }
    for (int i = 0; i < 2; ++i) {
        y[i * 2 + 0] = t[i * 4 + 0] + t[i * 4 + 1] + t[i * 4 + 2];
        y[i * 2 + 1] = t[i * 4 + 1] - t[i * 4 + 2] - t[i * 4 + 3];
    }
}

}  // namespace wino

// Transformed-kernel cache: one 4x4 block per (cOut, cIn/groups) pair.
// Precomputed once per conversion and reused across forward calls.
template <typename T>
struct WinogradKernel {
    int c_out = 0;
    int c_in_per_group = 0;
    int groups = 1;
    std::vector<T> u;  // (c_out, c_in_per_group, 16)

    const T* block(int oc, int ic) const {
        return u.data() + (static_cast<std::int64_t>(oc) * c_in_per_group + ic) * 16;
    }
};

template <typename T>
WinogradKernel<T> winograd_transform_kernel(const ConvParams<T>& p) {
    p.validate();
    if (p.kernel_h() != 3 || p.kernel_w() != 3)
        throw UnsupportedConvError("winograd: kernel must be 3x3, got " + p.kernel.shape_str());
    if (p.stride != 1)
        throw UnsupportedConvError("winograd: stride must be 1, got " + std::to_string(p.stride));

    WinogradKernel<T> wk;
    wk.c_out = p.out_channels();
    wk.c_in_per_group = p.kernel.c();
    wk.groups = p.groups;
    wk.u.resize(static_cast<std::size_t>(wk.c_out) * wk.c_in_per_group * 16);
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < wk.c_out; ++oc)
        for (int ic = 0; ic < wk.c_in_per_group; ++ic)
            wino::transform_kernel(p.kernel.plane(oc, ic),
                                   wk.u.data() + (static_cast<std::int64_t>(oc) * wk.c_in_per_group + ic) * 16);
    return wk;
}

// F(2x2, 3x3) convolution with a precomputed kernel transform. Edge handling:
// the padding-adjusted input is zero-extended to a whole number of 2x2 output
// tiles, computed, then cropped.
template <typename T>
Tensor4<T> winograd_conv3x3(const Tensor4<T>& x, const WinogradKernel<T>& wk,
                            const std::optional<std::vector<T>>& bias, int padding,
                            WinogradStats* stats = nullptr) {
    if (x.c() != wk.c_in_per_group * wk.groups)
        throw std::invalid_argument("winograd: input has " + std::to_string(x.c()) +
                                    " channels, kernel expects " +
                                    std::to_string(wk.c_in_per_group * wk.groups));
    if (bias && static_cast<int>(bias->size()) != wk.c_out)
        throw std::invalid_argument("winograd: bias length mismatch");
    const auto [oh, ow] = conv2d_output_hw(x.h(), x.w(), 3, 3, 1, padding);

    const int tiles_y = (oh + 1) / 2;
    const int tiles_x = (ow + 1) / 2;
    const std::int64_t tiles = static_cast<std::int64_t>(tiles_y) * tiles_x;
    const int ph = 2 * tiles_y + 2;  // padded input extent covering every tile
    const int pw = 2 * tiles_x + 2;
    const int cing = wk.c_in_per_group;
    const int coutg = wk.c_out / wk.groups;

    Tensor4<T> y(x.n(), wk.c_out, oh, ow);
    std::vector<T> padded(static_cast<std::size_t>(cing) * ph * pw);
    std::vector<T> v(static_cast<std::size_t>(cing) * tiles * 16);
    std::int64_t mul_count = 0;

    for (int in = 0; in < x.n(); ++in) {
        for (int g = 0; g < wk.groups; ++g) {
            // stage 1: zero-pad and transform the group's input tiles
            std::fill(padded.begin(), padded.end(), T(0));
#pragma omp parallel for schedule(static)
            for (int ic = 0; ic < cing; ++ic) {
                const T* src = x.plane(in, g * cing + ic);
                T* dst = padded.data() + static_cast<std::int64_t>(ic) * ph * pw;
                for (int iy = 0; iy < x.h(); ++iy) {
                    const int py = iy + padding;
                    if (py >= ph) break;
                    const int count = std::min(x.w(), pw - padding);
                    for (int ix = 0; ix < count; ++ix) dst[static_cast<std::int64_t>(py) * pw + padding + ix] = src[ix + static_cast<std::int64_t>(iy) * x.w()];
                }
                T* vt = v.data() + static_cast<std::int64_t>(ic) * tiles * 16;
                for (int ty = 0; ty < tiles_y; ++ty)
                    for (int tx = 0; tx < tiles_x; ++tx)
                        wino::transform_input_tile(dst + static_cast<std::int64_t>(2 * ty) * pw + 2 * tx, pw,
                                                   vt + (static_cast<std::int64_t>(ty) * tiles_x + tx) * 16);
            }

            // stage 2+3: Hadamard accumulation over input channels, then the
            // inverse transform and crop
#pragma omp parallel for schedule(static)
            for (int ocg = 0; ocg < coutg; ++ocg) {
                const int oc = g * coutg + ocg;
                const T b = bias ? (*bias)[oc] : T(0);
                T* out = y.plane(in, oc);
                for (std::int64_t t = 0; t < tiles; ++t) {
                    T m[16] = {};
                    for (int ic = 0; ic < cing; ++ic) {
                        const T* u = wk.block(oc, ic);
                        const T* vt = v.data() + (static_cast<std::int64_t>(ic) * tiles + t) * 16;
                        for (int j = 0; j < 16; ++j) m[j] += u[j] * vt[j];
                    }
                    T tile_out[4];
                    wino::transform_output_tile(m, tile_out);
                    const int oy = static_cast<int>(t / tiles_x) * 2;
                    const int ox = static_cast<int>(t % tiles_x) * 2;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            if (oy + dy < oh && ox + dx < ow)
                                out[static_cast<std::int64_t>(oy + dy) * ow + ox + dx] = tile_out[dy * 2 + dx] + b;
                }
            }
            if (stats) mul_count += tiles * coutg * cing * 16;
        }
        if (stats) stats->tiles += tiles * wk.groups;
    }
    if (stats) stats->elementwise_muls += mul_count;
    return y;
}

template <typename T>
Tensor4<T> winograd_conv3x3(const Tensor4<T>& x, const ConvParams<T>& p, WinogradStats* stats = nullptr) {
    check_conv_input(x, p);
    const WinogradKernel<T> wk = winograd_transform_kernel(p);
    return winograd_conv3x3(x, wk, p.bias, p.padding, stats);
}

// Multiply count under the Winograd convention: a stride-1 3x3 conv runs
// F(2x2, 3x3) and needs 4/9 of the direct multiplies; anything else is counted
// directly. direct_muls is always divisible by 9 for a 3x3 kernel.
inline std::int64_t wino_mul_count(const LayerCost& layer) {
    const std::int64_t direct = layer.direct_muls();
    if (layer.stride == 1 && layer.k_h == 3 && layer.k_w == 3) return direct * 4 / 9;
    return direct;
}

}  // namespace repvgg
