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
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace repvgg {

// Dense rank-4 array, row-major in (n, c, h, w). Activations use
// (batch, channel, height, width); kernels use (cOut, cIn/groups, kH, kW).
template <typename T>
class Tensor4 {
public:
    Tensor4() = default;

    Tensor4(int n, int c, int h, int w)
        : n_(n), c_(c), h_(h), w_(w), data_(checked_size(n, c, h, w), T(0)) {}

    Tensor4(int n, int c, int h, int w, std::vector<T> data)
        : n_(n), c_(c), h_(h), w_(w), data_(std::move(data)) {
        if (data_.size() != checked_size(n, c, h, w))
            throw std::invalid_argument("Tensor4: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str());
    }

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }

    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    std::int64_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::int64_t>(in) * c_ + ic) * h_ + iy) * w_ + ix;
    }

    T& at(int in, int ic, int iy, int ix) { return data_[index(in, ic, iy, ix)]; }
    T at(int in, int ic, int iy, int ix) const { return data_[index(in, ic, iy, ix)]; }

    // Pointer to the (n, c) plane.
    T* plane(int in, int ic) { return data_.data() + index(in, ic, 0, 0); }
    const T* plane(int in, int ic) const { return data_.data() + index(in, ic, 0, 0); }

    bool same_shape(const Tensor4& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    std::string shape_str() const {
        return "(" + std::to_string(n_) + ", " + std::to_string(c_) + ", " + std::to_string(h_) +
               ", " + std::to_string(w_) + ")";
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor4<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor4<U>(n_, c_, h_, w_, std::move(out));
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    static std::size_t checked_size(int n, int c, int h, int w) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw std::invalid_argument("Tensor4: negative dimension");
        return static_cast<std::size_t>(n) * c * h * w;
    }

    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

template <typename T>
double max_abs(const Tensor4<T>& t) {
    double m = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(static_cast<double>(t.data()[i])));
    return m;
}

template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return m;
}

// Convolution layer parameters. Kernel is (cOut, cIn/groups, kH, kW); branch
// convs inside a training-time block carry no bias, fused deploy convs do.
template <typename T>
struct ConvParams {
    Tensor4<T> kernel;
    std::optional<std::vector<T>> bias;
    int stride = 1;
    int padding = 0;
    int groups = 1;

    int out_channels() const { return kernel.n(); }
    int in_channels() const { return kernel.c() * groups; }
    int kernel_h() const { return kernel.h(); }
    int kernel_w() const { return kernel.w(); }

    void validate() const {
        if (kernel.empty()) throw std::invalid_argument("ConvParams: empty kernel");
        if (stride < 1) throw std::invalid_argument("ConvParams: stride must be positive");
        if (padding < 0) throw std::invalid_argument("ConvParams: negative padding");
        if (groups < 1) throw std::invalid_argument("ConvParams: groups must be positive");
        if (kernel_h() != kernel_w())
            throw std::invalid_argument("ConvParams: non-square kernel " + kernel.shape_str());
        if (out_channels() % groups != 0)
            throw std::invalid_argument("ConvParams: cOut " + std::to_string(out_channels()) +
                                        " not divisible by groups " + std::to_string(groups));
        if (bias && static_cast<int>(bias->size()) != out_channels())
            throw std::invalid_argument("ConvParams: bias length " + std::to_string(bias->size()) +
                                        " != cOut " + std::to_string(out_channels()));
    }
};

// Inference-time batch-norm statistics and affine parameters. sigma(i) is
// housed as sqrt(var(i) + eps), never stored directly.
template <typename T>
struct BnParams {
    std::vector<T> mu;
    std::vector<T> var;
    std::vector<T> gamma;
    std::vector<T> beta;
    T eps = static_cast<T>(1e-5);

    int channels() const { return static_cast<int>(mu.size()); }

    static BnParams identity(int c, T eps = static_cast<T>(1e-5)) {
        BnParams bn;
        bn.mu.assign(c, T(0));
        bn.var.assign(c, T(1));
        bn.gamma.assign(c, T(1));
        bn.beta.assign(c, T(0));
        bn.eps = eps;
        return bn;
    }

    void validate() const {
        const std::size_t c = mu.size();
        if (c == 0) throw std::invalid_argument("BnParams: zero channels");
        if (var.size() != c || gamma.size() != c || beta.size() != c)
            throw std::invalid_argument("BnParams: per-channel vectors have unequal lengths");
        if (!(eps > T(0))) throw std::invalid_argument("BnParams: eps must be positive");
        for (T v : var)
            if (static_cast<double>(v) + static_cast<double>(eps) <= 0.0)
                throw std::invalid_argument("BnParams: var + eps must be positive");
    }
};

}  // namespace repvgg
