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

#include <cmath>
#include <utility>
#include <vector>

#include "repvgg/arch.hpp"
#include "repvgg/block.hpp"
#include "repvgg/tensor.hpp"

namespace repvgg {

template <typename T>
struct FusedKernelBias {
    Tensor4<T> kernel;
    std::vector<T> bias;
};

namespace detail {

// Folds a BN into the preceding bias-free conv:
//   W'(i,:,:,:) = (gamma_i / sigma_i) W(i,:,:,:)
//   b'_i        = beta_i - mu_i gamma_i / sigma_i,   sigma_i = sqrt(var_i + eps)
// Arithmetic in double regardless of the model scalar type; fusion happens
// once, so the extra precision is free and halves the equivalence error.
template <typename T>
FusedKernelBias<double> fuse_bn_f64(const ConvParams<T>& conv, const BnParams<T>& bn) {
    conv.validate();
    bn.validate();
    if (conv.bias) throw std::invalid_argument("fuse_bn: conv already carries a bias");
    if (bn.channels() != conv.out_channels())
        throw std::invalid_argument("fuse_bn: " + std::to_string(bn.channels()) + " BN channels vs " +
                                    std::to_string(conv.out_channels()) + " conv output channels");

    const int cout = conv.out_channels();
    const std::int64_t per_out = conv.kernel.size() / cout;
    Tensor4<double> kernel(cout, conv.kernel.c(), conv.kernel_h(), conv.kernel_w());
    std::vector<double> bias(cout);
    for (int oc = 0; oc < cout; ++oc) {
        const double sigma = std::sqrt(static_cast<double>(bn.var[oc]) + static_cast<double>(bn.eps));
        const double scale = static_cast<double>(bn.gamma[oc]) / sigma;
        const T* src = conv.kernel.data() + oc * per_out;
        double* dst = kernel.data() + oc * per_out;
        for (std::int64_t i = 0; i < per_out; ++i) dst[i] = scale * static_cast<double>(src[i]);
        bias[oc] = -static_cast<double>(bn.mu[oc]) * scale + static_cast<double>(bn.beta[oc]);
    }
    return {std::move(kernel), std::move(bias)};
}

template <typename T>
FusedKernelBias<T> cast_fused(FusedKernelBias<double>&& f) {
    FusedKernelBias<T> out;
    out.kernel = f.kernel.template cast<T>();
    out.bias.resize(f.bias.size());
    for (std::size_t i = 0; i < f.bias.size(); ++i) out.bias[i] = static_cast<T>(f.bias[i]);
    return out;
}

template <typename T>
Tensor4<double> pad_1x1_to_3x3_f64(const Tensor4<T>& k1) {
    if (k1.h() != 1 || k1.w() != 1)
        throw std::invalid_argument("pad_1x1_to_3x3: kernel must be 1x1, got " + k1.shape_str());
    Tensor4<double> k3(k1.n(), k1.c(), 3, 3);
    for (int oc = 0; oc < k1.n(); ++oc)
        for (int ic = 0; ic < k1.c(); ++ic)
            k3.at(oc, ic, 1, 1) = static_cast<double>(k1.at(oc, ic, 0, 0));
    return k3;
}

}  // namespace detail

// The BN-folding step on its own, satisfying bn(M * W) == M * W' + b'.
template <typename T>
FusedKernelBias<T> fuse_bn(const ConvParams<T>& conv, const BnParams<T>& bn) {
    return detail::cast_fused<T>(detail::fuse_bn_f64(conv, bn));
}

// Zero-pads a 1x1 kernel to 3x3 with the value at the center, so that
// conv(x, padded, pad + 1, stride) == conv(x, 1x1, pad, stride).
template <typename T>
Tensor4<T> pad_1x1_to_3x3(const Tensor4<T>& k1) {
    return detail::pad_1x1_to_3x3_f64(k1).template cast<T>();
}

// The identity map written as a grouped 1x1 conv: kernel (C, C/g, 1, 1) with
// kernel[i, i mod C/g] = 1.
template <typename T>
Tensor4<T> identity_to_1x1(int channels, int groups) {
    if (channels <= 0 || groups <= 0 || channels % groups != 0)
        throw std::invalid_argument("identity_to_1x1: channels " + std::to_string(channels) +
                                    " not divisible by groups " + std::to_string(groups));
    const int cing = channels / groups;
    Tensor4<T> k(channels, cing, 1, 1);
    for (int i = 0; i < channels; ++i) k.at(i, i % cing, 0, 0) = T(1);
    return k;
}

// Collapses the two or three branches into a single biased 3x3 conv:
// each branch is BN-folded, 1x1 kernels (including the identity branch, which
// is materialized as an identity 1x1 conv and folded through the same code
// path) are zero-padded to 3x3, then kernels and biases are summed.
template <typename T>
ConvParams<T> convert_block(const RepVggBlock<T>& block) {
    block.validate();

    FusedKernelBias<double> f3 = detail::fuse_bn_f64(block.conv3, block.bn3);
    const FusedKernelBias<double> f1 = detail::fuse_bn_f64(block.conv1, block.bn1);
    const Tensor4<double> p1 = detail::pad_1x1_to_3x3_f64(f1.kernel);
    for (std::int64_t i = 0; i < f3.kernel.size(); ++i) f3.kernel.data()[i] += p1.data()[i];
    for (int oc = 0; oc < block.c_out; ++oc) f3.bias[oc] += f1.bias[oc];

    if (block.bn_id) {
        ConvParams<T> id_conv{identity_to_1x1<T>(block.c_in, block.groups), std::nullopt,
                              1, 0, block.groups};
        const FusedKernelBias<double> fid = detail::fuse_bn_f64(id_conv, *block.bn_id);
        const Tensor4<double> pid = detail::pad_1x1_to_3x3_f64(fid.kernel);
        for (std::int64_t i = 0; i < f3.kernel.size(); ++i) f3.kernel.data()[i] += pid.data()[i];
        for (int oc = 0; oc < block.c_out; ++oc) f3.bias[oc] += fid.bias[oc];
    }

    FusedKernelBias<T> fused = detail::cast_fused<T>(std::move(f3));
    return ConvParams<T>{std::move(fused.kernel), std::move(fused.bias), block.stride, 1, block.groups};
}

// Converts every block of a train-mode model into its fused form and caches
// the Winograd kernel transform for the stride-1 layers; the head is copied
// unchanged. Converting an already-deployed model is a no-op.
template <typename T>
Model<T> convert_model(const Model<T>& model) {
    if (model.mode == Mode::Deploy) return model;
    Model<T> out;
    out.spec = model.spec;
    out.mode = Mode::Deploy;
    out.fused.reserve(model.blocks.size());
    for (const auto& block : model.blocks) {
        typename Model<T>::DeployLayer layer;
        layer.conv = convert_block(block);
        if (layer.conv.stride == 1) layer.wino = winograd_transform_kernel(layer.conv);
        out.fused.push_back(std::move(layer));
    }
    out.fc_weight = model.fc_weight;
    out.fc_bias = model.fc_bias;
    return out;
}

}  // namespace repvgg
