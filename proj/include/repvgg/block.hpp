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

#include <optional>
#include <stdexcept>

#include "repvgg/ops.hpp"
#include "repvgg/rng.hpp"
#include "repvgg/tensor.hpp"

namespace repvgg {

// Training-time block: parallel 3x3+BN, 1x1+BN and (when the shapes allow it)
// identity+BN branches, summed, then ReLU. The branch convs are bias-free; all
// affine freedom lives in the BN layers. The 1x1 branch pads one pixel less
// than the 3x3 branch and shares its stride and groups, which is what makes
// the three branches collapsible into one 3x3 kernel.
template <typename T>
struct RepVggBlock {
    int c_in = 0;
    int c_out = 0;
    int stride = 1;
    int groups = 1;

    ConvParams<T> conv3;  // 3x3, padding 1
    BnParams<T> bn3;
    ConvParams<T> conv1;  // 1x1, padding 0
    BnParams<T> bn1;
    std::optional<BnParams<T>> bn_id;  // present iff c_in == c_out and stride == 1

    bool has_identity() const { return bn_id.has_value(); }

    void validate() const {
        conv3.validate();
        conv1.validate();
        bn3.validate();
        bn1.validate();
        if (conv3.kernel_h() != 3 || conv1.kernel_h() != 1)
            throw std::invalid_argument("RepVggBlock: branch kernels must be 3x3 and 1x1");
        if (conv3.bias || conv1.bias)
            throw std::invalid_argument("RepVggBlock: branch convs must not carry a bias");
        if (conv1.padding != conv3.padding - 1)
            throw std::invalid_argument("RepVggBlock: 1x1 branch padding must be one pixel less than the 3x3 branch");
        if (conv1.stride != conv3.stride)
            throw std::invalid_argument("RepVggBlock: branch strides differ");
        if (conv1.groups != conv3.groups)
            throw std::invalid_argument("RepVggBlock: 1x1 branch must use the same groups as the 3x3 branch");
        if (conv3.in_channels() != c_in || conv3.out_channels() != c_out ||
            conv1.in_channels() != c_in || conv1.out_channels() != c_out)
            throw std::invalid_argument("RepVggBlock: branch channel counts disagree with block");
        if (bn3.channels() != c_out || bn1.channels() != c_out)
            throw std::invalid_argument("RepVggBlock: BN channel mismatch");
        const bool identity_legal = (c_in == c_out && stride == 1);
        if (bn_id.has_value() != identity_legal)
            throw std::invalid_argument(identity_legal
                                            ? "RepVggBlock: identity branch missing on a shape-preserving block"
                                            : "RepVggBlock: identity branch on a non-shape-preserving block");
        if (bn_id) {
            bn_id->validate();
            if (bn_id->channels() != c_out)
                throw std::invalid_argument("RepVggBlock: identity BN channel mismatch");
        }
    }
};

// Structurally decides the identity branch and zero-initializes BN statistics
// (mu 0, var 1, gamma 1, beta 0). Kernels are filled by the caller.
template <typename T>
RepVggBlock<T> make_block_shell(int c_in, int c_out, int stride, int groups, T eps = static_cast<T>(1e-5)) {
    if (c_in % groups != 0 || c_out % groups != 0)
        throw std::invalid_argument("make_block_shell: channels not divisible by groups");
    RepVggBlock<T> b;
    b.c_in = c_in;
    b.c_out = c_out;
    b.stride = stride;
    b.groups = groups;
    b.conv3 = ConvParams<T>{Tensor4<T>(c_out, c_in / groups, 3, 3), std::nullopt, stride, 1, groups};
    b.conv1 = ConvParams<T>{Tensor4<T>(c_out, c_in / groups, 1, 1), std::nullopt, stride, 0, groups};
    b.bn3 = BnParams<T>::identity(c_out, eps);
    b.bn1 = BnParams<T>::identity(c_out, eps);
    if (c_in == c_out && stride == 1) b.bn_id = BnParams<T>::identity(c_out, eps);
    return b;
}

// relu( bn3(conv3(x)) + bn1(conv1(x)) + [bnid(x)] ); without the identity
// branch the sum has only the first two terms.
template <typename T>
Tensor4<T> block_forward_train(const RepVggBlock<T>& block, const Tensor4<T>& x) {
    if (x.c() != block.c_in)
        throw std::invalid_argument("block_forward_train: input has " + std::to_string(x.c()) +
                                    " channels, block expects " + std::to_string(block.c_in));
    Tensor4<T> sum = batch_norm_infer(conv2d(x, block.conv3), block.bn3);
    {
        const Tensor4<T> b1 = batch_norm_infer(conv2d(x, block.conv1), block.bn1);
        for (std::int64_t i = 0; i < sum.size(); ++i) sum.data()[i] += b1.data()[i];
    }
    if (block.bn_id) {
        const Tensor4<T> bid = batch_norm_infer(x, *block.bn_id);
        for (std::int64_t i = 0; i < sum.size(); ++i) sum.data()[i] += bid.data()[i];
    }
    return relu(sum);
}

// Deploy form of the same block: one biased 3x3 conv followed by ReLU.
template <typename T>
Tensor4<T> block_forward_deploy(const ConvParams<T>& fused, const Tensor4<T>& x) {
    if (!fused.bias) throw std::invalid_argument("block_forward_deploy: fused conv must carry a bias");
    if (fused.kernel_h() != 3) throw std::invalid_argument("block_forward_deploy: fused conv must be 3x3");
    return relu(conv2d(x, fused));
}

}  // namespace repvgg
