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
#include <optional>
#include <string>
#include <vector>

#include "repvgg/block.hpp"
#include "repvgg/rng.hpp"
#include "repvgg/tensor.hpp"
#include "repvgg/winograd.hpp"

namespace repvgg {

enum class Variant { A, B, Custom };
enum class Mode { Train, Deploy };

std::string to_string(Variant v);
std::string to_string(Mode m);
Variant variant_from_string(const std::string& s);
Mode mode_from_string(const std::string& s);

// Architecture description. A and B variants follow the five-stage family
// (stage widths [min(64, 64a), 64a, 128a, 256a, 512b], stride 2 at each stage
// start, groupwise layers at global indices 3, 5, ..., 21 plus 23, 25, 27 for
// B). Custom specs give the stage layout explicitly, which is how the small
// desk-scale models used for training and fixtures are built.
struct ModelSpec {
    std::string name = "custom";
    Variant variant = Variant::Custom;
    std::vector<int> layers_per_stage;
    std::vector<int> stage_widths;
    double mult_a = 1.0;
    double mult_b = 1.0;
    int groups = 1;                        // g applied on groupwise layers
    std::vector<int> groupwise_layers;     // 1-based global conv indices
    int num_classes = 1000;
    int input_channels = 3;

    int num_stages() const { return static_cast<int>(layers_per_stage.size()); }
    int total_layers() const;
    int min_input_size() const { return 1 << num_stages(); }
    bool is_groupwise(int global_index) const;
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

// Table-derived spec for the A/B family.
ModelSpec build_spec(Variant variant, double a, double b, int groups, int num_classes = 1000);

// Free-form spec; groupwise_layers empty unless given.
ModelSpec make_custom_spec(std::vector<int> layers_per_stage, std::vector<int> stage_widths,
                           int num_classes, int input_channels = 3, int groups = 1,
                           std::vector<int> groupwise_layers = {});

// Named presets: A0 A1 A2 B0 B1 B1g2 B1g4 B2 B2g2 B2g4 B3 B3g4.
ModelSpec preset_spec(const std::string& name, int num_classes = 1000);
const std::vector<std::string>& preset_names();

struct LayerInfo {
    int stage = 0;        // 0-based
    int index = 0;        // 1-based global conv index
    int c_in = 0;
    int c_out = 0;
    int stride = 1;
    int groups = 1;
    bool has_identity = false;
};

std::vector<LayerInfo> layer_layout(const ModelSpec& spec);

// Conv algorithm selection for forward passes. Auto picks Winograd for
// stride-1 3x3 layers whose transform cache is present, direct otherwise.
enum class ConvPath { Auto, Direct, Winograd };

template <typename T>
struct Model {
    struct DeployLayer {
        ConvParams<T> conv;                     // biased 3x3
        std::optional<WinogradKernel<T>> wino;  // cached transform for stride-1 layers
    };

    ModelSpec spec;
    Mode mode = Mode::Train;
    std::vector<RepVggBlock<T>> blocks;  // train mode
    std::vector<DeployLayer> fused;      // deploy mode
    Tensor4<T> fc_weight;                // (num_classes, last stage width, 1, 1)
    std::vector<T> fc_bias;

    // Stored parameter scalars (kernels, biases, BN statistics and affine
    // terms, FC); excludes eps and derived caches.
    std::int64_t parameter_count() const {
        std::int64_t total = fc_weight.size() + static_cast<std::int64_t>(fc_bias.size());
        for (const auto& b : blocks) {
            total += b.conv3.kernel.size() + b.conv1.kernel.size();
            total += 4LL * b.bn3.channels() + 4LL * b.bn1.channels();
            if (b.bn_id) total += 4LL * b.bn_id->channels();
        }
        for (const auto& f : fused)
            total += f.conv.kernel.size() + static_cast<std::int64_t>(f.conv.bias ? f.conv.bias->size() : 0);
        return total;
    }
};

// Deterministic random initialization: conv and FC kernels uniform in
// +/- sqrt(1.5/fan_in) (fan-in bound scaled for the three-branch sum so
// activations stay O(1) with depth), BN at mu 0, var 1, gamma 1, beta 0.
template <typename T>
Model<T> instantiate(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Model<T> model;
    model.spec = spec;
    model.mode = Mode::Train;
    Rng rng(seed);

    auto fill_uniform = [&rng](Tensor4<T>& t, int fan_in) {
        const double bound = std::sqrt(1.5 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < t.size(); ++i)
            t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    };

    for (const LayerInfo& li : layer_layout(spec)) {
        RepVggBlock<T> b = make_block_shell<T>(li.c_in, li.c_out, li.stride, li.groups);
        fill_uniform(b.conv3.kernel, (li.c_in / li.groups) * 9);
        fill_uniform(b.conv1.kernel, li.c_in / li.groups);
        model.blocks.push_back(std::move(b));
    }

    const int last_width = spec.stage_widths.back();
    model.fc_weight = Tensor4<T>(spec.num_classes, last_width, 1, 1);
    fill_uniform(model.fc_weight, last_width);
    model.fc_bias.assign(spec.num_classes, T(0));
    return model;
}

// Winograd applies to stride-1 3x3 layers only; stride-2 layers always run
// the direct kernel, whatever the requested path.
template <typename T>
Tensor4<T> run_conv_layer(const typename Model<T>::DeployLayer& layer, const Tensor4<T>& x,
                          ConvPath path) {
    const bool wino_ok = layer.conv.stride == 1 && layer.conv.kernel_h() == 3;
    if (path == ConvPath::Direct || !wino_ok) return conv2d(x, layer.conv);
    if (path == ConvPath::Winograd) {
        if (layer.wino) return winograd_conv3x3(x, *layer.wino, layer.conv.bias, layer.conv.padding);
        return winograd_conv3x3(x, layer.conv);
    }
    // Auto: use the transform cache when the conversion prepared one
    if (layer.wino) return winograd_conv3x3(x, *layer.wino, layer.conv.bias, layer.conv.padding);
    return conv2d(x, layer.conv);
}

// Whole-model inference forward (running BN statistics). Returns logits as
// (n, num_classes, 1, 1).
template <typename T>
Tensor4<T> forward(const Model<T>& model, const Tensor4<T>& input, ConvPath path = ConvPath::Auto) {
    if (input.c() != model.spec.input_channels)
        throw std::invalid_argument("forward: input has " + std::to_string(input.c()) +
                                    " channels, model expects " +
                                    std::to_string(model.spec.input_channels));
    if (input.h() < model.spec.min_input_size() || input.w() < model.spec.min_input_size())
        throw std::invalid_argument("forward: input " + std::to_string(input.h()) + "x" +
                                    std::to_string(input.w()) + " too small; a " +
                                    std::to_string(model.spec.num_stages()) +
                                    "-stage model needs at least " +
                                    std::to_string(model.spec.min_input_size()) + " pixels per side");

    Tensor4<T> x = input;
    if (model.mode == Mode::Train) {
        for (const auto& block : model.blocks) x = block_forward_train(block, x);
    } else {
        for (const auto& layer : model.fused) x = relu(run_conv_layer<T>(layer, x, path));
    }
    return fully_connected(global_avg_pool(x), model.fc_weight, model.fc_bias);
}

template <typename T>
std::vector<int> argmax_per_sample(const Tensor4<T>& logits) {
    std::vector<int> out(logits.n());
    for (int in = 0; in < logits.n(); ++in) {
        const T* row = logits.plane(in, 0);
        int best = 0;
        for (int k = 1; k < logits.c(); ++k)
            if (row[k] > row[best]) best = k;
        out[in] = best;
    }
    return out;
}

}  // namespace repvgg
