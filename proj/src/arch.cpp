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

#include "repvgg/arch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace repvgg {

namespace {

constexpr int kStageCount = 5;

std::vector<int> family_layers(Variant v) {
    if (v == Variant::A) return {1, 2, 4, 14, 1};
    if (v == Variant::B) return {1, 4, 6, 16, 1};
    throw std::invalid_argument("family_layers: custom variant has no fixed layout");
}

// "3rd, 5th, ..., 21st layer" for both variants, plus "23rd, 25th and 27th"
// for B. 1-based over all conv layers, stage1's included.
std::vector<int> family_groupwise_layers(Variant v) {
    std::vector<int> idx;
    for (int i = 3; i <= 21; i += 2) idx.push_back(i);
    if (v == Variant::B)
        for (int i = 23; i <= 27; i += 2) idx.push_back(i);
    return idx;
}

int scaled_width(double base, double mult, int groups, const std::string& stage) {
    const double exact = base * mult;
    int w = static_cast<int>(std::lround(exact));
    if (std::abs(exact - w) > 1e-9) {
        // non-integer multiplier product: round, then up to a multiple of g
        w = static_cast<int>(std::lround(exact));
        if (groups > 1 && w % groups != 0) w += groups - w % groups;
    }
    if (w <= 0) throw std::invalid_argument("build_spec: non-positive width for " + stage);
    return w;
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::A: return "A";
        case Variant::B: return "B";
        default: return "custom";
    }
}

std::string to_string(Mode m) { return m == Mode::Train ? "train" : "deploy"; }

Variant variant_from_string(const std::string& s) {
    if (s == "A") return Variant::A;
    if (s == "B") return Variant::B;
    if (s == "custom") return Variant::Custom;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

Mode mode_from_string(const std::string& s) {
    if (s == "train") return Mode::Train;
    if (s == "deploy") return Mode::Deploy;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

int ModelSpec::total_layers() const {
    int total = 0;
    for (int l : layers_per_stage) total += l;
    return total;
}

bool ModelSpec::is_groupwise(int global_index) const {
    return groups > 1 &&
           std::find(groupwise_layers.begin(), groupwise_layers.end(), global_index) !=
               groupwise_layers.end();
}

void ModelSpec::validate() const {
    if (layers_per_stage.empty())
        throw std::invalid_argument("ModelSpec: no stages");
    if (layers_per_stage.size() != stage_widths.size())
        throw std::invalid_argument("ModelSpec: layers_per_stage and stage_widths lengths differ");
    for (int l : layers_per_stage)
        if (l < 1) throw std::invalid_argument("ModelSpec: every stage needs at least one layer");
    for (std::size_t s = 0; s < stage_widths.size(); ++s)
        if (stage_widths[s] < 1)
            throw std::invalid_argument("ModelSpec: non-positive width in stage" + std::to_string(s + 1));
    if (variant == Variant::A && layers_per_stage != family_layers(Variant::A))
        throw std::invalid_argument("ModelSpec: variant A requires 1,2,4,14,1 layers per stage");
    if (variant == Variant::B && layers_per_stage != family_layers(Variant::B))
        throw std::invalid_argument("ModelSpec: variant B requires 1,4,6,16,1 layers per stage");
    if (groups < 1) throw std::invalid_argument("ModelSpec: groups must be positive");
    if (num_classes < 1) throw std::invalid_argument("ModelSpec: num_classes must be positive");
    if (input_channels < 1) throw std::invalid_argument("ModelSpec: input_channels must be positive");

    const int total = total_layers();
    int prev = 0;
    for (int idx : groupwise_layers) {
        if (idx < 1 || idx > total)
            throw std::invalid_argument("ModelSpec: groupwise layer index " + std::to_string(idx) +
                                        " out of range");
        if (idx <= prev) throw std::invalid_argument("ModelSpec: groupwise layer indices must increase");
        if (prev != 0 && idx == prev + 1)
            throw std::invalid_argument("ModelSpec: adjacent groupwise conv layers are not allowed");
        prev = idx;
    }

    // a groupwise layer needs both its input and output widths divisible by g
    if (groups > 1) {
        for (const LayerInfo& li : layer_layout(*this)) {
            if (li.groups > 1 && (li.c_in % li.groups != 0 || li.c_out % li.groups != 0))
                throw std::invalid_argument("ModelSpec: stage" + std::to_string(li.stage + 1) +
                                            " width not divisible by groups " + std::to_string(groups));
        }
    }
}

ModelSpec build_spec(Variant variant, double a, double b, int groups, int num_classes) {
    if (variant == Variant::Custom)
        throw std::invalid_argument("build_spec: use make_custom_spec for custom layouts");
    if (a <= 0 || b <= 0) throw std::invalid_argument("build_spec: multipliers must be positive");
    if (groups != 1 && groups != 2 && groups != 4)
        throw std::invalid_argument("build_spec: groups must be 1, 2 or 4");

    ModelSpec spec;
    spec.variant = variant;
    spec.layers_per_stage = family_layers(variant);
    spec.mult_a = a;
    spec.mult_b = b;
    spec.groups = groups;
    spec.num_classes = num_classes;
    spec.input_channels = 3;
    if (groups > 1) spec.groupwise_layers = family_groupwise_layers(variant);

    spec.stage_widths.resize(kStageCount);
    spec.stage_widths[0] = std::min(64, scaled_width(64, a, groups, "stage1"));
    spec.stage_widths[1] = scaled_width(64, a, groups, "stage2");
    spec.stage_widths[2] = scaled_width(128, a, groups, "stage3");
    spec.stage_widths[3] = scaled_width(256, a, groups, "stage4");
    spec.stage_widths[4] = scaled_width(512, b, groups, "stage5");
    spec.name = to_string(variant);
    spec.validate();
    return spec;
}

ModelSpec make_custom_spec(std::vector<int> layers_per_stage, std::vector<int> stage_widths,
                           int num_classes, int input_channels, int groups,
                           std::vector<int> groupwise_layers) {
    ModelSpec spec;
    spec.variant = Variant::Custom;
    spec.name = "custom";
    spec.layers_per_stage = std::move(layers_per_stage);
    spec.stage_widths = std::move(stage_widths);
    spec.num_classes = num_classes;
    spec.input_channels = input_channels;
    spec.groups = groups;
    spec.groupwise_layers = std::move(groupwise_layers);
    spec.validate();
    return spec;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"A0", "A1",   "A2",   "B0", "B1",   "B1g2",
                                                   "B1g4", "B2", "B2g2", "B2g4", "B3", "B3g4"};
    return names;
}

ModelSpec preset_spec(const std::string& name, int num_classes) {
    ModelSpec spec;
    if (name == "A0") spec = build_spec(Variant::A, 0.75, 2.5, 1, num_classes);
    else if (name == "A1") spec = build_spec(Variant::A, 1.0, 2.5, 1, num_classes);
    else if (name == "A2") spec = build_spec(Variant::A, 1.5, 2.75, 1, num_classes);
    else if (name == "B0") spec = build_spec(Variant::B, 1.0, 2.5, 1, num_classes);
    else if (name == "B1") spec = build_spec(Variant::B, 2.0, 4.0, 1, num_classes);
    else if (name == "B1g2") spec = build_spec(Variant::B, 2.0, 4.0, 2, num_classes);
    else if (name == "B1g4") spec = build_spec(Variant::B, 2.0, 4.0, 4, num_classes);
    else if (name == "B2") spec = build_spec(Variant::B, 2.5, 5.0, 1, num_classes);
    else if (name == "B2g2") spec = build_spec(Variant::B, 2.5, 5.0, 2, num_classes);
    else if (name == "B2g4") spec = build_spec(Variant::B, 2.5, 5.0, 4, num_classes);
    else if (name == "B3") spec = build_spec(Variant::B, 3.0, 5.0, 1, num_classes);
    else if (name == "B3g4") spec = build_spec(Variant::B, 3.0, 5.0, 4, num_classes);
    else throw std::invalid_argument("unknown preset '" + name + "'");
    spec.name = name;
    return spec;
}

std::vector<LayerInfo> layer_layout(const ModelSpec& spec) {
    std::vector<LayerInfo> layout;
    layout.reserve(spec.total_layers());
    int index = 0;
    int c_in = spec.input_channels;
    for (int stage = 0; stage < spec.num_stages(); ++stage) {
        const int width = spec.stage_widths[stage];
        for (int l = 0; l < spec.layers_per_stage[stage]; ++l) {
            ++index;
            LayerInfo li;
            li.stage = stage;
            li.index = index;
            li.c_in = c_in;
            li.c_out = width;
            li.stride = (l == 0) ? 2 : 1;
            li.groups = spec.is_groupwise(index) ? spec.groups : 1;
            li.has_identity = (li.stride == 1 && li.c_in == li.c_out);
            layout.push_back(li);
            c_in = width;
        }
    }
    return layout;
}

}  // namespace repvgg
