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
#include <string>

namespace repvgg {

// Static description of one layer's compute, derived from a model spec and an
// input resolution. "fc" rows model the classifier head with kH = kW = 1 over
// a 1x1 spatial extent.
struct LayerCost {
    std::string name;   // "conv7", "fc"
    int layer_index = 0;  // 1-based global conv index; 0 for the head
    int stage = 0;
    int c_in = 0;
    int c_out = 0;
    int k_h = 0;
    int k_w = 0;
    int stride = 1;
    int groups = 1;
    int out_h = 0;
    int out_w = 0;
    bool has_identity = false;  // training-time identity branch eligibility

    std::int64_t out_elems() const {
        return static_cast<std::int64_t>(c_out) * out_h * out_w;
    }

    // One multiply-add counted as a single operation.
    std::int64_t direct_muls() const {
        return out_elems() * k_h * k_w * (c_in / groups);
    }
};

}  // namespace repvgg
