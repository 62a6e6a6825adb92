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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "repvgg/arch.hpp"
#include "repvgg/bigint.hpp"
#include "repvgg/cost.hpp"

namespace repvgg {

struct EnsembleSize {
    int three_way_blocks = 0;  // blocks with the identity branch
    int two_way_blocks = 0;
    BigUint value;             // 3^three_way * 2^two_way
    std::string decimal;
};

struct CostRow {
    LayerCost layer;
    std::int64_t params = 0;
    std::int64_t flops = 0;       // multiply-add counted once
    std::int64_t wino_muls = 0;
};

struct CostReport {
    std::string model_name;
    int input_res = 0;
    Mode mode = Mode::Deploy;
    std::vector<CostRow> rows;    // conv layers in order, then the fc head
    std::int64_t total_params = 0;
    std::int64_t total_flops = 0;
    std::int64_t total_wino_muls = 0;
    std::int64_t peak_train_bytes = 0;
    std::int64_t peak_deploy_bytes = 0;
    EnsembleSize ensemble;

    void write_csv(std::ostream& os) const;
    void write_table(std::ostream& os) const;
};

// Per-layer compute descriptions at a given input resolution: conv layers in
// global order followed by one "fc" row for the head.
std::vector<LayerCost> layer_costs(const ModelSpec& spec, int input_res);

// Deploy mode counts the fused 3x3 kernels plus their biases; train mode
// counts both branch kernels (bias-free) and four scalars per BN channel
// (mu, var, gamma, beta). The FC head (weights + bias) is counted in both.
std::int64_t count_params(const ModelSpec& spec, Mode mode);

// Total multiply-adds of the deploy-structure forward at the given input
// resolution (ReLU and GAP are free by convention; FC included).
std::int64_t count_flops(const ModelSpec& spec, int input_res);

// Same structure costed under the Winograd convention (see wino_mul_count).
std::int64_t count_wino_muls(const ModelSpec& spec, int input_res);

// Feature-map memory accounting (parameters ignored). A plain layer holds its
// input and output; a multi-branch block holds the input until the addition
// plus every live branch output.
std::int64_t plain_layer_peak_bytes(std::int64_t in_bytes, std::int64_t out_bytes);
std::int64_t branch_block_peak_bytes(std::int64_t in_bytes, std::span<const std::int64_t> branch_out_bytes);

// Peak over all layers for a batch-1 forward at the given resolution.
std::int64_t peak_memory_bytes(const ModelSpec& spec, int input_res, Mode mode,
                               int bytes_per_scalar = 4);

// Implicit-ensemble size: a block with an identity branch contributes a factor
// of 3, any other block a factor of 2.
EnsembleSize ensemble_size(const ModelSpec& spec);

CostReport cost_report(const ModelSpec& spec, int input_res, Mode mode = Mode::Deploy);

}  // namespace repvgg
