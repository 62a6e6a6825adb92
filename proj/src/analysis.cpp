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

#include "repvgg/analysis.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "repvgg/ops.hpp"
#include "repvgg/winograd.hpp"

namespace repvgg {

std::vector<LayerCost> layer_costs(const ModelSpec& spec, int input_res) {
    spec.validate();
    if (input_res < spec.min_input_size())
        throw std::invalid_argument("layer_costs: resolution " + std::to_string(input_res) +
                                    " below the model minimum " +
                                    std::to_string(spec.min_input_size()));
    std::vector<LayerCost> costs;
    int res = input_res;
    for (const LayerInfo& li : layer_layout(spec)) {
        const auto [oh, ow] = conv2d_output_hw(res, res, 3, 3, li.stride, 1);
        LayerCost lc;
        lc.name = "conv" + std::to_string(li.index);
        lc.layer_index = li.index;
        lc.stage = li.stage + 1;
        lc.c_in = li.c_in;
        lc.c_out = li.c_out;
        lc.k_h = lc.k_w = 3;
        lc.stride = li.stride;
        lc.groups = li.groups;
        lc.out_h = oh;
        lc.out_w = ow;
        lc.has_identity = li.has_identity;
        costs.push_back(lc);
        res = oh;
    }
    LayerCost fc;
    fc.name = "fc";
    fc.layer_index = 0;
    fc.stage = 0;
    fc.c_in = spec.stage_widths.back();
    fc.c_out = spec.num_classes;
    fc.k_h = fc.k_w = 1;
    fc.stride = 1;
    fc.groups = 1;
    fc.out_h = fc.out_w = 1;
    costs.push_back(fc);
    return costs;
}

namespace {

std::int64_t conv_params(const LayerCost& lc, Mode mode) {
    const std::int64_t kernel3 =
        static_cast<std::int64_t>(lc.k_h) * lc.k_w * (lc.c_in / lc.groups) * lc.c_out;
    if (mode == Mode::Deploy) return kernel3 + lc.c_out;  // fused kernel + bias
    // train: bias-free 3x3 and 1x1 branch kernels, 4 scalars per BN channel
    const std::int64_t kernel1 = static_cast<std::int64_t>(lc.c_in / lc.groups) * lc.c_out;
    const int bn_count = lc.has_identity ? 3 : 2;
    return kernel3 + kernel1 + static_cast<std::int64_t>(bn_count) * 4 * lc.c_out;
}

std::int64_t fc_params(const LayerCost& fc) {
    return static_cast<std::int64_t>(fc.c_in) * fc.c_out + fc.c_out;
}

}  // namespace

std::int64_t count_params(const ModelSpec& spec, Mode mode) {
    std::int64_t total = 0;
    for (const LayerCost& lc : layer_costs(spec, spec.min_input_size()))
        total += (lc.name == "fc") ? fc_params(lc) : conv_params(lc, mode);
    return total;
}

std::int64_t count_flops(const ModelSpec& spec, int input_res) {
    std::int64_t total = 0;
    for (const LayerCost& lc : layer_costs(spec, input_res)) total += lc.direct_muls();
    return total;
}

std::int64_t count_wino_muls(const ModelSpec& spec, int input_res) {
    std::int64_t total = 0;
    for (const LayerCost& lc : layer_costs(spec, input_res))
        total += (lc.name == "fc") ? lc.direct_muls() : wino_mul_count(lc);
    return total;
}

std::int64_t plain_layer_peak_bytes(std::int64_t in_bytes, std::int64_t out_bytes) {
    return in_bytes + out_bytes;
}

std::int64_t branch_block_peak_bytes(std::int64_t in_bytes,
                                     std::span<const std::int64_t> branch_out_bytes) {
    std::int64_t total = in_bytes;
    for (std::int64_t b : branch_out_bytes) total += b;
    return total;
}

std::int64_t peak_memory_bytes(const ModelSpec& spec, int input_res, Mode mode,
                               int bytes_per_scalar) {
    std::int64_t peak = 0;
    std::int64_t in_bytes =
        static_cast<std::int64_t>(spec.input_channels) * input_res * input_res * bytes_per_scalar;
    for (const LayerCost& lc : layer_costs(spec, input_res)) {
        if (lc.name == "fc") {
            const std::int64_t fc_in = static_cast<std::int64_t>(lc.c_in) * bytes_per_scalar;
            const std::int64_t fc_out = static_cast<std::int64_t>(lc.c_out) * bytes_per_scalar;
            // GAP output doubles as the FC input
            peak = std::max(peak, plain_layer_peak_bytes(in_bytes, fc_in));
            peak = std::max(peak, plain_layer_peak_bytes(fc_in, fc_out));
            continue;
        }
        const std::int64_t out_bytes = lc.out_elems() * bytes_per_scalar;
        if (mode == Mode::Deploy) {
            peak = std::max(peak, plain_layer_peak_bytes(in_bytes, out_bytes));
        } else {
            const std::int64_t branches[3] = {out_bytes, out_bytes, out_bytes};
            const std::size_t count = lc.has_identity ? 3 : 2;
            peak = std::max(peak, branch_block_peak_bytes(
                                      in_bytes, std::span<const std::int64_t>(branches, count)));
        }
        in_bytes = out_bytes;
    }
    return peak;
}

EnsembleSize ensemble_size(const ModelSpec& spec) {
    EnsembleSize e;
    e.value = BigUint(1);
    for (const LayerInfo& li : layer_layout(spec)) {
        if (li.has_identity) {
            ++e.three_way_blocks;
            e.value.mul(3);
        } else {
            ++e.two_way_blocks;
            e.value.mul(2);
        }
    }
    e.decimal = e.value.to_decimal();
    return e;
}

CostReport cost_report(const ModelSpec& spec, int input_res, Mode mode) {
    CostReport report;
    report.model_name = spec.name;
    report.input_res = input_res;
    report.mode = mode;
    for (const LayerCost& lc : layer_costs(spec, input_res)) {
        CostRow row;
        row.layer = lc;
        if (lc.name == "fc") {
            row.params = fc_params(lc);
            row.flops = lc.direct_muls();
            row.wino_muls = lc.direct_muls();
        } else {
            row.params = conv_params(lc, mode);
            row.flops = lc.direct_muls();
            row.wino_muls = wino_mul_count(lc);
        }
        report.total_params += row.params;
        report.total_flops += row.flops;
        report.total_wino_muls += row.wino_muls;
        report.rows.push_back(row);
    }
    report.peak_train_bytes = peak_memory_bytes(spec, input_res, Mode::Train);
    report.peak_deploy_bytes = peak_memory_bytes(spec, input_res, Mode::Deploy);
    report.ensemble = ensemble_size(spec);
    return report;
}

void CostReport::write_csv(std::ostream& os) const {
    os << "layer,stage,c_in,c_out,kernel,stride,groups,out_h,out_w,params,flops,wino_muls\n";
    for (const CostRow& row : rows) {
        os << row.layer.name << ',' << row.layer.stage << ',' << row.layer.c_in << ','
           << row.layer.c_out << ',' << row.layer.k_h << ',' << row.layer.stride << ','
           << row.layer.groups << ',' << row.layer.out_h << ',' << row.layer.out_w << ','
           << row.params << ',' << row.flops << ',' << row.wino_muls << '\n';
    }
    os << "total,,,,,,,,," << total_params << ',' << total_flops << ',' << total_wino_muls << '\n';
}

void CostReport::write_table(std::ostream& os) const {
    os << "model " << model_name << " (" << to_string(mode) << " mode, input " << input_res << "x"
       << input_res << ")\n";
    os << std::left << std::setw(8) << "layer" << std::right << std::setw(6) << "stage"
       << std::setw(7) << "c_in" << std::setw(7) << "c_out" << std::setw(8) << "stride"
       << std::setw(8) << "groups" << std::setw(10) << "out" << std::setw(14) << "params"
       << std::setw(16) << "flops" << std::setw(16) << "wino_muls" << '\n';
    for (const CostRow& row : rows) {
        os << std::left << std::setw(8) << row.layer.name << std::right << std::setw(6)
           << row.layer.stage << std::setw(7) << row.layer.c_in << std::setw(7) << row.layer.c_out
           << std::setw(8) << row.layer.stride << std::setw(8) << row.layer.groups << std::setw(10)
           << (std::to_string(row.layer.out_h) + "x" + std::to_string(row.layer.out_w))
           << std::setw(14) << row.params << std::setw(16) << row.flops << std::setw(16)
           << row.wino_muls << '\n';
    }
    os << std::left << std::setw(8) << "total" << std::right << std::setw(46) << ' '
       << std::setw(14) << total_params << std::setw(16) << total_flops << std::setw(16)
       << total_wino_muls << '\n';
}

}  // namespace repvgg
