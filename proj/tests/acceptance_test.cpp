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

// Integration acceptance suite. Runs each criterion at its pinned tolerance
// and prints one PASS/FAIL line per criterion. Criterion 10 (wall-clock
// benchmark) is gated behind --run-bench to keep CI timing-independent.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "repvgg/analysis.hpp"
#include "repvgg/bench.hpp"
#include "repvgg/bigint.hpp"
#include "repvgg/reparam.hpp"
#include "repvgg/serialize.hpp"
#include "repvgg/trainer.hpp"
#include "repvgg/winograd.hpp"

using namespace repvgg;

namespace {

struct Criterion {
    int id;
    std::string title;
    bool gated = false;
    std::function<bool(std::ostringstream&)> run;
};

Tensor4<float> random_f32(int n, int c, int h, int w, Rng& rng) {
    Tensor4<float> t(n, c, h, w);
    for (std::int64_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

template <typename T>
BnParams<T> random_bn(int c, Rng& rng) {
    BnParams<T> bn = BnParams<T>::identity(c);
    for (int i = 0; i < c; ++i) {
        bn.mu[i] = static_cast<T>(rng.uniform(-1.0, 1.0));
        bn.var[i] = static_cast<T>(rng.uniform(0.05, 2.0));
        bn.gamma[i] = static_cast<T>(rng.uniform(0.2, 1.5) * (rng.next_below(2) ? 1.0 : -1.0));
        bn.beta[i] = static_cast<T>(rng.uniform(-1.0, 1.0));
    }
    return bn;
}

template <typename T>
RepVggBlock<T> random_block(int c_in, int c_out, int stride, int groups, Rng& rng) {
    RepVggBlock<T> b = make_block_shell<T>(c_in, c_out, stride, groups);
    for (std::int64_t i = 0; i < b.conv3.kernel.size(); ++i)
        b.conv3.kernel.data()[i] = static_cast<T>(rng.uniform(-0.7, 0.7));
    for (std::int64_t i = 0; i < b.conv1.kernel.size(); ++i)
        b.conv1.kernel.data()[i] = static_cast<T>(rng.uniform(-0.7, 0.7));
    b.bn3 = random_bn<T>(c_out, rng);
    b.bn1 = random_bn<T>(c_out, rng);
    if (b.bn_id) *b.bn_id = random_bn<T>(c_out, rng);
    return b;
}

// --- criterion 1: block-level re-parameterization equivalence ---------------
bool criterion_block_equivalence(std::ostringstream& out) {
    Rng rng(101);
    double worst32 = 0.0, worst64 = 0.0;
    int blocks = 0;
    for (int rep = 0; rep < 9; ++rep) {
        for (int stride : {1, 2}) {
            for (int groups : {1, 2, 4}) {
                for (bool equal_ch : {true, false}) {
                    const int c_in = 8;
                    const int c_out = equal_ch ? 8 : 12;
                    const int h = 6 + static_cast<int>(rng.next_below(6));
                    const int w = 6 + static_cast<int>(rng.next_below(6));
                    {
                        const auto b = random_block<float>(c_in, c_out, stride, groups, rng);
                        const Tensor4<float> x = random_f32(2, c_in, h, w, rng);
                        worst32 = std::max(worst32,
                                           max_abs_diff(block_forward_train(b, x),
                                                        block_forward_deploy(convert_block(b), x)));
                    }
                    {
                        const auto b = random_block<double>(c_in, c_out, stride, groups, rng);
                        Tensor4<double> x(2, c_in, h, w);
                        for (std::int64_t i = 0; i < x.size(); ++i)
                            x.data()[i] = rng.uniform(-1.0, 1.0);
                        worst64 = std::max(worst64,
                                           max_abs_diff(block_forward_train(b, x),
                                                        block_forward_deploy(convert_block(b), x)));
                    }
                    ++blocks;
                }
            }
        }
    }
    out << blocks << " blocks over stride {1,2} x groups {1,2,4} x {cIn==cOut, cIn!=cOut}; "
        << "fp32 max " << worst32 << " (tol 1e-4), f64 max " << worst64 << " (tol 1e-10)";
    return worst32 <= 1e-4 && worst64 <= 1e-10;
}

// --- criterion 2: end-to-end model equivalence -------------------------------
bool criterion_model_equivalence(std::ostringstream& out) {
    bool pass = true;
    Rng rng(102);
    for (const char* name : {"A0", "B0"}) {
        const Model<float> model = instantiate<float>(preset_spec(name, 1000), 1234);
        const Model<float> deploy = convert_model(model);
        const Tensor4<float> x = random_f32(5, 3, 224, 224, rng);  // 5 random inputs
        const Tensor4<float> a = forward(model, x, ConvPath::Direct);
        const Tensor4<float> b = forward(deploy, x, ConvPath::Direct);
        const double dev = max_abs_diff(a, b);
        const bool argmax_ok = argmax_per_sample(a) == argmax_per_sample(b);
        out << name << ": max logit dev " << dev << " (tol 1e-3), argmax "
            << (argmax_ok ? "identical" : "DIFFERS") << "; ";
        pass = pass && dev <= 1e-3 && argmax_ok;
    }
    return pass;
}

// --- criterion 3: Table 4/5 analytic regression ------------------------------
bool criterion_table_regression(std::ostringstream& out) {
    struct Row {
        const char* name;
        double params_m, flops_b, wino_b;
    };
    // printed reference values (params in M, FLOPs and Wino MULs in B)
    const Row rows[] = {
        {"A0", 8.30, 1.4, 0.7},    {"A1", 12.78, 2.4, 1.3},  {"A2", 25.49, 5.1, 2.7},
        {"B0", 14.33, 3.1, 1.6},   {"B1", 51.82, 11.8, 5.9}, {"B1g2", 41.36, 8.8, 4.6},
        {"B1g4", 36.12, 7.3, 3.9}, {"B2", 80.31, 18.4, 9.1}, {"B2g4", 55.77, 11.3, 6.0},
        {"B3", 110.96, 26.2, 12.9}, {"B3g4", 75.62, 16.1, 8.4},
    };
    bool pass = true;
    for (const Row& row : rows) {
        const ModelSpec spec = preset_spec(row.name, 1000);
        const double params = count_params(spec, Mode::Deploy) / 1e6;
        const double flops = count_flops(spec, 224) / 1e9;
        const double wino = count_wino_muls(spec, 224) / 1e9;
        const double ep = std::abs(params - row.params_m) / row.params_m;
        const double ef = std::abs(flops - row.flops_b) / row.flops_b;
        const double ew = std::abs(wino - row.wino_b) / row.wino_b;
        const bool ok = ep <= 0.01 && ef <= 0.05 && ew <= 0.05;
        if (!ok || row.name == std::string("A0"))
            out << row.name << ": params " << params << "M (" << ep * 100 << "% vs " << row.params_m
                << "), flops " << flops << "B (" << ef * 100 << "%), wino " << wino << "B ("
                << ew * 100 << "% vs " << row.wino_b << ")" << (ok ? "" : "  <-- FAIL") << "; ";
        pass = pass && ok;
    }
    return pass;
}

// --- criterion 4: winograd correctness and multiply accounting ---------------
bool criterion_winograd(std::ostringstream& out) {
    Rng rng(104);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int g = 1 << rng.next_below(2);
        const int cing = 1 + static_cast<int>(rng.next_below(5));
        const int coutg = 1 + static_cast<int>(rng.next_below(5));
        const int h = 4 + static_cast<int>(rng.next_below(11));
        const int w = 4 + static_cast<int>(rng.next_below(11));
        const int pad = static_cast<int>(rng.next_below(2));
        const int n = 1 + static_cast<int>(rng.next_below(2));
        const Tensor4<float> x = random_f32(n, g * cing, h, w, rng);
        ConvParams<float> p{Tensor4<float>(g * coutg, cing, 3, 3), std::nullopt, 1, pad, g};
        for (std::int64_t i = 0; i < p.kernel.size(); ++i)
            p.kernel.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
        worst = std::max(worst, max_abs_diff(winograd_conv3x3(x, p), conv2d_reference(x, p)));
    }

    // evenly tiled instrumentation: exact 4/9 of the direct multiply count
    bool count_ok = true;
    for (const auto [cin, cout, hw] : {std::tuple{4, 6, 8}, std::tuple{8, 8, 12}, std::tuple{3, 5, 16}}) {
        Rng krng(105);
        const Tensor4<float> x = random_f32(1, cin, hw, hw, krng);
        ConvParams<float> p{Tensor4<float>(cout, cin, 3, 3), std::nullopt, 1, 1, 1};
        for (std::int64_t i = 0; i < p.kernel.size(); ++i)
            p.kernel.data()[i] = static_cast<float>(krng.uniform(-1.0, 1.0));
        WinogradStats stats;
        winograd_conv3x3(x, p, &stats);
        const std::int64_t direct = static_cast<std::int64_t>(cout) * hw * hw * 9 * cin;
        count_ok = count_ok && (stats.elementwise_muls * 9 == direct * 4);
    }
    out << "200 random stride-1 cases, max |winograd - direct| " << worst
        << " (tol 1e-4); instrumented multiply count == 4/9 of direct: "
        << (count_ok ? "exact" : "MISMATCH");
    return worst <= 1e-4 && count_ok;
}

// --- criterion 5: peak activation memory model --------------------------------
bool criterion_memory(std::ostringstream& out) {
    const std::int64_t x = 3 * 56 * 56 * 4;
    const std::int64_t branches[2] = {x, x};
    const std::int64_t extra = branch_block_peak_bytes(x, branches) - x;
    bool pass = (extra == 2 * x);
    out << "shape-preserving residual block: extra peak " << extra << " == 2x input " << 2 * x
        << (pass ? "" : "  <-- FAIL") << "; deploy <= train peak for ";
    int count = 0;
    for (const std::string& name : preset_names()) {
        const ModelSpec spec = preset_spec(name);
        const bool ok =
            peak_memory_bytes(spec, 224, Mode::Deploy) <= peak_memory_bytes(spec, 224, Mode::Train);
        pass = pass && ok;
        count += ok;
    }
    out << count << "/" << preset_names().size() << " presets";
    return pass;
}

// --- criterion 6: implicit-ensemble counting ----------------------------------
bool criterion_ensemble(std::ostringstream& out) {
    const EnsembleSize stage4 = ensemble_size(make_custom_spec({16}, {256}, 10));
    bool pass = stage4.decimal == "28697814";  // 2 * 3^15
    out << "stage4-of-B: " << stage4.decimal << " (expect 28697814); ";

    int ok_presets = 0;
    for (const std::string& name : preset_names()) {
        const ModelSpec spec = preset_spec(name);
        const EnsembleSize e = ensemble_size(spec);
        // independent oracle: the product over blocks, taken as powers
        int three = 0, two = 0;
        for (const LayerInfo& li : layer_layout(spec)) (li.has_identity ? three : two)++;
        BigUint expected = BigUint::pow(3, three);
        for (int i = 0; i < two; ++i) expected.mul(2);
        const bool ok = (e.value == expected) && (e.decimal == expected.to_decimal());
        pass = pass && ok;
        ok_presets += ok;
    }
    out << "product-over-blocks oracle exact for " << ok_presets << "/" << preset_names().size()
        << " presets";
    return pass;
}

// --- criterion 7: gradient correctness ----------------------------------------
bool criterion_gradients(std::ostringstream& out) {
    const ModelSpec spec = make_custom_spec({2}, {6}, 4);  // 2 blocks, second has identity
    Model<double> model = instantiate<double>(spec, 17);
    Rng rng(107);
    Tensor4<double> x(4, 3, 8, 8);
    for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    const std::vector<int> labels = {0, 1, 2, 3};

    auto [loss, grads] = backward(model, x, labels);
    (void)loss;

    struct Kind {
        const char* name;
        std::vector<std::pair<double*, const double*>> slots;
    };
    std::vector<Kind> kinds(5);
    kinds[0].name = "3x3 kernel";
    kinds[1].name = "1x1 kernel";
    kinds[2].name = "gamma";
    kinds[3].name = "beta";
    kinds[4].name = "fc";
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        auto& blk = model.blocks[b];
        auto& g = grads.blocks[b];
        for (std::int64_t i = 0; i < blk.conv3.kernel.size(); ++i)
            kinds[0].slots.push_back({blk.conv3.kernel.data() + i, g.conv3_kernel.data() + i});
        for (std::int64_t i = 0; i < blk.conv1.kernel.size(); ++i)
            kinds[1].slots.push_back({blk.conv1.kernel.data() + i, g.conv1_kernel.data() + i});
        for (int c = 0; c < blk.c_out; ++c) {
            kinds[2].slots.push_back({&blk.bn3.gamma[c], &g.bn3_gamma[c]});
            kinds[2].slots.push_back({&blk.bn1.gamma[c], &g.bn1_gamma[c]});
            kinds[3].slots.push_back({&blk.bn3.beta[c], &g.bn3_beta[c]});
            kinds[3].slots.push_back({&blk.bn1.beta[c], &g.bn1_beta[c]});
            if (blk.bn_id) {
                kinds[2].slots.push_back({&blk.bn_id->gamma[c], &g.bnid_gamma[c]});
                kinds[3].slots.push_back({&blk.bn_id->beta[c], &g.bnid_beta[c]});
            }
        }
    }
    for (std::int64_t i = 0; i < model.fc_weight.size(); ++i)
        kinds[4].slots.push_back({model.fc_weight.data() + i, grads.fc_weight.data() + i});
    for (std::size_t i = 0; i < model.fc_bias.size(); ++i)
        kinds[4].slots.push_back({&model.fc_bias[i], &grads.fc_bias[i]});

    auto fd_at = [&](double* param, double h) {
        const double orig = *param;
        *param = orig + h;
        const double lp = loss_on_batch(model, x, labels);
        *param = orig - h;
        const double lm = loss_on_batch(model, x, labels);
        *param = orig;
        return (lp - lm) / (2 * h);
    };

    const double h = 1e-4;
    bool pass = true;
    int kinks = 0;
    for (Kind& kind : kinds) {
        double worst = 0.0;
        int checked = 0, attempts = 0;
        while (checked < 20 && attempts < 200) {
            ++attempts;
            auto [param, grad] = kind.slots[rng.next_below(kind.slots.size())];
            const double fd = fd_at(param, h);
            // the central difference is only a valid oracle where the loss is
            // smooth across the stencil; a ReLU kink inside +/-h shows up as
            // step-size inconsistency, so such draws are resampled (a wrong
            // analytic gradient would still fail: both estimates agree with
            // each other away from kinks)
            if (std::abs(fd - fd_at(param, h / 2)) / (std::abs(fd) + 1e-8) > 1e-6) {
                ++kinks;
                continue;
            }
            worst = std::max(worst, std::abs(*grad - fd) / (std::abs(*grad) + 1e-8));
            ++checked;
        }
        out << kind.name << " " << worst << "; ";
        pass = pass && worst <= 1e-4 && checked == 20;
    }
    out << "(20 params each, central difference h=1e-4, f64, rel tol 1e-4; " << kinks
        << " kink-adjacent draws resampled)";
    return pass;
}

// --- criterion 8: train -> convert pipeline -----------------------------------
bool criterion_training_pipeline(std::ostringstream& out) {
    const ModelSpec spec = make_custom_spec({1, 2}, {8, 8}, 4);  // 3 blocks
    const Model<double> model = instantiate<double>(spec, 7);
    const ToyDataset<double> ds = make_toy_dataset<double>(4, 24, 8, 3, 32, 2024);

    TrainConfig config;
    config.learning_rate = 0.1;
    config.epochs = 30;
    config.batch_size = 16;
    config.seed = 3;

    const TrainResult<double> r1 = train(model, ds, config);
    const TrainResult<double> r2 = train(model, ds, config);
    bool deterministic = true;
    for (std::size_t b = 0; b < r1.model.blocks.size() && deterministic; ++b)
        deterministic = max_abs_diff(r1.model.blocks[b].conv3.kernel,
                                     r2.model.blocks[b].conv3.kernel) == 0.0;
    deterministic = deterministic && max_abs_diff(r1.model.fc_weight, r2.model.fc_weight) == 0.0;

    const double initial = r1.curve.front().train_loss;
    const double final_loss = r1.curve.back().train_loss;

    const Model<double> deploy = convert_model(r1.model);
    const std::vector<int> pred_train =
        argmax_per_sample(forward(r1.model, ds.val_inputs, ConvPath::Direct));
    const std::vector<int> pred_deploy =
        argmax_per_sample(forward(deploy, ds.val_inputs, ConvPath::Direct));
    const bool argmax_preserved = pred_train == pred_deploy;

    out << "deterministic: " << (deterministic ? "yes" : "NO") << "; loss " << initial << " -> "
        << final_loss << " over 30 epochs (need < " << 0.5 * initial << "); val argmax preserved: "
        << (argmax_preserved ? "all " + std::to_string(pred_train.size()) + " samples" : "NO");
    return deterministic && final_loss < 0.5 * initial && argmax_preserved;
}

// --- criterion 9: persistence ---------------------------------------------------
bool criterion_persistence(std::ostringstream& out) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("rvgg_acc_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    auto read_bytes = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };

    const Model<float> model = instantiate<float>(make_custom_spec({1, 2}, {6, 6}, 5), 2026);
    const fs::path p1 = dir / "m1.rvgg";
    const fs::path p2 = dir / "m2.rvgg";
    save_model(model, p1.string());
    const Model<float> loaded = load_model<float>(p1.string());

    bool bits_ok = max_abs_diff(model.fc_weight, loaded.fc_weight) == 0.0;
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        bits_ok = bits_ok &&
                  max_abs_diff(model.blocks[b].conv3.kernel, loaded.blocks[b].conv3.kernel) == 0.0 &&
                  max_abs_diff(model.blocks[b].conv1.kernel, loaded.blocks[b].conv1.kernel) == 0.0 &&
                  model.blocks[b].bn3.var == loaded.blocks[b].bn3.var;
    }
    save_model(loaded, p2.string());
    const bool resave_ok = read_bytes(p1) == read_bytes(p2);

    const fs::path golden = fs::path(REPVGG_TEST_DATA_DIR) / "golden_custom_v1.rvgg";
    bool golden_ok = fs::exists(golden);
    if (golden_ok) {
        const fs::path p3 = dir / "golden_again.rvgg";
        save_model(load_model<float>(golden.string()), p3.string());
        golden_ok = read_bytes(golden) == read_bytes(p3);
    }

    std::error_code ec;
    fs::remove_all(dir, ec);
    out << "round trip bit-exact: " << (bits_ok ? "yes" : "NO") << "; re-serialization byte-identical: "
        << (resave_ok ? "yes" : "NO") << "; committed golden fixture byte-identical: "
        << (golden_ok ? "yes" : "NO");
    return bits_ok && resave_ok && golden_ok;
}

// --- criterion 10 (benchmark-gated): converted model is faster ------------------
bool criterion_benchmark(std::ostringstream& out) {
    const Model<float> model = instantiate<float>(preset_spec("B0", 1000), 5);
    const Model<float> deploy = convert_model(model);
    Rng rng(110);
    const Tensor4<float> x = random_f32(8, 3, 32, 32, rng);

    const BenchResult rt = run_bench("B0", "train", 8, kMinBenchWarmup, kMinBenchIterations,
                                     [&] { forward(model, x, ConvPath::Direct); });
    const BenchResult rd = run_bench("B0", "deploy", 8, kMinBenchWarmup, kMinBenchIterations,
                                     [&] { forward(deploy, x, ConvPath::Auto); });
    const double speedup = rt.median_ms() / rd.median_ms();
    out << "B0-shaped, batch 8 @32x32: train median " << rt.median_ms() << " ms, deploy median "
        << rd.median_ms() << " ms, speedup " << speedup << "x (need > 1.1x)";
    return rd.median_ms() * 1.1 < rt.median_ms();
}

}  // namespace

int main(int argc, char** argv) {
    bool run_bench_gate = false;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--run-bench") == 0) run_bench_gate = true;
        else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }

    std::vector<Criterion> criteria = {
        {1, "re-parameterization equivalence over stride/groups/channel grid", false,
         criterion_block_equivalence},
        {2, "end-to-end A0/B0 equivalence at 224x224", false, criterion_model_equivalence},
        {3, "analytic params/FLOPs/Wino-MUL regression vs printed table", false,
         criterion_table_regression},
        {4, "winograd correctness and 4/9 multiply accounting", false, criterion_winograd},
        {5, "peak activation memory model", false, criterion_memory},
        {6, "implicit-ensemble counting", false, criterion_ensemble},
        {7, "analytic vs central-difference gradients", false, criterion_gradients},
        {8, "deterministic train -> convert pipeline", false, criterion_training_pipeline},
        {9, "bit-exact persistence and golden fixtures", false, criterion_persistence},
        {10, "converted model runs faster (benchmark-gated)", true, criterion_benchmark},
    };

    int failures = 0;
    for (Criterion& c : criteria) {
        if (only != 0 && c.id != only) continue;
        if (c.gated && !run_bench_gate) {
            std::printf("[%2d] SKIP  %s (run with --run-bench)\n", c.id, c.title.c_str());
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        std::ostringstream detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail << "exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%2d] %s  %s (%.1fs)\n      %s\n", c.id, ok ? "PASS" : "FAIL", c.title.c_str(),
                    secs, detail.str().c_str());
        failures += !ok;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
