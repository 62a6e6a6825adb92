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

#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "repvgg/analysis.hpp"
#include "repvgg/arch.hpp"
#include "repvgg/bench.hpp"
#include "repvgg/reparam.hpp"
#include "repvgg/serialize.hpp"
#include "repvgg/trainer.hpp"

namespace {

using namespace repvgg;

Tensor4<float> random_input(int batch, int channels, int res, Rng& rng) {
    Tensor4<float> x(batch, channels, res, res);
    for (std::int64_t i = 0; i < x.size(); ++i)
        x.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return x;
}

ConvPath parse_path(const std::string& mode) {
    if (mode == "direct") return ConvPath::Direct;
    if (mode == "winograd") return ConvPath::Winograd;
    return ConvPath::Auto;
}

double mega(std::int64_t v) { return static_cast<double>(v) / 1e6; }
double giga(std::int64_t v) { return static_cast<double>(v) / 1e9; }

int cmd_build(const std::string& preset, const std::vector<int>& stages,
              const std::vector<int>& widths, std::uint64_t seed, int classes,
              const std::string& out) {
    const ModelSpec spec = !preset.empty() ? preset_spec(preset, classes)
                                           : make_custom_spec(stages, widths, classes);
    const Model<float> model = instantiate<float>(spec, seed);
    save_model(model, out);
    std::cout << "built " << spec.name << " (train mode, seed " << seed << ", "
              << model.parameter_count() << " scalars) -> " << out << "\n";
    return 0;
}

int cmd_train(const std::string& model_path, const std::string& dataset, int epochs, int batch,
              double lr, double momentum, double weight_decay, bool cosine, std::uint64_t seed,
              int train_per_class, int val_per_class, int image_size, const std::string& out,
              const std::string& curve_path) {
    if (dataset != "toy") throw std::invalid_argument("unknown dataset '" + dataset + "'");
    Model<float> model = load_model<float>(model_path);
    if (model.mode != Mode::Train) throw std::invalid_argument("train: model is already converted");
    if (image_size == 0) image_size = model.spec.min_input_size();

    const ToyDataset<float> ds = make_toy_dataset<float>(
        model.spec.num_classes, train_per_class, val_per_class, model.spec.input_channels,
        image_size, seed);

    TrainConfig config;
    config.learning_rate = lr;
    config.cosine_annealing = cosine;
    config.momentum = momentum;
    config.weight_decay = weight_decay;
    config.epochs = epochs;
    config.batch_size = batch;
    config.seed = seed;

    TrainResult<float> result = train(model, ds, config);
    save_model(result.model, out);
    if (!curve_path.empty()) {
        std::ofstream f(curve_path);
        if (!f) throw std::runtime_error("cannot open '" + curve_path + "'");
        write_curve_csv(f, result.curve);
    }
    const EpochStats& last = result.curve.back();
    std::cout << "trained " << epochs << " epochs on " << dataset << " ("
              << ds.train_inputs.n() << " train / " << ds.val_inputs.n() << " val samples)\n"
              << "final train loss " << last.train_loss << ", val acc " << last.val_acc << " -> "
              << out << "\n";
    return 0;
}

int cmd_convert(const std::string& model_path, const std::string& out) {
    const Model<float> model = load_model<float>(model_path);
    if (model.mode == Mode::Deploy)
        std::cout << "model is already in deploy mode; writing it unchanged\n";
    const Model<float> deploy = convert_model(model);
    save_model(deploy, out);
    std::cout << "converted to deploy mode (" << deploy.parameter_count() << " scalars, was "
              << model.parameter_count() << ") -> " << out << "\n";
    return 0;
}

int cmd_verify(const std::string& train_path, const std::string& deploy_path, int trials,
               double tol, int res, std::uint64_t seed) {
    const Model<float> train_model = load_model<float>(train_path);
    const Model<float> deploy_model = load_model<float>(deploy_path);
    if (train_model.mode != Mode::Train)
        throw std::invalid_argument("verify: --train file is not a train-mode model");
    if (deploy_model.mode != Mode::Deploy)
        throw std::invalid_argument("verify: --deploy file is not a deploy-mode model");
    if (res == 0) res = train_model.spec.min_input_size();

    Rng rng(seed);
    double max_dev = 0.0;
    int argmax_mismatches = 0;
    for (int t = 0; t < trials; ++t) {
        const Tensor4<float> x = random_input(1, train_model.spec.input_channels, res, rng);
        const Tensor4<float> a = forward(train_model, x, ConvPath::Direct);
        const Tensor4<float> b = forward(deploy_model, x, ConvPath::Direct);
        max_dev = std::max(max_dev, max_abs_diff(a, b));
        if (argmax_per_sample(a) != argmax_per_sample(b)) ++argmax_mismatches;
    }
    std::cout << "verify: " << trials << " trials at " << res << "x" << res
              << ", max abs logit deviation " << std::scientific << std::setprecision(3) << max_dev
              << std::defaultfloat << ", tolerance " << tol << ", argmax mismatches "
              << argmax_mismatches << "\n";
    if (max_dev > tol) {
        std::cout << "verify: FAILED\n";
        return 1;
    }
    std::cout << "verify: OK\n";
    return 0;
}

ModelSpec spec_from_flags(const std::string& preset, const std::string& model_path, int classes) {
    if (!preset.empty()) return preset_spec(preset, classes);
    if (!model_path.empty()) return load_model<float>(model_path).spec;
    throw std::invalid_argument("one of --preset or --model is required");
}

int cmd_count(const std::string& preset, const std::string& model_path, int classes, int res,
              const std::string& csv_path, bool layers) {
    const ModelSpec spec = spec_from_flags(preset, model_path, classes);
    const CostReport report = cost_report(spec, res, Mode::Deploy);
    if (layers) {
        report.write_table(std::cout);
        std::cout << "\n";
    }
    std::cout << "model " << spec.name << " @ " << res << "x" << res << "\n";
    std::cout << std::fixed;
    std::cout << "params (deploy):      " << std::setprecision(2) << mega(count_params(spec, Mode::Deploy))
              << " M  (" << count_params(spec, Mode::Deploy) << ")\n";
    std::cout << "params (train):       " << std::setprecision(2) << mega(count_params(spec, Mode::Train))
              << " M  (" << count_params(spec, Mode::Train) << ")\n";
    std::cout << "theoretical FLOPs:    " << std::setprecision(2) << giga(report.total_flops)
              << " B  (" << report.total_flops << ")\n";
    std::cout << "Wino MULs:            " << std::setprecision(2) << giga(report.total_wino_muls)
              << " B  (" << report.total_wino_muls << ")\n";
    std::cout << "peak memory (train):  " << std::setprecision(2)
              << report.peak_train_bytes / (1024.0 * 1024.0) << " MiB\n";
    std::cout << "peak memory (deploy): " << std::setprecision(2)
              << report.peak_deploy_bytes / (1024.0 * 1024.0) << " MiB\n";
    std::cout.unsetf(std::ios::fixed);
    std::cout << "implicit ensemble:    " << report.ensemble.decimal << " (3^"
              << report.ensemble.three_way_blocks << " * 2^" << report.ensemble.two_way_blocks
              << ")\n";
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw std::runtime_error("cannot open '" + csv_path + "'");
        report.write_csv(f);
        std::cout << "per-layer CSV -> " << csv_path << "\n";
    }
    return 0;
}

int cmd_export_csv(const std::string& preset, const std::string& model_path, int classes, int res,
                   const std::string& out) {
    const ModelSpec spec = spec_from_flags(preset, model_path, classes);
    const CostReport report = cost_report(spec, res, Mode::Deploy);
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open '" + out + "'");
    report.write_csv(f);
    std::cout << "wrote " << report.rows.size() << " layer rows -> " << out << "\n";
    return 0;
}

int cmd_bench(const std::string& model_path, int batch, const std::string& mode, int warmup,
              int iters, int res, std::uint64_t seed, const std::string& compare) {
    const Model<float> model = load_model<float>(model_path);
    if (res == 0) res = model.spec.min_input_size();
    Rng rng(seed);
    const Tensor4<float> x = random_input(batch, model.spec.input_channels, res, rng);

    if (!compare.empty()) {
        if (compare != "train,deploy" && compare != "deploy,train")
            throw std::invalid_argument("--compare expects 'train,deploy'");
        if (model.mode != Mode::Train)
            throw std::invalid_argument("--compare needs a train-mode model file");
        const Model<float> deploy = convert_model(model);
        const ConvPath path = parse_path(mode);
        const BenchResult rt = run_bench(model.spec.name, "train", batch, warmup, iters,
                                         [&] { forward(model, x, ConvPath::Direct); });
        const BenchResult rd = run_bench(model.spec.name, "deploy", batch, warmup, iters,
                                         [&] { forward(deploy, x, path); });
        print_bench_result(std::cout, rt);
        print_bench_result(std::cout, rd);
        std::cout << std::fixed << std::setprecision(2) << "deploy/train speedup: "
                  << rt.median_ms() / rd.median_ms() << "x\n";
        return 0;
    }

    const ConvPath path = parse_path(mode);
    const BenchResult r = run_bench(model.spec.name, to_string(model.mode) + "/" + mode, batch,
                                    warmup, iters, [&] { forward(model, x, path); });
    print_bench_result(std::cout, r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RepVGG-style model builder, trainer, converter and cost analyzer"};
    app.require_subcommand(1);

    // build
    auto* build = app.add_subcommand("build", "instantiate a train-mode model");
    std::string b_preset, b_out;
    std::vector<int> b_stages, b_widths;
    std::uint64_t b_seed = 0;
    int b_classes = 1000;
    auto* b_preset_opt =
        build->add_option("--preset", b_preset, "model preset")->check(CLI::IsMember(preset_names()));
    auto* b_stages_opt = build->add_option("--stages", b_stages,
                                           "custom layers per stage, e.g. 1,2 (desk-scale models)")
                             ->delimiter(',')
                             ->excludes(b_preset_opt);
    build->add_option("--widths", b_widths, "custom stage widths, e.g. 8,8")
        ->delimiter(',')
        ->needs(b_stages_opt);
    b_preset_opt->excludes(b_stages_opt);
    build->add_option("--seed", b_seed, "init seed");
    build->add_option("--classes", b_classes, "classifier classes");
    build->add_option("--out", b_out, "output .rvgg path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train on the deterministic toy dataset");
    std::string t_model, t_dataset = "toy", t_out, t_curve;
    int t_epochs = 30, t_batch = 16, t_tpc = 32, t_vpc = 8, t_size = 0;
    double t_lr = 0.1, t_mom = 0.9, t_wd = 1e-4;
    bool t_no_cosine = false;
    std::uint64_t t_seed = 1;
    tr->add_option("--model", t_model, "input model")->required();
    tr->add_option("--dataset", t_dataset, "dataset name (toy)");
    tr->add_option("--epochs", t_epochs, "epochs");
    tr->add_option("--batch", t_batch, "batch size");
    tr->add_option("--lr", t_lr, "initial learning rate");
    tr->add_option("--momentum", t_mom, "SGD momentum");
    tr->add_option("--weight-decay", t_wd, "weight decay on conv/FC kernels");
    tr->add_flag("--no-cosine", t_no_cosine, "disable cosine annealing");
    tr->add_option("--seed", t_seed, "training and dataset seed");
    tr->add_option("--train-per-class", t_tpc, "training samples per class");
    tr->add_option("--val-per-class", t_vpc, "validation samples per class");
    tr->add_option("--image-size", t_size, "dataset image size (0 = model minimum)");
    tr->add_option("--out", t_out, "output model path")->required();
    tr->add_option("--curve", t_curve, "loss-curve CSV path");

    // convert
    auto* conv = app.add_subcommand("convert", "fuse the branches into deploy form");
    std::string c_model, c_out;
    conv->add_option("--model", c_model, "input model")->required();
    conv->add_option("--out", c_out, "output model path")->required();

    // verify
    auto* ver = app.add_subcommand("verify", "check train/deploy forward equivalence");
    std::string v_train, v_deploy;
    int v_trials = 20, v_res = 0;
    double v_tol = 1e-3;
    std::uint64_t v_seed = 0;
    ver->add_option("--train", v_train, "train-mode model")->required();
    ver->add_option("--deploy", v_deploy, "deploy-mode model")->required();
    ver->add_option("--trials", v_trials, "random trials");
    ver->add_option("--tol", v_tol, "max abs logit deviation");
    ver->add_option("--res", v_res, "input resolution (0 = model minimum)");
    ver->add_option("--seed", v_seed, "input seed");

    // count
    auto* cnt = app.add_subcommand("count", "analytic params / FLOPs / Wino MULs / memory / ensemble");
    std::string n_preset, n_model, n_csv;
    int n_res = 224, n_classes = 1000;
    cnt->add_option("--preset", n_preset, "model preset")->check(CLI::IsMember(preset_names()));
    cnt->add_option("--model", n_model, "model file (alternative to --preset)");
    cnt->add_option("--classes", n_classes, "classifier classes for --preset");
    cnt->add_option("--res", n_res, "input resolution");
    cnt->add_option("--csv", n_csv, "write per-layer CSV here");
    bool n_layers = false;
    cnt->add_flag("--layers", n_layers, "print the per-layer cost table");

    // bench
    auto* ben = app.add_subcommand("bench", "wall-clock forward benchmark");
    std::string e_model, e_mode = "auto", e_compare;
    int e_batch = 8, e_warmup = 10, e_iters = 30, e_res = 0;
    std::uint64_t e_seed = 0;
    ben->add_option("--model", e_model, "model file")->required();
    ben->add_option("--batch", e_batch, "batch size");
    ben->add_option("--mode", e_mode, "conv path")->check(CLI::IsMember({"auto", "direct", "winograd"}));
    ben->add_option("--warmup", e_warmup, "warmup iterations (min 10)");
    ben->add_option("--iters", e_iters, "timed iterations (min 30)");
    ben->add_option("--res", e_res, "input resolution (0 = model minimum)");
    ben->add_option("--seed", e_seed, "input seed");
    ben->add_option("--compare", e_compare, "time both modes of one model: 'train,deploy'");

    // export-csv
    auto* exp = app.add_subcommand("export-csv", "per-layer cost table as CSV");
    std::string x_preset, x_model, x_out;
    int x_res = 224, x_classes = 1000;
    exp->add_option("--preset", x_preset, "model preset")->check(CLI::IsMember(preset_names()));
    exp->add_option("--model", x_model, "model file (alternative to --preset)");
    exp->add_option("--classes", x_classes, "classifier classes for --preset");
    exp->add_option("--res", x_res, "input resolution");
    exp->add_option("--out", x_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (build->parsed()) {
            if (b_preset.empty() && b_stages.empty())
                throw std::invalid_argument("build needs --preset or --stages/--widths");
            return cmd_build(b_preset, b_stages, b_widths, b_seed, b_classes, b_out);
        }
        if (tr->parsed())
            return cmd_train(t_model, t_dataset, t_epochs, t_batch, t_lr, t_mom, t_wd, !t_no_cosine,
                             t_seed, t_tpc, t_vpc, t_size, t_out, t_curve);
        if (conv->parsed()) return cmd_convert(c_model, c_out);
        if (ver->parsed()) return cmd_verify(v_train, v_deploy, v_trials, v_tol, v_res, v_seed);
        if (cnt->parsed()) return cmd_count(n_preset, n_model, n_classes, n_res, n_csv, n_layers);
        if (ben->parsed())
            return cmd_bench(e_model, e_batch, e_mode, e_warmup, e_iters, e_res, e_seed, e_compare);
        if (exp->parsed()) return cmd_export_csv(x_preset, x_model, x_classes, x_res, x_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
