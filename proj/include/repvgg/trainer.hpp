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

#include <any>
#include <cmath>
#include <iosfwd>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "repvgg/arch.hpp"
#include "repvgg/ops.hpp"
#include "repvgg/rng.hpp"
#include "repvgg/tensor.hpp"

namespace repvgg {

struct TrainConfig {
    double learning_rate = 0.1;
    bool cosine_annealing = true;
    double momentum = 0.9;
    double weight_decay = 1e-4;  // conv and FC kernels only
    int epochs = 30;
    int batch_size = 16;
    std::uint64_t seed = 0;
    double bn_momentum = 0.1;  // EMA factor for running statistics

    void validate() const {
        if (learning_rate < 0) throw std::invalid_argument("TrainConfig: negative learning rate");
        if (momentum < 0 || momentum >= 1) throw std::invalid_argument("TrainConfig: momentum out of [0,1)");
        if (weight_decay < 0) throw std::invalid_argument("TrainConfig: negative weight decay");
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be positive");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be positive");
        if (bn_momentum <= 0 || bn_momentum > 1) throw std::invalid_argument("TrainConfig: bn momentum out of (0,1]");
    }

    double lr_at_epoch(int epoch) const {
        if (!cosine_annealing) return learning_rate;
        return learning_rate * 0.5 *
               (1.0 + std::cos(3.14159265358979323846 * epoch / static_cast<double>(epochs)));
    }
};

template <typename T>
struct ToyDataset {
    Tensor4<T> train_inputs;
    std::vector<int> train_labels;
    Tensor4<T> val_inputs;
    std::vector<int> val_labels;
    int num_classes = 0;
};

// Deterministic synthetic classification set: one smooth per-class prototype
// (coarse 4x4 grid, bilinearly upsampled), each sample a randomly scaled copy
// plus pixel noise.
template <typename T>
ToyDataset<T> make_toy_dataset(int num_classes, int train_per_class, int val_per_class,
                               int channels, int size, std::uint64_t seed) {
    if (num_classes < 2 || train_per_class < 1 || val_per_class < 1 || size < 4)
        throw std::invalid_argument("make_toy_dataset: degenerate configuration");
    Rng rng(seed);

    const int grid = 4;
    std::vector<double> protos(static_cast<std::size_t>(num_classes) * channels * grid * grid);
    for (auto& v : protos) v = rng.uniform(-1.0, 1.0);

    auto proto_at = [&](int cls, int ch, double fy, double fx) {
        const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        const int y1 = std::min(y0 + 1, grid - 1), x1 = std::min(x0 + 1, grid - 1);
        const double wy = fy - y0, wx = fx - x0;
        const double* g = protos.data() + (static_cast<std::size_t>(cls) * channels + ch) * grid * grid;
        return (1 - wy) * ((1 - wx) * g[y0 * grid + x0] + wx * g[y0 * grid + x1]) +
               wy * ((1 - wx) * g[y1 * grid + x0] + wx * g[y1 * grid + x1]);
    };

    auto generate = [&](int per_class, Tensor4<T>& inputs, std::vector<int>& labels) {
        const int total = num_classes * per_class;
        inputs = Tensor4<T>(total, channels, size, size);
        labels.resize(total);
        for (int i = 0; i < total; ++i) {
            const int cls = i % num_classes;
            labels[i] = cls;
            const double scale = 0.75 + 0.5 * rng.uniform();
            for (int ch = 0; ch < channels; ++ch) {
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        const double fy = y * (grid - 1.0) / (size - 1.0);
                        const double fx = x * (grid - 1.0) / (size - 1.0);
                        inputs.at(i, ch, y, x) = static_cast<T>(
                            scale * proto_at(cls, ch, fy, fx) + 0.25 * rng.uniform(-1.0, 1.0));
                    }
                }
            }
        }
    };

    ToyDataset<T> ds;
    ds.num_classes = num_classes;
    generate(train_per_class, ds.train_inputs, ds.train_labels);
    generate(val_per_class, ds.val_inputs, ds.val_labels);
    return ds;
}

// ---- gradients -------------------------------------------------------------

template <typename T>
struct BlockGrads {
    Tensor4<T> conv3_kernel;
    Tensor4<T> conv1_kernel;
    std::vector<T> bn3_gamma, bn3_beta;
    std::vector<T> bn1_gamma, bn1_beta;
    std::vector<T> bnid_gamma, bnid_beta;  // empty when the branch is absent
};

template <typename T>
struct ModelGrads {
    std::vector<BlockGrads<T>> blocks;
    Tensor4<T> fc_weight;
    std::vector<T> fc_bias;

    static ModelGrads zeros_like(const Model<T>& model) {
        ModelGrads g;
        g.blocks.reserve(model.blocks.size());
        for (const auto& b : model.blocks) {
            BlockGrads<T> bg;
            bg.conv3_kernel = Tensor4<T>(b.conv3.kernel.n(), b.conv3.kernel.c(), 3, 3);
            bg.conv1_kernel = Tensor4<T>(b.conv1.kernel.n(), b.conv1.kernel.c(), 1, 1);
            bg.bn3_gamma.assign(b.c_out, T(0));
            bg.bn3_beta.assign(b.c_out, T(0));
            bg.bn1_gamma.assign(b.c_out, T(0));
            bg.bn1_beta.assign(b.c_out, T(0));
            if (b.bn_id) {
                bg.bnid_gamma.assign(b.c_out, T(0));
                bg.bnid_beta.assign(b.c_out, T(0));
            }
            g.blocks.push_back(std::move(bg));
        }
        g.fc_weight = Tensor4<T>(model.fc_weight.n(), model.fc_weight.c(), 1, 1);
        g.fc_bias.assign(model.fc_bias.size(), T(0));
        return g;
    }

    double norm() const {
        double sq = 0;
        auto acc_t = [&sq](const Tensor4<T>& t) {
            for (std::int64_t i = 0; i < t.size(); ++i)
                sq += static_cast<double>(t.data()[i]) * static_cast<double>(t.data()[i]);
        };
        auto acc_v = [&sq](const std::vector<T>& v) {
            for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
        };
        for (const auto& b : blocks) {
            acc_t(b.conv3_kernel);
            acc_t(b.conv1_kernel);
            acc_v(b.bn3_gamma);
            acc_v(b.bn3_beta);
            acc_v(b.bn1_gamma);
            acc_v(b.bn1_beta);
            acc_v(b.bnid_gamma);
            acc_v(b.bnid_beta);
        }
        acc_t(fc_weight);
        acc_v(fc_bias);
        return std::sqrt(sq);
    }
};

// ---- training-mode forward caches ------------------------------------------

namespace train_detail {

template <typename T>
struct BnCache {
    std::vector<T> mean, var_biased, invstd;
    Tensor4<T> xhat;
    std::int64_t per_channel_count = 0;
};

// Batch-statistics BN forward. Normalizes with the biased batch variance.
template <typename T>
Tensor4<T> bn_forward_batch(const Tensor4<T>& x, const BnParams<T>& bn, BnCache<T>& cache) {
    const int c = x.c();
    const std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
    const std::int64_t count = static_cast<std::int64_t>(x.n()) * plane;
    cache.mean.assign(c, T(0));
    cache.var_biased.assign(c, T(0));
    cache.invstd.assign(c, T(0));
    cache.per_channel_count = count;
    cache.xhat = Tensor4<T>(x.n(), x.c(), x.h(), x.w());
    Tensor4<T> y(x.n(), x.c(), x.h(), x.w());
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < c; ++ic) {
        double sum = 0, sumsq = 0;
        for (int in = 0; in < x.n(); ++in) {
            const T* src = x.plane(in, ic);
            for (std::int64_t i = 0; i < plane; ++i) {
                const double v = static_cast<double>(src[i]);
                sum += v;
                sumsq += v * v;
            }
        }
        const double mean = sum / static_cast<double>(count);
        const double var = std::max(0.0, sumsq / static_cast<double>(count) - mean * mean);
        const double invstd = 1.0 / std::sqrt(var + static_cast<double>(bn.eps));
        cache.mean[ic] = static_cast<T>(mean);
        cache.var_biased[ic] = static_cast<T>(var);
        cache.invstd[ic] = static_cast<T>(invstd);
        const T g = bn.gamma[ic], b = bn.beta[ic];
        for (int in = 0; in < x.n(); ++in) {
            const T* src = x.plane(in, ic);
            T* xh = cache.xhat.plane(in, ic);
            T* dst = y.plane(in, ic);
            for (std::int64_t i = 0; i < plane; ++i) {
                xh[i] = static_cast<T>((static_cast<double>(src[i]) - mean) * invstd);
                dst[i] = xh[i] * g + b;
            }
        }
    }
    return y;
}

// dx_i = gamma * invstd / N * (N dy_i - sum dy - xhat_i * sum dy*xhat)
template <typename T>
Tensor4<T> bn_backward_batch(const Tensor4<T>& dy, const BnParams<T>& bn, const BnCache<T>& cache,
                             std::vector<T>& dgamma, std::vector<T>& dbeta) {
    const int c = dy.c();
    const std::int64_t plane = static_cast<std::int64_t>(dy.h()) * dy.w();
    const std::int64_t count = cache.per_channel_count;
    Tensor4<T> dx(dy.n(), dy.c(), dy.h(), dy.w());
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < c; ++ic) {
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int in = 0; in < dy.n(); ++in) {
            const T* d = dy.plane(in, ic);
            const T* xh = cache.xhat.plane(in, ic);
            for (std::int64_t i = 0; i < plane; ++i) {
                sum_dy += static_cast<double>(d[i]);
                sum_dy_xhat += static_cast<double>(d[i]) * static_cast<double>(xh[i]);
            }
        }
        dgamma[ic] += static_cast<T>(sum_dy_xhat);
        dbeta[ic] += static_cast<T>(sum_dy);
        const double scale = static_cast<double>(bn.gamma[ic]) * static_cast<double>(cache.invstd[ic]) /
                             static_cast<double>(count);
        for (int in = 0; in < dy.n(); ++in) {
            const T* d = dy.plane(in, ic);
            const T* xh = cache.xhat.plane(in, ic);
            T* out = dx.plane(in, ic);
            for (std::int64_t i = 0; i < plane; ++i)
                out[i] = static_cast<T>(scale * (static_cast<double>(count) * static_cast<double>(d[i]) -
                                                 sum_dy - static_cast<double>(xh[i]) * sum_dy_xhat));
        }
    }
    return dx;
}

// Scatter-style direct conv backward; serial on purpose (fixed reduction
// order keeps training bitwise deterministic).
template <typename T>
Tensor4<T> conv2d_backward(const Tensor4<T>& x, const ConvParams<T>& p, const Tensor4<T>& dy,
                           Tensor4<T>& dkernel) {
    const int kh = p.kernel_h(), kw = p.kernel_w();
    const int cing = p.kernel.c();
    const int coutg = p.out_channels() / p.groups;
    Tensor4<T> dx(x.n(), x.c(), x.h(), x.w());
    for (int in = 0; in < x.n(); ++in) {
        for (int oc = 0; oc < p.out_channels(); ++oc) {
            const int g = oc / coutg;
            for (int oy = 0; oy < dy.h(); ++oy) {
                for (int ox = 0; ox < dy.w(); ++ox) {
                    const T grad = dy.at(in, oc, oy, ox);
                    if (grad == T(0)) continue;
                    for (int ic = 0; ic < cing; ++ic) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * p.stride + ky - p.padding;
                            if (iy < 0 || iy >= x.h()) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * p.stride + kx - p.padding;
                                if (ix < 0 || ix >= x.w()) continue;
                                dkernel.at(oc, ic, ky, kx) += grad * x.at(in, g * cing + ic, iy, ix);
                                dx.at(in, g * cing + ic, iy, ix) += grad * p.kernel.at(oc, ic, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    return dx;
}

template <typename T>
struct BlockCache {
    Tensor4<T> input;
    Tensor4<T> conv3_out, conv1_out;
    BnCache<T> bn3, bn1, bnid;
    Tensor4<T> pre_relu;
};

template <typename T>
Tensor4<T> block_forward_batch(const RepVggBlock<T>& block, const Tensor4<T>& x, BlockCache<T>& cache) {
    cache.input = x;
    cache.conv3_out = conv2d(x, block.conv3);
    Tensor4<T> sum = bn_forward_batch(cache.conv3_out, block.bn3, cache.bn3);
    cache.conv1_out = conv2d(x, block.conv1);
    {
        const Tensor4<T> b1 = bn_forward_batch(cache.conv1_out, block.bn1, cache.bn1);
        for (std::int64_t i = 0; i < sum.size(); ++i) sum.data()[i] += b1.data()[i];
    }
    if (block.bn_id) {
        const Tensor4<T> bid = bn_forward_batch(x, *block.bn_id, cache.bnid);
        for (std::int64_t i = 0; i < sum.size(); ++i) sum.data()[i] += bid.data()[i];
    }
    cache.pre_relu = sum;
    return relu(sum);
}

template <typename T>
Tensor4<T> block_backward_batch(const RepVggBlock<T>& block, const BlockCache<T>& cache,
                                const Tensor4<T>& dy, BlockGrads<T>& grads) {
    // through the ReLU gate
    Tensor4<T> d_pre(dy.n(), dy.c(), dy.h(), dy.w());
    for (std::int64_t i = 0; i < dy.size(); ++i)
        d_pre.data()[i] = cache.pre_relu.data()[i] > T(0) ? dy.data()[i] : T(0);

    Tensor4<T> d_bn3_in =
        bn_backward_batch(d_pre, block.bn3, cache.bn3, grads.bn3_gamma, grads.bn3_beta);
    Tensor4<T> dx = conv2d_backward(cache.input, block.conv3, d_bn3_in, grads.conv3_kernel);

    Tensor4<T> d_bn1_in =
        bn_backward_batch(d_pre, block.bn1, cache.bn1, grads.bn1_gamma, grads.bn1_beta);
    {
        const Tensor4<T> dx1 = conv2d_backward(cache.input, block.conv1, d_bn1_in, grads.conv1_kernel);
        for (std::int64_t i = 0; i < dx.size(); ++i) dx.data()[i] += dx1.data()[i];
    }

    if (block.bn_id) {
        const Tensor4<T> dxid =
            bn_backward_batch(d_pre, *block.bn_id, cache.bnid, grads.bnid_gamma, grads.bnid_beta);
        for (std::int64_t i = 0; i < dx.size(); ++i) dx.data()[i] += dxid.data()[i];
    }
    return dx;
}

template <typename T>
struct ForwardCache {
    std::vector<BlockCache<T>> blocks;
    Tensor4<T> features;  // last block output
    Tensor4<T> pooled;
    Tensor4<T> logits;
};

template <typename T>
void forward_train_cached(const Model<T>& model, const Tensor4<T>& x, ForwardCache<T>& cache) {
    if (model.mode != Mode::Train)
        throw std::invalid_argument("training forward requires a train-mode model");
    cache.blocks.resize(model.blocks.size());
    Tensor4<T> cur = x;
    for (std::size_t i = 0; i < model.blocks.size(); ++i)
        cur = block_forward_batch(model.blocks[i], cur, cache.blocks[i]);
    cache.features = cur;
    cache.pooled = global_avg_pool(cur);
    cache.logits = fully_connected(cache.pooled, model.fc_weight, model.fc_bias);
}

}  // namespace train_detail

// Mean softmax cross-entropy; writes dL/dlogits if requested.
template <typename T>
double softmax_cross_entropy(const Tensor4<T>& logits, const std::vector<int>& labels,
                             Tensor4<T>* dlogits = nullptr) {
    if (static_cast<int>(labels.size()) != logits.n())
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    if (dlogits) *dlogits = Tensor4<T>(logits.n(), logits.c(), 1, 1);
    double loss = 0;
    for (int in = 0; in < logits.n(); ++in) {
        const T* row = logits.plane(in, 0);
        double m = static_cast<double>(row[0]);
        for (int k = 1; k < logits.c(); ++k) m = std::max(m, static_cast<double>(row[k]));
        double z = 0;
        for (int k = 0; k < logits.c(); ++k) z += std::exp(static_cast<double>(row[k]) - m);
        const double logz = m + std::log(z);
        loss += logz - static_cast<double>(row[labels[in]]);
        if (dlogits) {
            T* d = dlogits->plane(in, 0);
            for (int k = 0; k < logits.c(); ++k) {
                const double p = std::exp(static_cast<double>(row[k]) - logz);
                d[k] = static_cast<T>((p - (k == labels[in] ? 1.0 : 0.0)) / logits.n());
            }
        }
    }
    return loss / logits.n();
}

// Training loss of one batch, batch-statistics BN, no side effects.
template <typename T>
double loss_on_batch(const Model<T>& model, const Tensor4<T>& inputs, const std::vector<int>& labels) {
    train_detail::ForwardCache<T> cache;
    train_detail::forward_train_cached(model, inputs, cache);
    return softmax_cross_entropy(cache.logits, labels);
}

namespace train_detail {

// Reverse pass over an already-populated forward cache.
template <typename T>
std::pair<double, ModelGrads<T>> backward_from_cache(const Model<T>& model,
                                                     const ForwardCache<T>& cache,
                                                     const std::vector<int>& labels) {
    ModelGrads<T> grads = ModelGrads<T>::zeros_like(model);
    Tensor4<T> dlogits;
    const double loss = softmax_cross_entropy(cache.logits, labels, &dlogits);

    // FC
    Tensor4<T> dpooled(cache.pooled.n(), cache.pooled.c(), 1, 1);
    for (int in = 0; in < dlogits.n(); ++in) {
        const T* drow = dlogits.plane(in, 0);
        const T* xrow = cache.pooled.plane(in, 0);
        for (int k = 0; k < dlogits.c(); ++k) {
            grads.fc_bias[k] += drow[k];
            const T* wrow = model.fc_weight.plane(k, 0);
            T* gw = grads.fc_weight.plane(k, 0);
            for (int ic = 0; ic < cache.pooled.c(); ++ic) gw[ic] += drow[k] * xrow[ic];
            T* dp = dpooled.plane(in, 0);
            for (int ic = 0; ic < cache.pooled.c(); ++ic) dp[ic] += drow[k] * wrow[ic];
        }
    }

    // GAP
    const Tensor4<T>& feat = cache.features;
    Tensor4<T> dfeat(feat.n(), feat.c(), feat.h(), feat.w());
    const std::int64_t plane = static_cast<std::int64_t>(feat.h()) * feat.w();
    for (int in = 0; in < feat.n(); ++in)
        for (int ic = 0; ic < feat.c(); ++ic) {
            const T g = dpooled.at(in, ic, 0, 0) / static_cast<T>(plane);
            T* d = dfeat.plane(in, ic);
            for (std::int64_t i = 0; i < plane; ++i) d[i] = g;
        }

    // blocks, last to first
    Tensor4<T> dcur = dfeat;
    for (int i = static_cast<int>(model.blocks.size()) - 1; i >= 0; --i)
        dcur = block_backward_batch(model.blocks[i], cache.blocks[i], dcur, grads.blocks[i]);
    return {loss, std::move(grads)};
}

}  // namespace train_detail

// Full reverse pass for one batch: gradients for every learnable scalar.
// Running BN statistics are not touched here; the train loop owns the EMA.
template <typename T>
std::pair<double, ModelGrads<T>> backward(const Model<T>& model, const Tensor4<T>& inputs,
                                          const std::vector<int>& labels) {
    if (model.mode != Mode::Train)
        throw std::invalid_argument("backward: deploy-mode model has no training graph");
    train_detail::ForwardCache<T> cache;
    train_detail::forward_train_cached(model, inputs, cache);
    return train_detail::backward_from_cache(model, cache, labels);
}

// EMA of running statistics from the batch statistics of one training forward.
// Running var stores the unbiased estimate (count/(count-1) correction).
template <typename T>
void update_running_stats(Model<T>& model, const std::vector<train_detail::BlockCache<T>>& caches,
                          double momentum) {
    auto apply = [momentum](BnParams<T>& bn, const train_detail::BnCache<T>& cache) {
        const double unbias = cache.per_channel_count > 1
                                  ? static_cast<double>(cache.per_channel_count) /
                                        static_cast<double>(cache.per_channel_count - 1)
                                  : 1.0;
        for (int c = 0; c < bn.channels(); ++c) {
            bn.mu[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(bn.mu[c]) +
                                      momentum * static_cast<double>(cache.mean[c]));
            bn.var[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(bn.var[c]) +
                                       momentum * unbias * static_cast<double>(cache.var_biased[c]));
        }
    };
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        apply(model.blocks[i].bn3, caches[i].bn3);
        apply(model.blocks[i].bn1, caches[i].bn1);
        if (model.blocks[i].bn_id) apply(*model.blocks[i].bn_id, caches[i].bnid);
    }
}

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch, double last_finite_loss, std::any last_state)
        : std::runtime_error("training diverged (non-finite loss) in epoch " + std::to_string(epoch) +
                             "; last finite loss " + std::to_string(last_finite_loss)),
          epoch(epoch),
          last_finite_loss(last_finite_loss),
          last_state(std::move(last_state)) {}

    int epoch;
    double last_finite_loss;
    std::any last_state;  // Model<T> as of the start of the failing epoch
};

struct EpochStats {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double val_acc = 0;
};

void write_curve_csv(std::ostream& os, const std::vector<EpochStats>& curve);

template <typename T>
struct TrainResult {
    Model<T> model;
    std::vector<EpochStats> curve;
};

template <typename T>
double evaluate_accuracy(const Model<T>& model, const Tensor4<T>& inputs, const std::vector<int>& labels) {
    const std::vector<int> pred = argmax_per_sample(forward(model, inputs, ConvPath::Direct));
    int hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += (pred[i] == labels[i]);
    return labels.empty() ? 0.0 : static_cast<double>(hits) / labels.size();
}

// SGD with momentum, weight decay on conv and FC kernels only, per-epoch
// cosine-annealed learning rate, per-batch BN statistics with EMA into the
// running buffers. Deterministic for a fixed (seed, config, dataset).
template <typename T>
TrainResult<T> train(const Model<T>& initial, const ToyDataset<T>& dataset, const TrainConfig& config) {
    config.validate();
    if (initial.mode != Mode::Train)
        throw std::invalid_argument("train: model must be in train mode");
    if (dataset.num_classes != initial.spec.num_classes)
        throw std::invalid_argument("train: dataset has " + std::to_string(dataset.num_classes) +
                                    " classes, model expects " +
                                    std::to_string(initial.spec.num_classes));

    Model<T> model = initial;
    ModelGrads<T> velocity = ModelGrads<T>::zeros_like(model);
    Rng rng(config.seed);
    const int total = dataset.train_inputs.n();
    std::vector<int> order(total);
    std::iota(order.begin(), order.end(), 0);

    auto axpy_t = [](Tensor4<T>& w, Tensor4<T>& v, const Tensor4<T>& g, double lr, double momentum,
                     double wd) {
        for (std::int64_t i = 0; i < w.size(); ++i) {
            const double geff = static_cast<double>(g.data()[i]) + wd * static_cast<double>(w.data()[i]);
            const double vel = momentum * static_cast<double>(v.data()[i]) + geff;
            v.data()[i] = static_cast<T>(vel);
            w.data()[i] = static_cast<T>(static_cast<double>(w.data()[i]) - lr * vel);
        }
    };
    auto axpy_v = [](std::vector<T>& w, std::vector<T>& v, const std::vector<T>& g, double lr,
                     double momentum, double wd) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double geff = static_cast<double>(g[i]) + wd * static_cast<double>(w[i]);
            const double vel = momentum * static_cast<double>(v[i]) + geff;
            v[i] = static_cast<T>(vel);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * vel);
        }
    };

    std::vector<EpochStats> curve;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at_epoch(epoch);
        const Model<T> epoch_start = model;
        double last_finite_loss = curve.empty() ? 0.0 : curve.back().train_loss;

        // Fisher-Yates with the run's private stream
        for (int i = total - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }

        double epoch_loss = 0;
        int seen = 0;
        for (int start = 0; start < total; start += config.batch_size) {
            const int bs = std::min(config.batch_size, total - start);
            Tensor4<T> batch(bs, dataset.train_inputs.c(), dataset.train_inputs.h(),
                             dataset.train_inputs.w());
            std::vector<int> labels(bs);
            const std::int64_t sample = static_cast<std::int64_t>(dataset.train_inputs.c()) *
                                        dataset.train_inputs.h() * dataset.train_inputs.w();
            for (int i = 0; i < bs; ++i) {
                const int src = order[start + i];
                std::copy_n(dataset.train_inputs.data() + src * sample, sample,
                            batch.data() + i * sample);
                labels[i] = dataset.train_labels[src];
            }

            train_detail::ForwardCache<T> cache;
            train_detail::forward_train_cached(model, batch, cache);
            Tensor4<T> dlogits;
            const double loss = softmax_cross_entropy(cache.logits, labels, &dlogits);
            if (!std::isfinite(loss))
                throw TrainingDiverged(epoch, last_finite_loss, std::any(epoch_start));
            last_finite_loss = loss;
            epoch_loss += loss * bs;
            seen += bs;

            auto [loss2, grads] = train_detail::backward_from_cache(model, cache, labels);
            (void)loss2;
            // EMA running stats from this forward's batch statistics
            update_running_stats(model, cache.blocks, config.bn_momentum);
            for (std::size_t b = 0; b < model.blocks.size(); ++b) {
                auto& blk = model.blocks[b];
                auto& g = grads.blocks[b];
                auto& v = velocity.blocks[b];
                axpy_t(blk.conv3.kernel, v.conv3_kernel, g.conv3_kernel, lr, config.momentum,
                       config.weight_decay);
                axpy_t(blk.conv1.kernel, v.conv1_kernel, g.conv1_kernel, lr, config.momentum,
                       config.weight_decay);
                axpy_v(blk.bn3.gamma, v.bn3_gamma, g.bn3_gamma, lr, config.momentum, 0.0);
                axpy_v(blk.bn3.beta, v.bn3_beta, g.bn3_beta, lr, config.momentum, 0.0);
                axpy_v(blk.bn1.gamma, v.bn1_gamma, g.bn1_gamma, lr, config.momentum, 0.0);
                axpy_v(blk.bn1.beta, v.bn1_beta, g.bn1_beta, lr, config.momentum, 0.0);
                if (blk.bn_id) {
                    axpy_v(blk.bn_id->gamma, v.bnid_gamma, g.bnid_gamma, lr, config.momentum, 0.0);
                    axpy_v(blk.bn_id->beta, v.bnid_beta, g.bnid_beta, lr, config.momentum, 0.0);
                }
            }
            axpy_t(model.fc_weight, velocity.fc_weight, grads.fc_weight, lr, config.momentum,
                   config.weight_decay);
            axpy_v(model.fc_bias, velocity.fc_bias, grads.fc_bias, lr, config.momentum, 0.0);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = epoch_loss / seen;
        stats.val_acc = evaluate_accuracy(model, dataset.val_inputs, dataset.val_labels);
        curve.push_back(stats);
    }
    return {std::move(model), std::move(curve)};
}

}  // namespace repvgg
