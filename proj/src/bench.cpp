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

#include "repvgg/bench.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace repvgg {

namespace {

double percentile(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = p * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - lo;
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace

double BenchResult::median_ms() const { return percentile(times_ms, 0.5); }
double BenchResult::iqr_low_ms() const { return percentile(times_ms, 0.25); }
double BenchResult::iqr_high_ms() const { return percentile(times_ms, 0.75); }

double BenchResult::examples_per_second() const {
    const double med = median_ms();
    return med > 0 ? batch * 1000.0 / med : 0.0;
}

BenchResult run_bench(const std::string& name, const std::string& mode, int batch, int warmup,
                      int iterations, const std::function<void()>& fn) {
    if (warmup < kMinBenchWarmup)
        throw std::invalid_argument("run_bench: warmup must be at least " +
                                    std::to_string(kMinBenchWarmup));
    if (iterations < kMinBenchIterations)
        throw std::invalid_argument("run_bench: iterations must be at least " +
                                    std::to_string(kMinBenchIterations));
    BenchResult result;
    result.name = name;
    result.mode = mode;
    result.batch = batch;
    result.warmup = warmup;
    result.iterations = iterations;
    for (int i = 0; i < warmup; ++i) fn();
    result.times_ms.reserve(iterations);
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        result.times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return result;
}

void print_bench_result(std::ostream& os, const BenchResult& result) {
    os << std::fixed << std::setprecision(3);
    os << result.name << " [" << result.mode << "] batch=" << result.batch
       << " warmup=" << result.warmup << " iters=" << result.iterations
       << "  median=" << result.median_ms() << " ms"
       << "  iqr=[" << result.iqr_low_ms() << ", " << result.iqr_high_ms() << "] ms"
       << "  throughput=" << std::setprecision(1) << result.examples_per_second()
       << " examples/s\n";
    os.unsetf(std::ios::fixed);
}

}  // namespace repvgg
