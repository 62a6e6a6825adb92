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

#include <chrono>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace repvgg {

// Wall-clock measurement of one workload: warmup runs, then timed iterations,
// summarized by median and interquartile range. Floors on warmup and timed
// iterations keep one-off outliers from dominating.
struct BenchResult {
    std::string name;
    std::string mode;
    int batch = 1;
    int warmup = 0;
    int iterations = 0;
    std::vector<double> times_ms;

    double median_ms() const;
    double iqr_low_ms() const;   // 25th percentile
    double iqr_high_ms() const;  // 75th percentile
    double examples_per_second() const;
};

inline constexpr int kMinBenchWarmup = 10;
inline constexpr int kMinBenchIterations = 30;

BenchResult run_bench(const std::string& name, const std::string& mode, int batch, int warmup,
                      int iterations, const std::function<void()>& fn);

void print_bench_result(std::ostream& os, const BenchResult& result);

}  // namespace repvgg
