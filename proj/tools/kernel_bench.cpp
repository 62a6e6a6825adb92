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

// Compares the serial reference convolution against the OpenMP direct kernel
// and the F(2x2, 3x3) Winograd kernel on a handful of layer shapes.

#include <cstdio>

#include "repvgg/bench.hpp"
#include "repvgg/ops.hpp"
#include "repvgg/rng.hpp"
#include "repvgg/winograd.hpp"

using namespace repvgg;

namespace {

struct Case {
    const char* name;
    int batch, c_in, c_out, hw, stride, groups;
};

Tensor4<float> random_tensor(int n, int c, int h, int w, Rng& rng) {
    Tensor4<float> t(n, c, h, w);
    for (std::int64_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

}  // namespace

int main() {
    const Case cases[] = {
        {"32ch 32x32 s1", 1, 32, 32, 32, 1, 1},
        {"64ch 28x28 s1", 1, 64, 64, 28, 1, 1},
        {"64ch 28x28 s1 g4", 1, 64, 64, 28, 1, 4},
        {"64ch 56x56 s2", 1, 64, 64, 56, 2, 1},
        {"batch8 32ch 32x32 s1", 8, 32, 32, 32, 1, 1},
    };

    Rng rng(42);
    std::printf("%-22s %12s %12s %12s %10s %10s %12s\n", "case", "serial(ms)", "omp(ms)",
                "wino(ms)", "omp-spdup", "wino-spdup", "max|diff|");
    for (const Case& c : cases) {
        const Tensor4<float> x = random_tensor(c.batch, c.c_in, c.hw, c.hw, rng);
        ConvParams<float> p{random_tensor(c.c_out, c.c_in / c.groups, 3, 3, rng), std::nullopt,
                            c.stride, 1, c.groups};

        const BenchResult serial =
            run_bench(c.name, "serial", c.batch, 10, 30, [&] { conv2d_reference(x, p); });
        const BenchResult omp = run_bench(c.name, "omp", c.batch, 10, 30, [&] { conv2d(x, p); });

        double wino_ms = -1.0, wino_diff = 0.0;
        if (c.stride == 1) {
            const WinogradKernel<float> wk = winograd_transform_kernel(p);
            const BenchResult wino = run_bench(c.name, "wino", c.batch, 10, 30,
                                               [&] { winograd_conv3x3(x, wk, p.bias, p.padding); });
            wino_ms = wino.median_ms();
            wino_diff = max_abs_diff(winograd_conv3x3(x, p), conv2d_reference(x, p));
        }
        const double direct_diff = max_abs_diff(conv2d(x, p), conv2d_reference(x, p));

        if (wino_ms >= 0)
            std::printf("%-22s %12.3f %12.3f %12.3f %9.2fx %9.2fx %12.2e\n", c.name,
                        serial.median_ms(), omp.median_ms(), wino_ms,
                        serial.median_ms() / omp.median_ms(), serial.median_ms() / wino_ms,
                        std::max(direct_diff, wino_diff));
        else
            std::printf("%-22s %12.3f %12.3f %12s %9.2fx %10s %12.2e\n", c.name, serial.median_ms(),
                        omp.median_ms(), "-", serial.median_ms() / omp.median_ms(), "-",
                        direct_diff);
    }
    return 0;
}
