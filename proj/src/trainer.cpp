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

#include "repvgg/trainer.hpp"

#include <ostream>

namespace repvgg {

void write_curve_csv(std::ostream& os, const std::vector<EpochStats>& curve) {
    os << "epoch,lr,trainLoss,valAcc\n";
    for (const EpochStats& e : curve)
        os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_acc << '\n';
}

}  // namespace repvgg
