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

#include "repvgg/bigint.hpp"

#include <algorithm>
#include <stdexcept>

namespace repvgg {

BigUint::BigUint(std::uint64_t v) {
    limbs_ = {static_cast<std::uint32_t>(v & 0xffffffffULL), static_cast<std::uint32_t>(v >> 32)};
    trim();
}

void BigUint::trim() {
    while (limbs_.size() > 1 && limbs_.back() == 0) limbs_.pop_back();
}

BigUint& BigUint::mul(std::uint32_t factor) {
    std::uint64_t carry = 0;
    for (auto& limb : limbs_) {
        const std::uint64_t prod = static_cast<std::uint64_t>(limb) * factor + carry;
        limb = static_cast<std::uint32_t>(prod & 0xffffffffULL);
        carry = prod >> 32;
    }
    while (carry) {
        limbs_.push_back(static_cast<std::uint32_t>(carry & 0xffffffffULL));
        carry >>= 32;
    }
    trim();
    return *this;
}

BigUint& BigUint::add(const BigUint& other) {
    const std::size_t n = std::max(limbs_.size(), other.limbs_.size());
    limbs_.resize(n, 0);
    std::uint64_t carry = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t sum = static_cast<std::uint64_t>(limbs_[i]) + carry;
        if (i < other.limbs_.size()) sum += other.limbs_[i];
        limbs_[i] = static_cast<std::uint32_t>(sum & 0xffffffffULL);
        carry = sum >> 32;
    }
    if (carry) limbs_.push_back(static_cast<std::uint32_t>(carry));
    return *this;
}

bool BigUint::fits_u64() const { return limbs_.size() <= 2; }

std::uint64_t BigUint::to_u64() const {
    if (!fits_u64()) throw std::overflow_error("BigUint: value does not fit in 64 bits");
    std::uint64_t v = limbs_[0];
    if (limbs_.size() == 2) v |= static_cast<std::uint64_t>(limbs_[1]) << 32;
    return v;
}

std::string BigUint::to_decimal() const {
    std::vector<std::uint32_t> work(limbs_.rbegin(), limbs_.rend());  // big-endian for division
    std::string digits;
    while (!(work.size() == 1 && work[0] == 0)) {
        std::uint64_t rem = 0;
        for (auto& limb : work) {
            const std::uint64_t cur = (rem << 32) | limb;
            limb = static_cast<std::uint32_t>(cur / 10);
            rem = cur % 10;
        }
        digits.push_back(static_cast<char>('0' + rem));
        while (work.size() > 1 && work.front() == 0) work.erase(work.begin());
    }
    if (digits.empty()) digits = "0";
    std::reverse(digits.begin(), digits.end());
    return digits;
}

BigUint BigUint::pow(std::uint32_t base, int exponent) {
    BigUint out(1);
    for (int i = 0; i < exponent; ++i) out.mul(base);
    return out;
}

}  // namespace repvgg
