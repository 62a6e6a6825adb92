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
#include <string>
#include <vector>

namespace repvgg {

// Unsigned big integer, just enough for exact ensemble counting (products of
// small factors, decimal rendering).
class BigUint {
public:
    BigUint() : limbs_{0} {}
    explicit BigUint(std::uint64_t v);

    BigUint& mul(std::uint32_t factor);
    BigUint& add(const BigUint& other);

    bool operator==(const BigUint& other) const { return limbs_ == other.limbs_; }

    bool fits_u64() const;
    std::uint64_t to_u64() const;  // throws if it does not fit
    std::string to_decimal() const;

    static BigUint pow(std::uint32_t base, int exponent);

private:
    void trim();
    std::vector<std::uint32_t> limbs_;  // base 2^32, little-endian
};

}  // namespace repvgg
