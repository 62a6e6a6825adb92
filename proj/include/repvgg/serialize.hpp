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

#include <stdexcept>
#include <string>

#include "repvgg/arch.hpp"

namespace repvgg {

// .rvgg weight container:
//   bytes 0..3   magic "RVGG"
//   bytes 4..7   format version, unsigned 32-bit little-endian
//   bytes 8..11  header length in bytes, unsigned 32-bit little-endian
//   header       JSON text: format {version, dtype, mode, bn_eps}, the model
//                spec, and a tensor manifest (name, shape, offset, nbytes)
//   payload      raw little-endian scalars, starting at the first 64-byte
//                boundary after the header; every tensor offset (relative to
//                the payload start) is 64-byte aligned
// Round trips are bit-exact and re-serialization of a loaded model is
// byte-identical.
inline constexpr std::uint32_t kWeightFileVersion = 1;

class WeightFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
void save_model(const Model<T>& model, const std::string& path);

template <typename T>
Model<T> load_model(const std::string& path);

// Peeks at the header without loading the payload ("f32" or "f64").
std::string weight_file_dtype(const std::string& path);

extern template void save_model<float>(const Model<float>&, const std::string&);
extern template void save_model<double>(const Model<double>&, const std::string&);
extern template Model<float> load_model<float>(const std::string&);
extern template Model<double> load_model<double>(const std::string&);

}  // namespace repvgg
