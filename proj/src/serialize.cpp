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

#include "repvgg/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts are not supported");

namespace repvgg {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'R', 'V', 'G', 'G'};
constexpr std::size_t kAlign = 64;

std::size_t align_up(std::size_t v) { return (v + kAlign - 1) / kAlign * kAlign; }

template <typename T>
const char* dtype_name() {
    if constexpr (sizeof(T) == 4) return "f32";
    else return "f64";
}

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    const void* data = nullptr;  // save side
    void* dest = nullptr;        // load side
    std::size_t nbytes = 0;
};

// Canonical tensor enumeration; load and save must agree on it exactly.
template <typename T>
std::vector<TensorRef> enumerate_tensors(Model<T>& model) {
    std::vector<TensorRef> refs;
    auto add_t = [&refs](const std::string& name, Tensor4<T>& t) {
        refs.push_back({name,
                        {t.n(), t.c(), t.h(), t.w()},
                        t.data(),
                        t.data(),
                        static_cast<std::size_t>(t.size()) * sizeof(T)});
    };
    auto add_v = [&refs](const std::string& name, std::vector<T>& v) {
        refs.push_back({name, {static_cast<int>(v.size())}, v.data(), v.data(), v.size() * sizeof(T)});
    };

    if (model.mode == Mode::Train) {
        for (std::size_t i = 0; i < model.blocks.size(); ++i) {
            const std::string p = "layer" + std::to_string(i + 1);
            auto& b = model.blocks[i];
            add_t(p + ".conv3.kernel", b.conv3.kernel);
            add_t(p + ".conv1.kernel", b.conv1.kernel);
            add_v(p + ".bn3.mu", b.bn3.mu);
            add_v(p + ".bn3.var", b.bn3.var);
            add_v(p + ".bn3.gamma", b.bn3.gamma);
            add_v(p + ".bn3.beta", b.bn3.beta);
            add_v(p + ".bn1.mu", b.bn1.mu);
            add_v(p + ".bn1.var", b.bn1.var);
            add_v(p + ".bn1.gamma", b.bn1.gamma);
            add_v(p + ".bn1.beta", b.bn1.beta);
            if (b.bn_id) {
                add_v(p + ".bnid.mu", b.bn_id->mu);
                add_v(p + ".bnid.var", b.bn_id->var);
                add_v(p + ".bnid.gamma", b.bn_id->gamma);
                add_v(p + ".bnid.beta", b.bn_id->beta);
            }
        }
    } else {
        for (std::size_t i = 0; i < model.fused.size(); ++i) {
            const std::string p = "layer" + std::to_string(i + 1);
            add_t(p + ".fused.kernel", model.fused[i].conv.kernel);
            add_v(p + ".fused.bias", *model.fused[i].conv.bias);
        }
    }
    add_t("head.fc.kernel", model.fc_weight);
    add_v("head.fc.bias", model.fc_bias);
    return refs;
}

ordered_json spec_to_json(const ModelSpec& spec) {
    ordered_json j;
    j["name"] = spec.name;
    j["variant"] = to_string(spec.variant);
    j["layers_per_stage"] = spec.layers_per_stage;
    j["stage_widths"] = spec.stage_widths;
    j["mult_a"] = spec.mult_a;
    j["mult_b"] = spec.mult_b;
    j["groups"] = spec.groups;
    j["groupwise_layers"] = spec.groupwise_layers;
    j["num_classes"] = spec.num_classes;
    j["input_channels"] = spec.input_channels;
    return j;
}

ModelSpec spec_from_json(const ordered_json& j) {
    ModelSpec spec;
    try {
        spec.name = j.at("name").get<std::string>();
        spec.variant = variant_from_string(j.at("variant").get<std::string>());
        spec.layers_per_stage = j.at("layers_per_stage").get<std::vector<int>>();
        spec.stage_widths = j.at("stage_widths").get<std::vector<int>>();
        spec.mult_a = j.at("mult_a").get<double>();
        spec.mult_b = j.at("mult_b").get<double>();
        spec.groups = j.at("groups").get<int>();
        spec.groupwise_layers = j.at("groupwise_layers").get<std::vector<int>>();
        spec.num_classes = j.at("num_classes").get<int>();
        spec.input_channels = j.at("input_channels").get<int>();
    } catch (const ordered_json::exception& e) {
        throw WeightFileError(std::string("header field 'spec': ") + e.what());
    }
    try {
        spec.validate();
    } catch (const std::exception& e) {
        throw WeightFileError(std::string("header field 'spec': ") + e.what());
    }
    return spec;
}

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

std::uint32_t get_u32(const std::string& bytes, std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + at, 4);
    return v;
}

// Builds an empty model skeleton (correct shapes, zero data) for a spec+mode.
template <typename T>
Model<T> model_skeleton(const ModelSpec& spec, Mode mode, double bn_eps) {
    Model<T> model;
    model.spec = spec;
    model.mode = mode;
    for (const LayerInfo& li : layer_layout(spec)) {
        if (mode == Mode::Train) {
            model.blocks.push_back(
                make_block_shell<T>(li.c_in, li.c_out, li.stride, li.groups, static_cast<T>(bn_eps)));
        } else {
            typename Model<T>::DeployLayer layer;
            layer.conv = ConvParams<T>{Tensor4<T>(li.c_out, li.c_in / li.groups, 3, 3),
                                       std::vector<T>(li.c_out, T(0)), li.stride, 1, li.groups};
            model.fused.push_back(std::move(layer));
        }
    }
    model.fc_weight = Tensor4<T>(spec.num_classes, spec.stage_widths.back(), 1, 1);
    model.fc_bias.assign(spec.num_classes, T(0));
    return model;
}

template <typename T>
double model_bn_eps(const Model<T>& model) {
    double eps = 1e-5;
    bool found = false;
    for (const auto& b : model.blocks) {
        for (const BnParams<T>* bn : {&b.bn3, &b.bn1}) {
            if (!found) {
                eps = static_cast<double>(bn->eps);
                found = true;
            } else if (static_cast<double>(bn->eps) != eps) {
                throw WeightFileError("save: per-layer BN eps values differ; files store one eps");
            }
        }
        if (b.bn_id && found && static_cast<double>(b.bn_id->eps) != eps)
            throw WeightFileError("save: per-layer BN eps values differ; files store one eps");
    }
    return eps;
}

}  // namespace

template <typename T>
void save_model(const Model<T>& model, const std::string& path) {
    model.spec.validate();
    auto& mutable_model = const_cast<Model<T>&>(model);  // enumerate_tensors only reads here
    std::vector<TensorRef> refs = enumerate_tensors(mutable_model);

    ordered_json header;
    header["format"] = {{"version", kWeightFileVersion},
                        {"dtype", dtype_name<T>()},
                        {"mode", to_string(model.mode)},
                        {"bn_eps", model_bn_eps(model)}};
    header["spec"] = spec_to_json(model.spec);

    std::size_t offset = 0;
    ordered_json manifest = ordered_json::array();
    for (const TensorRef& ref : refs) {
        ordered_json entry;
        entry["name"] = ref.name;
        entry["shape"] = ref.shape;
        entry["offset"] = offset;
        entry["nbytes"] = ref.nbytes;
        manifest.push_back(entry);
        offset = align_up(offset + ref.nbytes);
    }
    header["tensors"] = manifest;

    const std::string header_text = header.dump();
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kWeightFileVersion);
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    out.resize(align_up(out.size()), '\0');

    const std::size_t payload_start = out.size();
    std::size_t payload_size = 0;
    for (std::size_t i = 0; i < refs.size(); ++i)
        payload_size = std::max(payload_size,
                                manifest[i]["offset"].get<std::size_t>() + refs[i].nbytes);
    out.resize(payload_start + payload_size, '\0');
    for (std::size_t i = 0; i < refs.size(); ++i)
        std::memcpy(out.data() + payload_start + manifest[i]["offset"].get<std::size_t>(),
                    refs[i].data, refs[i].nbytes);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw WeightFileError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw WeightFileError("short write to '" + path + "'");
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WeightFileError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

ordered_json parse_header(const std::string& bytes, std::size_t& payload_start) {
    if (bytes.size() < 12) throw WeightFileError("file truncated: no header prefix");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw WeightFileError("bad magic bytes; not a RVGG weight file");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kWeightFileVersion)
        throw WeightFileError("unsupported format version " + std::to_string(version) +
                              " (expected " + std::to_string(kWeightFileVersion) + ")");
    const std::uint32_t header_len = get_u32(bytes, 8);
    if (12 + static_cast<std::size_t>(header_len) > bytes.size())
        throw WeightFileError("file truncated: header length " + std::to_string(header_len) +
                              " exceeds file size");
    ordered_json header;
    try {
        header = ordered_json::parse(bytes.substr(12, header_len));
    } catch (const ordered_json::exception& e) {
        throw WeightFileError(std::string("header is not valid JSON: ") + e.what());
    }
    payload_start = align_up(12 + static_cast<std::size_t>(header_len));
    if (payload_start > bytes.size()) throw WeightFileError("file truncated: missing payload");
    return header;
}

}  // namespace

std::string weight_file_dtype(const std::string& path) {
    std::size_t payload_start = 0;
    const ordered_json header = parse_header(read_file(path), payload_start);
    try {
        return header.at("format").at("dtype").get<std::string>();
    } catch (const ordered_json::exception& e) {
        throw WeightFileError(std::string("header field 'format.dtype': ") + e.what());
    }
}

template <typename T>
Model<T> load_model(const std::string& path) {
    const std::string bytes = read_file(path);
    std::size_t payload_start = 0;
    const ordered_json header = parse_header(bytes, payload_start);
    const std::size_t payload_size = bytes.size() - payload_start;

    std::string dtype, mode_str;
    double bn_eps = 1e-5;
    try {
        const auto& fmt = header.at("format");
        dtype = fmt.at("dtype").get<std::string>();
        mode_str = fmt.at("mode").get<std::string>();
        bn_eps = fmt.at("bn_eps").get<double>();
    } catch (const ordered_json::exception& e) {
        throw WeightFileError(std::string("header field 'format': ") + e.what());
    }
    if (dtype != dtype_name<T>())
        throw WeightFileError("dtype mismatch: file holds " + dtype + ", loader expects " +
                              dtype_name<T>());
    Mode mode;
    try {
        mode = mode_from_string(mode_str);
    } catch (const std::exception& e) {
        throw WeightFileError(std::string("header field 'format.mode': ") + e.what());
    }
    if (!header.contains("spec")) throw WeightFileError("header field 'spec' missing");
    const ModelSpec spec = spec_from_json(header.at("spec"));

    Model<T> model = model_skeleton<T>(spec, mode, bn_eps);
    std::vector<TensorRef> refs = enumerate_tensors(model);

    if (!header.contains("tensors") || !header.at("tensors").is_array())
        throw WeightFileError("header field 'tensors' missing or not an array");
    const auto& manifest = header.at("tensors");
    if (manifest.size() != refs.size())
        throw WeightFileError("tensor manifest has " + std::to_string(manifest.size()) +
                              " entries, model layout needs " + std::to_string(refs.size()));

    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& entry = manifest[i];
        std::string name;
        std::vector<int> shape;
        std::size_t offset = 0, nbytes = 0;
        try {
            name = entry.at("name").get<std::string>();
            shape = entry.at("shape").get<std::vector<int>>();
            offset = entry.at("offset").get<std::size_t>();
            nbytes = entry.at("nbytes").get<std::size_t>();
        } catch (const ordered_json::exception& e) {
            throw WeightFileError("tensor manifest entry " + std::to_string(i) + ": " + e.what());
        }
        if (name != refs[i].name)
            throw WeightFileError("tensor " + std::to_string(i) + ": expected '" + refs[i].name +
                                  "', file has '" + name + "'");
        if (shape != refs[i].shape)
            throw WeightFileError("tensor '" + name + "': shape mismatch against the model spec");
        if (nbytes != refs[i].nbytes)
            throw WeightFileError("tensor '" + name + "': nbytes " + std::to_string(nbytes) +
                                  " does not match shape (" + std::to_string(refs[i].nbytes) +
                                  " expected)");
        if (offset % kAlign != 0)
            throw WeightFileError("tensor '" + name + "': offset " + std::to_string(offset) +
                                  " is not 64-byte aligned");
        if (offset < prev_end)
            throw WeightFileError("tensor '" + name + "': offset " + std::to_string(offset) +
                                  " overlaps the previous tensor");
        if (offset + nbytes > payload_size)
            throw WeightFileError("tensor '" + name + "': offset " + std::to_string(offset) +
                                  " + nbytes " + std::to_string(nbytes) +
                                  " exceeds payload size " + std::to_string(payload_size));
        prev_end = offset + nbytes;
        std::memcpy(refs[i].dest, bytes.data() + payload_start + offset, nbytes);
    }

    // rebuild the Winograd kernel caches for stride-1 deploy layers
    if (model.mode == Mode::Deploy)
        for (auto& layer : model.fused)
            if (layer.conv.stride == 1) layer.wino = winograd_transform_kernel(layer.conv);
    return model;
}

template void save_model<float>(const Model<float>&, const std::string&);
template void save_model<double>(const Model<double>&, const std::string&);
template Model<float> load_model<float>(const std::string&);
template Model<double> load_model<double>(const std::string&);

}  // namespace repvgg
