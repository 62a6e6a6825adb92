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

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "repvgg/reparam.hpp"
#include "repvgg/serialize.hpp"
#include "test_util.hpp"

using namespace repvgg;

namespace {

namespace fs = std::filesystem;

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("rvgg_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

template <typename T>
void check_models_equal(const Model<T>& a, const Model<T>& b) {
    REQUIRE(a.spec == b.spec);
    REQUIRE(a.mode == b.mode);
    REQUIRE(a.blocks.size() == b.blocks.size());
    REQUIRE(a.fused.size() == b.fused.size());
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        CHECK(max_abs_diff(a.blocks[i].conv3.kernel, b.blocks[i].conv3.kernel) == 0.0);
        CHECK(max_abs_diff(a.blocks[i].conv1.kernel, b.blocks[i].conv1.kernel) == 0.0);
        CHECK(a.blocks[i].bn3.mu == b.blocks[i].bn3.mu);
        CHECK(a.blocks[i].bn3.var == b.blocks[i].bn3.var);
        CHECK(a.blocks[i].bn1.gamma == b.blocks[i].bn1.gamma);
        CHECK(a.blocks[i].bn1.beta == b.blocks[i].bn1.beta);
        CHECK(a.blocks[i].bn_id.has_value() == b.blocks[i].bn_id.has_value());
        if (a.blocks[i].bn_id) {
            CHECK(a.blocks[i].bn_id->mu == b.blocks[i].bn_id->mu);
            CHECK(a.blocks[i].bn_id->var == b.blocks[i].bn_id->var);
        }
    }
    for (std::size_t i = 0; i < a.fused.size(); ++i) {
        CHECK(max_abs_diff(a.fused[i].conv.kernel, b.fused[i].conv.kernel) == 0.0);
        CHECK(*a.fused[i].conv.bias == *b.fused[i].conv.bias);
    }
    CHECK(max_abs_diff(a.fc_weight, b.fc_weight) == 0.0);
    CHECK(a.fc_bias == b.fc_bias);
}

}  // namespace

TEST_CASE("save/load round trip is bit-exact") {
    TempDir tmp;
    const ModelSpec spec = make_custom_spec({1, 2}, {6, 6}, 5);

    SUBCASE("train mode, f32") {
        const Model<float> model = instantiate<float>(spec, 42);
        const fs::path p = tmp.path / "train.rvgg";
        save_model(model, p.string());
        check_models_equal(model, load_model<float>(p.string()));
    }
    SUBCASE("deploy mode, f64") {
        const Model<double> model = convert_model(instantiate<double>(spec, 43));
        const fs::path p = tmp.path / "deploy64.rvgg";
        save_model(model, p.string());
        const Model<double> back = load_model<double>(p.string());
        check_models_equal(model, back);
        // winograd caches are rebuilt for the stride-1 fused layers only
        CHECK(back.fused[2].conv.stride == 1);
        CHECK(back.fused[2].wino.has_value());
        CHECK(back.fused[1].conv.stride == 2);
        CHECK_FALSE(back.fused[1].wino.has_value());
    }
    SUBCASE("preset round trip") {
        const Model<float> model = instantiate<float>(preset_spec("A0", 10), 7);
        const fs::path p = tmp.path / "a0.rvgg";
        save_model(model, p.string());
        const Model<float> back = load_model<float>(p.string());
        CHECK(back.spec.name == "A0");
        check_models_equal(model, back);
    }
}

TEST_CASE("re-serialization of a loaded model is byte-identical") {
    TempDir tmp;
    const Model<float> model = instantiate<float>(make_custom_spec({2}, {4}, 3), 1);
    const fs::path p1 = tmp.path / "one.rvgg";
    const fs::path p2 = tmp.path / "two.rvgg";
    save_model(model, p1.string());
    save_model(load_model<float>(p1.string()), p2.string());
    CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("deploy files are strictly smaller than train files") {
    TempDir tmp;
    const Model<float> model = instantiate<float>(make_custom_spec({1, 2}, {8, 8}, 6), 3);
    const fs::path pt = tmp.path / "t.rvgg";
    const fs::path pd = tmp.path / "d.rvgg";
    save_model(model, pt.string());
    save_model(convert_model(model), pd.string());
    CHECK(fs::file_size(pd) < fs::file_size(pt));
}

TEST_CASE("dtype mismatch is reported") {
    TempDir tmp;
    const Model<float> model = instantiate<float>(make_custom_spec({1}, {4}, 3), 2);
    const fs::path p = tmp.path / "f32.rvgg";
    save_model(model, p.string());
    CHECK(weight_file_dtype(p.string()) == "f32");
    CHECK_THROWS_WITH_AS(load_model<double>(p.string()), doctest::Contains("dtype"),
                         WeightFileError);
}

TEST_CASE("corrupted files fail loudly, no partial model") {
    TempDir tmp;
    const Model<float> model = instantiate<float>(make_custom_spec({1, 1}, {4, 4}, 3), 9);
    const fs::path p = tmp.path / "m.rvgg";
    save_model(model, p.string());
    const std::string good = read_bytes(p);

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        write_bytes(p, bad);
        CHECK_THROWS_WITH_AS(load_model<float>(p.string()), doctest::Contains("magic"),
                             WeightFileError);
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[4] = 9;
        write_bytes(p, bad);
        CHECK_THROWS_WITH_AS(load_model<float>(p.string()), doctest::Contains("version"),
                             WeightFileError);
    }
    SUBCASE("truncated payload") {
        write_bytes(p, good.substr(0, good.size() - 64));
        CHECK_THROWS_AS(load_model<float>(p.string()), WeightFileError);
    }
    SUBCASE("manifest offset pushed out of bounds") {
        // bump the head.fc.kernel offset by one aligned step
        const std::string needle = "\"name\":\"head.fc.kernel\",\"shape\":[3,4,1,1],\"offset\":";
        const std::size_t at = good.find(needle);
        REQUIRE(at != std::string::npos);
        const std::size_t digits = at + needle.size();
        std::size_t end = digits;
        while (std::isdigit(static_cast<unsigned char>(good[end]))) ++end;
        const std::string offset_str = good.substr(digits, end - digits);
        // rewrite the offset with the same digit count (header length is baked
        // into the prefix) so only the value changes
        std::string bumped = offset_str;
        bumped[0] = '9';
        std::string bad = good;
        bad.replace(digits, offset_str.size(), bumped);
        write_bytes(p, bad);
        CHECK_THROWS_WITH_AS(load_model<float>(p.string()),
                             doctest::Contains("head.fc.kernel"), WeightFileError);
    }
    SUBCASE("header is not JSON") {
        std::string bad = good;
        bad[12] = '?';
        write_bytes(p, bad);
        CHECK_THROWS_WITH_AS(load_model<float>(p.string()), doctest::Contains("JSON"),
                             WeightFileError);
    }
}

TEST_CASE("loading a deploy file yields a model convert leaves alone") {
    TempDir tmp;
    const Model<float> deploy = convert_model(instantiate<float>(make_custom_spec({1, 1}, {4, 6}, 3), 11));
    const fs::path p = tmp.path / "d.rvgg";
    save_model(deploy, p.string());
    const Model<float> loaded = load_model<float>(p.string());
    CHECK(loaded.mode == Mode::Deploy);
    const Model<float> converted = convert_model(loaded);
    check_models_equal(loaded, converted);
}

TEST_CASE("converted model round-trips through a file with bit-identical outputs") {
    TempDir tmp;
    const Model<float> deploy =
        convert_model(instantiate<float>(make_custom_spec({1, 2}, {6, 6}, 4), 31));
    Rng rng(70);
    Tensor4<float> x(2, 3, 12, 12);
    for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    const Tensor4<float> before = forward(deploy, x, ConvPath::Auto);

    const fs::path p = tmp.path / "deploy.rvgg";
    save_model(deploy, p.string());
    const Tensor4<float> after = forward(load_model<float>(p.string()), x, ConvPath::Auto);
    CHECK(max_abs_diff(before, after) == 0.0);
}

TEST_CASE("golden fixture stays byte-stable") {
    const fs::path golden = fs::path(REPVGG_TEST_DATA_DIR) / "golden_custom_v1.rvgg";
    REQUIRE_MESSAGE(fs::exists(golden), "missing fixture: run make-golden-fixture");
    const Model<float> model = load_model<float>(golden.string());

    // frozen facts about the committed fixture
    CHECK(model.mode == Mode::Train);
    CHECK(model.spec.layers_per_stage == std::vector<int>{1, 2});
    CHECK(model.spec.stage_widths == std::vector<int>{5, 5});
    CHECK(model.spec.num_classes == 3);
    CHECK(model.blocks.size() == 3);
    CHECK(model.blocks[2].has_identity());

    TempDir tmp;
    const fs::path again = tmp.path / "golden_again.rvgg";
    save_model(model, again.string());
    CHECK(read_bytes(golden) == read_bytes(again));
}
