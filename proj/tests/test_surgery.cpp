// Copyright 2026 The stylebridge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "stylebridge/surgery.hpp"

namespace stylebridge {
namespace {

namespace fs = std::filesystem;

GeneratorConfig ladder_arch() {
    GeneratorConfig a;
    a.z_dim = 8;
    a.w_dim = 8;
    a.mapping_layers = 2;
    a.resolutions = {4, 8, 16, 32, 64};
    a.channels = {4, 4, 4, 4, 4};
    return a;
}

GeneratorConfig small_arch() {
    GeneratorConfig a = ladder_arch();
    a.resolutions = {4, 8, 16};
    a.channels = {6, 4, 4};
    return a;
}

// Second parent with every entry offset, so no parameter coincides with the
// source's deterministic initial values.
GeneratorModel distinct_model(const GeneratorConfig& arch) {
    auto m = GeneratorModel::initialize(arch, 2);
    for (auto& [name, t] : m.params().entries())
        for (auto& v : t.vec()) v += 0.5;
    return m;
}

int block_of(const std::string& name) {
    if (!name.starts_with("syn.b")) return -1;
    return std::stoi(name.substr(5, name.find('.', 5) - 5));
}

TEST(SwapLayers, DepthZeroIsTuned) {
    const auto src = GeneratorModel::initialize(ladder_arch(), 1), tuned = distinct_model(ladder_arch());
    EXPECT_TRUE(bit_equal(swap_layers(src, tuned, SwapDepth{0}).params(), tuned.params()));
}

TEST(SwapLayers, DepthThreePartitionsByBlock) {
    const auto src = GeneratorModel::initialize(ladder_arch(), 1), tuned = distinct_model(ladder_arch());
    const auto out = swap_layers(src, tuned, SwapDepth{3});
    for (const auto& [name, t] : out.params().entries()) {
        const bool from_src = bit_equal(t, src.params().at(name));
        const bool from_tuned = bit_equal(t, tuned.params().at(name));
        EXPECT_NE(from_src, from_tuned) << name;  // exactly one parent
        const int b = block_of(name);
        const bool torgb = name.find(".torgb.") != std::string::npos;
        EXPECT_EQ(from_src, (b == 8 || b == 16 || b == 32) && !torgb) << name;
    }
}

TEST(SwapLayers, ConvOnlyScope) {
    const auto src = GeneratorModel::initialize(ladder_arch(), 1), tuned = distinct_model(ladder_arch());
    const auto out = swap_layers(src, tuned, SwapDepth{1}, SwapScope::ConvOnly);
    for (const auto& [name, t] : out.params().entries()) {
        const bool conv = name == "syn.b8.conv0.weight" || name == "syn.b8.conv1.weight" || name == "syn.b8.conv0.bias" ||
                          name == "syn.b8.conv1.bias";
        EXPECT_TRUE(bit_equal(t, (conv ? src : tuned).params().at(name))) << name;
    }
}

TEST(SwapLayers, MetadataAndErrors) {
    const auto src = GeneratorModel::initialize(ladder_arch(), 1), tuned = distinct_model(ladder_arch());
    const auto out = swap_layers(src, tuned, SwapDepth{2});
    EXPECT_EQ(out.metadata().origin, "swap");
    EXPECT_EQ(out.metadata().recipe.at("swap_depth"), 2);
    EXPECT_EQ(out.metadata().parents, (std::vector<std::string>{model_digest(tuned), model_digest(src)}));
    EXPECT_THROW(swap_layers(src, tuned, SwapDepth{5}), RangeError);
    EXPECT_THROW(swap_layers(src, tuned, SwapDepth{-1}), RangeError);
    EXPECT_THROW(swap_layers(GeneratorModel::initialize(small_arch(), 1), tuned, SwapDepth{1}), ArchitectureMismatch);
    EXPECT_EQ(SwapDepth{4}.resolutions(ladder_arch()), (std::vector<int>{8, 16, 32, 64}));
}

class TransformTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("sb_transform_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

TEST_F(TransformTest, IdentityRecipe) {
    const auto base = GeneratorModel::initialize(small_arch(), 3, "A");
    TransformationRecipe r;
    r.finetune_cfg.iterations = 0;
    r.swap_depth = SwapDepth{0};
    const auto out = transform(base, make_toy_dataset("B", 8, 16, 1), r, dir_ / "ft.sbg");
    EXPECT_TRUE(bit_equal(out.model.params(), base.params()));
    EXPECT_TRUE(fs::exists(dir_ / "ft.sbg"));
    EXPECT_TRUE(bit_equal(load_checkpoint(dir_ / "ft.sbg").params(), out.finetuned.params()));
}

TEST_F(TransformTest, RecipeAndLineageSurviveCheckpoint) {
    const auto base = GeneratorModel::initialize(small_arch(), 3, "A");
    TransformationRecipe r;
    r.finetune_cfg.iterations = 2;
    r.finetune_cfg.batch_size = 2;
    r.swap_depth = SwapDepth{1};
    const auto out = transform(base, make_toy_dataset("B", 8, 16, 1), r);
    save_checkpoint(out.model, dir_ / "t.sbg");
    const auto loaded = load_checkpoint(dir_ / "t.sbg");
    EXPECT_EQ(loaded.metadata(), out.model.metadata());
    const auto back = loaded.metadata().recipe.at("transform").get<TransformationRecipe>();
    EXPECT_EQ(back.freeze.name_patterns, r.freeze.name_patterns);
    EXPECT_EQ(back.swap_depth.l, 1);
    EXPECT_EQ(back.finetune_cfg.iterations, 2);
    EXPECT_EQ(lineage_root(loaded), model_digest(base));
    EXPECT_EQ(loaded.metadata().lineage.back(), model_digest(out.finetuned));
    EXPECT_EQ(loaded.metadata().domain, "B");
    // Swapped block from the base, mapping frozen.
    EXPECT_TRUE(bit_equal(loaded.params().at("syn.b8.conv0.weight"), base.params().at("syn.b8.conv0.weight")));
    EXPECT_TRUE(bit_equal(loaded.params().at("map.0.weight"), base.params().at("map.0.weight")));
}

TEST_F(TransformTest, InvalidRecipeIsRejected) {
    const auto base = GeneratorModel::initialize(small_arch(), 3);
    TransformationRecipe r;
    r.swap_depth = SwapDepth{3};
    EXPECT_THROW(transform(base, make_toy_dataset("B", 8, 16, 1), r), RangeError);
    r.swap_depth = SwapDepth{0};
    r.freeze = FreezeSet{{"nope"}};
    EXPECT_THROW(transform(base, make_toy_dataset("B", 8, 16, 1), r), FreezePatternError);
}

TEST(ModelDistance, IdenticalModelsGiveZero) {
    const auto g = GeneratorModel::initialize(small_arch(), 4);
    const auto r = model_distance(g, g, 16, 3);
    EXPECT_EQ(r.estimate, 0.0);
    EXPECT_EQ(r.std_error, 0.0);
    for (double d : r.per_sample) EXPECT_EQ(d, 0.0);
}

TEST(ModelDistance, SymmetricAndReproducible) {
    const auto a = GeneratorModel::initialize(small_arch(), 4), b = GeneratorModel::initialize(small_arch(), 5);
    const auto ab = model_distance(a, b, 24, 9), ba = model_distance(b, a, 24, 9), again = model_distance(a, b, 24, 9);
    EXPECT_EQ(ab.per_sample, ba.per_sample);
    EXPECT_EQ(ab.estimate, ba.estimate);
    EXPECT_EQ(ab.per_sample, again.per_sample);
    EXPECT_GT(ab.estimate, 0.0);
    EXPECT_NE(model_distance(a, b, 24, 10).estimate, ab.estimate);
}

TEST(ModelDistance, ReportStatistics) {
    const auto a = GeneratorModel::initialize(small_arch(), 4), b = GeneratorModel::initialize(small_arch(), 5);
    const auto r = model_distance(a, b, 30, 2);
    ASSERT_EQ(r.n_samples, 30);
    ASSERT_EQ(r.per_sample.size(), 30u);
    double mean = 0, ss = 0;
    for (double d : r.per_sample) {
        EXPECT_GE(d, 0.0);
        mean += d / 30;
    }
    for (double d : r.per_sample) ss += (d - mean) * (d - mean);
    EXPECT_NEAR(r.estimate, mean, 1e-12);
    EXPECT_NEAR(r.std_error, std::sqrt(ss / 29) / std::sqrt(30.0), 1e-12);
    const auto back = json(r).get<ModelDistanceReport>();
    EXPECT_EQ(back.per_sample, r.per_sample);
    EXPECT_EQ(back.seed, 2u);
}

TEST(ModelDistance, PerSampleMatchesDirectSynthesis) {
    const auto a = GeneratorModel::initialize(small_arch(), 4), b = GeneratorModel::initialize(small_arch(), 5);
    const auto metric = PerceptualMetric::lpips_proxy();
    const auto r = model_distance(a, b, 4, 8, metric);
    const auto zs = sample_z(8, 4, 8);
    for (int i = 0; i < 4; ++i) {
        const auto ns = distance_noise_seed(8, i);
        const auto x = synthesize(a, make_style_plan(a, map_latent(a, zs[i])), ns);
        const auto y = synthesize(b, make_style_plan(b, map_latent(b, zs[i])), ns);
        EXPECT_EQ(r.per_sample[i], perceptual_distance(metric, x, y));
    }
}

TEST(ModelDistance, IncompatibleModelsAreRejected) {
    auto other = small_arch();
    other.z_dim = 6;
    EXPECT_THROW(model_distance(GeneratorModel::initialize(small_arch(), 1), GeneratorModel::initialize(other, 1), 4, 0),
                 ArchitectureMismatch);
}

// Two targets transformed from one base stay within the sum of their
// distances to the base under a metric satisfying the triangle inequality.
TEST(ModelDistance, TransitivityBound) {
    const auto base = GeneratorModel::initialize(small_arch(), 6, "A");
    TransformationRecipe r;
    r.finetune_cfg.iterations = 3;
    r.finetune_cfg.batch_size = 2;
    r.finetune_cfg.learning_rate = 0.01;
    r.swap_depth = SwapDepth{1};
    const auto b = transform(base, make_toy_dataset("B", 8, 16, 1), r).model;
    const auto c = transform(base, make_toy_dataset("C", 8, 16, 2), r).model;
    const auto metric = PerceptualMetric::triangle_metric();
    const double bc = model_distance(b, c, 32, 4, metric).estimate;
    const double ab = model_distance(base, b, 32, 4, metric).estimate;
    const double ac = model_distance(base, c, 32, 4, metric).estimate;
    EXPECT_GT(bc, 0.0);
    EXPECT_LE(bc, ab + ac);
}

}  // namespace
}  // namespace stylebridge
