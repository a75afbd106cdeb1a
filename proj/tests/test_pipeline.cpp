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

#include <filesystem>
#include <fstream>

#include "stylebridge/pipeline.hpp"
#include "stylebridge/surgery.hpp"

namespace stylebridge {
namespace {

namespace fs = std::filesystem;

GeneratorConfig small_arch() {
    GeneratorConfig a;
    a.z_dim = 8;
    a.w_dim = 8;
    a.mapping_layers = 2;
    a.resolutions = {4, 8, 16};
    a.channels = {6, 4, 4};
    return a;
}

class PipelineTest : public ::testing::Test {
protected:
    void SetUp() override {
        source = GeneratorModel::initialize(small_arch(), 1, "A");
        target = GeneratorModel::initialize(small_arch(), 2, "B");
        opt.inversion_cfg.steps = 15;
        opt.inversion_cfg.init_samples = 32;
        input = synthesize(source, make_style_plan(source, map_latent(source, sample_z(4, 1, 8)[0])), 3);
    }
    GeneratorModel source, target;
    TranslationOptions opt;
    ImageTensor input;
};

TEST_F(PipelineTest, SingleEqualsExplicitComposition) {
    const auto t = translate(input, source, target, opt);
    const auto inv = project_w(input, source, opt.inversion_cfg);
    const auto manual = synthesize(target, make_style_plan(target, inv.w), opt.inversion_cfg.noise_seed);
    ASSERT_EQ(t.outputs.size(), 1u);
    EXPECT_EQ(t.outputs[0], manual);
    EXPECT_EQ(t.content.w.values, inv.w.values);
}

TEST_F(PipelineTest, SameModelGivesReconstruction) {
    const auto t = translate(input, source, source, opt);
    EXPECT_EQ(t.outputs[0], t.content.final_image);
}

TEST_F(PipelineTest, ConstrainedModeUsesSourceBasis) {
    opt.inversion = InversionMode::Constrained;
    opt.top_k = 4;
    const auto t = translate(input, source, target, opt);
    const auto inv = invert_constrained(input, source, semantic_basis(extract_affine(source), 4), opt.inversion_cfg);
    EXPECT_EQ(t.content.w.values, inv.w.values);
    ASSERT_TRUE(t.content.v.has_value());
}

TEST_F(PipelineTest, MultimodalSingleStyleWithFullSplitEqualsSingle) {
    opt.split_index = source.style_layer_count();
    const auto mm = translate_multimodal(input, source, target, 1, 5, opt);
    EXPECT_EQ(mm.outputs.at(0), translate(input, source, target, opt).outputs[0]);
}

TEST_F(PipelineTest, MultimodalStylesShareContent) {
    opt.split_index = 4;
    const auto mm = translate_multimodal(input, source, target, 5, 5, opt);
    ASSERT_EQ(mm.outputs.size(), 5u);
    const auto metric = PerceptualMetric::lpips_proxy();
    for (int i = 0; i < 5; ++i) {
        for (int s = 0; s < 4; ++s) EXPECT_TRUE(bit_equal(mm.taps[i].activations[s], mm.taps[0].activations[s]));
        for (int j = i + 1; j < 5; ++j) EXPECT_GT(perceptual_distance(metric, mm.outputs[i], mm.outputs[j]), 0.0);
    }
    const auto again = translate_multimodal(input, source, target, 5, 5, opt);
    EXPECT_EQ(again.outputs, mm.outputs);
    // Appearance codes come from the target mapping in style order.
    const auto zs = sample_z(5, 5, 8);
    EXPECT_EQ(mm.outputs[2], synthesize(target, make_style_plan(target, mm.content.w, map_latent(target, zs[2]), 4),
                                        opt.inversion_cfg.noise_seed));
    EXPECT_THROW(translate_multimodal(input, source, target, 0, 5, opt), RangeError);
}

TEST_F(PipelineTest, ReferenceSplitBoundaries) {
    const auto reference = synthesize(target, make_style_plan(target, map_latent(target, sample_z(8, 1, 8)[0])), 1);
    opt.split_index = 0;
    const auto t = translate_reference(input, reference, source, target, opt);
    ASSERT_TRUE(t.appearance.has_value());
    EXPECT_EQ(t.outputs[0], t.appearance->final_image);

    opt.split_index = 3;
    const auto same = translate_reference(input, input, source, source, opt);
    EXPECT_EQ(same.outputs[0], same.content.final_image);

    EXPECT_THROW(translate_reference(input, ImageTensor(8, 8, 3), source, target, opt), DimensionError);
}

TEST_F(PipelineTest, IncompatibleModelsAreRejected) {
    auto arch = small_arch();
    arch.channels = {6, 4, 2};
    EXPECT_THROW(translate(input, source, GeneratorModel::initialize(arch, 1), opt), ArchitectureMismatch);
}

TEST_F(PipelineTest, MultidomainFlagsUnrelatedLineage) {
    const auto before = parameter_update_counter().load();
    const auto r = multidomain_translate(input, source, target, opt);
    EXPECT_TRUE(r.lineage_mismatch);
    EXPECT_EQ(parameter_update_counter().load(), before);

    auto child = target;
    child.metadata().lineage = {model_digest(source)};
    EXPECT_FALSE(multidomain_translate(input, source, child, opt).lineage_mismatch);
    const auto self = multidomain_translate(input, source, source, opt);
    EXPECT_EQ(self.output, self.translation.content.final_image);
}

TEST(SplitIndex, Defaults) {
    GeneratorConfig a;  // 4..64
    EXPECT_EQ(default_split_index(a), 8);
    a.resolutions = {4, 8, 16, 32};
    a.channels = {4, 4, 4, 4};
    EXPECT_EQ(default_split_index(a), 6);
    a.resolutions = {4, 8, 16, 32, 64, 128};
    a.channels = {4, 4, 4, 4, 4, 4};
    EXPECT_EQ(default_split_index(a), 8);
}

class FileTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("sb_pipe_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    fs::path dir;
};

TEST_F(FileTest, RegistryRoundTrip) {
    ModelRegistry r;
    r.add("B", dir / "b.sbg");
    r.add("A", dir / "a.sbg");
    r.save(dir / "reg.txt");
    const auto back = ModelRegistry::load(dir / "reg.txt");
    EXPECT_EQ(back.entries(), r.entries());
    EXPECT_EQ(back.resolve("A"), dir / "a.sbg");
    EXPECT_THROW(back.resolve("Z"), ConfigError);
    EXPECT_THROW(r.add("x=y", "p"), ConfigError);
    EXPECT_TRUE(ModelRegistry::load(dir / "missing.txt").entries().empty());
}

TEST_F(FileTest, RegistryTranslationLoadsCheckpoints) {
    const auto a = GeneratorModel::initialize(small_arch(), 1, "A");
    save_checkpoint(a, dir / "a.sbg");
    ModelRegistry r;
    r.add("A", dir / "a.sbg");
    TranslationOptions opt;
    opt.inversion_cfg.steps = 3;
    opt.inversion_cfg.init_samples = 8;
    const auto img = synthesize(a, make_style_plan(a, map_latent(a, sample_z(1, 1, 8)[0])), 0);
    const auto res = multidomain_translate(img, r, "A", "A", opt);
    EXPECT_FALSE(res.lineage_mismatch);
    EXPECT_EQ(res.output, translate(img, a, a, opt).outputs[0]);
}

TEST_F(FileTest, ConfigFileOverridesDefaults) {
    std::ofstream(dir / "c.cfg") << "# comment\n\nseed = 17\nresolutions=4,8,16\nchannels=8,8,4\ninversion_steps=20\n";
    PipelineConfig c;
    c.merge_file(dir / "c.cfg");
    EXPECT_EQ(c.get_u64("seed"), 17u);
    EXPECT_EQ(c.generator().max_resolution(), 16);
    EXPECT_EQ(c.inversion().steps, 20);
    EXPECT_EQ(c.train().seed, 17u);
    EXPECT_DOUBLE_EQ(c.finetune().learning_rate, 0.0002);
    EXPECT_FALSE(c.get_optional_int("top_k", "all").has_value());
    EXPECT_NE(c.to_text().find("seed=17\n"), std::string::npos);

    std::ofstream(dir / "bad.cfg") << "nonsense=1\n";
    EXPECT_THROW(c.merge_file(dir / "bad.cfg"), ConfigError);
    c.set("batch_size", "abc");
    EXPECT_THROW(c.train(), ConfigError);
}

TEST(PipelineConfig, DefaultsCoverEveryKey) {
    PipelineConfig c;
    EXPECT_EQ(c.values.size(), PipelineConfig::defaults().size());
    EXPECT_NO_THROW(c.generator());
    EXPECT_NO_THROW(c.train());
    EXPECT_EQ(c.train().iterations, 2000);
    EXPECT_EQ(c.finetune().iterations, 500);
}

}  // namespace
}  // namespace stylebridge
