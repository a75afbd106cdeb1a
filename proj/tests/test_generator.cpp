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
#include <vector>

#include "stylebridge/generator.hpp"

namespace stylebridge {
namespace {

GeneratorConfig tiny_arch() {
    GeneratorConfig a;
    a.z_dim = 8;
    a.w_dim = 8;
    a.mapping_layers = 2;
    a.resolutions = {4, 8, 16};
    a.channels = {6, 4, 4};
    return a;
}

double leaky(double x) { return x >= 0 ? x : 0.2 * x; }

TEST(SampleZ, DeterministicAndSeeded) {
    const auto a = sample_z(7, 3);
    const auto b = sample_z(7, 3);
    ASSERT_EQ(a.size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i].values, b[i].values);
    EXPECT_NE(sample_z(8, 1)[0].values, a[0].values);
}

TEST(SampleZ, MinimalAndInvalidCounts) {
    const auto one = sample_z(7, 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].dim(), 64u);
    EXPECT_THROW(sample_z(7, 0), RangeError);
}

TEST(SampleZ, MatchesStandardNormalMoments) {
    const auto zs = sample_z(7, 10000);
    for (int k = 0; k < 64; ++k) {
        double m = 0, v = 0;
        for (const auto& z : zs) m += z.values[k];
        m /= zs.size();
        for (const auto& z : zs) v += (z.values[k] - m) * (z.values[k] - m);
        v /= zs.size() - 1;
        EXPECT_NEAR(m, 0.0, 0.05) << "coordinate " << k;
        EXPECT_NEAR(v, 1.0, 0.05) << "coordinate " << k;
    }
}

TEST(MapLatent, ZeroIsAFixedPointWithZeroBiases) {
    const auto m = GeneratorModel::initialize(tiny_arch(), 3);
    const auto w = map_latent(m, LatentCode{std::vector<double>(8, 0.0)});
    for (double v : w.values) EXPECT_EQ(v, 0.0);
}

TEST(MapLatent, MatchesDenseOracle) {
    GeneratorConfig arch = tiny_arch();
    arch.z_dim = 3;
    arch.w_dim = 2;
    auto m = GeneratorModel::initialize(arch, 3);
    auto& p = m.params();
    p.at("map.0.weight") = Tensor(Shape{2, 3}, {0.1, -0.2, 0.3, 0.05, 0.4, -0.1});
    p.at("map.0.bias") = Tensor(Shape{2}, {0.01, -0.02});
    p.at("map.1.weight") = Tensor(Shape{2, 2}, {0.5, -0.3, 0.2, 0.7});
    p.at("map.1.bias") = Tensor(Shape{2}, {0.0, 0.03});
    const std::vector<double> z{0.7, -1.2, 0.4};

    const double W0[2][3] = {{0.1, -0.2, 0.3}, {0.05, 0.4, -0.1}}, b0[2] = {0.01, -0.02};
    const double W1[2][2] = {{0.5, -0.3}, {0.2, 0.7}}, b1[2] = {0.0, 0.03};
    double h[2], out[2];
    for (int i = 0; i < 2; ++i) {
        h[i] = b0[i];
        for (int k = 0; k < 3; ++k) h[i] += W0[i][k] * z[k];
        h[i] = leaky(h[i]);
    }
    for (int i = 0; i < 2; ++i) {
        out[i] = b1[i];
        for (int k = 0; k < 2; ++k) out[i] += W1[i][k] * h[k];
        out[i] = leaky(out[i]);
    }
    const auto w = map_latent(m, LatentCode{z});
    EXPECT_NEAR(w.values[0], out[0], 1e-6);
    EXPECT_NEAR(w.values[1], out[1], 1e-6);
}

TEST(MapLatent, EqualMappingGivesEqualCodes) {
    const auto a = GeneratorModel::initialize(tiny_arch(), 1);
    auto b = GeneratorModel::initialize(tiny_arch(), 2);
    for (const auto& [name, t] : a.params().entries())
        if (name.starts_with("map.")) b.params().at(name) = t;
    for (const auto& z : sample_z(11, 256, 8)) EXPECT_EQ(map_latent(a, z).values, map_latent(b, z).values);
}

TEST(MapLatent, RejectsWrongDimension) {
    const auto m = GeneratorModel::initialize(tiny_arch(), 1);
    EXPECT_THROW(map_latent(m, LatentCode{std::vector<double>(5, 0.0)}), DimensionError);
}

TEST(StylePlan, SplitSemantics) {
    const EmbeddedCode c{{1.0, 2.0}}, a{{3.0, 4.0}};
    const int L = 6;
    auto pure = make_style_plan(c, std::nullopt, 2, L);
    EXPECT_EQ(pure.split_index, L);
    for (const auto& x : pure.per_layer_codes) EXPECT_EQ(x.values, c.values);

    auto all_a = make_style_plan(c, a, 0, L);
    for (const auto& x : all_a.per_layer_codes) EXPECT_EQ(x.values, a.values);

    auto tail = make_style_plan(c, a, L - 2, L);
    for (int i = 0; i < L; ++i) EXPECT_EQ(tail.per_layer_codes[i].values, (i >= L - 2 ? a : c).values);

    EXPECT_THROW(make_style_plan(c, a, L + 1, L), RangeError);
    EXPECT_THROW(make_style_plan(c, a, -1, L), RangeError);
}

TEST(Synthesize, DeterministicAndShaped) {
    const auto m = GeneratorModel::initialize(tiny_arch(), 4);
    const auto plan = make_style_plan(m, map_latent(m, sample_z(1, 1, 8)[0]));
    const auto x = synthesize(m, plan, 9);
    const auto y = synthesize(m, plan, 9);
    EXPECT_EQ(x, y);
    EXPECT_EQ(x.height, 16);
    EXPECT_EQ(x.channels, 3);
    for (double v : x.pixels) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Synthesize, RejectsMismatchedPlan) {
    const auto m = GeneratorModel::initialize(tiny_arch(), 4);
    const EmbeddedCode w{std::vector<double>(8, 0.1)};
    EXPECT_THROW(synthesize(m, make_style_plan(w, std::nullopt, 0, 3), 0), DimensionError);
    EXPECT_THROW(synthesize(m, make_style_plan(m, EmbeddedCode{std::vector<double>(5, 0.0)}), 0), DimensionError);
}

// Single 4x4 block, two modulated 3x3 layers and a 1x1 toRGB, computed with
// explicit loops.
TEST(Synthesize, SingleBlockMatchesLoopOracle) {
    GeneratorConfig arch;
    arch.z_dim = 2;
    arch.w_dim = 2;
    arch.mapping_layers = 1;
    arch.resolutions = {4};
    arch.channels = {2};
    arch.image_channels = 1;
    auto m = GeneratorModel::initialize(arch, 0);
    auto& p = m.params();
    int counter = 0;
    for (auto& [name, t] : p.entries())
        for (auto& v : t.vec()) v = 0.1 * std::sin(1.7 * ++counter) + (name.ends_with("affine.bias") ? 1.0 : 0.0);
    p.at("syn.b4.conv0.noise_strength")[0] = 0.3;
    p.at("syn.b4.conv1.noise_strength")[0] = -0.2;

    const EmbeddedCode w{{0.8, -0.5}};
    const std::uint64_t seed = 21;
    const auto noise = make_noise(arch, {seed});

    std::vector<double> x = p.at("syn.b4.const").to_vector();  // [2,4,4]
    for (int j = 0; j < 2; ++j) {
        const std::string pre = "syn.b4.conv" + std::to_string(j) + ".";
        const Tensor& W = p.at(pre + "weight");
        const Tensor& A = p.at(pre + "affine.weight");
        const Tensor& b = p.at(pre + "affine.bias");
        double s[2];
        for (int i = 0; i < 2; ++i) s[i] = b[i] + A.at(i, 0) * w.values[0] + A.at(i, 1) * w.values[1];
        std::vector<double> y(2 * 16, 0.0);
        for (int o = 0; o < 2; ++o) {
            double q = 0;
            for (int i = 0; i < 2; ++i)
                for (int k = 0; k < 9; ++k) q += std::pow(W[(o * 2 + i) * 9 + k] * s[i], 2);
            const double d = 1.0 / std::sqrt(q + 1e-8);
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) {
                    double acc = 0;
                    for (int i = 0; i < 2; ++i)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int rr = r + ky - 1, cc = c + kx - 1;
                                if (rr < 0 || rr >= 4 || cc < 0 || cc >= 4) continue;
                                acc += W[((o * 2 + i) * 3 + ky) * 3 + kx] * s[i] * x[i * 16 + rr * 4 + cc];
                            }
                    const double v = acc * d + p.at(pre + "noise_strength")[0] * noise[j][r * 4 + c] + p.at(pre + "bias")[o];
                    y[o * 16 + r * 4 + c] = leaky(v);
                }
        }
        x = y;
    }
    const Tensor& T = p.at("syn.b4.torgb.weight");
    const double tb = p.at("syn.b4.torgb.bias")[0];
    const auto img = synthesize(m, make_style_plan(m, w), seed);
    for (int q = 0; q < 16; ++q) {
        const double v = std::clamp(T[0] * x[q] + T[1] * x[16 + q] + tb, -1.0, 1.0);
        EXPECT_NEAR(img.pixels[q], v, 1e-5);
    }
}

TEST(Synthesize, AppearanceChangesLeavePreSplitActivationsIntact) {
    const auto m = GeneratorModel::initialize(tiny_arch(), 5);
    const auto zs = sample_z(3, 3, 8);
    const auto wc = map_latent(m, zs[0]);
    const int k = 3;
    SynthesisTaps t1, t2;
    synthesize(m, make_style_plan(m, wc, map_latent(m, zs[1]), k), 7, &t1);
    synthesize(m, make_style_plan(m, wc, map_latent(m, zs[2]), k), 7, &t2);
    ASSERT_EQ(t1.activations.size(), 6u);
    for (int s = 0; s < k; ++s) EXPECT_TRUE(bit_equal(t1.activations[s], t2.activations[s])) << "slot " << s;
    EXPECT_FALSE(bit_equal(t1.activations[k], t2.activations[k]));
}

TEST(GeneratorConfig, ValidationAndCounts) {
    GeneratorConfig a = tiny_arch();
    EXPECT_EQ(a.style_layer_count(), 6);
    EXPECT_EQ(a.max_resolution(), 16);
    a.resolutions = {4, 8, 32};
    EXPECT_ANY_THROW(a.validate());
    a = tiny_arch();
    a.resolutions = {8, 16, 32};
    EXPECT_ANY_THROW(a.validate());
    a = tiny_arch();
    a.image_channels = 2;
    EXPECT_ANY_THROW(a.validate());
}

TEST(GeneratorModel, EveryAffineConsumesWDim) {
    const auto m = GeneratorModel::initialize(tiny_arch(), 1);
    int affines = 0;
    for (const auto& [name, t] : m.params().entries())
        if (name.ends_with("affine.weight")) {
            EXPECT_EQ(t.dim(1), 8);
            ++affines;
        }
    EXPECT_EQ(affines, m.style_layer_count());
}

}  // namespace
}  // namespace stylebridge
