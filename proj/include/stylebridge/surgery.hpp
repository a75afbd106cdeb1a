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

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stylebridge/checkpoint.hpp"
#include "stylebridge/error.hpp"
#include "stylebridge/generator.hpp"
#include "stylebridge/metrics.hpp"
#include "stylebridge/training.hpp"

namespace stylebridge {

/// Number of coarse synthesis blocks taken from the source model. Block
/// indexing starts at 8x8: depth l swaps resolutions 8, 16, ..., 8 * 2^(l-1).
/// The 4x4 block is never swapped.
struct SwapDepth {
    int l = 0;

    static int max_for(const GeneratorConfig& arch) { return std::max(0, arch.block_count() - 1); }

    void validate(const GeneratorConfig& arch) const {
        if (l < 0 || l > max_for(arch))
            throw RangeError("swap depth " + std::to_string(l) + " outside [0, " + std::to_string(max_for(arch)) + "]");
    }

    /// Resolutions swapped at this depth, coarse first.
    std::vector<int> resolutions(const GeneratorConfig& arch) const {
        validate(arch);
        return {arch.resolutions.begin() + 1, arch.resolutions.begin() + 1 + l};
    }
};

/// Which parameters of a swapped block come from the source.
enum class SwapScope {
    WholeBlock,  // convolutions, style affines, noise strengths and biases; toRGB stays tuned
    ConvOnly,    // convolution weights and biases only
};

inline std::string to_string(SwapScope s) { return s == SwapScope::WholeBlock ? "block" : "conv"; }

inline SwapScope swap_scope_from_string(std::string_view s) {
    if (s == "block") return SwapScope::WholeBlock;
    if (s == "conv") return SwapScope::ConvOnly;
    throw ConfigError("unknown swap scope '" + std::string(s) + "' (expected block or conv)");
}

/// True when parameter `name` is taken from the source at this depth/scope.
inline bool swapped_from_source(std::string_view name, const GeneratorConfig& arch, SwapDepth depth,
                                SwapScope scope = SwapScope::WholeBlock) {
    for (int res : depth.resolutions(arch)) {
        const std::string prefix = names::block(res);
        if (!name.starts_with(prefix)) continue;
        if (name.starts_with(names::torgb(res, ""))) return false;
        if (scope == SwapScope::WholeBlock) return true;
        for (int j = 0; j < arch.styles_per_block; ++j)
            if (name == names::conv(res, j, "weight") || name == names::conv(res, j, "bias")) return true;
        return false;
    }
    return false;
}

/// Layer swap: coarse blocks from `source`, everything else from `tuned`.
inline GeneratorModel swap_layers(const GeneratorModel& source, const GeneratorModel& tuned, SwapDepth depth,
                                  SwapScope scope = SwapScope::WholeBlock) {
    if (source.arch() != tuned.arch()) throw ArchitectureMismatch("swap_layers: source and tuned architectures differ");
    depth.validate(tuned.arch());
    ParameterTable params;
    for (const auto& [name, t] : tuned.params().entries())
        params.add(name, swapped_from_source(name, tuned.arch(), depth, scope) ? source.params().at(name) : t);

    ModelMetadata md = tuned.metadata();
    const std::string tuned_digest = model_digest(tuned);
    md.origin = "swap";
    md.parents = {tuned_digest, model_digest(source)};
    md.lineage.push_back(tuned_digest);
    md.recipe = json{{"swap_depth", depth.l},
                     {"swap_scope", to_string(scope)},
                     {"swapped_resolutions", depth.resolutions(tuned.arch())}};
    return GeneratorModel::from_parts(tuned.arch(), std::move(md), std::move(params));
}

/// A reproducible record of T = S(F(base, target), l).
struct TransformationRecipe {
    FreezeSet freeze = FreezeSet::mapping_network();
    TrainConfig finetune_cfg = TrainConfig::finetune_defaults();
    SwapDepth swap_depth{};
    SwapScope swap_scope = SwapScope::WholeBlock;

    void validate(const GeneratorModel& base) const {
        freeze.validate(base.params());
        finetune_cfg.validate();
        swap_depth.validate(base.arch());
    }
};

inline void to_json(json& j, const TransformationRecipe& r) {
    j = json{{"freeze", r.freeze.name_patterns},
             {"finetune", r.finetune_cfg},
             {"swap_depth", r.swap_depth.l},
             {"swap_scope", to_string(r.swap_scope)}};
}

inline void from_json(const json& j, TransformationRecipe& r) {
    r.freeze.name_patterns = j.at("freeze").get<std::vector<std::string>>();
    r.finetune_cfg = j.at("finetune").get<TrainConfig>();
    r.swap_depth.l = j.at("swap_depth").get<int>();
    r.swap_scope = swap_scope_from_string(j.value("swap_scope", std::string("block")));
}

struct TransformResult {
    GeneratorModel model;        // S(F(base), l)
    GeneratorModel finetuned;    // F(base), the intermediate
    Discriminator discriminator; // discriminator after fine-tuning
    std::vector<LossRecord> trace;
};

/// Applies a transformation recipe. When `intermediate_path` is given the
/// fine-tuned model is written there before swapping.
inline TransformResult transform(const GeneratorModel& base, const Dataset& target, const TransformationRecipe& recipe,
                                 const std::optional<std::filesystem::path>& intermediate_path = std::nullopt,
                                 const Discriminator* base_disc = nullptr) {
    recipe.validate(base);
    TrainResult ft = finetune(base, target, recipe.freeze, recipe.finetune_cfg, base_disc);
    if (intermediate_path) save_checkpoint(ft.generator, *intermediate_path);
    GeneratorModel out = swap_layers(base, ft.generator, recipe.swap_depth, recipe.swap_scope);
    auto& md = out.metadata();
    md.origin = "transform";
    md.recipe = json{{"transform", recipe}};
    return TransformResult{std::move(out), std::move(ft.generator), std::move(ft.discriminator), std::move(ft.trace)};
}

// ---------------------------------------------------------------------------
// Model distance

struct ModelDistanceReport {
    double estimate = 0.0;
    double std_error = 0.0;
    int n_samples = 0;
    std::uint64_t seed = 0;
    std::vector<double> per_sample;
};

inline void to_json(json& j, const ModelDistanceReport& r) {
    j = json{{"estimate", r.estimate},
             {"std_error", r.std_error},
             {"n_samples", r.n_samples},
             {"seed", r.seed},
             {"per_sample", r.per_sample}};
}

inline void from_json(const json& j, ModelDistanceReport& r) {
    r.estimate = j.at("estimate").get<double>();
    r.std_error = j.at("std_error").get<double>();
    r.n_samples = j.at("n_samples").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.per_sample = j.at("per_sample").get<std::vector<double>>();
}

/// Noise seed of sample i in a distance evaluation (shared by both models).
inline std::uint64_t distance_noise_seed(std::uint64_t seed, int i) {
    return derive_seed(seed, static_cast<std::uint64_t>(i), 0xd157);
}

/// Mean and standard error (sample std / sqrt(n)) of per-sample values.
inline ModelDistanceReport summarize_distances(std::vector<double> per_sample, std::uint64_t seed) {
    ModelDistanceReport r;
    r.seed = seed;
    r.n_samples = static_cast<int>(per_sample.size());
    double sum = 0.0;
    for (double d : per_sample) sum += d;
    r.estimate = sum / r.n_samples;
    if (r.n_samples > 1) {
        double ss = 0.0;
        for (double d : per_sample) ss += (d - r.estimate) * (d - r.estimate);
        r.std_error = std::sqrt(ss / (r.n_samples - 1)) / std::sqrt(static_cast<double>(r.n_samples));
    }
    r.per_sample = std::move(per_sample);
    return r;
}

/// Monte-Carlo estimate of E_z[dist(g1(z), g2(z))]. Each model maps z with
/// its own mapping network and synthesizes a pure-content plan; sample i uses
/// the same noise seed for both models.
inline ModelDistanceReport model_distance(const GeneratorModel& g1, const GeneratorModel& g2, int n, std::uint64_t seed,
                                          const PerceptualMetric& metric = PerceptualMetric::lpips_proxy()) {
    if (g1.arch().z_dim != g2.arch().z_dim) throw ArchitectureMismatch("model_distance: latent dimensions differ");
    if (g1.resolution() != g2.resolution() || g1.arch().image_channels != g2.arch().image_channels)
        throw ArchitectureMismatch("model_distance: output shapes differ");
    metric.validate();
    const auto zs = sample_z(seed, n, g1.arch().z_dim);
    std::vector<double> per_sample(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint64_t ns = distance_noise_seed(seed, i);
        const ImageTensor a = synthesize(g1, make_style_plan(g1, map_latent(g1, zs[i])), ns);
        const ImageTensor b = synthesize(g2, make_style_plan(g2, map_latent(g2, zs[i])), ns);
        per_sample[i] = perceptual_distance(metric, a, b);
    }
    return summarize_distances(std::move(per_sample), seed);
}

}  // namespace stylebridge
