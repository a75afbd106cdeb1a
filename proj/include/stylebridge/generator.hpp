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

// Style-based generator: a mapping MLP z -> w and a synthesis network made of
// resolution blocks whose convolutions are modulated by per-layer affine
// projections of w ("style slots").
//
// Parameter naming (used by freeze sets, layer swapping and checkpoints):
//   map.<i>.weight / map.<i>.bias                  mapping layer i
//   syn.b<R>.const                                 learned 4x4 input (R = 4 only)
//   syn.b<R>.conv<j>.{weight,bias,noise_strength}  j-th modulated conv at R x R
//   syn.b<R>.conv<j>.affine.{weight,bias}          its style affine (A_i, b_i)
//   syn.b<R>.torgb.{weight,bias}                   skip-connection RGB head

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stylebridge/autodiff.hpp"
#include "stylebridge/error.hpp"
#include "stylebridge/image.hpp"
#include "stylebridge/random.hpp"
#include "stylebridge/tensor.hpp"

namespace stylebridge {

using json = nlohmann::json;

inline constexpr double kLeakySlope = 0.2;

struct LatentCode {
    std::vector<double> values;
    std::size_t dim() const { return values.size(); }
    friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

struct EmbeddedCode {
    std::vector<double> values;
    std::size_t dim() const { return values.size(); }
    friend bool operator==(const EmbeddedCode&, const EmbeddedCode&) = default;
};

struct GeneratorConfig {
    int z_dim = 64;
    int w_dim = 64;
    int mapping_layers = 3;
    std::vector<int> resolutions{4, 8, 16, 32, 64};
    std::vector<int> channels{32, 32, 16, 16, 8};
    int image_channels = 3;
    int styles_per_block = 2;

    int block_count() const { return static_cast<int>(resolutions.size()); }
    int style_layer_count() const { return block_count() * styles_per_block; }
    int max_resolution() const { return resolutions.empty() ? 0 : resolutions.back(); }

    /// Input channel count of the modulated conv feeding style slot `slot`.
    int slot_in_channels(int slot) const {
        const int b = slot / styles_per_block, j = slot % styles_per_block;
        if (j == 0 && b > 0) return channels[b - 1];
        return channels[b];
    }
    int slot_resolution(int slot) const { return resolutions[slot / styles_per_block]; }

    void validate() const {
        if (z_dim < 1 || w_dim < 1 || mapping_layers < 1) throw DimensionError("generator: non-positive dimension");
        if (resolutions.empty() || resolutions.front() != 4)
            throw DimensionError("generator: resolution list must start at 4");
        for (std::size_t i = 1; i < resolutions.size(); ++i)
            if (resolutions[i] != 2 * resolutions[i - 1])
                throw DimensionError("generator: resolution list must strictly double");
        if (channels.size() != resolutions.size())
            throw DimensionError("generator: channel list length differs from resolution list");
        for (int c : channels)
            if (c < 1) throw DimensionError("generator: non-positive channel count");
        if (image_channels != 1 && image_channels != 3) throw DimensionError("generator: image channels must be 1 or 3");
        if (styles_per_block < 1) throw DimensionError("generator: styles_per_block must be >= 1");
    }

    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

inline void to_json(json& j, const GeneratorConfig& c) {
    j = json{{"z_dim", c.z_dim},
             {"w_dim", c.w_dim},
             {"mapping_layers", c.mapping_layers},
             {"resolutions", c.resolutions},
             {"channels", c.channels},
             {"image_channels", c.image_channels},
             {"styles_per_block", c.styles_per_block}};
}

inline void from_json(const json& j, GeneratorConfig& c) {
    j.at("z_dim").get_to(c.z_dim);
    j.at("w_dim").get_to(c.w_dim);
    j.at("mapping_layers").get_to(c.mapping_layers);
    j.at("resolutions").get_to(c.resolutions);
    j.at("channels").get_to(c.channels);
    j.at("image_channels").get_to(c.image_channels);
    j.at("styles_per_block").get_to(c.styles_per_block);
}

struct ModelMetadata {
    std::string domain;
    std::optional<std::uint64_t> train_seed;
    std::string origin = "init";        // init | train_base | finetune | swap | transform
    std::vector<std::string> parents;   // digests of direct parents
    std::vector<std::string> lineage;   // digest chain, root ancestor first, direct primary parent last
    json recipe = json::object();

    friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

/// Ordered name -> tensor table; insertion order is the canonical order.
class ParameterTable {
public:
    void add(std::string name, Tensor value) {
        if (index_.contains(name)) throw DimensionError("duplicate parameter " + name);
        index_.emplace(name, entries_.size());
        entries_.emplace_back(std::move(name), std::move(value));
    }

    bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

    Tensor& at(std::string_view name) { return entries_[lookup(name)].second; }
    const Tensor& at(std::string_view name) const { return entries_[lookup(name)].second; }

    auto& entries() { return entries_; }
    const auto& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.numel();
        return n;
    }

private:
    std::size_t lookup(std::string_view name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw DimensionError("unknown parameter " + std::string(name));
        return it->second;
    }

    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

inline bool bit_equal(const ParameterTable& a, const ParameterTable& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& [na, ta] = a.entries()[i];
        const auto& [nb, tb] = b.entries()[i];
        if (na != nb || !bit_equal(ta, tb)) return false;
    }
    return true;
}

namespace names {

inline std::string mapping(int i, std::string_view leaf) { return "map." + std::to_string(i) + "." + std::string(leaf); }
inline std::string block(int res) { return "syn.b" + std::to_string(res) + "."; }
inline std::string conv(int res, int j, std::string_view leaf) {
    return block(res) + "conv" + std::to_string(j) + "." + std::string(leaf);
}
inline std::string torgb(int res, std::string_view leaf) { return block(res) + "torgb." + std::string(leaf); }

}  // namespace names

class GeneratorModel {
public:
    GeneratorModel() = default;

    /// Fresh model with seeded random initialization.
    static GeneratorModel initialize(const GeneratorConfig& arch, std::uint64_t seed, std::string domain = {}) {
        arch.validate();
        GeneratorModel m;
        m.arch_ = arch;
        m.meta_.domain = std::move(domain);
        Rng rng(derive_seed(seed, 0, 0x6e6e));
        auto randn = [&](Shape s, double std) {
            Tensor t(std::move(s));
            std::normal_distribution<double> d(0.0, std);
            for (auto& v : t.vec()) v = d(rng);
            return t;
        };
        for (int i = 0; i < arch.mapping_layers; ++i) {
            const int in = i == 0 ? arch.z_dim : arch.w_dim;
            m.params_.add(names::mapping(i, "weight"), randn({arch.w_dim, in}, std::sqrt(2.0 / in)));
            m.params_.add(names::mapping(i, "bias"), Tensor(Shape{arch.w_dim}, 0.0));
        }
        for (int b = 0; b < arch.block_count(); ++b) {
            const int res = arch.resolutions[b], ch = arch.channels[b];
            if (b == 0) m.params_.add(names::block(res) + "const", randn({1, ch, 4, 4}, 1.0));
            for (int j = 0; j < arch.styles_per_block; ++j) {
                const int in = arch.slot_in_channels(b * arch.styles_per_block + j);
                m.params_.add(names::conv(res, j, "weight"), randn({ch, in, 3, 3}, 1.0));
                m.params_.add(names::conv(res, j, "affine.weight"), randn({in, arch.w_dim}, 1.0 / std::sqrt(arch.w_dim)));
                m.params_.add(names::conv(res, j, "affine.bias"), Tensor(Shape{in}, 1.0));
                m.params_.add(names::conv(res, j, "noise_strength"), Tensor(Shape{1}, 0.0));
                m.params_.add(names::conv(res, j, "bias"), Tensor(Shape{ch}, 0.0));
            }
            m.params_.add(names::torgb(res, "weight"), randn({arch.image_channels, ch, 1, 1}, 1.0 / std::sqrt(ch)));
            m.params_.add(names::torgb(res, "bias"), Tensor(Shape{arch.image_channels}, 0.0));
        }
        return m;
    }

    const GeneratorConfig& arch() const { return arch_; }
    ModelMetadata& metadata() { return meta_; }
    const ModelMetadata& metadata() const { return meta_; }
    ParameterTable& params() { return params_; }
    const ParameterTable& params() const { return params_; }

    int style_layer_count() const { return arch_.style_layer_count(); }
    int resolution() const { return arch_.max_resolution(); }

    /// Checks the parameter table against the architecture (names and shapes).
    void validate() const {
        arch_.validate();
        GeneratorModel ref = initialize(arch_, 0);
        if (ref.params_.size() != params_.size())
            throw ArchitectureMismatch("generator: parameter count " + std::to_string(params_.size()) +
                                       " does not match architecture (" + std::to_string(ref.params_.size()) + ")");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& [name, t] = params_.entries()[i];
            const auto& [rname, rt] = ref.params_.entries()[i];
            if (name != rname || t.shape() != rt.shape())
                throw ArchitectureMismatch("generator: unexpected parameter " + name + shape_str(t.shape()));
            if (!t.all_finite()) throw DimensionError("generator: non-finite entries in " + name);
        }
    }

    /// Per-parameter learning-rate multiplier equal to the weight's
    /// initialization scale, so Adam steps are relative to each layer's
    /// natural magnitude (equalized learning rate). Demodulated conv weights,
    /// biases, the constant input and noise strengths use 1.
    double lr_multiplier(std::string_view name) const {
        auto leaf_is = [&](std::string_view leaf) { return name.ends_with(leaf); };
        if (name.starts_with("map.") && leaf_is(".weight")) {
            const int in = name == names::mapping(0, "weight") ? arch_.z_dim : arch_.w_dim;
            return std::sqrt(2.0 / in);
        }
        if (leaf_is("affine.weight")) return 1.0 / std::sqrt(arch_.w_dim);
        if (leaf_is("torgb.weight")) return 1.0 / std::sqrt(params_.at(name).shape()[1]);
        return 1.0;
    }

    static GeneratorModel from_parts(GeneratorConfig arch, ModelMetadata meta, ParameterTable params) {
        GeneratorModel m;
        m.arch_ = std::move(arch);
        m.meta_ = std::move(meta);
        m.params_ = std::move(params);
        m.validate();
        return m;
    }

private:
    GeneratorConfig arch_;
    ModelMetadata meta_;
    ParameterTable params_;
};

/// One EmbeddedCode per style slot plus the content/appearance boundary.
struct StylePlan {
    std::vector<EmbeddedCode> per_layer_codes;
    int split_index = 0;

    std::size_t size() const { return per_layer_codes.size(); }
};

/// Noise fields for one forward pass: one [N, 1, R, R] tensor per style slot.
using NoiseFields = std::vector<Tensor>;

/// Per-sample noise seeds expanded to per-slot Gaussian fields. Sample n,
/// slot l draws from derive_seed(seeds[n], l), so a sample's noise does not
/// depend on its position in a batch.
inline NoiseFields make_noise(const GeneratorConfig& arch, const std::vector<std::uint64_t>& seeds) {
    NoiseFields fields;
    const int n = static_cast<int>(seeds.size());
    for (int slot = 0; slot < arch.style_layer_count(); ++slot) {
        const int r = arch.slot_resolution(slot);
        Tensor t(Shape{n, 1, r, r});
        for (int s = 0; s < n; ++s) {
            Rng rng(derive_seed(seeds[s], static_cast<std::uint64_t>(slot), 0x401e));
            std::normal_distribution<double> d(0.0, 1.0);
            double* p = t.data() + static_cast<std::size_t>(s) * r * r;
            for (int i = 0; i < r * r; ++i) p[i] = d(rng);
        }
        fields.push_back(std::move(t));
    }
    return fields;
}

/// Binds a model's parameters as graph leaves. Parameters selected by
/// `trainable` become gradient-carrying leaves; the rest are constants.
class GeneratorGraph {
public:
    explicit GeneratorGraph(const GeneratorModel& model, const std::function<bool(std::string_view)>& trainable = {})
        : arch_(model.arch()) {
        for (const auto& [name, t] : model.params().entries()) {
            const bool train = trainable && trainable(name);
            vars_.emplace(name, ad::Var(t, train));
            if (train) trainable_names_.push_back(name);
        }
    }

    const GeneratorConfig& arch() const { return arch_; }
    const ad::Var& param(const std::string& name) const {
        auto it = vars_.find(name);
        if (it == vars_.end()) throw DimensionError("unknown parameter " + name);
        return it->second;
    }

    /// z[N, z_dim] -> w[N, w_dim]
    ad::Var map(const ad::Var& z) const {
        if (z.shape().size() != 2 || z.shape()[1] != arch_.z_dim)
            throw DimensionError("map: expected [N," + std::to_string(arch_.z_dim) + "], got " + shape_str(z.shape()));
        ad::Var x = z;
        for (int i = 0; i < arch_.mapping_layers; ++i)
            x = ad::leaky_relu(ad::linear(x, param(names::mapping(i, "weight")), param(names::mapping(i, "bias"))),
                               kLeakySlope);
        return x;
    }

    /// Synthesis from per-slot codes (each [N, w_dim]). Returns the raw
    /// (unclamped) image [N, C, R, R]. When `taps` is given, the activation
    /// after every style slot is appended in slot order.
    ad::Var synthesize(const std::vector<ad::Var>& slot_codes, const NoiseFields& noise,
                       std::vector<Tensor>* taps = nullptr) const {
        const int layers = arch_.style_layer_count();
        if (static_cast<int>(slot_codes.size()) != layers)
            throw DimensionError("synthesize: " + std::to_string(slot_codes.size()) + " codes for " +
                                 std::to_string(layers) + " style slots");
        if (static_cast<int>(noise.size()) != layers) throw DimensionError("synthesize: noise field count");
        const int n = slot_codes.front().shape()[0];
        for (const auto& c : slot_codes)
            if (c.shape() != Shape{n, arch_.w_dim}) throw DimensionError("synthesize: code shape " + shape_str(c.shape()));

        ad::Var x = ad::broadcast_batch(param(names::block(4) + "const"), n);
        ad::Var rgb;
        for (int b = 0; b < arch_.block_count(); ++b) {
            const int res = arch_.resolutions[b];
            for (int j = 0; j < arch_.styles_per_block; ++j) {
                const int slot = b * arch_.styles_per_block + j;
                if (j == 0 && b > 0) x = ad::upsample2x(x);
                x = modulated_layer(x, slot_codes[slot], noise[slot], res, j);
                if (taps) taps->push_back(x.value());
            }
            ad::Var y = ad::add_channel_bias(ad::conv2d(x, param(names::torgb(res, "weight"))),
                                             param(names::torgb(res, "bias")));
            rgb = rgb.valid() ? ad::add(ad::upsample2x(rgb), y) : y;
        }
        return rgb;
    }

    /// Same code broadcast to every slot.
    ad::Var synthesize_uniform(const ad::Var& w, const NoiseFields& noise, std::vector<Tensor>* taps = nullptr) const {
        return synthesize(std::vector<ad::Var>(arch_.style_layer_count(), w), noise, taps);
    }

    const std::vector<std::string>& trainable_names() const { return trainable_names_; }

    std::vector<std::pair<std::string, Tensor>> gradients() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& name : trainable_names_) out.emplace_back(name, param(name).take_grad());
        return out;
    }

private:
    ad::Var modulated_layer(const ad::Var& x, const ad::Var& code, const Tensor& noise, int res, int j) const {
        const ad::Var& weight = param(names::conv(res, j, "weight"));
        ad::Var style = ad::linear(code, param(names::conv(res, j, "affine.weight")), param(names::conv(res, j, "affine.bias")));
        ad::Var y = ad::conv2d(ad::scale_channels(x, style), weight);
        y = ad::scale_channels(y, ad::demod_coeff(weight, style));
        y = ad::add_noise(y, noise, param(names::conv(res, j, "noise_strength")));
        y = ad::add_channel_bias(y, param(names::conv(res, j, "bias")));
        return ad::leaky_relu(y, kLeakySlope);
    }

    GeneratorConfig arch_;
    std::map<std::string, ad::Var, std::less<>> vars_;
    std::vector<std::string> trainable_names_;
};

// ---------------------------------------------------------------------------
// Public operations

inline std::vector<LatentCode> sample_z(std::uint64_t seed, int n, int z_dim = 64) {
    if (n < 1) throw RangeError("sample_z: n must be >= 1");
    if (z_dim < 1) throw DimensionError("sample_z: z_dim must be >= 1");
    Rng rng(derive_seed(seed, 0, 0x7a));
    std::vector<LatentCode> out(static_cast<std::size_t>(n));
    for (auto& z : out) z.values = normal_vector(rng, static_cast<std::size_t>(z_dim));
    return out;
}

inline Tensor codes_to_tensor(const std::vector<std::vector<double>>& rows) {
    const int n = static_cast<int>(rows.size()), d = static_cast<int>(rows.front().size());
    Tensor t(Shape{n, d});
    for (int i = 0; i < n; ++i) std::copy(rows[i].begin(), rows[i].end(), t.data() + static_cast<std::size_t>(i) * d);
    return t;
}

inline void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw DimensionError(std::string(what) + ": non-finite entry");
}

inline EmbeddedCode map_latent(const GeneratorModel& model, const LatentCode& z) {
    if (static_cast<int>(z.dim()) != model.arch().z_dim)
        throw DimensionError("map_latent: latent has dimension " + std::to_string(z.dim()) + ", model expects " +
                             std::to_string(model.arch().z_dim));
    check_finite(z.values, "map_latent");
    GeneratorGraph g(model);
    ad::Var w = g.map(ad::Var(Tensor(Shape{1, model.arch().z_dim}, z.values)));
    return EmbeddedCode{w.value().to_vector()};
}

/// Layers [0, k) carry w_c; layers [k, L) carry w_a. Without w_a the plan is
/// pure content and k is forced to L.
inline StylePlan make_style_plan(const EmbeddedCode& w_c, const std::optional<EmbeddedCode>& w_a, int split_index,
                                 int layer_count) {
    if (layer_count < 1) throw RangeError("make_style_plan: layer count must be >= 1");
    if (!w_a) split_index = layer_count;
    if (split_index < 0 || split_index > layer_count)
        throw RangeError("make_style_plan: split index " + std::to_string(split_index) + " outside [0, " +
                         std::to_string(layer_count) + "]");
    if (w_a && w_a->dim() != w_c.dim()) throw DimensionError("make_style_plan: content/appearance dimension differ");
    StylePlan plan;
    plan.split_index = split_index;
    for (int i = 0; i < layer_count; ++i) plan.per_layer_codes.push_back(i < split_index ? w_c : *w_a);
    return plan;
}

inline StylePlan make_style_plan(const GeneratorModel& model, const EmbeddedCode& w_c,
                                 const std::optional<EmbeddedCode>& w_a = std::nullopt,
                                 std::optional<int> split_index = std::nullopt) {
    const int layers = model.style_layer_count();
    return make_style_plan(w_c, w_a, split_index.value_or(layers), layers);
}

/// Activations captured after each style slot of a synthesis pass.
struct SynthesisTaps {
    std::vector<Tensor> activations;
};

/// Deterministic single-image synthesis at the model's full resolution,
/// clamped to [-1, 1].
inline ImageTensor synthesize(const GeneratorModel& model, const StylePlan& plan, std::uint64_t noise_seed,
                              SynthesisTaps* taps = nullptr) {
    const auto& arch = model.arch();
    if (static_cast<int>(plan.size()) != arch.style_layer_count())
        throw DimensionError("synthesize: plan has " + std::to_string(plan.size()) + " codes, model has " +
                             std::to_string(arch.style_layer_count()) + " style slots");
    std::vector<ad::Var> codes;
    codes.reserve(plan.size());
    for (const auto& c : plan.per_layer_codes) {
        if (static_cast<int>(c.dim()) != arch.w_dim)
            throw DimensionError("synthesize: code dimension " + std::to_string(c.dim()) + ", model expects " +
                                 std::to_string(arch.w_dim));
        codes.emplace_back(Tensor(Shape{1, arch.w_dim}, c.values));
    }
    GeneratorGraph g(model);
    ad::Var img = g.synthesize(codes, make_noise(arch, {noise_seed}), taps ? &taps->activations : nullptr);
    ImageTensor out = ImageTensor::from_tensor(img.value());
    out.clamp();
    return out;
}

}  // namespace stylebridge
