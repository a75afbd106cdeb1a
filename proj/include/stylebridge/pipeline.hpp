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

// Translation workflows built from inversion and synthesis, the model
// registry used for multi-domain translation, and the key=value
// configuration file shared by the command-line tool.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stylebridge/checkpoint.hpp"
#include "stylebridge/error.hpp"
#include "stylebridge/generator.hpp"
#include "stylebridge/latent_analysis.hpp"
#include "stylebridge/training.hpp"

namespace stylebridge {

// ---------------------------------------------------------------------------
// Split index

/// Default content/appearance boundary: slots at resolution <= 32 carry the
/// content code. On models whose top resolution is 32 or less the boundary
/// moves down to R_max / 2 so at least one block carries appearance.
inline int default_split_index(const GeneratorConfig& arch) {
    const int limit = std::min(32, arch.max_resolution() / 2);
    int k = 0;
    for (int s = 0; s < arch.style_layer_count(); ++s)
        if (arch.slot_resolution(s) <= limit) ++k;
    return k;
}

// ---------------------------------------------------------------------------
// Translation

struct TranslationOptions {
    InversionMode inversion = InversionMode::Baseline;
    InversionConfig inversion_cfg{};
    std::optional<int> split_index;  // default_split_index when absent
    std::optional<int> top_k;        // basis truncation for constrained inversion
};

/// Inversion under `model` with the requested mode; builds the basis from
/// the model's style affines when constrained.
inline InversionResult invert_with(const ImageTensor& image, const GeneratorModel& model, const TranslationOptions& opt) {
    if (opt.inversion == InversionMode::Baseline) return project_w(image, model, opt.inversion_cfg);
    const SemanticBasis basis = semantic_basis(extract_affine(model), opt.top_k);
    return invert_constrained(image, model, basis, opt.inversion_cfg);
}

inline void require_compatible(const GeneratorModel& source, const GeneratorModel& target) {
    if (source.arch() != target.arch()) throw ArchitectureMismatch("translate: source and target architectures differ");
}

struct Translation {
    std::vector<ImageTensor> outputs;
    InversionResult content;                    // inversion of the input under the source model
    std::optional<InversionResult> appearance;  // reference mode only
    std::vector<SynthesisTaps> taps;            // one per output
    int split_index = 0;
};

/// Single mode: synthesize(target, plan(Inv(input, source))).
inline Translation translate(const ImageTensor& input, const GeneratorModel& source, const GeneratorModel& target,
                             const TranslationOptions& opt = {}) {
    require_compatible(source, target);
    Translation t{{}, invert_with(input, source, opt), std::nullopt, {}, target.style_layer_count()};
    t.taps.emplace_back();
    t.outputs.push_back(synthesize(target, make_style_plan(target, t.content.w), opt.inversion_cfg.noise_seed, &t.taps[0]));
    return t;
}

/// Synthesizes content code w_c with each appearance code, split at k.
inline void render_styles(Translation& t, const GeneratorModel& target, const std::vector<EmbeddedCode>& appearance,
                          std::uint64_t noise_seed) {
    for (const auto& w_a : appearance) {
        t.taps.emplace_back();
        t.outputs.push_back(
            synthesize(target, make_style_plan(target, t.content.w, w_a, t.split_index), noise_seed, &t.taps.back()));
    }
}

/// Multi-modal mode: one content code, n appearance codes w_a = f(z_a) with
/// z_a = sample_z(style_seed, n). Outputs are in style order.
inline Translation translate_multimodal(const ImageTensor& input, const GeneratorModel& source,
                                        const GeneratorModel& target, int n, std::uint64_t style_seed,
                                        const TranslationOptions& opt = {}) {
    require_compatible(source, target);
    if (n < 1) throw RangeError("translate_multimodal: n must be >= 1");
    Translation t{{}, invert_with(input, source, opt), std::nullopt, {},
                  opt.split_index.value_or(default_split_index(target.arch()))};
    std::vector<EmbeddedCode> appearance;
    for (const auto& z : sample_z(style_seed, n, target.arch().z_dim)) appearance.push_back(map_latent(target, z));
    render_styles(t, target, appearance, opt.inversion_cfg.noise_seed);
    return t;
}

/// Reference mode: content from the input under the source model, appearance
/// from the reference under the target model.
inline Translation translate_reference(const ImageTensor& input, const ImageTensor& reference,
                                       const GeneratorModel& source, const GeneratorModel& target,
                                       const TranslationOptions& opt = {}) {
    require_compatible(source, target);
    if (reference.height != target.resolution() || reference.width != target.resolution())
        throw DimensionError("translate_reference: reference resolution differs from the target model");
    Translation t{{}, invert_with(input, source, opt), invert_with(reference, target, opt), {},
                  opt.split_index.value_or(default_split_index(target.arch()))};
    render_styles(t, target, {t.appearance->w}, opt.inversion_cfg.noise_seed);
    return t;
}

// ---------------------------------------------------------------------------
// Registry

/// Domain tag -> checkpoint path, persisted as "tag=path" lines.
class ModelRegistry {
public:
    ModelRegistry() = default;

    static ModelRegistry load(const std::filesystem::path& file) {
        ModelRegistry r;
        std::ifstream in(file);
        if (!in) return r;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError("registry line " + std::to_string(lineno) + ": expected tag=path");
            r.entries_[line.substr(0, eq)] = line.substr(eq + 1);
        }
        return r;
    }

    void save(const std::filesystem::path& file) const {
        std::ofstream out(file, std::ios::trunc);
        if (!out) throw ConfigError("cannot write registry " + file.string());
        for (const auto& [tag, path] : entries_) out << tag << '=' << path.string() << '\n';
    }

    void add(const std::string& tag, const std::filesystem::path& path) {
        if (tag.empty() || tag.find('=') != std::string::npos) throw ConfigError("invalid registry tag '" + tag + "'");
        entries_[tag] = path;
    }

    const std::filesystem::path& resolve(const std::string& tag) const {
        auto it = entries_.find(tag);
        if (it == entries_.end()) throw ConfigError("registry has no model tagged '" + tag + "'");
        return it->second;
    }

    const std::map<std::string, std::filesystem::path>& entries() const { return entries_; }

private:
    std::map<std::string, std::filesystem::path> entries_;
};

struct MultidomainResult {
    ImageTensor output;
    Translation translation;
    bool lineage_mismatch = false;  // models do not share a root ancestor
};

/// True when both models descend from one root checkpoint.
inline bool shared_lineage(const GeneratorModel& a, const GeneratorModel& b) { return lineage_root(a) == lineage_root(b); }

/// Translation between two registered models; no training is performed.
inline MultidomainResult multidomain_translate(const ImageTensor& input, const GeneratorModel& from,
                                               const GeneratorModel& to, const TranslationOptions& opt = {}) {
    MultidomainResult r{{}, translate(input, from, to, opt), !shared_lineage(from, to)};
    r.output = r.translation.outputs.front();
    return r;
}

inline MultidomainResult multidomain_translate(const ImageTensor& input, const ModelRegistry& registry,
                                               const std::string& from_tag, const std::string& to_tag,
                                               const TranslationOptions& opt = {}) {
    return multidomain_translate(input, load_checkpoint(registry.resolve(from_tag)),
                                 load_checkpoint(registry.resolve(to_tag)), opt);
}

// ---------------------------------------------------------------------------
// Configuration

/// Line-oriented key=value settings. Unknown keys are rejected.
struct PipelineConfig {
    std::map<std::string, std::string> values;

    static const std::vector<std::pair<std::string, std::string>>& defaults() {
        static const std::vector<std::pair<std::string, std::string>> d = {
            {"seed", "0"},
            {"z_dim", "64"},
            {"w_dim", "64"},
            {"mapping_layers", "3"},
            {"resolutions", "4,8,16,32,64"},
            {"channels", "32,32,16,16,8"},
            {"image_channels", "3"},
            {"styles_per_block", "2"},
            {"iterations", "2000"},
            {"batch_size", "8"},
            {"learning_rate", "0.002"},
            {"log_every", "50"},
            {"finetune_iterations", "500"},
            {"finetune_learning_rate", "0.0002"},
            {"freeze_d_layers", "0"},
            {"swap_depth", "0"},
            {"swap_scope", "block"},
            {"distance_samples", "256"},
            {"distance_seed", "0"},
            {"inversion_steps", "1000"},
            {"inversion_learning_rate", "0.05"},
            {"noise_seed", "0"},
            {"top_k", "all"},
            {"split_index", "default"},
            {"styles", "5"},
            {"style_seed", "0"},
        };
        return d;
    }

    PipelineConfig() {
        for (const auto& [k, v] : defaults()) values[k] = v;
    }

    void set(const std::string& key, const std::string& value) {
        if (!values.contains(key)) throw ConfigError("unknown config key '" + key + "'");
        values[key] = value;
    }

    void merge_file(const std::filesystem::path& file) {
        std::ifstream in(file);
        if (!in) throw ConfigError("cannot read config " + file.string());
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos || line[first] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    const std::string& get(const std::string& key) const {
        auto it = values.find(key);
        if (it == values.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    long long get_int(const std::string& key) const { return parse<long long>(key); }
    std::uint64_t get_u64(const std::string& key) const { return parse<std::uint64_t>(key); }
    double get_double(const std::string& key) const { return parse<double>(key); }

    std::vector<int> get_int_list(const std::string& key) const {
        std::vector<int> out;
        std::stringstream ss(get(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                out.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "': '" + item + "' is not an integer");
            }
        }
        return out;
    }

    /// Empty when the value is the given sentinel word.
    std::optional<int> get_optional_int(const std::string& key, const std::string& sentinel) const {
        if (get(key) == sentinel) return std::nullopt;
        return static_cast<int>(get_int(key));
    }

    GeneratorConfig generator() const {
        GeneratorConfig g;
        g.z_dim = static_cast<int>(get_int("z_dim"));
        g.w_dim = static_cast<int>(get_int("w_dim"));
        g.mapping_layers = static_cast<int>(get_int("mapping_layers"));
        g.resolutions = get_int_list("resolutions");
        g.channels = get_int_list("channels");
        g.image_channels = static_cast<int>(get_int("image_channels"));
        g.styles_per_block = static_cast<int>(get_int("styles_per_block"));
        g.validate();
        return g;
    }

    TrainConfig train() const {
        TrainConfig t;
        t.iterations = static_cast<int>(get_int("iterations"));
        t.batch_size = static_cast<int>(get_int("batch_size"));
        t.learning_rate = get_double("learning_rate");
        t.seed = get_u64("seed");
        t.log_every = static_cast<int>(get_int("log_every"));
        t.freeze_d_layers = static_cast<int>(get_int("freeze_d_layers"));
        t.validate();
        return t;
    }

    TrainConfig finetune() const {
        TrainConfig t = train();
        t.iterations = static_cast<int>(get_int("finetune_iterations"));
        t.learning_rate = get_double("finetune_learning_rate");
        t.validate();
        return t;
    }

    InversionConfig inversion() const {
        InversionConfig c;
        c.steps = static_cast<int>(get_int("inversion_steps"));
        c.learning_rate = get_double("inversion_learning_rate");
        c.noise_seed = get_u64("noise_seed");
        return c;
    }

    /// All settings, one "key=value" per line, in declaration order.
    std::string to_text() const {
        std::string out;
        for (const auto& [k, v] : defaults()) out += k + "=" + get(k) + "\n";
        return out;
    }

private:
    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    template <class T>
    T parse(const std::string& key) const {
        const std::string& v = get(key);
        std::istringstream ss(v);
        T out{};
        if (!(ss >> out) || !ss.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
        return out;
    }
};

}  // namespace stylebridge
