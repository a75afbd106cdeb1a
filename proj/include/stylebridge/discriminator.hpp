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

// Convolutional discriminator mirroring the generator's resolution ladder
// downward: fromrgb at R_max, one conv + 2x average pool per block, a
// minibatch-stddev channel at 4x4, then a two-layer head producing one logit
// per image. Logits depend on the batch through the stddev channel, so
// evaluate in batches comparable to the training batch size.
//
// Parameter names: disc.fromrgb.*, disc.b<R>.conv.*, disc.fc.*, disc.out.*

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stylebridge/autodiff.hpp"
#include "stylebridge/checkpoint.hpp"
#include "stylebridge/generator.hpp"

namespace stylebridge {

class Discriminator {
public:
    Discriminator() = default;

    static Discriminator initialize(const GeneratorConfig& arch, std::uint64_t seed) {
        arch.validate();
        Discriminator d;
        d.arch_ = arch;
        Rng rng(derive_seed(seed, 0, 0xd15c));
        auto he = [&](Shape s, int fan_in) {
            Tensor t(std::move(s));
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (auto& v : t.vec()) v = dist(rng);
            return t;
        };
        const int nb = arch.block_count();
        const int top = arch.channels[nb - 1];
        d.params_.add("disc.fromrgb.weight", he({top, arch.image_channels, 1, 1}, arch.image_channels));
        d.params_.add("disc.fromrgb.bias", Tensor(Shape{top}, 0.0));
        for (int b = nb - 1; b >= 1; --b) {
            const int in = arch.channels[b], out = arch.channels[b - 1];
            d.params_.add(block_name(arch.resolutions[b]) + "weight", he({out, in, 3, 3}, in * 9));
            d.params_.add(block_name(arch.resolutions[b]) + "bias", Tensor(Shape{out}, 0.0));
        }
        const int c0 = arch.channels[0];
        d.params_.add(block_name(4) + "weight", he({c0, c0 + 1, 3, 3}, (c0 + 1) * 9));
        d.params_.add(block_name(4) + "bias", Tensor(Shape{c0}, 0.0));
        d.params_.add("disc.fc.weight", he({c0, c0 * 16}, c0 * 16));
        d.params_.add("disc.fc.bias", Tensor(Shape{c0}, 0.0));
        d.params_.add("disc.out.weight", he({1, c0}, c0));
        d.params_.add("disc.out.bias", Tensor(Shape{1}, 0.0));
        return d;
    }

    static std::string block_name(int res) { return "disc.b" + std::to_string(res) + ".conv."; }

    /// Prefixes of the `count` highest-resolution ("low-level") layers,
    /// fromrgb first.
    std::vector<std::string> low_level_prefixes(int count) const {
        std::vector<std::string> out;
        if (count <= 0) return out;
        out.push_back("disc.fromrgb.");
        for (int b = arch_.block_count() - 1; b >= 1 && static_cast<int>(out.size()) < count; --b)
            out.push_back(block_name(arch_.resolutions[b]));
        return out;
    }

    /// He-initialization scale of weights (equalized learning rate); 1 for biases.
    double lr_multiplier(std::string_view name) const {
        if (!name.ends_with(".weight")) return 1.0;
        const Shape& s = params_.at(name).shape();
        int fan_in = 1;
        for (std::size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
        return std::sqrt(2.0 / fan_in);
    }

    const GeneratorConfig& arch() const { return arch_; }
    ParameterTable& params() { return params_; }
    const ParameterTable& params() const { return params_; }

    static Discriminator from_parts(GeneratorConfig arch, ParameterTable params) {
        Discriminator ref = initialize(arch, 0);
        if (ref.params_.size() != params.size()) throw ArchitectureMismatch("discriminator: parameter count");
        for (std::size_t i = 0; i < params.size(); ++i)
            if (ref.params_.entries()[i].first != params.entries()[i].first ||
                ref.params_.entries()[i].second.shape() != params.entries()[i].second.shape())
                throw ArchitectureMismatch("discriminator: unexpected parameter " + params.entries()[i].first);
        Discriminator d;
        d.arch_ = std::move(arch);
        d.params_ = std::move(params);
        return d;
    }

private:
    GeneratorConfig arch_;
    ParameterTable params_;
};

class DiscriminatorGraph {
public:
    explicit DiscriminatorGraph(const Discriminator& d, const std::function<bool(std::string_view)>& trainable = {})
        : arch_(d.arch()) {
        for (const auto& [name, t] : d.params().entries()) {
            const bool train = trainable && trainable(name);
            vars_.emplace(name, ad::Var(t, train));
            if (train) trainable_names_.push_back(name);
        }
    }

    /// x[N, C, R, R] -> logits [N, 1]
    ad::Var forward(const ad::Var& x) const {
        const int r = arch_.max_resolution();
        if (x.shape().size() != 4 || x.shape()[1] != arch_.image_channels || x.shape()[2] != r || x.shape()[3] != r)
            throw DimensionError("discriminator: expected [N," + std::to_string(arch_.image_channels) + "," +
                                 std::to_string(r) + "," + std::to_string(r) + "], got " + shape_str(x.shape()));
        ad::Var h = act(ad::add_channel_bias(ad::conv2d(x, p("disc.fromrgb.weight")), p("disc.fromrgb.bias")));
        for (int b = arch_.block_count() - 1; b >= 1; --b) {
            const std::string base = Discriminator::block_name(arch_.resolutions[b]);
            h = act(ad::add_channel_bias(ad::conv2d(h, p(base + "weight")), p(base + "bias")));
            h = ad::avgpool2(h);
        }
        const std::string base = Discriminator::block_name(4);
        h = ad::minibatch_stddev(h);
        h = act(ad::add_channel_bias(ad::conv2d(h, p(base + "weight")), p(base + "bias")));
        const int n = h.shape()[0];
        h = ad::reshape(h, {n, arch_.channels[0] * 16});
        h = act(ad::linear(h, p("disc.fc.weight"), p("disc.fc.bias")));
        return ad::linear(h, p("disc.out.weight"), p("disc.out.bias"));
    }

    const std::vector<std::string>& trainable_names() const { return trainable_names_; }

    std::vector<std::pair<std::string, Tensor>> gradients() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& name : trainable_names_) out.emplace_back(name, vars_.at(name).take_grad());
        return out;
    }

private:
    static ad::Var act(const ad::Var& x) { return ad::leaky_relu(x, kLeakySlope); }
    const ad::Var& p(const std::string& name) const { return vars_.at(name); }

    GeneratorConfig arch_;
    std::map<std::string, ad::Var, std::less<>> vars_;
    std::vector<std::string> trainable_names_;
};

inline Container to_container(const Discriminator& d) {
    Container c;
    c.metadata = json{{"kind", "discriminator"}, {"format_version", kCheckpointVersion}, {"arch", d.arch()}};
    for (const auto& [name, t] : d.params().entries()) c.tensors.emplace_back(name, t);
    return c;
}

inline std::string save_discriminator(const Discriminator& d, const std::filesystem::path& path) {
    const Bytes bytes = serialize(to_container(d));
    write_file(path, bytes);
    return to_hex(bytes.data() + bytes.size() - kDigestBytes, kDigestBytes);
}

inline Discriminator load_discriminator(const std::filesystem::path& path) {
    Container c = deserialize(read_file(path));
    if (c.metadata.value("kind", "") != "discriminator") throw CheckpointError("checkpoint does not hold a discriminator");
    ParameterTable params;
    for (auto& [name, t] : c.tensors) params.add(name, std::move(t));
    try {
        return Discriminator::from_parts(c.metadata.at("arch").get<GeneratorConfig>(), std::move(params));
    } catch (const ArchitectureMismatch& e) {
        throw CheckpointError(e.what());
    }
}

}  // namespace stylebridge
