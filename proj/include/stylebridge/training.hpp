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

// Adversarial training of generators from scratch (train_base) and
// fine-tuning with parameter freeze sets (finetune).

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stylebridge/adam.hpp"
#include "stylebridge/autodiff.hpp"
#include "stylebridge/checkpoint.hpp"
#include "stylebridge/dataset.hpp"
#include "stylebridge/discriminator.hpp"
#include "stylebridge/generator.hpp"

namespace stylebridge {

/// Parameter-name prefixes excluded from gradient updates.
struct FreezeSet {
    std::vector<std::string> name_patterns;

    /// The mapping network ("freeze-FC").
    static FreezeSet mapping_network() { return FreezeSet{{"map."}}; }
    static FreezeSet everything() { return FreezeSet{{"map.", "syn."}}; }
    static FreezeSet none() { return FreezeSet{}; }

    bool matches(std::string_view name) const {
        for (const auto& p : name_patterns)
            if (name.starts_with(p)) return true;
        return false;
    }

    void validate(const ParameterTable& params) const {
        for (const auto& p : name_patterns) {
            bool hit = false;
            for (const auto& [name, _] : params.entries()) hit = hit || std::string_view(name).starts_with(p);
            if (!hit) throw FreezePatternError("freeze pattern '" + p + "' matches no parameter");
        }
    }
};

struct TrainConfig {
    int iterations = 2000;
    int batch_size = 8;
    double learning_rate = 0.002;
    std::uint64_t seed = 0;
    int log_every = 50;
    /// Freezes this many highest-resolution discriminator layers (fromrgb
    /// first). Off by default.
    int freeze_d_layers = 0;

    void validate() const {
        if (iterations < 0) throw RangeError("train config: iterations must be >= 0");
        if (batch_size < 1) throw RangeError("train config: batch_size must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw RangeError("train config: learning_rate must be > 0");
        if (log_every < 1) throw RangeError("train config: log_every must be >= 1");
        if (freeze_d_layers < 0) throw RangeError("train config: freeze_d_layers must be >= 0");
    }

    /// Fine-tuning defaults: 500 iterations at a tenth of the base rate.
    static TrainConfig finetune_defaults() {
        TrainConfig c;
        c.iterations = 500;
        c.learning_rate = 0.0002;
        return c;
    }
};

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"iterations", c.iterations},   {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
             {"seed", c.seed},               {"log_every", c.log_every},   {"freeze_d_layers", c.freeze_d_layers}};
}

inline void from_json(const json& j, TrainConfig& c) {
    j.at("iterations").get_to(c.iterations);
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("seed").get_to(c.seed);
    j.at("log_every").get_to(c.log_every);
    c.freeze_d_layers = j.value("freeze_d_layers", 0);
}

struct AdversarialLosses {
    double g_loss = 0.0;
    double d_loss = 0.0;
};

/// Logistic GAN losses from raw logits:
///   d_loss = -E[log sigmoid(real)] - E[log(1 - sigmoid(fake))]
///   g_loss = -E[log sigmoid(fake)]   (non-saturating generator objective)
inline AdversarialLosses adversarial_losses(std::span<const double> d_real, std::span<const double> d_fake) {
    if (d_real.empty() || d_fake.empty()) throw RangeError("adversarial_losses: empty logit batch");
    AdversarialLosses out;
    double real = 0.0, fake = 0.0, gen = 0.0;
    for (double x : d_real) real += ad::softplus_value(-x);
    for (double x : d_fake) {
        fake += ad::softplus_value(x);
        gen += ad::softplus_value(-x);
    }
    out.d_loss = real / static_cast<double>(d_real.size()) + fake / static_cast<double>(d_fake.size());
    out.g_loss = gen / static_cast<double>(d_fake.size());
    return out;
}

struct LossRecord {
    int step = 0;
    double g_loss = 0.0;
    double d_loss = 0.0;
};

struct TrainResult {
    GeneratorModel generator;
    Discriminator discriminator;
    std::vector<LossRecord> trace;
};

/// Number of parameter-update steps taken by any training loop in this
/// process. Inference paths (inversion, translation) never advance it.
inline std::atomic<std::uint64_t>& parameter_update_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

/// Appends rows to a `step,g_loss,d_loss` CSV, writing the header when the
/// file is new or empty.
inline void append_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open loss trace " + path.string());
    out.precision(17);
    if (fresh) out << "step,g_loss,d_loss\n";
    for (const auto& r : trace) out << r.step << ',' << r.g_loss << ',' << r.d_loss << '\n';
}

namespace detail {

inline ad::Var mean_softplus(const ad::Var& logits, double sign) {
    return ad::mean(ad::softplus(ad::scale(logits, sign)));
}

inline ad::Var latent_batch(Rng& rng, int n, int z_dim) {
    return ad::Var(Tensor(Shape{n, z_dim}, normal_vector(rng, static_cast<std::size_t>(n) * z_dim)));
}

inline std::vector<std::uint64_t> noise_seeds(Rng& rng, int n) {
    std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
    for (auto& v : s) v = rng();
    return s;
}

inline void check_finite_loss(double v, int step, const char* which) {
    if (!std::isfinite(v))
        throw DivergenceError(std::string(which) + " became non-finite at step " + std::to_string(step));
}

/// Shared adversarial loop. Generator parameters matched by `frozen` are
/// never touched.
inline std::vector<LossRecord> adversarial_loop(GeneratorModel& g, Discriminator& d, const Dataset& data,
                                                const TrainConfig& cfg, const FreezeSet& frozen) {
    const auto& arch = g.arch();
    Rng rng(derive_seed(cfg.seed, 1, 0x7a1));
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    Adam g_opt(AdamConfig{cfg.learning_rate});
    Adam d_opt(AdamConfig{cfg.learning_rate});
    const auto d_frozen = d.low_level_prefixes(cfg.freeze_d_layers);
    auto d_trainable = [&](std::string_view name) {
        for (const auto& p : d_frozen)
            if (name.starts_with(p)) return false;
        return true;
    };
    auto g_trainable = [&](std::string_view name) { return !frozen.matches(name); };
    const int n = cfg.batch_size;
    std::vector<LossRecord> trace;

    for (int step = 0; step < cfg.iterations; ++step) {
        // Discriminator update on a detached fake batch.
        std::vector<ImageTensor> reals;
        for (int i = 0; i < n; ++i) reals.push_back(data.images[pick(rng)]);
        Tensor fake;
        {
            GeneratorGraph gg(g);
            ad::Var z = latent_batch(rng, n, arch.z_dim);
            fake = gg.synthesize_uniform(gg.map(z), make_noise(arch, noise_seeds(rng, n))).value();
        }
        DiscriminatorGraph dg(d, d_trainable);
        ad::Var d_real = dg.forward(ad::Var(stack_images(reals)));
        ad::Var d_fake = dg.forward(ad::Var(std::move(fake)));
        ad::Var d_loss = ad::add(mean_softplus(d_real, -1.0), mean_softplus(d_fake, 1.0));
        check_finite_loss(d_loss.value()[0], step, "discriminator loss");
        ad::backward(d_loss);
        for (auto& [name, grad] : dg.gradients())
            d_opt.step(name, d.params().at(name), grad, cfg.learning_rate * d.lr_multiplier(name));
        ++parameter_update_counter();

        // Generator update through a frozen copy of the new discriminator.
        GeneratorGraph gg(g, g_trainable);
        DiscriminatorGraph dconst(d);
        ad::Var z = latent_batch(rng, n, arch.z_dim);
        ad::Var img = gg.synthesize_uniform(gg.map(z), make_noise(arch, noise_seeds(rng, n)));
        ad::Var g_loss = mean_softplus(dconst.forward(img), -1.0);
        check_finite_loss(g_loss.value()[0], step, "generator loss");
        ad::backward(g_loss);
        for (auto& [name, grad] : gg.gradients()) {
            Tensor& p = g.params().at(name);
            g_opt.step(name, p, grad, cfg.learning_rate * g.lr_multiplier(name));
            if (!p.all_finite()) throw DivergenceError("parameter " + name + " became non-finite at step " + std::to_string(step));
        }
        ++parameter_update_counter();

        if (step % cfg.log_every == 0 || step + 1 == cfg.iterations)
            trace.push_back({step, g_loss.value()[0], d_loss.value()[0]});
    }
    return trace;
}

}  // namespace detail

/// Trains a generator from a seeded initialization on one domain.
inline TrainResult train_base(const Dataset& dataset, const TrainConfig& cfg, const GeneratorConfig& arch = {},
                              std::optional<std::string> domain = std::nullopt) {
    cfg.validate();
    arch.validate();
    dataset.require_compatible(arch.max_resolution(), arch.image_channels);
    TrainResult r{GeneratorModel::initialize(arch, cfg.seed), Discriminator::initialize(arch, cfg.seed), {}};
    r.trace = detail::adversarial_loop(r.generator, r.discriminator, dataset, cfg, FreezeSet::none());
    auto& md = r.generator.metadata();
    md.domain = domain.value_or(dataset.domain);
    md.train_seed = cfg.seed;
    md.origin = "train_base";
    md.recipe = json{{"train", cfg}};
    return r;
}

/// Continues adversarial training of `base` on `target`, leaving every
/// parameter matched by `freeze` bit-identical. Starts from `base_disc` when
/// given, else from a fresh discriminator seeded by cfg.seed.
inline TrainResult finetune(const GeneratorModel& base, const Dataset& target, const FreezeSet& freeze,
                            const TrainConfig& cfg, const Discriminator* base_disc = nullptr) {
    cfg.validate();
    base.validate();
    freeze.validate(base.params());
    target.require_compatible(base.resolution(), base.arch().image_channels);
    if (base_disc && base_disc->arch() != base.arch())
        throw ArchitectureMismatch("finetune: discriminator architecture differs from generator");

    TrainResult r{base, base_disc ? *base_disc : Discriminator::initialize(base.arch(), cfg.seed), {}};
    r.trace = detail::adversarial_loop(r.generator, r.discriminator, target, cfg, freeze);
    const std::string parent = model_digest(base);
    auto& md = r.generator.metadata();
    md.domain = target.domain;
    md.train_seed = cfg.seed;
    md.origin = "finetune";
    md.parents = {parent};
    md.lineage = base.metadata().lineage;
    md.lineage.push_back(parent);
    md.recipe = json{{"freeze", freeze.name_patterns}, {"train", cfg}};
    return r;
}

/// Fraction of held-out real images and fresh generator samples the
/// discriminator labels correctly (logit > 0 means real), averaged over the
/// two classes. Images are scored in batches of `batch_size`.
inline double discriminator_accuracy(const Discriminator& d, const GeneratorModel& g, const Dataset& held_out,
                                     int fake_samples, std::uint64_t seed, int batch_size = 8) {
    DiscriminatorGraph dg(d);
    int real_ok = 0;
    for (std::size_t i = 0; i < held_out.size(); i += batch_size) {
        std::vector<ImageTensor> batch(held_out.images.begin() + i,
                                       held_out.images.begin() + std::min(held_out.size(), i + batch_size));
        const Tensor logits = dg.forward(ad::Var(stack_images(batch))).value();
        for (std::size_t k = 0; k < logits.numel(); ++k) real_ok += logits[k] > 0.0;
    }
    Rng rng(derive_seed(seed, 2, 0xacc));
    GeneratorGraph gg(g);
    int fake_ok = 0;
    for (int i = 0; i < fake_samples; i += batch_size) {
        const int n = std::min(batch_size, fake_samples - i);
        ad::Var z = detail::latent_batch(rng, n, g.arch().z_dim);
        ad::Var img = gg.synthesize_uniform(gg.map(z), make_noise(g.arch(), detail::noise_seeds(rng, n)));
        const Tensor logits = dg.forward(img).value();
        for (std::size_t k = 0; k < logits.numel(); ++k) fake_ok += logits[k] <= 0.0;
    }
    return 0.5 * (static_cast<double>(real_ok) / static_cast<double>(held_out.size()) +
                  static_cast<double>(fake_ok) / static_cast<double>(fake_samples));
}

}  // namespace stylebridge
