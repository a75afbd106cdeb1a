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

// Semantic basis extraction from the style affines, eigendirection editing,
// and latent inversion (unconstrained projection into W and optimization
// over basis coefficients v with w = V v).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "stylebridge/adam.hpp"
#include "stylebridge/autodiff.hpp"
#include "stylebridge/checkpoint.hpp"
#include "stylebridge/error.hpp"
#include "stylebridge/generator.hpp"
#include "stylebridge/metrics.hpp"

namespace stylebridge {

// ---------------------------------------------------------------------------
// Affine stack and basis

enum class AffineSelection {
    AllSlots,   // every style slot's affine, stacked in slot order
    FirstOnly,  // the first slot's affine only
};

struct StyleAffineStack {
    Eigen::MatrixXd A;  // m x w_dim
    Eigen::VectorXd b;  // m
    std::string source_model_digest;
};

inline StyleAffineStack extract_affine(const GeneratorModel& model, AffineSelection sel = AffineSelection::AllSlots) {
    const auto& arch = model.arch();
    const int slots = sel == AffineSelection::AllSlots ? arch.style_layer_count() : 1;
    int rows = 0;
    for (int s = 0; s < slots; ++s) rows += arch.slot_in_channels(s);
    StyleAffineStack out;
    out.A.resize(rows, arch.w_dim);
    out.b.resize(rows);
    int r0 = 0;
    for (int s = 0; s < slots; ++s) {
        const int res = arch.slot_resolution(s), j = s % arch.styles_per_block;
        const Tensor& w = model.params().at(names::conv(res, j, "affine.weight"));
        const Tensor& b = model.params().at(names::conv(res, j, "affine.bias"));
        const int m = w.dim(0);
        for (int i = 0; i < m; ++i) {
            for (int k = 0; k < arch.w_dim; ++k) out.A(r0 + i, k) = w.at(i, k);
            out.b(r0 + i) = b[i];
        }
        r0 += m;
    }
    out.source_model_digest = model_digest(model);
    return out;
}

struct EigenPairs {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // orthonormal columns
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues are
/// sorted in descending order. Each eigenvector's largest-magnitude entry is
/// made positive (first such entry on ties).
inline EigenPairs jacobi_eigen(const Eigen::MatrixXd& sym, int max_sweeps = 100) {
    const Eigen::Index n = sym.rows();
    if (sym.cols() != n) throw DimensionError("jacobi_eigen: matrix is not square");
    Eigen::MatrixXd a = sym;
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    const double scale = std::max(a.norm(), 1e-300);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= 1e-15 * scale) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
    EigenPairs out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = a(order[i], order[i]);
        Eigen::VectorXd col = v.col(order[i]);
        Eigen::Index arg = 0;
        for (Eigen::Index k = 1; k < n; ++k)
            if (std::abs(col(k)) > std::abs(col(arg)) + 1e-12) arg = k;
        if (col(arg) < 0) col = -col;
        out.vectors.col(i) = col;
    }
    return out;
}

/// V = A^T A (or its rank-k truncation sum_{i<k} lambda_i n_i n_i^T) with
/// eigenpairs. Only the retained pairs are stored.
struct SemanticBasis {
    Eigen::MatrixXd V;
    Eigen::VectorXd eigenvalues;   // descending, clipped at 0
    Eigen::MatrixXd eigenvectors;  // w_dim x k, orthonormal columns
    std::string source_model_digest;

    int rank() const { return static_cast<int>(eigenvalues.size()); }
    int dim() const { return static_cast<int>(V.rows()); }
};

inline SemanticBasis semantic_basis(const StyleAffineStack& stack, std::optional<int> top_k = std::nullopt) {
    if (stack.A.size() == 0) throw DimensionError("semantic_basis: empty affine stack");
    if (!stack.A.allFinite()) throw DimensionError("semantic_basis: non-finite affine weights");
    const int d = static_cast<int>(stack.A.cols());
    const int k = top_k.value_or(d);
    if (k < 1 || k > d) throw RangeError("semantic_basis: top_k " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
    Eigen::MatrixXd full = stack.A.transpose() * stack.A;
    full = (0.5 * (full + full.transpose())).eval();
    EigenPairs e = jacobi_eigen(full);
    SemanticBasis out;
    out.eigenvalues = e.values.head(k).cwiseMax(0.0);
    out.eigenvectors = e.vectors.leftCols(k);
    const Eigen::MatrixXd v =
        k == d ? full : Eigen::MatrixXd(out.eigenvectors * out.eigenvalues.asDiagonal() * out.eigenvectors.transpose());
    out.V = 0.5 * (v + v.transpose());  // exactly symmetric
    out.source_model_digest = stack.source_model_digest;
    return out;
}

/// w' = w + alpha * n_i
inline EmbeddedCode edit_latent(const EmbeddedCode& w, const SemanticBasis& basis, int direction_index, double alpha) {
    if (direction_index < 0 || direction_index >= basis.rank())
        throw RangeError("edit_latent: direction " + std::to_string(direction_index) + " outside [0, " +
                         std::to_string(basis.rank()) + ")");
    if (static_cast<int>(w.dim()) != basis.dim()) throw DimensionError("edit_latent: code dimension differs from basis");
    EmbeddedCode out = w;
    for (int k = 0; k < basis.dim(); ++k) out.values[k] += alpha * basis.eigenvectors(k, direction_index);
    return out;
}

/// Moore-Penrose pseudo-inverse of the (symmetric) basis matrix, built from
/// eigenpairs with lambda above `tol`.
inline Eigen::MatrixXd basis_pseudo_inverse(const SemanticBasis& basis, double tol = 1e-10) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(basis.dim(), basis.dim());
    for (int i = 0; i < basis.rank(); ++i)
        if (basis.eigenvalues(i) > tol)
            out += basis.eigenvectors.col(i) * basis.eigenvectors.col(i).transpose() / basis.eigenvalues(i);
    return out;
}

/// V as a row-major [w_dim, w_dim] tensor.
inline Tensor basis_tensor(const SemanticBasis& basis) {
    Tensor t(Shape{basis.dim(), basis.dim()});
    for (int i = 0; i < basis.dim(); ++i)
        for (int j = 0; j < basis.dim(); ++j) t.at(i, j) = basis.V(i, j);
    return t;
}

// ---------------------------------------------------------------------------
// Inversion

struct InversionConfig {
    int steps = 1000;
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool cosine_decay = true;
    std::uint64_t noise_seed = 0;    // fixed noise fields during optimization
    std::uint64_t init_seed = 0x3e4; // z-set for the mean code
    int init_samples = 1000;
    double pixel_weight = 1.0;       // mean absolute pixel error
    double feature_weight = 1.0;     // per-layer RMS feature difference
    FeatureNet features{};
};

inline void to_json(json& j, const InversionConfig& c) {
    j = json{{"steps", c.steps},           {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
             {"beta2", c.beta2},           {"cosine_decay", c.cosine_decay},   {"noise_seed", c.noise_seed},
             {"init_seed", c.init_seed},   {"init_samples", c.init_samples},   {"pixel_weight", c.pixel_weight},
             {"feature_weight", c.feature_weight}, {"feature_seed", c.features.seed()}};
}

enum class InversionMode { Baseline, Constrained };

inline std::string to_string(InversionMode m) { return m == InversionMode::Baseline ? "baseline" : "constrained"; }

inline InversionMode inversion_mode_from_string(std::string_view s) {
    if (s == "baseline") return InversionMode::Baseline;
    if (s == "constrained") return InversionMode::Constrained;
    throw ConfigError("unknown inversion mode '" + std::string(s) + "'");
}

struct InversionResult {
    EmbeddedCode w;
    std::optional<std::vector<double>> v;  // constrained mode only
    std::vector<double> loss_trace;        // best loss so far, steps + 1 entries
    std::vector<double> raw_loss_trace;    // loss of each iterate
    ImageTensor final_image;
    int steps = 0;
    int best_step = 0;
};

/// Mean of map_latent over `n` seeded latents.
inline EmbeddedCode mean_embedded_code(const GeneratorModel& model, std::uint64_t seed, int n) {
    const auto zs = sample_z(seed, n, model.arch().z_dim);
    std::vector<std::vector<double>> rows;
    rows.reserve(zs.size());
    for (const auto& z : zs) rows.push_back(z.values);
    GeneratorGraph g(model);
    const Tensor w = g.map(ad::Var(codes_to_tensor(rows))).value();
    EmbeddedCode out{std::vector<double>(static_cast<std::size_t>(model.arch().w_dim), 0.0)};
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < model.arch().w_dim; ++k) out.values[k] += w.at(i, k);
    for (double& v : out.values) v /= n;
    return out;
}

/// The inversion objective
///   L(w) = pixel_weight * mean|I - G(w)| + feature_weight * sum_l rms(phi_l(I) - phi_l(G(w)))
/// with G evaluated on its raw (unclamped) output and fixed noise.
class InversionObjective {
public:
    InversionObjective(const GeneratorModel& model, const ImageTensor& target, const InversionConfig& cfg)
        : graph_(model), cfg_(cfg), noise_(make_noise(model.arch(), {cfg.noise_seed})), target_(target.to_tensor()) {
        if (target.height != model.resolution() || target.width != model.resolution())
            throw DimensionError("inversion: image is " + std::to_string(target.height) + "x" + std::to_string(target.width) +
                                 ", model resolution is " + std::to_string(model.resolution()));
        if (target.channels != model.arch().image_channels) throw DimensionError("inversion: channel count differs");
        for (const auto& f : cfg_.features.forward(ad::Var(target_))) target_features_.push_back(f.value());
    }

    /// w: [1, w_dim]
    ad::Var loss(const ad::Var& w) const {
        ad::Var img = graph_.synthesize_uniform(w, noise_);
        ad::Var total = ad::scale(ad::mean(ad::abs(ad::sub(img, ad::Var(target_)))), cfg_.pixel_weight);
        const auto feats = cfg_.features.forward(img);
        for (std::size_t l = 0; l < feats.size(); ++l) {
            ad::Var diff = ad::sub(feats[l], ad::Var(target_features_[l]));
            total = ad::add(total, ad::scale(ad::sqrt(ad::mean(ad::square(diff)), 1e-12), cfg_.feature_weight));
        }
        return total;
    }

    double value(const std::vector<double>& w) const { return loss(ad::Var(row(w))).value()[0]; }

    /// Loss and gradient with respect to w.
    std::pair<double, std::vector<double>> value_and_gradient(const std::vector<double>& w) const {
        ad::Var wv(row(w), true);
        ad::Var l = loss(wv);
        ad::backward(l);
        return {l.value()[0], wv.grad().to_vector()};
    }

    const NoiseFields& noise() const { return noise_; }

private:
    static Tensor row(const std::vector<double>& w) { return Tensor(Shape{1, static_cast<int>(w.size())}, w); }

    GeneratorGraph graph_;
    InversionConfig cfg_;
    NoiseFields noise_;
    Tensor target_;
    std::vector<Tensor> target_features_;
};

/// w = V v for a symmetric basis matrix, computed as the row product v^T V.
inline std::vector<double> basis_combination(const SemanticBasis& basis, const std::vector<double>& v) {
    ad::Var w = ad::matmul(ad::Var(Tensor(Shape{1, basis.dim()}, v)), ad::Var(basis_tensor(basis)));
    return w.value().to_vector();
}

namespace detail {

inline double cosine_lr(const InversionConfig& cfg, int step) {
    if (!cfg.cosine_decay || cfg.steps <= 0) return cfg.learning_rate;
    return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * step / cfg.steps));
}

/// Shared best-so-far optimization loop over a parameter vector x, with
/// loss(x) evaluated through `eval(x, need_grad)`.
template <class Eval>
inline std::pair<std::vector<double>, InversionResult> optimize(std::vector<double> x, const InversionConfig& cfg,
                                                                Eval&& eval) {
    if (cfg.steps < 0) throw RangeError("inversion: steps must be >= 0");
    Adam adam(AdamConfig{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8});
    Tensor param(Shape{static_cast<int>(x.size())}, x);
    InversionResult r;
    r.steps = cfg.steps;
    std::vector<double> best = x;
    double best_loss = 0.0;
    for (int t = 0; t <= cfg.steps; ++t) {
        const bool last = t == cfg.steps;
        auto [loss, grad] = eval(param.to_vector(), !last);
        if (!std::isfinite(loss))
            throw DivergenceError("inversion: non-finite loss at step " + std::to_string(t));
        r.raw_loss_trace.push_back(loss);
        if (t == 0 || loss < best_loss) {
            best_loss = loss;
            best = param.to_vector();
            r.best_step = t;
        }
        r.loss_trace.push_back(best_loss);
        if (last) break;
        Tensor g(param.shape(), grad);
        if (!g.all_finite()) throw DivergenceError("inversion: non-finite gradient at step " + std::to_string(t));
        adam.step("x", param, g, cosine_lr(cfg, t));
    }
    return {best, std::move(r)};
}

inline ImageTensor render(const GeneratorModel& model, const EmbeddedCode& w, std::uint64_t noise_seed) {
    return synthesize(model, make_style_plan(model, w), noise_seed);
}

}  // namespace detail

/// Unconstrained projection: minimize the objective over w from the mean code.
inline InversionResult project_w(const ImageTensor& image, const GeneratorModel& model, const InversionConfig& cfg = {}) {
    InversionObjective obj(model, image, cfg);
    EmbeddedCode w0 = mean_embedded_code(model, cfg.init_seed, cfg.init_samples);
    auto [best, r] = detail::optimize(w0.values, cfg, [&](const std::vector<double>& w, bool need_grad) {
        if (!need_grad) return std::pair<double, std::vector<double>>{obj.value(w), {}};
        return obj.value_and_gradient(w);
    });
    r.w = EmbeddedCode{best};
    r.final_image = detail::render(model, r.w, cfg.noise_seed);
    return r;
}

/// Constrained inversion: minimize over v with w = V v. The starting point is
/// v0 = pinv(V) w_mean.
inline InversionResult invert_constrained(const ImageTensor& image, const GeneratorModel& model,
                                          const SemanticBasis& basis, const InversionConfig& cfg = {}) {
    if (basis.source_model_digest != model_digest(model))
        throw BasisMismatch("invert_constrained: basis was derived from a different model");
    if (basis.dim() != model.arch().w_dim) throw DimensionError("invert_constrained: basis dimension differs from w_dim");
    InversionObjective obj(model, image, cfg);
    const Tensor vmat = basis_tensor(basis);
    const EmbeddedCode w_mean = mean_embedded_code(model, cfg.init_seed, cfg.init_samples);
    const Eigen::VectorXd v0 =
        basis_pseudo_inverse(basis) * Eigen::Map<const Eigen::VectorXd>(w_mean.values.data(), basis.dim());
    auto eval = [&](const std::vector<double>& v, bool need_grad) {
        ad::Var vv(Tensor(Shape{1, basis.dim()}, v), need_grad);
        ad::Var l = obj.loss(ad::matmul(vv, ad::Var(vmat)));
        if (!need_grad) return std::pair<double, std::vector<double>>{l.value()[0], {}};
        ad::backward(l);
        return std::pair<double, std::vector<double>>{l.value()[0], vv.grad().to_vector()};
    };
    auto [best, r] = detail::optimize(std::vector<double>(v0.data(), v0.data() + v0.size()), cfg, eval);
    r.w = EmbeddedCode{basis_combination(basis, best)};
    r.v = std::move(best);
    r.final_image = detail::render(model, r.w, cfg.noise_seed);
    return r;
}

inline InversionResult invert(InversionMode mode, const ImageTensor& image, const GeneratorModel& model,
                              const SemanticBasis* basis, const InversionConfig& cfg = {}) {
    if (mode == InversionMode::Baseline) return project_w(image, model, cfg);
    if (!basis) throw ConfigError("constrained inversion requires a semantic basis");
    return invert_constrained(image, model, *basis, cfg);
}

}  // namespace stylebridge
