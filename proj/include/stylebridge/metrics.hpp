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

// Image metrics: a feature-space perceptual distance (LPIPS-style, backed by
// a fixed-weight feature extractor), windowed SSIM and a Frechet distance
// between Gaussian fits of pooled features.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stylebridge/autodiff.hpp"
#include "stylebridge/error.hpp"
#include "stylebridge/image.hpp"
#include "stylebridge/random.hpp"

namespace stylebridge {

/// Fixed-weight convolutional feature stack. Stage k: 3x3 conv, leaky ReLU,
/// then (except for the first stage) a 2x average pool before the conv.
/// Outputs one feature map per stage. Weights are a pure function of the
/// seed and never change after construction.
class FeatureNet {
public:
    FeatureNet() : FeatureNet(0xfea7u) {}

    explicit FeatureNet(std::uint64_t seed, std::vector<int> widths = {8, 16, 32}, int in_channels = 3)
        : seed_(seed), widths_(std::move(widths)), in_channels_(in_channels) {
        Rng rng(derive_seed(seed, 0, 0xf7));
        int in = in_channels;
        for (int w : widths_) {
            std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (in * 9)));
            Tensor k(Shape{w, in, 3, 3});
            for (auto& v : k.vec()) v = d(rng);
            kernels_.push_back(std::move(k));
            in = w;
        }
    }

    std::uint64_t seed() const { return seed_; }
    const std::vector<int>& widths() const { return widths_; }
    std::size_t layer_count() const { return widths_.size(); }

    /// x[N, C, H, W] -> one [N, width_k, H_k, W_k] map per stage. Gray inputs
    /// are replicated to the extractor's channel count.
    std::vector<ad::Var> forward(const ad::Var& x) const {
        ad::Var h = x;
        if (h.shape()[1] != in_channels_) {
            if (h.shape()[1] != 1) throw DimensionError("feature net: unsupported channel count");
            h = replicate_channels(h, in_channels_);
        }
        std::vector<ad::Var> out;
        for (std::size_t k = 0; k < kernels_.size(); ++k) {
            if (k > 0 && h.shape()[2] % 2 == 0 && h.shape()[2] > 4) h = ad::avgpool2(h);
            h = ad::leaky_relu(ad::conv2d(h, ad::Var(kernels_[k])), 0.2);
            out.push_back(h);
        }
        return out;
    }

    std::vector<Tensor> features(const ImageTensor& img) const {
        std::vector<Tensor> out;
        for (auto& v : forward(ad::Var(img.to_tensor()))) out.push_back(v.value());
        return out;
    }

private:
    static ad::Var replicate_channels(const ad::Var& x, int c) {
        // [N,1,H,W] -> [N,c,H,W] via a 1x1 convolution with unit weights.
        return ad::conv2d(x, ad::Var(Tensor(Shape{c, 1, 1, 1}, 1.0)));
    }

    std::uint64_t seed_;
    std::vector<int> widths_;
    int in_channels_;
    std::vector<Tensor> kernels_;
};

/// How per-layer squared feature differences are combined.
enum class DistanceReduction {
    MeanSquared,      // sum_l w_l * mean_{pos} ||f_l(x) - f_l(y)||^2   (LPIPS-style)
    RootMeanSquared,  // sqrt of the above; a metric when features are unnormalized
};

struct PerceptualMetric {
    FeatureNet net;
    std::vector<double> layer_weights{1.0, 1.0, 1.0};
    /// Unit-normalize each feature vector across channels before differencing.
    bool normalize = true;
    DistanceReduction reduction = DistanceReduction::MeanSquared;

    /// Default LPIPS-style proxy: seeded random features, all layers, unit
    /// normalized.
    static PerceptualMetric lpips_proxy(std::uint64_t seed = 0xfea7u) {
        PerceptualMetric m;
        m.net = FeatureNet(seed);
        return m;
    }

    /// Single layer, raw features, root-mean-square: satisfies the triangle
    /// inequality.
    static PerceptualMetric triangle_metric(std::uint64_t seed = 0xfea7u) {
        PerceptualMetric m;
        m.net = FeatureNet(seed, {8});
        m.layer_weights = {1.0};
        m.normalize = false;
        m.reduction = DistanceReduction::RootMeanSquared;
        return m;
    }

    void validate() const {
        if (layer_weights.size() != net.layer_count())
            throw DimensionError("perceptual metric: layer weight count differs from feature layers");
        for (double w : layer_weights)
            if (!(w >= 0.0)) throw RangeError("perceptual metric: layer weights must be non-negative");
    }
};

namespace detail {

inline void unit_normalize_channels(Tensor& f) {
    const int c = f.dim(1), hw = f.dim(2) * f.dim(3);
    for (int p = 0; p < hw; ++p) {
        double ss = 0.0;
        for (int k = 0; k < c; ++k) ss += f[static_cast<std::size_t>(k) * hw + p] * f[static_cast<std::size_t>(k) * hw + p];
        const double inv = 1.0 / (std::sqrt(ss) + 1e-10);
        for (int k = 0; k < c; ++k) f[static_cast<std::size_t>(k) * hw + p] *= inv;
    }
}

}  // namespace detail

/// Features as the metric compares them (normalized if configured).
inline std::vector<Tensor> metric_features(const PerceptualMetric& m, const ImageTensor& img) {
    auto f = m.net.features(img);
    if (m.normalize)
        for (auto& t : f) detail::unit_normalize_channels(t);
    return f;
}

inline double perceptual_distance_from_features(const PerceptualMetric& m, const std::vector<Tensor>& fx,
                                                const std::vector<Tensor>& fy) {
    double total = 0.0;
    for (std::size_t l = 0; l < fx.size(); ++l) {
        const Tensor& a = fx[l];
        const Tensor& b = fy[l];
        const int c = a.dim(1), hw = a.dim(2) * a.dim(3);
        double acc = 0.0;
        for (int p = 0; p < hw; ++p) {
            double cell = 0.0;
            for (int k = 0; k < c; ++k) {
                const double d = a[static_cast<std::size_t>(k) * hw + p] - b[static_cast<std::size_t>(k) * hw + p];
                cell += d * d;
            }
            acc += cell;
        }
        total += m.layer_weights[l] * acc / hw;
    }
    return m.reduction == DistanceReduction::RootMeanSquared ? std::sqrt(total) : total;
}

/// Feature-space distance between two equally shaped images. Exactly
/// symmetric and zero for identical inputs.
inline double perceptual_distance(const PerceptualMetric& m, const ImageTensor& x, const ImageTensor& y) {
    require_same_shape(x, y, "perceptual_distance");
    m.validate();
    return perceptual_distance_from_features(m, metric_features(m, x), metric_features(m, y));
}

// ---------------------------------------------------------------------------
// SSIM

inline ImageTensor to_grayscale(const ImageTensor& img) {
    if (img.channels == 1) return img;
    ImageTensor out(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(y, x, 0) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    return out;
}

struct SsimOptions {
    int window = 8;
    double dynamic_range = 2.0;  // pixel values span [-1, 1]
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over all stride-1 window positions of uniform window x window
/// patches, on the luma of color inputs. Window statistics use population
/// (1/N) moments.
inline double ssim(const ImageTensor& x, const ImageTensor& y, const SsimOptions& opt = {}) {
    require_same_shape(x, y, "ssim");
    const ImageTensor gx = to_grayscale(x), gy = to_grayscale(y);
    const int win = std::min({opt.window, gx.height, gx.width});
    const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
    const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
    const double n = static_cast<double>(win * win);
    double total = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + win <= gx.height; ++y0)
        for (int x0 = 0; x0 + win <= gx.width; ++x0) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int yy = y0; yy < y0 + win; ++yy)
                for (int xx = x0; xx < x0 + win; ++xx) {
                    const double a = gx.at(yy, xx, 0), b = gy.at(yy, xx, 0);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            const double mx = sx / n, my = sy / n;
            const double vx = std::max(0.0, sxx / n - mx * mx), vy = std::max(0.0, syy / n - my * my);
            const double cxy = sxy / n - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / count;
}

// ---------------------------------------------------------------------------
// Frechet distance

struct FrechetResult {
    double distance = 0.0;
    bool jitter_applied = false;  // 1e-6 added to both covariance diagonals
    std::string warning;          // set when a set is smaller than 2x feature dim
};

/// Globally average-pooled features of every extractor stage, concatenated.
inline Eigen::VectorXd pooled_features(const FeatureNet& net, const ImageTensor& img) {
    std::vector<double> out;
    for (const auto& f : net.features(img)) {
        const int c = f.dim(1), hw = f.dim(2) * f.dim(3);
        for (int k = 0; k < c; ++k) {
            double acc = 0.0;
            for (int p = 0; p < hw; ++p) acc += f[static_cast<std::size_t>(k) * hw + p];
            out.push_back(acc / hw);
        }
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

/// Frechet distance between Gaussians (mu1, S1) and (mu2, S2):
///   |mu1 - mu2|^2 + tr(S1) + tr(S2) - 2 tr((S1^1/2 S2 S1^1/2)^1/2)
/// Singular covariances get 1e-6 diagonal jitter, flagged in the result.
inline FrechetResult frechet_from_moments(const Eigen::VectorXd& mu1, Eigen::MatrixXd s1, const Eigen::VectorXd& mu2,
                                          Eigen::MatrixXd s2) {
    FrechetResult r;
    auto singular = [](const Eigen::MatrixXd& s) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() <= 1e-12;
    };
    if (singular(s1) || singular(s2)) {
        const auto eye = Eigen::MatrixXd::Identity(s1.rows(), s1.cols());
        s1 += 1e-6 * eye;
        s2 += 1e-6 * eye;
        r.jitter_applied = true;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
    const Eigen::VectorXd root = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd s1_half = e1.eigenvectors() * root.asDiagonal() * e1.eigenvectors().transpose();
    const Eigen::MatrixXd inner = s1_half * s2 * s1_half;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_cross = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    r.distance = std::max(0.0, (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_cross);
    return r;
}

/// Mean and sample covariance (1/(n-1); zero for a single sample) of row features.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> feature_moments(const Eigen::MatrixXd& rows) {
    const Eigen::VectorXd mu = rows.colwise().mean().transpose();
    const Eigen::MatrixXd centered = rows.rowwise() - mu.transpose();
    const double denom = rows.rows() > 1 ? static_cast<double>(rows.rows() - 1) : 1.0;
    return {mu, (centered.transpose() * centered) / denom};
}

inline FrechetResult frechet_distance(const std::vector<ImageTensor>& set_a, const std::vector<ImageTensor>& set_b,
                                      const FeatureNet& net = FeatureNet()) {
    if (set_a.empty() || set_b.empty()) throw RangeError("frechet_distance: empty image set");
    auto stack = [&](const std::vector<ImageTensor>& set) {
        Eigen::VectorXd first = pooled_features(net, set.front());
        Eigen::MatrixXd rows(static_cast<Eigen::Index>(set.size()), first.size());
        rows.row(0) = first.transpose();
        for (std::size_t i = 1; i < set.size(); ++i) {
            require_same_shape(set.front(), set[i], "frechet_distance");
            rows.row(static_cast<Eigen::Index>(i)) = pooled_features(net, set[i]).transpose();
        }
        return rows;
    };
    const Eigen::MatrixXd fa = stack(set_a), fb = stack(set_b);
    auto [mu1, s1] = feature_moments(fa);
    auto [mu2, s2] = feature_moments(fb);
    FrechetResult r = frechet_from_moments(mu1, s1, mu2, s2);
    const auto dim = static_cast<std::size_t>(fa.cols());
    if (set_a.size() < 2 * dim || set_b.size() < 2 * dim)
        r.warning = "image sets smaller than 2x feature dimension (" + std::to_string(2 * dim) +
                    "); covariance estimates are rank-deficient";
    return r;
}

}  // namespace stylebridge
