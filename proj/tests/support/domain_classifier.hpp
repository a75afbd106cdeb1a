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

// Softmax regression over global color statistics. Shares no code with the
// library beyond the image container, so it can score library outputs.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stylebridge/image.hpp"

namespace stylebridge::testing {

class DomainClassifier {
public:
    /// Per-channel mean, standard deviation, border mean and center mean.
    static std::vector<double> features(const ImageTensor& img) {
        const int c = img.channels, h = img.height, w = img.width;
        std::vector<double> f;
        for (int k = 0; k < c; ++k) {
            double s = 0.0, s2 = 0.0, border = 0.0, center = 0.0;
            int nb = 0, nc = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double v = img.at(y, x, k);
                    s += v;
                    s2 += v * v;
                    if (y == 0 || x == 0 || y == h - 1 || x == w - 1) {
                        border += v;
                        ++nb;
                    }
                    if (std::abs(2 * y - h + 1) < h / 4 && std::abs(2 * x - w + 1) < w / 4) {
                        center += v;
                        ++nc;
                    }
                }
            const double n = static_cast<double>(h) * w, mean = s / n;
            f.push_back(mean);
            f.push_back(std::sqrt(std::max(0.0, s2 / n - mean * mean)));
            f.push_back(border / nb);
            f.push_back(center / std::max(1, nc));
        }
        f.push_back(1.0);
        return f;
    }

    /// Full-batch gradient descent on the mean cross-entropy.
    void fit(const std::vector<ImageTensor>& images, const std::vector<int>& labels, int classes,
             int epochs = 2000, double lr = 0.5) {
        classes_ = classes;
        std::vector<std::vector<double>> x;
        for (const auto& img : images) x.push_back(features(img));
        dim_ = static_cast<int>(x.front().size());
        weights_.assign(static_cast<std::size_t>(classes_ * dim_), 0.0);
        std::vector<double> grad(weights_.size());
        for (int e = 0; e < epochs; ++e) {
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const auto p = probabilities(x[i]);
                for (int k = 0; k < classes_; ++k) {
                    const double err = p[k] - (labels[i] == k ? 1.0 : 0.0);
                    for (int d = 0; d < dim_; ++d) grad[k * dim_ + d] += err * x[i][d];
                }
            }
            for (std::size_t j = 0; j < weights_.size(); ++j) weights_[j] -= lr * grad[j] / x.size();
        }
    }

    int predict(const ImageTensor& img) const {
        const auto p = probabilities(features(img));
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }

    double accuracy(const std::vector<ImageTensor>& images, const std::vector<int>& labels) const {
        int ok = 0;
        for (std::size_t i = 0; i < images.size(); ++i) ok += predict(images[i]) == labels[i];
        return static_cast<double>(ok) / images.size();
    }

private:
    std::vector<double> probabilities(const std::vector<double>& f) const {
        std::vector<double> z(classes_);
        for (int k = 0; k < classes_; ++k)
            for (int d = 0; d < dim_; ++d) z[k] += weights_[k * dim_ + d] * f[d];
        const double m = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (auto& v : z) s += v = std::exp(v - m);
        for (auto& v : z) v /= s;
        return z;
    }

    int classes_ = 0, dim_ = 0;
    std::vector<double> weights_;
};

}  // namespace stylebridge::testing
