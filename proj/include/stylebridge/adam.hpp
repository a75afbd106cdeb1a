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
#include <map>
#include <string>
#include <string_view>

#include "stylebridge/tensor.hpp"

namespace stylebridge {

struct AdamConfig {
    double learning_rate = 0.002;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. State is keyed by name so
/// one instance can drive a whole parameter table.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }

    void step(std::string_view key, Tensor& param, const Tensor& grad) { step(key, param, grad, cfg_.learning_rate); }

    void step(std::string_view key, Tensor& param, const Tensor& grad, double lr) {
        param.check_same(grad);
        auto it = state_.find(key);
        if (it == state_.end())
            it = state_.emplace(std::string(key), State{Tensor(param.shape()), Tensor(param.shape()), 0}).first;
        State& s = it->second;
        ++s.t;
        const double c1 = 1.0 - std::pow(cfg_.beta1, s.t);
        const double c2 = 1.0 - std::pow(cfg_.beta2, s.t);
        for (std::size_t i = 0; i < param.numel(); ++i) {
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * grad[i];
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            param[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg_.eps);
        }
    }

private:
    struct State {
        Tensor m;
        Tensor v;
        int t;
    };

    AdamConfig cfg_;
    std::map<std::string, State, std::less<>> state_;
};

}  // namespace stylebridge
