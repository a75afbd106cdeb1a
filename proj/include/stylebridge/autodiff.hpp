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

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a handle to a graph node. Operations on Vars record a backward
// closure only when at least one input requires a gradient, so evaluating
// with constant leaves builds no graph at all.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stylebridge/error.hpp"
#include "stylebridge/tensor.hpp"

namespace stylebridge::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer() {
        if (grad.empty()) grad = Tensor(value.shape(), 0.0);
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var param(Tensor value) { return Var(std::move(value), true); }
    static Var constant(Tensor value) { return Var(std::move(value), false); }

    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool valid() const { return static_cast<bool>(node_); }

    Tensor take_grad() const {
        if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
        return node_->grad;
    }

    const std::shared_ptr<Node>& node() const { return node_; }

    static Var from_node(std::shared_ptr<Node> n) {
        Var v;
        v.node_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<Node> node_;
};

/// Wraps an op's output. The backward closure reads the output gradient from
/// `self.grad` and accumulates into `self.parents[i]->grad_buffer()` for each
/// parent that requires a gradient.
inline Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& in : inputs) node->parents.push_back(in.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Var::from_node(std::move(node));
}

inline bool wants(const Node& self, std::size_t i) {
    return self.parents[i] && self.parents[i]->requires_grad;
}

/// Runs reverse accumulation from a scalar root. Gradients accumulate into
/// every reachable node that requires one.
inline void backward(const Var& root) {
    if (!root.requires_grad()) return;
    if (root.value().numel() != 1) throw DimensionError("backward() needs a scalar root");

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
    a.value().check_same(b.value());
    Tensor out = a.value();
    out += b.value();
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t i = 0; i < 2; ++i)
            if (wants(self, i)) self.parents[i]->grad_buffer() += self.grad;
    });
}

inline Var sub(const Var& a, const Var& b) {
    a.value().check_same(b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        if (wants(self, 0)) self.parents[0]->grad_buffer() += self.grad;
        if (wants(self, 1)) {
            auto& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    a.value().check_same(b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (wants(self, 0)) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (wants(self, 1)) {
            auto& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, double k) {
    Tensor out = a.value();
    for (auto& v : out.vec()) v *= k;
    return make_result(std::move(out), {a}, [k](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += k * self.grad[i];
    });
}

/// Elementwise op helper: f gives the value, df the derivative given (x, y).
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
    Tensor out = a.value();
    for (auto& v : out.vec()) v = f(v);
    return make_result(std::move(out), {a}, [df](Node& self) {
        const Tensor& x = self.parents[0]->value;
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
    });
}

inline Var leaky_relu(const Var& a, double slope = 0.2) {
    return unary(
        a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
        [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

/// log(1 + e^x), evaluated stably.
inline double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Var softplus(const Var& a) {
    return unary(a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

inline Var abs(const Var& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// sqrt(x + eps); eps keeps the derivative bounded at zero.
inline Var sqrt(const Var& a, double eps = 0.0) {
    return unary(
        a, [eps](double x) { return std::sqrt(x + eps); },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions and reshapes

inline Var sum(const Var& a) {
    return make_result(Tensor::scalar(a.value().sum()), {a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        const double s = self.grad[0];
        for (auto& v : g.vec()) v += s;
    });
}

inline Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().numel());
    return scale(sum(a), 1.0 / n);
}

inline Var reshape(const Var& a, Shape shape) {
    return make_result(a.value().reshaped(std::move(shape)), {a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

/// Repeats a leading-dimension-1 tensor n times along dim 0.
inline Var broadcast_batch(const Var& a, int n) {
    if (a.shape().empty() || a.shape()[0] != 1) throw DimensionError("broadcast_batch expects leading dim 1");
    Shape s = a.shape();
    s[0] = n;
    const std::size_t chunk = a.value().numel();
    Tensor out(s);
    for (int i = 0; i < n; ++i) std::copy_n(a.value().data(), chunk, out.data() + i * chunk);
    return make_result(std::move(out), {a}, [chunk, n](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (int i = 0; i < n; ++i)
            for (std::size_t j = 0; j < chunk; ++j) g[j] += self.grad[i * chunk + j];
    });
}

// ---------------------------------------------------------------------------
// Dense algebra

/// x[N,I] * W[O,I]^T + b[O]
inline Var linear(const Var& x, const Var& w, const Var& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1] || b.value().numel() != static_cast<std::size_t>(ws[0]))
        throw DimensionError("linear: x" + shape_str(xs) + " W" + shape_str(ws) + " b" + shape_str(b.shape()));
    const int n = xs[0], in = xs[1], out_dim = ws[0];
    Tensor out(Shape{n, out_dim});
    MatMap o(out.data(), n, out_dim);
    o.noalias() = ConstMatMap(x.value().data(), n, in) * ConstMatMap(w.value().data(), out_dim, in).transpose();
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), out_dim);
    return make_result(std::move(out), {x, w, b}, [n, in, out_dim](Node& self) {
        ConstMatMap g(self.grad.data(), n, out_dim);
        if (wants(self, 0)) {
            MatMap gx(self.parents[0]->grad_buffer().data(), n, in);
            gx.noalias() += g * ConstMatMap(self.parents[1]->value.data(), out_dim, in);
        }
        if (wants(self, 1)) {
            MatMap gw(self.parents[1]->grad_buffer().data(), out_dim, in);
            gw.noalias() += g.transpose() * ConstMatMap(self.parents[0]->value.data(), n, in);
        }
        if (wants(self, 2)) {
            Eigen::Map<Eigen::RowVectorXd> gb(self.parents[2]->grad_buffer().data(), out_dim);
            gb += g.colwise().sum();
        }
    });
}

/// a[N,K] * b[K,M]
inline Var matmul(const Var& a, const Var& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
        throw DimensionError("matmul: " + shape_str(as) + " x " + shape_str(bs));
    const int n = as[0], k = as[1], m = bs[1];
    Tensor out(Shape{n, m});
    MatMap(out.data(), n, m).noalias() = ConstMatMap(a.value().data(), n, k) * ConstMatMap(b.value().data(), k, m);
    return make_result(std::move(out), {a, b}, [n, k, m](Node& self) {
        ConstMatMap g(self.grad.data(), n, m);
        if (wants(self, 0)) {
            MatMap ga(self.parents[0]->grad_buffer().data(), n, k);
            ga.noalias() += g * ConstMatMap(self.parents[1]->value.data(), k, m).transpose();
        }
        if (wants(self, 1)) {
            MatMap gb(self.parents[1]->grad_buffer().data(), k, m);
            gb.noalias() += ConstMatMap(self.parents[0]->value.data(), n, k).transpose() * g;
        }
    });
}

// ---------------------------------------------------------------------------
// Image ops, layout [N, C, H, W]

namespace detail {

inline void check4(const Shape& s, const char* op) {
    if (s.size() != 4) throw DimensionError(std::string(op) + ": expected rank-4 tensor, got " + shape_str(s));
}

// Unfolds one image [C,H,W] into columns [C*K*K, H*W] for a stride-1
// zero-padded KxK convolution.
inline void im2col(const double* img, int c, int h, int w, int k, int pad, double* col) {
    const int hw = h * w;
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                double* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * hw;
                const double* src = img + static_cast<std::size_t>(ci) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    double* dst = row + y * w;
                    if (sy < 0 || sy >= h) {
                        std::fill_n(dst, w, 0.0);
                        continue;
                    }
                    for (int x = 0; x < w; ++x) {
                        const int sx = x + kx - pad;
                        dst[x] = (sx >= 0 && sx < w) ? src[sy * w + sx] : 0.0;
                    }
                }
            }
}

inline void col2im(const double* col, int c, int h, int w, int k, int pad, double* img) {
    const int hw = h * w;
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * hw;
                double* dst = img + static_cast<std::size_t>(ci) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int x = 0; x < w; ++x) {
                        const int sx = x + kx - pad;
                        if (sx >= 0 && sx < w) dst[sy * w + sx] += row[y * w + x];
                    }
                }
            }
}

}  // namespace detail

/// Stride-1 "same" convolution (odd kernel, zero padding) without bias.
/// x[N,I,H,W], w[O,I,K,K] -> [N,O,H,W]
inline Var conv2d(const Var& x, const Var& w) {
    detail::check4(x.shape(), "conv2d");
    detail::check4(w.shape(), "conv2d weight");
    const int n = x.shape()[0], ci = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    const int co = w.shape()[0], k = w.shape()[2];
    if (w.shape()[1] != ci || w.shape()[3] != k || k % 2 == 0)
        throw DimensionError("conv2d: x" + shape_str(x.shape()) + " W" + shape_str(w.shape()));
    const int pad = k / 2, hw = h * wd, rows = ci * k * k;
    const bool pointwise = (k == 1);

    Tensor out(Shape{n, co, h, wd});
    Buffer col(pointwise ? 0 : static_cast<std::size_t>(rows) * hw);
    ConstMatMap wm(w.value().data(), co, rows);
    for (int s = 0; s < n; ++s) {
        const double* img = x.value().data() + static_cast<std::size_t>(s) * ci * hw;
        const double* src = img;
        if (!pointwise) {
            detail::im2col(img, ci, h, wd, k, pad, col.data());
            src = col.data();
        }
        MatMap(out.data() + static_cast<std::size_t>(s) * co * hw, co, hw).noalias() = wm * ConstMatMap(src, rows, hw);
    }
    return make_result(std::move(out), {x, w}, [n, ci, co, h, wd, k, pad, hw, rows, pointwise](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        ConstMatMap wm(self.parents[1]->value.data(), co, rows);
        const bool gx = wants(self, 0), gw = wants(self, 1);
        Buffer col(pointwise ? 0 : static_cast<std::size_t>(rows) * hw);
        Buffer gcol(pointwise ? 0 : static_cast<std::size_t>(rows) * hw);
        double* gxp = gx ? self.parents[0]->grad_buffer().data() : nullptr;
        double* gwp = gw ? self.parents[1]->grad_buffer().data() : nullptr;
        for (int s = 0; s < n; ++s) {
            ConstMatMap g(self.grad.data() + static_cast<std::size_t>(s) * co * hw, co, hw);
            const double* img = xv.data() + static_cast<std::size_t>(s) * ci * hw;
            if (gw) {
                const double* src = img;
                if (!pointwise) {
                    detail::im2col(img, ci, h, wd, k, pad, col.data());
                    src = col.data();
                }
                MatMap(gwp, co, rows).noalias() += g * ConstMatMap(src, rows, hw).transpose();
            }
            if (gx) {
                double* dst = gxp + static_cast<std::size_t>(s) * ci * hw;
                if (pointwise) {
                    MatMap(dst, ci, hw).noalias() += wm.transpose() * g;
                } else {
                    MatMap(gcol.data(), rows, hw).noalias() = wm.transpose() * g;
                    detail::col2im(gcol.data(), ci, h, wd, k, pad, dst);
                }
            }
        }
    });
}

/// x[N,C,H,W] * s[N,C] broadcast over space.
inline Var scale_channels(const Var& x, const Var& s) {
    detail::check4(x.shape(), "scale_channels");
    const int n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
    if (s.shape() != Shape{n, c}) throw DimensionError("scale_channels: s" + shape_str(s.shape()));
    Tensor out = x.value();
    for (int i = 0; i < n * c; ++i) {
        const double k = s.value()[i];
        double* p = out.data() + static_cast<std::size_t>(i) * hw;
        for (int j = 0; j < hw; ++j) p[j] *= k;
    }
    return make_result(std::move(out), {x, s}, [n, c, hw](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& sv = self.parents[1]->value;
        double* gx = wants(self, 0) ? self.parents[0]->grad_buffer().data() : nullptr;
        double* gs = wants(self, 1) ? self.parents[1]->grad_buffer().data() : nullptr;
        for (int i = 0; i < n * c; ++i) {
            const double* g = self.grad.data() + static_cast<std::size_t>(i) * hw;
            const double* xp = xv.data() + static_cast<std::size_t>(i) * hw;
            if (gx) {
                double* d = gx + static_cast<std::size_t>(i) * hw;
                for (int j = 0; j < hw; ++j) d[j] += g[j] * sv[i];
            }
            if (gs) {
                double acc = 0.0;
                for (int j = 0; j < hw; ++j) acc += g[j] * xp[j];
                gs[i] += acc;
            }
        }
    });
}

/// x[N,C,H,W] + b[C]
inline Var add_channel_bias(const Var& x, const Var& b) {
    detail::check4(x.shape(), "add_channel_bias");
    const int n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
    if (b.value().numel() != static_cast<std::size_t>(c)) throw DimensionError("add_channel_bias: bias size");
    Tensor out = x.value();
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            double* p = out.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
            for (int j = 0; j < hw; ++j) p[j] += b.value()[ch];
        }
    return make_result(std::move(out), {x, b}, [n, c, hw](Node& self) {
        if (wants(self, 0)) self.parents[0]->grad_buffer() += self.grad;
        if (wants(self, 1)) {
            auto& gb = self.parents[1]->grad_buffer();
            for (int s = 0; s < n; ++s)
                for (int ch = 0; ch < c; ++ch) {
                    const double* g = self.grad.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
                    double acc = 0.0;
                    for (int j = 0; j < hw; ++j) acc += g[j];
                    gb[ch] += acc;
                }
        }
    });
}

/// x[N,C,H,W] + strength * noise[N,1,H,W], noise broadcast over channels.
inline Var add_noise(const Var& x, const Tensor& noise, const Var& strength) {
    detail::check4(x.shape(), "add_noise");
    const int n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
    if (noise.shape() != Shape{n, 1, x.shape()[2], x.shape()[3]})
        throw DimensionError("add_noise: noise " + shape_str(noise.shape()));
    const double k = strength.value()[0];
    Tensor out = x.value();
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            double* p = out.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
            const double* nz = noise.data() + static_cast<std::size_t>(s) * hw;
            for (int j = 0; j < hw; ++j) p[j] += k * nz[j];
        }
    return make_result(std::move(out), {x, strength}, [noise, n, c, hw](Node& self) {
        if (wants(self, 0)) self.parents[0]->grad_buffer() += self.grad;
        if (wants(self, 1)) {
            double acc = 0.0;
            for (int s = 0; s < n; ++s)
                for (int ch = 0; ch < c; ++ch) {
                    const double* g = self.grad.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
                    const double* nz = noise.data() + static_cast<std::size_t>(s) * hw;
                    for (int j = 0; j < hw; ++j) acc += g[j] * nz[j];
                }
            self.parents[1]->grad_buffer()[0] += acc;
        }
    });
}

/// Weight demodulation coefficients for a style-modulated convolution:
/// d[n,o] = 1 / sqrt(sum_i s[n,i]^2 * sum_k w[o,i,k]^2 + eps).
inline Var demod_coeff(const Var& w, const Var& s, double eps = 1e-8) {
    detail::check4(w.shape(), "demod_coeff");
    const int co = w.shape()[0], ci = w.shape()[1], kk = w.shape()[2] * w.shape()[3];
    const int n = s.shape()[0];
    if (s.shape() != Shape{n, ci}) throw DimensionError("demod_coeff: s" + shape_str(s.shape()));
    RowMatrix wsq(co, ci);
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i) {
            const double* p = w.value().data() + (static_cast<std::size_t>(o) * ci + i) * kk;
            double acc = 0.0;
            for (int j = 0; j < kk; ++j) acc += p[j] * p[j];
            wsq(o, i) = acc;
        }
    RowMatrix ssq = ConstMatMap(s.value().data(), n, ci).array().square().matrix();
    Tensor out(Shape{n, co});
    MatMap om(out.data(), n, co);
    om.noalias() = ssq * wsq.transpose();
    om = (om.array() + eps).rsqrt().matrix();
    return make_result(std::move(out), {w, s}, [n, co, ci, kk](Node& self) {
        // dd/dq = -0.5 d^3 where q is the quantity under the root.
        RowMatrix gq(n, co);
        for (int i = 0; i < n * co; ++i) {
            const double d = self.value[i];
            gq.data()[i] = -0.5 * d * d * d * self.grad[i];
        }
        const Tensor& wv = self.parents[0]->value;
        const Tensor& sv = self.parents[1]->value;
        ConstMatMap sm(sv.data(), n, ci);
        if (wants(self, 0)) {
            // dq/dw[o,i,k] = s[n,i]^2 * 2 w[o,i,k]
            RowMatrix gwsq = gq.transpose() * sm.array().square().matrix();  // [co, ci]
            auto& gw = self.parents[0]->grad_buffer();
            for (int o = 0; o < co; ++o)
                for (int i = 0; i < ci; ++i) {
                    const std::size_t base = (static_cast<std::size_t>(o) * ci + i) * kk;
                    for (int j = 0; j < kk; ++j) gw[base + j] += 2.0 * wv[base + j] * gwsq(o, i);
                }
        }
        if (wants(self, 1)) {
            RowMatrix wsq(co, ci);
            for (int o = 0; o < co; ++o)
                for (int i = 0; i < ci; ++i) {
                    const double* p = wv.data() + (static_cast<std::size_t>(o) * ci + i) * kk;
                    double acc = 0.0;
                    for (int j = 0; j < kk; ++j) acc += p[j] * p[j];
                    wsq(o, i) = acc;
                }
            RowMatrix gssq = gq * wsq;  // [n, ci]
            auto& gs = self.parents[1]->grad_buffer();
            for (int i = 0; i < n * ci; ++i) gs[i] += 2.0 * sv[i] * gssq.data()[i];
        }
    });
}

/// Nearest-neighbour 2x upsampling.
inline Var upsample2x(const Var& x) {
    detail::check4(x.shape(), "upsample2x");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    Tensor out(Shape{n, c, 2 * h, 2 * w});
    for (int p = 0; p < n * c; ++p) {
        const double* src = x.value().data() + static_cast<std::size_t>(p) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(p) * 4 * h * w;
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
    return make_result(std::move(out), {x}, [n, c, h, w](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (int p = 0; p < n * c; ++p) {
            const double* src = self.grad.data() + static_cast<std::size_t>(p) * 4 * h * w;
            double* dst = g.data() + static_cast<std::size_t>(p) * h * w;
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
        }
    });
}

/// 2x2 average pooling (H, W even).
inline Var avgpool2(const Var& x) {
    detail::check4(x.shape(), "avgpool2");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (h % 2 || w % 2) throw DimensionError("avgpool2: odd spatial size");
    const int oh = h / 2, ow = w / 2;
    Tensor out(Shape{n, c, oh, ow});
    for (int p = 0; p < n * c; ++p) {
        const double* src = x.value().data() + static_cast<std::size_t>(p) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
                dst[y * ow + xx] = 0.25 * (src[2 * y * w + 2 * xx] + src[2 * y * w + 2 * xx + 1] +
                                           src[(2 * y + 1) * w + 2 * xx] + src[(2 * y + 1) * w + 2 * xx + 1]);
    }
    return make_result(std::move(out), {x}, [n, c, h, w, oh, ow](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (int p = 0; p < n * c; ++p) {
            const double* src = self.grad.data() + static_cast<std::size_t>(p) * oh * ow;
            double* dst = g.data() + static_cast<std::size_t>(p) * h * w;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) dst[y * w + xx] += 0.25 * src[(y / 2) * ow + xx / 2];
        }
    });
}

/// Appends one channel holding the batch-wide feature standard deviation:
/// mean over (c, y, x) of sqrt(var_n(x[n, c, y, x]) + eps).
inline Var minibatch_stddev(const Var& x, double eps = 1e-8) {
    detail::check4(x.shape(), "minibatch_stddev");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const int per = c * h * w, hw = h * w;
    std::vector<double> mu(per, 0.0), sigma(per, 0.0);
    const double* xv = x.value().data();
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < per; ++j) mu[j] += xv[static_cast<std::size_t>(s) * per + j];
    for (auto& m : mu) m /= n;
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < per; ++j) {
            const double d = xv[static_cast<std::size_t>(s) * per + j] - mu[j];
            sigma[j] += d * d;
        }
    double stat = 0.0;
    for (auto& v : sigma) {
        v = std::sqrt(v / n + eps);
        stat += v;
    }
    stat /= per;
    Tensor out(Shape{n, c + 1, h, w});
    for (int s = 0; s < n; ++s) {
        std::copy_n(xv + static_cast<std::size_t>(s) * per, per, out.data() + static_cast<std::size_t>(s) * (per + hw));
        std::fill_n(out.data() + static_cast<std::size_t>(s) * (per + hw) + per, hw, stat);
    }
    return make_result(std::move(out), {x}, [n, per, hw, mu = std::move(mu), sigma = std::move(sigma)](Node& self) {
        const double* xv = self.parents[0]->value.data();
        double* g = self.parents[0]->grad_buffer().data();
        double gstat = 0.0;
        for (int s = 0; s < n; ++s) {
            const double* go = self.grad.data() + static_cast<std::size_t>(s) * (per + hw);
            for (int j = 0; j < per; ++j) g[static_cast<std::size_t>(s) * per + j] += go[j];
            for (int j = 0; j < hw; ++j) gstat += go[per + j];
        }
        const double k = gstat / (static_cast<double>(per) * n);
        for (int s = 0; s < n; ++s)
            for (int j = 0; j < per; ++j) {
                const std::size_t i = static_cast<std::size_t>(s) * per + j;
                g[i] += k * (xv[i] - mu[j]) / sigma[j];
            }
    });
}

}  // namespace stylebridge::ad
