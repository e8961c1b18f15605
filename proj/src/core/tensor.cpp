#include "core/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mim {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    return node;
}

bool any_tracks(const std::vector<Tensor>& ts) {
    for (const auto& t : ts) {
        if (t.tracks_grad()) return true;
    }
    return false;
}

void ensure_grad(Tensor& t) {
    auto* n = t.node();
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

// --- Tensor handle ---------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
    return from_data(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t;
    t.node_ = make_node(std::move(shape), std::move(data));
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                         BackwardFn backward) {
    Tensor t;
    t.node_ = make_node(std::move(shape), std::move(data));
    if (any_tracks(parents)) {
        t.node_->parents = std::move(parents);
        t.node_->backward = std::move(backward);
    }
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::rank() const { return node_->shape.size(); }
std::size_t Tensor::size() const { return node_->data.size(); }
const std::vector<double>& Tensor::values() const { return node_->data; }
std::vector<double>& Tensor::values() { return node_->data; }

double Tensor::scalar() const {
    if (size() != 1) {
        throw ContractError("scalar() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::tracks_grad() const {
    return node_->requires_grad || static_cast<bool>(node_->backward);
}
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) throw ContractError("grad() on tensor without gradient");
    return node_->grad;
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != node_->data.size()) {
        throw ShapeError("accumulate_grad: gradient length mismatch");
    }
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
}

void Tensor::zero_grad() { node_->grad.clear(); }

// --- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += aip * bv[p * n + j];
            }
        }
    }
    return Tensor::op_result(
        {m, n}, std::move(out), {a, b},
        [m, k, n](const std::vector<double>& g, std::vector<Tensor>& parents) {
            auto& pa = parents[0];
            auto& pb = parents[1];
            const auto& av = pa.values();
            const auto& bv = pb.values();
            if (pa.tracks_grad()) {
                std::vector<double> da(m * k, 0.0);  // dA = dC . B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = g[i * n + j];
                        if (gij == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gij * bv[p * n + j];
                    }
                pa.accumulate_grad(da);
            }
            if (pb.tracks_grad()) {
                std::vector<double> db(k * n, 0.0);  // dB = A^T . dC
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = av[i * k + p];
                        if (aip == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * g[i * n + j];
                    }
                pb.accumulate_grad(db);
            }
        });
}

// --- conv2d ----------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding) {
    if (input.rank() != 4 || kernels.rank() != 4) {
        throw ShapeError("conv2d: input and kernels must be rank 4");
    }
    if (stride < 1) throw ContractError("conv2d: stride must be positive");
    if (padding < 0) throw ContractError("conv2d: padding must be non-negative");
    const std::size_t N = input.shape()[0], C = input.shape()[1], H = input.shape()[2],
                      W = input.shape()[3];
    const std::size_t F = kernels.shape()[0], KC = kernels.shape()[1], kh = kernels.shape()[2],
                      kw = kernels.shape()[3];
    if (KC != C) {
        throw ShapeError("conv2d: channel mismatch, input " + shape_str(input.shape()) +
                         " kernels " + shape_str(kernels.shape()));
    }
    const std::size_t p = static_cast<std::size_t>(padding);
    if (kh > H + 2 * p || kw > W + 2 * p) {
        throw ShapeError("conv2d: kernel " + shape_str(kernels.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
    }
    const std::size_t Ho = (H + 2 * p - kh) / stride + 1;
    const std::size_t Wo = (W + 2 * p - kw) / stride + 1;

    const auto& x = input.values();
    const auto& k = kernels.values();
    std::vector<double> out(N * F * Ho * Wo, 0.0);
    const auto xi = [&](std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return ((n * C + c) * H + h) * W + w;
    };
    const auto ki = [&](std::size_t f, std::size_t c, std::size_t a, std::size_t b) {
        return ((f * C + c) * kh + a) * kw + b;
    };
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t a = 0; a < kh; ++a) {
                            const std::ptrdiff_t h =
                                static_cast<std::ptrdiff_t>(oh * stride + a) -
                                static_cast<std::ptrdiff_t>(p);
                            if (h < 0 || h >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t b = 0; b < kw; ++b) {
                                const std::ptrdiff_t w =
                                    static_cast<std::ptrdiff_t>(ow * stride + b) -
                                    static_cast<std::ptrdiff_t>(p);
                                if (w < 0 || w >= static_cast<std::ptrdiff_t>(W)) continue;
                                acc += x[xi(n, c, h, w)] * k[ki(f, c, a, b)];
                            }
                        }
                    out[((n * F + f) * Ho + oh) * Wo + ow] = acc;
                }

    const std::size_t s = static_cast<std::size_t>(stride);
    return Tensor::op_result(
        {N, F, Ho, Wo}, std::move(out), {input, kernels},
        [N, C, H, W, F, kh, kw, p, s, Ho, Wo](const std::vector<double>& g,
                                              std::vector<Tensor>& parents) {
            auto& pin = parents[0];
            auto& pker = parents[1];
            const auto& x = pin.values();
            const auto& k = pker.values();
            const auto xi = [&](std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
                return ((n * C + c) * H + h) * W + w;
            };
            const auto ki = [&](std::size_t f, std::size_t c, std::size_t a, std::size_t b) {
                return ((f * C + c) * kh + a) * kw + b;
            };
            std::vector<double> dx(pin.tracks_grad() ? x.size() : 0, 0.0);
            std::vector<double> dk(pker.tracks_grad() ? k.size() : 0, 0.0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t oh = 0; oh < Ho; ++oh)
                        for (std::size_t ow = 0; ow < Wo; ++ow) {
                            const double go = g[((n * F + f) * Ho + oh) * Wo + ow];
                            if (go == 0.0) continue;
                            for (std::size_t c = 0; c < C; ++c)
                                for (std::size_t a = 0; a < kh; ++a) {
                                    const std::ptrdiff_t h =
                                        static_cast<std::ptrdiff_t>(oh * s + a) -
                                        static_cast<std::ptrdiff_t>(p);
                                    if (h < 0 || h >= static_cast<std::ptrdiff_t>(H)) continue;
                                    for (std::size_t b = 0; b < kw; ++b) {
                                        const std::ptrdiff_t w =
                                            static_cast<std::ptrdiff_t>(ow * s + b) -
                                            static_cast<std::ptrdiff_t>(p);
                                        if (w < 0 || w >= static_cast<std::ptrdiff_t>(W)) continue;
                                        if (!dx.empty()) dx[xi(n, c, h, w)] += go * k[ki(f, c, a, b)];
                                        if (!dk.empty()) dk[ki(f, c, a, b)] += go * x[xi(n, c, h, w)];
                                    }
                                }
                        }
            if (pin.tracks_grad()) pin.accumulate_grad(dx);
            if (pker.tracks_grad()) pker.accumulate_grad(dk);
        });
}

// --- elementwise -----------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return Tensor::op_result(a.shape(), std::move(out), {a, b},
                             [](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (parents[0].tracks_grad()) parents[0].accumulate_grad(g);
                                 if (parents[1].tracks_grad()) parents[1].accumulate_grad(g);
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return Tensor::op_result(a.shape(), std::move(out), {a, b},
                             [](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (parents[0].tracks_grad()) parents[0].accumulate_grad(g);
                                 if (parents[1].tracks_grad()) {
                                     std::vector<double> ng(g.size());
                                     for (std::size_t i = 0; i < g.size(); ++i) ng[i] = -g[i];
                                     parents[1].accumulate_grad(ng);
                                 }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return Tensor::op_result(a.shape(), std::move(out), {a, b},
                             [](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 const auto& av = parents[0].values();
                                 const auto& bv = parents[1].values();
                                 if (parents[0].tracks_grad()) {
                                     std::vector<double> da(g.size());
                                     for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bv[i];
                                     parents[0].accumulate_grad(da);
                                 }
                                 if (parents[1].tracks_grad()) {
                                     std::vector<double> db(g.size());
                                     for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * av[i];
                                     parents[1].accumulate_grad(db);
                                 }
                             });
}

Tensor scale(const Tensor& t, double s) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * t.values()[i];
    return Tensor::op_result(t.shape(), std::move(out), {t},
                             [s](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (!parents[0].tracks_grad()) return;
                                 std::vector<double> d(g.size());
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] = s * g[i];
                                 parents[0].accumulate_grad(d);
                             });
}

Tensor relu(const Tensor& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.values()[i] > 0.0 ? t.values()[i] : 0.0;
    return Tensor::op_result(t.shape(), std::move(out), {t},
                             [](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (!parents[0].tracks_grad()) return;
                                 const auto& x = parents[0].values();
                                 std::vector<double> d(g.size());
                                 // subgradient 0 at 0
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                     d[i] = x[i] > 0.0 ? g[i] : 0.0;
                                 parents[0].accumulate_grad(d);
                             });
}

Tensor exp(const Tensor& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(t.values()[i]);
    std::vector<double> saved = out;
    return Tensor::op_result(
        t.shape(), std::move(out), {t},
        [saved = std::move(saved)](const std::vector<double>& g, std::vector<Tensor>& parents) {
            if (!parents[0].tracks_grad()) return;
            std::vector<double> d(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * saved[i];
            parents[0].accumulate_grad(d);
        });
}

Tensor log(const Tensor& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (t.values()[i] <= 0.0) {
            throw NumericError("log: non-positive input " + std::to_string(t.values()[i]));
        }
        out[i] = std::log(t.values()[i]);
    }
    return Tensor::op_result(t.shape(), std::move(out), {t},
                             [](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (!parents[0].tracks_grad()) return;
                                 const auto& x = parents[0].values();
                                 std::vector<double> d(g.size());
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / x[i];
                                 parents[0].accumulate_grad(d);
                             });
}

Tensor neg(const Tensor& t) { return scale(t, -1.0); }

// --- reductions ------------------------------------------------------------

namespace {

// Iterates a tensor as [outer, extent, inner] around `axis`.
struct AxisView {
    std::size_t outer, extent, inner;
};

AxisView axis_view(const Shape& s, int axis) {
    if (axis < 0 || static_cast<std::size_t>(axis) >= s.size()) {
        throw ContractError("reduce: axis " + std::to_string(axis) + " out of range for " +
                            shape_str(s));
    }
    AxisView v{1, s[axis], 1};
    for (int i = 0; i < axis; ++i) v.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != static_cast<std::size_t>(axis)) out.push_back(s[i]);
    }
    if (out.empty()) out.push_back(1);
    return out;
}

}  // namespace

Tensor sum(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.values()) acc += v;
    return Tensor::op_result({1}, {acc}, {t},
                             [](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (!parents[0].tracks_grad()) return;
                                 parents[0].accumulate_grad(
                                     std::vector<double>(parents[0].size(), g[0]));
                             });
}

Tensor sum(const Tensor& t, int axis) {
    const auto v = axis_view(t.shape(), axis);
    std::vector<double> out(v.outer * v.inner, 0.0);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t e = 0; e < v.extent; ++e)
            for (std::size_t i = 0; i < v.inner; ++i)
                out[o * v.inner + i] += t.values()[(o * v.extent + e) * v.inner + i];
    return Tensor::op_result(drop_axis(t.shape(), axis), std::move(out), {t},
                             [v](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (!parents[0].tracks_grad()) return;
                                 std::vector<double> d(parents[0].size());
                                 for (std::size_t o = 0; o < v.outer; ++o)
                                     for (std::size_t e = 0; e < v.extent; ++e)
                                         for (std::size_t i = 0; i < v.inner; ++i)
                                             d[(o * v.extent + e) * v.inner + i] =
                                                 g[o * v.inner + i];
                                 parents[0].accumulate_grad(d);
                             });
}

Tensor mean(const Tensor& t) { return scale(sum(t), 1.0 / static_cast<double>(t.size())); }

Tensor mean(const Tensor& t, int axis) {
    const auto v = axis_view(t.shape(), axis);
    return scale(sum(t, axis), 1.0 / static_cast<double>(v.extent));
}

Tensor max(const Tensor& t) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t.values()[i] > t.values()[arg]) arg = i;  // first maximum wins ties
    }
    return Tensor::op_result({1}, {t.values()[arg]}, {t},
                             [arg](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (!parents[0].tracks_grad()) return;
                                 std::vector<double> d(parents[0].size(), 0.0);
                                 d[arg] = g[0];
                                 parents[0].accumulate_grad(d);
                             });
}

Tensor max(const Tensor& t, int axis) {
    const auto v = axis_view(t.shape(), axis);
    std::vector<double> out(v.outer * v.inner);
    std::vector<std::size_t> args(v.outer * v.inner, 0);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
            std::size_t best = 0;
            double bv = t.values()[(o * v.extent) * v.inner + i];
            for (std::size_t e = 1; e < v.extent; ++e) {
                const double x = t.values()[(o * v.extent + e) * v.inner + i];
                if (x > bv) {
                    bv = x;
                    best = e;
                }
            }
            out[o * v.inner + i] = bv;
            args[o * v.inner + i] = best;
        }
    return Tensor::op_result(
        drop_axis(t.shape(), axis), std::move(out), {t},
        [v, args = std::move(args)](const std::vector<double>& g, std::vector<Tensor>& parents) {
            if (!parents[0].tracks_grad()) return;
            std::vector<double> d(parents[0].size(), 0.0);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < v.inner; ++i)
                    d[(o * v.extent + args[o * v.inner + i]) * v.inner + i] = g[o * v.inner + i];
            parents[0].accumulate_grad(d);
        });
}

// --- structural ops --------------------------------------------------------

Tensor meanpool2d(const Tensor& t, int window) {
    if (t.rank() != 4) throw ShapeError("meanpool2d: input must be rank 4");
    if (window < 1) throw ContractError("meanpool2d: window must be positive");
    const std::size_t N = t.shape()[0], C = t.shape()[1], H = t.shape()[2], W = t.shape()[3];
    const std::size_t w = static_cast<std::size_t>(window);
    if (H % w != 0 || W % w != 0) {
        throw ShapeError("meanpool2d: window " + std::to_string(window) +
                         " does not divide spatial dims of " + shape_str(t.shape()));
    }
    const std::size_t Ho = H / w, Wo = W / w;
    std::vector<double> out(N * C * Ho * Wo, 0.0);
    const double inv = 1.0 / static_cast<double>(w * w);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::size_t a = 0; a < w; ++a)
                        for (std::size_t b = 0; b < w; ++b)
                            acc += t.values()[((n * C + c) * H + oh * w + a) * W + ow * w + b];
                    out[((n * C + c) * Ho + oh) * Wo + ow] = acc * inv;
                }
    return Tensor::op_result(
        {N, C, Ho, Wo}, std::move(out), {t},
        [N, C, H, W, w, Ho, Wo, inv](const std::vector<double>& g, std::vector<Tensor>& parents) {
            if (!parents[0].tracks_grad()) return;
            std::vector<double> d(parents[0].size(), 0.0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t oh = 0; oh < Ho; ++oh)
                        for (std::size_t ow = 0; ow < Wo; ++ow) {
                            const double go = g[((n * C + c) * Ho + oh) * Wo + ow] * inv;
                            for (std::size_t a = 0; a < w; ++a)
                                for (std::size_t b = 0; b < w; ++b)
                                    d[((n * C + c) * H + oh * w + a) * W + ow * w + b] += go;
                        }
            parents[0].accumulate_grad(d);
        });
}

Tensor flatten2d(const Tensor& t) {
    if (t.rank() < 2) throw ShapeError("flatten2d: input must have rank >= 2");
    const std::size_t N = t.shape()[0];
    const std::size_t rest = t.size() / N;
    return Tensor::op_result({N, rest}, t.values(), {t},
                             [](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (parents[0].tracks_grad()) parents[0].accumulate_grad(g);
                             });
}

Tensor bias_add_rows(const Tensor& x, const Tensor& b) {
    if (x.rank() != 2 || b.rank() != 1 || x.shape()[1] != b.shape()[0]) {
        throw ShapeError("bias_add_rows: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t N = x.shape()[0], C = x.shape()[1];
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < C; ++j) out[i * C + j] = x.values()[i * C + j] + b.values()[j];
    return Tensor::op_result({N, C}, std::move(out), {x, b},
                             [N, C](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (parents[0].tracks_grad()) parents[0].accumulate_grad(g);
                                 if (parents[1].tracks_grad()) {
                                     std::vector<double> db(C, 0.0);
                                     for (std::size_t i = 0; i < N; ++i)
                                         for (std::size_t j = 0; j < C; ++j) db[j] += g[i * C + j];
                                     parents[1].accumulate_grad(db);
                                 }
                             });
}

Tensor bias_add_channels(const Tensor& x, const Tensor& b) {
    if (x.rank() != 4 || b.rank() != 1 || x.shape()[1] != b.shape()[0]) {
        throw ShapeError("bias_add_channels: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    std::vector<double> out(x.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < HW; ++i)
                out[(n * C + c) * HW + i] = x.values()[(n * C + c) * HW + i] + b.values()[c];
    return Tensor::op_result(x.shape(), std::move(out), {x, b},
                             [N, C, HW](const std::vector<double>& g, std::vector<Tensor>& parents) {
                                 if (parents[0].tracks_grad()) parents[0].accumulate_grad(g);
                                 if (parents[1].tracks_grad()) {
                                     std::vector<double> db(C, 0.0);
                                     for (std::size_t n = 0; n < N; ++n)
                                         for (std::size_t c = 0; c < C; ++c)
                                             for (std::size_t i = 0; i < HW; ++i)
                                                 db[c] += g[(n * C + c) * HW + i];
                                     parents[1].accumulate_grad(db);
                                 }
                             });
}

// --- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    // Collect reachable nodes; creation ids give a topological order.
    std::vector<Tensor> nodes;
    std::unordered_set<const TensorNode*> seen;
    std::vector<Tensor> stack{loss};
    while (!stack.empty()) {
        Tensor t = stack.back();
        stack.pop_back();
        if (!seen.insert(t.node()).second) continue;
        nodes.push_back(t);
        for (const auto& p : t.node()->parents) stack.push_back(p);
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Tensor& a, const Tensor& b) { return a.node()->id > b.node()->id; });

    // Non-leaf grads start from zero for this sweep; leaves keep accumulating.
    for (auto& t : nodes) {
        if (!t.requires_grad()) t.zero_grad();
    }
    ensure_grad(nodes.front());
    // nodes.front() is the loss (highest id among reachable nodes by construction
    // of define-by-run graphs; guard anyway).
    Tensor loss_copy = loss;
    ensure_grad(loss_copy);
    loss_copy.node()->grad[0] += 1.0;

    for (auto& t : nodes) {
        auto* n = t.node();
        if (!n->backward || n->grad.empty()) continue;
        n->backward(n->grad, n->parents);
    }
}

}  // namespace mim
