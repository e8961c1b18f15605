#include "core/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "core/binio.hpp"
#include "core/rng.hpp"

namespace mim::nn {

namespace {

std::string kind_name(LayerSpec::Kind k) {
    switch (k) {
        case LayerSpec::Kind::Flatten: return "flatten";
        case LayerSpec::Kind::Linear: return "linear";
        case LayerSpec::Kind::Relu: return "relu";
        case LayerSpec::Kind::Conv: return "conv";
        case LayerSpec::Kind::MeanPool: return "meanpool";
    }
    throw ContractError("unknown layer kind");
}

LayerSpec::Kind kind_from_name(const std::string& s) {
    if (s == "flatten") return LayerSpec::Kind::Flatten;
    if (s == "linear") return LayerSpec::Kind::Linear;
    if (s == "relu") return LayerSpec::Kind::Relu;
    if (s == "conv") return LayerSpec::Kind::Conv;
    if (s == "meanpool") return LayerSpec::Kind::MeanPool;
    throw ConfigError("unknown layer kind '" + s + "'");
}

}  // namespace

nlohmann::json ArchDescriptor::to_json() const {
    nlohmann::json j;
    j["input"] = input;
    j["num_classes"] = num_classes;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : layers) {
        nlohmann::json lj;
        lj["kind"] = kind_name(l.kind);
        switch (l.kind) {
            case LayerSpec::Kind::Linear:
                lj["in"] = l.in;
                lj["out"] = l.out;
                break;
            case LayerSpec::Kind::Conv:
                lj["in_ch"] = l.in_ch;
                lj["out_ch"] = l.out_ch;
                lj["ksize"] = l.ksize;
                lj["stride"] = l.stride;
                lj["padding"] = l.padding;
                break;
            case LayerSpec::Kind::MeanPool:
                lj["window"] = l.window;
                break;
            default:
                break;
        }
        j["layers"].push_back(lj);
    }
    return j;
}

ArchDescriptor ArchDescriptor::from_json(const nlohmann::json& j) {
    ArchDescriptor a;
    try {
        a.input = j.at("input").get<Shape>();
        a.num_classes = j.at("num_classes").get<std::size_t>();
        for (const auto& lj : j.at("layers")) {
            LayerSpec l;
            l.kind = kind_from_name(lj.at("kind").get<std::string>());
            switch (l.kind) {
                case LayerSpec::Kind::Linear:
                    l.in = lj.at("in").get<std::size_t>();
                    l.out = lj.at("out").get<std::size_t>();
                    break;
                case LayerSpec::Kind::Conv:
                    l.in_ch = lj.at("in_ch").get<std::size_t>();
                    l.out_ch = lj.at("out_ch").get<std::size_t>();
                    l.ksize = lj.at("ksize").get<std::size_t>();
                    l.stride = lj.value("stride", 1);
                    l.padding = lj.value("padding", 0);
                    break;
                case LayerSpec::Kind::MeanPool:
                    l.window = lj.at("window").get<int>();
                    break;
                default:
                    break;
            }
            a.layers.push_back(l);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad architecture descriptor: ") + e.what());
    }
    return a;
}

std::size_t ArchDescriptor::validate() const {
    if (input.empty()) throw ConfigError("architecture: empty input shape");
    if (num_classes < 2) throw ConfigError("architecture: num_classes must be >= 2");
    if (layers.empty()) throw ConfigError("architecture: no layers");

    // Track the per-sample shape through the chain.
    Shape s = input;
    std::size_t feature_width = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const bool last = (i + 1 == layers.size());
        switch (l.kind) {
            case LayerSpec::Kind::Flatten:
                s = {shape_numel(s)};
                break;
            case LayerSpec::Kind::Relu:
                break;
            case LayerSpec::Kind::Linear: {
                if (s.size() != 1 || s[0] != l.in) {
                    throw ConfigError("architecture: linear layer " + std::to_string(i) +
                                      " expects width " + std::to_string(l.in) + " but gets " +
                                      shape_str(s));
                }
                if (last) feature_width = l.in;
                s = {l.out};
                break;
            }
            case LayerSpec::Kind::Conv: {
                if (s.size() != 3 || s[0] != l.in_ch) {
                    throw ConfigError("architecture: conv layer " + std::to_string(i) +
                                      " expects " + std::to_string(l.in_ch) +
                                      " channels but gets " + shape_str(s));
                }
                const std::size_t p = static_cast<std::size_t>(l.padding);
                if (l.ksize > s[1] + 2 * p || l.ksize > s[2] + 2 * p) {
                    throw ConfigError("architecture: conv kernel larger than padded input");
                }
                s = {l.out_ch, (s[1] + 2 * p - l.ksize) / l.stride + 1,
                     (s[2] + 2 * p - l.ksize) / l.stride + 1};
                break;
            }
            case LayerSpec::Kind::MeanPool: {
                const std::size_t w = static_cast<std::size_t>(l.window);
                if (s.size() != 3 || s[1] % w != 0 || s[2] % w != 0) {
                    throw ConfigError("architecture: meanpool window does not divide " +
                                      shape_str(s));
                }
                s = {s[0], s[1] / w, s[2] / w};
                break;
            }
        }
    }
    if (layers.back().kind != LayerSpec::Kind::Linear) {
        throw ConfigError("architecture: final layer must be linear");
    }
    if (s.size() != 1 || s[0] != num_classes) {
        throw ConfigError("architecture: final width " + shape_str(s) +
                          " does not equal num_classes " + std::to_string(num_classes));
    }
    return feature_width;
}

ArchDescriptor make_mlp(Shape input, const std::vector<std::size_t>& hidden,
                        std::size_t num_classes) {
    ArchDescriptor a;
    a.input = std::move(input);
    a.num_classes = num_classes;
    a.layers.push_back({.kind = LayerSpec::Kind::Flatten});
    std::size_t width = shape_numel(a.input);
    for (auto h : hidden) {
        a.layers.push_back({.kind = LayerSpec::Kind::Linear, .in = width, .out = h});
        a.layers.push_back({.kind = LayerSpec::Kind::Relu});
        width = h;
    }
    a.layers.push_back({.kind = LayerSpec::Kind::Linear, .in = width, .out = num_classes});
    a.validate();
    return a;
}

ArchDescriptor make_cnn(Shape input, std::size_t num_classes) {
    if (input.size() != 3) throw ConfigError("make_cnn: input must be [C, H, W]");
    ArchDescriptor a;
    a.input = input;
    a.num_classes = num_classes;
    a.layers.push_back({.kind = LayerSpec::Kind::Conv,
                        .in_ch = input[0],
                        .out_ch = 16,
                        .ksize = 3,
                        .stride = 1,
                        .padding = 1});
    a.layers.push_back({.kind = LayerSpec::Kind::Relu});
    a.layers.push_back({.kind = LayerSpec::Kind::MeanPool, .window = 2});
    a.layers.push_back({.kind = LayerSpec::Kind::Conv,
                        .in_ch = 16,
                        .out_ch = 32,
                        .ksize = 3,
                        .stride = 1,
                        .padding = 1});
    a.layers.push_back({.kind = LayerSpec::Kind::Relu});
    a.layers.push_back({.kind = LayerSpec::Kind::MeanPool, .window = 2});
    a.layers.push_back({.kind = LayerSpec::Kind::Flatten});
    const std::size_t flat = 32 * (input[1] / 4) * (input[2] / 4);
    a.layers.push_back({.kind = LayerSpec::Kind::Linear, .in = flat, .out = num_classes});
    a.validate();
    return a;
}

// --- Classifier ------------------------------------------------------------

Classifier::Classifier(ArchDescriptor arch, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    Rng rng(seed);
    for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
        const auto& l = arch_.layers[i];
        if (!l.has_params()) continue;
        const std::string prefix = "layer" + std::to_string(i);
        Shape wshape;
        std::size_t fan_in = 0;
        std::size_t bias_len = 0;
        if (l.kind == LayerSpec::Kind::Linear) {
            wshape = {l.out, l.in};  // weight [out x in]; forward uses x . W^T
            fan_in = l.in;
            bias_len = l.out;
        } else {
            wshape = {l.out_ch, l.in_ch, l.ksize, l.ksize};
            fan_in = l.in_ch * l.ksize * l.ksize;
            bias_len = l.out_ch;
        }
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::vector<double> w(shape_numel(wshape));
        for (auto& v : w) v = rng.uniform(-bound, bound);
        params_.emplace_back(prefix + ".weight",
                             Tensor::from_data(wshape, std::move(w), /*requires_grad=*/true));
        params_.emplace_back(prefix + ".bias",
                             Tensor::zeros({bias_len}, /*requires_grad=*/true));
    }
}

Classifier::Classifier(ArchDescriptor arch, std::vector<std::pair<std::string, Tensor>> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
    arch_.validate();
}

ForwardResult Classifier::forward(const Tensor& x) const {
    Shape expected = {x.shape().empty() ? 0 : x.shape()[0]};
    for (auto e : arch_.input) expected.push_back(e);
    if (x.shape() != expected) {
        throw ShapeError("forward: input " + shape_str(x.shape()) + " does not match expected " +
                         shape_str(expected));
    }

    auto param = [this](std::size_t layer, const char* suffix) -> const Tensor& {
        const std::string name = "layer" + std::to_string(layer) + "." + suffix;
        for (const auto& [n, t] : params_) {
            if (n == name) return t;
        }
        throw ContractError("forward: missing parameter " + name);
    };

    Tensor h = x;
    Tensor features;
    for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
        const auto& l = arch_.layers[i];
        const bool last = (i + 1 == arch_.layers.size());
        switch (l.kind) {
            case LayerSpec::Kind::Flatten:
                h = flatten2d(h);
                break;
            case LayerSpec::Kind::Relu:
                h = relu(h);
                break;
            case LayerSpec::Kind::Linear: {
                if (last) features = h;
                const Tensor& w = param(i, "weight");  // [out x in]
                // x [N x in] . W^T [in x out]
                const std::size_t out = w.shape()[0], in = w.shape()[1];
                std::vector<double> wt(in * out);
                for (std::size_t r = 0; r < out; ++r)
                    for (std::size_t c = 0; c < in; ++c) wt[c * out + r] = w.values()[r * in + c];
                Tensor wtT = Tensor::op_result(
                    {in, out}, std::move(wt), {w},
                    [in, out](const std::vector<double>& g, std::vector<Tensor>& parents) {
                        if (!parents[0].tracks_grad()) return;
                        std::vector<double> d(in * out);
                        for (std::size_t r = 0; r < out; ++r)
                            for (std::size_t c = 0; c < in; ++c) d[r * in + c] = g[c * out + r];
                        parents[0].accumulate_grad(d);
                    });
                h = bias_add_rows(matmul(h, wtT), param(i, "bias"));
                break;
            }
            case LayerSpec::Kind::Conv:
                h = bias_add_channels(conv2d(h, param(i, "weight"), l.stride, l.padding),
                                      param(i, "bias"));
                break;
            case LayerSpec::Kind::MeanPool:
                h = meanpool2d(h, l.window);
                break;
        }
    }
    return {h, features};
}

// --- losses ----------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax: logits must be [N x C]");
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    std::vector<double> out(N * C);
    for (std::size_t i = 0; i < N; ++i) {
        double mx = logits.values()[i * C];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits.values()[i * C + c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            out[i * C + c] = std::exp(logits.values()[i * C + c] - mx);
            denom += out[i * C + c];
        }
        for (std::size_t c = 0; c < C; ++c) out[i * C + c] /= denom;
    }
    return Tensor::from_data({N, C}, std::move(out));
}

namespace {

// Per-row log-sum-exp with max-subtraction; also returns softmax probs.
void row_lse_softmax(const std::vector<double>& z, std::size_t N, std::size_t C,
                     std::vector<double>& lse, std::vector<double>& probs) {
    lse.resize(N);
    probs.resize(N * C);
    for (std::size_t i = 0; i < N; ++i) {
        double mx = z[i * C];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, z[i * C + c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            probs[i * C + c] = std::exp(z[i * C + c] - mx);
            denom += probs[i * C + c];
        }
        lse[i] = mx + std::log(denom);
        for (std::size_t c = 0; c < C; ++c) probs[i * C + c] /= denom;
    }
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [N x C]");
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    if (labels.size() != N) {
        throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(N) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= C) {
            throw ContractError("cross_entropy: label " + std::to_string(y) +
                                " out of range [0, " + std::to_string(C) + ")");
        }
    }
    std::vector<double> lse, probs;
    row_lse_softmax(logits.values(), N, C, lse, probs);
    double loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) loss += lse[i] - logits.values()[i * C + labels[i]];
    loss /= static_cast<double>(N);
    return Tensor::op_result(
        {1}, {loss}, {logits},
        [N, C, labels, probs = std::move(probs)](const std::vector<double>& g,
                                                 std::vector<Tensor>& parents) {
            if (!parents[0].tracks_grad()) return;
            // d/dz = (softmax(z) - onehot(y)) / N
            std::vector<double> d(N * C);
            const double s = g[0] / static_cast<double>(N);
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < C; ++c)
                    d[i * C + c] =
                        s * (probs[i * C + c] - (static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0));
            parents[0].accumulate_grad(d);
        });
}

Tensor uniform_target_loss(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("uniform_target_loss: logits must be [N x C]");
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    if (N < 1) throw ContractError("uniform_target_loss: empty batch");
    std::vector<double> lse, probs;
    row_lse_softmax(logits.values(), N, C, lse, probs);
    double loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double rowmean = 0.0;
        for (std::size_t c = 0; c < C; ++c) rowmean += logits.values()[i * C + c];
        rowmean /= static_cast<double>(C);
        loss += lse[i] - rowmean;
    }
    loss /= static_cast<double>(N);
    return Tensor::op_result(
        {1}, {loss}, {logits},
        [N, C, probs = std::move(probs)](const std::vector<double>& g,
                                         std::vector<Tensor>& parents) {
            if (!parents[0].tracks_grad()) return;
            // d/dz = (softmax(z) - 1/C) / N
            std::vector<double> d(N * C);
            const double s = g[0] / static_cast<double>(N);
            const double u = 1.0 / static_cast<double>(C);
            for (std::size_t i = 0; i < N * C; ++i) d[i] = s * (probs[i] - u);
            parents[0].accumulate_grad(d);
        });
}

// --- optimizer -------------------------------------------------------------

OptimizerState OptimizerState::create(const Classifier& m, double learning_rate, double momentum) {
    if (learning_rate <= 0.0) throw ConfigError("sgd: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd: momentum must be in [0, 1)");
    OptimizerState s;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    for (const auto& [name, t] : m.parameters()) {
        s.velocity.emplace_back(t.size(), 0.0);
    }
    return s;
}

void sgd_step(Classifier& m, OptimizerState& state) {
    auto& params = m.parameters();
    if (state.velocity.size() != params.size()) {
        throw ContractError("sgd_step: optimizer state does not match parameter count");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& [name, t] = params[p];
        if (!t.has_grad()) {
            throw ContractError("sgd_step: parameter '" + name + "' has no gradient");
        }
        auto& v = state.velocity[p];
        const auto& g = t.grad();
        auto& theta = t.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = state.momentum * v[i] + g[i];
            theta[i] -= state.learning_rate * v[i];
        }
    }
    for (auto& [name, t] : params) t.zero_grad();
}

// --- serialization ---------------------------------------------------------

void save_model(const Classifier& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("save_model: cannot open '" + path + "' for writing");
    os.write("MIM1", 4);
    const std::string arch = m.arch().to_json().dump();
    binio::write_u32(os, static_cast<std::uint32_t>(arch.size()));
    os.write(arch.data(), static_cast<std::streamsize>(arch.size()));
    for (const auto& [name, t] : m.parameters()) {
        binio::write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        binio::write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) binio::write_u32(os, static_cast<std::uint32_t>(e));
        for (double v : t.values()) binio::write_f64(os, v);
    }
    if (!os) throw DataError("save_model: write to '" + path + "' failed");
}

Classifier load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_model: cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "MIM1") {
        throw DataError("load_model: '" + path + "' is not a MIM1 model file");
    }
    const std::uint32_t arch_len = binio::read_u32(is, "architecture length");
    const std::string arch_str = binio::read_bytes(is, arch_len, "architecture descriptor");
    nlohmann::json arch_json;
    try {
        arch_json = nlohmann::json::parse(arch_str);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_model: corrupt architecture descriptor: ") + e.what());
    }
    ArchDescriptor arch = ArchDescriptor::from_json(arch_json);
    // Final-layer width vs the descriptor's own num_classes field.
    if (!arch.layers.empty() && arch.layers.back().kind == LayerSpec::Kind::Linear &&
        arch.layers.back().out != arch.num_classes) {
        throw DataError("load_model: final layer width " + std::to_string(arch.layers.back().out) +
                        " does not match num_classes " + std::to_string(arch.num_classes) +
                        " in file descriptor");
    }
    arch.validate();

    // Expected parameter list comes from the descriptor; file must match it.
    Classifier expected(arch, std::uint64_t{0});
    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& [want_name, want_t] : expected.parameters()) {
        const std::uint32_t name_len = binio::read_u32(is, "parameter name length");
        const std::string name = binio::read_bytes(is, name_len, "parameter name");
        if (name != want_name) {
            throw DataError("load_model: expected parameter '" + want_name + "', found '" + name +
                            "'");
        }
        const std::uint32_t rank = binio::read_u32(is, "parameter rank");
        Shape shape(rank);
        for (auto& e : shape) e = binio::read_u32(is, "parameter extent");
        if (shape != want_t.shape()) {
            throw DataError("load_model: parameter '" + name + "' has shape " + shape_str(shape) +
                            " but descriptor implies " + shape_str(want_t.shape()));
        }
        std::vector<double> data(shape_numel(shape));
        for (auto& v : data) v = binio::read_f64(is, "parameter data");
        params.emplace_back(name, Tensor::from_data(shape, std::move(data), /*requires_grad=*/true));
    }
    return Classifier(std::move(arch), std::move(params));
}

}  // namespace mim::nn
