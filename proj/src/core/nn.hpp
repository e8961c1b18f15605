#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

#include "json.hpp"

namespace mim::nn {

struct LayerSpec {
    enum class Kind { Flatten, Linear, Relu, Conv, MeanPool };
    Kind kind = Kind::Relu;
    // linear
    std::size_t in = 0, out = 0;
    // conv
    std::size_t in_ch = 0, out_ch = 0, ksize = 3;
    int stride = 1, padding = 1;
    // meanpool
    int window = 2;

    bool has_params() const { return kind == Kind::Linear || kind == Kind::Conv; }
};

// Layer chain plus input/output contract; JSON form is what the model file
// and the experiment config carry.
struct ArchDescriptor {
    Shape input;  // [C, H, W]
    std::size_t num_classes = 0;
    std::vector<LayerSpec> layers;

    nlohmann::json to_json() const;
    static ArchDescriptor from_json(const nlohmann::json& j);

    // Checks the chain composes on `input` and ends in a linear layer of
    // width num_classes. Returns the feature width D feeding that layer.
    std::size_t validate() const;
};

ArchDescriptor make_mlp(Shape input, const std::vector<std::size_t>& hidden,
                        std::size_t num_classes);
ArchDescriptor make_cnn(Shape input, std::size_t num_classes);

struct ForwardResult {
    Tensor logits;    // [N x C]
    Tensor features;  // [N x D], input of the final linear layer
};

class Classifier {
public:
    Classifier(ArchDescriptor arch, std::uint64_t seed);
    // Takes ownership of pre-built parameters (used by load_model).
    Classifier(ArchDescriptor arch, std::vector<std::pair<std::string, Tensor>> params);

    const ArchDescriptor& arch() const { return arch_; }
    std::size_t num_classes() const { return arch_.num_classes; }
    std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }

    ForwardResult forward(const Tensor& x) const;

private:
    ArchDescriptor arch_;
    std::vector<std::pair<std::string, Tensor>> params_;
};

// Row-wise softmax with max-subtraction; plain values, no graph.
Tensor softmax(const Tensor& logits);

// Mean over the batch of -log softmax(logits)[i, labels[i]], in log-space.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean over the batch of -(1/C) * sum_c log softmax(logits)[i, c].
// Lower-bounded by ln C, attained exactly on constant rows.
Tensor uniform_target_loss(const Tensor& logits);

struct LossBreakdown {
    double l_id = 0.0;
    double l_ood = 0.0;
    double total = 0.0;
};

struct OptimizerState {
    double learning_rate = 0.0;
    double momentum = 0.0;
    std::vector<std::vector<double>> velocity;  // mirrors parameter order/shapes

    static OptimizerState create(const Classifier& m, double learning_rate, double momentum);
};

// v <- mu*v + g; theta <- theta - alpha*v; gradients cleared afterwards.
void sgd_step(Classifier& m, OptimizerState& state);

void save_model(const Classifier& m, const std::string& path);
Classifier load_model(const std::string& path);

}  // namespace mim::nn
