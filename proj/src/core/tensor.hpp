#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace mim {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorNode;

// Value-semantic handle to a node in a define-by-run computation graph.
// Leaves may carry requires_grad; op results carry parents plus a backward
// rule. The graph is rebuilt on every forward pass.
class Tensor {
public:
    using BackwardFn =
        std::function<void(const std::vector<double>& out_grad, std::vector<Tensor>& parents)>;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    // Graph-node constructor used by op implementations.
    static Tensor op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                            BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const;
    std::size_t size() const;
    const std::vector<double>& values() const;
    std::vector<double>& values();
    double scalar() const;  // value of a single-element tensor

    bool requires_grad() const;
    bool tracks_grad() const;  // requires_grad leaf, or op result with a backward rule
    bool has_grad() const;
    const std::vector<double>& grad() const;
    void accumulate_grad(const std::vector<double>& g);
    void zero_grad();

    // Identity comparison (same underlying node).
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    TensorNode* node() const { return node_.get(); }

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // allocated lazily; same length as data when present
    std::vector<Tensor> parents;
    Tensor::BackwardFn backward;
    std::uint64_t id = 0;  // creation order; doubles as topological order
};

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Cross-correlation, NCHW input against FCkk kernels, zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double s);
Tensor relu(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor neg(const Tensor& t);

Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, int axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, int axis);
Tensor max(const Tensor& t);
Tensor max(const Tensor& t, int axis);

// Window x window mean pooling with stride == window; H and W must divide.
Tensor meanpool2d(const Tensor& t, int window);
// [N, d1, d2, ...] -> [N, d1*d2*...]
Tensor flatten2d(const Tensor& t);
// x: [N x C], b: [C]; adds b to every row.
Tensor bias_add_rows(const Tensor& x, const Tensor& b);
// x: [N x C x H x W], b: [C]; adds b[c] to every element of channel c.
Tensor bias_add_channels(const Tensor& x, const Tensor& b);

// Reverse sweep from a scalar loss; accumulates into requires_grad leaves.
void backward(const Tensor& loss);

}  // namespace mim
