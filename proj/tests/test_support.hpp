#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace mim::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double lo = -1.0,
                            double hi = 1.0) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Central finite differences of a scalar-valued function w.r.t. one leaf.
// Perturbs the leaf in place, so `f` must re-run the forward computation.
inline std::vector<double> finite_diff(Tensor& leaf, const std::function<double()>& f,
                                       double h = 1e-5) {
    std::vector<double> grad(leaf.size());
    for (std::size_t i = 0; i < leaf.size(); ++i) {
        const double saved = leaf.values()[i];
        leaf.values()[i] = saved + h;
        const double fp = f();
        leaf.values()[i] = saved - h;
        const double fm = f();
        leaf.values()[i] = saved;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

// max(|a-b|) / max(1, |a|, |b|) over all coordinates.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace mim::testing
