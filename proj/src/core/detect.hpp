#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace mim::detect {

// Scores follow one orientation everywhere: higher means more in-distribution.

std::vector<double> score_msp(const Tensor& logits);
std::vector<double> score_max_logit(const Tensor& logits);
std::vector<double> score_energy(const Tensor& logits, double temperature = 1.0);
std::vector<double> score_entropy(const Tensor& logits);

// Per-class mean softmax vectors, keyed by predicted class.
struct KlTemplates {
    std::vector<std::vector<double>> class_templates;  // [C][C], rows are prob vectors
};

KlTemplates fit_kl_matching(const Tensor& probs);
std::vector<double> score_kl(const KlTemplates& templates, const Tensor& probs);

struct MahalanobisStats {
    std::vector<std::vector<double>> class_means;  // [C][D]
    std::vector<double> shared_precision;          // [D x D], row-major
    double epsilon = 0.0;                          // regularization actually used
    std::size_t dim = 0;
};

MahalanobisStats fit_mahalanobis(const Tensor& features, const std::vector<int>& labels,
                                 std::size_t num_classes);
std::vector<double> score_mahalanobis(const MahalanobisStats& stats, const Tensor& features);

// Uniform interface used by the evaluation pipeline. Fitted kinds throw
// ContractError if scored before fit().
class Detector {
public:
    virtual ~Detector() = default;
    virtual const std::string& name() const = 0;
    virtual bool needs_fit() const { return false; }
    virtual void fit(const Tensor& /*logits*/, const Tensor& /*features*/,
                     const std::vector<int>& /*labels*/, std::size_t /*num_classes*/) {}
    virtual std::vector<double> score(const Tensor& logits, const Tensor& features) const = 0;
};

// Kinds: msp, max_logit, energy, entropy, kl_matching, mahalanobis.
std::unique_ptr<Detector> make_detector(const std::string& kind, double energy_temperature = 1.0);

}  // namespace mim::detect
