#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace mim::eval {

// ID scores vs OOD scores under the shared "higher = more ID" convention.
struct ScoredSplit {
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
};

// Probability a random ID score exceeds a random OOD score, ties half.
// Sort-and-midrank implementation, O((n+m) log(n+m)).
double auroc(const ScoredSplit& s);

// Area under the precision-recall curve, ID positive, step-wise sum with
// tied scores processed as one threshold group.
double aupr(const ScoredSplit& s);

// Fraction of rows whose argmax equals the label; ties -> lowest index.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

// O(n*m) pair enumeration / explicit threshold enumeration. Test oracles;
// guarded to n*m <= 1e6.
double brute_force_auroc(const ScoredSplit& s);
double brute_force_aupr(const ScoredSplit& s);

struct ReportRow {
    std::string id_dataset;
    std::string ood_dataset;
    std::string detector;
    std::string phase;  // "before" / "after" / "eval"
    double auroc = 0.0;
    double aupr = 0.0;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    double id_accuracy = 0.0;
};

}  // namespace mim::eval
