#include "core/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mim::eval {

namespace {

void check_split(const ScoredSplit& s, const char* op) {
    if (s.id_scores.empty() || s.ood_scores.empty()) {
        throw ContractError(std::string(op) + ": both score sets must be nonempty");
    }
    for (double v : s.id_scores) {
        if (std::isnan(v)) throw ContractError(std::string(op) + ": NaN in id scores");
    }
    for (double v : s.ood_scores) {
        if (std::isnan(v)) throw ContractError(std::string(op) + ": NaN in ood scores");
    }
}

}  // namespace

double auroc(const ScoredSplit& s) {
    check_split(s, "auroc");
    const std::size_t n = s.id_scores.size(), m = s.ood_scores.size();
    // Combined sort; midranks for tied values; Mann-Whitney U from ID rank sum.
    struct Entry {
        double score;
        bool is_id;
    };
    std::vector<Entry> all;
    all.reserve(n + m);
    for (double v : s.id_scores) all.push_back({v, true});
    for (double v : s.ood_scores) all.push_back({v, false});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });

    double id_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].is_id) id_rank_sum += midrank;
        }
        i = j;
    }
    const double u = id_rank_sum - 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);
    return u / (static_cast<double>(n) * static_cast<double>(m));
}

double aupr(const ScoredSplit& s) {
    check_split(s, "aupr");
    const std::size_t n = s.id_scores.size(), m = s.ood_scores.size();
    struct Entry {
        double score;
        bool is_id;
    };
    std::vector<Entry> all;
    all.reserve(n + m);
    for (double v : s.id_scores) all.push_back({v, true});
    for (double v : s.ood_scores) all.push_back({v, false});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.score > b.score; });

    double area = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].is_id) ++tp;
            else ++fp;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("accuracy: logits must be [N x C]");
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    if (labels.size() != N) throw ContractError("accuracy: label count mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < C; ++c) {
            if (logits.values()[i * C + c] > logits.values()[i * C + arg]) arg = c;
        }
        if (labels[i] >= 0 && static_cast<std::size_t>(labels[i]) == arg) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(N);
}

double brute_force_auroc(const ScoredSplit& s) {
    check_split(s, "brute_force_auroc");
    const std::size_t n = s.id_scores.size(), m = s.ood_scores.size();
    if (static_cast<double>(n) * static_cast<double>(m) > 1e6) {
        throw ContractError("brute_force_auroc: n*m guard exceeded");
    }
    double acc = 0.0;
    for (double a : s.id_scores)
        for (double b : s.ood_scores) {
            if (a > b) acc += 1.0;
            else if (a == b) acc += 0.5;
        }
    return acc / (static_cast<double>(n) * static_cast<double>(m));
}

double brute_force_aupr(const ScoredSplit& s) {
    check_split(s, "brute_force_aupr");
    const std::size_t n = s.id_scores.size(), m = s.ood_scores.size();
    if (static_cast<double>(n) * static_cast<double>(m) > 1e6) {
        throw ContractError("brute_force_aupr: n*m guard exceeded");
    }
    // Every distinct score is a threshold; sweep descending.
    std::vector<double> thresholds;
    thresholds.insert(thresholds.end(), s.id_scores.begin(), s.id_scores.end());
    thresholds.insert(thresholds.end(), s.ood_scores.begin(), s.ood_scores.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    double area = 0.0;
    double prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (double v : s.id_scores) {
            if (v >= t) ++tp;
        }
        for (double v : s.ood_scores) {
            if (v >= t) ++fp;
        }
        if (tp + fp == 0) continue;
        const double recall = static_cast<double>(tp) / static_cast<double>(n);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

}  // namespace mim::eval
