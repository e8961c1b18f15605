#include "core/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/nn.hpp"

namespace mim::detect {

namespace {

void check_logits(const Tensor& logits, const char* op) {
    if (logits.rank() != 2 || logits.shape()[1] < 2) {
        throw ShapeError(std::string(op) + ": logits must be [N x C] with C >= 2, got " +
                         shape_str(logits.shape()));
    }
}

}  // namespace

std::vector<double> score_msp(const Tensor& logits) {
    check_logits(logits, "score_msp");
    const Tensor probs = nn::softmax(logits);
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        double best = probs.values()[i * C];
        for (std::size_t c = 1; c < C; ++c) best = std::max(best, probs.values()[i * C + c]);
        out[i] = best;
    }
    return out;
}

std::vector<double> score_max_logit(const Tensor& logits) {
    check_logits(logits, "score_max_logit");
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        double best = logits.values()[i * C];
        for (std::size_t c = 1; c < C; ++c) best = std::max(best, logits.values()[i * C + c]);
        out[i] = best;
    }
    return out;
}

std::vector<double> score_energy(const Tensor& logits, double temperature) {
    check_logits(logits, "score_energy");
    if (temperature <= 0.0) throw ConfigError("score_energy: temperature must be positive");
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < C; ++c) {
            mx = std::max(mx, logits.values()[i * C + c] / temperature);
        }
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            acc += std::exp(logits.values()[i * C + c] / temperature - mx);
        }
        out[i] = temperature * (mx + std::log(acc));
    }
    return out;
}

std::vector<double> score_entropy(const Tensor& logits) {
    check_logits(logits, "score_entropy");
    const Tensor probs = nn::softmax(logits);
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;  // sum p ln p == -H, higher is more ID
        for (std::size_t c = 0; c < C; ++c) {
            const double p = probs.values()[i * C + c];
            if (p > 0.0) acc += p * std::log(p);
        }
        out[i] = acc;
    }
    return out;
}

// --- KL-Matching -----------------------------------------------------------

KlTemplates fit_kl_matching(const Tensor& probs) {
    check_logits(probs, "fit_kl_matching");
    const std::size_t N = probs.shape()[0], C = probs.shape()[1];
    std::vector<std::vector<double>> sums(C, std::vector<double>(C, 0.0));
    std::vector<std::size_t> counts(C, 0);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < C; ++c) {
            if (probs.values()[i * C + c] > probs.values()[i * C + arg]) arg = c;
        }
        counts[arg]++;
        for (std::size_t c = 0; c < C; ++c) sums[arg][c] += probs.values()[i * C + c];
    }
    KlTemplates t;
    t.class_templates.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) {
            throw DataError("fit_kl_matching: no fitting sample predicted as class " +
                            std::to_string(c));
        }
        t.class_templates[c].resize(C);
        for (std::size_t j = 0; j < C; ++j) {
            t.class_templates[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
    }
    return t;
}

std::vector<double> score_kl(const KlTemplates& templates, const Tensor& probs) {
    check_logits(probs, "score_kl");
    const std::size_t N = probs.shape()[0], C = probs.shape()[1];
    if (templates.class_templates.size() != C) {
        throw ContractError("score_kl: template width does not match probs");
    }
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : templates.class_templates) {
            double kl = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                const double p = probs.values()[i * C + c];
                if (p > 0.0) kl += p * std::log(p / std::max(q[c], 1e-12));
            }
            best = std::min(best, kl);
        }
        out[i] = -best;
    }
    return out;
}

// --- Mahalanobis -----------------------------------------------------------

namespace {

// Cholesky factorization A = L L^T; throws NumericError on non-PD input.
std::vector<double> cholesky(const std::vector<double>& a, std::size_t d) {
    std::vector<double> l(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * d + j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
            if (i == j) {
                if (s <= 0.0) {
                    throw NumericError(
                        "mahalanobis: covariance not positive definite even after "
                        "regularization (pivot " +
                        std::to_string(s) + ")");
                }
                l[i * d + i] = std::sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    return l;
}

// Inverse of SPD matrix from its Cholesky factor.
std::vector<double> spd_inverse(const std::vector<double>& l, std::size_t d) {
    // Solve L L^T X = I column by column.
    std::vector<double> inv(d * d, 0.0);
    std::vector<double> y(d), x(d);
    for (std::size_t col = 0; col < d; ++col) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = (i == col) ? 1.0 : 0.0;
            for (std::size_t k = 0; k < i; ++k) s -= l[i * d + k] * y[k];
            y[i] = s / l[i * d + i];
        }
        for (std::size_t ii = d; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < d; ++k) s -= l[k * d + ii] * x[k];
            x[ii] = s / l[ii * d + ii];
        }
        for (std::size_t i = 0; i < d; ++i) inv[i * d + col] = x[i];
    }
    // Symmetrize against round-off.
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double v = 0.5 * (inv[i * d + j] + inv[j * d + i]);
            inv[i * d + j] = inv[j * d + i] = v;
        }
    return inv;
}

}  // namespace

MahalanobisStats fit_mahalanobis(const Tensor& features, const std::vector<int>& labels,
                                 std::size_t num_classes) {
    if (features.rank() != 2) throw ShapeError("fit_mahalanobis: features must be [N x D]");
    const std::size_t N = features.shape()[0], D = features.shape()[1];
    if (labels.size() != N) throw ContractError("fit_mahalanobis: label count mismatch");

    MahalanobisStats st;
    st.dim = D;
    st.class_means.assign(num_classes, std::vector<double>(D, 0.0));
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < N; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ContractError("fit_mahalanobis: label out of range");
        }
        counts[y]++;
        for (std::size_t d = 0; d < D; ++d) st.class_means[y][d] += features.values()[i * D + d];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] < 2) {
            throw DataError("fit_mahalanobis: class " + std::to_string(c) +
                            " has fewer than 2 samples");
        }
        for (auto& v : st.class_means[c]) v /= static_cast<double>(counts[c]);
    }

    // Tied covariance of centered features.
    std::vector<double> cov(D * D, 0.0);
    std::vector<double> diff(D);
    for (std::size_t i = 0; i < N; ++i) {
        const auto& mu = st.class_means[labels[i]];
        for (std::size_t d = 0; d < D; ++d) diff[d] = features.values()[i * D + d] - mu[d];
        for (std::size_t a = 0; a < D; ++a)
            for (std::size_t b = 0; b <= a; ++b) cov[a * D + b] += diff[a] * diff[b];
    }
    double trace = 0.0;
    for (std::size_t a = 0; a < D; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
            cov[a * D + b] /= static_cast<double>(N);
            cov[b * D + a] = cov[a * D + b];
        }
        trace += cov[a * D + a];
    }
    st.epsilon = 1e-6 * trace / static_cast<double>(D);
    for (std::size_t a = 0; a < D; ++a) cov[a * D + a] += st.epsilon;

    st.shared_precision = spd_inverse(cholesky(cov, D), D);
    return st;
}

std::vector<double> score_mahalanobis(const MahalanobisStats& stats, const Tensor& features) {
    if (features.rank() != 2 || features.shape()[1] != stats.dim) {
        throw ShapeError("score_mahalanobis: features must be [N x " + std::to_string(stats.dim) +
                         "]");
    }
    const std::size_t N = features.shape()[0], D = stats.dim;
    std::vector<double> out(N);
    std::vector<double> diff(D);
    for (std::size_t i = 0; i < N; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& mu : stats.class_means) {
            for (std::size_t d = 0; d < D; ++d) diff[d] = features.values()[i * D + d] - mu[d];
            double dist = 0.0;
            for (std::size_t a = 0; a < D; ++a) {
                double row = 0.0;
                for (std::size_t b = 0; b < D; ++b) row += stats.shared_precision[a * D + b] * diff[b];
                dist += diff[a] * row;
            }
            best = std::min(best, dist);
        }
        out[i] = -best;
    }
    return out;
}

// --- Detector interface ----------------------------------------------------

namespace {

class LogitDetector final : public Detector {
public:
    enum class Kind { Msp, MaxLogit, Energy, Entropy };
    LogitDetector(Kind kind, std::string name, double temperature)
        : kind_(kind), name_(std::move(name)), temperature_(temperature) {}
    const std::string& name() const override { return name_; }
    std::vector<double> score(const Tensor& logits, const Tensor&) const override {
        switch (kind_) {
            case Kind::Msp: return score_msp(logits);
            case Kind::MaxLogit: return score_max_logit(logits);
            case Kind::Energy: return score_energy(logits, temperature_);
            case Kind::Entropy: return score_entropy(logits);
        }
        throw ContractError("unknown logit detector kind");
    }

private:
    Kind kind_;
    std::string name_;
    double temperature_;
};

class KlMatchingDetector final : public Detector {
public:
    const std::string& name() const override { return name_; }
    bool needs_fit() const override { return true; }
    void fit(const Tensor& logits, const Tensor&, const std::vector<int>&, std::size_t) override {
        templates_ = fit_kl_matching(nn::softmax(logits));
        fitted_ = true;
    }
    std::vector<double> score(const Tensor& logits, const Tensor&) const override {
        if (!fitted_) throw ContractError("kl_matching: score before fit");
        return score_kl(templates_, nn::softmax(logits));
    }

private:
    std::string name_ = "kl_matching";
    KlTemplates templates_;
    bool fitted_ = false;
};

class MahalanobisDetector final : public Detector {
public:
    const std::string& name() const override { return name_; }
    bool needs_fit() const override { return true; }
    void fit(const Tensor&, const Tensor& features, const std::vector<int>& labels,
             std::size_t num_classes) override {
        stats_ = fit_mahalanobis(features, labels, num_classes);
        fitted_ = true;
    }
    std::vector<double> score(const Tensor&, const Tensor& features) const override {
        if (!fitted_) throw ContractError("mahalanobis: score before fit");
        return score_mahalanobis(stats_, features);
    }

private:
    std::string name_ = "mahalanobis";
    MahalanobisStats stats_;
    bool fitted_ = false;
};

}  // namespace

std::unique_ptr<Detector> make_detector(const std::string& kind, double energy_temperature) {
    using K = LogitDetector::Kind;
    if (kind == "msp") return std::make_unique<LogitDetector>(K::Msp, kind, 1.0);
    if (kind == "max_logit") return std::make_unique<LogitDetector>(K::MaxLogit, kind, 1.0);
    if (kind == "energy") {
        if (energy_temperature <= 0.0) throw ConfigError("energy: temperature must be positive");
        return std::make_unique<LogitDetector>(K::Energy, kind, energy_temperature);
    }
    if (kind == "entropy") return std::make_unique<LogitDetector>(K::Entropy, kind, 1.0);
    if (kind == "kl_matching") return std::make_unique<KlMatchingDetector>();
    if (kind == "mahalanobis") return std::make_unique<MahalanobisDetector>();
    throw ConfigError("unknown detector kind '" + kind + "'");
}

}  // namespace mim::detect
