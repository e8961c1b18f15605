#include "core/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/nn.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace mim;
using namespace mim::detect;
using mim::testing::random_tensor;

namespace {

std::vector<std::size_t> ranking(const std::vector<double>& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    return idx;
}

}  // namespace

TEST_CASE("msp") {
    auto s = score_msp(Tensor::from_data({2, 3}, {10, 0, 0, 1, 1, 1}));
    const double e10 = std::exp(10.0);
    CHECK(s[0] == doctest::Approx(e10 / (e10 + 2.0)).epsilon(1e-10));
    CHECK(s[0] == doctest::Approx(0.9999092).epsilon(1e-6));
    CHECK(s[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // confident rows outrank uncertain ones
    CHECK(s[0] > s[1]);
}

TEST_CASE("max_logit") {
    auto s = score_max_logit(Tensor::from_data({2, 3}, {1, 2, 3, -5, -1, -2}));
    CHECK(s[0] == 3.0);
    CHECK(s[1] == -1.0);
}

TEST_CASE("energy") {
    auto s = score_energy(Tensor::from_data({1, 3}, {1, 2, 3}));
    CHECK(s[0] == doctest::Approx(3.407606).epsilon(1e-5));

    // overflow-safe on extreme logits
    auto big = score_energy(Tensor::from_data({1, 2}, {1000, 0}));
    CHECK(big[0] == doctest::Approx(1000.0).epsilon(1e-12));

    // T * lse(z/T) tends to T ln C + mean(z) for large T
    const double T = 1e6;
    auto hot = score_energy(Tensor::from_data({1, 4}, {1, 2, 3, 4}), T);
    CHECK(hot[0] == doctest::Approx(T * std::log(4.0) + 2.5).epsilon(1e-9));

    CHECK_THROWS_AS(score_energy(Tensor::zeros({1, 2}), 0.0), ConfigError);
}

TEST_CASE("entropy") {
    auto s = score_entropy(Tensor::from_data({2, 4}, {2, 2, 2, 2, 0, 0, 0, 30}));
    CHECK(s[0] == doctest::Approx(-std::log(4.0)).epsilon(1e-12));  // uniform: -H = -ln C
    CHECK(s[1] == doctest::Approx(0.0).epsilon(1e-9));              // one-hot: -H = 0

    auto t = score_entropy(Tensor::from_data({1, 3}, {1, 2, 3}));
    CHECK(t[0] == doctest::Approx(-0.832396).epsilon(1e-5));
}

TEST_CASE("binary detectors agree on ranking") {
    // symmetric two-class logits [g, -g]: every score is monotone in g
    std::vector<double> gaps = {-3.0, 0.2, 1.5, -0.7, 4.0, 0.0};
    std::vector<double> z;
    for (double g : gaps) {
        z.push_back(g);
        z.push_back(-g);
    }
    auto logits = Tensor::from_data({gaps.size(), 2}, z);
    std::vector<double> mag;
    for (double g : gaps) mag.push_back(std::fabs(g));
    const auto want = ranking(mag);
    CHECK(ranking(score_msp(logits)) == want);
    CHECK(ranking(score_max_logit(logits)) == want);
    CHECK(ranking(score_energy(logits)) == want);
    CHECK(ranking(score_entropy(logits)) == want);
}

TEST_CASE("kl matching") {
    auto probs = Tensor::from_data({4, 2}, {0.9, 0.1, 0.8, 0.2, 0.2, 0.8, 0.1, 0.9});
    auto t = fit_kl_matching(probs);
    REQUIRE(t.class_templates.size() == 2);
    CHECK(t.class_templates[0][0] == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(t.class_templates[1][1] == doctest::Approx(0.85).epsilon(1e-12));

    // a probe equal to a template scores 0 (KL = 0 at the matching template)
    auto s = score_kl(t, Tensor::from_data({2, 2}, {0.85, 0.15, 0.5, 0.5}));
    CHECK(s[0] == doctest::Approx(0.0).epsilon(1e-12));
    const double kl_uniform =
        0.5 * std::log(0.5 / 0.85) + 0.5 * std::log(0.5 / 0.15);
    CHECK(s[1] == doctest::Approx(-kl_uniform).epsilon(1e-12));
    CHECK(s[0] > s[1]);  // template-like row looks more in-distribution

    // every fitting sample predicted as class 0: class 1 has no template
    auto lop = Tensor::from_data({2, 2}, {0.9, 0.1, 0.7, 0.3});
    CHECK_THROWS_AS(fit_kl_matching(lop), DataError);
}

TEST_CASE("mahalanobis: hand-checkable geometry") {
    // two classes, four points each in a cross around the mean;
    // tied covariance is 0.5 * I, so distances are 2 * squared euclidean
    std::vector<double> f;
    std::vector<int> y;
    for (double cx : {0.0, 10.0}) {
        for (auto [dx, dy] : {std::pair{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}) {
            f.push_back(cx + dx);
            f.push_back(dy);
            y.push_back(cx == 0.0 ? 0 : 1);
        }
    }
    auto feats = Tensor::from_data({8, 2}, f);
    auto st = fit_mahalanobis(feats, y, 2);
    CHECK(st.dim == 2);
    CHECK(st.class_means[0][0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(st.class_means[1][0] == doctest::Approx(10.0).epsilon(1e-12));

    auto s = score_mahalanobis(st, Tensor::from_data({3, 2}, {0, 0, 1, 1, 2, 2}));
    CHECK(s[0] == doctest::Approx(0.0).epsilon(1e-9));    // exactly at a mean
    CHECK(s[1] == doctest::Approx(-4.0).epsilon(1e-4));   // 2 * (1 + 1)
    CHECK(s[2] == doctest::Approx(-16.0).epsilon(1e-4));  // 2 * (4 + 4)
    CHECK(s[0] > s[1]);
    CHECK(s[1] > s[2]);

    CHECK_THROWS_AS(score_mahalanobis(st, Tensor::zeros({1, 3})), ShapeError);
    CHECK_THROWS_AS(fit_mahalanobis(feats, std::vector<int>(8, 0), 2), DataError);
}

TEST_CASE("mahalanobis: invariant under rotation of feature space") {
    Rng rng(13);
    const std::size_t n = 40, d = 2;
    std::vector<double> f;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % 2);
        f.push_back((c == 0 ? -2.0 : 2.0) + rng.normal());
        f.push_back(0.5 * rng.normal());
        y.push_back(c);
    }
    auto feats = Tensor::from_data({n, d}, f);
    auto probes = random_tensor({5, d}, rng, false, -3.0, 3.0);
    auto base = score_mahalanobis(fit_mahalanobis(feats, y, 2), probes);

    const double a = 0.6;  // rotate everything by a fixed angle and refit
    const auto rot = [&](const std::vector<double>& v) {
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size() / 2; ++i) {
            out[2 * i] = std::cos(a) * v[2 * i] - std::sin(a) * v[2 * i + 1];
            out[2 * i + 1] = std::sin(a) * v[2 * i] + std::cos(a) * v[2 * i + 1];
        }
        return out;
    };
    auto turned = score_mahalanobis(fit_mahalanobis(Tensor::from_data({n, d}, rot(f)), y, 2),
                                    Tensor::from_data({5, d}, rot(probes.values())));
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(turned[i] == doctest::Approx(base[i]).epsilon(1e-6));
}

TEST_CASE("detector interface") {
    Rng rng(17);
    auto logits = random_tensor({12, 3}, rng, false, -4.0, 4.0);
    auto feats = random_tensor({12, 5}, rng, false, -1.0, 1.0);
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) labels.push_back(i % 3);

    for (const char* kind : {"msp", "max_logit", "energy", "entropy"}) {
        auto d = make_detector(kind);
        CHECK(d->name() == kind);
        CHECK_FALSE(d->needs_fit());
        CHECK(d->score(logits, feats).size() == 12);
    }
    for (const char* kind : {"kl_matching", "mahalanobis"}) {
        auto d = make_detector(kind);
        CHECK(d->needs_fit());
        CHECK_THROWS_AS(d->score(logits, feats), ContractError);
        d->fit(logits, feats, labels, 3);
        CHECK(d->score(logits, feats).size() == 12);
    }

    CHECK_THROWS_AS(make_detector("svm"), ConfigError);
    CHECK_THROWS_AS(make_detector("energy", -1.0), ConfigError);
}

TEST_CASE("scores are permutation-equivariant") {
    Rng rng(19);
    auto logits = random_tensor({9, 4}, rng, false, -3.0, 3.0);
    auto feats = random_tensor({9, 3}, rng, false, -1.0, 1.0);
    std::vector<int> labels = {0, 1, 2, 3, 0, 1, 2, 3, 0};
    // make row i predict class labels[i] so every class gets a template
    for (std::size_t i = 0; i < 9; ++i)
        logits.values()[i * 4 + static_cast<std::size_t>(labels[i])] += 10.0;

    // reversed copies of the same rows
    std::vector<double> rl(logits.values().rbegin(), logits.values().rend());
    std::vector<double> rlog;
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t c = 0; c < 4; ++c) rlog.push_back(logits.values()[(8 - i) * 4 + c]);
    std::vector<double> rfeat;
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t c = 0; c < 3; ++c) rfeat.push_back(feats.values()[(8 - i) * 3 + c]);
    auto logits_r = Tensor::from_data({9, 4}, rlog);
    auto feats_r = Tensor::from_data({9, 3}, rfeat);

    for (const char* kind : {"msp", "max_logit", "energy", "entropy", "kl_matching", "mahalanobis"}) {
        auto d = make_detector(kind);
        if (d->needs_fit()) d->fit(logits, feats, labels, 4);
        auto a = d->score(logits, feats);
        auto b = d->score(logits_r, feats_r);
        for (std::size_t i = 0; i < 9; ++i) CHECK(a[i] == doctest::Approx(b[8 - i]).epsilon(1e-12));
    }
}
