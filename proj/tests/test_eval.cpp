#include "core/eval.hpp"

#include <cmath>

#include "core/rng.hpp"
#include "doctest.h"

using namespace mim;
using namespace mim::eval;

TEST_CASE("auroc on small hand-worked splits") {
    // perfect separation
    CHECK(auroc({{3, 4, 5}, {0, 1, 2}}) == doctest::Approx(1.0));
    // perfectly wrong
    CHECK(auroc({{0, 1, 2}, {3, 4, 5}}) == doctest::Approx(0.0));
    // one inversion among 2x2 pairs: 3 wins, 1 loss -> 0.75
    CHECK(auroc({{2, 4}, {1, 3}}) == doctest::Approx(0.75));
    // all scores identical: every pair ties -> 0.5
    CHECK(auroc({{1, 1, 1}, {1, 1}}) == doctest::Approx(0.5));
    // a single tied pair counts half: pairs (2>1), (2=2) -> (1 + 0.5)/2
    CHECK(auroc({{2}, {1, 2}}) == doctest::Approx(0.75));
}

TEST_CASE("aupr on small hand-worked splits") {
    // perfect separation: precision 1 at every recall level
    CHECK(aupr({{3, 4}, {0, 1}}) == doctest::Approx(1.0));
    // descending thresholds over scores {id:2, ood:3}: the top score is OOD
    // recall steps once, at precision 1/2
    CHECK(aupr({{2}, {3}}) == doctest::Approx(0.5));
    // worked example: id {3, 1}, ood {2}
    // t=3: P=1, R=0.5 (+0.5); t=2: no new positive; t=1: P=2/3, R=1 (+0.5*2/3)
    CHECK(aupr({{3, 1}, {2}}) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
}

TEST_CASE("metric oracles agree on random splits") {
    Rng rng(99);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0.0, 30.0));
        const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform(0.0, 30.0));
        ScoredSplit s;
        for (std::size_t i = 0; i < n; ++i)
            s.id_scores.push_back(std::floor(rng.uniform(-5.0, 5.0)) / 2.0);  // force ties
        for (std::size_t i = 0; i < m; ++i)
            s.ood_scores.push_back(std::floor(rng.uniform(-5.0, 5.0)) / 2.0);
        CHECK(auroc(s) == doctest::Approx(brute_force_auroc(s)).epsilon(1e-9));
        CHECK(aupr(s) == doctest::Approx(brute_force_aupr(s)).epsilon(1e-9));
    }
}

TEST_CASE("auroc properties") {
    Rng rng(7);
    ScoredSplit s;
    for (int i = 0; i < 40; ++i) s.id_scores.push_back(rng.normal() + 0.8);
    for (int i = 0; i < 25; ++i) s.ood_scores.push_back(rng.normal());
    const double base = auroc(s);
    CHECK(base > 0.5);

    // swapping the splits complements the area
    CHECK(auroc({s.ood_scores, s.id_scores}) == doctest::Approx(1.0 - base).epsilon(1e-12));

    // invariant under any strictly increasing transform
    ScoredSplit warped = s;
    for (auto& v : warped.id_scores) v = v * v * v + v;
    for (auto& v : warped.ood_scores) v = v * v * v + v;
    CHECK(auroc(warped) == doctest::Approx(base).epsilon(1e-12));

    // negating scores flips the ranking
    ScoredSplit neg = s;
    for (auto& v : neg.id_scores) v = -v;
    for (auto& v : neg.ood_scores) v = -v;
    CHECK(auroc(neg) == doctest::Approx(1.0 - base).epsilon(1e-12));
}

TEST_CASE("aupr properties") {
    Rng rng(8);
    ScoredSplit s;
    for (int i = 0; i < 30; ++i) s.id_scores.push_back(rng.normal() + 1.0);
    for (int i = 0; i < 60; ++i) s.ood_scores.push_back(rng.normal());

    const double a = aupr(s);
    const double prevalence = 30.0 / 90.0;
    CHECK(a >= prevalence - 1e-12);  // random ranking floors at the positive rate
    CHECK(a <= 1.0 + 1e-12);

    // monotone transforms do not change the curve
    ScoredSplit warped = s;
    for (auto& v : warped.id_scores) v = std::exp(v);
    for (auto& v : warped.ood_scores) v = std::exp(v);
    CHECK(aupr(warped) == doctest::Approx(a).epsilon(1e-12));

    // constant scores: a single threshold admits everything
    CHECK(aupr({{2, 2, 2}, {2, 2, 2, 2, 2, 2}}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(auroc({{2, 2, 2}, {2, 2, 2, 2, 2, 2}}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(auroc({{}, {1.0}}), ContractError);
    CHECK_THROWS_AS(auroc({{1.0}, {}}), ContractError);
    CHECK_THROWS_AS(aupr({{}, {1.0}}), ContractError);
    CHECK_THROWS_AS(brute_force_aupr({{1.0}, {}}), ContractError);
}

TEST_CASE("accuracy") {
    auto logits = Tensor::from_data({4, 3},
                                    {
                                        5, 1, 1,  // -> 0
                                        0, 2, 1,  // -> 1
                                        3, 3, 0,  // tie -> lowest index 0
                                        0, 0, 9,  // -> 2
                                    });
    CHECK(accuracy(logits, {0, 1, 0, 2}) == doctest::Approx(1.0));
    CHECK(accuracy(logits, {0, 1, 1, 2}) == doctest::Approx(0.75));
    CHECK(accuracy(logits, {1, 0, 2, 0}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(accuracy(logits, {0, 1}), ContractError);
}
