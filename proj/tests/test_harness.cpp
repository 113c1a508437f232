#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "es/errors.hpp"
#include "es/harness.hpp"
#include "oracles.hpp"

using namespace es;

namespace {

CandidateRecord make_record(const std::string& problem, int index, const std::string& answer,
                            std::optional<double> reward) {
    CandidateRecord r;
    r.problem_id = problem;
    r.sample_index = index;
    r.answer = answer;
    r.reward_score = reward;
    r.strategy = "s";
    return r;
}

SimilarityMatrix constant_matrix(int n, int value) {
    SimilarityMatrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) m.at(i, j) = value;
    return m;
}

}  // namespace

TEST_CASE("pass_at_k endpoints and hand case") {
    for (int k = 1; k <= 6; ++k) {
        CHECK(pass_at_k(6, 0, k) == 0.0);
        CHECK(pass_at_k(6, 6, k) == 1.0);
    }
    CHECK(pass_at_k(4, 2, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(pass_at_k(4, 2, 2) == oracles::pass_at_k_enumerated(4, 2, 2));

    CHECK_THROWS_AS(pass_at_k(4, 5, 2), InvalidInput);
    CHECK_THROWS_AS(pass_at_k(4, -1, 2), InvalidInput);
    CHECK_THROWS_AS(pass_at_k(4, 2, 0), InvalidInput);
    CHECK_THROWS_AS(pass_at_k(4, 2, 5), InvalidInput);
}

TEST_CASE("pass_at_k equals exhaustive enumeration for all n <= 10") {
    for (int n = 1; n <= 10; ++n) {
        for (int c = 0; c <= n; ++c) {
            for (int k = 1; k <= n; ++k) {
                CHECK(pass_at_k(n, c, k) == oracles::pass_at_k_enumerated(n, c, k));
            }
        }
    }
}

TEST_CASE("pass_at_k agrees with Monte Carlo") {
    Rng rng(2025);
    const int triples[][3] = {{8, 3, 2}, {10, 4, 5}, {6, 1, 3}, {9, 7, 2}};
    for (const auto& t : triples) {
        const double mc = oracles::pass_at_k_monte_carlo(t[0], t[1], t[2], 200000, rng);
        CHECK(std::abs(pass_at_k(t[0], t[1], t[2]) - mc) < 0.005);
    }
}

TEST_CASE("pass_at_k survives large n without overflow") {
    const double p = pass_at_k(100000, 50, 1000);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    // pass@1 for huge n is c/n.
    CHECK(pass_at_k(100000, 50, 1) == doctest::Approx(50.0 / 100000.0).epsilon(1e-9));
}

TEST_CASE("pass_at_k_grid is powers of two") {
    CHECK(pass_at_k_grid(32) == std::vector<int>{1, 2, 4, 8, 16, 32});
    CHECK(pass_at_k_grid(5) == std::vector<int>{1, 2, 4});
}

TEST_CASE("best_of_n argmax and ties") {
    CandidateSet set;
    set.problem_id = "p";
    set.records = {make_record("p", 0, "a", 0.2), make_record("p", 1, "b", 0.9),
                   make_record("p", 2, "c", 0.5)};
    CHECK(best_of_n(set).sample_index == 1);

    CandidateSet tie;
    tie.records = {make_record("p", 0, "a", 0.5), make_record("p", 1, "b", 0.5),
                   make_record("p", 2, "c", 0.5)};
    CHECK(best_of_n(tie).sample_index == 0);

    CandidateSet single;
    single.records = {make_record("p", 3, "only", 0.1)};
    CHECK(best_of_n(single).sample_index == 3);

    CandidateSet missing;
    missing.records = {make_record("p", 0, "a", std::nullopt)};
    CHECK_THROWS_AS(best_of_n(missing), InvalidInput);
    CHECK_THROWS_AS(best_of_n(CandidateSet{}), InvalidInput);
}

TEST_CASE("best_of_n is invariant under positive affine reward transforms") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        CandidateSet set;
        const int n = 2 + static_cast<int>(rng.next_u64() % 10);
        for (int i = 0; i < n; ++i) set.records.push_back(make_record("p", i, "a", rng.uniform01()));
        const int base = best_of_n(set).sample_index;

        const double scale = rng.uniform(0.1, 5.0);
        const double shift = rng.uniform(-10.0, 10.0);
        CandidateSet transformed = set;
        for (auto& r : transformed.records) r.reward_score = scale * *r.reward_score + shift;
        CHECK(best_of_n(transformed).sample_index == base);
    }
}

TEST_CASE("weighted_majority_vote grouping and ties") {
    CandidateSet set;
    set.records = {make_record("p", 0, "A", 0.9), make_record("p", 1, "A", 0.5),
                   make_record("p", 2, "B", 0.8)};
    CHECK(weighted_majority_vote(set) == "B");  // means: A 0.7, B 0.8

    CandidateSet same;
    same.records = {make_record("p", 0, "X", 0.1), make_record("p", 1, "X", 0.9)};
    CHECK(weighted_majority_vote(same) == "X");

    CandidateSet tie;
    tie.records = {make_record("p", 0, "A", 0.6), make_record("p", 1, "B", 0.6)};
    CHECK(weighted_majority_vote(tie) == "A");  // mean and size tie -> lexicographic

    CandidateSet size_tie;
    size_tie.records = {make_record("p", 0, "B", 0.6), make_record("p", 1, "B", 0.6),
                        make_record("p", 2, "A", 0.6)};
    CHECK(weighted_majority_vote(size_tie) == "B");  // mean ties, B has the larger group

    CandidateSet missing;
    missing.records = {make_record("p", 0, "A", std::nullopt)};
    CHECK_THROWS_AS(weighted_majority_vote(missing), InvalidInput);
}

TEST_CASE("weighted_majority_vote is permutation-invariant") {
    Rng rng(23);
    CandidateSet set;
    const char* answers[] = {"alpha", "beta", "gamma"};
    for (int i = 0; i < 12; ++i)
        set.records.push_back(make_record("p", i, answers[rng.next_u64() % 3], rng.uniform01()));
    const std::string expected = weighted_majority_vote(set);

    for (int shuffle = 0; shuffle < 20; ++shuffle) {
        for (size_t i = set.records.size(); i > 1; --i)
            std::swap(set.records[i - 1], set.records[rng.next_u64() % i]);
        CHECK(weighted_majority_vote(set) == expected);
    }
}

TEST_CASE("tier partition rules") {
    std::map<std::string, int> run5{{"a", 5}, {"b", 2}, {"c", 0}, {"d", 4}};
    std::map<std::string, int> run32{{"b", 3}, {"c", 0}};
    auto tiers = partition_tiers(run5, run32);
    CHECK(tiers["a"] == TierLabel::Correct);
    CHECK(tiers["b"] == TierLabel::Medium);
    CHECK(tiers["c"] == TierLabel::Hard);
    CHECK(tiers["d"] == TierLabel::Correct);

    CHECK_THROWS_AS(partition_tiers({{"x", 1}}, {}), InvalidInput);
    CHECK_THROWS_AS(partition_tiers({{"x", 9}}, {}), InvalidInput);
    CHECK_THROWS_AS(partition_tiers({{"x", 1}}, {{"x", 40}}), InvalidInput);
}

TEST_CASE("tier partition classifies a 30-problem fixture") {
    // Hand-labelled synthetic fixture: 10 per tier.
    std::map<std::string, int> run5, run32;
    std::map<std::string, TierLabel> expected;
    for (int i = 0; i < 10; ++i) {
        const std::string correct_id = "correct-" + std::to_string(i);
        run5[correct_id] = 4 + (i % 2);
        expected[correct_id] = TierLabel::Correct;

        const std::string medium_id = "medium-" + std::to_string(i);
        run5[medium_id] = i % 4;  // 0..3, below the 4-of-5 bar
        run32[medium_id] = 1 + (i % 7);
        expected[medium_id] = TierLabel::Medium;

        const std::string hard_id = "hard-" + std::to_string(i);
        run5[hard_id] = 0;
        run32[hard_id] = 0;
        expected[hard_id] = TierLabel::Hard;
    }
    auto tiers = partition_tiers(run5, run32);
    CHECK(tiers.size() == 30);
    int agree = 0;
    for (const auto& [id, tier] : expected) agree += tiers.at(id) == tier;
    CHECK(agree == 30);
}

TEST_CASE("diversity_score formula") {
    CHECK(diversity_score(constant_matrix(4, 5)) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(diversity_score(constant_matrix(4, 0)) == doctest::Approx(1.0).epsilon(1e-15));

    // N = 3, pairwise scores {5, 3, 1}: average 3, diversity 0.4.
    SimilarityMatrix m(3);
    m.at(0, 1) = m.at(1, 0) = 5;
    m.at(0, 2) = m.at(2, 0) = 3;
    m.at(1, 2) = m.at(2, 1) = 1;
    CHECK(diversity_score(m) == doctest::Approx(0.4).epsilon(1e-15));

    CHECK_THROWS_AS(diversity_score(SimilarityMatrix(1)), InvalidInput);
    SimilarityMatrix missing(3);
    missing.at(0, 1) = missing.at(1, 0) = 2;
    CHECK_THROWS_AS(diversity_score(missing), InvalidInput);
    SimilarityMatrix bad = constant_matrix(2, 5);
    bad.at(0, 1) = 6;
    CHECK_THROWS_AS(diversity_score(bad), InvalidInput);
}

TEST_CASE("diversity_score is invariant under simultaneous permutation") {
    Rng rng(29);
    const int n = 6;
    SimilarityMatrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) m.at(i, j) = static_cast<int>(rng.next_u64() % 6);
    const double base = diversity_score(m);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 20; ++trial) {
        for (size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[rng.next_u64() % i]);
        SimilarityMatrix permuted(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) permuted.at(perm[i], perm[j]) = m.at(i, j);
        CHECK(diversity_score(permuted) == doctest::Approx(base).epsilon(1e-15));
    }
}

TEST_CASE("similarity csv: mirroring and round trip") {
    std::istringstream triangle(
        "-1,4,2\n"
        ",,1\n"
        ",,\n");
    auto m = read_similarity_csv(triangle);
    CHECK(m.size == 3);
    CHECK(m.at(0, 1) == 4);
    CHECK(m.at(1, 0) == 4);
    CHECK(m.at(2, 0) == 2);
    CHECK(m.at(1, 2) == 1);
    CHECK(m.at(2, 1) == 1);

    std::ostringstream out;
    write_similarity_csv(m, out);
    std::istringstream back(out.str());
    auto m2 = read_similarity_csv(back);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) CHECK(m2.at(i, j) == m.at(i, j));

    std::istringstream ragged("1,2\n3\n");
    CHECK_THROWS_AS(read_similarity_csv(ragged), InvalidInput);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_similarity_csv(empty), InvalidInput);
}

TEST_CASE("random reward provider is deterministic") {
    CandidateSet set;
    set.records = {make_record("p", 0, "a", std::nullopt), make_record("p", 1, "b", std::nullopt)};
    assign_random_rewards(set, 7);
    CandidateSet again = set;
    for (auto& r : again.records) r.reward_score.reset();
    assign_random_rewards(again, 7);
    for (size_t i = 0; i < set.records.size(); ++i) {
        CHECK(*set.records[i].reward_score == *again.records[i].reward_score);
        CHECK(*set.records[i].reward_score >= 0.0);
        CHECK(*set.records[i].reward_score < 1.0);
    }
}
