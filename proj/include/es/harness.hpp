#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace es {

// One generated solution for a problem.
struct CandidateRecord {
    std::string problem_id;
    int sample_index = 0;
    std::string answer;
    std::optional<double> reward_score;
    bool correct = false;
    std::optional<std::string> text;
    std::string strategy;
    uint64_t seed = 0;
};

struct CandidateSet {
    std::string problem_id;
    std::vector<CandidateRecord> records;
};

// Unbiased pass@k estimator: 1 - C(n-c, k)/C(n, k). Small cases are evaluated
// with exact integer arithmetic; larger ones fall back to a log-space product.
double pass_at_k(int n, int c, int k);

// Powers of two up to and including n.
std::vector<int> pass_at_k_grid(int n);

// Highest reward score wins; ties go to the lower sample_index.
CandidateRecord best_of_n(const CandidateSet& set);

// Group records by exact answer string, average reward per group, return the
// answer with the highest mean. Ties: larger group, then lexicographically
// smaller answer.
std::string weighted_majority_vote(const CandidateSet& set);

enum class TierLabel { Correct, Medium, Hard };

std::string to_string(TierLabel tier);

// Difficulty tiers from per-problem correct counts: Correct when c5 >= 4 of 5,
// else Medium when c32 >= 1 of 32, else Hard. run32 entries are required for
// every problem the 5-run screen leaves uncertain.
std::map<std::string, TierLabel> partition_tiers(const std::map<std::string, int>& run5_correct,
                                                 const std::map<std::string, int>& run32_correct);

// Pairwise similarity scores in {0..5}; -1 marks a missing pair. Diagonal is
// ignored.
struct SimilarityMatrix {
    int size = 0;
    std::vector<int> scores;

    explicit SimilarityMatrix(int n = 0) : size(n), scores(static_cast<size_t>(n) * n, -1) {}
    int& at(int i, int j) { return scores[static_cast<size_t>(i) * size + j]; }
    int at(int i, int j) const { return scores[static_cast<size_t>(i) * size + j]; }
};

// 1 - mean(off-diagonal)/5. Throws InvalidInput when n < 2 or any off-diagonal
// entry is missing or out of range.
double diversity_score(const SimilarityMatrix& m);

// CSV of size x size integers; diagonal cells may be empty or -1. When only
// one triangle is supplied the loader mirrors it.
SimilarityMatrix read_similarity_csv(std::istream& is);
void write_similarity_csv(const SimilarityMatrix& m, std::ostream& os);

// Deterministic uniform [0,1) reward scores for pipeline tests; no real
// reward model is bundled.
void assign_random_rewards(CandidateSet& set, uint64_t seed);

}  // namespace es
