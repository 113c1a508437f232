#include "es/harness.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "es/errors.hpp"
#include "es/numeric.hpp"
#include "es/rng.hpp"

namespace es {

double pass_at_k(int n, int c, int k) {
    if (n < 1 || c < 0 || c > n) throw InvalidInput("pass_at_k: need 0 <= c <= n, n >= 1");
    if (k < 1 || k > n) throw InvalidInput("pass_at_k: need 1 <= k <= n");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;

    // P(all k picks incorrect) = prod_{i=0}^{k-1} (n-c-i)/(n-i). Keep the
    // numerator and denominator as exact integers while they fit so that small
    // cases match subset enumeration bit for bit.
    uint64_t num = 1, den = 1;
    bool exact = true;
    for (int i = 0; i < k; ++i) {
        const uint64_t a = static_cast<uint64_t>(n - c - i);
        const uint64_t b = static_cast<uint64_t>(n - i);
        if (num > UINT64_MAX / a || den > UINT64_MAX / b) {
            exact = false;
            break;
        }
        num *= a;
        den *= b;
    }
    if (exact) return 1.0 - static_cast<double>(num) / static_cast<double>(den);

    double log_fail = 0.0;
    for (int i = 0; i < k; ++i)
        log_fail += std::log(static_cast<double>(n - c - i)) - std::log(static_cast<double>(n - i));
    return 1.0 - std::exp(log_fail);
}

std::vector<int> pass_at_k_grid(int n) {
    std::vector<int> ks;
    for (int k = 1; k <= n; k *= 2) ks.push_back(k);
    return ks;
}

CandidateRecord best_of_n(const CandidateSet& set) {
    if (set.records.empty()) throw InvalidInput("best_of_n: empty candidate set");
    const CandidateRecord* best = nullptr;
    for (const CandidateRecord& r : set.records) {
        if (!r.reward_score) throw InvalidInput("best_of_n: record without reward_score");
        if (!best || *r.reward_score > *best->reward_score ||
            (*r.reward_score == *best->reward_score && r.sample_index < best->sample_index)) {
            best = &r;
        }
    }
    return *best;
}

std::string weighted_majority_vote(const CandidateSet& set) {
    if (set.records.empty()) throw InvalidInput("weighted_majority_vote: empty candidate set");
    struct Group {
        double sum = 0.0;
        int count = 0;
    };
    std::map<std::string, Group> groups;
    for (const CandidateRecord& r : set.records) {
        if (!r.reward_score) throw InvalidInput("weighted_majority_vote: record without reward_score");
        if (r.answer.empty()) throw InvalidInput("weighted_majority_vote: record without answer");
        Group& g = groups[r.answer];
        g.sum += *r.reward_score;
        g.count += 1;
    }
    // std::map iterates answers in lexicographic order, so with strict
    // comparisons below the final tie level is resolved for free.
    const std::string* winner = nullptr;
    double best_mean = 0.0;
    int best_count = 0;
    for (const auto& [answer, g] : groups) {
        const double mean = g.sum / g.count;
        if (!winner || mean > best_mean || (mean == best_mean && g.count > best_count)) {
            winner = &answer;
            best_mean = mean;
            best_count = g.count;
        }
    }
    return *winner;
}

std::string to_string(TierLabel tier) {
    switch (tier) {
        case TierLabel::Correct: return "correct";
        case TierLabel::Medium: return "medium";
        case TierLabel::Hard: return "hard";
    }
    return "?";
}

std::map<std::string, TierLabel> partition_tiers(const std::map<std::string, int>& run5_correct,
                                                 const std::map<std::string, int>& run32_correct) {
    std::map<std::string, TierLabel> tiers;
    for (const auto& [id, c5] : run5_correct) {
        if (c5 < 0 || c5 > 5) throw InvalidInput("partition_tiers: run5 count out of range");
        if (c5 >= 4) {
            tiers[id] = TierLabel::Correct;
            continue;
        }
        auto it = run32_correct.find(id);
        if (it == run32_correct.end())
            throw InvalidInput("partition_tiers: missing 32-run counts for uncertain problem '" + id +
                               "'");
        const int c32 = it->second;
        if (c32 < 0 || c32 > 32) throw InvalidInput("partition_tiers: run32 count out of range");
        tiers[id] = c32 >= 1 ? TierLabel::Medium : TierLabel::Hard;
    }
    return tiers;
}

double diversity_score(const SimilarityMatrix& m) {
    if (m.size < 2) throw InvalidInput("diversity_score: matrix must be at least 2x2");
    double sum = 0.0;
    for (int i = 0; i < m.size; ++i) {
        for (int j = 0; j < m.size; ++j) {
            if (i == j) continue;
            const int s = m.at(i, j);
            if (s < 0 || s > 5)
                throw InvalidInput("diversity_score: missing or out-of-range pair score");
            sum += s;
        }
    }
    const double avg = sum / (static_cast<double>(m.size) * (m.size - 1));
    return 1.0 - avg / 5.0;
}

SimilarityMatrix read_similarity_csv(std::istream& is) {
    std::vector<std::vector<int>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<int> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            // trim
            size_t a = cell.find_first_not_of(" \t\r");
            size_t b = cell.find_last_not_of(" \t\r");
            if (a == std::string::npos) {
                row.push_back(-1);
            } else {
                row.push_back(std::stoi(cell.substr(a, b - a + 1)));
            }
        }
        // A trailing comma means one more empty cell.
        if (!line.empty() && line.back() == ',') row.push_back(-1);
        if (row.empty()) row.push_back(-1);
        rows.push_back(std::move(row));
    }
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw InvalidInput("read_similarity_csv: empty file");
    SimilarityMatrix m(n);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[i].size()) != n)
            throw InvalidInput("read_similarity_csv: matrix is not square");
        for (int j = 0; j < n; ++j) m.at(i, j) = rows[i][j];
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (m.at(i, j) < 0 && m.at(j, i) >= 0) m.at(i, j) = m.at(j, i);
        }
    }
    return m;
}

void write_similarity_csv(const SimilarityMatrix& m, std::ostream& os) {
    for (int i = 0; i < m.size; ++i) {
        for (int j = 0; j < m.size; ++j) {
            if (j > 0) os << ',';
            if (i == j) {
                os << -1;
            } else {
                os << m.at(i, j);
            }
        }
        os << '\n';
    }
}

void assign_random_rewards(CandidateSet& set, uint64_t seed) {
    for (CandidateRecord& r : set.records) {
        const uint64_t key = seed_mix(fnv1a64(r.problem_id),
                                      seed_mix(fnv1a64(r.strategy),
                                               static_cast<uint64_t>(r.sample_index)));
        Rng rng(seed_mix(seed, key));
        r.reward_score = rng.uniform01();
    }
}

}  // namespace es
