#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "es/harness.hpp"
#include "es/io.hpp"
#include "es/toy_moe.hpp"

namespace es {

struct Strategy {
    std::string name;
    SamplerSpec spec;
    GenConfig gen;
};

struct ErrorRecord {
    std::string strategy;
    std::string problem_id;
    int sample_index = 0;
    std::string message;
};

struct StrategyCurve {
    std::string strategy;
    std::vector<int> ks;
    std::vector<double> pass_at;       // mean over problems of pass@k
    double stability_pass_rate = 0.0;  // fraction of all candidates judged correct
};

struct ScalingReport {
    int n_samples = 0;
    uint64_t master_seed = 0;
    std::vector<CandidateRecord> candidates;  // (strategy, problem, sample) order
    std::vector<StrategyCurve> curves;
    // strategy -> problem -> tier; present when n_samples >= 32.
    std::map<std::string, std::map<std::string, TierLabel>> tiers;
    std::vector<ErrorRecord> errors;
};

// Maps a generated continuation to correct/incorrect.
using Checker = std::function<bool(const Problem&, const std::vector<int>&)>;

// Per-candidate seed derivation; exposed so reports can be reproduced
// candidate by candidate.
uint64_t candidate_seed(uint64_t master_seed, int problem_index, int sample_index,
                        int strategy_index);

// Exact match against the deterministic greedy full-k continuation of the
// same length: a candidate is "correct" when routing/token noise did not move
// it off the greedy path.
Checker greedy_match_checker(const Model& model, std::span<const Problem> problems,
                             std::span<const Strategy> strategies);

// Generates n_samples candidates per (problem, strategy) and computes pass@k
// curves at powers of two. Bit-reproducible for a fixed master_seed at any
// worker count; candidates are merged in deterministic order before any
// output. An empty checker selects greedy_match_checker.
ScalingReport run_scaling_experiment(const Model& model, std::span<const Problem> problems,
                                     int n_samples, std::span<const Strategy> strategies,
                                     uint64_t master_seed, int workers = 1,
                                     const Checker& checker = {});

struct SweepPoint {
    int k_keep = 0;
    double tau = 1.0;
    int range = 0;
};

struct SweepRow {
    SweepPoint point;
    double stability_pass_rate = 0.0;
    std::vector<int> ks;
    std::vector<double> pass_at;
};

struct SweepTable {
    std::vector<SweepRow> rows;
};

// k_keep 0..k-1 (plus k_keep = k as the greedy-equivalent reference point),
// tau over the 0.1..1.3 sweep values plus the 1.0 default, range 2k..7k
// capped at num_experts.
std::vector<SweepPoint> default_sweep_grid(int k, int num_experts);

// One run_scaling_experiment per grid point, single ExpertSample strategy,
// shared token-sampling config.
SweepTable sweep(const Model& model, std::span<const Problem> problems,
                 std::span<const SweepPoint> grid, int n_samples, const GenConfig& gen,
                 uint64_t master_seed, int workers = 1);

void write_sweep_csv(const SweepTable& table, std::ostream& os);

}  // namespace es
