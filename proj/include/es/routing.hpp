#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "es/rng.hpp"

namespace es {

// One token's router output over n experts: raw gating logits and their
// softmax probabilities.
struct RouterDistribution {
    std::vector<double> logits;
    std::vector<double> probs;
    int n = 0;
};

enum class SamplerKind { Greedy, ExpertSample };

// Routing strategy descriptor. For ExpertSample: keep the top k_keep experts
// deterministically, fill the remaining k - k_keep slots by sampling from the
// candidate ranks [k_keep+1, range] with tail temperature tau.
struct SamplerSpec {
    SamplerKind kind = SamplerKind::Greedy;
    int k = 1;
    int k_keep = 0;
    double tau = 1.0;
    int range = 1;

    static SamplerSpec greedy(int k);
    static SamplerSpec expert_sample(int k, int k_keep, double tau, int range);
    // Recommended defaults: k_keep = floor(k/2)+1, tau = 1.0, range = 4k.
    static SamplerSpec expert_sample_defaults(int k);

    // Throws InvalidInput when this sampler cannot be applied to n experts.
    void validate(int n) const;

    std::string describe() const;
};

// Diagnostic record of the stochastic tail step.
struct TailTrace {
    int first_rank = 0;  // 1-indexed candidate rank interval [first_rank, last_rank]
    int last_rank = 0;
    std::vector<double> tail_scores;  // temperature-scaled softmax over the pool
    // Perturbed keys used for selection, in pool rank order. Equal to
    // log(tail_scores) + Gumbel noise up to a shared additive constant.
    std::vector<double> gumbel_keys;
};

// Chosen expert set. `head` is deterministic, `tail` stochastic; both are kept
// in router rank order so that degenerate configurations reproduce greedy
// selection bit for bit. `weights` aligns with head ++ tail.
struct ExpertSelection {
    std::vector<int> head;
    std::vector<int> tail;
    std::vector<double> weights;
    std::optional<TailTrace> trace;

    int size() const { return static_cast<int>(head.size() + tail.size()); }
    std::vector<int> selected() const;
};

// softmax(logits) with validation: throws InvalidInput on an empty vector or
// any non-finite entry.
RouterDistribution router_probs(std::span<const double> logits);

// Indices of the top m scores, highest first; ties broken by lower index.
std::vector<int> rank_by_score(std::span<const double> scores, int m);

// Standard deterministic top-k selection with weight renormalization.
ExpertSelection greedy_select(const RouterDistribution& dist, int k);

// Samples `count` indices without replacement, with selection probability
// proportional to `scores` (Plackett-Luce). Draws one Gumbel per candidate in
// index order and takes the `count` largest keys log(score) + Gumbel; returned
// in descending key order. `scores` must be positive and sum to 1 within 1e-6.
std::vector<int> gumbel_topk(std::span<const double> scores, int count, Rng& rng);

// The three-step head-preserving stochastic selection. Consumes exactly
// (range - k_keep) Gumbel draws from rng per call, in rank order, regardless
// of outcome, so parallel token streams stay reproducible. want_trace = false
// skips assembling the TailTrace; the selection itself is unchanged.
ExpertSelection expert_sample_select(const RouterDistribution& dist, const SamplerSpec& spec,
                                     Rng& rng, bool want_trace = true);

// Weighted sum of the selected experts' outputs, in selection order.
std::vector<double> combine_expert_outputs(const ExpertSelection& selection,
                                           const std::vector<std::vector<double>>& expert_outputs);

}  // namespace es
