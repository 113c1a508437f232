#include "es/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "es/errors.hpp"
#include "es/numeric.hpp"

namespace es {

std::vector<double> softmax(std::span<const double> logits) {
    double max_l = logits[0];
    for (double v : logits) max_l = std::max(max_l, v);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max_l);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

SamplerSpec SamplerSpec::greedy(int k) {
    SamplerSpec s;
    s.kind = SamplerKind::Greedy;
    s.k = k;
    s.range = k;
    return s;
}

SamplerSpec SamplerSpec::expert_sample(int k, int k_keep, double tau, int range) {
    SamplerSpec s;
    s.kind = SamplerKind::ExpertSample;
    s.k = k;
    s.k_keep = k_keep;
    s.tau = tau;
    s.range = range;
    return s;
}

SamplerSpec SamplerSpec::expert_sample_defaults(int k) {
    return expert_sample(k, k / 2 + 1, 1.0, 4 * k);
}

void SamplerSpec::validate(int n) const {
    if (k < 1 || k > n) throw InvalidInput("sampler.k must satisfy 1 <= k <= n");
    if (kind == SamplerKind::ExpertSample) {
        if (tau <= 0.0) throw InvalidInput("sampler.tau must be positive");
        if (k_keep < 0 || k_keep > k) throw InvalidInput("sampler.k_keep must satisfy 0 <= k_keep <= k");
        if (range < k) throw InvalidInput("sampler.range must satisfy range >= k");
        if (range > n) throw InvalidInput("sampler.range must satisfy range <= n");
    }
}

std::string SamplerSpec::describe() const {
    if (kind == SamplerKind::Greedy) return "greedy(k=" + std::to_string(k) + ")";
    return "expert_sample(k=" + std::to_string(k) + ",k_keep=" + std::to_string(k_keep) +
           ",tau=" + format_double(tau) + ",range=" + std::to_string(range) + ")";
}

std::vector<int> ExpertSelection::selected() const {
    std::vector<int> out = head;
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
}

RouterDistribution router_probs(std::span<const double> logits) {
    if (logits.empty()) throw InvalidInput("router_probs: empty logit vector");
    for (double v : logits) {
        if (!std::isfinite(v)) throw InvalidInput("router_probs: non-finite logit");
    }
    RouterDistribution dist;
    dist.logits.assign(logits.begin(), logits.end());
    dist.probs = softmax(logits);
    dist.n = static_cast<int>(logits.size());
    return dist;
}

std::vector<int> rank_by_score(std::span<const double> scores, int m) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    // The comparator is a total order, so select-then-sort returns the same
    // ranking as a full sort at O(n + m log m).
    if (m < static_cast<int>(idx.size())) {
        std::nth_element(idx.begin(), idx.begin() + m, idx.end(), better);
        idx.resize(m);
    }
    std::sort(idx.begin(), idx.end(), better);
    return idx;
}

namespace {

// Weights proportional to the original probabilities of the selected experts,
// summed in selection order so equal selections renormalize identically.
std::vector<double> renormalized_weights(const std::vector<double>& probs,
                                         const std::vector<int>& selection) {
    double sum = 0.0;
    for (int i : selection) sum += probs[i];
    std::vector<double> w(selection.size());
    for (size_t j = 0; j < selection.size(); ++j) w[j] = probs[selection[j]] / sum;
    return w;
}

// Positions of the `count` largest keys; ties broken by lower position.
std::vector<int> top_positions_by_key(const std::vector<double>& keys, int count) {
    std::vector<int> pos(keys.size());
    std::iota(pos.begin(), pos.end(), 0);
    auto better = [&](int a, int b) {
        if (keys[a] != keys[b]) return keys[a] > keys[b];
        return a < b;
    };
    std::partial_sort(pos.begin(), pos.begin() + count, pos.end(), better);
    pos.resize(count);
    return pos;
}

}  // namespace

ExpertSelection greedy_select(const RouterDistribution& dist, int k) {
    if (k < 1 || k > dist.n) throw InvalidInput("greedy_select: k out of range");
    ExpertSelection sel;
    sel.head = rank_by_score(dist.probs, k);
    sel.weights = renormalized_weights(dist.probs, sel.head);
    return sel;
}

std::vector<int> gumbel_topk(std::span<const double> scores, int count, Rng& rng) {
    const int m = static_cast<int>(scores.size());
    if (count < 1 || count > m) throw InvalidInput("gumbel_topk: count out of range");
    double sum = 0.0;
    for (double s : scores) {
        if (s <= 0.0) throw InvalidInput("gumbel_topk: scores must be positive");
        sum += s;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw InvalidInput("gumbel_topk: scores must sum to 1");

    std::vector<double> keys(m);
    for (int i = 0; i < m; ++i) keys[i] = std::log(scores[i]) + rng.gumbel();
    return top_positions_by_key(keys, count);
}

ExpertSelection expert_sample_select(const RouterDistribution& dist, const SamplerSpec& spec,
                                     Rng& rng, bool want_trace) {
    if (spec.kind != SamplerKind::ExpertSample)
        throw InvalidInput("expert_sample_select: spec.kind must be ExpertSample");
    spec.validate(dist.n);

    // Ranks 1..range, as expert indices in rank order.
    std::vector<int> ranked = rank_by_score(dist.probs, spec.range);

    ExpertSelection sel;
    sel.head.assign(ranked.begin(), ranked.begin() + spec.k_keep);

    const int pool_size = spec.range - spec.k_keep;
    std::vector<double> scaled;
    if (want_trace) {
        scaled.resize(pool_size);
        for (int j = 0; j < pool_size; ++j)
            scaled[j] = dist.logits[ranked[spec.k_keep + j]] / spec.tau;
    }

    // Selection keys: log softmax(g/tau) + Gumbel equals g/tau + Gumbel up to
    // a shared additive constant, so the normalizer never needs computing.
    // Fixed consumption: one Gumbel per candidate, in rank order.
    std::vector<double> keys(pool_size);
    for (int j = 0; j < pool_size; ++j)
        keys[j] = dist.logits[ranked[spec.k_keep + j]] / spec.tau + rng.gumbel();

    const int need = spec.k - spec.k_keep;
    if (need > 0) {
        std::vector<int> chosen = top_positions_by_key(keys, need);
        // Rank order, so range == k reproduces greedy output exactly.
        std::sort(chosen.begin(), chosen.end());
        sel.tail.reserve(need);
        for (int p : chosen) sel.tail.push_back(ranked[spec.k_keep + p]);
    }

    sel.weights = renormalized_weights(dist.probs, sel.selected());

    if (want_trace) {
        TailTrace trace;
        trace.first_rank = spec.k_keep + 1;
        trace.last_rank = spec.range;
        trace.tail_scores = pool_size > 0 ? softmax(scaled) : std::vector<double>{};
        trace.gumbel_keys = std::move(keys);
        sel.trace = std::move(trace);
    }
    return sel;
}

std::vector<double> combine_expert_outputs(const ExpertSelection& selection,
                                           const std::vector<std::vector<double>>& expert_outputs) {
    if (expert_outputs.size() != static_cast<size_t>(selection.size()))
        throw InvalidInput("combine_expert_outputs: output count != selection size");
    const size_t dim = expert_outputs.empty() ? 0 : expert_outputs[0].size();
    for (const auto& v : expert_outputs) {
        if (v.size() != dim) throw InvalidInput("combine_expert_outputs: mismatched output lengths");
    }
    std::vector<double> out(dim, 0.0);
    for (size_t e = 0; e < expert_outputs.size(); ++e) {
        const double w = selection.weights[e];
        for (size_t i = 0; i < dim; ++i) out[i] += w * expert_outputs[e][i];
    }
    return out;
}

}  // namespace es
