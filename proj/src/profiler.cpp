#include "es/profiler.hpp"

#include <algorithm>
#include <functional>
#include <ostream>
#include <set>

#include "es/errors.hpp"
#include "es/numeric.hpp"

namespace es {

PhaseFilter phase_filter_from_string(const std::string& s) {
    if (s == "all") return PhaseFilter::All;
    if (s == "prefill") return PhaseFilter::Prefill;
    if (s == "decode") return PhaseFilter::Decode;
    throw InvalidInput("unknown phase filter '" + s + "' (expected all, prefill or decode)");
}

namespace {

bool matches(Phase phase, PhaseFilter filter) {
    switch (filter) {
        case PhaseFilter::All: return true;
        case PhaseFilter::Prefill: return phase == Phase::Prefill;
        case PhaseFilter::Decode: return phase == Phase::Decode;
    }
    return false;
}

}  // namespace

RankProfile collect_rank_profile(std::span<const RouteTrace* const> traces, PhaseFilter filter) {
    if (traces.empty()) throw InvalidInput("collect_rank_profile: empty trace set");

    int n = -1;
    for (const RouteTrace* trace : traces) {
        for (const TraceEntry& entry : trace->entries) {
            if (n < 0) n = entry.dist.n;
            if (entry.dist.n != n)
                throw InvalidInput("collect_rank_profile: mixed expert counts in trace set");
        }
    }
    if (n < 0) throw InvalidInput("collect_rank_profile: trace set has no entries");

    std::vector<NeumaierSum> acc(n);
    std::vector<double> sorted;
    std::set<int> layers;
    uint64_t count = 0;
    for (const RouteTrace* trace : traces) {
        for (const TraceEntry& entry : trace->entries) {
            if (!matches(entry.phase, filter)) continue;
            sorted = entry.dist.probs;
            std::sort(sorted.begin(), sorted.end(), std::greater<double>());
            for (int r = 0; r < n; ++r) acc[r].add(sorted[r]);
            layers.insert(entry.layer);
            ++count;
        }
    }
    if (count == 0) throw InvalidInput("collect_rank_profile: no entries match the phase filter");

    RankProfile profile;
    profile.phase_filter = filter;
    profile.token_count = count;
    profile.layer_count = static_cast<int>(layers.size());
    profile.mean_score.resize(n);
    for (int r = 0; r < n; ++r) profile.mean_score[r] = acc[r].value() / static_cast<double>(count);
    return profile;
}

RankProfile collect_rank_profile(const RouteTrace& trace, PhaseFilter filter) {
    const RouteTrace* ptr = &trace;
    return collect_rank_profile(std::span<const RouteTrace* const>(&ptr, 1), filter);
}

RankProfile merge_profiles(const RankProfile& a, const RankProfile& b) {
    if (a.n() != b.n()) throw InvalidInput("merge_profiles: mismatched expert counts");
    RankProfile out;
    // Merging the two phase partitions yields the unfiltered aggregate.
    out.phase_filter = a.phase_filter == b.phase_filter ? a.phase_filter : PhaseFilter::All;
    out.token_count = a.token_count + b.token_count;
    out.layer_count = std::max(a.layer_count, b.layer_count);
    out.mean_score.resize(a.n());
    const double wa = static_cast<double>(a.token_count);
    const double wb = static_cast<double>(b.token_count);
    for (int r = 0; r < a.n(); ++r)
        out.mean_score[r] = (wa * a.mean_score[r] + wb * b.mean_score[r]) / (wa + wb);
    return out;
}

HeadTailStats head_tail_stats(const RankProfile& profile, double epsilon) {
    const int n = profile.n();
    if (n < 2) throw InvalidInput("head_tail_stats: profile needs at least 2 ranks");

    HeadTailStats stats;
    stats.gap_hi_rank = std::min(5, n);
    stats.cum_hi_rank = std::min(32, n);
    stats.gap_1_to_5 = profile.at_rank(1) - profile.at_rank(stats.gap_hi_rank);
    stats.cumdiff_5_to_32 = profile.at_rank(stats.gap_hi_rank) - profile.at_rank(stats.cum_hi_rank);

    stats.boundary_rank = n;
    for (int r = 1; r < n; ++r) {
        if (profile.at_rank(r) - profile.at_rank(r + 1) < epsilon) {
            stats.boundary_rank = r;
            break;
        }
    }
    return stats;
}

void write_rank_profile_csv(const RankProfile& profile, std::ostream& os, int max_rank) {
    const int hi = max_rank > 0 ? std::min(max_rank, profile.n()) : profile.n();
    os << "rank,mean_score,count\n";
    for (int r = 1; r <= hi; ++r) {
        os << r << ',' << format_double(profile.at_rank(r)) << ',' << profile.token_count << '\n';
    }
}

}  // namespace es
