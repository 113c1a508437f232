#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "es/toy_moe.hpp"

namespace es {

enum class PhaseFilter { All, Prefill, Decode };

PhaseFilter phase_filter_from_string(const std::string& s);

// Mean router score per rank position (1-indexed rank r is mean_score[r-1]),
// averaged over every matching (layer, token) trace entry.
struct RankProfile {
    std::vector<double> mean_score;
    uint64_t token_count = 0;  // (layer, token) entries aggregated
    int layer_count = 0;       // distinct layers seen
    PhaseFilter phase_filter = PhaseFilter::All;

    double at_rank(int rank) const { return mean_score[rank - 1]; }
    int n() const { return static_cast<int>(mean_score.size()); }
};

// Sort each entry's full softmax vector descending and average per rank.
RankProfile collect_rank_profile(std::span<const RouteTrace* const> traces, PhaseFilter filter);
RankProfile collect_rank_profile(const RouteTrace& trace, PhaseFilter filter);

// Count-weighted combination of two partial profiles over the same n.
RankProfile merge_profiles(const RankProfile& a, const RankProfile& b);

// Head/tail summary. When the profile has fewer than 5 or 32 ranks the
// statistics degrade to the highest available rank, recorded in gap_hi_rank /
// cum_hi_rank.
struct HeadTailStats {
    double gap_1_to_5 = 0.0;      // mean_score[1] - mean_score[gap_hi_rank]
    double cumdiff_5_to_32 = 0.0;  // mean_score[gap_hi_rank] - mean_score[cum_hi_rank]
    int boundary_rank = 0;         // first rank whose successive drop falls below epsilon
    int gap_hi_rank = 5;
    int cum_hi_rank = 32;
};

constexpr double kDefaultBoundaryEpsilon = 0.002;

HeadTailStats head_tail_stats(const RankProfile& profile,
                              double epsilon = kDefaultBoundaryEpsilon);

// CSV with header `rank,mean_score,count`, one row per rank 1..max_rank
// (0 = all ranks).
void write_rank_profile_csv(const RankProfile& profile, std::ostream& os, int max_rank = 0);

}  // namespace es
