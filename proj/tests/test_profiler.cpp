#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "es/errors.hpp"
#include "es/profiler.hpp"

using namespace es;

namespace {

TraceEntry make_entry(std::vector<double> probs, int layer, int position, Phase phase) {
    TraceEntry entry;
    entry.layer = layer;
    entry.position = position;
    entry.phase = phase;
    entry.dist.n = static_cast<int>(probs.size());
    entry.dist.logits.assign(probs.size(), 0.0);
    entry.dist.probs = std::move(probs);
    return entry;
}

RouteTrace random_trace(int entries, int n, Phase phase, Rng& rng, int layers = 2) {
    RouteTrace trace;
    for (int e = 0; e < entries; ++e) {
        std::vector<double> logits(n);
        for (double& v : logits) v = rng.uniform(-3.0, 3.0);
        TraceEntry entry;
        entry.layer = e % layers;
        entry.position = e;
        entry.phase = phase;
        entry.dist = router_probs(logits);
        trace.entries.push_back(std::move(entry));
    }
    return trace;
}

}  // namespace

TEST_CASE("uniform scores give a flat profile with zero gap") {
    RouteTrace trace;
    for (int t = 0; t < 5; ++t)
        trace.entries.push_back(make_entry({0.25, 0.25, 0.25, 0.25}, 0, t, Phase::Prefill));
    auto profile = collect_rank_profile(trace, PhaseFilter::All);
    for (double m : profile.mean_score) CHECK(m == doctest::Approx(0.25).epsilon(1e-15));

    auto stats = head_tail_stats(profile);
    CHECK(stats.gap_1_to_5 == 0.0);
    CHECK(stats.cumdiff_5_to_32 == 0.0);
    CHECK(stats.boundary_rank == 1);
    CHECK(stats.gap_hi_rank == 4);  // degraded to the highest available rank
    CHECK(stats.cum_hi_rank == 4);
}

TEST_CASE("two-token hand average") {
    RouteTrace trace;
    trace.entries.push_back(make_entry({0.7, 0.2, 0.1}, 0, 0, Phase::Prefill));
    trace.entries.push_back(make_entry({0.5, 0.3, 0.2}, 0, 1, Phase::Prefill));
    auto profile = collect_rank_profile(trace, PhaseFilter::All);
    CHECK(profile.mean_score[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(profile.mean_score[1] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(profile.mean_score[2] == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(profile.token_count == 2);
    CHECK(profile.layer_count == 1);
}

TEST_CASE("profiles are non-increasing and sum to one") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + static_cast<int>(rng.next_u64() % 40);
        auto trace = random_trace(50, n, Phase::Prefill, rng);
        auto profile = collect_rank_profile(trace, PhaseFilter::All);

        double sum = 0.0;
        for (int r = 1; r < n; ++r) {
            CHECK(profile.at_rank(r) >= profile.at_rank(r + 1));
        }
        for (double m : profile.mean_score) sum += m;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("singleton trace equals the sorted score vector exactly") {
    Rng rng(5);
    auto trace = random_trace(1, 12, Phase::Decode, rng);
    auto profile = collect_rank_profile(trace, PhaseFilter::All);

    auto sorted = trace.entries[0].dist.probs;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    CHECK(profile.mean_score == sorted);
}

TEST_CASE("aggregation linearity over trace-set unions") {
    Rng rng(7);
    auto t1 = random_trace(33, 16, Phase::Prefill, rng);
    auto t2 = random_trace(21, 16, Phase::Prefill, rng);

    auto p1 = collect_rank_profile(t1, PhaseFilter::All);
    auto p2 = collect_rank_profile(t2, PhaseFilter::All);
    const RouteTrace* both[] = {&t1, &t2};
    auto combined = collect_rank_profile(std::span<const RouteTrace* const>(both, 2),
                                         PhaseFilter::All);

    auto merged = merge_profiles(p1, p2);
    CHECK(merged.token_count == combined.token_count);
    for (int r = 0; r < 16; ++r) {
        CHECK(std::abs(combined.mean_score[r] - merged.mean_score[r]) < 1e-12);
    }
}

TEST_CASE("phase filtering partitions the aggregate") {
    Rng rng(11);
    RouteTrace trace = random_trace(40, 8, Phase::Prefill, rng);
    auto decode_part = random_trace(24, 8, Phase::Decode, rng);
    trace.entries.insert(trace.entries.end(), decode_part.entries.begin(),
                         decode_part.entries.end());

    auto all = collect_rank_profile(trace, PhaseFilter::All);
    auto prefill = collect_rank_profile(trace, PhaseFilter::Prefill);
    auto decode = collect_rank_profile(trace, PhaseFilter::Decode);
    CHECK(prefill.token_count == 40);
    CHECK(decode.token_count == 24);

    for (int r = 0; r < 8; ++r) {
        const double weighted = (40.0 * prefill.mean_score[r] + 24.0 * decode.mean_score[r]) / 64.0;
        CHECK(std::abs(all.mean_score[r] - weighted) < 1e-12);
    }
}

TEST_CASE("synthetic head/tail statistics") {
    RankProfile profile;
    profile.mean_score = {0.30, 0.15, 0.10, 0.08, 0.05, 0.045, 0.044, 0.043, 0.042, 0.041};
    profile.token_count = 1;
    profile.layer_count = 1;

    auto stats = head_tail_stats(profile);
    CHECK(stats.gap_1_to_5 == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(stats.gap_hi_rank == 5);
    CHECK(stats.cum_hi_rank == 10);
    // First successive drop below 0.002 is rank 6 (0.045 - 0.044).
    CHECK(stats.boundary_rank == 6);
    CHECK(stats.gap_1_to_5 >= 0.0);
    CHECK(stats.cumdiff_5_to_32 >= 0.0);

    RankProfile tiny;
    tiny.mean_score = {1.0};
    CHECK_THROWS_AS(head_tail_stats(tiny), InvalidInput);
}

TEST_CASE("error paths") {
    CHECK_THROWS_AS(collect_rank_profile(std::span<const RouteTrace* const>{}, PhaseFilter::All),
                    InvalidInput);

    RouteTrace empty;
    CHECK_THROWS_AS(collect_rank_profile(empty, PhaseFilter::All), InvalidInput);

    Rng rng(13);
    RouteTrace mixed = random_trace(3, 4, Phase::Prefill, rng);
    auto other = random_trace(3, 5, Phase::Prefill, rng);
    mixed.entries.insert(mixed.entries.end(), other.entries.begin(), other.entries.end());
    CHECK_THROWS_AS(collect_rank_profile(mixed, PhaseFilter::All), InvalidInput);

    auto prefill_only = random_trace(3, 4, Phase::Prefill, rng);
    CHECK_THROWS_AS(collect_rank_profile(prefill_only, PhaseFilter::Decode), InvalidInput);
}

TEST_CASE("csv output shape") {
    RouteTrace trace;
    trace.entries.push_back(make_entry({0.5, 0.25, 0.25}, 0, 0, Phase::Prefill));
    auto profile = collect_rank_profile(trace, PhaseFilter::All);

    std::ostringstream os;
    write_rank_profile_csv(profile, os);
    CHECK(os.str() == "rank,mean_score,count\n1,0.5,1\n2,0.25,1\n3,0.25,1\n");

    std::ostringstream zoom;
    write_rank_profile_csv(profile, zoom, 2);
    CHECK(zoom.str() == "rank,mean_score,count\n1,0.5,1\n2,0.25,1\n");
}

TEST_CASE("phase filter parsing") {
    CHECK(phase_filter_from_string("all") == PhaseFilter::All);
    CHECK(phase_filter_from_string("prefill") == PhaseFilter::Prefill);
    CHECK(phase_filter_from_string("decode") == PhaseFilter::Decode);
    CHECK_THROWS_AS(phase_filter_from_string("both"), InvalidInput);
}
