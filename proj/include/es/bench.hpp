#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "es/toy_moe.hpp"

namespace es {

// Timing wants a compute-bound, cache-resident model, so the default bench
// model is the smallest routing shape with widened experts.
inline ModelConfig bench_default_model() {
    ModelConfig config = ModelConfig::preset("gpt-oss-20b-mini");
    config.expert_hidden_dim = 128;
    return config;
}

struct BenchConfig {
    ModelConfig model = bench_default_model();
    SamplerSpec es_spec = SamplerSpec::expert_sample_defaults(bench_default_model().top_k);
    std::vector<int> batch_sizes{1};
    std::vector<int> prompt_lengths{64};
    std::vector<int> output_lengths{16};
    int repetitions = 15;
    int warmup = 1;
    uint64_t seed = 42;
    int workers = 1;  // benchmarks run single-threaded by default

    void validate() const;
};

struct BenchRow {
    std::string phase;  // "prefill" (full-sequence forward) or "decode" (stepwise generate)
    int batch = 0;
    int prompt_len = 0;
    int out_len = 0;
    std::string strategy;  // greedy | greedy_control | expert_sample
    double tokens_per_s = 0.0;
    double rel_change_pct = 0.0;  // vs. the greedy baseline of the same cell
};

struct BenchReport {
    std::vector<BenchRow> rows;
    // Noise width: largest 90th percentile of |per-repetition greedy_control
    // vs greedy rel change| across cells.
    double control_band_pct = 0.0;
    // Effect size: largest |median per-repetition expert_sample vs greedy rel
    // change| across cells.
    double es_band_pct = 0.0;
    // rng accounting over the expert_sample runs: must match exactly.
    uint64_t es_rng_draws = 0;
    uint64_t expected_rng_draws = 0;
    int repetitions = 0;
    bool iterations_auto_scaled = false;  // timer window was raised to cover clock resolution
    int workers = 1;
};

// Times the routing path (routing + expert compute + combination; model build
// and I/O excluded) for Greedy and ExpertSample over every configuration
// cell, with a Greedy-vs-Greedy control to establish the noise band.
BenchReport bench_routing(const BenchConfig& config);

// phase,batch,prompt_len,out_len,strategy,tokens_per_s,rel_change_pct
void write_bench_csv(const BenchReport& report, std::ostream& os);

struct KernelBenchRow {
    std::string kernel;  // serial | openmp
    int threads = 1;
    int tokens = 0;
    double tokens_per_s = 0.0;
};

// Serial reference vs. OpenMP forward on identical greedy work.
std::vector<KernelBenchRow> bench_kernels(const BenchConfig& config);
void write_kernel_csv(std::span<const KernelBenchRow> rows, std::ostream& os);

}  // namespace es
