#include "es/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "es/errors.hpp"
#include "es/numeric.hpp"

namespace es {

void BenchConfig::validate() const {
    model.validate();
    if (batch_sizes.empty() || prompt_lengths.empty() || output_lengths.empty())
        throw InvalidInput("bench config: size lists must be nonempty");
    for (int v : batch_sizes)
        if (v < 1) throw InvalidInput("bench config: batch sizes must be >= 1");
    for (int v : prompt_lengths)
        if (v < 1) throw InvalidInput("bench config: prompt lengths must be >= 1");
    for (int v : output_lengths)
        if (v < 1) throw InvalidInput("bench config: output lengths must be >= 1");
    if (repetitions < 1 || warmup < 0) throw InvalidInput("bench config: bad repetition counts");
    if (workers < 1) throw InvalidInput("bench config: workers must be >= 1");
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kMinWindowSeconds = 0.05;

std::vector<int> make_prompt(int length, int vocab, uint64_t seed) {
    Rng rng(seed);
    std::vector<int> tokens(length);
    for (int& t : tokens) t = static_cast<int>(rng.next_u64() % static_cast<uint64_t>(vocab));
    return tokens;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Iteration count that makes one measurement cover the minimum timing
// window.
template <typename Fn>
int calibrate_iters(Fn&& work, bool* auto_scaled) {
    int iters = 1;
    for (;;) {
        const auto start = Clock::now();
        for (int i = 0; i < iters; ++i) work();
        const double elapsed = seconds_since(start);
        if (elapsed >= kMinWindowSeconds || iters >= (1 << 20)) return iters;
        const double target = kMinWindowSeconds * 1.2;
        iters = elapsed > 0.0
                    ? std::max(iters * 2, static_cast<int>(iters * target / elapsed) + 1)
                    : iters * 2;
        *auto_scaled = true;
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// Per-repetition seconds for each candidate. Strategies are timed in rotation
// within every repetition so slow clock drift cancels inside a repetition
// instead of biasing whichever ran last, and every timed slot is preceded by
// one untimed priming call so a strategy never pays for the cache lines its
// predecessor evicted. Relative changes are taken per repetition (paired
// against the baseline slot of the same repetition) and summarized by their
// median, which is far more drift-robust than a ratio of medians.
template <typename Fn>
std::vector<std::vector<double>> interleaved_samples(const std::vector<Fn>& works, int iters,
                                                     int repetitions, int warmup) {
    for (int w = 0; w < warmup; ++w) {
        for (const Fn& work : works) {
            for (int i = 0; i < iters; ++i) work();
        }
    }
    std::vector<std::vector<double>> samples(works.size());
    for (int r = 0; r < repetitions; ++r) {
        for (size_t s = 0; s < works.size(); ++s) {
            works[s]();
            const auto start = Clock::now();
            for (int i = 0; i < iters; ++i) works[s]();
            samples[s].push_back(seconds_since(start) / iters);
        }
    }
    return samples;
}

// Rel change (%) of work s vs. the per-repetition baseline (slot 0), one
// sample per repetition.
std::vector<double> paired_rels_pct(const std::vector<std::vector<double>>& samples, size_t s) {
    std::vector<double> rels;
    for (size_t r = 0; r < samples[0].size(); ++r) {
        const double base_tps = 1.0 / samples[0][r];
        const double tps = 1.0 / samples[s][r];
        rels.push_back((tps - base_tps) / base_tps * 100.0);
    }
    return rels;
}

// 90th percentile of |rels|: the width of the machine's own noise as seen by
// the greedy-vs-greedy control.
double abs_p90(std::vector<double> rels) {
    for (double& v : rels) v = std::abs(v);
    std::sort(rels.begin(), rels.end());
    const size_t idx = (rels.size() * 9 + 9) / 10 - 1;
    return rels[std::min(idx, rels.size() - 1)];
}

}  // namespace

BenchReport bench_routing(const BenchConfig& config) {
    config.validate();
    config.es_spec.validate(config.model.num_experts);

#ifdef _OPENMP
    const int saved_threads = omp_get_max_threads();
    omp_set_num_threads(config.workers);
#endif

    const Model model = build_model(config.model);
    const SamplerSpec greedy = SamplerSpec::greedy(config.model.top_k);
    const SamplerSpec es = config.es_spec;
    const int vocab = config.model.vocab_size;
    const int layers = config.model.num_layers;
    const uint64_t pool = static_cast<uint64_t>(es.range - es.k_keep);

    BenchReport report;
    report.repetitions = config.repetitions;
    report.workers = config.workers;

    auto prefill_work = [&](const std::vector<std::vector<int>>& prompts, const SamplerSpec& spec) {
        Rng rng(config.seed);
        uint64_t draws = 0;
        for (const auto& prompt : prompts) draws += forward(model, prompt, spec, rng).rng_draws;
        return draws;
    };

    // Teacher-forced stepwise decode: every strategy forwards the same token
    // sequence one position at a time, so the work is identical except for
    // the selection step.
    auto decode_work = [&](const std::vector<std::vector<int>>& continuations,
                           const SamplerSpec& spec) {
        Rng rng(config.seed + 1);
        uint64_t draws = 0;
        for (const auto& continuation : continuations) {
            for (int tok : continuation) {
                const int one[1] = {tok};
                draws += forward(model, one, spec, rng).rng_draws;
            }
        }
        return draws;
    };

    for (int batch : config.batch_sizes) {
        for (int prompt_len : config.prompt_lengths) {
            std::vector<std::vector<int>> prompts;
            for (int b = 0; b < batch; ++b)
                prompts.push_back(make_prompt(prompt_len, vocab, seed_mix(config.seed, b)));

            // Draw accounting on one untimed pass; exact, unlike wall clock.
            report.es_rng_draws += prefill_work(prompts, es);
            report.expected_rng_draws +=
                static_cast<uint64_t>(batch) * prompt_len * layers * pool;

            {
                using Work = std::function<void()>;
                const std::vector<Work> works{[&] { prefill_work(prompts, greedy); },
                                              [&] { prefill_work(prompts, greedy); },
                                              [&] { prefill_work(prompts, es); }};
                const int iters = calibrate_iters(works[0], &report.iterations_auto_scaled);
                const auto samples =
                    interleaved_samples(works, iters, config.repetitions, config.warmup);
                const double tokens = static_cast<double>(batch) * prompt_len;
                const char* names[] = {"greedy", "greedy_control", "expert_sample"};
                for (int s = 0; s < 3; ++s) {
                    BenchRow row{"prefill", batch,    prompt_len,
                                 0,         names[s], tokens / median(samples[s]),
                                 0.0};
                    if (s > 0) {
                        const auto rels = paired_rels_pct(samples, s);
                        row.rel_change_pct = median(rels);
                        if (s == 1) {
                            report.control_band_pct =
                                std::max(report.control_band_pct, abs_p90(rels));
                        } else {
                            report.es_band_pct =
                                std::max(report.es_band_pct, std::abs(row.rel_change_pct));
                        }
                    }
                    report.rows.push_back(row);
                }
            }

            for (int out_len : config.output_lengths) {
                std::vector<std::vector<int>> continuations;
                for (int b = 0; b < batch; ++b)
                    continuations.push_back(
                        make_prompt(out_len, vocab, seed_mix(config.seed + 2, b)));

                report.es_rng_draws += decode_work(continuations, es);
                report.expected_rng_draws +=
                    static_cast<uint64_t>(batch) * out_len * layers * pool;

                using Work = std::function<void()>;
                const std::vector<Work> works{
                    [&] { decode_work(continuations, greedy); },
                    [&] { decode_work(continuations, greedy); },
                    [&] { decode_work(continuations, es); }};
                const int iters = calibrate_iters(works[0], &report.iterations_auto_scaled);
                const auto samples =
                    interleaved_samples(works, iters, config.repetitions, config.warmup);
                const double dec_tokens = static_cast<double>(batch) * out_len;
                const char* names[] = {"greedy", "greedy_control", "expert_sample"};
                for (int s = 0; s < 3; ++s) {
                    BenchRow row{"decode", batch,    prompt_len,
                                 out_len,  names[s], dec_tokens / median(samples[s]),
                                 0.0};
                    if (s > 0) {
                        const auto rels = paired_rels_pct(samples, s);
                        row.rel_change_pct = median(rels);
                        if (s == 1) {
                            report.control_band_pct =
                                std::max(report.control_band_pct, abs_p90(rels));
                        } else {
                            report.es_band_pct =
                                std::max(report.es_band_pct, std::abs(row.rel_change_pct));
                        }
                    }
                    report.rows.push_back(row);
                }
            }
        }
    }

#ifdef _OPENMP
    omp_set_num_threads(saved_threads);
#endif
    return report;
}

void write_bench_csv(const BenchReport& report, std::ostream& os) {
    os << "phase,batch,prompt_len,out_len,strategy,tokens_per_s,rel_change_pct\n";
    for (const BenchRow& row : report.rows) {
        os << row.phase << ',' << row.batch << ',' << row.prompt_len << ',' << row.out_len << ','
           << row.strategy << ',' << format_double(row.tokens_per_s) << ','
           << format_double(row.rel_change_pct) << '\n';
    }
}

std::vector<KernelBenchRow> bench_kernels(const BenchConfig& config) {
    config.validate();
    const Model model = build_model(config.model);
    const SamplerSpec greedy = SamplerSpec::greedy(config.model.top_k);
    const int prompt_len = config.prompt_lengths[0];
    const std::vector<int> prompt = make_prompt(prompt_len, config.model.vocab_size, config.seed);

    bool scaled = false;
    using Work = std::function<void()>;
    const std::vector<Work> works{[&] {
                                      Rng rng(config.seed);
                                      forward_serial(model, prompt, greedy, rng);
                                  },
                                  [&] {
                                      Rng rng(config.seed);
                                      forward(model, prompt, greedy, rng);
                                  }};
    const int iters = calibrate_iters(works[0], &scaled);
    const auto samples = interleaved_samples(works, iters, config.repetitions, config.warmup);

    int threads = 1;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    std::vector<KernelBenchRow> rows;
    rows.push_back({"serial", 1, prompt_len, prompt_len / median(samples[0])});
    rows.push_back({"openmp", threads, prompt_len, prompt_len / median(samples[1])});
    return rows;
}

void write_kernel_csv(std::span<const KernelBenchRow> rows, std::ostream& os) {
    os << "kernel,threads,tokens,tokens_per_s\n";
    for (const KernelBenchRow& row : rows) {
        os << row.kernel << ',' << row.threads << ',' << row.tokens << ','
           << format_double(row.tokens_per_s) << '\n';
    }
}

}  // namespace es
