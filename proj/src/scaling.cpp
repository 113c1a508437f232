#include "es/scaling.hpp"

#include <algorithm>
#include <memory>
#include <ostream>

#include "es/errors.hpp"
#include "es/numeric.hpp"

namespace es {

uint64_t candidate_seed(uint64_t master_seed, int problem_index, int sample_index,
                        int strategy_index) {
    const uint64_t key = seed_mix(seed_mix(static_cast<uint64_t>(problem_index),
                                           static_cast<uint64_t>(sample_index)),
                                  static_cast<uint64_t>(strategy_index));
    return splitmix64_mix(master_seed ^ key);
}

Checker greedy_match_checker(const Model& model, std::span<const Problem> problems,
                             std::span<const Strategy> strategies) {
    // References computed once, up front, per (problem, continuation length).
    auto refs = std::make_shared<std::map<std::pair<std::string, int>, std::vector<int>>>();
    for (const Problem& p : problems) {
        for (const Strategy& s : strategies) {
            auto key = std::make_pair(p.id, s.gen.max_new_tokens);
            if (refs->count(key)) continue;
            Rng rng(0);
            GenerateResult ref = generate(model, p.prompt, GenConfig::greedy(s.gen.max_new_tokens),
                                          SamplerSpec::greedy(model.config.top_k), rng, false);
            (*refs)[key] = std::move(ref.tokens);
        }
    }
    return [refs](const Problem& p, const std::vector<int>& tokens) {
        auto it = refs->find({p.id, static_cast<int>(tokens.size())});
        if (it == refs->end()) return false;
        return it->second == tokens;
    };
}

ScalingReport run_scaling_experiment(const Model& model, std::span<const Problem> problems,
                                     int n_samples, std::span<const Strategy> strategies,
                                     uint64_t master_seed, int workers, const Checker& checker) {
    if (n_samples < 1) throw InvalidInput("run_scaling_experiment: n_samples must be >= 1");
    if (problems.empty()) throw InvalidInput("run_scaling_experiment: no problems");
    if (strategies.empty()) throw InvalidInput("run_scaling_experiment: no strategies");
    for (const Strategy& s : strategies) {
        s.spec.validate(model.config.num_experts);
        s.gen.validate();
    }

    const Checker check = checker ? checker : greedy_match_checker(model, problems, strategies);

    const int n_problems = static_cast<int>(problems.size());
    const int n_strategies = static_cast<int>(strategies.size());
    const long total = static_cast<long>(n_strategies) * n_problems * n_samples;

    ScalingReport report;
    report.n_samples = n_samples;
    report.master_seed = master_seed;
    report.candidates.resize(total);

    std::vector<ErrorRecord> errors_by_slot(total);
    std::vector<char> has_error(total, 0);

    const int threads = std::max(1, workers);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long idx = 0; idx < total; ++idx) {
        const int st = static_cast<int>(idx / (static_cast<long>(n_problems) * n_samples));
        const int rem = static_cast<int>(idx % (static_cast<long>(n_problems) * n_samples));
        const int p = rem / n_samples;
        const int s = rem % n_samples;

        const Strategy& strat = strategies[st];
        const Problem& prob = problems[p];
        const uint64_t seed = candidate_seed(master_seed, p, s, st);

        CandidateRecord rec;
        rec.problem_id = prob.id;
        rec.sample_index = s;
        rec.strategy = strat.name;
        rec.seed = seed;

        Rng rng(seed);
        GenerateResult gen = generate(model, prob.prompt, strat.gen, strat.spec, rng, false);
        rec.answer = join_tokens(gen.tokens);
        rec.text = rec.answer;
        try {
            rec.correct = check(prob, gen.tokens);
        } catch (const std::exception& e) {
            rec.correct = false;
            errors_by_slot[idx] = {strat.name, prob.id, s, std::string("checker: ") + e.what()};
            has_error[idx] = 1;
        }
        report.candidates[idx] = std::move(rec);
    }

    for (long idx = 0; idx < total; ++idx) {
        if (has_error[idx]) report.errors.push_back(std::move(errors_by_slot[idx]));
    }

    const std::vector<int> ks = pass_at_k_grid(n_samples);
    for (int st = 0; st < n_strategies; ++st) {
        StrategyCurve curve;
        curve.strategy = strategies[st].name;
        curve.ks = ks;

        std::vector<int> correct_counts(n_problems, 0);
        std::vector<int> run5(n_problems, 0), run32(n_problems, 0);
        long correct_total = 0;
        for (int p = 0; p < n_problems; ++p) {
            for (int s = 0; s < n_samples; ++s) {
                const long idx = (static_cast<long>(st) * n_problems + p) * n_samples + s;
                if (!report.candidates[idx].correct) continue;
                ++correct_counts[p];
                ++correct_total;
                if (s < 5) ++run5[p];
                if (s < 32) ++run32[p];
            }
        }
        for (int k : ks) {
            double acc = 0.0;
            for (int p = 0; p < n_problems; ++p) acc += pass_at_k(n_samples, correct_counts[p], k);
            curve.pass_at.push_back(acc / n_problems);
        }
        curve.stability_pass_rate =
            static_cast<double>(correct_total) / (static_cast<double>(n_problems) * n_samples);
        report.curves.push_back(std::move(curve));

        if (n_samples >= 32) {
            std::map<std::string, int> m5, m32;
            for (int p = 0; p < n_problems; ++p) {
                m5[problems[p].id] = run5[p];
                m32[problems[p].id] = run32[p];
            }
            report.tiers[strategies[st].name] = partition_tiers(m5, m32);
        }
    }
    return report;
}

std::vector<SweepPoint> default_sweep_grid(int k, int num_experts) {
    std::vector<double> taus{0.1, 0.3, 0.5, 0.7, 0.9, 1.0, 1.1, 1.3};
    std::vector<SweepPoint> grid;
    for (int k_keep = 0; k_keep <= k; ++k_keep) {
        for (double tau : taus) {
            for (int mult = 2; mult <= 7; ++mult) {
                const int range = mult * k;
                if (range > num_experts) continue;
                grid.push_back({k_keep, tau, range});
            }
        }
    }
    return grid;
}

SweepTable sweep(const Model& model, std::span<const Problem> problems,
                 std::span<const SweepPoint> grid, int n_samples, const GenConfig& gen,
                 uint64_t master_seed, int workers) {
    if (grid.empty()) throw InvalidInput("sweep: empty grid");
    SweepTable table;
    for (const SweepPoint& point : grid) {
        Strategy strat;
        strat.name = "es_kkeep" + std::to_string(point.k_keep) + "_tau" + format_double(point.tau) +
                     "_r" + std::to_string(point.range);
        strat.spec = SamplerSpec::expert_sample(model.config.top_k, point.k_keep, point.tau,
                                                point.range);
        strat.gen = gen;
        ScalingReport report =
            run_scaling_experiment(model, problems, n_samples, std::span(&strat, 1), master_seed,
                                   workers);
        SweepRow row;
        row.point = point;
        row.stability_pass_rate = report.curves[0].stability_pass_rate;
        row.ks = report.curves[0].ks;
        row.pass_at = report.curves[0].pass_at;
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_sweep_csv(const SweepTable& table, std::ostream& os) {
    os << "k_keep,tau,range,stability_pass_rate";
    if (!table.rows.empty()) {
        for (int k : table.rows[0].ks) os << ",pass_at_" << k;
    }
    os << '\n';
    for (const SweepRow& row : table.rows) {
        os << row.point.k_keep << ',' << format_double(row.point.tau) << ',' << row.point.range
           << ',' << format_double(row.stability_pass_rate);
        for (double v : row.pass_at) os << ',' << format_double(v);
        os << '\n';
    }
}

}  // namespace es
