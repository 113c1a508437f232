#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "es/bench.hpp"
#include "es/errors.hpp"
#include "es/harness.hpp"
#include "es/io.hpp"
#include "es/judge.hpp"
#include "es/numeric.hpp"
#include "es/profiler.hpp"
#include "es/scaling.hpp"
#include "es/toy_moe.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flat, namespaced run configuration. A JSON config file supplies any subset
// of the keys; command-line flags win over file values; unknown keys are
// rejected up front.
struct RunConfig {
    std::optional<std::string> model_preset;
    std::string model_checkpoint;
    std::optional<int> model_vocab_size, model_hidden_dim, model_num_layers,
        model_expert_hidden_dim;
    uint64_t model_seed = 42;

    std::string sampler_kind = "expert_sample";
    std::optional<int> sampler_k, sampler_k_keep, sampler_range;
    double sampler_tau = 1.0;

    std::string gen_preset = "normal";
    int gen_max_new_tokens = 16;
    std::optional<double> gen_token_temperature, gen_top_p;
    std::optional<int> gen_top_k_tokens;
    bool gen_top_k_none = false;

    int experiment_n = 8;
    std::string experiment_problems;
    uint64_t experiment_master_seed = 1;
    bool experiment_include_greedy_baseline = true;

    std::string out_dir = "out";
    int workers = 1;

    std::string judge_base_url;
    std::string judge_model = "deepseek-r1";
    std::string judge_auth_env = "ES_JUDGE_TOKEN";
    int judge_timeout_s = 120;
    int judge_max_retries = 2;
    std::string judge_replay_dir;

    std::string profile_mode = "model";
    std::string profile_phase = "all";
    int profile_tokens = 64;
    double profile_epsilon = es::kDefaultBoundaryEpsilon;

    std::vector<int> bench_batch_sizes{1};
    std::vector<int> bench_prompt_lengths{128};
    std::vector<int> bench_output_lengths{16};
    int bench_repetitions = 7;
    int bench_warmup = 2;
    bool bench_kernels = false;

    std::vector<int> sweep_k_keep_list;
    std::vector<double> sweep_tau_list;
    std::vector<int> sweep_range_list;
};

template <typename T>
void read_key(const json& j, T& out) {
    out = j.get<T>();
}

void apply_config_key(RunConfig& c, const std::string& key, const json& value) {
    if (key == "model.preset") return read_key(value, c.model_preset.emplace());
    if (key == "model.checkpoint") return read_key(value, c.model_checkpoint);
    if (key == "model.vocab_size") return read_key(value, c.model_vocab_size.emplace());
    if (key == "model.hidden_dim") return read_key(value, c.model_hidden_dim.emplace());
    if (key == "model.num_layers") return read_key(value, c.model_num_layers.emplace());
    if (key == "model.expert_hidden_dim")
        return read_key(value, c.model_expert_hidden_dim.emplace());
    if (key == "model.seed") return read_key(value, c.model_seed);
    if (key == "sampler.kind") return read_key(value, c.sampler_kind);
    if (key == "sampler.k") return read_key(value, c.sampler_k.emplace());
    if (key == "sampler.k_keep") return read_key(value, c.sampler_k_keep.emplace());
    if (key == "sampler.tau") return read_key(value, c.sampler_tau);
    if (key == "sampler.range") return read_key(value, c.sampler_range.emplace());
    if (key == "gen.preset") return read_key(value, c.gen_preset);
    if (key == "gen.max_new_tokens") return read_key(value, c.gen_max_new_tokens);
    if (key == "gen.token_temperature") return read_key(value, c.gen_token_temperature.emplace());
    if (key == "gen.top_p") return read_key(value, c.gen_top_p.emplace());
    if (key == "gen.top_k_tokens") {
        if (value.is_null()) {
            c.gen_top_k_none = true;
        } else {
            read_key(value, c.gen_top_k_tokens.emplace());
        }
        return;
    }
    if (key == "experiment.n") return read_key(value, c.experiment_n);
    if (key == "experiment.problems") return read_key(value, c.experiment_problems);
    if (key == "experiment.master_seed") return read_key(value, c.experiment_master_seed);
    if (key == "experiment.include_greedy_baseline")
        return read_key(value, c.experiment_include_greedy_baseline);
    if (key == "out.dir") return read_key(value, c.out_dir);
    if (key == "workers") return read_key(value, c.workers);
    if (key == "judge.base_url") return read_key(value, c.judge_base_url);
    if (key == "judge.model") return read_key(value, c.judge_model);
    if (key == "judge.auth_env") return read_key(value, c.judge_auth_env);
    if (key == "judge.timeout_s") return read_key(value, c.judge_timeout_s);
    if (key == "judge.max_retries") return read_key(value, c.judge_max_retries);
    if (key == "judge.replay_dir") return read_key(value, c.judge_replay_dir);
    if (key == "profile.mode") return read_key(value, c.profile_mode);
    if (key == "profile.phase") return read_key(value, c.profile_phase);
    if (key == "profile.tokens") return read_key(value, c.profile_tokens);
    if (key == "profile.epsilon") return read_key(value, c.profile_epsilon);
    if (key == "bench.batch_sizes") return read_key(value, c.bench_batch_sizes);
    if (key == "bench.prompt_lengths") return read_key(value, c.bench_prompt_lengths);
    if (key == "bench.output_lengths") return read_key(value, c.bench_output_lengths);
    if (key == "bench.repetitions") return read_key(value, c.bench_repetitions);
    if (key == "bench.warmup") return read_key(value, c.bench_warmup);
    if (key == "bench.kernels") return read_key(value, c.bench_kernels);
    if (key == "sweep.k_keep_list") return read_key(value, c.sweep_k_keep_list);
    if (key == "sweep.tau_list") return read_key(value, c.sweep_tau_list);
    if (key == "sweep.range_list") return read_key(value, c.sweep_range_list);
    throw es::InvalidInput("unknown config key '" + key + "'");
}

void load_config_file(RunConfig& c, const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw es::InvalidInput("cannot open config file '" + path.string() + "'");
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw es::InvalidInput("config file '" + path.string() + "': " + e.what());
    }
    if (!j.is_object()) throw es::InvalidInput("config file must hold a JSON object");
    for (const auto& [key, value] : j.items()) apply_config_key(c, key, value);
}

es::ModelConfig model_config(const RunConfig& c) {
    es::ModelConfig mc = es::ModelConfig::preset(c.model_preset.value_or("qwen3-30b-mini"));
    if (c.model_vocab_size) mc.vocab_size = *c.model_vocab_size;
    if (c.model_hidden_dim) mc.hidden_dim = *c.model_hidden_dim;
    if (c.model_num_layers) mc.num_layers = *c.model_num_layers;
    if (c.model_expert_hidden_dim) mc.expert_hidden_dim = *c.model_expert_hidden_dim;
    mc.seed = c.model_seed;
    return mc;
}

es::Model make_model(const RunConfig& c) {
    if (!c.model_checkpoint.empty()) return es::load_model(c.model_checkpoint);
    return es::build_model(model_config(c));
}

es::SamplerSpec sampler_spec(const RunConfig& c, const es::ModelConfig& mc) {
    const int k = c.sampler_k.value_or(mc.top_k);
    es::SamplerSpec spec;
    if (c.sampler_kind == "greedy") {
        spec = es::SamplerSpec::greedy(k);
    } else if (c.sampler_kind == "expert_sample") {
        spec = es::SamplerSpec::expert_sample_defaults(k);
        if (c.sampler_k_keep) spec.k_keep = *c.sampler_k_keep;
        if (c.sampler_range) spec.range = *c.sampler_range;
        spec.tau = c.sampler_tau;
    } else {
        throw es::InvalidInput("sampler.kind must be 'greedy' or 'expert_sample', got '" +
                               c.sampler_kind + "'");
    }
    spec.validate(mc.num_experts);
    return spec;
}

es::GenConfig gen_config(const RunConfig& c) {
    es::GenConfig gen = es::GenConfig::preset(c.gen_preset, c.gen_max_new_tokens);
    if (c.gen_token_temperature) gen.token_temperature = *c.gen_token_temperature;
    if (c.gen_top_p) gen.top_p = *c.gen_top_p;
    if (c.gen_top_k_none) gen.top_k_tokens.reset();
    if (c.gen_top_k_tokens) gen.top_k_tokens = *c.gen_top_k_tokens;
    gen.validate();
    return gen;
}

json effective_config_json(const RunConfig& c) {
    json j;
    j["model.preset"] = c.model_preset.value_or("qwen3-30b-mini");
    j["model.checkpoint"] = c.model_checkpoint;
    if (c.model_vocab_size) j["model.vocab_size"] = *c.model_vocab_size;
    if (c.model_hidden_dim) j["model.hidden_dim"] = *c.model_hidden_dim;
    if (c.model_num_layers) j["model.num_layers"] = *c.model_num_layers;
    if (c.model_expert_hidden_dim) j["model.expert_hidden_dim"] = *c.model_expert_hidden_dim;
    j["model.seed"] = c.model_seed;
    j["sampler.kind"] = c.sampler_kind;
    if (c.sampler_k) j["sampler.k"] = *c.sampler_k;
    if (c.sampler_k_keep) j["sampler.k_keep"] = *c.sampler_k_keep;
    j["sampler.tau"] = c.sampler_tau;
    if (c.sampler_range) j["sampler.range"] = *c.sampler_range;
    j["gen.preset"] = c.gen_preset;
    j["gen.max_new_tokens"] = c.gen_max_new_tokens;
    if (c.gen_token_temperature) j["gen.token_temperature"] = *c.gen_token_temperature;
    if (c.gen_top_p) j["gen.top_p"] = *c.gen_top_p;
    if (c.gen_top_k_none) j["gen.top_k_tokens"] = nullptr;
    if (c.gen_top_k_tokens) j["gen.top_k_tokens"] = *c.gen_top_k_tokens;
    j["experiment.n"] = c.experiment_n;
    j["experiment.problems"] = c.experiment_problems;
    j["experiment.master_seed"] = c.experiment_master_seed;
    j["experiment.include_greedy_baseline"] = c.experiment_include_greedy_baseline;
    j["out.dir"] = c.out_dir;
    j["workers"] = c.workers;
    j["judge.base_url"] = c.judge_base_url;
    j["judge.model"] = c.judge_model;
    j["judge.auth_env"] = c.judge_auth_env;
    j["judge.timeout_s"] = c.judge_timeout_s;
    j["judge.max_retries"] = c.judge_max_retries;
    j["judge.replay_dir"] = c.judge_replay_dir;
    j["profile.mode"] = c.profile_mode;
    j["profile.phase"] = c.profile_phase;
    j["profile.tokens"] = c.profile_tokens;
    j["profile.epsilon"] = c.profile_epsilon;
    j["bench.batch_sizes"] = c.bench_batch_sizes;
    j["bench.prompt_lengths"] = c.bench_prompt_lengths;
    j["bench.output_lengths"] = c.bench_output_lengths;
    j["bench.repetitions"] = c.bench_repetitions;
    j["bench.warmup"] = c.bench_warmup;
    j["bench.kernels"] = c.bench_kernels;
    j["sweep.k_keep_list"] = c.sweep_k_keep_list;
    j["sweep.tau_list"] = c.sweep_tau_list;
    j["sweep.range_list"] = c.sweep_range_list;
    return j;
}

fs::path prepare_out_dir(const RunConfig& c) {
    fs::path dir(c.out_dir);
    fs::create_directories(dir);
    std::ofstream os(dir / "effective_config.json");
    os << effective_config_json(c).dump(2) << '\n';
    return dir;
}

std::vector<es::Problem> load_problems(const RunConfig& c, const es::ModelConfig& mc) {
    if (!c.experiment_problems.empty()) {
        auto problems = es::read_problems_jsonl(c.experiment_problems);
        for (const auto& p : problems) {
            for (const int t : p.prompt) {
                if (t < 0 || t >= mc.vocab_size)
                    throw es::InvalidInput("problem '" + p.id + "': token out of vocab");
            }
        }
        return problems;
    }
    // Built-in demo prompts.
    std::vector<es::Problem> problems;
    for (int i = 0; i < 4; ++i) {
        es::Problem p;
        p.id = "demo-" + std::to_string(i);
        for (int t = 0; t < 8; ++t) p.prompt.push_back((7 * i + 3 * t + 1) % mc.vocab_size);
        problems.push_back(std::move(p));
    }
    return problems;
}

std::vector<es::Strategy> build_strategies(const RunConfig& c, const es::ModelConfig& mc) {
    const es::SamplerSpec spec = sampler_spec(c, mc);
    const es::GenConfig gen = gen_config(c);
    std::vector<es::Strategy> strategies;
    if (c.experiment_include_greedy_baseline && spec.kind != es::SamplerKind::Greedy) {
        strategies.push_back({"greedy", es::SamplerSpec::greedy(spec.k), gen});
    }
    strategies.push_back({spec.kind == es::SamplerKind::Greedy ? "greedy" : "expert_sample", spec,
                          gen});
    return strategies;
}

json curve_json(const es::StrategyCurve& curve) {
    json j;
    j["strategy"] = curve.strategy;
    j["k"] = curve.ks;
    j["pass_at_k"] = curve.pass_at;
    j["stability_pass_rate"] = curve.stability_pass_rate;
    return j;
}

int cmd_route_demo(const RunConfig& c) {
    const es::Model model = make_model(c);
    const es::ModelConfig& mc = model.config;
    const es::SamplerSpec spec = sampler_spec(c, mc);
    prepare_out_dir(c);

    std::vector<int> prompt;
    for (int t = 0; t < 4; ++t) prompt.push_back((3 * t + 1) % mc.vocab_size);

    es::RouteTrace trace;
    es::Rng rng(c.experiment_master_seed);
    es::forward(model, prompt, spec, rng, &trace);

    std::cout << "model: " << c.model_preset.value_or("qwen3-30b-mini") << "  experts=" << mc.num_experts
              << " top_k=" << mc.top_k << " layers=" << mc.num_layers << '\n';
    std::cout << "sampler: " << spec.describe() << '\n';
    if (spec.kind == es::SamplerKind::ExpertSample && spec.k_keep == spec.k)
        std::cout << "note: k_keep == k, selection degenerates to greedy\n";
    std::cout << "selections for token position 0:\n";
    for (const es::TraceEntry& entry : trace.entries) {
        if (entry.position != 0) continue;
        std::cout << "  layer " << entry.layer << ": head [";
        for (size_t i = 0; i < entry.selection.head.size(); ++i)
            std::cout << (i ? " " : "") << entry.selection.head[i];
        std::cout << "] tail [";
        for (size_t i = 0; i < entry.selection.tail.size(); ++i)
            std::cout << (i ? " " : "") << entry.selection.tail[i];
        std::cout << "] weights [";
        for (size_t i = 0; i < entry.selection.weights.size(); ++i)
            std::cout << (i ? " " : "") << es::format_double(entry.selection.weights[i]);
        std::cout << "]\n";
    }
    std::cout << "trace entries: " << trace.entries.size() << " (layers x positions)\n";
    return 0;
}

int cmd_profile(const RunConfig& c) {
    const fs::path dir = prepare_out_dir(c);
    const es::PhaseFilter filter = es::phase_filter_from_string(c.profile_phase);

    es::RouteTrace trace;
    int top_k = 0;
    if (c.profile_mode == "uniform") {
        const es::ModelConfig mc = model_config(c);
        top_k = mc.top_k;
        std::vector<double> logits(mc.num_experts, 0.0);
        for (int t = 0; t < c.profile_tokens; ++t) {
            es::TraceEntry entry;
            entry.layer = 0;
            entry.position = t;
            entry.phase = es::Phase::Prefill;
            entry.dist = es::router_probs(logits);
            trace.entries.push_back(std::move(entry));
        }
    } else if (c.profile_mode == "model") {
        const es::Model model = make_model(c);
        top_k = model.config.top_k;
        const es::SamplerSpec spec = sampler_spec(c, model.config);
        const es::GenConfig gen = gen_config(c);
        const auto problems = load_problems(c, model.config);
        for (size_t i = 0; i < problems.size(); ++i) {
            es::Rng rng(es::seed_mix(c.experiment_master_seed, i));
            es::GenerateResult res = es::generate(model, problems[i].prompt, gen, spec, rng);
            trace.entries.insert(trace.entries.end(),
                                 std::make_move_iterator(res.trace.entries.begin()),
                                 std::make_move_iterator(res.trace.entries.end()));
        }
    } else {
        throw es::InvalidInput("profile.mode must be 'model' or 'uniform'");
    }

    const es::RankProfile profile = es::collect_rank_profile(trace, filter);
    {
        std::ofstream os(dir / "rank_profile.csv");
        es::write_rank_profile_csv(profile, os);
    }
    {
        std::ofstream os(dir / "rank_profile_top4k.csv");
        es::write_rank_profile_csv(profile, os, 4 * top_k);
    }
    const es::HeadTailStats stats = es::head_tail_stats(profile, c.profile_epsilon);
    json j;
    j["gap_1_to_5"] = stats.gap_1_to_5;
    j["cumdiff_5_to_32"] = stats.cumdiff_5_to_32;
    j["boundary_rank"] = stats.boundary_rank;
    j["gap_hi_rank"] = stats.gap_hi_rank;
    j["cum_hi_rank"] = stats.cum_hi_rank;
    j["token_count"] = profile.token_count;
    j["layer_count"] = profile.layer_count;
    std::ofstream os(dir / "head_tail_stats.json");
    os << j.dump(2) << '\n';
    std::cout << "profile: " << profile.token_count << " entries, boundary rank "
              << stats.boundary_rank << '\n';
    return 0;
}

int cmd_scale(const RunConfig& c) {
    const es::Model model = make_model(c);
    const fs::path dir = prepare_out_dir(c);
    const auto problems = load_problems(c, model.config);
    const auto strategies = build_strategies(c, model.config);

    const es::ScalingReport report = es::run_scaling_experiment(
        model, problems, c.experiment_n, strategies, c.experiment_master_seed, c.workers);

    es::write_candidates_jsonl(report.candidates, dir / "candidates.jsonl");

    json j;
    j["n_samples"] = report.n_samples;
    j["master_seed"] = report.master_seed;
    j["curves"] = json::array();
    for (const auto& curve : report.curves) j["curves"].push_back(curve_json(curve));
    if (!report.tiers.empty()) {
        json tiers;
        for (const auto& [strategy, by_problem] : report.tiers) {
            json t;
            for (const auto& [pid, tier] : by_problem) t[pid] = es::to_string(tier);
            tiers[strategy] = std::move(t);
        }
        j["tiers"] = std::move(tiers);
    }
    j["errors"] = json::array();
    for (const auto& e : report.errors) {
        j["errors"].push_back(json{{"strategy", e.strategy},
                                   {"problem_id", e.problem_id},
                                   {"sample_index", e.sample_index},
                                   {"message", e.message}});
    }
    std::ofstream os(dir / "report.json");
    os << j.dump(2) << '\n';

    for (const auto& curve : report.curves) {
        std::cout << curve.strategy << ": pass@" << curve.ks.back() << " = "
                  << es::format_double(curve.pass_at.back())
                  << ", pass rate = " << es::format_double(curve.stability_pass_rate) << '\n';
    }
    return report.errors.empty() ? 0 : 1;
}

int cmd_verify(const RunConfig& c, const std::string& candidates_path, const std::string& method,
               const std::string& report_path, bool random_rewards, uint64_t reward_seed) {
    if (method != "bon" && method != "wmv")
        throw es::InvalidInput("verify method must be 'bon' or 'wmv', got '" + method + "'");
    auto records = es::read_candidates_jsonl(fs::path(candidates_path));
    auto groups = es::group_candidates(records);
    if (groups.empty()) throw es::InvalidInput("no candidates in '" + candidates_path + "'");

    json out;
    out["method"] = method;
    json results = json::array();
    for (auto& [key, set] : groups) {
        if (random_rewards) es::assign_random_rewards(set, reward_seed);
        json r;
        r["strategy"] = key.first;
        r["problem_id"] = key.second;
        if (method == "bon") {
            const es::CandidateRecord best = es::best_of_n(set);
            r["answer"] = best.answer;
            r["sample_index"] = best.sample_index;
            r["reward_score"] = *best.reward_score;
            r["correct"] = best.correct;
        } else {
            r["answer"] = es::weighted_majority_vote(set);
        }
        results.push_back(std::move(r));
    }
    out["results"] = std::move(results);

    prepare_out_dir(c);
    std::ofstream os(report_path);
    if (!os) throw es::InvalidInput("cannot write report '" + report_path + "'");
    os << out.dump(2) << '\n';
    std::cout << method << ": " << out["results"].size() << " (strategy, problem) groups\n";
    return 0;
}

int cmd_sweep(const RunConfig& c) {
    const es::Model model = make_model(c);
    const fs::path dir = prepare_out_dir(c);
    const auto problems = load_problems(c, model.config);
    const es::GenConfig gen = gen_config(c);

    std::vector<es::SweepPoint> grid;
    if (c.sweep_k_keep_list.empty() && c.sweep_tau_list.empty() && c.sweep_range_list.empty()) {
        grid = es::default_sweep_grid(model.config.top_k, model.config.num_experts);
    } else {
        std::vector<int> k_keeps = c.sweep_k_keep_list;
        std::vector<double> taus = c.sweep_tau_list;
        std::vector<int> ranges = c.sweep_range_list;
        if (k_keeps.empty()) k_keeps = {model.config.top_k / 2 + 1};
        if (taus.empty()) taus = {1.0};
        if (ranges.empty()) ranges = {4 * model.config.top_k};
        for (int kk : k_keeps)
            for (double tau : taus)
                for (int r : ranges) grid.push_back({kk, tau, r});
    }

    const es::SweepTable table = es::sweep(model, problems, grid, c.experiment_n, gen,
                                           c.experiment_master_seed, c.workers);
    std::ofstream os(dir / "sweep.csv");
    es::write_sweep_csv(table, os);
    std::cout << "sweep: " << table.rows.size() << " grid points -> " << (dir / "sweep.csv")
              << '\n';
    return 0;
}

int cmd_bench(const RunConfig& c) {
    const fs::path dir = prepare_out_dir(c);
    es::BenchConfig bc;
    // The library's bench default model is tuned for stable timing; explicit
    // model keys override it.
    const bool model_configured = c.model_preset || !c.model_checkpoint.empty() ||
                                  c.model_vocab_size || c.model_hidden_dim ||
                                  c.model_num_layers || c.model_expert_hidden_dim;
    if (model_configured) {
        bc.model = model_config(c);
        bc.es_spec = sampler_spec(c, bc.model);
    } else if (c.sampler_kind == "expert_sample") {
        bc.es_spec = sampler_spec(c, bc.model);
    }
    if (bc.es_spec.kind != es::SamplerKind::ExpertSample)
        bc.es_spec = es::SamplerSpec::expert_sample_defaults(bc.model.top_k);
    bc.batch_sizes = c.bench_batch_sizes;
    bc.prompt_lengths = c.bench_prompt_lengths;
    bc.output_lengths = c.bench_output_lengths;
    bc.repetitions = c.bench_repetitions;
    bc.warmup = c.bench_warmup;
    bc.seed = c.experiment_master_seed;
    bc.workers = c.workers;

    const es::BenchReport report = es::bench_routing(bc);
    {
        std::ofstream os(dir / "bench.csv");
        es::write_bench_csv(report, os);
    }
    json j;
    j["control_band_pct"] = report.control_band_pct;
    j["es_band_pct"] = report.es_band_pct;
    j["es_rng_draws"] = report.es_rng_draws;
    j["expected_rng_draws"] = report.expected_rng_draws;
    j["repetitions"] = report.repetitions;
    j["iterations_auto_scaled"] = report.iterations_auto_scaled;
    j["workers"] = report.workers;
    {
        std::ofstream os(dir / "bench.json");
        os << j.dump(2) << '\n';
    }
    if (c.bench_kernels) {
        const auto rows = es::bench_kernels(bc);
        std::ofstream os(dir / "kernels.csv");
        es::write_kernel_csv(rows, os);
    }
    std::cout << "bench: control band " << es::format_double(report.control_band_pct)
              << "%, expert-sample band " << es::format_double(report.es_band_pct) << "%\n";
    std::cout << "rng draws: " << report.es_rng_draws << " (expected "
              << report.expected_rng_draws << ")\n";
    return 0;
}

int cmd_judge(const RunConfig& c, const std::string& candidates_path) {
    const fs::path dir = prepare_out_dir(c);
    auto records = es::read_candidates_jsonl(fs::path(candidates_path));
    auto groups = es::group_candidates(records);
    if (groups.empty()) throw es::InvalidInput("no candidates in '" + candidates_path + "'");

    es::JudgeStore store = c.judge_replay_dir.empty() ? es::JudgeStore(dir / "judge_store")
                                                      : es::JudgeStore(c.judge_replay_dir);
    std::unique_ptr<es::JudgeClient> client;
    if (!c.judge_base_url.empty()) {
        es::JudgeClientConfig jc;
        jc.base_url = c.judge_base_url;
        jc.model = c.judge_model;
        jc.auth_env = c.judge_auth_env;
        jc.timeout_s = c.judge_timeout_s;
        jc.max_retries = c.judge_max_retries;
        client = std::make_unique<es::JudgeClient>(jc);
    }

    json scores = json::array();
    int error_count = 0;
    for (const auto& [key, set] : groups) {
        std::vector<std::string> texts;
        for (const auto& r : set.records) texts.push_back(r.text.value_or(r.answer));
        if (texts.size() < 2) continue;
        const std::string group_id = key.first + "/" + key.second;
        es::JudgeResult result = es::judge_pairwise(group_id, texts, store, client.get());
        error_count += static_cast<int>(result.errors.size());

        const std::string stem = "similarity_" + key.first + "_" + key.second;
        std::ofstream mos(dir / (stem + ".csv"));
        es::write_similarity_csv(result.matrix, mos);

        json entry;
        entry["strategy"] = key.first;
        entry["problem_id"] = key.second;
        entry["pairs_missing"] = result.errors.size();
        if (result.errors.empty()) {
            entry["diversity_score"] = es::diversity_score(result.matrix);
        } else {
            entry["diversity_score"] = nullptr;
            for (const auto& e : result.errors)
                std::cerr << "judge: " << group_id << " pair (" << e.i << "," << e.j
                          << "): " << e.reason << '\n';
        }
        scores.push_back(std::move(entry));
    }
    json out;
    out["diversity"] = std::move(scores);
    std::ofstream os(dir / "diversity.json");
    os << out.dump(2) << '\n';
    std::cout << "judge: " << out["diversity"].size() << " groups, " << error_count
              << " missing pairs\n";
    return error_count == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Expert-Sample desk-scale laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<int> workers_flag;
    std::optional<uint64_t> seed_flag;
    std::string out_flag, replay_flag;
    app.add_option("--config", config_path, "JSON config file with flat namespaced keys");
    app.add_option("--workers", workers_flag, "worker pool size");
    app.add_option("--seed", seed_flag, "master seed (overrides experiment.master_seed)");
    app.add_option("--out", out_flag, "output directory (overrides out.dir)");
    app.add_option("--replay", replay_flag, "judge replay store directory");

    auto* route_demo = app.add_subcommand("route-demo", "one forward pass, selection table");
    auto* profile = app.add_subcommand("profile", "router rank-profile CSVs");
    auto* scale = app.add_subcommand("scale", "pass@n scaling experiment");
    auto* verify = app.add_subcommand("verify", "best-of-n / weighted majority voting");
    auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep table");
    auto* bench = app.add_subcommand("bench", "routing overhead benchmark");
    auto* judge = app.add_subcommand("judge", "pairwise similarity judging");

    std::string verify_candidates, verify_method = "bon", verify_report = "verify_report.json";
    bool verify_random_rewards = false;
    uint64_t verify_reward_seed = 1;
    verify->add_option("--candidates", verify_candidates, "candidates JSONL")->required();
    verify->add_option("--method", verify_method, "bon | wmv");
    verify->add_option("--report", verify_report, "report output path");
    verify->add_flag("--random-rewards", verify_random_rewards,
                     "assign seeded uniform rewards (pipeline testing)");
    verify->add_option("--reward-seed", verify_reward_seed, "seed for --random-rewards");

    std::string judge_candidates;
    judge->add_option("--candidates", judge_candidates, "candidates JSONL")->required();

    try {
        app.parse(argc, argv);

        RunConfig config;
        if (!config_path.empty()) load_config_file(config, config_path);
        if (workers_flag) config.workers = *workers_flag;
        if (seed_flag) config.experiment_master_seed = *seed_flag;
        if (!out_flag.empty()) config.out_dir = out_flag;
        if (!replay_flag.empty()) config.judge_replay_dir = replay_flag;
        if (config.workers < 1) throw es::InvalidInput("--workers must be >= 1");

        if (route_demo->parsed()) return cmd_route_demo(config);
        if (profile->parsed()) return cmd_profile(config);
        if (scale->parsed()) return cmd_scale(config);
        if (verify->parsed())
            return cmd_verify(config, verify_candidates, verify_method, verify_report,
                              verify_random_rewards, verify_reward_seed);
        if (sweep_cmd->parsed()) return cmd_sweep(config);
        if (bench->parsed()) return cmd_bench(config);
        if (judge->parsed()) return cmd_judge(config, judge_candidates);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
