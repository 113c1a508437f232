#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "es/errors.hpp"
#include "es/scaling.hpp"

using namespace es;

namespace {

Model tiny_model() {
    ModelConfig config = ModelConfig::preset("gpt-oss-20b-mini");
    config.num_layers = 2;
    config.vocab_size = 64;
    return build_model(config);
}

std::vector<Problem> tiny_problems(const ModelConfig& c, int count) {
    std::vector<Problem> problems;
    for (int i = 0; i < count; ++i) {
        Problem p;
        p.id = "p" + std::to_string(i);
        for (int t = 0; t < 4; ++t) p.prompt.push_back((3 * i + 5 * t + 2) % c.vocab_size);
        problems.push_back(std::move(p));
    }
    return problems;
}

std::string candidates_bytes(const ScalingReport& report) {
    std::ostringstream os;
    write_candidates_jsonl(report.candidates, os);
    return os.str();
}

}  // namespace

TEST_CASE("candidate seeds are a pure function of the indices") {
    CHECK(candidate_seed(1, 2, 3, 4) == candidate_seed(1, 2, 3, 4));
    CHECK(candidate_seed(1, 2, 3, 4) != candidate_seed(2, 2, 3, 4));
    CHECK(candidate_seed(1, 2, 3, 4) != candidate_seed(1, 3, 3, 4));
    CHECK(candidate_seed(1, 2, 3, 4) != candidate_seed(1, 2, 4, 4));
    CHECK(candidate_seed(1, 2, 3, 4) != candidate_seed(1, 2, 3, 5));
}

TEST_CASE("greedy everything passes its own reference deterministically") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 3);
    std::vector<Strategy> strategies{
        {"greedy", SamplerSpec::greedy(model.config.top_k), GenConfig::greedy(5)}};

    auto report = run_scaling_experiment(model, problems, 1, strategies, 7);
    REQUIRE(report.curves.size() == 1);
    CHECK(report.curves[0].ks == std::vector<int>{1});
    CHECK(report.curves[0].pass_at[0] == 1.0);
    CHECK(report.curves[0].stability_pass_rate == 1.0);
    for (const auto& rec : report.candidates) CHECK(rec.correct);
    CHECK(report.errors.empty());
}

TEST_CASE("degenerate expert-sample equals the greedy strategy candidate for candidate") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 2);
    const int k = model.config.top_k;

    std::vector<Strategy> greedy{{"x", SamplerSpec::greedy(k), GenConfig::normal(5)}};
    std::vector<Strategy> degenerate{
        {"x", SamplerSpec::expert_sample(k, k, 1.0, 4 * k), GenConfig::normal(5)}};

    auto a = run_scaling_experiment(model, problems, 4, greedy, 99);
    auto b = run_scaling_experiment(model, problems, 4, degenerate, 99);
    CHECK(candidates_bytes(a) == candidates_bytes(b));
    CHECK(a.curves[0].pass_at == b.curves[0].pass_at);
}

TEST_CASE("pass@k curves are monotone in k") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 3);
    std::vector<Strategy> strategies{
        {"es", SamplerSpec::expert_sample_defaults(model.config.top_k), GenConfig::normal(4)},
        {"greedy", SamplerSpec::greedy(model.config.top_k), GenConfig::normal(4)}};

    auto report = run_scaling_experiment(model, problems, 8, strategies, 3);
    for (const auto& curve : report.curves) {
        for (size_t i = 1; i < curve.pass_at.size(); ++i)
            CHECK(curve.pass_at[i] >= curve.pass_at[i - 1]);
    }
}

TEST_CASE("byte-identical output across worker counts") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 3);
    std::vector<Strategy> strategies{
        {"es", SamplerSpec::expert_sample_defaults(model.config.top_k), GenConfig::normal(4)}};

    auto w1 = run_scaling_experiment(model, problems, 6, strategies, 11, 1);
    auto w4 = run_scaling_experiment(model, problems, 6, strategies, 11, 4);
    CHECK(candidates_bytes(w1) == candidates_bytes(w4));
}

TEST_CASE("checker failures mark candidates incorrect and keep running") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 2);
    std::vector<Strategy> strategies{
        {"greedy", SamplerSpec::greedy(model.config.top_k), GenConfig::greedy(3)}};

    Checker flaky = [](const Problem& p, const std::vector<int>&) -> bool {
        if (p.id == "p1") throw std::runtime_error("verifier offline");
        return true;
    };
    auto report = run_scaling_experiment(model, problems, 2, strategies, 5, 1, flaky);
    CHECK(report.errors.size() == 2);  // both p1 samples
    for (const auto& e : report.errors) CHECK(e.problem_id == "p1");
    int correct = 0;
    for (const auto& rec : report.candidates) correct += rec.correct;
    CHECK(correct == 2);  // only the p0 samples
}

TEST_CASE("experiment input validation") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 1);
    std::vector<Strategy> strategies{
        {"greedy", SamplerSpec::greedy(model.config.top_k), GenConfig::greedy(3)}};
    CHECK_THROWS_AS(run_scaling_experiment(model, problems, 0, strategies, 1), InvalidInput);
    CHECK_THROWS_AS(run_scaling_experiment(model, {}, 1, strategies, 1), InvalidInput);
    CHECK_THROWS_AS(run_scaling_experiment(model, problems, 1, {}, 1), InvalidInput);

    std::vector<Strategy> bad{{"es", SamplerSpec::expert_sample(4, 2, 1.0, 64), GenConfig::greedy(3)}};
    CHECK_THROWS_AS(run_scaling_experiment(model, problems, 1, bad, 1), InvalidInput);
}

TEST_CASE("tiers appear once n reaches 32") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 2);
    std::vector<Strategy> strategies{
        {"greedy", SamplerSpec::greedy(model.config.top_k), GenConfig::greedy(2)}};

    auto small = run_scaling_experiment(model, problems, 8, strategies, 1);
    CHECK(small.tiers.empty());

    auto full = run_scaling_experiment(model, problems, 32, strategies, 1);
    REQUIRE(full.tiers.count("greedy") == 1);
    // Greedy candidates match the greedy reference on every run.
    for (const auto& [pid, tier] : full.tiers.at("greedy")) CHECK(tier == TierLabel::Correct);
}

TEST_CASE("default sweep grid includes the recommended configuration") {
    auto grid = default_sweep_grid(8, 128);
    const bool has_default = std::any_of(grid.begin(), grid.end(), [](const SweepPoint& p) {
        return p.k_keep == 5 && p.tau == 1.0 && p.range == 32;
    });
    CHECK(has_default);
    for (const auto& p : grid) {
        CHECK(p.range <= 128);
        CHECK(p.range >= 16);
        CHECK(p.k_keep >= 0);
        CHECK(p.k_keep <= 8);
    }

    // Ranges above the expert count are dropped.
    auto clamped = default_sweep_grid(8, 32);
    for (const auto& p : clamped) CHECK(p.range <= 32);
}

TEST_CASE("sweep rows: greedy-equivalent point matches the greedy baseline") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 2);
    const int k = model.config.top_k;
    const GenConfig gen = GenConfig::normal(4);

    std::vector<SweepPoint> grid{{k, 0.7, 4 * k}};
    auto table = sweep(model, problems, grid, 4, gen, 21);
    REQUIRE(table.rows.size() == 1);

    std::vector<Strategy> baseline{{"greedy", SamplerSpec::greedy(k), gen}};
    auto greedy_report = run_scaling_experiment(model, problems, 4, baseline, 21);
    CHECK(table.rows[0].pass_at == greedy_report.curves[0].pass_at);
    CHECK(table.rows[0].stability_pass_rate == greedy_report.curves[0].stability_pass_rate);

    CHECK_THROWS_AS(sweep(model, problems, {}, 4, gen, 21), InvalidInput);
}

TEST_CASE("sweep csv shape") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 1);
    std::vector<SweepPoint> grid{{2, 1.0, 8}, {3, 1.0, 8}};
    auto table = sweep(model, problems, grid, 2, GenConfig::normal(3), 1);

    std::ostringstream os;
    write_sweep_csv(table, os);
    std::istringstream lines(os.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "k_keep,tau,range,stability_pass_rate,pass_at_1,pass_at_2");
    int rows = 0;
    std::string line;
    while (std::getline(lines, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("candidates jsonl round trip") {
    const Model model = tiny_model();
    const auto problems = tiny_problems(model.config, 2);
    std::vector<Strategy> strategies{
        {"es", SamplerSpec::expert_sample_defaults(model.config.top_k), GenConfig::normal(3)}};
    auto report = run_scaling_experiment(model, problems, 3, strategies, 13);

    std::ostringstream os;
    write_candidates_jsonl(report.candidates, os);
    std::istringstream is(os.str());
    auto loaded = read_candidates_jsonl(is);
    REQUIRE(loaded.size() == report.candidates.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].problem_id == report.candidates[i].problem_id);
        CHECK(loaded[i].sample_index == report.candidates[i].sample_index);
        CHECK(loaded[i].answer == report.candidates[i].answer);
        CHECK(loaded[i].correct == report.candidates[i].correct);
        CHECK(loaded[i].seed == report.candidates[i].seed);
    }

    auto groups = group_candidates(loaded);
    CHECK(groups.size() == 2);
    for (const auto& [key, set] : groups) {
        CHECK(set.records.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(set.records[i].sample_index == i);
    }
}
