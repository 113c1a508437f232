#include "es/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "es/errors.hpp"

namespace es {

std::vector<Problem> read_problems_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open problems file '" + path.string() + "'");
    std::vector<Problem> problems;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        Problem p;
        p.id = j.at("id").get<std::string>();
        p.prompt = j.at("tokens").get<std::vector<int>>();
        if (p.prompt.empty())
            throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": empty token list");
        problems.push_back(std::move(p));
    }
    if (problems.empty()) throw InvalidInput("problems file '" + path.string() + "' is empty");
    return problems;
}

void write_problems_jsonl(std::span<const Problem> problems, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot write problems file '" + path.string() + "'");
    for (const Problem& p : problems) {
        nlohmann::json j{{"id", p.id}, {"tokens", p.prompt}};
        os << j.dump() << '\n';
    }
}

namespace {

nlohmann::json candidate_to_json(const CandidateRecord& r) {
    nlohmann::json j;
    j["problem_id"] = r.problem_id;
    j["sample_index"] = r.sample_index;
    j["answer"] = r.answer;
    j["reward_score"] = r.reward_score ? nlohmann::json(*r.reward_score) : nlohmann::json(nullptr);
    j["correct"] = r.correct;
    j["text"] = r.text ? nlohmann::json(*r.text) : nlohmann::json(nullptr);
    j["strategy"] = r.strategy;
    j["seed"] = r.seed;
    return j;
}

CandidateRecord candidate_from_json(const nlohmann::json& j) {
    CandidateRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.sample_index = j.at("sample_index").get<int>();
    r.answer = j.at("answer").get<std::string>();
    if (j.contains("reward_score") && !j.at("reward_score").is_null())
        r.reward_score = j.at("reward_score").get<double>();
    r.correct = j.at("correct").get<bool>();
    if (j.contains("text") && !j.at("text").is_null()) r.text = j.at("text").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    return r;
}

}  // namespace

void write_candidates_jsonl(std::span<const CandidateRecord> records, std::ostream& os) {
    for (const CandidateRecord& r : records) os << candidate_to_json(r).dump() << '\n';
}

void write_candidates_jsonl(std::span<const CandidateRecord> records,
                            const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot write candidates file '" + path.string() + "'");
    write_candidates_jsonl(records, os);
}

std::vector<CandidateRecord> read_candidates_jsonl(std::istream& is) {
    std::vector<CandidateRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(candidate_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw InvalidInput("candidates line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

std::vector<CandidateRecord> read_candidates_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open candidates file '" + path.string() + "'");
    return read_candidates_jsonl(is);
}

std::map<std::pair<std::string, std::string>, CandidateSet> group_candidates(
    std::span<const CandidateRecord> records) {
    std::map<std::pair<std::string, std::string>, CandidateSet> groups;
    for (const CandidateRecord& r : records) {
        CandidateSet& set = groups[{r.strategy, r.problem_id}];
        set.problem_id = r.problem_id;
        set.records.push_back(r);
    }
    for (auto& [key, set] : groups) {
        std::sort(set.records.begin(), set.records.end(),
                  [](const CandidateRecord& a, const CandidateRecord& b) {
                      return a.sample_index < b.sample_index;
                  });
    }
    return groups;
}

std::string join_tokens(std::span<const int> tokens) {
    std::ostringstream ss;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) ss << ' ';
        ss << tokens[i];
    }
    return ss.str();
}

}  // namespace es
