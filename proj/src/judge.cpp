#include "es/judge.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "es/errors.hpp"
#include "es/numeric.hpp"

namespace es {

const std::string& judge_prompt_template() {
    static const std::string tmpl =
        "Please analyze and compare the similarity of the following two reasoning processes.\n"
        "\n"
        "Reasoning process 1:\n"
        "{text1}\n"
        "\n"
        "Reasoning process 2:\n"
        "{text2}\n"
        "\n"
        "Please follow these steps for analysis:\n"
        "\n"
        "Step 1: Extract the core steps of reasoning process 1\n"
        "Please summarize and extract the main reasoning steps and final answer of reasoning "
        "process 1, listing the key points concisely.\n"
        "\n"
        "Step 2: Extract the core steps of reasoning process 2\n"
        "Please summarize and extract the main reasoning steps and final answer of reasoning "
        "process 2, listing the key points concisely.\n"
        "\n"
        "Step 3: Comparative analysis\n"
        "Compare the two reasoning processes on:\n"
        "1. Whether the core approaches are the same\n"
        "2. The degree of similarity in reasoning steps\n"
        "\n"
        "Step 4: Provide similarity score\n"
        "Based on the following rating criteria, give a similarity score from 0 to 5:\n"
        "- 0 = Completely different reasoning methods and approaches\n"
        "- 1 = Slightly similar reasoning direction, but different methods\n"
        "- 2 = Some common reasoning steps, but overall approach is different\n"
        "- 3 = Similar core approach, but significant differences in specific steps\n"
        "- 4 = Essentially the same core approach, only minor differences in details or order\n"
        "- 5 = Essentially the same approach, only different wording\n"
        "\n"
        "Important Note: When scoring, do not consider whether the answers are the same!\n"
        "\n"
        "Please output the final score in the last line, in the format: [Final Score: X] (X is an "
        "integer from 0 to 5)\n";
    return tmpl;
}

uint64_t judge_prompt_template_checksum() { return fnv1a64(judge_prompt_template()); }

std::string render_judge_prompt(const std::string& text1, const std::string& text2) {
    if (text1.empty() || text2.empty()) throw InvalidInput("render_judge_prompt: empty text");
    std::string out = judge_prompt_template();
    auto substitute = [&out](const std::string& placeholder, const std::string& value) {
        const size_t pos = out.find(placeholder);
        out.replace(pos, placeholder.size(), value);
    };
    substitute("{text1}", text1);
    substitute("{text2}", text2);
    return out;
}

int parse_judge_score(const std::string& response) {
    static const std::regex pattern(R"(\[Final Score:\s*([0-9])\s*\])");
    auto begin = std::sregex_iterator(response.begin(), response.end(), pattern);
    auto end = std::sregex_iterator();
    std::optional<int> last;
    for (auto it = begin; it != end; ++it) last = (*it)[1].str()[0] - '0';
    if (!last) throw ParseFailure("no [Final Score: X] line found");
    if (*last > 5) throw ParseFailure("final score " + std::to_string(*last) + " outside 0..5");
    return *last;
}

JudgeStore::JudgeStore(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    file_ = dir / kFileName;
    std::ifstream is(file_);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        entries_[{j.at("problem_id").get<std::string>(), j.at("i").get<int>(),
                  j.at("j").get<int>()}] = j.at("response").get<std::string>();
    }
}

std::optional<std::string> JudgeStore::lookup(const std::string& problem_id, int i, int j) const {
    auto it = entries_.find({problem_id, i, j});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void JudgeStore::record(const std::string& problem_id, int i, int j, const std::string& prompt,
                        const std::string& response) {
    entries_[{problem_id, i, j}] = response;
    if (file_.empty()) return;
    nlohmann::json entry{{"problem_id", problem_id}, {"i", i}, {"j", j},
                         {"prompt", prompt},         {"response", response}};
    std::ofstream os(file_, std::ios::app);
    os << entry.dump() << '\n';
}

JudgeClient::JudgeClient(JudgeClientConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw InvalidInput("judge client: base_url is required");
}

std::string JudgeClient::complete(const std::string& prompt) const {
    nlohmann::json body{{"model", config_.model},
                        {"messages", nlohmann::json::array({nlohmann::json{
                                         {"role", "user"}, {"content", prompt}}})}};
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        httplib::Client cli(config_.base_url);
        cli.set_connection_timeout(config_.timeout_s, 0);
        cli.set_read_timeout(config_.timeout_s, 0);
        httplib::Headers headers;
        if (const char* token = std::getenv(config_.auth_env.c_str()); token && *token) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        auto res = cli.Post("/v1/chat/completions", headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            last_error = std::string("malformed completion body: ") + e.what();
        }
    }
    throw JudgeUnavailable("judge endpoint '" + config_.base_url + "' failed after " +
                           std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

JudgeResult judge_pairwise(const std::string& problem_id, const std::vector<std::string>& responses,
                           JudgeStore& store, const JudgeClient* client) {
    const int n = static_cast<int>(responses.size());
    if (n < 2) throw InvalidInput("judge_pairwise: need at least 2 responses");

    JudgeResult result;
    result.matrix = SimilarityMatrix(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            std::string raw;
            if (auto cached = store.lookup(problem_id, i, j)) {
                raw = *cached;
            } else if (client) {
                const std::string prompt = render_judge_prompt(responses[i], responses[j]);
                raw = client->complete(prompt);
                store.record(problem_id, i, j, prompt, raw);
            } else {
                result.errors.push_back({i, j, "pair missing from replay store"});
                continue;
            }
            try {
                const int score = parse_judge_score(raw);
                result.matrix.at(i, j) = score;
                result.matrix.at(j, i) = score;
            } catch (const ParseFailure& e) {
                result.errors.push_back({i, j, e.what()});
            }
        }
    }
    return result;
}

}  // namespace es
