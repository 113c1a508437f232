#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "es/errors.hpp"
#include "es/harness.hpp"

namespace es {

// The pairwise reasoning-similarity prompt, with {text1}/{text2} placeholders.
// Pinned by checksum; rendering must stay byte-exact.
const std::string& judge_prompt_template();
uint64_t judge_prompt_template_checksum();

std::string render_judge_prompt(const std::string& text1, const std::string& text2);

// Bottom-up scan for `[Final Score: X]`; the last occurrence in the document
// wins. Throws ParseFailure when absent or out of 0..5.
int parse_judge_score(const std::string& response);

// Append-only JSONL store of raw judge exchanges, keyed by (problem_id, i, j).
// Doubles as the offline replay source.
class JudgeStore {
public:
    JudgeStore() = default;  // in-memory only
    explicit JudgeStore(const std::filesystem::path& dir);

    std::optional<std::string> lookup(const std::string& problem_id, int i, int j) const;
    void record(const std::string& problem_id, int i, int j, const std::string& prompt,
                const std::string& response);
    size_t size() const { return entries_.size(); }

    static constexpr const char* kFileName = "judge_exchanges.jsonl";

private:
    std::map<std::tuple<std::string, int, int>, std::string> entries_;
    std::filesystem::path file_;  // empty for in-memory stores
};

struct JudgeClientConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::string model = "deepseek-r1";
    std::string auth_env = "ES_JUDGE_TOKEN";
    int timeout_s = 120;
    int max_retries = 2;
};

// Chat-completion client for an external judge endpoint. Retries transport
// failures up to max_retries, then throws JudgeUnavailable.
class JudgeClient {
public:
    explicit JudgeClient(JudgeClientConfig config);
    std::string complete(const std::string& prompt) const;
    const JudgeClientConfig& config() const { return config_; }

private:
    JudgeClientConfig config_;
};

struct PairError {
    int i = 0;
    int j = 0;
    std::string reason;
};

struct JudgeResult {
    SimilarityMatrix matrix;
    std::vector<PairError> errors;
};

// Score every unordered response pair through the replay store, falling back
// to the client for pairs the store does not cover (client == nullptr means
// offline). Raw exchanges are persisted to the store; unusable pairs stay
// missing and are reported in errors.
JudgeResult judge_pairwise(const std::string& problem_id, const std::vector<std::string>& responses,
                           JudgeStore& store, const JudgeClient* client = nullptr);

}  // namespace es
