#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "es/harness.hpp"

namespace es {

struct Problem {
    std::string id;
    std::vector<int> prompt;
};

// JSON lines, one {"id": "...", "tokens": [...]} object per line.
std::vector<Problem> read_problems_jsonl(const std::filesystem::path& path);
void write_problems_jsonl(std::span<const Problem> problems, const std::filesystem::path& path);

// JSON lines, one CandidateRecord per line with the type's field names;
// absent optionals serialize as null. Key order is alphabetical, so equal
// records serialize to equal bytes.
void write_candidates_jsonl(std::span<const CandidateRecord> records, std::ostream& os);
void write_candidates_jsonl(std::span<const CandidateRecord> records,
                            const std::filesystem::path& path);
std::vector<CandidateRecord> read_candidates_jsonl(std::istream& is);
std::vector<CandidateRecord> read_candidates_jsonl(const std::filesystem::path& path);

// (strategy, problem_id) -> CandidateSet, records ordered by sample_index.
std::map<std::pair<std::string, std::string>, CandidateSet> group_candidates(
    std::span<const CandidateRecord> records);

std::string join_tokens(std::span<const int> tokens);

}  // namespace es
