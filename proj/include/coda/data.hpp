#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coda/encoder.hpp"
#include "coda/params.hpp"

namespace coda {

struct SubmissionRecord {
    int step = 0;  // 1-based within the learner sequence
    int question_id = 0;
    int concept_id = 0;
    std::string code;     // text payload or embedding key
    std::string feedback;  // raw verdict string
    int r = 0;             // 1 iff verdict maps to accepted
};

struct LearnerSequence {
    std::string learner_id;
    std::vector<SubmissionRecord> records;
    std::size_t length() const { return records.size(); }
};

struct Dataset {
    std::vector<LearnerSequence> sequences;
    int question_count = 0;
    int concept_count = 0;
    int learner_count() const { return int(sequences.size()); }
};

struct LoadOptions {
    // verdict -> r mapping; only listed verdicts map to 1
    std::vector<std::string> accepted_verdicts = {"Accepted"};
    std::size_t min_sequence_length = 5;
};

// One JSON object per line:
// {"learner": str, "step": int, "question": int, "concept": int, "code": str, "verdict": str}
Dataset load_dataset(const std::string& path, const LoadOptions& opts = {});
void save_dataset(const Dataset& d, const std::string& path);

struct Split {
    Dataset train, valid, test;
};

// Sequence-level split; sizes by largest-remainder apportionment of the
// ratios (ties favor earlier partitions), deterministic under seed.
Split split_dataset(const Dataset& d, double train_ratio, double valid_ratio, double test_ratio,
                    std::uint64_t seed);

// Embeddings of accepted submissions per question, drawn from the train split.
struct SolutionBank {
    std::map<int, std::vector<Vec>> by_question;
    const std::vector<Vec>* find(int question_id) const {
        auto it = by_question.find(question_id);
        return it == by_question.end() ? nullptr : &it->second;
    }
};

SolutionBank build_solution_bank(const Dataset& train, const EmbeddingProvider& enc);

}  // namespace coda
