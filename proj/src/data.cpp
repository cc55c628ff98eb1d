#include "coda/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "coda/error.hpp"
#include "coda/rng.hpp"
#include "json.hpp"

namespace coda {

namespace {

int require_int(const nlohmann::json& j, const char* field, std::size_t line_no) {
    if (!j.contains(field) || !j[field].is_number_integer())
        throw CodaError("dataset line " + std::to_string(line_no) + ": missing integer field '" +
                        field + "'");
    return j[field].get<int>();
}

std::string require_str(const nlohmann::json& j, const char* field, std::size_t line_no) {
    if (!j.contains(field) || !j[field].is_string())
        throw CodaError("dataset line " + std::to_string(line_no) + ": missing string field '" +
                        field + "'");
    return j[field].get<std::string>();
}

}  // namespace

Dataset load_dataset(const std::string& path, const LoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw CodaError("cannot open dataset " + path);

    // group by learner in encounter order
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<int, SubmissionRecord>>> grouped;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw CodaError("dataset line " + std::to_string(line_no) + ": parse error: " + e.what());
        }
        SubmissionRecord rec;
        std::string learner = require_str(j, "learner", line_no);
        int file_step = require_int(j, "step", line_no);
        rec.question_id = require_int(j, "question", line_no);
        rec.concept_id = require_int(j, "concept", line_no);
        rec.code = require_str(j, "code", line_no);
        rec.feedback = require_str(j, "verdict", line_no);
        if (rec.question_id < 0 || rec.concept_id < 0)
            throw CodaError("dataset line " + std::to_string(line_no) + ": negative id");
        rec.r = 0;
        for (const auto& v : opts.accepted_verdicts)
            if (rec.feedback == v) rec.r = 1;
        if (grouped.find(learner) == grouped.end()) order.push_back(learner);
        grouped[learner].push_back({file_step, std::move(rec)});
    }

    Dataset out;
    int max_q = -1, max_c = -1;
    for (const auto& learner : order) {
        auto& recs = grouped[learner];
        std::stable_sort(recs.begin(), recs.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        if (recs.size() < opts.min_sequence_length) continue;
        LearnerSequence seq;
        seq.learner_id = learner;
        int step = 0;
        for (auto& [_, rec] : recs) {
            rec.step = ++step;  // re-index contiguously from 1
            max_q = std::max(max_q, rec.question_id);
            max_c = std::max(max_c, rec.concept_id);
            seq.records.push_back(std::move(rec));
        }
        out.sequences.push_back(std::move(seq));
    }
    if (out.sequences.empty()) throw CodaError("dataset " + path + ": no sequences");
    out.question_count = max_q + 1;
    out.concept_count = max_c + 1;
    return out;
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CodaError("cannot open " + path + " for writing");
    for (const auto& seq : d.sequences) {
        for (const auto& rec : seq.records) {
            nlohmann::ordered_json j;
            j["learner"] = seq.learner_id;
            j["step"] = rec.step;
            j["question"] = rec.question_id;
            j["concept"] = rec.concept_id;
            j["code"] = rec.code;
            j["verdict"] = rec.feedback;
            out << j.dump() << "\n";
        }
    }
}

Split split_dataset(const Dataset& d, double train_ratio, double valid_ratio, double test_ratio,
                    std::uint64_t seed) {
    require(std::fabs(train_ratio + valid_ratio + test_ratio - 1.0) < 1e-9, "ratios must sum to 1");
    const std::size_t n = d.sequences.size();
    if (n < 3) throw CodaError("split_dataset: fewer learners than partitions");

    // largest-remainder apportionment; ties favor earlier partitions
    double exact[3] = {train_ratio * n, valid_ratio * n, test_ratio * n};
    std::size_t sizes[3];
    double rem[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = std::size_t(std::floor(exact[i]));
        rem[i] = exact[i] - double(sizes[i]);
        assigned += sizes[i];
    }
    std::size_t leftover = n - assigned;
    while (leftover > 0) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rem[i] > rem[best]) best = i;
        sizes[best] += 1;
        rem[best] = -1.0;
        --leftover;
    }

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);

    Split split;
    Dataset* parts[3] = {&split.train, &split.valid, &split.test};
    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
        parts[p]->question_count = d.question_count;
        parts[p]->concept_count = d.concept_count;
        for (std::size_t k = 0; k < sizes[p]; ++k) parts[p]->sequences.push_back(d.sequences[idx[pos++]]);
    }
    return split;
}

SolutionBank build_solution_bank(const Dataset& train, const EmbeddingProvider& enc) {
    SolutionBank bank;
    for (const auto& seq : train.sequences)
        for (const auto& rec : seq.records)
            if (rec.r == 1) bank.by_question[rec.question_id].push_back(enc.encode(rec.code));
    return bank;
}

}  // namespace coda
