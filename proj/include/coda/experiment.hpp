#pragma once

#include <memory>
#include <optional>
#include <string>

#include "coda/backbone.hpp"
#include "coda/synth.hpp"
#include "coda/trainer.hpp"
#include "json.hpp"

namespace coda {

struct ExperimentConfig {
    std::optional<SynthConfig> synth;
    std::string dataset_path;     // used when synth is absent
    std::string embeddings_path;  // optional; hash encoder otherwise
    std::size_t encoder_dim = 32;

    BackboneDims backbone_dims;   // question/concept counts filled from data
    TrainConfig backbone_train;
    TuneConfig tune;

    std::vector<std::uint64_t> seeds = {7};
    std::string out_dir = "out";
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& cfg);

// Truth rows for a learner subset, matched by learner id.
GroundTruth truth_for_subset(const GroundTruth& truth, const Dataset& original,
                             const Dataset& subset);

struct PipelineArtifacts {
    Dataset train, valid, test;
    std::shared_ptr<EmbeddingProvider> provider;
    std::optional<GroundTruth> truth;       // aligned with the generated dataset
    std::optional<GroundTruth> test_truth;  // aligned with the test split
    Dataset original;                       // pre-split order (for truth lookup)
    ParamStore backbone;
    ParamStore tuned;  // frozen backbone + coda slots
    SolutionBank bank;
    Metrics backbone_test, coda_test;
    std::optional<IdentificationScore> ident;
};

// One full pipeline run: data, backbone training, Coda tuning, evaluation,
// identification scoring when ground truth exists.
PipelineArtifacts run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

struct ExperimentReport {
    nlohmann::ordered_json json;
    std::vector<PipelineArtifacts> seeds;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg, bool keep_artifacts = false);

// One tuned evaluation per sparsity level; everything else fixed at the
// first configured seed. Returns CSV text (p, metrics, mean structural
// edges per train learner).
std::string sparsity_sweep(const ExperimentConfig& cfg, const std::vector<double>& p_values);

// Per-step proficiency trace on one concept: sigmoid of the c-th state
// coordinate, raw and corrected. Returns CSV text.
std::string export_trace(const ParamStore& tuned, const Dataset& ds, const EmbeddingProvider& enc,
                         const SolutionBank& bank, const DenoiseConfig& dcfg,
                         const std::string& learner_id, std::size_t concept_index);

}  // namespace coda
