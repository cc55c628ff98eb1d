#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "coda/data.hpp"
#include "coda/denoise.hpp"

namespace coda {

struct SynthConfig {
    std::size_t learners = 200;
    std::size_t questions = 50;
    std::size_t concepts = 20;
    std::size_t mean_length = 30;
    double rho_unwanted = 0.1;
    double rho_weak = 0.3;
    std::size_t d = 32;
    double margin = 1.3;          // minimum unwanted distance to every concept centroid
    double perturb_radius = 0.26; // weak copies stay within this distance of their core
    std::uint64_t seed = 7;
};

struct TruthStep {
    Role role = Role::Core;
    int core_step = -1;   // 1-based, for weak steps
    double mastery = 0.0; // latent mastery of the step's concept at attempt time
};

struct GroundTruth {
    std::vector<std::vector<TruthStep>> learners;  // aligned with Dataset sequences
};

struct SynthResult {
    Dataset dataset;
    GroundTruth truth;
    std::shared_ptr<EmbeddingProvider> provider;
    std::vector<std::string> keys;       // embedding keys in generation order
    std::vector<Vec> rows;               // matching embedding rows
    std::vector<Vec> concept_centroids;  // exposed for separation checks
};

// Session-style generator: learners practice questions in chains of at least
// two genuine attempts; later chain steps may be minor modifications of the
// chain's latest core, and unrelated submissions are interleaved at the
// unwanted rate. Acceptance follows a logistic in latent mastery, which only
// genuine attempts improve.
SynthResult generate(const SynthConfig& cfg);

struct RoleScore {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

struct IdentificationScore {
    RoleScore unwanted;
    RoleScore weak;  // detection only; cluster identity need not match
};

IdentificationScore score_identification(const std::vector<NoiseAnnotation>& pred,
                                         const GroundTruth& truth);

void save_truth(const GroundTruth& truth, const Dataset& ds, const std::string& path);

}  // namespace coda
