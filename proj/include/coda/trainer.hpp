#pragma once

#include <optional>
#include <span>
#include <utility>

#include "coda/adaptor.hpp"
#include "coda/backbone.hpp"
#include "coda/denoise.hpp"

namespace coda {

// Gauss-Newton style bound on the batch-to-batch change of the prediction
// loss: with the Jacobian taken as the gradient row vector, the bound
// collapses to s + s^2 where s = sum_i |g_i| * |dtheta_i|.
double nav_bound(std::span<const double> grad, std::span<const double> dtheta);

struct BatchSnapshot {
    Vec theta;     // flattened tuning parameters at batch entry
    Vec grad_pkt;  // gradient of the summed prediction loss at theta
};

struct TuneConfig {
    DenoiseConfig denoise;
    std::size_t rank = 0;  // adaptor bottleneck; 0 means the d/2 default
    double lr = 1e-2;  // applied optimizer and candidate-step rate
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    std::size_t patience = 10;
    std::uint64_t seed = 1;
    double nav_weight = 1.0;
    bool disable_weak_loss = false;   // ablation "w/o weak"
    bool sequential_nav_update = false;
};

// Per-sequence context shared across epochs: the frozen backbone's first
// state, projected code features, and the constant predictor contribution
// of the next question.
struct SeqContext {
    const LearnerSequence* seq = nullptr;
    const EncodedSeq* codes = nullptr;
    std::vector<Vec> states;  // uncorrected h_t, t = 1..T
    std::vector<Vec> ce_x;    // ce_forward(codes[t])
    Vec pred_tail;            // dot(pred_w tail, emb(q_{t+1})) for t = 0..T-2
};

SeqContext make_seq_context(const ParamStore& backbone, const LearnerSequence& seq,
                            const EncodedSeq& codes);

// Corrected-state trajectory: each step's correction is fed back into the
// recurrence, so a repaired state carries forward to every later step.
// Computes `upto` corrected states (upto <= T).
template <class S>
std::vector<std::vector<S>> corrected_trajectory(const CodaWeights<S>& cw,
                                                 const BackboneWeights<double>& bw,
                                                 const BackboneDims& dims,
                                                 const LearnerSequence& seq, const SeqContext& ctx,
                                                 const std::vector<Role>& roles,
                                                 const std::vector<std::vector<S>>& xprime,
                                                 std::size_t upto) {
    const std::size_t rank = cw.WA.size() / (2 * cw.W.size());
    std::vector<std::vector<S>> corrected(upto);
    for (std::size_t t = 0; t < upto; ++t) {
        std::vector<S> prompt = build_prompt(roles[t], xprime[t], cw.Wp);
        if (t == 0) {
            corrected[0] = correct_state(std::span<const double>(ctx.states[0]), prompt, cw.WA,
                                         cw.WB, cw.WC, rank, dims.d_h);
        } else {
            const auto& rec = seq.records[t];
            std::vector<S> h = ke_step_mixed(bw, dims, corrected[t - 1], rec.question_id,
                                             rec.concept_id, ctx.ce_x[t], rec.r);
            corrected[t] = correct_state(std::span<const S>(h), prompt, cw.WA, cw.WB, cw.WC, rank,
                                         dims.d_h);
        }
    }
    return corrected;
}

// Prediction (cross-entropy over corrected states) and noise-feature losses
// for one sequence. Shared by the tape and plain paths.
template <class S>
std::pair<S, S> coda_sequence_losses(const CodaWeights<S>& cw, const BackboneWeights<double>& bw,
                                     const BackboneDims& dims, const SeqContext& ctx,
                                     const SolutionBank& bank, const DenoiseConfig& dcfg,
                                     bool disable_weak_loss) {
    const auto& seq = *ctx.seq;
    const std::size_t steps = seq.records.size();

    Annotated<S> ann = annotate_sequence(seq, *ctx.codes, bank, cw, dcfg);
    std::vector<Role> roles(steps);
    for (std::size_t t = 0; t < steps; ++t) roles[t] = ann.ann.steps[t].role;
    auto corrected =
        corrected_trajectory(cw, bw, dims, seq, ctx, roles, ann.xprime, steps > 1 ? steps - 1 : 1);

    std::vector<S> pkt_terms, adaptor_terms;
    for (std::size_t t = 0; t + 1 < steps; ++t) {
        S acc = dot_const(std::span<const S>(corrected[t]), bw.pred_w.subspan(0, dims.d_h));
        acc = add_const(acc, ctx.pred_tail[t]);
        S prob = sigmoid(add_const(acc, bw.pred_b[0]));
        double target = double(seq.records[t + 1].r);
        S l1 = mul_const(vlog(prob), target);
        S l0 = mul_const(vlog(rsub_const(1.0, prob)), 1.0 - target);
        pkt_terms.push_back(-(l1 + l0));

        int ref = adaptor_reference_step(ann.ann, t);
        if (ref < 0) continue;
        if (disable_weak_loss && roles[t] == Role::Weak) continue;
        adaptor_terms.push_back(adaptor_loss<S>(std::span<const S>(corrected[t]),
                                                std::span<const S>(corrected[std::size_t(ref)])));
    }
    S pkt = pkt_terms.empty() ? mul_const(cw.W[0], 0.0) : vsum(std::span<const S>(pkt_terms));
    S adp = adaptor_terms.empty() ? mul_const(cw.W[0], 0.0) : vsum(std::span<const S>(adaptor_terms));
    return {pkt, adp};
}

// Frozen-backbone tuning per the two-phase batch scheme: accumulate
// prediction + noise losses, take a candidate SGD step without
// backpropagation, bound the loss change from the stored snapshot, then
// apply the optimizer update including the bound's gradient contribution.
// Returns the full store: frozen backbone slots plus tuned Coda slots.
ParamStore tune_coda(const ParamStore& backbone, const Dataset& train, const Dataset& valid,
                     const EmbeddingProvider& enc, const TuneConfig& cfg);

// Inductive evaluation: per step, the code graph and roles are rebuilt over
// the observed prefix only; no parameters change.
Metrics coda_evaluate(const ParamStore& full, const Dataset& ds, const EmbeddingProvider& enc,
                      const SolutionBank& bank, const DenoiseConfig& dcfg);

// Full-sequence role annotation with plain weights (diagnostics and the
// identification scorer).
std::vector<NoiseAnnotation> annotate_dataset(const ParamStore& full, const Dataset& ds,
                                              const EmbeddingProvider& enc, const SolutionBank& bank,
                                              const DenoiseConfig& dcfg);

}  // namespace coda
