#include "coda/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "coda/error.hpp"

namespace coda {

double nav_bound(std::span<const double> grad, std::span<const double> dtheta) {
    require(grad.size() == dtheta.size(), "nav_bound: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) s += std::fabs(grad[i]) * std::fabs(dtheta[i]);
    return s + s * s;
}

SeqContext make_seq_context(const ParamStore& backbone, const LearnerSequence& seq,
                            const EncodedSeq& codes) {
    SeqContext ctx;
    ctx.seq = &seq;
    ctx.codes = &codes;
    BackboneDims dims = backbone_dims_from(backbone);
    BackboneWeights<double> w = backbone_view(backbone);
    ctx.states = backbone_states(w, dims, seq, codes);
    ctx.ce_x.reserve(codes.size());
    for (const Vec& x : codes) ctx.ce_x.push_back(ce_forward(w, dims, x));
    if (seq.records.size() >= 2) {
        ctx.pred_tail.resize(seq.records.size() - 1);
        for (std::size_t t = 0; t + 1 < seq.records.size(); ++t) {
            int qn = seq.records[t + 1].question_id;
            ctx.pred_tail[t] = dot(w.pred_w.subspan(dims.d_h, dims.d_q),
                                   w.emb_q.subspan(std::size_t(qn) * dims.d_q, dims.d_q));
        }
    }
    return ctx;
}

namespace {

struct TuneState {
    ParamStore full;
    BackboneDims dims;
    std::vector<SeqContext> contexts;
    SolutionBank bank;
};

// one learner's tape losses; returns (pkt, pkt + adaptor)
std::pair<Var, Var> build_losses(Tape& tape, TapeBinder& binder, const TuneState& st,
                                 std::size_t u, const TuneConfig& cfg) {
    CodaWeights<Var> cw = coda_bind(binder);
    BackboneWeights<double> bw = backbone_view(st.full);
    auto [pkt, adp] =
        coda_sequence_losses(cw, bw, st.dims, st.contexts[u], st.bank, cfg.denoise,
                             cfg.disable_weak_loss);
    return {pkt, tape.add(pkt, adp)};
}

}  // namespace

ParamStore tune_coda(const ParamStore& backbone, const Dataset& train, const Dataset& valid,
                     const EmbeddingProvider& enc, const TuneConfig& cfg) {
    if (train.sequences.empty()) throw CodaError("tune_coda: empty train split");

    TuneState st;
    st.dims = backbone_dims_from(backbone);
    merge_slots(st.full, backbone, /*frozen=*/true);
    for (std::size_t i = 0; i < st.full.size(); ++i)
        require(st.full.at(i).frozen, "unfrozen backbone slot " + st.full.at(i).name);

    CodaDims cdims;
    cdims.d = enc.dim();
    cdims.d_h = st.dims.d_h;
    cdims.b = cfg.rank > 0 ? cfg.rank : std::max<std::size_t>(1, cdims.d / 2);
    register_coda(st.full, cdims);
    Rng rng(cfg.seed);
    init_coda(st.full, cdims, rng);

    auto codes = encode_dataset(train, enc);
    st.bank = build_solution_bank(train, enc);
    st.contexts.reserve(train.sequences.size());
    for (std::size_t u = 0; u < train.sequences.size(); ++u)
        st.contexts.push_back(make_seq_context(backbone, train.sequences[u], codes[u]));

    const std::size_t nparam = st.full.unfrozen_count();
    Adam adam(st.full, cfg.lr);
    Tape tape;
    std::optional<BatchSnapshot> snapshot;

    ParamStore best = st.full;
    double best_auc = -1.0;
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = rng.split(epoch + 1);
        erng.shuffle(order);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            std::size_t b1 = std::min(b0 + cfg.batch_size, order.size());
            Vec theta_entry = st.full.flatten_unfrozen();

            // phase 1: losses and plain gradients at batch entry
            Vec g_pkt(nparam, 0.0), g_lp(nparam, 0.0);
            for (std::size_t k = b0; k < b1; ++k) {
                std::size_t u = order[k];
                if (st.contexts[u].seq->records.size() < 2) continue;
                tape.clear();
                TapeBinder binder(tape, st.full);
                auto [pkt, total] = build_losses(tape, binder, st, u, cfg);
                tape.backward(pkt);
                binder.accumulate_flat(g_pkt);
                tape.backward(total);
                binder.accumulate_flat(g_lp);
            }

            // phase 2: candidate SGD step and the bound's gradient through it
            Vec g_total = g_lp;
            if (cfg.nav_weight != 0.0 && snapshot.has_value()) {
                Vec dtheta(nparam);
                for (std::size_t i = 0; i < nparam; ++i) dtheta[i] = -cfg.lr * g_lp[i];
                double s = 0.0;
                for (std::size_t i = 0; i < nparam; ++i)
                    s += std::fabs(snapshot->grad_pkt[i]) * std::fabs(dtheta[i]);
                // d(s + s^2)/dtheta = (1 + 2s) * (-lr) * H^p . (|g| ⊙ sign(dtheta))
                Vec w(nparam);
                for (std::size_t i = 0; i < nparam; ++i) {
                    double sg = dtheta[i] > 0.0 ? 1.0 : (dtheta[i] < 0.0 ? -1.0 : 0.0);
                    w[i] = std::fabs(snapshot->grad_pkt[i]) * sg;
                }
                Vec hv(nparam, 0.0);
                for (std::size_t k = b0; k < b1; ++k) {
                    std::size_t u = order[k];
                    if (st.contexts[u].seq->records.size() < 2) continue;
                    tape.clear();
                    TapeBinder binder(tape, st.full);
                    auto [pkt, total] = build_losses(tape, binder, st, u, cfg);
                    (void)pkt;
                    auto grad_ids = tape.backward_emit(total);
                    auto leaf_ids = binder.unfrozen_leaf_ids();
                    std::vector<Var> gvars;
                    std::vector<double> gcoef;
                    for (std::size_t i = 0; i < nparam; ++i) {
                        if (leaf_ids[i] == Tape::kNone || w[i] == 0.0) continue;
                        std::uint32_t gid = grad_ids[leaf_ids[i]];
                        if (gid == Tape::kNone) continue;
                        gvars.push_back(Var{&tape, gid});
                        gcoef.push_back(w[i]);
                    }
                    if (gvars.empty()) continue;
                    Var phi = tape.dot_const(std::span<const Var>(gvars),
                                             std::span<const double>(gcoef));
                    tape.backward(phi);
                    binder.accumulate_flat(hv);
                }
                double scale = -cfg.lr * (1.0 + 2.0 * s) * cfg.nav_weight;
                if (cfg.sequential_nav_update) {
                    adam.step_flat(st.full, g_lp);
                    Vec cur = st.full.flatten_unfrozen();
                    for (std::size_t i = 0; i < nparam; ++i) cur[i] -= cfg.lr * scale * hv[i];
                    st.full.assign_unfrozen(cur);
                } else {
                    for (std::size_t i = 0; i < nparam; ++i) g_total[i] += scale * hv[i];
                    adam.step_flat(st.full, g_total);
                }
            } else {
                adam.step_flat(st.full, g_total);
            }

            snapshot = BatchSnapshot{std::move(theta_entry), std::move(g_pkt)};
        }

        Metrics m = coda_evaluate(st.full, valid, enc, st.bank, cfg.denoise);
        if (m.auc > best_auc) {
            best_auc = m.auc;
            best = st.full;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return best;
}

Metrics coda_evaluate(const ParamStore& full, const Dataset& ds, const EmbeddingProvider& enc,
                      const SolutionBank& bank, const DenoiseConfig& dcfg) {
    BackboneDims dims = backbone_dims_from(full);
    BackboneWeights<double> bw = backbone_view(full);
    CodaWeights<double> cw = coda_view(full);

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& seq : ds.sequences) {
        EncodedSeq codes;
        codes.reserve(seq.records.size());
        for (const auto& rec : seq.records) codes.push_back(enc.encode(rec.code));
        const std::size_t steps = seq.records.size();
        if (steps < 2) continue;

        // inductive: the role of step t comes from the graph over l_{1:t}
        std::vector<Role> roles(steps - 1);
        std::vector<std::vector<double>> xprime(steps - 1);
        for (std::size_t t = 0; t + 1 < steps; ++t) {
            LearnerSequence prefix;
            prefix.learner_id = seq.learner_id;
            prefix.records.assign(seq.records.begin(), seq.records.begin() + long(t) + 1);
            std::vector<Vec> prefix_codes(codes.begin(), codes.begin() + long(t) + 1);
            Annotated<double> ann = annotate_sequence(prefix, prefix_codes, bank, cw, dcfg);
            roles[t] = ann.ann.steps[t].role;
            xprime[t] = std::move(ann.xprime[t]);
        }

        SeqContext ctx;
        ctx.seq = &seq;
        ctx.codes = &codes;
        ctx.states = backbone_states(bw, dims, seq, codes);
        ctx.ce_x.reserve(codes.size());
        for (const Vec& x : codes) ctx.ce_x.push_back(ce_forward(bw, dims, x));
        auto corrected = corrected_trajectory(cw, bw, dims, seq, ctx, roles, xprime, steps - 1);

        for (std::size_t t = 0; t + 1 < steps; ++t) {
            double acc = dot_const(std::span<const double>(corrected[t]),
                                   bw.pred_w.subspan(0, dims.d_h));
            int qn = seq.records[t + 1].question_id;
            acc = acc + dot(bw.pred_w.subspan(dims.d_h, dims.d_q),
                            bw.emb_q.subspan(std::size_t(qn) * dims.d_q, dims.d_q));
            scores.push_back(sigmoid(acc + bw.pred_b[0]));
            labels.push_back(seq.records[t + 1].r);
        }
    }
    return compute_metrics(scores, labels);
}

std::vector<NoiseAnnotation> annotate_dataset(const ParamStore& full, const Dataset& ds,
                                              const EmbeddingProvider& enc, const SolutionBank& bank,
                                              const DenoiseConfig& dcfg) {
    CodaWeights<double> cw = coda_view(full);
    std::vector<NoiseAnnotation> out;
    out.reserve(ds.sequences.size());
    for (const auto& seq : ds.sequences) {
        EncodedSeq codes;
        codes.reserve(seq.records.size());
        for (const auto& rec : seq.records) codes.push_back(enc.encode(rec.code));
        out.push_back(annotate_sequence(seq, codes, bank, cw, dcfg).ann);
    }
    return out;
}

}  // namespace coda
