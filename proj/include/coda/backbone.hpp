#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coda/bind.hpp"
#include "coda/data.hpp"
#include "coda/metrics.hpp"
#include "coda/numerics.hpp"
#include "coda/params.hpp"
#include "coda/rng.hpp"

namespace coda {

// Reference PKT backbone: code projection (CE), gated recurrent knowledge
// estimator (KE), and a sigmoid predictor over [h || next-question embedding].
struct BackboneDims {
    std::size_t d = 32;    // provider embedding dim
    std::size_t d_in = 32; // projected code feature dim
    std::size_t d_q = 16;  // question/concept embedding dim
    std::size_t d_h = 32;  // knowledge state dim (>= concept count for traces)
    std::size_t questions = 0;
    std::size_t concepts = 0;

    std::size_t gru_in() const { return d_in + 2 * d_q + 2; }
};

struct TrainConfig {
    double lr = 1e-2;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    std::size_t patience = 10;
    std::uint64_t seed = 1;
};

void register_backbone(ParamStore& params, const BackboneDims& dims);
void init_backbone(ParamStore& params, const BackboneDims& dims, Rng& rng);
BackboneDims backbone_dims_from(const ParamStore& params);

template <class S>
struct BackboneWeights {
    std::span<const S> ce_w, ce_b;      // (d_in x d), d_in
    std::span<const S> emb_q, emb_c;    // (M x d_q), (K x d_q)
    std::span<const S> wz, uz, bz;      // gates: (d_h x gru_in), (d_h x d_h), d_h
    std::span<const S> wr, ur, br;
    std::span<const S> wh, uh, bh;
    std::span<const S> pred_w, pred_b;  // d_h + d_q, 1
};

BackboneWeights<double> backbone_view(const ParamStore& params);
BackboneWeights<Var> backbone_bind(TapeBinder& binder);

// Affine projection of the provider embedding.
template <class S>
std::vector<S> ce_forward(const BackboneWeights<S>& w, const BackboneDims& dims, const Vec& x) {
    std::vector<S> out;
    out.reserve(dims.d_in);
    for (std::size_t i = 0; i < dims.d_in; ++i) {
        S acc = dot_const(w.ce_w.subspan(i * dims.d, dims.d), std::span<const double>(x));
        out.push_back(acc + w.ce_b[i]);
    }
    return out;
}

// One gated recurrent update on input [x || q emb || c emb || onehot2(r)].
// h_prev empty means the zero initial state.
template <class S>
std::vector<S> ke_step(const BackboneWeights<S>& w, const BackboneDims& dims,
                       const std::vector<S>& h_prev, int q, int c, const std::vector<S>& x, int r) {
    const std::size_t dh = dims.d_h, dq = dims.d_q, din = dims.d_in, in = dims.gru_in();
    auto qe = w.emb_q.subspan(std::size_t(q) * dq, dq);
    auto ce = w.emb_c.subspan(std::size_t(c) * dq, dq);
    const std::size_t rcol = din + 2 * dq + std::size_t(r);

    auto gate_pre = [&](std::span<const S> wg, std::span<const S> ug, std::span<const S> bg,
                        std::size_t j) -> S {
        auto row = wg.subspan(j * in, in);
        S acc = dot(row.subspan(0, din), std::span<const S>(x));
        acc = acc + dot(row.subspan(din, dq), qe);
        acc = acc + dot(row.subspan(din + dq, dq), ce);
        acc = acc + row[rcol];  // onehot2(r) selects one column
        if (!h_prev.empty()) acc = acc + dot(ug.subspan(j * dh, dh), std::span<const S>(h_prev));
        return acc + bg[j];
    };

    std::vector<S> z, rr, hh;
    z.reserve(dh);
    rr.reserve(dh);
    hh.reserve(dh);
    for (std::size_t j = 0; j < dh; ++j) z.push_back(sigmoid(gate_pre(w.wz, w.uz, w.bz, j)));
    for (std::size_t j = 0; j < dh; ++j) rr.push_back(sigmoid(gate_pre(w.wr, w.ur, w.br, j)));
    std::vector<S> gated;
    if (!h_prev.empty()) {
        gated.reserve(dh);
        for (std::size_t j = 0; j < dh; ++j) gated.push_back(rr[j] * h_prev[j]);
    }
    for (std::size_t j = 0; j < dh; ++j) {
        auto row = w.wh.subspan(j * in, in);
        S acc = dot(row.subspan(0, din), std::span<const S>(x));
        acc = acc + dot(row.subspan(din, dq), qe);
        acc = acc + dot(row.subspan(din + dq, dq), ce);
        acc = acc + row[rcol];
        if (!h_prev.empty()) acc = acc + dot(w.uh.subspan(j * dh, dh), std::span<const S>(gated));
        hh.push_back(vtanh(acc + w.bh[j]));
    }
    std::vector<S> h;
    h.reserve(dh);
    for (std::size_t j = 0; j < dh; ++j) {
        if (h_prev.empty())
            h.push_back(z[j] * hh[j]);  // (1-z)*0 + z*hh
        else
            h.push_back(h_prev[j] + z[j] * (hh[j] - h_prev[j]));
    }
    return h;
}

// sigmoid(pred_w . [h || emb(q_next)] + pred_b)
template <class S>
S predict(const BackboneWeights<S>& w, const BackboneDims& dims, const std::vector<S>& h,
          int q_next) {
    S acc = dot(w.pred_w.subspan(0, dims.d_h), std::span<const S>(h));
    acc = acc + dot(w.pred_w.subspan(dims.d_h, dims.d_q),
                    w.emb_q.subspan(std::size_t(q_next) * dims.d_q, dims.d_q));
    return sigmoid(acc + w.pred_b[0]);
}

// Tuning-time predictor: corrected state vars against the frozen backbone's
// plain-double weights.
inline Var predict_corrected(const BackboneWeights<double>& w, const BackboneDims& dims,
                             std::span<const Var> h_corr, int q_next) {
    Tape* t = h_corr[0].tape;
    Var acc = dot_const(h_corr, w.pred_w.subspan(0, dims.d_h));
    double tail = dot(w.pred_w.subspan(dims.d_h, dims.d_q),
                      w.emb_q.subspan(std::size_t(q_next) * dims.d_q, dims.d_q)) +
                  w.pred_b[0];
    return t->sigmoid(t->add_const(acc, tail));
}

// One recurrent update where the previous state is tape-valued (a corrected
// state) while the backbone weights stay frozen doubles. Mirrors ke_step's
// arithmetic order exactly so a zero correction reproduces its bits.
template <class S>
std::vector<S> ke_step_mixed(const BackboneWeights<double>& w, const BackboneDims& dims,
                             const std::vector<S>& h_prev, int q, int c, const Vec& x, int r) {
    const std::size_t dh = dims.d_h, dq = dims.d_q, din = dims.d_in, in = dims.gru_in();
    auto qe = w.emb_q.subspan(std::size_t(q) * dq, dq);
    auto ce = w.emb_c.subspan(std::size_t(c) * dq, dq);
    const std::size_t rcol = din + 2 * dq + std::size_t(r);

    auto const_part = [&](std::span<const double> wg, std::size_t j) {
        auto row = wg.subspan(j * in, in);
        double acc = dot(row.subspan(0, din), std::span<const double>(x));
        acc = acc + dot(row.subspan(din, dq), qe);
        acc = acc + dot(row.subspan(din + dq, dq), ce);
        return acc + row[rcol];
    };
    auto gate_pre = [&](std::span<const double> wg, std::span<const double> ug,
                        std::span<const double> bg, std::size_t j) -> S {
        S acc = add_const(dot_const(std::span<const S>(h_prev), ug.subspan(j * dh, dh)),
                          const_part(wg, j));
        return add_const(acc, bg[j]);
    };

    std::vector<S> z, rr, hh;
    z.reserve(dh);
    rr.reserve(dh);
    hh.reserve(dh);
    for (std::size_t j = 0; j < dh; ++j) z.push_back(sigmoid(gate_pre(w.wz, w.uz, w.bz, j)));
    for (std::size_t j = 0; j < dh; ++j) rr.push_back(sigmoid(gate_pre(w.wr, w.ur, w.br, j)));
    std::vector<S> gated;
    gated.reserve(dh);
    for (std::size_t j = 0; j < dh; ++j) gated.push_back(rr[j] * h_prev[j]);
    for (std::size_t j = 0; j < dh; ++j) {
        S acc = add_const(dot_const(std::span<const S>(gated), w.uh.subspan(j * dh, dh)),
                          const_part(w.wh, j));
        hh.push_back(vtanh(add_const(acc, w.bh[j])));
    }
    std::vector<S> h;
    h.reserve(dh);
    for (std::size_t j = 0; j < dh; ++j) h.push_back(h_prev[j] + z[j] * (hh[j] - h_prev[j]));
    return h;
}

using EncodedSeq = std::vector<Vec>;
std::vector<EncodedSeq> encode_dataset(const Dataset& ds, const EmbeddingProvider& enc);

// All knowledge states h_1..h_T for one sequence.
template <class S>
std::vector<std::vector<S>> backbone_states(const BackboneWeights<S>& w, const BackboneDims& dims,
                                            const LearnerSequence& seq, const EncodedSeq& codes) {
    std::vector<std::vector<S>> states;
    states.reserve(seq.records.size());
    std::vector<S> h;  // empty == zero initial state
    for (std::size_t t = 0; t < seq.records.size(); ++t) {
        const auto& rec = seq.records[t];
        std::vector<S> x = ce_forward(w, dims, codes[t]);
        h = ke_step(w, dims, h, rec.question_id, rec.concept_id, x, rec.r);
        states.push_back(h);
    }
    return states;
}

// Adam over unfrozen slots; standard (0.9, 0.999, 1e-8) constants.
class Adam {
public:
    Adam(const ParamStore& params, double lr) : lr_(lr) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params.at(i).data.size(), 0.0);
            v_[i].assign(params.at(i).data.size(), 0.0);
        }
    }
    void step(ParamStore& params, const GradStore& grads);
    // gradient given as a flattened vector over unfrozen slots
    void step_flat(ParamStore& params, const Vec& flat);

private:
    double lr_;
    std::size_t t_ = 0;
    std::vector<Vec> m_, v_;
};

ParamStore train_backbone(const Dataset& train, const Dataset& valid, const EmbeddingProvider& enc,
                          const BackboneDims& dims, const TrainConfig& cfg);

Metrics evaluate(const ParamStore& params, const Dataset& ds, const EmbeddingProvider& enc);

// Per-sequence training loss at the current parameters (sum over steps of
// next-attempt cross entropy); used by training and by gradient checks.
Var sequence_loss_tape(Tape& tape, TapeBinder& binder, const BackboneDims& dims,
                       const LearnerSequence& seq, const EncodedSeq& codes);
double sequence_loss_plain(const ParamStore& params, const BackboneDims& dims,
                           const LearnerSequence& seq, const EncodedSeq& codes);

}  // namespace coda
