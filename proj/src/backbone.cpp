#include "coda/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "coda/error.hpp"

namespace coda {

namespace {

void xavier_fill(Vec& data, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    for (double& x : data) x = rng.uniform(-bound, bound);
}

}  // namespace

void register_backbone(ParamStore& params, const BackboneDims& dims) {
    const std::size_t in = dims.gru_in();
    params.add("bb.ce_w", {dims.d_in, dims.d});
    params.add("bb.ce_b", {dims.d_in});
    params.add("bb.emb_q", {dims.questions, dims.d_q});
    params.add("bb.emb_c", {dims.concepts, dims.d_q});
    params.add("bb.wz", {dims.d_h, in});
    params.add("bb.uz", {dims.d_h, dims.d_h});
    params.add("bb.bz", {dims.d_h});
    params.add("bb.wr", {dims.d_h, in});
    params.add("bb.ur", {dims.d_h, dims.d_h});
    params.add("bb.br", {dims.d_h});
    params.add("bb.wh", {dims.d_h, in});
    params.add("bb.uh", {dims.d_h, dims.d_h});
    params.add("bb.bh", {dims.d_h});
    params.add("bb.pred_w", {dims.d_h + dims.d_q});
    params.add("bb.pred_b", {1});
}

void init_backbone(ParamStore& params, const BackboneDims& dims, Rng& rng) {
    const std::size_t in = dims.gru_in();
    xavier_fill(params.data("bb.ce_w"), dims.d, dims.d_in, rng);
    xavier_fill(params.data("bb.emb_q"), dims.questions, dims.d_q, rng);
    xavier_fill(params.data("bb.emb_c"), dims.concepts, dims.d_q, rng);
    for (const char* name : {"bb.wz", "bb.wr", "bb.wh"}) xavier_fill(params.data(name), in, dims.d_h, rng);
    for (const char* name : {"bb.uz", "bb.ur", "bb.uh"})
        xavier_fill(params.data(name), dims.d_h, dims.d_h, rng);
    xavier_fill(params.data("bb.pred_w"), dims.d_h + dims.d_q, 1, rng);
    // biases stay zero
}

BackboneDims backbone_dims_from(const ParamStore& params) {
    BackboneDims dims;
    const auto& ce_w = params.slot("bb.ce_w");
    dims.d_in = ce_w.shape[0];
    dims.d = ce_w.shape[1];
    dims.questions = params.slot("bb.emb_q").shape[0];
    dims.d_q = params.slot("bb.emb_q").shape[1];
    dims.concepts = params.slot("bb.emb_c").shape[0];
    dims.d_h = params.slot("bb.bz").shape[0];
    return dims;
}

BackboneWeights<double> backbone_view(const ParamStore& p) {
    BackboneWeights<double> w;
    auto span_of = [&](const char* name) {
        const Vec& v = p.data(name);
        return std::span<const double>(v.data(), v.size());
    };
    w.ce_w = span_of("bb.ce_w");
    w.ce_b = span_of("bb.ce_b");
    w.emb_q = span_of("bb.emb_q");
    w.emb_c = span_of("bb.emb_c");
    w.wz = span_of("bb.wz");
    w.uz = span_of("bb.uz");
    w.bz = span_of("bb.bz");
    w.wr = span_of("bb.wr");
    w.ur = span_of("bb.ur");
    w.br = span_of("bb.br");
    w.wh = span_of("bb.wh");
    w.uh = span_of("bb.uh");
    w.bh = span_of("bb.bh");
    w.pred_w = span_of("bb.pred_w");
    w.pred_b = span_of("bb.pred_b");
    return w;
}

BackboneWeights<Var> backbone_bind(TapeBinder& b) {
    BackboneWeights<Var> w;
    auto span_of = [&](const char* name) {
        const auto& v = b.bind(name);
        return std::span<const Var>(v.data(), v.size());
    };
    w.ce_w = span_of("bb.ce_w");
    w.ce_b = span_of("bb.ce_b");
    w.emb_q = span_of("bb.emb_q");
    w.emb_c = span_of("bb.emb_c");
    w.wz = span_of("bb.wz");
    w.uz = span_of("bb.uz");
    w.bz = span_of("bb.bz");
    w.wr = span_of("bb.wr");
    w.ur = span_of("bb.ur");
    w.br = span_of("bb.br");
    w.wh = span_of("bb.wh");
    w.uh = span_of("bb.uh");
    w.bh = span_of("bb.bh");
    w.pred_w = span_of("bb.pred_w");
    w.pred_b = span_of("bb.pred_b");
    return w;
}

std::vector<EncodedSeq> encode_dataset(const Dataset& ds, const EmbeddingProvider& enc) {
    std::vector<EncodedSeq> out;
    out.reserve(ds.sequences.size());
    for (const auto& seq : ds.sequences) {
        EncodedSeq codes;
        codes.reserve(seq.records.size());
        for (const auto& rec : seq.records) codes.push_back(enc.encode(rec.code));
        out.push_back(std::move(codes));
    }
    return out;
}

Var sequence_loss_tape(Tape& tape, TapeBinder& binder, const BackboneDims& dims,
                       const LearnerSequence& seq, const EncodedSeq& codes) {
    BackboneWeights<Var> w = backbone_bind(binder);
    auto states = backbone_states(w, dims, seq, codes);
    std::vector<Var> terms;
    for (std::size_t t = 0; t + 1 < seq.records.size(); ++t) {
        Var p = predict(w, dims, states[t], seq.records[t + 1].question_id);
        terms.push_back(bce(double(seq.records[t + 1].r), p));
    }
    if (terms.empty()) return tape.leaf(0.0);
    return tape.sum(terms);
}

double sequence_loss_plain(const ParamStore& params, const BackboneDims& dims,
                           const LearnerSequence& seq, const EncodedSeq& codes) {
    BackboneWeights<double> w = backbone_view(params);
    auto states = backbone_states(w, dims, seq, codes);
    double loss = 0.0;
    for (std::size_t t = 0; t + 1 < seq.records.size(); ++t) {
        double p = predict(w, dims, states[t], seq.records[t + 1].question_id);
        loss += bce(double(seq.records[t + 1].r), p);
    }
    return loss;
}

void Adam::step(ParamStore& params, const GradStore& grads) {
    ++t_;
    double c1 = 1.0 - std::pow(0.9, double(t_));
    double c2 = 1.0 - std::pow(0.999, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& slot = params.at(i);
        if (slot.frozen) continue;
        const Vec& g = grads.at(i);
        for (std::size_t k = 0; k < slot.data.size(); ++k) {
            m_[i][k] = 0.9 * m_[i][k] + 0.1 * g[k];
            v_[i][k] = 0.999 * v_[i][k] + 0.001 * g[k] * g[k];
            double mhat = m_[i][k] / c1;
            double vhat = v_[i][k] / c2;
            slot.data[k] -= lr_ * mhat / (std::sqrt(vhat) + 1e-8);
        }
    }
}

void Adam::step_flat(ParamStore& params, const Vec& flat) {
    ++t_;
    double c1 = 1.0 - std::pow(0.9, double(t_));
    double c2 = 1.0 - std::pow(0.999, double(t_));
    std::size_t pos = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& slot = params.at(i);
        if (slot.frozen) continue;
        for (std::size_t k = 0; k < slot.data.size(); ++k) {
            double g = flat[pos + k];
            m_[i][k] = 0.9 * m_[i][k] + 0.1 * g;
            v_[i][k] = 0.999 * v_[i][k] + 0.001 * g * g;
            double mhat = m_[i][k] / c1;
            double vhat = v_[i][k] / c2;
            slot.data[k] -= lr_ * mhat / (std::sqrt(vhat) + 1e-8);
        }
        pos += slot.data.size();
    }
    require(pos == flat.size(), "step_flat: gradient length mismatch");
}

ParamStore train_backbone(const Dataset& train, const Dataset& valid, const EmbeddingProvider& enc,
                          const BackboneDims& dims, const TrainConfig& cfg) {
    if (train.sequences.empty()) throw CodaError("train_backbone: empty train split");

    ParamStore params;
    register_backbone(params, dims);
    Rng rng(cfg.seed);
    init_backbone(params, dims, rng);

    auto codes = encode_dataset(train, enc);

    ParamStore best = params;
    double best_auc = -1.0;
    std::size_t since_best = 0;
    Adam adam(params, cfg.lr);
    Tape tape;

    std::vector<std::size_t> order(train.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = rng.split(epoch + 1);
        erng.shuffle(order);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            GradStore grads(params);
            std::size_t b1 = std::min(b0 + cfg.batch_size, order.size());
            for (std::size_t k = b0; k < b1; ++k) {
                const auto& seq = train.sequences[order[k]];
                if (seq.records.size() < 2) continue;  // no next step to predict
                tape.clear();
                TapeBinder binder(tape, params);
                Var loss = sequence_loss_tape(tape, binder, dims, seq, codes[order[k]]);
                tape.backward(loss);
                binder.accumulate(grads);
            }
            adam.step(params, grads);
        }
        Metrics m = evaluate(params, valid, enc);
        if (m.auc > best_auc) {
            best_auc = m.auc;
            best = params;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return best;
}

Metrics evaluate(const ParamStore& params, const Dataset& ds, const EmbeddingProvider& enc) {
    BackboneDims dims = backbone_dims_from(params);
    BackboneWeights<double> w = backbone_view(params);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& seq : ds.sequences) {
        EncodedSeq codes;
        codes.reserve(seq.records.size());
        for (const auto& rec : seq.records) codes.push_back(enc.encode(rec.code));
        auto states = backbone_states(w, dims, seq, codes);
        for (std::size_t t = 0; t + 1 < seq.records.size(); ++t) {
            scores.push_back(predict(w, dims, states[t], seq.records[t + 1].question_id));
            labels.push_back(seq.records[t + 1].r);
        }
    }
    return compute_metrics(scores, labels);
}

}  // namespace coda
