#include <algorithm>
#include <cmath>

#include "coda/backbone.hpp"
#include "coda/checkpoint.hpp"
#include "coda/metrics.hpp"
#include "coda/synth.hpp"
#include "doctest.h"

using namespace coda;

namespace {

BackboneDims small_dims() {
    BackboneDims d;
    d.d = 3;
    d.d_in = 2;
    d.d_q = 2;
    d.d_h = 2;
    d.questions = 4;
    d.concepts = 2;
    return d;
}

ParamStore make_params(const BackboneDims& dims, std::uint64_t seed) {
    ParamStore p;
    register_backbone(p, dims);
    Rng rng(seed);
    init_backbone(p, dims, rng);
    return p;
}

LearnerSequence make_seq(const std::vector<std::tuple<int, int, int>>& qcr) {
    LearnerSequence s;
    s.learner_id = "u";
    int step = 0;
    for (auto [q, c, r] : qcr) {
        SubmissionRecord rec;
        rec.step = ++step;
        rec.question_id = q;
        rec.concept_id = c;
        rec.code = "code" + std::to_string(step);
        rec.r = r;
        s.records.push_back(rec);
    }
    return s;
}

}  // namespace

TEST_CASE("ce_forward zero weights and identity") {
    BackboneDims dims = small_dims();
    ParamStore p = make_params(dims, 1);
    for (double& x : p.data("bb.ce_w")) x = 0.0;
    p.data("bb.ce_b") = {0.5, -0.25};
    auto w = backbone_view(p);
    Vec x{1.0, 2.0, 3.0};
    auto out = ce_forward(w, dims, x);
    CHECK(out[0] == 0.5);
    CHECK(out[1] == -0.25);

    // identity-sized projection initialized to identity
    BackboneDims sq = dims;
    sq.d = 2;
    sq.d_in = 2;
    ParamStore p2 = make_params(sq, 1);
    p2.data("bb.ce_w") = {1.0, 0.0, 0.0, 1.0};
    p2.data("bb.ce_b") = {0.0, 0.0};
    auto w2 = backbone_view(p2);
    Vec x2{0.7, -0.3};
    auto out2 = ce_forward(w2, sq, x2);
    CHECK(out2[0] == doctest::Approx(0.7));
    CHECK(out2[1] == doctest::Approx(-0.3));
}

TEST_CASE("ce_forward matches a matvec oracle") {
    BackboneDims dims = small_dims();
    ParamStore p = make_params(dims, 5);
    auto w = backbone_view(p);
    Rng rng(6);
    Vec x{rng.normal(), rng.normal(), rng.normal()};
    auto out = ce_forward(w, dims, x);
    const Vec& cw = p.data("bb.ce_w");
    const Vec& cb = p.data("bb.ce_b");
    for (std::size_t i = 0; i < dims.d_in; ++i) {
        double acc = cb[i];
        for (std::size_t j = 0; j < dims.d; ++j) acc += cw[i * dims.d + j] * x[j];
        CHECK(out[i] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("ke_step determinism and boundedness") {
    BackboneDims dims = small_dims();
    ParamStore p = make_params(dims, 2);
    auto w = backbone_view(p);
    std::vector<double> h0;  // zero initial state
    Vec x{0.3, -0.7};
    std::vector<double> xin(x.begin(), x.end());
    auto h1 = ke_step(w, dims, h0, 1, 0, xin, 1);
    auto h1b = ke_step(w, dims, h0, 1, 0, xin, 1);
    CHECK(h1 == h1b);
    auto h2 = ke_step(w, dims, h1, 2, 1, xin, 0);
    for (double v : h2) CHECK(std::fabs(v) < 1.0);  // convex mix of tanh values

    // all-zero weights stay deterministic and bounded
    ParamStore z;
    register_backbone(z, dims);
    auto wz = backbone_view(z);
    auto hz = ke_step(wz, dims, h0, 0, 0, xin, 0);
    for (double v : hz) CHECK(std::fabs(v) <= 1.0);
}

TEST_CASE("ke_step matches a straight-line cell recomputation") {
    BackboneDims dims = small_dims();
    ParamStore p = make_params(dims, 9);
    auto w = backbone_view(p);
    Rng rng(10);
    std::vector<double> h_prev{rng.normal(), rng.normal()};
    std::vector<double> x{rng.normal(), rng.normal()};
    const int q = 3, c = 1, r = 1;
    auto got = ke_step(w, dims, h_prev, q, c, x, r);

    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const std::size_t in = dims.gru_in();
    Vec u(in, 0.0);
    u[0] = x[0];
    u[1] = x[1];
    const Vec& qe = p.data("bb.emb_q");
    const Vec& ce = p.data("bb.emb_c");
    u[2] = qe[std::size_t(q) * 2];
    u[3] = qe[std::size_t(q) * 2 + 1];
    u[4] = ce[std::size_t(c) * 2];
    u[5] = ce[std::size_t(c) * 2 + 1];
    u[6 + r] = 1.0;

    auto gate = [&](const char* wn, const char* un, const char* bn, std::size_t j) {
        const Vec& W = p.data(wn);
        const Vec& U = p.data(un);
        const Vec& B = p.data(bn);
        double acc = B[j];
        for (std::size_t k = 0; k < in; ++k) acc += W[j * in + k] * u[k];
        for (std::size_t k = 0; k < 2; ++k) acc += U[j * 2 + k] * h_prev[k];
        return acc;
    };
    for (std::size_t j = 0; j < 2; ++j) {
        double z = sig(gate("bb.wz", "bb.uz", "bb.bz", j));
        double rr = sig(gate("bb.wr", "bb.ur", "bb.br", j));
        // candidate uses the reset-gated previous state
        const Vec& W = p.data("bb.wh");
        const Vec& U = p.data("bb.uh");
        const Vec& B = p.data("bb.bh");
        double acc = B[j];
        for (std::size_t k = 0; k < in; ++k) acc += W[j * in + k] * u[k];
        double rj0 = sig(gate("bb.wr", "bb.ur", "bb.br", 0));
        double rj1 = sig(gate("bb.wr", "bb.ur", "bb.br", 1));
        acc += U[j * 2 + 0] * (rj0 * h_prev[0]);
        acc += U[j * 2 + 1] * (rj1 * h_prev[1]);
        double hh = std::tanh(acc);
        double expect = (1.0 - z) * h_prev[j] + z * hh;
        CHECK(got[j] == doctest::Approx(expect).epsilon(1e-12));
        (void)rr;
    }
}

TEST_CASE("predict basics and hand oracle") {
    BackboneDims dims = small_dims();
    ParamStore p = make_params(dims, 3);
    for (double& x : p.data("bb.pred_w")) x = 0.0;
    p.data("bb.pred_b") = {0.0};
    auto w = backbone_view(p);
    std::vector<double> h{0.4, -0.9};
    CHECK(predict(w, dims, h, 0) == doctest::Approx(0.5));  // zero weights

    p.data("bb.pred_w") = {1.0, -2.0, 0.5, 0.25};
    p.data("bb.pred_b") = {0.1};
    auto w2 = backbone_view(p);
    const Vec& qe = p.data("bb.emb_q");
    double logit = 1.0 * h[0] - 2.0 * h[1] + 0.5 * qe[2] + 0.25 * qe[3] + 0.1;
    CHECK(predict(w2, dims, h, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-logit))));
    CHECK(predict(w2, dims, h, 1) > 0.0);
    CHECK(predict(w2, dims, h, 1) < 1.0);
}

TEST_CASE("next-attempt loss gradient matches finite differences") {
    BackboneDims dims = small_dims();
    ParamStore params = make_params(dims, 11);
    LearnerSequence seq =
        make_seq({{0, 0, 0}, {1, 1, 1}, {2, 0, 0}, {3, 1, 1}, {1, 0, 1}});
    EncodedSeq codes;
    Rng rng(12);
    for (std::size_t t = 0; t < seq.records.size(); ++t) {
        Vec v(dims.d);
        for (auto& e : v) e = rng.normal();
        codes.push_back(v);
    }

    DiffLoss loss;
    loss.value = [&](const ParamStore& ps) {
        return sequence_loss_plain(ps, dims, seq, codes);
    };
    loss.value_and_grad = [&](const ParamStore& ps, GradStore& g) {
        Tape tape;
        TapeBinder binder(tape, const_cast<ParamStore&>(ps));
        Var l = sequence_loss_tape(tape, binder, dims, seq, codes);
        tape.backward(l);
        binder.accumulate(g);
        return tape.value(l);
    };
    CHECK(grad_check(loss, params, 1e-5) < 1e-4);
}

TEST_CASE("tape and plain sequence losses agree bitwise") {
    BackboneDims dims = small_dims();
    ParamStore params = make_params(dims, 21);
    LearnerSequence seq = make_seq({{0, 0, 1}, {1, 1, 0}, {2, 0, 1}, {0, 1, 0}});
    EncodedSeq codes;
    Rng rng(22);
    for (std::size_t t = 0; t < seq.records.size(); ++t) {
        Vec v(dims.d);
        for (auto& e : v) e = rng.normal();
        codes.push_back(v);
    }
    Tape tape;
    TapeBinder binder(tape, params);
    Var l = sequence_loss_tape(tape, binder, dims, seq, codes);
    CHECK(tape.value(l) == sequence_loss_plain(params, dims, seq, codes));
}

TEST_CASE("training reduces loss and is seed deterministic") {
    SynthConfig sc;
    sc.learners = 12;
    sc.questions = 6;
    sc.concepts = 3;
    sc.mean_length = 10;
    sc.d = 8;
    sc.seed = 31;
    SynthResult gen = generate(sc);
    Split split = split_dataset(gen.dataset, 0.7, 0.1, 0.2, 31);

    BackboneDims dims;
    dims.d = 8;
    dims.d_in = 8;
    dims.d_q = 4;
    dims.d_h = 8;
    dims.questions = std::size_t(gen.dataset.question_count);
    dims.concepts = std::size_t(gen.dataset.concept_count);

    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.epochs = 10;
    cfg.patience = 10;
    cfg.seed = 31;

    auto codes = encode_dataset(split.train, *gen.provider);
    ParamStore init;
    register_backbone(init, dims);
    Rng rng(cfg.seed);
    init_backbone(init, dims, rng);
    double loss0 = 0.0;
    for (std::size_t u = 0; u < split.train.sequences.size(); ++u)
        loss0 += sequence_loss_plain(init, dims, split.train.sequences[u], codes[u]);

    ParamStore trained = train_backbone(split.train, split.valid, *gen.provider, dims, cfg);
    double loss1 = 0.0;
    for (std::size_t u = 0; u < split.train.sequences.size(); ++u)
        loss1 += sequence_loss_plain(trained, dims, split.train.sequences[u], codes[u]);
    CHECK(loss1 < loss0);

    ParamStore again = train_backbone(split.train, split.valid, *gen.provider, dims, cfg);
    CHECK(checkpoint_digest(trained) == checkpoint_digest(again));  // bit-identical
}

TEST_CASE("single-step learners contribute no loss terms") {
    BackboneDims dims = small_dims();
    ParamStore params = make_params(dims, 41);
    LearnerSequence seq = make_seq({{0, 0, 1}});
    EncodedSeq codes{{0.1, 0.2, 0.3}};
    CHECK(sequence_loss_plain(params, dims, seq, codes) == 0.0);
}

TEST_CASE("metrics: perfect ranking, constant predictor, degenerate labels") {
    Metrics perfect = compute_metrics({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1});
    CHECK(perfect.auc == doctest::Approx(1.0));

    Metrics coin = compute_metrics({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1});
    CHECK(coin.rmse == doctest::Approx(0.5));
    CHECK(coin.auc == doctest::Approx(0.5));  // ties get average rank

    CHECK_THROWS_AS(compute_metrics({0.1, 0.9}, {1, 1}), CodaError);
    CHECK_THROWS_AS(compute_metrics({0.1, 0.9}, {0, 0}), CodaError);
}

TEST_CASE("auc matches the pairwise oracle and is rank invariant") {
    Rng rng(55);
    for (int rep = 0; rep < 25; ++rep) {
        std::size_t n = 10 + rng.below(30);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.below(8) / 8.0;  // force ties
            labels[i] = int(rng.below(2));
            (labels[i] ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        Metrics m = compute_metrics(scores, labels);

        double wins = 0.0;
        std::size_t np = 0, nn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] != 1) continue;
            ++np;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j] != 0) continue;
                if (scores[i] > scores[j]) wins += 1.0;
                if (scores[i] == scores[j]) wins += 0.5;
            }
        }
        nn = n - np;
        CHECK(m.auc == doctest::Approx(wins / double(np * nn)).epsilon(1e-12));

        // strictly monotone transform preserves AUC
        std::vector<double> warped(n);
        for (std::size_t i = 0; i < n; ++i) warped[i] = std::tanh(3.0 * scores[i] - 1.0);
        CHECK(compute_metrics(warped, labels).auc == doctest::Approx(m.auc).epsilon(1e-12));

        // order independence
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        std::vector<double> s2(n);
        std::vector<int> l2(n);
        for (std::size_t i = 0; i < n; ++i) {
            s2[i] = scores[perm[i]];
            l2[i] = labels[perm[i]];
        }
        Metrics m2 = compute_metrics(s2, l2);
        CHECK(m2.auc == doctest::Approx(m.auc).epsilon(1e-12));
        CHECK(m2.f1 == doctest::Approx(m.f1).epsilon(1e-12));
        CHECK(m2.rmse == doctest::Approx(m.rmse).epsilon(1e-12));
    }
}

TEST_CASE("checkpoint round trip preserves bits") {
    BackboneDims dims = small_dims();
    ParamStore p = make_params(dims, 77);
    std::string path = "/tmp/coda_test_ckpt.bin";
    save_checkpoint(p, path);
    ParamStore q = load_checkpoint(path);
    REQUIRE(q.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p.at(i).name == q.at(i).name);
        CHECK(p.at(i).shape == q.at(i).shape);
        CHECK(p.at(i).data == q.at(i).data);
    }
    CHECK(checkpoint_digest(p) == checkpoint_digest(q));
    std::remove(path.c_str());
}
