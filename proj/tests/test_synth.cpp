#include <cmath>

#include "coda/synth.hpp"
#include "doctest.h"

using namespace coda;

namespace {

double dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("zero noise rates produce all-core truth") {
    SynthConfig cfg;
    cfg.learners = 10;
    cfg.questions = 6;
    cfg.concepts = 3;
    cfg.mean_length = 12;
    cfg.rho_unwanted = 0.0;
    cfg.rho_weak = 0.0;
    cfg.seed = 1;
    SynthResult gen = generate(cfg);
    for (const auto& learner : gen.truth.learners)
        for (const auto& st : learner) CHECK(st.role == Role::Core);
}

TEST_CASE("generator respects counts and the minimum length") {
    SynthConfig cfg;
    cfg.learners = 25;
    cfg.questions = 8;
    cfg.concepts = 4;
    cfg.mean_length = 9;
    cfg.seed = 2;
    SynthResult gen = generate(cfg);
    CHECK(gen.dataset.sequences.size() == 25);
    for (const auto& seq : gen.dataset.sequences) CHECK(seq.records.size() >= 5);
    CHECK(gen.truth.learners.size() == 25);
    for (std::size_t u = 0; u < 25; ++u)
        CHECK(gen.truth.learners[u].size() == gen.dataset.sequences[u].records.size());
}

TEST_CASE("generation is deterministic under the seed") {
    SynthConfig cfg;
    cfg.learners = 8;
    cfg.questions = 5;
    cfg.concepts = 2;
    cfg.mean_length = 10;
    cfg.seed = 3;
    SynthResult a = generate(cfg);
    SynthResult b = generate(cfg);
    REQUIRE(a.keys.size() == b.keys.size());
    CHECK(a.keys == b.keys);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i] == b.rows[i]);
    for (std::size_t u = 0; u < a.dataset.sequences.size(); ++u) {
        const auto& ra = a.dataset.sequences[u].records;
        const auto& rb = b.dataset.sequences[u].records;
        REQUIRE(ra.size() == rb.size());
        for (std::size_t t = 0; t < ra.size(); ++t) {
            CHECK(ra[t].r == rb[t].r);
            CHECK(ra[t].question_id == rb[t].question_id);
        }
    }

    cfg.seed = 4;
    SynthResult c = generate(cfg);
    bool differs = c.keys.size() != a.keys.size();
    if (!differs)
        for (std::size_t i = 0; i < a.rows.size() && !differs; ++i) differs = a.rows[i] != c.rows[i];
    CHECK(differs);
}

TEST_CASE("geometric separation invariants hold on the output") {
    SynthConfig cfg;
    cfg.learners = 30;
    cfg.questions = 10;
    cfg.concepts = 5;
    cfg.mean_length = 20;
    cfg.seed = 5;
    SynthResult gen = generate(cfg);

    std::size_t unwanted_seen = 0, weak_seen = 0;
    for (std::size_t u = 0; u < gen.dataset.sequences.size(); ++u) {
        const auto& seq = gen.dataset.sequences[u];
        for (std::size_t t = 0; t < seq.records.size(); ++t) {
            const auto& st = gen.truth.learners[u][t];
            Vec x = gen.provider->encode(seq.records[t].code);
            if (st.role == Role::Unwanted) {
                ++unwanted_seen;
                for (const Vec& c : gen.concept_centroids)
                    CHECK(dist(x, c) >= cfg.margin);
                CHECK(seq.records[t].r == 0);  // junk never passes the judge
            } else if (st.role == Role::Weak) {
                ++weak_seen;
                REQUIRE(st.core_step >= 1);
                Vec core = gen.provider->encode(seq.records[std::size_t(st.core_step) - 1].code);
                CHECK(dist(x, core) <= cfg.perturb_radius);
                CHECK(gen.truth.learners[u][std::size_t(st.core_step) - 1].role == Role::Core);
                CHECK(st.core_step < int(t) + 1);
            }
        }
    }
    CHECK(unwanted_seen > 0);
    CHECK(weak_seen > 0);
}

TEST_CASE("realized noise rates are near their targets") {
    SynthConfig cfg;
    cfg.learners = 120;
    cfg.questions = 20;
    cfg.concepts = 8;
    cfg.mean_length = 30;
    cfg.seed = 6;
    SynthResult gen = generate(cfg);
    std::size_t total = 0, unw = 0, weak = 0;
    for (const auto& learner : gen.truth.learners)
        for (const auto& st : learner) {
            ++total;
            if (st.role == Role::Unwanted) ++unw;
            if (st.role == Role::Weak) ++weak;
        }
    CHECK(double(unw) / double(total) == doctest::Approx(cfg.rho_unwanted).epsilon(0.35));
    CHECK(double(weak) / double(total) == doctest::Approx(cfg.rho_weak).epsilon(0.35));
}

TEST_CASE("accept rate rises with latent mastery") {
    SynthConfig cfg;
    cfg.learners = 150;
    cfg.questions = 15;
    cfg.concepts = 6;
    cfg.mean_length = 30;
    cfg.seed = 7;
    SynthResult gen = generate(cfg);

    std::vector<std::pair<double, int>> pool;  // (mastery, r) on genuine/weak attempts
    for (std::size_t u = 0; u < gen.dataset.sequences.size(); ++u)
        for (std::size_t t = 0; t < gen.dataset.sequences[u].records.size(); ++t) {
            const auto& st = gen.truth.learners[u][t];
            if (st.role == Role::Unwanted) continue;
            pool.push_back({st.mastery, gen.dataset.sequences[u].records[t].r});
        }
    std::sort(pool.begin(), pool.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t buckets = 3;
    Vec rate(buckets, 0.0);
    for (std::size_t b = 0; b < buckets; ++b) {
        std::size_t lo = b * pool.size() / buckets, hi = (b + 1) * pool.size() / buckets;
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += pool[i].second;
        rate[b] = acc / double(hi - lo);
    }
    CHECK(rate[0] < rate[1]);
    CHECK(rate[1] < rate[2]);
}

TEST_CASE("infeasible configs error out") {
    SynthConfig cfg;
    cfg.margin = 0.1;
    cfg.perturb_radius = 0.15;  // margin below the radius
    CHECK_THROWS(generate(cfg));

    SynthConfig hot;
    hot.rho_unwanted = 0.5;
    hot.rho_weak = 0.5;
    CHECK_THROWS(generate(hot));
}

TEST_CASE("identification scorer counting") {
    GroundTruth truth;
    truth.learners.resize(1);
    NoiseAnnotation ann;
    // 20 steps: 10 true unwanted, 10 core
    for (int t = 0; t < 20; ++t) {
        truth.learners[0].push_back({t < 10 ? Role::Unwanted : Role::Core, -1, 0.0});
        StepAnnotation st;
        st.role = t < 10 ? Role::Unwanted : Role::Core;
        ann.steps.push_back(st);
    }
    // perfect prediction
    auto perfect = score_identification({ann}, truth);
    CHECK(perfect.unwanted.precision == 1.0);
    CHECK(perfect.unwanted.recall == 1.0);

    // one false positive among, no misses: 9 tp at steps 1..9? keep all 10
    // true positives and add one extra flag
    NoiseAnnotation fp = ann;
    fp.steps[10].role = Role::Unwanted;
    auto one_fp = score_identification({fp}, truth);
    CHECK(one_fp.unwanted.precision == doctest::Approx(10.0 / 11.0));
    CHECK(one_fp.unwanted.recall == 1.0);

    // nothing flagged: recall 0
    NoiseAnnotation none = ann;
    for (auto& st : none.steps) st.role = Role::Core;
    auto zero = score_identification({none}, truth);
    CHECK(zero.unwanted.recall == 0.0);
    CHECK(zero.unwanted.tp == 0);

    // misaligned lengths error
    NoiseAnnotation shorter = ann;
    shorter.steps.pop_back();
    CHECK_THROWS(score_identification({shorter}, truth));
}

TEST_CASE("scorer example: precision 0.9 recall 1.0") {
    GroundTruth truth;
    truth.learners.resize(1);
    NoiseAnnotation ann;
    for (int t = 0; t < 30; ++t) {
        bool true_unw = t < 9;  // 9 true positives
        truth.learners[0].push_back({true_unw ? Role::Unwanted : Role::Core, -1, 0.0});
        StepAnnotation st;
        st.role = (t < 9 || t == 20) ? Role::Unwanted : Role::Core;  // one false positive
        ann.steps.push_back(st);
    }
    auto sc = score_identification({ann}, truth);
    CHECK(sc.unwanted.precision == doctest::Approx(0.9));
    CHECK(sc.unwanted.recall == doctest::Approx(1.0));
    CHECK(sc.unwanted.f1 == doctest::Approx(2 * 0.9 / 1.9));
}
