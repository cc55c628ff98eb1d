#include "coda/synth.hpp"

#include <cmath>
#include <fstream>

#include "coda/error.hpp"
#include "coda/numerics.hpp"
#include "coda/rng.hpp"
#include "json.hpp"

namespace coda {

namespace {

// embedding family constants (see generate() for the layout)
constexpr double kBaseMix = 0.7;       // shared content direction weight in centroids
constexpr double kQuestionNoise = 0.45; // question anchor spread around its centroid
constexpr double kCodeNoise = 0.35;     // typical submission spread around its anchor
constexpr double kCanonNoise = 0.1;    // canonical solutions sit tighter
constexpr double kCanonFraction = 0.2;
constexpr double kAntiJunk = 0.9;      // canonical solutions lean away from the junk direction
constexpr double kJunkMix = 0.35;      // junk direction weight in unwanted codes
constexpr double kChainContinue = 0.55;
constexpr double kLearningGain = 0.45;
constexpr double kDifficultySpread = 0.7;
constexpr std::size_t kFocusConcepts = 3;  // personal curriculum breadth
constexpr double kStyleGain = 0.6;         // code style tracks current mastery
constexpr double kJunkNoise = 0.2;         // genuine code varies on the junk direction too

Vec random_unit(Rng& rng, std::size_t d) {
    Vec v(d);
    double n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        v[i] = rng.normal();
        n2 += v[i] * v[i];
    }
    double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
    return v;
}

void subtract_projection(Vec& v, const Vec& dir) {
    double p = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) p += v[i] * dir[i];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * dir[i];
}

void normalize(Vec& v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
}

double dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double t = a[i] - b[i];
        s += t * t;
    }
    return std::sqrt(s);
}

}  // namespace

SynthResult generate(const SynthConfig& cfg) {
    require(cfg.rho_unwanted + cfg.rho_weak <= 0.9, "rho_u + rho_w must leave room for cores");
    require(cfg.margin > cfg.perturb_radius, "margin must exceed the perturbation radius");
    require(cfg.learners >= 1 && cfg.questions >= 1 && cfg.concepts >= 1, "empty synth config");
    require(cfg.mean_length >= 5, "mean length below the ingestion minimum");

    Rng rng(cfg.seed);
    const std::size_t d = cfg.d;

    // Shared geometry: a base content direction correlates all codes, a junk
    // direction (orthogonal to every centroid) marks unrelated submissions,
    // and canonical solutions lean away from it. That gives the solution
    // similarities of an unrelated probe a heavy low tail while genuine
    // probes see their own cluster at the top.
    Vec base = random_unit(rng, d);
    Vec junk = random_unit(rng, d);
    subtract_projection(junk, base);
    normalize(junk);
    // maturity of the coding style; mastery leaves a readable trace in code
    Vec style = random_unit(rng, d);
    subtract_projection(style, base);
    subtract_projection(style, junk);
    normalize(style);

    std::vector<Vec> centroid(cfg.concepts);
    for (std::size_t k = 0; k < cfg.concepts; ++k) {
        Vec z = random_unit(rng, d);
        subtract_projection(z, base);
        subtract_projection(z, junk);
        normalize(z);
        centroid[k].resize(d);
        double w = std::sqrt(1.0 - kBaseMix * kBaseMix);
        for (std::size_t i = 0; i < d; ++i) centroid[k][i] = kBaseMix * base[i] + w * z[i];
        normalize(centroid[k]);
    }

    std::vector<Vec> anchor(cfg.questions);
    std::vector<int> concept_of(cfg.questions);
    Vec difficulty(cfg.questions);
    for (std::size_t q = 0; q < cfg.questions; ++q) {
        concept_of[q] = int(q % cfg.concepts);
        Vec y = random_unit(rng, d);
        anchor[q].resize(d);
        for (std::size_t i = 0; i < d; ++i)
            anchor[q][i] = centroid[concept_of[q]][i] + kQuestionNoise * y[i];
        normalize(anchor[q]);
        difficulty[q] = rng.normal(0.0, kDifficultySpread);
    }

    // Retry-burst calibration: failed genuine attempts spawn runs of minor
    // modifications, accepted ones occasionally a single cleanup. Solve the
    // burst rate so the overall weak fraction hits rho_weak.
    const double unwanted_odds = cfg.rho_unwanted / (1.0 - cfg.rho_unwanted);
    const double weak_per_core =
        cfg.rho_weak / std::max(1e-9, 1.0 - cfg.rho_unwanted - cfg.rho_weak);
    const double mean_burst = 2.26;      // 1 + capped geometric below
    const double fail_rate = 0.45;       // empirical failure rate of genuine attempts
    const double cleanup_rate = std::min(0.15, weak_per_core);
    // fail*burst_rate*mean_burst + (1-fail)*cleanup_rate = weak_per_core
    double burst_rate = std::clamp(
        (weak_per_core - (1.0 - fail_rate) * cleanup_rate) / (fail_rate * mean_burst), 0.0, 1.0);

    SynthResult out;
    out.dataset.question_count = int(cfg.questions);
    out.dataset.concept_count = int(cfg.concepts);

    std::map<std::string, Vec> table;
    for (std::size_t u = 0; u < cfg.learners; ++u) {
        Rng lr = rng.split(u + 1);
        LearnerSequence seq;
        seq.learner_id = "L" + std::to_string(1000 + u);
        std::vector<TruthStep> truth;

        Vec mastery(cfg.concepts);
        for (std::size_t k = 0; k < cfg.concepts; ++k) mastery[k] = lr.normal(-0.3, 0.8);

        // learners practice a small personal set of concepts, so their
        // mastery trajectories are trackable from the sequence
        std::vector<int> focus_questions;
        {
            std::vector<std::size_t> cs(cfg.concepts);
            for (std::size_t k = 0; k < cfg.concepts; ++k) cs[k] = k;
            lr.shuffle(cs);
            std::size_t take = std::min(kFocusConcepts, cfg.concepts);
            for (std::size_t q = 0; q < cfg.questions; ++q)
                for (std::size_t k = 0; k < take; ++k)
                    if (std::size_t(concept_of[q]) == cs[k]) focus_questions.push_back(int(q));
        }

        std::size_t target_len = cfg.mean_length;
        if (cfg.mean_length > 5) target_len = cfg.mean_length - 2 + lr.below(5);

        auto push_step = [&](int q, const Vec& x, int r, Role role, int core_step, double mast) {
            SubmissionRecord rec;
            rec.step = int(seq.records.size()) + 1;
            rec.question_id = q;
            rec.concept_id = concept_of[std::size_t(q)];
            rec.code = seq.learner_id + "_s" + std::to_string(rec.step);
            rec.feedback = r == 1 ? "Accepted" : "Wrong Answer";
            rec.r = r;
            table[rec.code] = x;
            out.keys.push_back(rec.code);
            out.rows.push_back(x);
            seq.records.push_back(std::move(rec));
            truth.push_back({role, core_step, mast});
        };

        std::vector<Vec> used_private;  // this learner's unwanted directions
        auto maybe_unwanted = [&](int q) {
            if (!lr.bernoulli(unwanted_odds)) return;
            Vec x(d);
            for (int attempt = 0; attempt < 100; ++attempt) {
                Vec w = random_unit(lr, d);
                subtract_projection(w, junk);
                subtract_projection(w, base);   // keep junk away from the content cloud
                subtract_projection(w, style);  // and off the style axis
                for (const Vec& ck : centroid) subtract_projection(w, ck);
                // mutually orthogonal within a learner so unwanted nodes
                // cannot link to each other in the per-learner graph; cap
                // the constraints so small dimensions stay feasible
                std::size_t keep = std::min(used_private.size(), d / 4);
                for (std::size_t pi = used_private.size() - keep; pi < used_private.size(); ++pi)
                    subtract_projection(w, used_private[pi]);
                double n2 = 0.0;
                for (double e : w) n2 += e * e;
                if (n2 < 1e-6) continue;  // degenerate draw; try again
                normalize(w);
                double a = std::sqrt(1.0 - kJunkMix * kJunkMix);
                for (std::size_t i = 0; i < d; ++i) x[i] = kJunkMix * junk[i] + a * w[i];
                bool ok = true;
                for (const Vec& c : centroid)
                    if (dist(x, c) < cfg.margin) ok = false;
                if (ok) {
                    used_private.push_back(w);
                    break;
                }
                require(attempt < 99, "cannot satisfy the unwanted margin; lower it");
            }
            push_step(q, x, 0, Role::Unwanted, -1, 0.0);
        };

        // visit distinct questions so separate chains never share an anchor
        std::vector<int> question_order = focus_questions;
        for (std::size_t q = 0; q < cfg.questions; ++q) question_order.push_back(int(q));
        lr.shuffle(question_order);
        std::stable_sort(question_order.begin(), question_order.end(), [&](int a, int b) {
            auto in_focus = [&](int qq) {
                for (int f : focus_questions)
                    if (f == qq) return 0;
                return 1;
            };
            return in_focus(a) < in_focus(b);
        });
        std::vector<bool> used(cfg.questions, false);
        std::size_t cursor = 0;

        while (seq.records.size() < target_len) {
            int q = -1;
            while (cursor < question_order.size()) {
                int cand = question_order[cursor++];
                if (!used[std::size_t(cand)]) {
                    q = cand;
                    break;
                }
            }
            if (q < 0) q = int(lr.below(cfg.questions));  // every question exhausted
            used[std::size_t(q)] = true;
            int c = concept_of[std::size_t(q)];
            std::size_t cores = 2;
            while (cores < 5 && lr.bernoulli(kChainContinue)) ++cores;

            for (std::size_t j = 0; j < cores; ++j) {
                bool canonical = lr.bernoulli(kCanonFraction);
                Vec g = random_unit(lr, d);
                Vec x(d);
                double noise = canonical ? kCanonNoise : kCodeNoise;
                double m = mastery[std::size_t(c)];
                double junk_part = kJunkNoise * lr.normal();  // masks the junk axis
                for (std::size_t i = 0; i < d; ++i) {
                    x[i] = anchor[std::size_t(q)][i] + noise * g[i] +
                           kStyleGain * std::tanh(m) * style[i] + junk_part * junk[i];
                    if (canonical) x[i] -= kAntiJunk * junk[i];
                }
                normalize(x);
                int r = lr.bernoulli(sigmoid(m - difficulty[std::size_t(q)])) ? 1 : 0;
                int core_step = int(seq.records.size()) + 1;
                push_step(q, x, r, Role::Core, -1, m);
                mastery[std::size_t(c)] += kLearningGain;  // genuine attempts teach
                maybe_unwanted(q);

                // minor-modification retries repeat the verdict and carry no
                // fresh evidence about mastery
                std::size_t burst = 0;
                if (r == 0 && lr.bernoulli(burst_rate)) {
                    burst = 1;
                    while (burst < 5 && lr.bernoulli(0.59)) ++burst;
                } else if (r == 1 && lr.bernoulli(cleanup_rate)) {
                    burst = 1;
                }
                for (std::size_t k = 0; k < burst; ++k) {
                    // retries drift toward hasty style while staying within
                    // the perturbation radius of their core (orthogonal
                    // split keeps the total displacement <= radius)
                    Vec delta = random_unit(lr, d);
                    subtract_projection(delta, style);
                    normalize(delta);
                    double len = 0.6 * cfg.perturb_radius * lr.uniform(0.3, 0.95);
                    double drift = 0.8 * cfg.perturb_radius * (k == 0 ? 0.5 : 1.0);
                    Vec wx = x;
                    for (std::size_t i = 0; i < d; ++i)
                        wx[i] += len * delta[i] - drift * style[i];
                    push_step(q, wx, r, Role::Weak, core_step, mastery[std::size_t(c)]);
                    maybe_unwanted(q);
                }
            }
        }
        out.dataset.sequences.push_back(std::move(seq));
        out.truth.learners.push_back(std::move(truth));
    }
    out.concept_centroids = centroid;
    out.provider = std::make_shared<FileProvider>(std::move(table), d);
    return out;
}

IdentificationScore score_identification(const std::vector<NoiseAnnotation>& pred,
                                         const GroundTruth& truth) {
    require(pred.size() == truth.learners.size(), "score_identification: learner count mismatch");
    IdentificationScore sc;
    for (std::size_t u = 0; u < pred.size(); ++u) {
        require(pred[u].steps.size() == truth.learners[u].size(),
                "score_identification: step count mismatch at learner " + std::to_string(u));
        for (std::size_t t = 0; t < pred[u].steps.size(); ++t) {
            bool pu = pred[u].steps[t].role == Role::Unwanted;
            bool tu = truth.learners[u][t].role == Role::Unwanted;
            if (pu && tu) sc.unwanted.tp++;
            if (pu && !tu) sc.unwanted.fp++;
            if (!pu && tu) sc.unwanted.fn++;
            bool pw = pred[u].steps[t].role == Role::Weak;
            bool tw = truth.learners[u][t].role == Role::Weak;
            if (pw && tw) sc.weak.tp++;
            if (pw && !tw) sc.weak.fp++;
            if (!pw && tw) sc.weak.fn++;
        }
    }
    auto finish = [](RoleScore& r) {
        r.precision = (r.tp + r.fp) == 0 ? 1.0 : double(r.tp) / double(r.tp + r.fp);
        r.recall = (r.tp + r.fn) == 0 ? 1.0 : double(r.tp) / double(r.tp + r.fn);
        r.f1 = (r.precision + r.recall) == 0.0
                   ? 0.0
                   : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    };
    finish(sc.unwanted);
    finish(sc.weak);
    return sc;
}

void save_truth(const GroundTruth& truth, const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CodaError("cannot open " + path + " for writing");
    for (std::size_t u = 0; u < truth.learners.size(); ++u) {
        for (std::size_t t = 0; t < truth.learners[u].size(); ++t) {
            const auto& st = truth.learners[u][t];
            nlohmann::ordered_json j;
            j["learner"] = ds.sequences[u].learner_id;
            j["step"] = int(t) + 1;
            j["role"] = st.role == Role::Unwanted ? "unwanted" : (st.role == Role::Weak ? "weak" : "core");
            if (st.role == Role::Weak) j["core_step"] = st.core_step;
            j["mastery"] = st.mastery;
            out << j.dump() << "\n";
        }
    }
}

}  // namespace coda
