#include "coda/denoise.hpp"

#include <algorithm>
#include <cmath>

#include "coda/error.hpp"
#include "coda/numerics.hpp"

namespace coda {

void register_coda(ParamStore& params, const CodaDims& dims) {
    params.add("coda.W", {dims.d});
    params.add("coda.Wa", {dims.d, dims.d});
    params.add("coda.Wc", {dims.d});
    params.add("coda.attn_w1", {dims.d, 3 * dims.d});
    params.add("coda.attn_b1", {dims.d});
    params.add("coda.attn_w2", {dims.d});
    params.add("coda.attn_b2", {1});
    params.add("coda.Wp", {dims.d});
    params.add("coda.WA", {dims.b, 2 * dims.d});
    params.add("coda.WB", {dims.b, dims.d_h});
    params.add("coda.WC", {dims.b, dims.d_h});
}

void init_coda(ParamStore& params, const CodaDims& dims, Rng& rng) {
    // Hadamard weights start at identity so the initial graph is the plain
    // cosine graph and prompts carry the raw embedding.
    for (double& x : params.data("coda.W")) x = 1.0;
    for (double& x : params.data("coda.Wc")) x = 1.0;
    for (double& x : params.data("coda.Wp")) x = 1.0;
    double ba = std::sqrt(6.0 / double(2 * dims.d)) * 0.3;
    for (double& x : params.data("coda.Wa")) x = rng.uniform(-ba, ba);
    double b1 = std::sqrt(6.0 / double(4 * dims.d));
    for (double& x : params.data("coda.attn_w1")) x = rng.uniform(-b1, b1);
    double b2 = std::sqrt(6.0 / double(dims.d + 1));
    for (double& x : params.data("coda.attn_w2")) x = rng.uniform(-b2, b2);
    double bA = std::sqrt(6.0 / double(2 * dims.d + dims.b));
    for (double& x : params.data("coda.WA")) x = rng.uniform(-bA, bA);
    double bC = 0.3 / std::sqrt(double(dims.d_h));
    for (double& x : params.data("coda.WC")) x = rng.uniform(-bC, bC);
    // WB stays zero: tuning starts exactly at the backbone
}

void zero_coda(ParamStore& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& slot = params.at(i);
        if (slot.name.rfind("coda.", 0) == 0)
            for (double& x : slot.data) x = 0.0;
    }
}

CodaDims coda_dims_from(const ParamStore& params) {
    CodaDims dims;
    dims.d = params.slot("coda.W").shape[0];
    dims.b = params.slot("coda.WA").shape[0];
    dims.d_h = params.slot("coda.WB").shape[1];
    return dims;
}

CodaWeights<double> coda_view(const ParamStore& p) {
    CodaWeights<double> w;
    auto span_of = [&](const char* name) {
        const Vec& v = p.data(name);
        return std::span<const double>(v.data(), v.size());
    };
    w.W = span_of("coda.W");
    w.Wa = span_of("coda.Wa");
    w.Wc = span_of("coda.Wc");
    w.attn_w1 = span_of("coda.attn_w1");
    w.attn_b1 = span_of("coda.attn_b1");
    w.attn_w2 = span_of("coda.attn_w2");
    w.attn_b2 = span_of("coda.attn_b2");
    w.Wp = span_of("coda.Wp");
    w.WA = span_of("coda.WA");
    w.WB = span_of("coda.WB");
    w.WC = span_of("coda.WC");
    return w;
}

CodaWeights<Var> coda_bind(TapeBinder& b) {
    CodaWeights<Var> w;
    auto span_of = [&](const char* name) {
        const auto& v = b.bind(name);
        return std::span<const Var>(v.data(), v.size());
    };
    w.W = span_of("coda.W");
    w.Wa = span_of("coda.Wa");
    w.Wc = span_of("coda.Wc");
    w.attn_w1 = span_of("coda.attn_w1");
    w.attn_b1 = span_of("coda.attn_b1");
    w.attn_w2 = span_of("coda.attn_w2");
    w.attn_b2 = span_of("coda.attn_b2");
    w.Wp = span_of("coda.Wp");
    w.WA = span_of("coda.WA");
    w.WB = span_of("coda.WB");
    w.WC = span_of("coda.WC");
    return w;
}

namespace {

double median_of(Vec v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

UnwantedResult identify_unwanted(const CodeGraph& g, const SymMatrix& m, const LearnerSequence& seq,
                                 const std::vector<Vec>& embeddings, const SolutionBank& bank,
                                 const Vec& weight, bool disable_bank_test) {
    const std::size_t n = g.n;
    require(seq.records.size() == n && embeddings.size() == n, "identify_unwanted: size mismatch");
    const std::size_t d = weight.size();

    std::vector<bool> is_unwanted(n, false);
    std::vector<std::size_t> isolated = g.isolated_nodes();

    if (!disable_bank_test) {
        Vec probe(d), sol(d);
        for (std::size_t i : isolated) {
            const auto* solutions = bank.find(seq.records[i].question_id);
            if (solutions == nullptr || solutions->size() < 2) continue;  // cannot judge the skew
            for (std::size_t c = 0; c < d; ++c) probe[c] = weight[c] * embeddings[i][c];
            Vec sims;
            sims.reserve(solutions->size());
            for (const Vec& s : *solutions) {
                for (std::size_t c = 0; c < d; ++c) sol[c] = weight[c] * s[c];
                sims.push_back(cosine(probe, sol));
            }
            double mean = 0.0;
            for (double s : sims) mean += s;
            mean /= double(sims.size());
            if (mean < median_of(sims)) is_unwanted[i] = true;
        }
    }

    UnwantedResult out;
    std::vector<std::size_t> new_id(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
        if (is_unwanted[i])
            out.unwanted.push_back(i);
        else {
            new_id[i] = out.survivors.size();
            out.survivors.push_back(i);
        }
    }

    out.graph.n = out.survivors.size();
    out.graph.neighbors.assign(out.graph.n, {});
    for (std::size_t i = 0; i < n; ++i) {
        if (is_unwanted[i]) continue;
        for (std::size_t j : g.neighbors[i])
            if (j > i && !is_unwanted[j]) out.graph.add_edge(new_id[i], new_id[j]);
    }

    // Re-attach isolated survivors by one edge to the most similar surviving
    // node; prefer originally non-isolated targets, ties to the smaller step.
    for (std::size_t i : isolated) {
        if (is_unwanted[i]) continue;
        std::size_t best = SIZE_MAX;
        double best_sim = 0.0;
        bool best_connected = false;
        for (std::size_t j : out.survivors) {
            if (j == i) continue;
            bool j_connected = !g.isolated(j);
            double sim = m.at(i, j);
            bool better;
            if (best == SIZE_MAX)
                better = true;
            else if (j_connected != best_connected)
                better = j_connected;
            else
                better = sim > best_sim;
            if (better) {
                best = j;
                best_sim = sim;
                best_connected = j_connected;
            }
        }
        if (best != SIZE_MAX) out.graph.add_edge(new_id[i], new_id[best]);
    }
    out.graph.recompute_components();
    return out;
}

KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed) {
    require(k >= 1, "kmeans: k must be >= 1");
    KMeansResult res;
    const std::size_t n = points.size();
    if (n == 0) return res;
    k = std::min(k, n);
    const std::size_t d = points[0].size();
    Rng rng(seed ^ 0x6b6d65616e73ULL);

    auto dist2 = [&](const Vec& a, const Vec& b) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double t = a[c] - b[c];
            s += t * t;
        }
        return s;
    };

    // k-means++ seeding
    res.centroids.push_back(points[rng.below(n)]);
    Vec mind(n, 0.0);
    while (res.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = dist2(points[i], res.centroids[0]);
            for (std::size_t c = 1; c < res.centroids.size(); ++c)
                best = std::min(best, dist2(points[i], res.centroids[c]));
            mind[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            // all remaining points coincide with centroids; fall back to a
            // deterministic unseen pick
            res.centroids.push_back(points[res.centroids.size() % n]);
            continue;
        }
        double target = rng.uniform() * total;
        std::size_t pick = n - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += mind[i];
            if (acc >= target) {
                pick = i;
                break;
            }
        }
        res.centroids.push_back(points[pick]);
    }

    res.assignment.assign(n, 0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t iter = 0; iter < 50; ++iter) {
        bool changed = iter == 0;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double bd = dist2(points[i], res.centroids[0]);
            for (std::size_t c = 1; c < res.centroids.size(); ++c) {
                double dd = dist2(points[i], res.centroids[c]);
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            if (res.assignment[i] != best) changed = true;
            res.assignment[i] = best;
            inertia += bd;
        }
        res.inertia_trace.push_back(inertia);
        if (!changed && iter > 0) break;

        std::fill(counts.begin(), counts.end(), 0);
        std::vector<Vec> sums(res.centroids.size(), Vec(d, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            counts[res.assignment[i]]++;
            for (std::size_t c = 0; c < d; ++c) sums[res.assignment[i]][c] += points[i][c];
        }
        for (std::size_t c = 0; c < res.centroids.size(); ++c) {
            if (counts[c] == 0) {
                // reseed on the point farthest from its centroid
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double dd = dist2(points[i], res.centroids[res.assignment[i]]);
                    if (dd > fd) {
                        fd = dd;
                        far = i;
                    }
                }
                res.centroids[c] = points[far];
                continue;
            }
            for (std::size_t cc = 0; cc < d; ++cc) res.centroids[c][cc] = sums[c][cc] / double(counts[c]);
        }
    }
    return res;
}

}  // namespace coda
