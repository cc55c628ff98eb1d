#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coda/bind.hpp"
#include "coda/data.hpp"
#include "coda/graph.hpp"
#include "coda/params.hpp"
#include "coda/rng.hpp"
#include "coda/scal.hpp"

namespace coda {

enum class Role : std::uint8_t { Unwanted, Core, Weak };

struct StepAnnotation {
    Role role = Role::Core;
    int cluster = -1;    // valid for Core/Weak
    int core_step = -1;  // valid for Weak; 1-based step of the cluster core
};

struct NoiseAnnotation {
    std::vector<StepAnnotation> steps;  // index t-1 holds step t
};

struct DenoiseConfig {
    double p = 0.2;             // edge budget fraction of T^2
    std::size_t clusters = 3;   // C_k
    std::size_t gcn_layers = 2; // L
    std::size_t khop = 2;       // cluster receptive field
    std::uint64_t seed = 1;
    bool disable_unwanted = false;  // ablation: treat every isolated node as related
};

// Trainable Coda parameters: the metric weight shared with graph
// construction, GCN weights, cluster attention net, prompt weight and the
// low-rank adaptor pair.
struct CodaDims {
    std::size_t d = 32;   // embedding dim; d' == d
    std::size_t d_h = 32; // backbone state dim
    std::size_t b = 16;   // adaptor rank, default d/2
};

void register_coda(ParamStore& params, const CodaDims& dims);
void init_coda(ParamStore& params, const CodaDims& dims, Rng& rng);
void zero_coda(ParamStore& params);
CodaDims coda_dims_from(const ParamStore& params);

template <class S>
struct CodaWeights {
    std::span<const S> W;        // d
    std::span<const S> Wa;       // d x d
    std::span<const S> Wc;       // d
    std::span<const S> attn_w1;  // d x 3d
    std::span<const S> attn_b1;  // d
    std::span<const S> attn_w2;  // d
    std::span<const S> attn_b2;  // 1
    std::span<const S> Wp;       // d
    std::span<const S> WA;       // b x 2d
    std::span<const S> WB;       // b x d_h
    std::span<const S> WC;       // b x d_h, state gate of the correction
};

CodaWeights<double> coda_view(const ParamStore& params);
CodaWeights<Var> coda_bind(TapeBinder& binder);

struct UnwantedResult {
    std::vector<std::size_t> unwanted;   // node indices in the original graph
    std::vector<std::size_t> survivors;  // remaining node indices, ascending
    CodeGraph graph;                     // relinked graph over survivors
};

// Bank-correlation test on isolated nodes (mean < median of solution
// similarities marks a node unwanted), removal, and relinking of the
// remaining isolated nodes to their most similar surviving node.
UnwantedResult identify_unwanted(const CodeGraph& g, const SymMatrix& m, const LearnerSequence& seq,
                                 const std::vector<Vec>& embeddings, const SolutionBank& bank,
                                 const Vec& weight, bool disable_bank_test = false);

struct KMeansResult {
    std::vector<std::size_t> assignment;
    std::vector<Vec> centroids;
    std::vector<double> inertia_trace;  // after each assignment pass
};

// Seeded k-means++ with Lloyd iterations to an assignment fixpoint (<= 50).
KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed);

// Cluster-aware GCN over one relinked survivor graph. X holds the raw
// (unweighted) survivor embeddings; the output adds the raw embedding back
// as a residual. Aggregation is mean over 1-hop neighbors with attention
// computed from the k-hop cluster context.
template <class S>
std::vector<std::vector<S>> cluster_gcn(const CodeGraph& g, const std::vector<Vec>& X,
                                        const CodaWeights<S>& w, std::size_t layers,
                                        std::size_t khop) {
    const std::size_t n = g.n;
    const std::size_t d = w.W.size();
    require(layers >= 1, "cluster_gcn: layers must be >= 1");
    for (std::size_t i = 0; i < n; ++i)
        require(g.n < 2 || g.degree(i) >= 1, "cluster_gcn: node without neighbors in a multi-node graph");

    // k-hop cluster context means over raw embeddings (including the node)
    std::vector<Vec> context(n, Vec(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        auto hop = k_hop_neighborhood(g, i, khop);
        for (std::size_t c = 0; c < d; ++c) context[i][c] = X[i][c];
        for (std::size_t j : hop)
            for (std::size_t c = 0; c < d; ++c) context[i][c] += X[j][c];
        double inv = 1.0 / double(hop.size() + 1);
        for (std::size_t c = 0; c < d; ++c) context[i][c] *= inv;
    }

    // attention over ordered pairs (i, j in N_i), from raw embeddings
    std::vector<std::vector<S>> alpha(n);
    for (std::size_t i = 0; i < n; ++i) {
        alpha[i].reserve(g.neighbors[i].size());
        for (std::size_t j : g.neighbors[i]) {
            std::vector<S> feat;
            feat.reserve(3 * d);
            for (std::size_t c = 0; c < d; ++c) feat.push_back(mul_const(w.Wc[c], X[i][c]));
            for (std::size_t c = 0; c < d; ++c) feat.push_back(mul_const(w.Wc[c], context[i][c]));
            for (std::size_t c = 0; c < d; ++c) feat.push_back(mul_const(w.Wc[c], X[j][c]));
            std::vector<S> hidden;
            hidden.reserve(d);
            for (std::size_t r = 0; r < d; ++r) {
                S acc = dot(w.attn_w1.subspan(r * 3 * d, 3 * d), std::span<const S>(feat));
                hidden.push_back(vtanh(acc + w.attn_b1[r]));
            }
            S out = dot(w.attn_w2, std::span<const S>(hidden)) + w.attn_b2[0];
            alpha[i].push_back(sigmoid(out));
        }
    }

    // layer 0: W ⊙ x
    std::vector<std::vector<S>> cur(n);
    for (std::size_t i = 0; i < n; ++i) {
        cur[i].reserve(d);
        for (std::size_t c = 0; c < d; ++c) cur[i].push_back(mul_const(w.W[c], X[i][c]));
    }

    std::vector<std::vector<S>> next(n);
    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            if (g.neighbors[i].empty()) {
                next[i] = cur[i];  // single-node graph: nothing to gather
                continue;
            }
            // mean_j alpha_ij * cur_j
            std::vector<S> agg;
            agg.reserve(d);
            double inv = 1.0 / double(g.neighbors[i].size());
            for (std::size_t c = 0; c < d; ++c) {
                std::vector<S> terms;
                terms.reserve(g.neighbors[i].size());
                for (std::size_t kk = 0; kk < g.neighbors[i].size(); ++kk)
                    terms.push_back(alpha[i][kk] * cur[g.neighbors[i][kk]][c]);
                agg.push_back(mul_const(vsum(std::span<const S>(terms)), inv));
            }
            std::vector<S> out;
            out.reserve(d);
            for (std::size_t r = 0; r < d; ++r)
                out.push_back(sigmoid(dot(w.Wa.subspan(r * d, d), std::span<const S>(agg))));
            next[i] = std::move(out);
        }
        std::swap(cur, next);
    }

    // residual with the raw embedding
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) cur[i][c] = add_const(cur[i][c], X[i][c]);
    return cur;
}

template <class S>
struct Annotated {
    NoiseAnnotation ann;
    std::vector<std::vector<S>> xprime;  // per step; unwanted steps carry the raw embedding
    std::size_t graph_edges = 0;         // pre-removal edge count (diagnostics)
};

// Role assembly shared by the plain and tape paths: graph + unwanted test +
// GCN + global k-means; earliest step of each cluster is the core.
template <class S>
Annotated<S> annotate_sequence(const LearnerSequence& seq, const std::vector<Vec>& embeddings,
                               const SolutionBank& bank, const CodaWeights<S>& w,
                               const DenoiseConfig& cfg) {
    const std::size_t n = seq.records.size();
    const std::size_t d = w.W.size();
    Vec weight(d);
    for (std::size_t c = 0; c < d; ++c) weight[c] = value_of(w.W[c]);

    SymMatrix m = metric_matrix(embeddings, weight);
    CodeGraph g = build_adjacency(m, edge_budget(n, cfg.p));
    UnwantedResult uw =
        identify_unwanted(g, m, seq, embeddings, bank, weight, cfg.disable_unwanted);

    Annotated<S> out;
    out.graph_edges = g.edge_count();
    out.ann.steps.assign(n, {});
    out.xprime.resize(n);

    std::vector<Vec> survivor_x;
    survivor_x.reserve(uw.survivors.size());
    for (std::size_t idx : uw.survivors) survivor_x.push_back(embeddings[idx]);

    std::vector<std::vector<S>> gcn_out;
    if (!uw.survivors.empty())
        gcn_out = cluster_gcn(uw.graph, survivor_x, w, cfg.gcn_layers, cfg.khop);

    for (std::size_t idx : uw.unwanted) {
        out.ann.steps[idx].role = Role::Unwanted;
        // removed before the GCN: prompts use the raw embedding
        std::vector<S> raw;
        raw.reserve(d);
        for (std::size_t c = 0; c < d; ++c)
            raw.push_back(add_const(mul_const(w.W[c], 0.0), embeddings[idx][c]));
        out.xprime[idx] = std::move(raw);
    }

    if (!uw.survivors.empty()) {
        std::vector<Vec> values(uw.survivors.size(), Vec(d, 0.0));
        for (std::size_t i = 0; i < uw.survivors.size(); ++i)
            for (std::size_t c = 0; c < d; ++c) values[i][c] = value_of(gcn_out[i][c]);
        KMeansResult km = kmeans(values, cfg.clusters, cfg.seed);

        std::size_t cluster_count = km.centroids.size();
        std::vector<std::size_t> core_of(cluster_count, SIZE_MAX);
        for (std::size_t i = 0; i < uw.survivors.size(); ++i) {
            std::size_t cl = km.assignment[i];
            if (core_of[cl] == SIZE_MAX || uw.survivors[i] < core_of[cl]) core_of[cl] = uw.survivors[i];
        }
        for (std::size_t i = 0; i < uw.survivors.size(); ++i) {
            std::size_t idx = uw.survivors[i];
            std::size_t cl = km.assignment[i];
            auto& st = out.ann.steps[idx];
            st.cluster = int(cl);
            if (core_of[cl] == idx) {
                st.role = Role::Core;
            } else {
                st.role = Role::Weak;
                st.core_step = int(core_of[cl]) + 1;
            }
            out.xprime[idx] = std::move(gcn_out[i]);
        }
    }
    return out;
}

}  // namespace coda
