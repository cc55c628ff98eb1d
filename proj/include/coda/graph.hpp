#pragma once

#include <cstddef>
#include <vector>

#include "coda/params.hpp"

namespace coda {

// Symmetric dense matrix stored row-major.
struct SymMatrix {
    std::size_t n = 0;
    Vec data;
    double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return data[i * n + j]; }
};

// Per-learner code graph: binary symmetric adjacency with zero diagonal,
// plus isolated-node and component bookkeeping.
struct CodeGraph {
    std::size_t n = 0;
    std::vector<std::vector<std::size_t>> neighbors;  // sorted adjacency lists
    std::vector<std::size_t> component;               // component id per node
    std::size_t component_count = 0;

    bool has_edge(std::size_t i, std::size_t j) const {
        for (std::size_t k : neighbors[i])
            if (k == j) return true;
        return false;
    }
    std::size_t degree(std::size_t i) const { return neighbors[i].size(); }
    bool isolated(std::size_t i) const { return neighbors[i].empty(); }
    std::vector<std::size_t> isolated_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n; ++i)
            if (isolated(i)) out.push_back(i);
        return out;
    }
    std::size_t edge_count() const {
        std::size_t deg = 0;
        for (const auto& nb : neighbors) deg += nb.size();
        return deg / 2;
    }
    void add_edge(std::size_t i, std::size_t j);
    void recompute_components();
};

// M[i][j] = cosine(W ⊙ x_i, W ⊙ x_j)
SymMatrix metric_matrix(const std::vector<Vec>& embeddings, const Vec& weight);

// Threshold at the eps-th largest strictly-upper-triangle entry; ties at the
// threshold are all kept. eps beyond the number of entries keeps everything.
CodeGraph build_adjacency(const SymMatrix& m, std::size_t eps);

std::vector<std::vector<std::size_t>> connected_components(const CodeGraph& g);

// Nodes within graph distance <= k of node i, excluding i.
std::vector<std::size_t> k_hop_neighborhood(const CodeGraph& g, std::size_t i, std::size_t k);

// eps = ceil(p * T^2), clamped to the strictly-upper-triangle size.
std::size_t edge_budget(std::size_t n, double p);

}  // namespace coda
