#include "coda/graph.hpp"

#include <algorithm>
#include <cmath>

#include "coda/error.hpp"
#include "coda/numerics.hpp"

namespace coda {

void CodeGraph::add_edge(std::size_t i, std::size_t j) {
    require(i != j && i < n && j < n, "add_edge: bad nodes");
    if (has_edge(i, j)) return;
    neighbors[i].insert(std::lower_bound(neighbors[i].begin(), neighbors[i].end(), j), j);
    neighbors[j].insert(std::lower_bound(neighbors[j].begin(), neighbors[j].end(), i), i);
}

void CodeGraph::recompute_components() {
    component.assign(n, SIZE_MAX);
    component_count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (component[s] != SIZE_MAX) continue;
        std::size_t id = component_count++;
        stack.push_back(s);
        component[s] = id;
        while (!stack.empty()) {
            std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v : neighbors[u]) {
                if (component[v] == SIZE_MAX) {
                    component[v] = id;
                    stack.push_back(v);
                }
            }
        }
    }
}

SymMatrix metric_matrix(const std::vector<Vec>& embeddings, const Vec& weight) {
    const std::size_t n = embeddings.size();
    SymMatrix m;
    m.n = n;
    m.data.assign(n * n, 0.0);
    std::vector<Vec> weighted(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(embeddings[i].size() == weight.size(), "metric_matrix dimension mismatch");
        weighted[i].resize(weight.size());
        for (std::size_t k = 0; k < weight.size(); ++k) weighted[i][k] = weight[k] * embeddings[i][k];
    }
    for (std::size_t i = 0; i < n; ++i) {
        m.at(i, i) = cosine(weighted[i], weighted[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            double c = cosine(weighted[i], weighted[j]);
            m.at(i, j) = c;
            m.at(j, i) = c;
        }
    }
    return m;
}

CodeGraph build_adjacency(const SymMatrix& m, std::size_t eps) {
    require(eps >= 1, "build_adjacency: eps must be >= 1");
    CodeGraph g;
    g.n = m.n;
    g.neighbors.assign(m.n, {});
    if (m.n < 2) {
        g.recompute_components();
        return g;
    }
    Vec upper;
    upper.reserve(m.n * (m.n - 1) / 2);
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = i + 1; j < m.n; ++j) upper.push_back(m.at(i, j));
    std::size_t k = std::min(eps, upper.size());
    std::nth_element(upper.begin(), upper.begin() + (k - 1), upper.end(), std::greater<double>());
    double tau = upper[k - 1];
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = i + 1; j < m.n; ++j)
            if (m.at(i, j) >= tau) g.add_edge(i, j);
    g.recompute_components();
    return g;
}

std::vector<std::vector<std::size_t>> connected_components(const CodeGraph& g) {
    std::vector<std::vector<std::size_t>> out(g.component_count);
    for (std::size_t i = 0; i < g.n; ++i) out[g.component[i]].push_back(i);
    return out;
}

std::vector<std::size_t> k_hop_neighborhood(const CodeGraph& g, std::size_t i, std::size_t k) {
    require(k >= 1, "k_hop_neighborhood: k must be >= 1");
    std::vector<std::size_t> dist(g.n, SIZE_MAX);
    std::vector<std::size_t> frontier = {i}, next;
    dist[i] = 0;
    for (std::size_t hop = 1; hop <= k && !frontier.empty(); ++hop) {
        next.clear();
        for (std::size_t u : frontier) {
            for (std::size_t v : g.neighbors[u]) {
                if (dist[v] == SIZE_MAX) {
                    dist[v] = hop;
                    next.push_back(v);
                }
            }
        }
        std::swap(frontier, next);
    }
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < g.n; ++v)
        if (v != i && dist[v] != SIZE_MAX) out.push_back(v);
    return out;
}

std::size_t edge_budget(std::size_t n, double p) {
    if (n < 2) return 1;
    std::size_t upper = n * (n - 1) / 2;
    auto eps = std::size_t(std::ceil(p * double(n) * double(n)));
    return std::max<std::size_t>(1, std::min(eps, upper));
}

}  // namespace coda
