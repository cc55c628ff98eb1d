#include "coda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coda/error.hpp"

namespace coda {

Metrics compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels) {
    require(scores.size() == labels.size(), "metrics: size mismatch");
    require(!scores.empty(), "metrics: empty input");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (int l : labels) pos += std::size_t(l);
    std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw CodaError("metrics: AUC undefined for single-class labels");

    // AUC from average ranks of positive scores
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = 0.5 * double(i + j) + 1.0;  // ranks are 1-based
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k] == 1) rank_sum_pos += rank[k];
    double auc = (rank_sum_pos - 0.5 * double(pos) * double(pos + 1)) / (double(pos) * double(neg));

    // F1 at threshold 0.5
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < n; ++k) {
        bool pred = scores[k] >= 0.5;
        if (pred && labels[k] == 1) ++tp;
        if (pred && labels[k] == 0) ++fp;
        if (!pred && labels[k] == 1) ++fn;
    }
    double f1 = (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * double(tp) / double(2 * tp + fp + fn);

    double se = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double d = scores[k] - double(labels[k]);
        se += d * d;
    }
    Metrics m;
    m.auc = auc;
    m.f1 = f1;
    m.rmse = std::sqrt(se / double(n));
    return m;
}

}  // namespace coda
