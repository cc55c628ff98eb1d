#pragma once

#include <vector>

namespace coda {

struct Metrics {
    double auc = 0.0;
    double f1 = 0.0;
    double rmse = 0.0;
};

// Pooled binary-prediction metrics: rank-statistic AUC (ties get average
// rank), F1 at threshold 0.5, RMSE between probability and label.
// Throws if labels are all-one or all-zero (AUC undefined).
Metrics compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace coda
