#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "coda/error.hpp"
#include "coda/params.hpp"
#include "coda/scal.hpp"

namespace coda {

inline double cosine(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine dimension mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    // zero vectors are treated as unrelated to everything
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline Vec softmax(std::span<const double> v) {
    double m = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        s += out[i];
    }
    for (double& x : out) x /= s;
    return out;
}

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    require(p.size() == q.size(), "kl dimension mismatch");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sp += p[i];
        sq += q[i];
    }
    require(std::fabs(sp - 1.0) <= 1e-6 && std::fabs(sq - 1.0) <= 1e-6,
            "kl inputs must be normalized");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
    }
    return std::max(kl, 0.0);
}

// KL(softmax(x) || softmax(y)), differentiable in both arguments. The max
// shifts are treated as constants, which is exact by shift invariance.
template <class S>
S kl_between_softmax(std::span<const S> x, std::span<const S> y) {
    const std::size_t n = x.size();
    double mx = value_of(x[0]), my = value_of(y[0]);
    for (std::size_t i = 1; i < n; ++i) {
        mx = std::max(mx, value_of(x[i]));
        my = std::max(my, value_of(y[i]));
    }
    std::vector<S> ex, ey;
    ex.reserve(n);
    ey.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ex.push_back(vexp(add_const(x[i], -mx)));
        ey.push_back(vexp(add_const(y[i], -my)));
    }
    S sx = vsum(std::span<const S>(ex));
    S sy = vsum(std::span<const S>(ey));
    S log_sx = vlog(sx);
    S log_sy = vlog(sy);
    // sum_i p_i * ((x_i - mx - log sx) - (y_i - my - log sy))
    S acc = mul_const(sx, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        S p = ex[i] / sx;
        S lp = add_const(x[i], -mx) - log_sx;
        S lq = add_const(y[i], -my) - log_sy;
        acc = acc + p * (lp - lq);
    }
    return acc;
}

inline double bce(double target, double prob) {
    return -(target * std::log(prob) + (1.0 - target) * std::log(1.0 - prob));
}
inline Var bce(double target, Var prob) {
    Tape* t = prob.tape;
    Var l1 = t->mul_const(t->log(prob), target);
    Var l0 = t->mul_const(t->log(t->rsub_const(1.0, prob)), 1.0 - target);
    return t->neg(t->add(l1, l0));
}

// A differentiable scalar objective over a ParamStore: `value` evaluates the
// loss; `value_and_grad` also accumulates analytic gradients of every
// unfrozen slot into the GradStore.
struct DiffLoss {
    std::function<double(const ParamStore&)> value;
    std::function<double(const ParamStore&, GradStore&)> value_and_grad;
};

// Central finite differences vs. analytic gradients over all unfrozen slots.
// Returns the worst relative error among coordinates whose disagreement
// exceeds the finite-difference roundoff floor (cancellation noise scales
// with |loss| / eps, so tiny-gradient coordinates would otherwise dominate
// with spurious errors).
inline double grad_check(const DiffLoss& loss, ParamStore& params, double eps = 1e-5) {
    require(eps >= 1e-7 && eps <= 1e-4, "grad_check eps out of range");
    GradStore grads(params);
    double base = loss.value_and_grad(params, grads);
    require(std::isfinite(base), "grad_check: non-finite loss");
    const double noise_floor = 50.0 * 2.3e-16 * std::max(1.0, std::fabs(base)) / eps;
    double worst = 0.0;
    for (std::size_t s = 0; s < params.size(); ++s) {
        auto& slot = params.at(s);
        if (slot.frozen) continue;
        for (std::size_t k = 0; k < slot.data.size(); ++k) {
            double orig = slot.data[k];
            slot.data[k] = orig + eps;
            double fp = loss.value(params);
            slot.data[k] = orig - eps;
            double fm = loss.value(params);
            slot.data[k] = orig;
            require(std::isfinite(fp) && std::isfinite(fm), "grad_check: non-finite loss");
            double numeric = (fp - fm) / (2.0 * eps);
            double analytic = grads.at(s)[k];
            double diff = std::fabs(numeric - analytic);
            if (diff <= noise_floor) continue;
            double denom = std::max(std::fabs(numeric), std::fabs(analytic));
            worst = std::max(worst, diff / denom);
        }
    }
    return worst;
}

}  // namespace coda
