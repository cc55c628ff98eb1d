#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "coda/tape.hpp"

namespace coda {

// Dual-mode scalar helpers: the same templated forward code runs on plain
// doubles (evaluation, finite differences) and on tape Vars (training).
// Both paths perform arithmetic in identical order, so values agree bitwise.

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline Var sigmoid(Var x) { return x.tape->sigmoid(x); }

inline double vlog(double x) { return std::log(x); }
inline Var vlog(Var x) { return x.tape->log(x); }

inline double vexp(double x) { return std::exp(x); }
inline Var vexp(Var x) { return x.tape->exp(x); }

inline double vtanh(double x) { return std::tanh(x); }
inline Var vtanh(Var x) { return x.tape->tanh(x); }

inline double vabs(double x) { return std::fabs(x); }
inline Var vabs(Var x) { return x.tape->abs(x); }

inline double add_const(double x, double c) { return x + c; }
inline Var add_const(Var x, double c) { return x.tape->add_const(x, c); }

inline double mul_const(double x, double c) { return x * c; }
inline Var mul_const(Var x, double c) { return x.tape->mul_const(x, c); }

inline double rsub_const(double c, double x) { return c - x; }
inline Var rsub_const(double c, Var x) { return x.tape->rsub_const(c, x); }

inline double dot(std::span<const double> x, std::span<const double> y) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) v += x[i] * y[i];
    return v;
}
inline Var dot(std::span<const Var> x, std::span<const Var> y) { return x[0].tape->dot(x, y); }

inline double dot_const(std::span<const double> x, std::span<const double> c) { return dot(x, c); }
inline Var dot_const(std::span<const Var> x, std::span<const double> c) {
    return x[0].tape->dot_const(x, c);
}

inline double vsum(std::span<const double> x) {
    double v = 0.0;
    for (double e : x) v += e;
    return v;
}
inline Var vsum(std::span<const Var> x) { return x[0].tape->sum(x); }

inline double value_of(double x) { return x; }
inline double value_of(Var x) { return x.tape->value(x); }

}  // namespace coda
