#include <cmath>

#include "coda/numerics.hpp"
#include "coda/rng.hpp"
#include "doctest.h"

using namespace coda;

TEST_CASE("cosine basics") {
    CHECK(cosine(Vec{1, 0}, Vec{1, 0}) == doctest::Approx(1.0));
    CHECK(cosine(Vec{1, 0}, Vec{0, 1}) == doctest::Approx(0.0));
    CHECK(cosine(Vec{1, 2}, Vec{1, 0}) == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(cosine(Vec{0, 0}, Vec{1, 0}) == 0.0);  // zero vector is unrelated to everything
    // symmetry
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        Vec a(5), b(5);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        CHECK(cosine(a, b) == doctest::Approx(cosine(b, a)));
        CHECK(cosine(a, b) <= 1.0 + 1e-12);
        CHECK(cosine(a, b) >= -1.0 - 1e-12);
    }
}

TEST_CASE("softmax basics") {
    Vec s = softmax(Vec{0, 0});
    CHECK(s[0] == doctest::Approx(0.5));
    Vec t = softmax(Vec{std::log(2.0), 0.0});
    CHECK(t[0] == doctest::Approx(2.0 / 3.0));
    CHECK(t[1] == doctest::Approx(1.0 / 3.0));
    Vec u = softmax(Vec{5, 5, 5});
    for (double x : u) CHECK(x == doctest::Approx(1.0 / 3.0));

    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
        Vec v(7);
        for (auto& x : v) x = rng.normal(0, 3);
        Vec p = softmax(v);
        double sum = 0.0;
        for (double x : p) {
            CHECK(x > 0.0);
            sum += x;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
        // shift invariance
        Vec w = v;
        for (auto& x : w) x += 17.25;
        Vec q = softmax(w);
        for (std::size_t k = 0; k < v.size(); ++k) CHECK(p[k] == doctest::Approx(q[k]));
    }
}

TEST_CASE("kl divergence") {
    CHECK(kl_divergence(Vec{0.5, 0.5}, Vec{0.5, 0.5}) == doctest::Approx(0.0));
    CHECK(kl_divergence(Vec{0.5, 0.5}, Vec{0.9, 0.1}) ==
          doctest::Approx(0.5 * std::log(25.0 / 9.0)));
    CHECK(kl_divergence(Vec{1.0, 0.0}, Vec{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(kl_divergence(Vec{0.7, 0.7}, Vec{0.5, 0.5}), ContractViolation);

    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
        Vec a(4), b(4);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        Vec p = softmax(a), q = softmax(b);
        CHECK(kl_divergence(p, q) >= 0.0);
    }
}

TEST_CASE("kl between softmax matches public composition") {
    Vec x{0.3, -1.2, 0.7}, y{1.1, 0.2, -0.4};
    double direct = kl_between_softmax<double>(x, y);
    double composed = kl_divergence(softmax(x), softmax(y));
    CHECK(direct == doctest::Approx(composed).epsilon(1e-12));
}

TEST_CASE("tape ops match finite differences") {
    Rng rng(21);
    for (int rep = 0; rep < 10; ++rep) {
        double a0 = rng.uniform(0.2, 2.0), b0 = rng.uniform(0.2, 2.0);
        auto f = [](double a, double b) {
            double s = 1.0 / (1.0 + std::exp(-(a * b + a / b)));
            return std::log(a + 2.0) * s + std::tanh(b) - std::fabs(a - b) + std::exp(-a);
        };
        Tape tape;
        Var a = tape.leaf(a0), b = tape.leaf(b0);
        Var s = tape.sigmoid(tape.add(tape.mul(a, b), tape.div(a, b)));
        Var out = tape.add(
            tape.sub(tape.add(tape.mul(tape.log(tape.add_const(a, 2.0)), s), tape.tanh(b)),
                     tape.abs(tape.sub(a, b))),
            tape.exp(tape.neg(a)));
        CHECK(tape.value(out) == doctest::Approx(f(a0, b0)));
        tape.backward(out);
        double eps = 1e-6;
        double da = (f(a0 + eps, b0) - f(a0 - eps, b0)) / (2 * eps);
        double db = (f(a0, b0 + eps) - f(a0, b0 - eps)) / (2 * eps);
        CHECK(tape.adjoint(a) == doctest::Approx(da).epsilon(1e-5));
        CHECK(tape.adjoint(b) == doctest::Approx(db).epsilon(1e-5));
    }
}

TEST_CASE("tape dot and sum ops") {
    Tape tape;
    std::vector<Var> xs, ys;
    Vec xv{0.5, -1.0, 2.0}, yv{1.5, 0.25, -0.75}, cv{2.0, -1.0, 0.5};
    for (double v : xv) xs.push_back(tape.leaf(v));
    for (double v : yv) ys.push_back(tape.leaf(v));
    Var d = tape.dot(xs, ys);
    Var dc = tape.dot_const(xs, cv);
    Var s = tape.sum(ys);
    Var out = tape.add(tape.mul(d, s), dc);
    tape.backward(out);
    // d(out)/dx_i = y_i * s + c_i ; d(out)/dy_i = x_i * s + d
    double sv = 1.5 + 0.25 - 0.75;
    double dv = 0.5 * 1.5 - 0.25 - 1.5;
    for (int i = 0; i < 3; ++i) {
        CHECK(tape.adjoint(xs[i]) == doctest::Approx(yv[i] * sv + cv[i]));
        CHECK(tape.adjoint(ys[i]) == doctest::Approx(xv[i] * sv + dv));
    }
}

// Hessian-vector products via backward_emit: f(x) = (a.x)^2 * sigmoid(x_0),
// checked against central differences of the gradient.
TEST_CASE("double backward produces Hessian-vector products") {
    Rng rng(31);
    const std::size_t n = 5;
    Vec a(n), x0(n), w(n);
    for (auto& v : a) v = rng.normal();
    for (auto& v : x0) v = rng.normal();
    for (auto& v : w) v = rng.normal();

    auto grad_at = [&](const Vec& x) {
        Tape tape;
        std::vector<Var> xs;
        for (double v : x) xs.push_back(tape.leaf(v));
        Var d = tape.dot_const(xs, a);
        Var f = tape.mul(tape.mul(d, d), tape.sigmoid(xs[0]));
        tape.backward(f);
        Vec g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = tape.adjoint(xs[i]);
        return g;
    };

    // analytic-by-tape HVP
    Tape tape;
    std::vector<Var> xs;
    for (double v : x0) xs.push_back(tape.leaf(v));
    Var d = tape.dot_const(xs, a);
    Var f = tape.mul(tape.mul(d, d), tape.sigmoid(xs[0]));
    auto grad_ids = tape.backward_emit(f);
    std::vector<Var> gvars;
    std::vector<double> gcoef;
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(grad_ids[xs[i].id] != Tape::kNone);
        gvars.push_back(Var{&tape, grad_ids[xs[i].id]});
        gcoef.push_back(w[i]);
    }
    Var phi = tape.dot_const(gvars, gcoef);
    tape.backward(phi);
    Vec hv(n);
    for (std::size_t i = 0; i < n; ++i) hv[i] = tape.adjoint(xs[i]);

    // reference: central difference of the gradient along w
    double eps = 1e-5;
    Vec xp = x0, xm = x0;
    for (std::size_t i = 0; i < n; ++i) {
        xp[i] += eps * w[i];
        xm[i] -= eps * w[i];
    }
    Vec gp = grad_at(xp), gm = grad_at(xm);
    for (std::size_t i = 0; i < n; ++i) {
        double fd = (gp[i] - gm[i]) / (2 * eps);
        CHECK(hv[i] == doctest::Approx(fd).epsilon(1e-5));
    }

    // emitted gradient vars equal the plain backward gradient
    Vec g0 = grad_at(x0);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(tape.value(grad_ids[xs[i].id]) == doctest::Approx(g0[i]).epsilon(1e-12));
}

TEST_CASE("grad_check on quadratic loss") {
    ParamStore params;
    params.add("theta", {6});
    Rng rng(41);
    for (double& x : params.data("theta")) x = rng.normal();

    DiffLoss loss;
    loss.value = [](const ParamStore& p) {
        double s = 0.0;
        for (double x : p.data("theta")) s += x * x;
        return 0.5 * s;
    };
    loss.value_and_grad = [&](const ParamStore& p, GradStore& g) {
        const Vec& th = p.data("theta");
        for (std::size_t i = 0; i < th.size(); ++i) g.at(0)[i] += th[i];
        double s = 0.0;
        for (double x : th) s += x * x;
        return 0.5 * s;
    };
    CHECK(grad_check(loss, params, 1e-5) < 1e-8);
    CHECK_THROWS(grad_check(loss, params, 1e-2));  // eps out of contract range
}

TEST_CASE("grad_check skips frozen slots") {
    ParamStore params;
    params.add("free", {2});
    params.add("ice", {2}, /*frozen=*/true);
    params.data("free") = {1.0, -2.0};
    params.data("ice") = {3.0, 4.0};

    DiffLoss loss;
    auto value = [](const ParamStore& p) {
        double s = 0.0;
        for (double x : p.data("free")) s += x * x;
        for (double x : p.data("ice")) s += 10.0 * x * x;  // frozen part influences the value
        return s;
    };
    loss.value = value;
    loss.value_and_grad = [&](const ParamStore& p, GradStore& g) {
        const Vec& f = p.data("free");
        for (std::size_t i = 0; i < f.size(); ++i) g.at(0)[i] += 2.0 * f[i];
        // no gradient reported for the frozen slot
        return value(p);
    };
    CHECK(grad_check(loss, params, 1e-5) < 1e-9);
}
