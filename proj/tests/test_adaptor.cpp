#include <cmath>

#include "coda/adaptor.hpp"
#include "coda/bind.hpp"
#include "coda/rng.hpp"
#include "doctest.h"

using namespace coda;

TEST_CASE("prompt layout per role") {
    Vec xprime{1.0, 1.0};
    Vec wp{1.0, 1.0};
    auto check = [&](Role role, Vec expect) {
        auto p = build_prompt<double>(role, xprime, std::span<const double>(wp));
        REQUIRE(p.size() == 4);
        for (int i = 0; i < 4; ++i) CHECK(p[std::size_t(i)] == expect[std::size_t(i)]);
    };
    check(Role::Core, {1, 1, 0, 0});
    check(Role::Weak, {0, 0, 1, 1});
    check(Role::Unwanted, {1, 1, 1, 1});

    // weighting applies elementwise
    Vec wp2{0.5, -2.0};
    auto p = build_prompt<double>(Role::Core, xprime, std::span<const double>(wp2));
    CHECK(p[0] == 0.5);
    CHECK(p[1] == -2.0);
}

TEST_CASE("correct_state zero and hand cases") {
    Vec h{0.0, 0.0};
    Vec wa{1.0, 0.0, 0.0, 0.0};  // b=1, prompt dim 4
    Vec wb{1.0, 1.0};            // b=1, d_h=2
    Vec wc{0.0, 0.0};
    Vec p{2.0, 0.3, -0.7, 1.1};
    auto out = correct_state<double, double>(std::span<const double>(h), p, wa, wb, wc, 1, 2);
    CHECK(out[0] == doctest::Approx(2.0));
    CHECK(out[1] == doctest::Approx(2.0));

    Vec h2{0.25, -1.5};
    Vec wa0(4, 0.0);
    auto same = correct_state<double, double>(std::span<const double>(h2), p, wa0, wb, wc, 1, 2);
    CHECK(same[0] == 0.25);  // zero map leaves the state bit-identical
    CHECK(same[1] == -1.5);

    Vec p0(4, 0.0);
    auto same2 = correct_state<double, double>(std::span<const double>(h2), p0, wa, wb, wc, 1, 2);
    CHECK(same2[0] == 0.25);
    CHECK(same2[1] == -1.5);

    // the state gate scales the correction channel
    Vec wc2{0.5, 1.0};
    Vec h3{1.0, 0.5};
    auto gated = correct_state<double, double>(std::span<const double>(h3), p, wa, wb, wc2, 1, 2);
    // z = 2, gate = 1 + 0.5*1 + 1*0.5 = 2 -> correction (4, 4)
    CHECK(gated[0] == doctest::Approx(5.0));
    CHECK(gated[1] == doctest::Approx(4.5));
}

TEST_CASE("correction is linear in the prompt") {
    Rng rng(6);
    const std::size_t d2 = 8, dh = 5, b = 3;
    Vec wa(b * d2), wb(b * dh), wc(b * dh), h(dh), p1(d2), p2(d2), psum(d2);
    for (auto& x : wa) x = rng.normal();
    for (auto& x : wb) x = rng.normal();
    for (auto& x : wc) x = rng.normal();
    for (auto& x : h) x = rng.normal();
    for (std::size_t i = 0; i < d2; ++i) {
        p1[i] = rng.normal();
        p2[i] = rng.normal();
        psum[i] = p1[i] + p2[i];
    }
    auto c1 = correct_state<double, double>(std::span<const double>(h), p1, wa, wb, wc, b, dh);
    auto c2 = correct_state<double, double>(std::span<const double>(h), p2, wa, wb, wc, b, dh);
    auto cs = correct_state<double, double>(std::span<const double>(h), psum, wa, wb, wc, b, dh);
    for (std::size_t j = 0; j < dh; ++j)
        CHECK(cs[j] - h[j] == doctest::Approx((c1[j] - h[j]) + (c2[j] - h[j])));
}

TEST_CASE("adaptor loss values and omission rules") {
    Vec a{0.7, -0.3, 1.1};
    CHECK(adaptor_loss<double>(a, a) == doctest::Approx(0.0));

    // softmax(0,0) = (.5,.5) vs softmax(ln 9, 0) = (.9,.1)
    Vec t{0.0, 0.0}, r{std::log(9.0), 0.0};
    CHECK(adaptor_loss<double>(t, r) == doctest::Approx(0.5 * std::log(25.0 / 9.0)));

    NoiseAnnotation ann;
    ann.steps.resize(4);
    ann.steps[0].role = Role::Unwanted;
    ann.steps[1].role = Role::Core;
    ann.steps[1].cluster = 0;
    ann.steps[2].role = Role::Unwanted;
    ann.steps[3].role = Role::Weak;
    ann.steps[3].cluster = 0;
    ann.steps[3].core_step = 2;
    CHECK(adaptor_reference_step(ann, 0) == -1);  // no prior related attempt: omitted
    CHECK(adaptor_reference_step(ann, 1) == -1);  // core steps contribute nothing
    CHECK(adaptor_reference_step(ann, 2) == 1);   // most recent related attempt
    CHECK(adaptor_reference_step(ann, 3) == 1);   // the cluster core
}

TEST_CASE("adaptor loss is non-negative on random states") {
    Rng rng(8);
    for (int rep = 0; rep < 100; ++rep) {
        Vec a(6), b(6);
        for (auto& x : a) x = rng.normal(0, 2);
        for (auto& x : b) x = rng.normal(0, 2);
        CHECK(adaptor_loss<double>(a, b) >= 0.0);
    }
}

TEST_CASE("correct_state jacobian passes the gradient check") {
    const std::size_t d2 = 6, dh = 4, b = 2;
    ParamStore params;
    params.add("coda.WA", {b, d2});
    params.add("coda.WB", {b, dh});
    params.add("coda.WC", {b, dh});
    Rng rng(44);
    for (double& x : params.data("coda.WA")) x = rng.normal();
    for (double& x : params.data("coda.WB")) x = rng.normal();
    for (double& x : params.data("coda.WC")) x = rng.normal(0.0, 0.3);

    Vec h(dh), p(d2), probe(dh);
    for (auto& x : h) x = rng.normal();
    for (auto& x : p) x = rng.normal();
    for (auto& x : probe) x = rng.normal();

    // scalar functional: probe . softmax-free corrected state
    DiffLoss loss;
    loss.value = [&](const ParamStore& ps) {
        auto out = correct_state<double, double>(std::span<const double>(h), p, ps.data("coda.WA"), ps.data("coda.WB"),
                                         ps.data("coda.WC"), b, dh);
        double s = 0.0;
        for (std::size_t j = 0; j < dh; ++j) s += probe[j] * out[j];
        return s;
    };
    loss.value_and_grad = [&](const ParamStore& ps, GradStore& g) {
        Tape tape;
        TapeBinder binder(tape, const_cast<ParamStore&>(ps));
        const auto& wa = binder.bind("coda.WA");
        const auto& wb = binder.bind("coda.WB");
        const auto& wcb = binder.bind("coda.WC");
        std::vector<Var> pv;
        for (double x : p) pv.push_back(tape.leaf(x));
        auto out = correct_state<Var, double>(std::span<const double>(h), pv, std::span<const Var>(wa.data(), wa.size()),
                                      std::span<const Var>(wb.data(), wb.size()),
                                      std::span<const Var>(wcb.data(), wcb.size()), b, dh);
        Var s = tape.dot_const(out, probe);
        tape.backward(s);
        binder.accumulate(g);
        return tape.value(s);
    };
    CHECK(grad_check(loss, params, 1e-5) < 1e-6);
}

TEST_CASE("kl adaptor loss gradient flows through both states") {
    const std::size_t dh = 5;
    ParamStore params;
    params.add("a", {dh});
    params.add("b", {dh});
    Rng rng(45);
    for (double& x : params.data("a")) x = rng.normal();
    for (double& x : params.data("b")) x = rng.normal();

    DiffLoss loss;
    loss.value = [&](const ParamStore& ps) {
        return adaptor_loss<double>(ps.data("a"), ps.data("b"));
    };
    loss.value_and_grad = [&](const ParamStore& ps, GradStore& g) {
        Tape tape;
        TapeBinder binder(tape, const_cast<ParamStore&>(ps));
        const auto& av = binder.bind("a");
        const auto& bv = binder.bind("b");
        Var l = adaptor_loss<Var>(std::span<const Var>(av.data(), av.size()),
                                  std::span<const Var>(bv.data(), bv.size()));
        tape.backward(l);
        binder.accumulate(g);
        return tape.value(l);
    };
    CHECK(grad_check(loss, params, 1e-5) < 1e-7);
}
