#pragma once

#include <span>
#include <vector>

#include "coda/denoise.hpp"
#include "coda/numerics.hpp"

namespace coda {

// Role prompt in R^{2d}: Core -> [Wp⊙x' || 0], Weak -> [0 || Wp⊙x'],
// Unwanted -> [Wp⊙x' || Wp⊙x'].
template <class S>
std::vector<S> build_prompt(Role role, const std::vector<S>& xprime, std::span<const S> wp) {
    const std::size_t d = wp.size();
    std::vector<S> p;
    p.reserve(2 * d);
    auto weighted = [&](std::size_t c) { return wp[c] * xprime[c]; };
    auto zero = [&](std::size_t c) { return mul_const(wp[c], 0.0); };
    switch (role) {
        case Role::Core:
            for (std::size_t c = 0; c < d; ++c) p.push_back(weighted(c));
            for (std::size_t c = 0; c < d; ++c) p.push_back(zero(c));
            break;
        case Role::Weak:
            for (std::size_t c = 0; c < d; ++c) p.push_back(zero(c));
            for (std::size_t c = 0; c < d; ++c) p.push_back(weighted(c));
            break;
        case Role::Unwanted:
            for (std::size_t c = 0; c < d; ++c) p.push_back(weighted(c));
            for (std::size_t c = 0; c < d; ++c) p.push_back(weighted(c));
            break;
    }
    return p;
}

inline double state_dot(std::span<const double> w, std::span<const double> h) { return dot(w, h); }
inline Var state_dot(std::span<const Var> w, std::span<const double> h) { return dot_const(w, h); }
inline Var state_dot(std::span<const Var> w, std::span<const Var> h) { return dot(w, h); }
inline double state_add(double corr, double h) { return corr + h; }
inline Var state_add(Var corr, double h) { return add_const(corr, h); }
inline Var state_add(Var corr, Var h) { return corr + h; }

// h' = h + WB^T ((WA p) ⊙ (1 + WC h)): a rank-b map from prompt space into
// state space, gated by the state it corrects so the same role prompt can
// produce different corrections in different knowledge contexts. WC = 0
// reduces to the plain low-rank map; linearity in the prompt holds for a
// fixed state. The state may be a plain vector or a tape value (when
// corrections feed back through the recurrence).
template <class S, class H>
std::vector<S> correct_state(std::span<const H> h, const std::vector<S>& prompt,
                             std::span<const S> wa, std::span<const S> wb, std::span<const S> wc,
                             std::size_t rank, std::size_t d_h) {
    const std::size_t pdim = prompt.size();
    std::vector<S> z;
    z.reserve(rank);
    for (std::size_t r = 0; r < rank; ++r) {
        S raw = dot(wa.subspan(r * pdim, pdim), std::span<const S>(prompt));
        S gate = add_const(state_dot(wc.subspan(r * d_h, d_h), h), 1.0);
        z.push_back(raw * gate);
    }
    std::vector<S> out;
    out.reserve(d_h);
    std::vector<S> col(rank, z[0]);
    for (std::size_t j = 0; j < d_h; ++j) {
        for (std::size_t r = 0; r < rank; ++r) col[r] = wb[r * d_h + j];
        S corr = dot(std::span<const S>(col), std::span<const S>(z));
        out.push_back(state_add(corr, h[j]));
    }
    return out;
}

// Noise-feature loss for one step: KL between softmax-normalized corrected
// states. Core steps contribute zero (the caller skips them).
template <class S>
S adaptor_loss(std::span<const S> h_t, std::span<const S> h_ref) {
    return kl_between_softmax(h_t, h_ref);
}

// Reference step (0-based) whose corrected state anchors the loss at step t:
// Weak -> its cluster core; Unwanted -> most recent prior Core/Weak step;
// -1 when the loss is omitted (Core steps, or Unwanted with no prior
// related attempt).
inline int adaptor_reference_step(const NoiseAnnotation& ann, std::size_t t) {
    const auto& st = ann.steps[t];
    if (st.role == Role::Core) return -1;
    if (st.role == Role::Weak) return st.core_step - 1;
    for (std::size_t k = t; k-- > 0;) {
        Role r = ann.steps[k].role;
        if (r == Role::Core || r == Role::Weak) return int(k);
    }
    return -1;
}

}  // namespace coda
