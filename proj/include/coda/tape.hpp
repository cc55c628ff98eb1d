#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "coda/error.hpp"

namespace coda {

// Reverse-mode autodiff on a flat tape. Nodes are appended during the
// forward pass; backward() runs one reverse sweep. backward_emit() instead
// records the adjoint computation as new tape nodes, so a second plain
// backward over the grown tape yields Hessian-vector products.
enum class Op : std::uint8_t {
    Leaf,
    Add,   // a + b
    Sub,   // a - b
    Mul,   // a * b
    Div,   // a / b
    Neg,   // -a
    AddC,  // a + consts[c]
    MulC,  // a * consts[c]
    RsubC, // consts[c] - a
    Log,
    Exp,
    Sigmoid,
    Tanh,
    Abs,
    Dot,   // sum_i v[idx[a+i]] * v[idx[a+n+i]], n = b
    DotC,  // sum_i v[idx[a+i]] * consts[c+i],  n = b
    SumN,  // sum_i v[idx[a+i]],                n = b
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;
};

class Tape {
public:
    struct Node {
        double value;
        std::uint32_t a = 0, b = 0, c = 0;
        Op op = Op::Leaf;
    };

    static constexpr std::uint32_t kNone = 0xffffffffu;

    void clear() {
        nodes_.clear();
        idx_.clear();
        consts_.clear();
    }
    std::size_t size() const { return nodes_.size(); }
    double value(Var v) const { return nodes_[v.id].value; }
    double value(std::uint32_t id) const { return nodes_[id].value; }

    Var leaf(double v) {
        nodes_.push_back({v, 0, 0, 0, Op::Leaf});
        return {this, std::uint32_t(nodes_.size() - 1)};
    }

    Var add(Var x, Var y) { return push(nodes_[x.id].value + nodes_[y.id].value, Op::Add, x.id, y.id); }
    Var sub(Var x, Var y) { return push(nodes_[x.id].value - nodes_[y.id].value, Op::Sub, x.id, y.id); }
    Var mul(Var x, Var y) { return push(nodes_[x.id].value * nodes_[y.id].value, Op::Mul, x.id, y.id); }
    Var div(Var x, Var y) { return push(nodes_[x.id].value / nodes_[y.id].value, Op::Div, x.id, y.id); }
    Var neg(Var x) { return push(-nodes_[x.id].value, Op::Neg, x.id, 0); }
    Var add_const(Var x, double c) {
        consts_.push_back(c);
        return push(nodes_[x.id].value + c, Op::AddC, x.id, 0, std::uint32_t(consts_.size() - 1));
    }
    Var mul_const(Var x, double c) {
        consts_.push_back(c);
        return push(nodes_[x.id].value * c, Op::MulC, x.id, 0, std::uint32_t(consts_.size() - 1));
    }
    Var rsub_const(double c, Var x) {
        consts_.push_back(c);
        return push(c - nodes_[x.id].value, Op::RsubC, x.id, 0, std::uint32_t(consts_.size() - 1));
    }
    Var log(Var x) { return push(std::log(nodes_[x.id].value), Op::Log, x.id, 0); }
    Var exp(Var x) { return push(std::exp(nodes_[x.id].value), Op::Exp, x.id, 0); }
    Var sigmoid(Var x) {
        double v = nodes_[x.id].value;
        double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return push(s, Op::Sigmoid, x.id, 0);
    }
    Var tanh(Var x) { return push(std::tanh(nodes_[x.id].value), Op::Tanh, x.id, 0); }
    Var abs(Var x) { return push(std::fabs(nodes_[x.id].value), Op::Abs, x.id, 0); }

    Var dot(std::span<const Var> x, std::span<const Var> y) {
        require(x.size() == y.size(), "dot size mismatch");
        std::uint32_t off = std::uint32_t(idx_.size());
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) idx_.push_back(x[i].id);
        for (std::size_t i = 0; i < y.size(); ++i) idx_.push_back(y[i].id);
        for (std::size_t i = 0; i < x.size(); ++i) v += nodes_[x[i].id].value * nodes_[y[i].id].value;
        return push(v, Op::Dot, off, std::uint32_t(x.size()));
    }

    Var dot_const(std::span<const Var> x, std::span<const double> c) {
        require(x.size() == c.size(), "dot_const size mismatch");
        std::uint32_t off = std::uint32_t(idx_.size());
        std::uint32_t coff = std::uint32_t(consts_.size());
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            idx_.push_back(x[i].id);
            consts_.push_back(c[i]);
            v += nodes_[x[i].id].value * c[i];
        }
        return push(v, Op::DotC, off, std::uint32_t(x.size()), coff);
    }

    Var sum(std::span<const Var> x) {
        std::uint32_t off = std::uint32_t(idx_.size());
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            idx_.push_back(x[i].id);
            v += nodes_[x[i].id].value;
        }
        return push(v, Op::SumN, off, std::uint32_t(x.size()));
    }

    // Plain reverse sweep; adjoints stay valid until the next backward/clear.
    const std::vector<double>& backward(Var root) {
        adj_.assign(nodes_.size(), 0.0);
        adj_[root.id] = 1.0;
        for (std::uint32_t i = root.id + 1; i-- > 0;) {
            double a = adj_[i];
            if (a == 0.0) continue;
            const Node& n = nodes_[i];
            switch (n.op) {
                case Op::Leaf: break;
                case Op::Add: adj_[n.a] += a; adj_[n.b] += a; break;
                case Op::Sub: adj_[n.a] += a; adj_[n.b] -= a; break;
                case Op::Mul:
                    adj_[n.a] += a * nodes_[n.b].value;
                    adj_[n.b] += a * nodes_[n.a].value;
                    break;
                case Op::Div:
                    adj_[n.a] += a / nodes_[n.b].value;
                    adj_[n.b] -= a * n.value / nodes_[n.b].value;
                    break;
                case Op::Neg: adj_[n.a] -= a; break;
                case Op::AddC: adj_[n.a] += a; break;
                case Op::MulC: adj_[n.a] += a * consts_[n.c]; break;
                case Op::RsubC: adj_[n.a] -= a; break;
                case Op::Log: adj_[n.a] += a / nodes_[n.a].value; break;
                case Op::Exp: adj_[n.a] += a * n.value; break;
                case Op::Sigmoid: adj_[n.a] += a * n.value * (1.0 - n.value); break;
                case Op::Tanh: adj_[n.a] += a * (1.0 - n.value * n.value); break;
                case Op::Abs: adj_[n.a] += a * sign(nodes_[n.a].value); break;
                case Op::Dot:
                    for (std::uint32_t k = 0; k < n.b; ++k) {
                        std::uint32_t xi = idx_[n.a + k], yi = idx_[n.a + n.b + k];
                        adj_[xi] += a * nodes_[yi].value;
                        adj_[yi] += a * nodes_[xi].value;
                    }
                    break;
                case Op::DotC:
                    for (std::uint32_t k = 0; k < n.b; ++k) adj_[idx_[n.a + k]] += a * consts_[n.c + k];
                    break;
                case Op::SumN:
                    for (std::uint32_t k = 0; k < n.b; ++k) adj_[idx_[n.a + k]] += a;
                    break;
            }
        }
        return adj_;
    }

    double adjoint(Var v) const { return adj_[v.id]; }
    double adjoint(std::uint32_t id) const { return adj_[id]; }

    // Record the adjoint computation itself as tape nodes. Returns, for each
    // node id < the pre-call tape size, the id of its adjoint Var (kNone if
    // the node does not influence root). Local partials are emitted
    // symbolically so the result supports a second differentiation.
    std::vector<std::uint32_t> backward_emit(Var root) {
        const std::uint32_t n0 = std::uint32_t(nodes_.size());
        std::vector<std::uint32_t> adj(n0, kNone);
        adj[root.id] = leaf(1.0).id;
        for (std::uint32_t i = root.id + 1; i-- > 0;) {
            if (adj[i] == kNone) continue;
            Var a{this, adj[i]};
            const Node n = nodes_[i];  // copy: nodes_ may reallocate
            switch (n.op) {
                case Op::Leaf: break;
                case Op::Add:
                    acc(adj, n.a, a);
                    acc(adj, n.b, a);
                    break;
                case Op::Sub:
                    acc(adj, n.a, a);
                    acc(adj, n.b, neg(a));
                    break;
                case Op::Mul:
                    acc(adj, n.a, mul(a, Var{this, n.b}));
                    acc(adj, n.b, mul(a, Var{this, n.a}));
                    break;
                case Op::Div: {
                    Var q = div(a, Var{this, n.b});
                    acc(adj, n.a, q);
                    acc(adj, n.b, neg(mul(q, Var{this, i})));
                    break;
                }
                case Op::Neg: acc(adj, n.a, neg(a)); break;
                case Op::AddC: acc(adj, n.a, a); break;
                case Op::MulC: acc(adj, n.a, mul_const(a, consts_[n.c])); break;
                case Op::RsubC: acc(adj, n.a, neg(a)); break;
                case Op::Log: acc(adj, n.a, div(a, Var{this, n.a})); break;
                case Op::Exp: acc(adj, n.a, mul(a, Var{this, i})); break;
                case Op::Sigmoid: {
                    Var y{this, i};
                    acc(adj, n.a, mul(a, sub(y, mul(y, y))));
                    break;
                }
                case Op::Tanh: {
                    Var y{this, i};
                    acc(adj, n.a, mul(a, rsub_const(1.0, mul(y, y))));
                    break;
                }
                case Op::Abs:
                    // piecewise-constant slope; exact away from 0
                    acc(adj, n.a, mul_const(a, sign(nodes_[n.a].value)));
                    break;
                case Op::Dot:
                    for (std::uint32_t k = 0; k < n.b; ++k) {
                        std::uint32_t xi = idx_[n.a + k], yi = idx_[n.a + n.b + k];
                        acc(adj, xi, mul(a, Var{this, yi}));
                        acc(adj, yi, mul(a, Var{this, xi}));
                    }
                    break;
                case Op::DotC:
                    for (std::uint32_t k = 0; k < n.b; ++k)
                        acc(adj, idx_[n.a + k], mul_const(a, consts_[n.c + k]));
                    break;
                case Op::SumN:
                    for (std::uint32_t k = 0; k < n.b; ++k) acc(adj, idx_[n.a + k], a);
                    break;
            }
        }
        return adj;
    }

private:
    static double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

    Var push(double v, Op op, std::uint32_t a, std::uint32_t b, std::uint32_t c = 0) {
        nodes_.push_back({v, a, b, c, op});
        return {this, std::uint32_t(nodes_.size() - 1)};
    }

    void acc(std::vector<std::uint32_t>& adj, std::uint32_t target, Var term) {
        if (target >= adj.size()) return;  // adjoint of an emitted node is never needed
        if (adj[target] == kNone)
            adj[target] = term.id;
        else
            adj[target] = add(Var{this, adj[target]}, term).id;
    }

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> idx_;
    std::vector<double> consts_;
    std::vector<double> adj_;
};

// Operator sugar so templated model code reads naturally for Var and double.
inline Var operator+(Var x, Var y) { return x.tape->add(x, y); }
inline Var operator-(Var x, Var y) { return x.tape->sub(x, y); }
inline Var operator*(Var x, Var y) { return x.tape->mul(x, y); }
inline Var operator/(Var x, Var y) { return x.tape->div(x, y); }
inline Var operator-(Var x) { return x.tape->neg(x); }

}  // namespace coda
