#pragma once

#include <deque>
#include <string>
#include <vector>

#include "coda/params.hpp"
#include "coda/tape.hpp"

namespace coda {

// Binds ParamStore slots to tape leaves for one tape lifetime and routes
// adjoints back into per-slot gradient buffers.
class TapeBinder {
public:
    TapeBinder(Tape& tape, ParamStore& params) : tape_(tape), params_(params) {}

    const std::vector<Var>& bind(const std::string& name) {
        for (auto& e : bound_)
            if (e.name == name) return e.vars;
        Entry entry;
        entry.name = name;
        entry.slot = 0;
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_.at(i).name == name) entry.slot = i;
        const auto& data = params_.slot(name).data;
        entry.vars.reserve(data.size());
        for (double v : data) entry.vars.push_back(tape_.leaf(v));
        bound_.push_back(std::move(entry));
        return bound_.back().vars;
    }

    // After tape.backward(root), add adjoints of bound leaves into grads.
    void accumulate(GradStore& grads) const {
        for (const auto& e : bound_) {
            auto& g = grads.at(e.slot);
            for (std::size_t k = 0; k < e.vars.size(); ++k) g[k] += tape_.adjoint(e.vars[k]);
        }
    }

    // Flattened adjoints over bound slots in ParamStore registration order,
    // restricted to unfrozen slots (the tuning parameter vector).
    void accumulate_flat(Vec& flat) const {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& slot = params_.at(i);
            if (slot.frozen) continue;
            for (const auto& e : bound_) {
                if (e.slot != i) continue;
                for (std::size_t k = 0; k < e.vars.size(); ++k) flat[pos + k] += tape_.adjoint(e.vars[k]);
            }
            pos += slot.data.size();
        }
    }

    // Leaf ids in flattened unfrozen order (Tape::kNone for unbound slots).
    std::vector<std::uint32_t> unfrozen_leaf_ids() const {
        std::vector<std::uint32_t> out;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& slot = params_.at(i);
            if (slot.frozen) continue;
            const Entry* entry = nullptr;
            for (const auto& e : bound_)
                if (e.slot == i) entry = &e;
            for (std::size_t k = 0; k < slot.data.size(); ++k)
                out.push_back(entry ? entry->vars[k].id : Tape::kNone);
        }
        return out;
    }

    const std::vector<Var>* find(const std::string& name) const {
        for (auto& e : bound_)
            if (e.name == name) return &e.vars;
        return nullptr;
    }

private:
    struct Entry {
        std::string name;
        std::size_t slot;
        std::vector<Var> vars;
    };
    Tape& tape_;
    ParamStore& params_;
    std::deque<Entry> bound_;  // stable element references across binds
};

}  // namespace coda
