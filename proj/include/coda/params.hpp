#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coda/error.hpp"

namespace coda {

using Vec = std::vector<double>;

// Named trainable tensors. Slots keep registration order; the flattened
// parameter vector over unfrozen slots follows that order, which is the
// ordering used by snapshots and the navigational regularizer.
class ParamStore {
public:
    struct Slot {
        std::string name;
        std::vector<std::size_t> shape;
        Vec data;
        bool frozen = false;
    };

    std::size_t add(const std::string& name, std::vector<std::size_t> shape, bool frozen = false) {
        require(index_.find(name) == index_.end(), "duplicate slot " + name);
        std::size_t numel = 1;
        for (std::size_t s : shape) numel *= s;
        Slot slot;
        slot.name = name;
        slot.shape = std::move(shape);
        slot.data.assign(numel, 0.0);
        slot.frozen = frozen;
        index_[name] = slots_.size();
        slots_.push_back(std::move(slot));
        return slots_.size() - 1;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Slot& slot(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown slot " + name);
        return slots_[it->second];
    }
    const Slot& slot(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown slot " + name);
        return slots_[it->second];
    }

    Vec& data(const std::string& name) { return slot(name).data; }
    const Vec& data(const std::string& name) const { return slot(name).data; }

    std::size_t size() const { return slots_.size(); }
    Slot& at(std::size_t i) { return slots_[i]; }
    const Slot& at(std::size_t i) const { return slots_[i]; }

    void set_frozen(const std::string& name, bool frozen) { slot(name).frozen = frozen; }
    void freeze_all() {
        for (auto& s : slots_) s.frozen = true;
    }

    std::size_t unfrozen_count() const {
        std::size_t n = 0;
        for (const auto& s : slots_)
            if (!s.frozen) n += s.data.size();
        return n;
    }

    // Flattened view of unfrozen slots, in registration order.
    Vec flatten_unfrozen() const {
        Vec out;
        out.reserve(unfrozen_count());
        for (const auto& s : slots_)
            if (!s.frozen) out.insert(out.end(), s.data.begin(), s.data.end());
        return out;
    }

    void assign_unfrozen(const Vec& flat) {
        std::size_t pos = 0;
        for (auto& s : slots_) {
            if (s.frozen) continue;
            require(pos + s.data.size() <= flat.size(), "flat vector too short");
            std::copy(flat.begin() + pos, flat.begin() + pos + s.data.size(), s.data.begin());
            pos += s.data.size();
        }
        require(pos == flat.size(), "flat vector length mismatch");
    }

private:
    std::vector<Slot> slots_;
    std::map<std::string, std::size_t> index_;
};

inline ParamStore filter_slots(const ParamStore& params, const std::string& prefix) {
    ParamStore out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& s = params.at(i);
        if (s.name.rfind(prefix, 0) != 0) continue;
        out.add(s.name, s.shape, s.frozen);
        out.data(s.name) = s.data;
    }
    return out;
}

inline void merge_slots(ParamStore& into, const ParamStore& from, bool frozen) {
    for (std::size_t i = 0; i < from.size(); ++i) {
        const auto& s = from.at(i);
        into.add(s.name, s.shape, frozen);
        into.data(s.name) = s.data;
    }
}

// Per-slot gradient buffers parallel to a ParamStore.
class GradStore {
public:
    explicit GradStore(const ParamStore& params) {
        bufs_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) bufs_[i].assign(params.at(i).data.size(), 0.0);
    }
    Vec& at(std::size_t i) { return bufs_[i]; }
    const Vec& at(std::size_t i) const { return bufs_[i]; }
    void zero() {
        for (auto& b : bufs_)
            for (double& x : b) x = 0.0;
    }
    std::size_t size() const { return bufs_.size(); }

private:
    std::vector<Vec> bufs_;
};

}  // namespace coda
