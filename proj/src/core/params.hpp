#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/errors.hpp"
#include "core/tensor.hpp"

namespace sdr::core {

// Flat registry of named trainable tensors. Iteration order is insertion
// order everywhere (updates, checkpoints, gradcheck), which is what makes
// training bit-deterministic.
template <typename S>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<S> value;
        Tensor<S> grad;
        Tensor<S> m; // Adam first moment
        Tensor<S> v; // Adam second moment
        bool grad_fresh = false;
    };

    explicit ParamStore(std::uint64_t rng_seed) : rng_seed_(rng_seed) {}

    Tensor<S>& add(const std::string& name, Tensor<S> value) {
        if (index_.count(name)) throw InvariantError("duplicate parameter name: " + name);
        Entry e;
        e.name = name;
        e.grad = Tensor<S>(value.dims);
        e.m = Tensor<S>(value.dims);
        e.v = Tensor<S>(value.dims);
        e.value = std::move(value);
        index_[name] = static_cast<int>(entries_.size());
        entries_.push_back(std::move(e));
        return entries_.back().value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw InvariantError("unknown parameter: " + name);
        return entries_[static_cast<std::size_t>(it->second)];
    }
    const Entry& entry(const std::string& name) const {
        return const_cast<ParamStore*>(this)->entry(name);
    }

    Tensor<S>& value(const std::string& name) { return entry(name).value; }
    const Tensor<S>& value(const std::string& name) const { return entry(name).value; }
    Tensor<S>& grad(const std::string& name) { return entry(name).grad; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::size_t count() const { return entries_.size(); }

    std::int64_t scalar_count() const {
        std::int64_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    std::uint64_t rng_seed() const { return rng_seed_; }

    void zero_grads() {
        for (auto& e : entries_) {
            e.grad.fill(S(0));
            e.grad_fresh = false;
        }
    }

    // One Adam update with bias correction, applied in insertion order.
    // Requires every entry's gradient to have been populated since the last
    // step; zeroes gradients afterwards.
    void adam_step(double lr, double beta1, double beta2, double eps, int step_index) {
        if (step_index < 1) throw InvariantError("adam_step: step_index must be >= 1");
        const double bc1 = 1.0 - std::pow(beta1, step_index);
        const double bc2 = 1.0 - std::pow(beta2, step_index);
        for (auto& e : entries_) {
            if (!e.grad_fresh) {
                throw InvariantError("adam_step: gradient not populated for " + e.name);
            }
        }
        for (auto& e : entries_) {
            S* p = e.value.ptr();
            S* g = e.grad.ptr();
            S* m = e.m.ptr();
            S* v = e.v.ptr();
            const std::int64_t n = e.value.size();
            for (std::int64_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
                const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                p[i] = static_cast<S>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + eps));
            }
            check_finite(e.value, "adam_step");
            e.grad.fill(S(0));
            e.grad_fresh = false;
        }
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
    std::uint64_t rng_seed_;
};

} // namespace sdr::core
