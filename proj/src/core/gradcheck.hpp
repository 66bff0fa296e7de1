#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/errors.hpp"
#include "core/params.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace sdr::core {

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst_tensor;
    std::int64_t worst_coord = -1;
    std::int64_t coords_checked = 0;
    std::vector<std::pair<std::string, double>> per_tensor; // max rel err per entry
};

// Central-difference check of analytic gradients. loss_fn(ps, want_grad)
// must return the loss; when want_grad it must also accumulate gradients
// into the store. Coordinates are subsampled deterministically from the
// store's rng_seed when a tensor is larger than min_coords_per_tensor.
// Only meaningful in 64-bit mode; float instantiations are rejected.
template <typename S>
GradCheckReport finite_diff_gradcheck(const std::function<S(ParamStore<S>&, bool)>& loss_fn,
                                      ParamStore<S>& ps, double h, double tol,
                                      int min_coords_per_tensor = 32) {
    if (sizeof(S) < 8) throw ConfigError("finite_diff_gradcheck requires the 64-bit substrate mode");
    if (!(h >= 1e-6 && h <= 1e-4)) throw ConfigError("finite_diff_gradcheck: h must lie in [1e-6, 1e-4]");

    // Two evaluations at the same point must agree bitwise before any
    // differencing is trusted.
    ps.zero_grads();
    const S f0 = loss_fn(ps, false);
    const S f1 = loss_fn(ps, false);
    if (f0 != f1) {
        throw DeterminismError("finite_diff_gradcheck: loss function is not deterministic");
    }

    ps.zero_grads();
    (void)loss_fn(ps, true);
    std::vector<Tensor<S>> analytic;
    analytic.reserve(ps.count());
    for (const auto& e : ps.entries()) {
        if (!e.grad_fresh) {
            throw InvariantError("finite_diff_gradcheck: loss function left no gradient for " + e.name);
        }
        analytic.push_back(e.grad);
    }

    GradCheckReport report;
    report.pass = true;
    for (std::size_t ei = 0; ei < ps.entries().size(); ++ei) {
        auto& entry = ps.entries()[ei];
        const std::int64_t n = entry.value.size();
        std::vector<std::int64_t> coords;
        if (n <= min_coords_per_tensor) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            std::vector<std::int64_t> all(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
            Rng rng = Rng(ps.rng_seed()).fork(0x6C6Bu + ei);
            for (int i = 0; i < min_coords_per_tensor; ++i) {
                const int j = i + rng.uniform_int(0, static_cast<int>(n) - 1 - i);
                std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
            }
            coords.assign(all.begin(), all.begin() + min_coords_per_tensor);
        }

        double tensor_max = 0.0;
        for (const std::int64_t c : coords) {
            S& slot = entry.value[c];
            const S saved = slot;
            slot = saved + static_cast<S>(h);
            const double fp = static_cast<double>(loss_fn(ps, false));
            slot = saved - static_cast<S>(h);
            const double fm = static_cast<double>(loss_fn(ps, false));
            slot = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double exact = static_cast<double>(analytic[ei][c]);
            const double denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
            const double rel = std::abs(exact - numeric) / denom;
            tensor_max = std::max(tensor_max, rel);
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_tensor = entry.name;
                report.worst_coord = c;
            }
        }
        report.per_tensor.emplace_back(entry.name, tensor_max);
    }
    report.pass = report.max_rel_err <= tol;
    ps.zero_grads();
    return report;
}

} // namespace sdr::core
