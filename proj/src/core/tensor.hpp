#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace sdr::core {

using Dims = std::vector<int>;

inline std::int64_t numel(const Dims& dims) {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
}

inline std::string dims_str(const Dims& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

// Dense row-major tensor. Scalar is float in compute mode, double in
// gradcheck mode; the whole numeric stack is instantiated for both.
template <typename S>
struct Tensor {
    Dims dims;
    std::vector<S> data;

    Tensor() = default;

    explicit Tensor(Dims d, S fill = S(0))
        : dims(std::move(d)), data(static_cast<std::size_t>(numel(dims)), fill) {
        for (int e : dims) {
            if (e <= 0) throw ConfigError("tensor extent must be positive, got " + dims_str(dims));
        }
    }

    static Tensor from(Dims d, std::vector<S> values) {
        Tensor t;
        t.dims = std::move(d);
        t.data = std::move(values);
        if (numel(t.dims) != static_cast<std::int64_t>(t.data.size())) {
            throw ConfigError("tensor data length " + std::to_string(t.data.size()) +
                              " does not match dims " + dims_str(t.dims));
        }
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(dims.size()); }
    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    S& at(std::initializer_list<int> idx) {
        std::int64_t off = 0;
        int axis = 0;
        for (int i : idx) off = off * dims[static_cast<std::size_t>(axis++)] + i;
        return data[static_cast<std::size_t>(off)];
    }
    S at(std::initializer_list<int> idx) const {
        return const_cast<Tensor*>(this)->at(idx);
    }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    bool same_dims(const Tensor& o) const { return dims == o.dims; }
};

// Hard error on any non-finite value; `who` names the producing primitive.
// Scans via |v| <= max_finite, which vectorizes (NaN compares false).
template <typename S>
inline void check_finite(const Tensor<S>& t, const char* who) {
    constexpr S lim = std::numeric_limits<S>::max();
    const S* p = t.ptr();
    const std::int64_t n = t.size();
    int ok = 1;
    for (std::int64_t i = 0; i < n; ++i) {
        const S a = p[i] < S(0) ? -p[i] : p[i];
        ok &= static_cast<int>(a <= lim);
    }
    if (!ok) throw NumericError(std::string(who) + " produced a non-finite value");
}

template <typename S>
inline void require_dims(const Tensor<S>& t, const Dims& want, const char* who) {
    if (t.dims != want) {
        throw ConfigError(std::string(who) + ": expected dims " + dims_str(want) +
                          ", got " + dims_str(t.dims));
    }
}

} // namespace sdr::core
