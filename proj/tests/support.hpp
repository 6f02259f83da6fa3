// Shared helpers for the unit tests: random fill, inner products and
// central-difference gradients against which analytic backward passes are
// compared.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pzres/random.hpp"
#include "pzres/tensor.hpp"

namespace pzres::testkit {

template <typename T = double>
Tensor4<T> random_tensor(const Dims& d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor4<T> t(d);
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T = double>
std::vector<T> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return v;
}

inline double inner(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double inner(const Tensor4<double>& a, const Tensor4<double>& b) { return inner(a.values(), b.values()); }

/// Central differences of f with respect to every entry of x.
inline std::vector<double> numeric_gradient(std::span<double> x, const std::function<double()>& f,
                                            double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f();
        x[i] = saved - h;
        const double fm = f();
        x[i] = saved;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// max |a - b| / max(max |a|, max |b|, floor)
inline double rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
    double num = 0.0, scale = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return num / scale;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
double max_abs(const Tensor4<T>& t) {
    double m = 0.0;
    for (T v : t.values()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

/// Adapts a pair of callables to the objective interface of grad_check.
struct FnObjective {
    std::function<double(std::vector<std::uint8_t>*)> value_fn;
    std::function<void()> gradient_fn;

    double value(std::vector<std::uint8_t>* signs) { return value_fn(signs); }
    void gradient() { gradient_fn(); }
};

}  // namespace pzres::testkit
