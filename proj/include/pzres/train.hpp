// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "pzres/error.hpp"
#include "pzres/layers.hpp"
#include "pzres/network.hpp"
#include "pzres/tensor.hpp"

namespace pzres {

// ---------------------------------------------------------------------------
// Composite loss:
//   L = (1/N) ( |Z(X) - Z(X_coarse)|_1 + lambda |X - X_refined|_1 )
// with N = B*S*H*W and Z the per-band zero-mean projection.

struct LossConfig {
    double lambda = 1.0;
};

template <typename T>
struct LossResult {
    double value = 0.0;
    double term1 = 0.0;  // already divided by N
    double term2 = 0.0;  // already divided by N and multiplied by lambda
    Tensor4<T> grad_coarse;
    Tensor4<T> grad_refined;
    std::vector<std::uint8_t> signs;  // sign pattern of both residuals, for kink detection
};

namespace detail {
inline int sgn(double v) { return (v > 0.0) - (v < 0.0); }
}  // namespace detail

template <typename T>
LossResult<T> composite_loss(const Tensor4<T>& x_gt, const Tensor4<T>& coarse, const Tensor4<T>& refined,
                             const LossConfig& cfg = {}) {
    if (!(x_gt.dims() == coarse.dims()) || !(x_gt.dims() == refined.dims())) {
        throw ConfigError("loss: dimension mismatch between ground truth and reconstructions");
    }
    if (!(cfg.lambda > 0.0)) throw ConfigError("loss: lambda must be > 0");
    const double inv_n = 1.0 / static_cast<double>(x_gt.size());
    const Tensor4<T> zx = zm_norm_forward(x_gt);
    const Tensor4<T> zc = zm_norm_forward(coarse);

    LossResult<T> r;
    r.signs.reserve(2 * x_gt.size());
    Tensor4<T> sign1(x_gt.dims());
    r.grad_refined = Tensor4<T>(x_gt.dims());
    double t1 = 0.0, t2 = 0.0;
    for (std::size_t i = 0; i < x_gt.size(); ++i) {
        const double e1 = static_cast<double>(zx[i]) - static_cast<double>(zc[i]);
        const double e2 = static_cast<double>(x_gt[i]) - static_cast<double>(refined[i]);
        t1 += std::abs(e1);
        t2 += std::abs(e2);
        sign1[i] = static_cast<T>(-detail::sgn(e1) * inv_n);
        r.grad_refined[i] = static_cast<T>(-cfg.lambda * detail::sgn(e2) * inv_n);
        r.signs.push_back(static_cast<std::uint8_t>(detail::sgn(e1) + 1));
        r.signs.push_back(static_cast<std::uint8_t>(detail::sgn(e2) + 1));
    }
    r.term1 = t1 * inv_n;
    r.term2 = cfg.lambda * t2 * inv_n;
    r.value = r.term1 + r.term2;
    r.grad_coarse = zm_norm_backward(sign1);
    return r;
}

// ---------------------------------------------------------------------------
// ADAM with bias correction and a cosine-annealed learning rate.

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr0 = 1e-3;
    double lr_final = 1e-5;
};

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(const ConstParameterList<T>& params) {
        for (const auto* p : params) {
            m.emplace_back(p->size(), T(0));
            v.emplace_back(p->size(), T(0));
        }
    }
};

/// lr_final + (lr0 - lr_final)(1 + cos(pi t / T)) / 2, held at lr_final past T.
inline double cosine_lr(std::uint64_t t, std::uint64_t total, double lr0 = 1e-3, double lr_final = 1e-5) {
    if (total == 0) return lr0;
    if (t >= total) return lr_final;
    const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
    return lr_final + 0.5 * (lr0 - lr_final) * (1.0 + std::cos(phase));
}

/// One ADAM update of every parameter from its .grad. Nothing is modified if
/// any gradient is non-finite.
template <typename T>
void adam_step(AdamState<T>& state, const ParameterList<T>& params, double lr, const AdamConfig& cfg = {}) {
    if (state.m.size() != params.size()) throw ConfigError("adam_step: state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i]->size()) throw ConfigError("adam_step: moment shape mismatch");
        for (T g : params[i]->grad) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw NumericalError("non-finite gradient in parameter '" + params[i]->name + "'");
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = static_cast<double>(p.grad[j]);
            const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * g;
            const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
            p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) - update);
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
//
// An objective exposes
//   double value(std::vector<std::uint8_t>* signs)   // loss, optional kink pattern
//   void gradient()                                   // fills every parameter's .grad
// Coordinates whose +h or -h evaluation changes the kink pattern are excluded.
// Errors are normwise per tensor. The denominator is floored relative to the
// largest gradient in the check because difference noise scales with the
// loss, so tensors whose true gradient is zero are not judged on noise alone.

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    std::size_t excluded = 0;
    double max_abs_err = 0.0;
    double scale = 0.0;        // max(max |a|, max |n|) over the checked coordinates
    double max_rel_err = 0.0;  // max_abs_err / max(scale, floor)
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    std::size_t excluded = 0;

    bool passed(double tolerance) const { return max_rel_err <= tolerance; }
};

struct GradCheckOptions {
    double step = 1e-5;
    double scale_floor = 1e-6;     // absolute lower bound on the relative-error denominator
    double relative_floor = 1e-3;  // lower bound as a fraction of the largest tensor scale
    std::size_t max_coords_per_param = 0;  // 0 = every coordinate
};

template <typename Objective>
GradCheckReport grad_check(Objective& objective, const ParameterList<double>& params,
                           const GradCheckOptions& opt = {}) {
    for (auto* p : params) p->zero_grad();
    objective.gradient();
    std::vector<std::vector<double>> analytic;
    for (auto* p : params) analytic.push_back(p->grad);

    std::vector<std::uint8_t> base, plus, minus;
    objective.value(&base);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        GradCheckEntry e{p.name};
        const std::size_t n = p.size();
        const std::size_t stride =
            opt.max_coords_per_param == 0 || n <= opt.max_coords_per_param ? 1 : (n + opt.max_coords_per_param - 1) / opt.max_coords_per_param;
        for (std::size_t j = 0; j < n; j += stride) {
            const double saved = p.value[j];
            p.value[j] = saved + opt.step;
            plus.clear();
            const double fp = objective.value(&plus);
            p.value[j] = saved - opt.step;
            minus.clear();
            const double fm = objective.value(&minus);
            p.value[j] = saved;
            if (plus != base || minus != base) {
                ++e.excluded;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * opt.step);
            const double a = analytic[pi][j];
            e.scale = std::max({e.scale, std::abs(a), std::abs(numeric)});
            e.max_abs_err = std::max(e.max_abs_err, std::abs(a - numeric));
            ++e.checked;
        }
        report.excluded += e.excluded;
        report.entries.push_back(std::move(e));
    }
    double largest = 0.0;
    for (const auto& e : report.entries) largest = std::max(largest, e.scale);
    const double floor = std::max(opt.scale_floor, opt.relative_floor * largest);
    for (auto& e : report.entries) {
        e.max_rel_err = e.max_abs_err / std::max(e.scale, floor);
        report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
    }
    return report;
}

/// The training objective of a 64-bit network on fixed inputs.
class NetworkObjective {
public:
    NetworkObjective(Network<double>& net, Tensor4<double> z_up, Tensor4<double> msi, Tensor4<double> gt,
                     LossConfig loss = {})
        : net_(net), z_up_(std::move(z_up)), msi_(std::move(msi)), gt_(std::move(gt)), loss_(loss) {}

    double value(std::vector<std::uint8_t>* signs) {
        Network<double>::Cache cache;
        const auto out = net_.forward(z_up_, msi_, &cache);
        auto l = composite_loss(gt_, out.coarse, out.refined, loss_);
        if (signs) {
            *signs = net_.activation_signs(cache);
            signs->insert(signs->end(), l.signs.begin(), l.signs.end());
        }
        return l.value;
    }

    void gradient() {
        net_.zero_grad();
        Network<double>::Cache cache;
        const auto out = net_.forward(z_up_, msi_, &cache);
        const auto l = composite_loss(gt_, out.coarse, out.refined, loss_);
        net_.backward(cache, l.grad_coarse, l.grad_refined);
    }

private:
    Network<double>& net_;
    Tensor4<double> z_up_, msi_, gt_;
    LossConfig loss_;
};

}  // namespace pzres
