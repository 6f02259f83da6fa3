// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pzres/metrics.hpp"
#include "pzres/network.hpp"
#include "pzres/random.hpp"
#include "pzres/train.hpp"

namespace pzres {

struct TrainConfig {
    std::uint64_t iterations = 2000;  // length T of the learning-rate schedule
    std::size_t batch = 1;
    std::size_t crop = 64;            // HR crop side, capped at the image size
    std::size_t eval_every = 100;     // 0 disables held-out evaluation
    AdamConfig adam;
    LossConfig loss;

    friend bool operator==(const TrainConfig& a, const TrainConfig& b) {
        return a.iterations == b.iterations && a.batch == b.batch && a.crop == b.crop &&
               a.eval_every == b.eval_every && a.adam.beta1 == b.adam.beta1 && a.adam.beta2 == b.adam.beta2 &&
               a.adam.eps == b.adam.eps && a.adam.lr0 == b.adam.lr0 && a.adam.lr_final == b.adam.lr_final &&
               a.loss.lambda == b.loss.lambda;
    }
};

/// One observation triple. lr_hsi is S x h x w, msi is s x H x W and gt is
/// S x H x W, all single-batch.
struct TrainingPair {
    Tensor4<float> lr_hsi;
    Tensor4<float> msi;
    Tensor4<float> gt;
};

struct HistoryRecord {
    std::uint64_t iteration = 0;
    double lr = 0.0;
    double loss = 0.0;
    double term1 = 0.0;
    double term2 = 0.0;
    double psnr = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
};

/// Everything needed to resume a run bit-identically.
struct TrainerState {
    std::vector<std::string> names;
    std::vector<std::vector<float>> values;
    std::vector<std::vector<float>> adam_m;
    std::vector<std::vector<float>> adam_v;
    std::uint64_t adam_step = 0;
    std::uint64_t iteration = 0;
    std::string rng_state;
    std::vector<HistoryRecord> history;
};

/// Integer ratio between the HR and LR grids of a pair.
inline std::size_t infer_scale(const Dims& lr, const Dims& hr) {
    if (hr.height % lr.height != 0 || hr.width % lr.width != 0 || hr.height / lr.height != hr.width / lr.width) {
        throw InputError("LR-HSI " + to_string(lr) + " and HR grid " + to_string(hr) +
                         " are not related by one integer scale");
    }
    return hr.height / lr.height;
}

template <typename T>
Tensor4<T> crop(const Tensor4<T>& t, std::size_t batch_index, std::size_t y0, std::size_t x0, std::size_t h,
                std::size_t w) {
    const Dims d = t.dims();
    if (y0 + h > d.height || x0 + w > d.width) throw ConfigError("crop: window outside tensor");
    Tensor4<T> out(1, d.channels, h, w);
    for (std::size_t c = 0; c < d.channels; ++c) {
        auto src = t.plane(batch_index, c);
        auto dst = out.plane(0, c);
        for (std::size_t y = 0; y < h; ++y) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((y0 + y) * d.width + x0), w,
                        dst.begin() + static_cast<std::ptrdiff_t>(y * w));
        }
    }
    return out;
}

/// Stacks single-batch tensors of equal extent along the batch axis.
template <typename T>
Tensor4<T> stack_batch(const std::vector<Tensor4<T>>& items) {
    if (items.empty()) throw ConfigError("stack_batch: no items");
    const Dims d = items.front().dims();
    Tensor4<T> out(items.size(), d.channels, d.height, d.width);
    T* dst = out.data();
    for (const auto& t : items) {
        if (!(t.dims() == d)) throw ConfigError("stack_batch: extent mismatch");
        dst = std::copy(t.values().begin(), t.values().end(), dst);
    }
    return out;
}

class Trainer {
public:
    using Callback = std::function<void(const HistoryRecord&)>;

    Trainer(const NetworkConfig& net_cfg, const TrainConfig& cfg, const std::vector<TrainingPair>& data)
        : cfg_(cfg), net_(net_cfg), adam_(std::as_const(net_).parameters()), rng_(training_seed(net_cfg.seed)) {
        if (data.empty()) throw InputError("training needs at least one data pair");
        if (cfg.batch == 0 || cfg.crop == 0) throw ConfigError("train: batch and crop must be >= 1");
        for (const auto& p : data) pairs_.push_back(prepare(p));
        held_out_ = pairs_.size() - 1;
        train_count_ = pairs_.size() > 1 ? pairs_.size() - 1 : 1;
    }

    const TrainConfig& config() const { return cfg_; }
    const Network<float>& network() const { return net_; }
    Network<float>& network() { return net_; }
    std::uint64_t iteration() const { return iteration_; }
    const std::vector<HistoryRecord>& history() const { return history_; }
    std::size_t scale() const { return scale_; }

    /// Runs up to `steps` iterations without passing the schedule length.
    void run(std::uint64_t steps, const Callback& on_step = {}) {
        for (std::uint64_t s = 0; s < steps && iteration_ < cfg_.iterations; ++s) {
            const auto& rec = step();
            if (on_step) on_step(rec);
        }
    }

    void run_to_end(const Callback& on_step = {}) { run(cfg_.iterations - std::min(iteration_, cfg_.iterations), on_step); }

    /// One optimisation step. Throws NumericalError, leaving the parameters,
    /// optimizer and sampler untouched, if the loss or a gradient is not finite.
    const HistoryRecord& step() {
        const double lr = cosine_lr(iteration_, cfg_.iterations, cfg_.adam.lr0, cfg_.adam.lr_final);
        const Rng rng_before = rng_;
        std::vector<Tensor4<float>> zs, ms, gs;
        for (std::size_t b = 0; b < cfg_.batch; ++b) {
            const auto& p = pairs_[rng_.below(train_count_)];
            const std::size_t h = std::min(cfg_.crop, p.gt.height());
            const std::size_t w = std::min(cfg_.crop, p.gt.width());
            const std::size_t y0 = rng_.below(p.gt.height() - h + 1);
            const std::size_t x0 = rng_.below(p.gt.width() - w + 1);
            zs.push_back(crop(p.z_up, 0, y0, x0, h, w));
            ms.push_back(crop(p.msi, 0, y0, x0, h, w));
            gs.push_back(crop(p.gt, 0, y0, x0, h, w));
        }
        const auto z = stack_batch(zs), m = stack_batch(ms), g = stack_batch(gs);

        net_.zero_grad();
        Network<float>::Cache cache;
        const auto out = net_.forward(z, m, &cache);
        const auto l = composite_loss(g, out.coarse, out.refined, cfg_.loss);
        if (!std::isfinite(l.value)) {
            rng_ = rng_before;
            throw NumericalError("loss became non-finite at iteration " + std::to_string(iteration_ + 1));
        }
        net_.backward(cache, l.grad_coarse, l.grad_refined);
        try {
            adam_step(adam_, net_.parameters(), lr, cfg_.adam);
        } catch (const NumericalError&) {
            rng_ = rng_before;
            throw;
        }
        ++iteration_;

        HistoryRecord rec{iteration_, lr, l.value, l.term1, l.term2};
        if (cfg_.eval_every > 0 && (iteration_ % cfg_.eval_every == 0 || iteration_ == cfg_.iterations)) {
            rec.psnr = evaluate_held_out();
        }
        history_.push_back(rec);
        return history_.back();
    }

    /// PSNR of the refined output on the held-out pair (the last pair given).
    double evaluate_held_out() const {
        const auto& p = pairs_[held_out_];
        return psnr(p.gt, net_.forward(p.z_up, p.msi).refined);
    }

    TrainerState state() const {
        TrainerState s;
        for (const auto* p : net_.parameters()) {
            s.names.push_back(p->name);
            s.values.push_back(p->value);
        }
        s.adam_m = adam_.m;
        s.adam_v = adam_.v;
        s.adam_step = adam_.step;
        s.iteration = iteration_;
        s.rng_state = rng_.state();
        s.history = history_;
        return s;
    }

    void restore(const TrainerState& s) {
        load_parameters(net_, s.names, s.values);
        const auto params = net_.parameters();
        if (s.adam_m.size() != params.size() || s.adam_v.size() != params.size()) {
            throw InputError("checkpoint: optimizer moments do not match the parameter list");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (s.adam_m[i].size() != params[i]->size() || s.adam_v[i].size() != params[i]->size()) {
                throw InputError("checkpoint: optimizer moment size mismatch for '" + params[i]->name + "'");
            }
        }
        adam_.m = s.adam_m;
        adam_.v = s.adam_v;
        adam_.step = s.adam_step;
        iteration_ = s.iteration;
        rng_.set_state(s.rng_state);
        history_ = s.history;
    }

    /// Copies named parameter values into a network, checking order and size.
    static void load_parameters(Network<float>& net, const std::vector<std::string>& names,
                                const std::vector<std::vector<float>>& values) {
        auto params = net.parameters();
        if (names.size() != params.size() || values.size() != params.size()) {
            throw InputError("checkpoint: has " + std::to_string(names.size()) + " parameter tensors, network expects " +
                             std::to_string(params.size()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (names[i] != params[i]->name || values[i].size() != params[i]->size()) {
                throw InputError("checkpoint: parameter '" + names[i] + "' does not match '" + params[i]->name + "'");
            }
            params[i]->value = values[i];
        }
    }

    static std::uint64_t training_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

private:
    struct PreparedPair {
        Tensor4<float> z_up, msi, gt;
    };

    PreparedPair prepare(const TrainingPair& p) {
        const auto& cfg = net_.config();
        if (p.lr_hsi.batch() != 1 || p.msi.batch() != 1 || p.gt.batch() != 1) {
            throw InputError("training cubes must be single-batch");
        }
        if (p.lr_hsi.channels() != cfg.bands || p.gt.channels() != cfg.bands || p.msi.channels() != cfg.msi_bands) {
            throw InputError("training cubes do not match the configured band counts (" + std::to_string(cfg.bands) +
                             " HSI, " + std::to_string(cfg.msi_bands) + " MSI)");
        }
        if (!p.msi.dims().same_spatial(p.gt.dims())) throw InputError("MSI and ground truth differ in spatial size");
        const std::size_t r = infer_scale(p.lr_hsi.dims(), p.msi.dims());
        if (scale_ != 0 && r != scale_) throw InputError("training pairs use different scale factors");
        scale_ = r;
        return {upsample_lr_hsi(p.lr_hsi, r, cfg.upsample), p.msi, p.gt};
    }

    TrainConfig cfg_;
    Network<float> net_;
    AdamState<float> adam_;
    Rng rng_;
    std::uint64_t iteration_ = 0;
    std::vector<HistoryRecord> history_;
    std::vector<PreparedPair> pairs_;
    std::size_t held_out_ = 0;
    std::size_t train_count_ = 1;
    std::size_t scale_ = 0;
};

}  // namespace pzres
