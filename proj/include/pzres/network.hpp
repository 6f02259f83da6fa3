// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pzres/layers.hpp"
#include "pzres/ops.hpp"
#include "pzres/random.hpp"
#include "pzres/tensor.hpp"

namespace pzres {

enum class UpsampleMode { bilinear, bicubic };

inline std::string to_string(UpsampleMode m) { return m == UpsampleMode::bilinear ? "bilinear" : "bicubic"; }

inline UpsampleMode parse_upsample_mode(const std::string& s) {
    if (s == "bilinear") return UpsampleMode::bilinear;
    if (s == "bicubic") return UpsampleMode::bicubic;
    throw ConfigError("unsupported upsample mode '" + s + "' (expected bilinear or bicubic)");
}

struct NetworkConfig {
    std::size_t bands = 31;            // S
    std::size_t msi_bands = 3;         // s
    std::size_t stages = 3;
    std::size_t growth_factor = 2;     // g_i = growth_factor * n_i
    std::size_t blocks_per_stage = 7;  // dense blocks before each stage's final block
    std::size_t kernel_size = 3;       // spatial kernel, odd
    bool zm_norm = true;
    bool refinement = true;
    bool dense = true;
    UpsampleMode upsample = UpsampleMode::bilinear;
    std::uint64_t seed = 0;

    void validate() const;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// ---------------------------------------------------------------------------
// Progressive band schedule: stage i (1-based) takes every 2^(stages - i)-th
// band starting at band 0, so the last stage sees all bands.

using BandSchedule = std::vector<std::vector<std::size_t>>;

inline BandSchedule band_schedule(std::size_t bands, std::size_t stages) {
    if (bands == 0 || stages == 0) throw ConfigError("band_schedule: bands and stages must be >= 1");
    // A single stage always takes every band.
    if (stages > 1 && (stages > 63 || (std::size_t{1} << (stages - 1)) >= bands)) {
        throw ConfigError("band_schedule: stride 2^(stages-1) must be smaller than the band count (" +
                          std::to_string(bands) + " bands, " + std::to_string(stages) + " stages)");
    }
    BandSchedule schedule(stages);
    for (std::size_t i = 1; i <= stages; ++i) {
        const std::size_t stride = std::size_t{1} << (stages - i);
        for (std::size_t k = 0; k < bands; k += stride) schedule[i - 1].push_back(k);
    }
    return schedule;
}

inline void NetworkConfig::validate() const {
    if (bands == 0 || msi_bands == 0) throw ConfigError("network: band counts must be >= 1");
    if (growth_factor == 0 || blocks_per_stage == 0) throw ConfigError("network: growth and depth must be >= 1");
    if (kernel_size % 2 == 0) throw ConfigError("network: kernel_size must be odd");
    band_schedule(bands, stages);
}

/// Shape of stage i (0-based) under the configuration.
inline StageShape stage_shape(const NetworkConfig& cfg, const BandSchedule& schedule, std::size_t i) {
    StageShape s;
    s.msi_bands = cfg.msi_bands;
    s.out_channels = schedule[i].size();
    s.prev_channels = i == 0 ? 0 : schedule[i - 1].size();
    s.growth = cfg.growth_factor * s.out_channels;
    s.blocks = cfg.blocks_per_stage;
    s.kernel_size = cfg.kernel_size;
    s.zm_norm = cfg.zm_norm;
    s.dense = cfg.dense;
    return s;
}

/// Closed-form parameter count.
///
/// Per layer (all with bias): spectral conv a -> b has b(a + 1); depthwise conv
/// on c channels with k x k kernels has c(k^2 + 1); a 3S block a -> b is the
/// sum of both. Stage i with output width n, MSI width s, initial width c0,
/// growth g and J dense blocks:
///   lift                 n(s + 1)
///   dense blocks         sum_{j=1..J} g(c0 + (j-1)g + 1) + g(k^2 + 1)
///                      = J g (c0 + k^2 + 2) + g^2 J(J - 1)/2
///   final block          n(c0 + J g + 1) + n(k^2 + 1)
/// Without dense connections the block inputs are c0, g, g, ..., g.
/// The refinement head adds 3 [S(S + 1) + S(k^2 + 1)].
inline std::size_t param_count(const NetworkConfig& cfg) {
    cfg.validate();
    const auto schedule = band_schedule(cfg.bands, cfg.stages);
    const std::size_t k2 = cfg.kernel_size * cfg.kernel_size;
    const std::size_t s = cfg.msi_bands, J = cfg.blocks_per_stage;
    std::size_t total = 0;
    for (std::size_t i = 0; i < cfg.stages; ++i) {
        const std::size_t n = schedule[i].size();
        const std::size_t prev = i == 0 ? 0 : schedule[i - 1].size();
        const std::size_t c0 = 2 * n + prev;
        const std::size_t g = cfg.growth_factor * n;
        total += n * (s + 1);
        if (cfg.dense) {
            total += J * g * (c0 + k2 + 2) + g * g * J * (J - 1) / 2;
            total += n * (c0 + J * g + 1) + n * (k2 + 1);
        } else {
            total += g * (c0 + 1) + (J - 1) * g * (g + 1) + J * g * (k2 + 1);
            total += n * (g + 1) + n * (k2 + 1);
        }
    }
    if (cfg.refinement) total += 3 * (cfg.bands * (cfg.bands + 1) + cfg.bands * (k2 + 1));
    return total;
}

// ---------------------------------------------------------------------------

/// Lifts the low-resolution cube to the MSI grid. Both supported modes keep
/// per-band means (bilinear exactly, bicubic approximately).
template <typename T>
Tensor4<T> upsample_lr_hsi(const Tensor4<T>& lr, std::size_t scale, UpsampleMode mode = UpsampleMode::bilinear) {
    switch (mode) {
        case UpsampleMode::bilinear: return bilinear_upsample(lr, scale);
        case UpsampleMode::bicubic: return bicubic_upsample(lr, scale);
    }
    throw ConfigError("upsample_lr_hsi: unsupported mode");
}

/// Three S -> S blocks (ReLU on the first two, no ZM-norm) plus a global
/// residual connection.
template <typename T>
class RefinementHead {
public:
    struct Cache {
        std::vector<typename S3Block<T>::Cache> blocks;
    };

    RefinementHead() = default;
    RefinementHead(std::size_t bands, std::size_t k) {
        for (std::size_t j = 1; j <= 3; ++j) {
            blocks_.emplace_back("refine.block" + std::to_string(j), bands, bands, k, false, j < 3);
        }
    }

    Tensor4<T> forward(const Tensor4<T>& coarse, Cache* cache = nullptr) const {
        if (cache) cache->blocks.assign(blocks_.size(), {});
        Tensor4<T> h = coarse;
        for (std::size_t j = 0; j < blocks_.size(); ++j) h = blocks_[j].forward(h, cache ? &cache->blocks[j] : nullptr);
        add_inplace(h, coarse);
        return h;
    }

    /// Gradient w.r.t. the head's input, including the residual path.
    Tensor4<T> backward(const Cache& c, const Tensor4<T>& grad_out) {
        Tensor4<T> g = grad_out;
        for (std::size_t j = blocks_.size(); j-- > 0;) g = blocks_[j].backward(c.blocks[j], g);
        add_inplace(g, grad_out);
        return g;
    }

    void append_signs(const Cache& c, std::vector<std::uint8_t>& out) const {
        for (std::size_t j = 0; j < blocks_.size(); ++j) blocks_[j].append_signs(c.blocks[j], out);
    }

    void init(Rng& rng) {
        for (auto& b : blocks_) b.init(rng);
    }

    template <typename List>
    void collect(List& out) {
        for (auto& b : blocks_) b.collect(out);
    }
    template <typename List>
    void collect(List& out) const {
        for (const auto& b : blocks_) b.collect(out);
    }

private:
    std::vector<S3Block<T>> blocks_;
};

template <typename T>
struct NetworkOutput {
    Tensor4<T> residual;  // zero-mean per band when ZM-norm is enabled
    Tensor4<T> coarse;    // upsampled LR + residual
    Tensor4<T> refined;   // coarse + refinement correction, or coarse
};

/// The full progressive zero-centric residual network.
template <typename T>
class Network {
public:
    struct Cache {
        std::vector<typename StageBody<T>::Cache> stages;
        typename RefinementHead<T>::Cache refinement;
    };

    explicit Network(const NetworkConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        schedule_ = band_schedule(cfg_.bands, cfg_.stages);
        for (std::size_t i = 0; i < cfg_.stages; ++i) {
            stages_.emplace_back("stage" + std::to_string(i + 1), stage_shape(cfg_, schedule_, i));
        }
        if (cfg_.refinement) refinement_ = RefinementHead<T>(cfg_.bands, cfg_.kernel_size);
        Rng rng(cfg_.seed);
        for (auto& s : stages_) s.init(rng);
        refinement_.init(rng);
    }

    const NetworkConfig& config() const { return cfg_; }
    const BandSchedule& schedule() const { return schedule_; }
    const std::vector<StageBody<T>>& stages() const { return stages_; }

    NetworkOutput<T> forward(const Tensor4<T>& z_up, const Tensor4<T>& msi, Cache* cache = nullptr) const {
        if (z_up.channels() != cfg_.bands || msi.channels() != cfg_.msi_bands) {
            throw ConfigError("network: expected " + std::to_string(cfg_.bands) + " HSI and " +
                              std::to_string(cfg_.msi_bands) + " MSI bands, got " + std::to_string(z_up.channels()) +
                              " and " + std::to_string(msi.channels()));
        }
        if (!z_up.dims().same_spatial(msi.dims())) {
            throw ConfigError("network: upsampled HSI " + to_string(z_up.dims()) + " and MSI " +
                              to_string(msi.dims()) + " disagree spatially");
        }
        if (cache) cache->stages.assign(stages_.size(), {});

        Tensor4<T> prev;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const Tensor4<T> decimated = gather_channels<T>(z_up, schedule_[i]);
            prev = stages_[i].forward(msi, decimated, i == 0 ? nullptr : &prev, cache ? &cache->stages[i] : nullptr);
        }

        NetworkOutput<T> out;
        out.coarse = add(z_up, prev);
        out.residual = std::move(prev);
        out.refined = cfg_.refinement ? refinement_.forward(out.coarse, cache ? &cache->refinement : nullptr)
                                      : out.coarse;
        return out;
    }

    /// Accumulates parameter gradients given cotangents of coarse and refined.
    void backward(const Cache& cache, const Tensor4<T>& grad_coarse, const Tensor4<T>& grad_refined) {
        Tensor4<T> g = grad_coarse;
        if (cfg_.refinement) {
            add_inplace(g, refinement_.backward(cache.refinement, grad_refined));
        } else {
            add_inplace(g, grad_refined);
        }
        for (std::size_t i = stages_.size(); i-- > 0;) {
            auto grads = stages_[i].backward(cache.stages[i], g);
            if (i > 0) g = std::move(*grads.prev);
        }
    }

    /// Sign pattern of every ReLU input recorded in the cache.
    std::vector<std::uint8_t> activation_signs(const Cache& cache) const {
        std::vector<std::uint8_t> out;
        for (std::size_t i = 0; i < stages_.size(); ++i) stages_[i].append_signs(cache.stages[i], out);
        if (cfg_.refinement) refinement_.append_signs(cache.refinement, out);
        return out;
    }

    /// Parameters in definition order.
    ParameterList<T> parameters() {
        ParameterList<T> out;
        for (auto& s : stages_) s.collect(out);
        refinement_.collect(out);
        return out;
    }
    ConstParameterList<T> parameters() const {
        ConstParameterList<T> out;
        for (const auto& s : stages_) s.collect(out);
        refinement_.collect(out);
        return out;
    }

    std::size_t num_parameters() const {
        std::size_t n = 0;
        for (const auto* p : parameters()) n += p->size();
        return n;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

private:
    NetworkConfig cfg_;
    BandSchedule schedule_;
    std::vector<StageBody<T>> stages_;
    RefinementHead<T> refinement_;
};

}  // namespace pzres
