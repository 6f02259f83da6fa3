// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pzres/ops.hpp"
#include "pzres/random.hpp"
#include "pzres/tensor.hpp"

namespace pzres {

// ---------------------------------------------------------------------------
// Zero-mean normalisation.

/// Subtracts the spatial mean of every (batch, channel) slice.
template <typename T>
Tensor4<T> zm_norm_forward(const Tensor4<T>& m) {
    const Dims d = m.dims();
    const auto means = spatial_mean(m);
    Tensor4<T> out(d);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            const double mu = means[b * d.channels + c];
            auto src = m.plane(b, c);
            auto dst = out.plane(b, c);
            for (std::size_t p = 0; p < src.size(); ++p) dst[p] = static_cast<T>(static_cast<double>(src[p]) - mu);
        }
    }
    return out;
}

/// dL/dm_k = dL/dZ_k - (1/HW) sum_j dL/dZ_j, per (batch, channel).
template <typename T>
Tensor4<T> zm_norm_backward(const Tensor4<T>& grad_out) {
    const Dims d = grad_out.dims();
    Tensor4<T> grad_in(d);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            auto g = grad_out.plane(b, c);
            const double shift = detail::shifted_mean(g);
            auto dst = grad_in.plane(b, c);
            for (std::size_t p = 0; p < g.size(); ++p) dst[p] = static_cast<T>(static_cast<double>(g[p]) - shift);
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Parameters.

template <typename T>
struct Parameter {
    std::string name;
    std::vector<T> value;
    std::vector<T> grad;

    Parameter() = default;
    Parameter(std::string n, std::size_t count) : name(std::move(n)), value(count), grad(count) {}

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    /// Uniform on [-bound, bound).
    void init_uniform(Rng& rng, double bound) {
        for (auto& v : value) v = static_cast<T>(rng.uniform(-bound, bound));
    }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

template <typename T>
using ConstParameterList = std::vector<const Parameter<T>*>;

/// Per-pixel channel mixing, Cout x Cin weights plus bias.
template <typename T>
class SpectralConv {
public:
    SpectralConv() = default;
    SpectralConv(const std::string& name, std::size_t in, std::size_t out)
        : in_(in), out_(out), weight_(name + ".weight", in * out), bias_(name + ".bias", out) {
        if (in == 0 || out == 0) throw ConfigError(name + ": channel counts must be >= 1");
    }

    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        if (x.channels() != in_) {
            throw ConfigError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                              std::to_string(x.channels()));
        }
        return conv_spectral<T>(x, weight_.value, bias_.value);
    }

    Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& grad_out) {
        return conv_spectral_backward<T>(x, weight_.value, grad_out, weight_.grad, bias_.grad);
    }

    void init(Rng& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(in_));
        weight_.init_uniform(rng, bound);
        bias_.init_uniform(rng, bound);
    }

    void collect(ParameterList<T>& out) { out.insert(out.end(), {&weight_, &bias_}); }
    void collect(ConstParameterList<T>& out) const { out.insert(out.end(), {&weight_, &bias_}); }

    static std::size_t param_count(std::size_t in, std::size_t out) { return out * in + out; }

private:
    std::size_t in_ = 0, out_ = 0;
    Parameter<T> weight_, bias_;
};

/// One k x k kernel and one bias per channel.
template <typename T>
class DepthwiseConv {
public:
    DepthwiseConv() = default;
    DepthwiseConv(const std::string& name, std::size_t channels, std::size_t k)
        : channels_(channels), k_(k), kernels_(name + ".weight", channels * k * k), bias_(name + ".bias", channels) {
        if (k % 2 == 0) throw ConfigError(name + ": spatial kernel size must be odd, got " + std::to_string(k));
    }

    std::size_t channels() const { return channels_; }
    std::size_t kernel_size() const { return k_; }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        if (x.channels() != channels_) throw ConfigError(kernels_.name + ": channel mismatch");
        return conv_spatial_depthwise<T>(x, kernels_.value, bias_.value, k_);
    }

    Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& grad_out) {
        return conv_spatial_depthwise_backward<T>(x, kernels_.value, grad_out, k_, kernels_.grad, bias_.grad);
    }

    void init(Rng& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(k_ * k_));
        kernels_.init_uniform(rng, bound);
        bias_.init_uniform(rng, bound);
    }

    void collect(ParameterList<T>& out) { out.insert(out.end(), {&kernels_, &bias_}); }
    void collect(ConstParameterList<T>& out) const { out.insert(out.end(), {&kernels_, &bias_}); }

    static std::size_t param_count(std::size_t channels, std::size_t k) { return channels * k * k + channels; }

private:
    std::size_t channels_ = 0, k_ = 1;
    Parameter<T> kernels_, bias_;
};

// ---------------------------------------------------------------------------
// Spectral-spatial separable ("3S") block.
//
//   [ZM] -> spectral conv -> [ReLU] -> [ZM] -> depthwise conv -> [ReLU]

template <typename T>
class S3Block {
public:
    struct Cache {
        Tensor4<T> spectral_in;
        Tensor4<T> spectral_pre;
        Tensor4<T> spatial_in;
        Tensor4<T> spatial_pre;
    };

    S3Block() = default;
    S3Block(const std::string& name, std::size_t in, std::size_t out, std::size_t k, bool zm_norm, bool activation)
        : spectral_(name + ".spectral", in, out),
          spatial_(name + ".spatial", out, k),
          zm_norm_(zm_norm),
          activation_(activation) {}

    std::size_t in_channels() const { return spectral_.in_channels(); }
    std::size_t out_channels() const { return spectral_.out_channels(); }
    bool zm_norm() const { return zm_norm_; }
    bool activation() const { return activation_; }

    Tensor4<T> forward(const Tensor4<T>& x, Cache* cache = nullptr) const {
        Cache local;
        Cache& c = cache ? *cache : local;
        c.spectral_in = zm_norm_ ? zm_norm_forward(x) : x;
        c.spectral_pre = spectral_.forward(c.spectral_in);
        Tensor4<T> h = activation_ ? relu(c.spectral_pre) : c.spectral_pre;
        c.spatial_in = zm_norm_ ? zm_norm_forward(h) : std::move(h);
        c.spatial_pre = spatial_.forward(c.spatial_in);
        return activation_ ? relu(c.spatial_pre) : c.spatial_pre;
    }

    /// Accumulates parameter gradients, returns d(loss)/d(x).
    Tensor4<T> backward(const Cache& c, const Tensor4<T>& grad_out) {
        Tensor4<T> g = activation_ ? relu_backward(c.spatial_pre, grad_out) : grad_out;
        g = spatial_.backward(c.spatial_in, g);
        if (zm_norm_) g = zm_norm_backward(g);
        if (activation_) g = relu_backward(c.spectral_pre, g);
        g = spectral_.backward(c.spectral_in, g);
        return zm_norm_ ? zm_norm_backward(g) : g;
    }

    /// Pre-activation sign bits, used to detect finite-difference steps that
    /// cross a ReLU kink.
    void append_signs(const Cache& c, std::vector<std::uint8_t>& out) const {
        if (!activation_) return;
        for (T v : c.spectral_pre.values()) out.push_back(v > T(0));
        for (T v : c.spatial_pre.values()) out.push_back(v > T(0));
    }

    void init(Rng& rng) {
        spectral_.init(rng);
        spatial_.init(rng);
    }

    template <typename List>
    void collect(List& out) {
        spectral_.collect(out);
        spatial_.collect(out);
    }
    template <typename List>
    void collect(List& out) const {
        spectral_.collect(out);
        spatial_.collect(out);
    }

    static std::size_t param_count(std::size_t in, std::size_t out, std::size_t k) {
        return SpectralConv<T>::param_count(in, out) + DepthwiseConv<T>::param_count(out, k);
    }

private:
    SpectralConv<T> spectral_;
    DepthwiseConv<T> spatial_;
    bool zm_norm_ = true;
    bool activation_ = true;
};

// ---------------------------------------------------------------------------
// One progressive stage.

struct StageShape {
    std::size_t msi_bands = 3;       // s
    std::size_t out_channels = 8;    // n: decimated band count and stage output width
    std::size_t prev_channels = 0;   // previous stage output width, 0 for the first stage
    std::size_t growth = 16;         // g
    std::size_t blocks = 7;          // densely connected blocks before the final block
    std::size_t kernel_size = 3;
    bool zm_norm = true;
    bool dense = true;               // dense connections and the identity skip

    /// Width of the initial concatenation [lift, decimated bands, previous output].
    std::size_t initial_width() const { return 2 * out_channels + prev_channels; }

    /// Input width of block j (1-based); the final block is j = blocks + 1.
    std::size_t block_input_width(std::size_t j) const {
        if (dense) return initial_width() + (j - 1) * growth;
        return j == 1 ? initial_width() : growth;
    }
};

template <typename T>
class StageBody {
public:
    struct Cache {
        Tensor4<T> msi;
        Tensor4<T> lifted;
        std::vector<Tensor4<T>> block_inputs;
        std::vector<typename S3Block<T>::Cache> blocks;
        Tensor4<T> final_input;
        typename S3Block<T>::Cache final_block;
    };

    struct InputGrads {
        Tensor4<T> msi;
        Tensor4<T> decimated;
        std::optional<Tensor4<T>> prev;
    };

    StageBody() = default;
    StageBody(const std::string& name, const StageShape& shape) : shape_(shape) {
        if (shape.msi_bands == 0 || shape.out_channels == 0 || shape.growth == 0 || shape.blocks == 0) {
            throw ConfigError(name + ": stage widths and block count must be >= 1");
        }
        lift_ = SpectralConv<T>(name + ".lift", shape.msi_bands, shape.out_channels);
        for (std::size_t j = 1; j <= shape.blocks; ++j) {
            blocks_.emplace_back(name + ".block" + std::to_string(j), shape.block_input_width(j), shape.growth,
                                 shape.kernel_size, shape.zm_norm, true);
        }
        final_ = S3Block<T>(name + ".final", shape.block_input_width(shape.blocks + 1), shape.out_channels,
                            shape.kernel_size, shape.zm_norm, false);
    }

    const StageShape& shape() const { return shape_; }
    const std::vector<S3Block<T>>& blocks() const { return blocks_; }
    const S3Block<T>& final_block() const { return final_; }

    Tensor4<T> forward(const Tensor4<T>& msi, const Tensor4<T>& decimated, const Tensor4<T>* prev,
                       Cache* cache = nullptr) const {
        check_inputs(msi, decimated, prev);
        Cache local;
        Cache& c = cache ? *cache : local;
        c.msi = msi;
        c.lifted = lift_.forward(msi);
        c.block_inputs.clear();
        c.blocks.assign(blocks_.size(), {});

        Tensor4<T> features = prev ? concat_channels<T>({&c.lifted, &decimated, prev})
                                   : concat_channels<T>({&c.lifted, &decimated});
        for (std::size_t j = 0; j < blocks_.size(); ++j) {
            c.block_inputs.push_back(features);
            Tensor4<T> out = blocks_[j].forward(features, &c.blocks[j]);
            features = shape_.dense ? concat_channels<T>({&features, &out}) : std::move(out);
        }
        c.final_input = std::move(features);
        Tensor4<T> residual = final_.forward(c.final_input, &c.final_block);
        if (shape_.dense) add_inplace(residual, c.lifted);
        return shape_.zm_norm ? zm_norm_forward(residual) : residual;
    }

    InputGrads backward(const Cache& c, const Tensor4<T>& grad_out) {
        Tensor4<T> g = shape_.zm_norm ? zm_norm_backward(grad_out) : grad_out;
        Tensor4<T> grad_lifted = shape_.dense ? g : Tensor4<T>(c.lifted.dims());
        Tensor4<T> grad_features = final_.backward(c.final_block, g);

        for (std::size_t j = blocks_.size(); j-- > 0;) {
            const std::size_t in_width = c.block_inputs[j].channels();
            if (shape_.dense) {
                Tensor4<T> grad_block_out = slice_channels(grad_features, in_width, shape_.growth);
                Tensor4<T> grad_in = slice_channels(grad_features, 0, in_width);
                add_inplace(grad_in, blocks_[j].backward(c.blocks[j], grad_block_out));
                grad_features = std::move(grad_in);
            } else {
                grad_features = blocks_[j].backward(c.blocks[j], grad_features);
            }
        }

        const std::size_t n = shape_.out_channels;
        add_inplace(grad_lifted, slice_channels(grad_features, 0, n));
        InputGrads grads{lift_.backward(c.msi, grad_lifted), slice_channels(grad_features, n, n), std::nullopt};
        if (shape_.prev_channels > 0) grads.prev = slice_channels(grad_features, 2 * n, shape_.prev_channels);
        return grads;
    }

    void append_signs(const Cache& c, std::vector<std::uint8_t>& out) const {
        for (std::size_t j = 0; j < blocks_.size(); ++j) blocks_[j].append_signs(c.blocks[j], out);
        final_.append_signs(c.final_block, out);
    }

    void init(Rng& rng) {
        lift_.init(rng);
        for (auto& b : blocks_) b.init(rng);
        final_.init(rng);
    }

    template <typename List>
    void collect(List& out) {
        lift_.collect(out);
        for (auto& b : blocks_) b.collect(out);
        final_.collect(out);
    }
    template <typename List>
    void collect(List& out) const {
        lift_.collect(out);
        for (const auto& b : blocks_) b.collect(out);
        final_.collect(out);
    }

private:
    void check_inputs(const Tensor4<T>& msi, const Tensor4<T>& decimated, const Tensor4<T>* prev) const {
        if (!msi.dims().same_spatial(decimated.dims()) || (prev && !msi.dims().same_spatial(prev->dims()))) {
            throw ConfigError("stage: inputs disagree in batch or spatial extent");
        }
        if (msi.channels() != shape_.msi_bands || decimated.channels() != shape_.out_channels) {
            throw ConfigError("stage: expected " + std::to_string(shape_.msi_bands) + " MSI and " +
                              std::to_string(shape_.out_channels) + " decimated channels, got " +
                              std::to_string(msi.channels()) + " and " + std::to_string(decimated.channels()));
        }
        const std::size_t prev_channels = prev ? prev->channels() : 0;
        if (prev_channels != shape_.prev_channels) {
            throw ConfigError("stage: previous-stage input has " + std::to_string(prev_channels) +
                              " channels, expected " + std::to_string(shape_.prev_channels));
        }
    }

    StageShape shape_;
    SpectralConv<T> lift_;
    std::vector<S3Block<T>> blocks_;
    S3Block<T> final_;
};

}  // namespace pzres
