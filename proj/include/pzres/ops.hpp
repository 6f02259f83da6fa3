// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives over Tensor4. Every forward op has an explicit
// vector-Jacobian counterpart named *_backward. Backward functions that
// produce parameter gradients accumulate (+=) into the spans they are given.
//
// Reductions use a fixed loop nesting so reruns are bit-identical.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pzres/error.hpp"
#include "pzres/tensor.hpp"

namespace pzres {

/// A value and its cotangent, always of identical extents.
template <typename T>
struct GradPair {
    Tensor4<T> value;
    Tensor4<T> grad;

    explicit GradPair(Tensor4<T> v) : value(std::move(v)), grad(value.dims()) {}
    GradPair(Tensor4<T> v, Tensor4<T> g) : value(std::move(v)), grad(std::move(g)) {
        if (!(value.dims() == grad.dims())) throw ConfigError("GradPair: grad dims differ from value dims");
    }
};

namespace detail {

inline constexpr std::size_t kPixelTile = 512;

/// Dot product with eight interleaved partial sums combined in a fixed order.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    std::array<T, 8> acc{};
    std::size_t q = 0;
    for (; q + 8 <= n; q += 8) {
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[q + j] * b[q + j];
    }
    for (std::size_t j = 0; q < n; ++q, ++j) acc[j] += a[q] * b[q];
    return ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
}

template <typename T>
T sum(const T* a, std::size_t n) {
    std::array<T, 8> acc{};
    std::size_t q = 0;
    for (; q + 8 <= n; q += 8) {
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[q + j];
    }
    for (std::size_t j = 0; q < n; ++q, ++j) acc[j] += a[q];
    return ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t q = 0; q < n; ++q) y[q] += alpha * x[q];
}

inline void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spectral (1x1, channel-mixing) convolution.
// weight is row-major Cout x Cin.

template <typename T>
Tensor4<T> conv_spectral(const Tensor4<T>& in, std::span<const T> weight, std::span<const T> bias) {
    const std::size_t cout = bias.size();
    const std::size_t cin = in.channels();
    detail::require(cout > 0 && weight.size() == cout * cin, "conv_spectral: weight is not Cout x Cin");

    const Dims d = in.dims();
    Tensor4<T> out(Dims{d.batch, cout, d.height, d.width});
    const std::size_t plane = d.plane();
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t p0 = 0; p0 < plane; p0 += detail::kPixelTile) {
            const std::size_t n = std::min(detail::kPixelTile, plane - p0);
            for (std::size_t o = 0; o < cout; ++o) {
                T* dst = out.plane(b, o).data() + p0;
                std::fill(dst, dst + n, bias[o]);
                const T* wrow = weight.data() + o * cin;
                for (std::size_t i = 0; i < cin; ++i) {
                    detail::axpy(wrow[i], in.plane(b, i).data() + p0, dst, n);
                }
            }
        }
    }
    return out;
}

/// Returns d(loss)/d(input); accumulates weight and bias gradients.
template <typename T>
Tensor4<T> conv_spectral_backward(const Tensor4<T>& in, std::span<const T> weight, const Tensor4<T>& grad_out,
                                  std::span<T> grad_weight, std::span<T> grad_bias) {
    const std::size_t cin = in.channels();
    const std::size_t cout = grad_out.channels();
    detail::require(weight.size() == cout * cin && grad_weight.size() == weight.size() && grad_bias.size() == cout,
                    "conv_spectral_backward: parameter shape mismatch");
    detail::require(in.dims().same_spatial(grad_out.dims()), "conv_spectral_backward: spatial mismatch");

    const Dims d = in.dims();
    const std::size_t plane = d.plane();
    Tensor4<T> grad_in(d);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t p0 = 0; p0 < plane; p0 += detail::kPixelTile) {
            const std::size_t n = std::min(detail::kPixelTile, plane - p0);
            for (std::size_t i = 0; i < cin; ++i) {
                T* dst = grad_in.plane(b, i).data() + p0;
                for (std::size_t o = 0; o < cout; ++o) {
                    detail::axpy(weight[o * cin + i], grad_out.plane(b, o).data() + p0, dst, n);
                }
            }
        }
        for (std::size_t o = 0; o < cout; ++o) {
            const T* g = grad_out.plane(b, o).data();
            grad_bias[o] += detail::sum(g, plane);
            for (std::size_t i = 0; i < cin; ++i) {
                grad_weight[o * cin + i] += detail::dot(g, in.plane(b, i).data(), plane);
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Depthwise spatial convolution: one k x k cross-correlation per channel,
// zero padding of k/2 so H x W is preserved. kernels is C x k x k.

template <typename T>
Tensor4<T> conv_spatial_depthwise(const Tensor4<T>& in, std::span<const T> kernels, std::span<const T> bias,
                                  std::size_t k) {
    detail::require(k % 2 == 1, "conv_spatial_depthwise: kernel size must be odd");
    const Dims d = in.dims();
    detail::require(kernels.size() == d.channels * k * k && bias.size() == d.channels,
                    "conv_spatial_depthwise: parameter shape mismatch");
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.height);
    const auto W = static_cast<std::ptrdiff_t>(d.width);

    Tensor4<T> out(d);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            const T* src = in.plane(b, c).data();
            T* dst = out.plane(b, c).data();
            std::fill(dst, dst + d.plane(), bias[c]);
            const T* ker = kernels.data() + c * k * k;
            for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(k); ++u) {
                const std::ptrdiff_t dy = u - pad;
                const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(H, H - dy);
                for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(k); ++v) {
                    const std::ptrdiff_t dx = v - pad;
                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(W, W - dx);
                    if (x1 <= x0) continue;
                    const T w = ker[u * static_cast<std::ptrdiff_t>(k) + v];
                    for (std::ptrdiff_t y = y0; y < y1; ++y) {
                        detail::axpy(w, src + (y + dy) * W + x0 + dx, dst + y * W + x0,
                                     static_cast<std::size_t>(x1 - x0));
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor4<T> conv_spatial_depthwise_backward(const Tensor4<T>& in, std::span<const T> kernels,
                                           const Tensor4<T>& grad_out, std::size_t k, std::span<T> grad_kernels,
                                           std::span<T> grad_bias) {
    detail::require(k % 2 == 1, "conv_spatial_depthwise_backward: kernel size must be odd");
    const Dims d = in.dims();
    detail::require(grad_out.dims() == d, "conv_spatial_depthwise_backward: grad dims mismatch");
    detail::require(kernels.size() == d.channels * k * k && grad_kernels.size() == kernels.size() &&
                        grad_bias.size() == d.channels,
                    "conv_spatial_depthwise_backward: parameter shape mismatch");
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.height);
    const auto W = static_cast<std::ptrdiff_t>(d.width);
    const auto K = static_cast<std::ptrdiff_t>(k);

    Tensor4<T> grad_in(d);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            const T* src = in.plane(b, c).data();
            const T* g = grad_out.plane(b, c).data();
            T* gin = grad_in.plane(b, c).data();
            const T* ker = kernels.data() + c * k * k;
            T* gker = grad_kernels.data() + c * k * k;
            grad_bias[c] += detail::sum(g, d.plane());
            for (std::ptrdiff_t u = 0; u < K; ++u) {
                const std::ptrdiff_t dy = u - pad;
                const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(H, H - dy);
                for (std::ptrdiff_t v = 0; v < K; ++v) {
                    const std::ptrdiff_t dx = v - pad;
                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(W, W - dx);
                    if (x1 <= x0) continue;
                    const auto n = static_cast<std::size_t>(x1 - x0);
                    const T w = ker[u * K + v];
                    T acc = T(0);
                    for (std::ptrdiff_t y = y0; y < y1; ++y) {
                        const T* grow = g + y * W + x0;
                        detail::axpy(w, grow, gin + (y + dy) * W + x0 + dx, n);
                        acc += detail::dot(grow, src + (y + dy) * W + x0 + dx, n);
                    }
                    gker[u * K + v] += acc;
                }
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Elementwise.

template <typename T>
Tensor4<T> relu(const Tensor4<T>& in) {
    Tensor4<T> out(in.dims());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
    return out;
}

/// Gradient passes where the forward input was strictly positive.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& in, const Tensor4<T>& grad_out) {
    detail::require(in.dims() == grad_out.dims(), "relu_backward: dims mismatch");
    Tensor4<T> grad_in(in.dims());
    for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > T(0) ? grad_out[i] : T(0);
    return grad_in;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
    detail::require(a.dims() == b.dims(), "add: dims mismatch");
    Tensor4<T> out(a.dims());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
void add_inplace(Tensor4<T>& acc, const Tensor4<T>& x) {
    detail::require(acc.dims() == x.dims(), "add_inplace: dims mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

// ---------------------------------------------------------------------------
// Channel concatenation and its inverse.

template <typename T>
Tensor4<T> concat_channels(std::span<const Tensor4<T>* const> inputs) {
    detail::require(!inputs.empty(), "concat_channels: no inputs");
    const Dims first = inputs.front()->dims();
    std::size_t channels = 0;
    for (const auto* t : inputs) {
        detail::require(t->dims().same_spatial(first), "concat_channels: batch/spatial mismatch");
        channels += t->channels();
    }
    Tensor4<T> out(Dims{first.batch, channels, first.height, first.width});
    const std::size_t plane = first.plane();
    for (std::size_t b = 0; b < first.batch; ++b) {
        T* dst = out.plane(b, 0).data();
        for (const auto* t : inputs) {
            const T* src = t->plane(b, 0).data();
            dst = std::copy(src, src + t->channels() * plane, dst);
        }
    }
    return out;
}

template <typename T>
Tensor4<T> concat_channels(std::initializer_list<const Tensor4<T>*> inputs) {
    return concat_channels<T>(std::span<const Tensor4<T>* const>(inputs.begin(), inputs.size()));
}

/// Channels [begin, begin + count) of t.
template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& t, std::size_t begin, std::size_t count) {
    detail::require(count > 0 && begin + count <= t.channels(), "slice_channels: range out of bounds");
    const Dims d = t.dims();
    Tensor4<T> out(Dims{d.batch, count, d.height, d.width});
    for (std::size_t b = 0; b < d.batch; ++b) {
        const T* src = t.plane(b, begin).data();
        std::copy(src, src + count * d.plane(), out.plane(b, 0).data());
    }
    return out;
}

/// Gather an arbitrary list of channels (used for band decimation).
template <typename T>
Tensor4<T> gather_channels(const Tensor4<T>& t, std::span<const std::size_t> channels) {
    detail::require(!channels.empty(), "gather_channels: empty index list");
    const Dims d = t.dims();
    Tensor4<T> out(Dims{d.batch, channels.size(), d.height, d.width});
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t j = 0; j < channels.size(); ++j) {
            detail::require(channels[j] < d.channels, "gather_channels: index out of range");
            auto src = t.plane(b, channels[j]);
            std::copy(src.begin(), src.end(), out.plane(b, j).begin());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-(batch, channel) spatial mean, accumulated in double relative to the
// first sample so that constant slices give their value exactly.

namespace detail {

template <typename T>
double shifted_mean(std::span<const T> values) {
    const double ref = static_cast<double>(values.front());
    double acc = 0.0;
    for (T v : values) acc += static_cast<double>(v) - ref;
    return ref + acc / static_cast<double>(values.size());
}

}  // namespace detail

template <typename T>
std::vector<double> spatial_mean(const Tensor4<T>& in) {
    const Dims d = in.dims();
    std::vector<double> means(d.batch * d.channels);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) means[b * d.channels + c] = detail::shifted_mean(in.plane(b, c));
    }
    return means;
}

// ---------------------------------------------------------------------------
// Interpolating upsamplers. Source coordinate of destination index d is
// (d + 0.5) / r - 0.5 (half-pixel centres); out-of-range taps clamp to the
// border sample.

namespace detail {

struct LinearTap {
    std::size_t i0, i1;
    double w1;  // weight of i1; i0 receives 1 - w1
};

inline std::vector<LinearTap> linear_taps(std::size_t n, std::size_t r) {
    std::vector<LinearTap> taps(n * r);
    for (std::size_t dst = 0; dst < n * r; ++dst) {
        double src = (static_cast<double>(dst) + 0.5) / static_cast<double>(r) - 0.5;
        src = std::max(src, 0.0);
        auto i0 = std::min(static_cast<std::size_t>(src), n - 1);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        taps[dst] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
    }
    return taps;
}

}  // namespace detail

template <typename T>
Tensor4<T> bilinear_upsample(const Tensor4<T>& in, std::size_t r) {
    detail::require(r >= 1, "bilinear_upsample: scale must be >= 1");
    const Dims d = in.dims();
    const auto ty = detail::linear_taps(d.height, r);
    const auto tx = detail::linear_taps(d.width, r);
    Tensor4<T> out(Dims{d.batch, d.channels, d.height * r, d.width * r});
    const std::size_t W = d.width, OW = d.width * r;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            const T* src = in.plane(b, c).data();
            T* dst = out.plane(b, c).data();
            for (std::size_t y = 0; y < ty.size(); ++y) {
                const T wy1 = static_cast<T>(ty[y].w1);
                const T* r0 = src + ty[y].i0 * W;
                const T* r1 = src + ty[y].i1 * W;
                for (std::size_t x = 0; x < tx.size(); ++x) {
                    // a + w (b - a) reproduces equal taps exactly, so constant bands stay constant.
                    const T wx1 = static_cast<T>(tx[x].w1);
                    const std::size_t a = tx[x].i0, e = tx[x].i1;
                    const T top = r0[a] + wx1 * (r0[e] - r0[a]);
                    const T bottom = r1[a] + wx1 * (r1[e] - r1[a]);
                    dst[y * OW + x] = top + wy1 * (bottom - top);
                }
            }
        }
    }
    return out;
}

/// Transpose of bilinear_upsample: scatters each output cotangent back onto
/// the (up to four) source pixels with the forward weights.
template <typename T>
Tensor4<T> bilinear_upsample_backward(const Tensor4<T>& grad_out, std::size_t r) {
    detail::require(r >= 1, "bilinear_upsample_backward: scale must be >= 1");
    const Dims go = grad_out.dims();
    detail::require(go.height % r == 0 && go.width % r == 0, "bilinear_upsample_backward: dims not divisible by r");
    const Dims d{go.batch, go.channels, go.height / r, go.width / r};
    const auto ty = detail::linear_taps(d.height, r);
    const auto tx = detail::linear_taps(d.width, r);
    Tensor4<T> grad_in(d);
    const std::size_t W = d.width, OW = go.width;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            const T* g = grad_out.plane(b, c).data();
            T* dst = grad_in.plane(b, c).data();
            for (std::size_t y = 0; y < ty.size(); ++y) {
                const T wy1 = static_cast<T>(ty[y].w1), wy0 = T(1) - wy1;
                T* r0 = dst + ty[y].i0 * W;
                T* r1 = dst + ty[y].i1 * W;
                for (std::size_t x = 0; x < tx.size(); ++x) {
                    const T wx1 = static_cast<T>(tx[x].w1), wx0 = T(1) - wx1;
                    const std::size_t a = tx[x].i0, e = tx[x].i1;
                    const T gv = g[y * OW + x];
                    r0[a] += wy0 * wx0 * gv;
                    r0[e] += wy0 * wx1 * gv;
                    r1[a] += wy1 * wx0 * gv;
                    r1[e] += wy1 * wx1 * gv;
                }
            }
        }
    }
    return grad_in;
}

namespace detail {

struct CubicTap {
    std::array<std::size_t, 4> idx;
    std::array<double, 4> w;
};

/// Keys cubic convolution kernel with a = -0.75.
inline std::vector<CubicTap> cubic_taps(std::size_t n, std::size_t r) {
    constexpr double a = -0.75;
    auto near = [](double t) { return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0; };
    auto far = [](double t) { return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a; };
    std::vector<CubicTap> taps(n * r);
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    for (std::size_t dst = 0; dst < n * r; ++dst) {
        const double src = (static_cast<double>(dst) + 0.5) / static_cast<double>(r) - 0.5;
        const double base = std::floor(src);
        const double t = src - base;
        const auto i = static_cast<std::ptrdiff_t>(base);
        CubicTap tap{};
        for (std::ptrdiff_t j = 0; j < 4; ++j) {
            tap.idx[j] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i - 1 + j, 0, last));
        }
        tap.w = {far(t + 1.0), near(t), near(1.0 - t), far(2.0 - t)};
        taps[dst] = tap;
    }
    return taps;
}

}  // namespace detail

/// Forward-only bicubic alternative for the input upsampling stage.
template <typename T>
Tensor4<T> bicubic_upsample(const Tensor4<T>& in, std::size_t r) {
    detail::require(r >= 1, "bicubic_upsample: scale must be >= 1");
    const Dims d = in.dims();
    const auto ty = detail::cubic_taps(d.height, r);
    const auto tx = detail::cubic_taps(d.width, r);
    Tensor4<T> out(Dims{d.batch, d.channels, d.height * r, d.width * r});
    const std::size_t W = d.width, OW = d.width * r;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            const T* src = in.plane(b, c).data();
            T* dst = out.plane(b, c).data();
            for (std::size_t y = 0; y < ty.size(); ++y) {
                for (std::size_t x = 0; x < tx.size(); ++x) {
                    double acc = 0.0;
                    for (std::size_t u = 0; u < 4; ++u) {
                        double row = 0.0;
                        for (std::size_t v = 0; v < 4; ++v) {
                            row += tx[x].w[v] * static_cast<double>(src[ty[y].idx[u] * W + tx[x].idx[v]]);
                        }
                        acc += ty[y].w[u] * row;
                    }
                    dst[y * OW + x] = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

}  // namespace pzres
