// SPDX-License-Identifier: Apache-2.0
//
// Full-reference quality metrics for hyperspectral reconstructions. Every
// (batch, channel) plane is treated as one spectral band; values are expected
// in [0, 1].
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pzres/error.hpp"
#include "pzres/tensor.hpp"

namespace pzres {

inline constexpr double kPsnrCap = 100.0;
inline constexpr double kPsnrMseFloor = 1e-10;

namespace detail {

template <typename T>
void require_same_dims(const Tensor4<T>& a, const Tensor4<T>& b, const char* what) {
    if (!(a.dims() == b.dims())) {
        throw InputError(std::string(what) + ": dimension mismatch " + to_string(a.dims()) + " vs " +
                         to_string(b.dims()));
    }
}

template <typename T>
std::vector<double> band_mse(const Tensor4<T>& x, const Tensor4<T>& y) {
    const Dims d = x.dims();
    std::vector<double> mse;
    mse.reserve(d.batch * d.channels);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            auto p = x.plane(b, c);
            auto q = y.plane(b, c);
            double acc = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double e = static_cast<double>(p[i]) - static_cast<double>(q[i]);
                acc += e * e;
            }
            mse.push_back(acc / static_cast<double>(p.size()));
        }
    }
    return mse;
}

/// Symmetric reflection (edge sample repeated) valid for any offset.
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

}  // namespace detail

/// Per-band PSNR in dB (peak 1); bands with MSE below 1e-10 score the cap.
template <typename T>
std::vector<double> psnr_per_band(const Tensor4<T>& x, const Tensor4<T>& y) {
    detail::require_same_dims(x, y, "psnr");
    auto mse = detail::band_mse(x, y);
    for (double& m : mse) m = m < kPsnrMseFloor ? kPsnrCap : -10.0 * std::log10(m);
    return mse;
}

/// Mean of the per-band PSNR values.
template <typename T>
double psnr(const Tensor4<T>& x, const Tensor4<T>& y) {
    const auto bands = psnr_per_band(x, y);
    double acc = 0.0;
    for (double v : bands) acc += v;
    return acc / static_cast<double>(bands.size());
}

// ---------------------------------------------------------------------------
// SSIM with an 11 x 11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03 and
// dynamic range 1. Windows are evaluated at every fully-inside position; a
// band smaller than the window is evaluated at every pixel with reflected
// borders instead.

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

inline std::vector<double> ssim_window_taps(const SsimParams& p) {
    std::vector<double> taps(p.window);
    const double c = (static_cast<double>(p.window) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < p.window; ++i) {
        const double t = static_cast<double>(i) - c;
        taps[i] = std::exp(-t * t / (2.0 * p.sigma * p.sigma));
        total += taps[i];
    }
    for (double& t : taps) t /= total;
    return taps;
}

template <typename T>
double ssim_band(std::span<const T> x, std::span<const T> y, std::size_t height, std::size_t width,
                 const SsimParams& p = {}) {
    const auto taps = ssim_window_taps(p);
    const auto H = static_cast<std::ptrdiff_t>(height), W = static_cast<std::ptrdiff_t>(width);
    const auto win = static_cast<std::ptrdiff_t>(p.window);
    const bool valid = H >= win && W >= win;
    // Output grid: top-left window origins (valid) or window centres (reflected).
    const std::ptrdiff_t oh = valid ? H - win + 1 : H, ow = valid ? W - win + 1 : W;
    const std::ptrdiff_t offset = valid ? 0 : -(win / 2);
    auto at = [&](std::span<const T> img, std::ptrdiff_t yy, std::ptrdiff_t xx) {
        return static_cast<double>(img[detail::reflect_index(yy, H) * W + detail::reflect_index(xx, W)]);
    };

    // Horizontal pass over the rows needed, then vertical pass.
    const std::ptrdiff_t rows = oh + win - 1;
    std::vector<double> hx(rows * ow), hy(rows * ow), hxx(rows * ow), hyy(rows * ow), hxy(rows * ow);
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::ptrdiff_t yy = r + offset;
        for (std::ptrdiff_t c = 0; c < ow; ++c) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (std::ptrdiff_t t = 0; t < win; ++t) {
                const double w = taps[static_cast<std::size_t>(t)];
                const double a = at(x, yy, c + offset + t), b = at(y, yy, c + offset + t);
                sx += w * a;
                sy += w * b;
                sxx += w * a * a;
                syy += w * b * b;
                sxy += w * a * b;
            }
            const std::ptrdiff_t i = r * ow + c;
            hx[i] = sx, hy[i] = sy, hxx[i] = sxx, hyy[i] = syy, hxy[i] = sxy;
        }
    }

    const double c1 = (p.k1 * p.range) * (p.k1 * p.range);
    const double c2 = (p.k2 * p.range) * (p.k2 * p.range);
    double total = 0.0;
    for (std::ptrdiff_t r = 0; r < oh; ++r) {
        for (std::ptrdiff_t c = 0; c < ow; ++c) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (std::ptrdiff_t t = 0; t < win; ++t) {
                const double w = taps[static_cast<std::size_t>(t)];
                const std::ptrdiff_t i = (r + t) * ow + c;
                mx += w * hx[i];
                my += w * hy[i];
                mxx += w * hxx[i];
                myy += w * hyy[i];
                mxy += w * hxy[i];
            }
            const double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    return total / static_cast<double>(oh * ow);
}

/// Mean SSIM over bands.
template <typename T>
double assim(const Tensor4<T>& x, const Tensor4<T>& y, const SsimParams& p = {}) {
    detail::require_same_dims(x, y, "assim");
    const Dims d = x.dims();
    double acc = 0.0;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            acc += ssim_band<T>(x.plane(b, c), y.plane(b, c), d.height, d.width, p);
        }
    }
    return acc / static_cast<double>(d.batch * d.channels);
}

// ---------------------------------------------------------------------------

inline constexpr double kSamEpsilon = 1e-8;

/// Mean spectral angle in degrees. Pixels where both spectra vanish count as
/// zero angle; otherwise the norm product is floored at 1e-8.
template <typename T>
double sam(const Tensor4<T>& x, const Tensor4<T>& y) {
    detail::require_same_dims(x, y, "sam");
    const Dims d = x.dims();
    const std::size_t plane = d.plane();
    double total = 0.0;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t p = 0; p < plane; ++p) {
            double dot = 0.0, nx = 0.0, ny = 0.0;
            for (std::size_t c = 0; c < d.channels; ++c) {
                const double a = static_cast<double>(x.plane(b, c)[p]);
                const double e = static_cast<double>(y.plane(b, c)[p]);
                dot += a * e;
                nx += a * a;
                ny += e * e;
            }
            if (nx == 0.0 && ny == 0.0) continue;
            const double denom = std::max(std::sqrt(nx * ny), kSamEpsilon);
            total += std::acos(std::clamp(dot / denom, -1.0, 1.0));
        }
    }
    return total / static_cast<double>(d.batch * plane) * 180.0 / std::numbers::pi;
}

// ---------------------------------------------------------------------------

enum class ErgasMean { reconstruction, ground_truth };

inline constexpr double kErgasMeanFloor = 1e-8;

struct ErgasResult {
    double value = 0.0;
    std::vector<std::size_t> stabilized_bands;  // bands whose mean fell below 1e-8
};

/// (100 / r) sqrt(mean_k MSE_k / mu_k^2). mu_k is the band mean of the
/// reconstruction (second argument) unless ground_truth is requested, so the
/// metric is not symmetric in its arguments.
template <typename T>
ErgasResult ergas_detailed(const Tensor4<T>& x, const Tensor4<T>& x_rec, double scale,
                           ErgasMean mean_source = ErgasMean::reconstruction) {
    detail::require_same_dims(x, x_rec, "ergas");
    if (!(scale >= 1.0)) throw ConfigError("ergas: scale must be >= 1");
    const auto mse = detail::band_mse(x, x_rec);
    const Tensor4<T>& ref = mean_source == ErgasMean::reconstruction ? x_rec : x;
    const Dims d = x.dims();
    ErgasResult res;
    double acc = 0.0;
    for (std::size_t k = 0; k < mse.size(); ++k) {
        double mu = 0.0;
        for (T v : ref.plane(k / d.channels, k % d.channels)) mu += static_cast<double>(v);
        mu /= static_cast<double>(d.plane());
        if (std::abs(mu) < kErgasMeanFloor) {
            res.stabilized_bands.push_back(k);
            mu = kErgasMeanFloor;
        }
        acc += mse[k] / (mu * mu);
    }
    res.value = 100.0 / scale * std::sqrt(acc / static_cast<double>(mse.size()));
    return res;
}

template <typename T>
double ergas(const Tensor4<T>& x, const Tensor4<T>& x_rec, double scale,
             ErgasMean mean_source = ErgasMean::reconstruction) {
    return ergas_detailed(x, x_rec, scale, mean_source).value;
}

// ---------------------------------------------------------------------------

struct MetricReport {
    double psnr = 0.0;   // dB
    double assim = 0.0;
    double sam = 0.0;    // degrees
    double ergas = 0.0;
    std::vector<double> band_psnr;
    std::vector<std::size_t> ergas_stabilized_bands;
};

template <typename T>
MetricReport evaluate(const Tensor4<T>& gt, const Tensor4<T>& pred, double scale,
                      ErgasMean mean_source = ErgasMean::reconstruction) {
    MetricReport r;
    r.band_psnr = psnr_per_band(gt, pred);
    for (double v : r.band_psnr) r.psnr += v;
    r.psnr /= static_cast<double>(r.band_psnr.size());
    r.assim = assim(gt, pred);
    r.sam = sam(gt, pred);
    auto e = ergas_detailed(gt, pred, scale, mean_source);
    r.ergas = e.value;
    r.ergas_stabilized_bands = std::move(e.stabilized_bands);
    return r;
}

inline std::string format_report(const MetricReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "PSNR  " << r.psnr << " dB\n"
       << "ASSIM " << r.assim << "\n"
       << "SAM   " << r.sam << " deg\n"
       << "ERGAS " << r.ergas << "\n";
    if (!r.ergas_stabilized_bands.empty()) {
        os << "ERGAS used a floored mean for " << r.ergas_stabilized_bands.size() << " band(s)\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------

struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;
};

/// pixel = clamp(round(gain * |x - y| * 255), 0, 255)
template <typename T>
GrayImage error_map(std::span<const T> x, std::span<const T> y, std::size_t height, std::size_t width,
                    double gain = 1.0) {
    if (x.size() != y.size() || x.size() != height * width) throw InputError("error_map: dimension mismatch");
    GrayImage img{height, width, std::vector<std::uint8_t>(x.size())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = gain * std::abs(static_cast<double>(x[i]) - static_cast<double>(y[i])) * 255.0;
        img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
    return img;
}

}  // namespace pzres
