// SPDX-License-Identifier: Apache-2.0
//
// Observation models: the HR-MSI is a per-pixel spectral integration of the
// scene (Y = XR + N_y) and the LR-HSI is a blurred, decimated copy of it
// (Z = DBX + N_z).
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pzres/error.hpp"
#include "pzres/random.hpp"
#include "pzres/tensor.hpp"

namespace pzres {

/// S x s non-negative matrix, row-major; each column sums to one.
struct SpectralResponse {
    std::size_t bands = 0;     // S
    std::size_t channels = 0;  // s
    std::vector<double> matrix;
    std::vector<double> wavelengths_nm;

    double operator()(std::size_t k, std::size_t c) const { return matrix[k * channels + c]; }
    double& operator()(std::size_t k, std::size_t c) { return matrix[k * channels + c]; }

    static SpectralResponse identity(std::size_t bands) {
        SpectralResponse r{bands, bands, std::vector<double>(bands * bands, 0.0), {}};
        for (std::size_t k = 0; k < bands; ++k) r(k, k) = 1.0;
        return r;
    }

    /// Rejects negative entries, then scales every column to unit sum.
    void normalize_columns() {
        for (double v : matrix) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("spectral response: entries must be finite and >= 0");
        }
        for (std::size_t c = 0; c < channels; ++c) {
            double total = 0.0;
            for (std::size_t k = 0; k < bands; ++k) total += (*this)(k, c);
            if (total <= 0.0) throw InputError("spectral response: column " + std::to_string(c) + " sums to zero");
            for (std::size_t k = 0; k < bands; ++k) (*this)(k, c) /= total;
        }
    }
};

/// s broad Gaussian response curves spread evenly over the S bands.
inline SpectralResponse synthetic_response(std::size_t bands, std::size_t channels) {
    if (bands == 0 || channels == 0) throw ConfigError("synthetic_response: sizes must be >= 1");
    SpectralResponse r{bands, channels, std::vector<double>(bands * channels), {}};
    const double width = std::max(0.75, static_cast<double>(bands) / (2.0 * static_cast<double>(channels)));
    for (std::size_t c = 0; c < channels; ++c) {
        const double centre =
            (static_cast<double>(c) + 0.5) * static_cast<double>(bands) / static_cast<double>(channels) - 0.5;
        for (std::size_t k = 0; k < bands; ++k) {
            const double t = (static_cast<double>(k) - centre) / width;
            r(k, c) = std::exp(-0.5 * t * t);
        }
    }
    r.normalize_columns();
    return r;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& field, const std::string& where) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    if (!field.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || field.empty()) throw InputError(where + ": cannot parse number '" + field + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Reads `wavelength_nm, v_1, ..., v_s` rows after a header line.
inline SpectralResponse parse_spectral_response(std::istream& in, std::optional<std::size_t> expected_bands = {},
                                                const std::string& source = "spectral response") {
    std::string line;
    if (!std::getline(in, line)) throw InputError(source + ": empty file");
    SpectralResponse r;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        const std::string where = source + " line " + std::to_string(row);
        if (fields.size() < 2) throw InputError(where + ": expected wavelength and at least one response value");
        if (r.channels == 0) r.channels = fields.size() - 1;
        if (fields.size() - 1 != r.channels) throw InputError(where + ": inconsistent column count");
        r.wavelengths_nm.push_back(detail::parse_double(fields[0], where));
        for (std::size_t c = 1; c < fields.size(); ++c) {
            const double v = detail::parse_double(fields[c], where);
            if (v < 0.0) throw InputError(where + ": negative response value");
            r.matrix.push_back(v);
        }
        ++r.bands;
    }
    if (r.bands == 0) throw InputError(source + ": no data rows");
    if (expected_bands && r.bands != *expected_bands) {
        throw InputError(source + ": has " + std::to_string(r.bands) + " rows, expected " +
                         std::to_string(*expected_bands));
    }
    r.normalize_columns();
    return r;
}

inline SpectralResponse load_spectral_response(const std::string& path, std::optional<std::size_t> expected_bands = {}) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open spectral response file '" + path + "'");
    return parse_spectral_response(in, expected_bands, path);
}

// ---------------------------------------------------------------------------

struct DegradeConfig {
    std::size_t scale = 4;              // r
    std::optional<double> sigma;        // blur std; r/2 when unset
    std::size_t phase = 0;              // decimation offset in [0, r)
    double noise_lr = 0.0;              // std of N_z
    double noise_msi = 0.0;             // std of N_y
    std::uint64_t noise_seed = 0;

    double blur_sigma() const { return sigma.value_or(static_cast<double>(scale) / 2.0); }
};

/// r x r Gaussian about ((r-1)/2, (r-1)/2), row-major, normalised to unit sum.
inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    if (size == 0) throw ConfigError("gaussian_kernel: size must be >= 1");
    if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be > 0");
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    std::vector<double> k(size * size);
    double total = 0.0;
    for (std::size_t u = 0; u < size; ++u) {
        for (std::size_t v = 0; v < size; ++v) {
            const double dy = static_cast<double>(u) - c, dx = static_cast<double>(v) - c;
            k[u * size + v] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            total += k[u * size + v];
        }
    }
    for (double& v : k) v /= total;
    return k;
}

/// Blur each band with the r x r Gaussian (edge-replicate padding, kernel
/// anchored at floor((r-1)/2)), keep pixels (phase + i r, phase + j r), add
/// noise and clamp to [0, 1].
template <typename T>
Tensor4<T> blur_decimate(const Tensor4<T>& x, const DegradeConfig& cfg) {
    const std::size_t r = cfg.scale;
    if (r == 0) throw ConfigError("blur_decimate: scale must be >= 1");
    if (cfg.phase >= r) throw ConfigError("blur_decimate: phase must be < scale");
    const Dims d = x.dims();
    if (d.height % r != 0 || d.width % r != 0) {
        throw InputError("blur_decimate: spatial size " + std::to_string(d.height) + "x" + std::to_string(d.width) +
                         " is not divisible by scale " + std::to_string(r));
    }
    const auto kernel = gaussian_kernel(r, cfg.blur_sigma());
    const auto anchor = static_cast<std::ptrdiff_t>((r - 1) / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.height), W = static_cast<std::ptrdiff_t>(d.width);
    const std::size_t h = d.height / r, w = d.width / r;

    Tensor4<T> out(Dims{d.batch, d.channels, h, w});
    Rng noise(cfg.noise_seed);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            auto src = x.plane(b, c);
            auto dst = out.plane(b, c);
            for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    const auto y0 = static_cast<std::ptrdiff_t>(cfg.phase + i * r) - anchor;
                    const auto x0 = static_cast<std::ptrdiff_t>(cfg.phase + j * r) - anchor;
                    double acc = 0.0;
                    for (std::size_t u = 0; u < r; ++u) {
                        const auto yy = std::clamp<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(u), 0, H - 1);
                        for (std::size_t v = 0; v < r; ++v) {
                            const auto xx = std::clamp<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(v), 0, W - 1);
                            acc += kernel[u * r + v] * static_cast<double>(src[yy * W + xx]);
                        }
                    }
                    if (cfg.noise_lr > 0.0) acc += cfg.noise_lr * noise.normal();
                    dst[i * w + j] = static_cast<T>(std::clamp(acc, 0.0, 1.0));
                }
            }
        }
    }
    return out;
}

/// y[c] = sum_k R[k, c] x[k] per pixel, plus optional noise, clamped to [0, 1].
template <typename T>
Tensor4<T> apply_spectral_response(const Tensor4<T>& x, const SpectralResponse& response, double noise_std = 0.0,
                                   std::uint64_t noise_seed = 0) {
    const Dims d = x.dims();
    if (response.bands != d.channels) {
        throw ConfigError("apply_spectral_response: response has " + std::to_string(response.bands) +
                          " rows but the cube has " + std::to_string(d.channels) + " bands");
    }
    Tensor4<T> y(Dims{d.batch, response.channels, d.height, d.width});
    Rng noise(noise_seed);
    std::vector<double> acc(d.plane());
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < response.channels; ++c) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t k = 0; k < d.channels; ++k) {
                const double w = response(k, c);
                auto src = x.plane(b, k);
                for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += w * static_cast<double>(src[p]);
            }
            auto dst = y.plane(b, c);
            for (std::size_t p = 0; p < acc.size(); ++p) {
                double v = acc[p];
                if (noise_std > 0.0) v += noise_std * noise.normal();
                dst[p] = static_cast<T>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// Synthetic linear-mixing scenes.

struct SynthScene {
    HsiCube<double> cube;                      // 1 x S x H x W
    std::vector<std::vector<double>> spectra;  // E spectra of S values
    std::vector<std::vector<double>> abundances;  // E maps of H*W values
};

namespace detail {

/// Separable Gaussian low-pass with replicate borders, in place.
inline void smooth_field(std::vector<double>& f, std::size_t H, std::size_t W, double sigma) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        taps[static_cast<std::size_t>(t + radius)] = std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
        total += taps[static_cast<std::size_t>(t + radius)];
    }
    for (double& t : taps) t /= total;
    const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
    std::vector<double> tmp(f.size());
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                acc += taps[static_cast<std::size_t>(t + radius)] * f[y * w + std::clamp<std::ptrdiff_t>(x + t, 0, w - 1)];
            }
            tmp[y * w + x] = acc;
        }
    }
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                acc += taps[static_cast<std::size_t>(t + radius)] * tmp[std::clamp<std::ptrdiff_t>(y + t, 0, h - 1) * w + x];
            }
            f[y * w + x] = acc;
        }
    }
}

}  // namespace detail

/// X = sum_e A_e * spectrum_e with smooth seeded abundance maps that sum to
/// one at every pixel and spectra made of one to three Gaussian bumps.
inline SynthScene synth_scene_components(std::size_t bands, std::size_t height, std::size_t width,
                                         std::size_t endmembers, std::uint64_t seed) {
    if (endmembers == 0) throw ConfigError("synth_scene: endmember count must be >= 1");
    if (bands == 0 || height == 0 || width == 0) throw ConfigError("synth_scene: sizes must be >= 1");
    Rng rng(seed);
    const double S = static_cast<double>(bands);

    SynthScene scene{make_cube<double>(bands, height, width), {}, {}};
    for (std::size_t e = 0; e < endmembers; ++e) {
        std::vector<double> spec(bands, 0.0);
        const std::size_t bumps = 1 + rng.below(3);
        for (std::size_t m = 0; m < bumps; ++m) {
            const double centre = rng.uniform(0.0, S - 1.0);
            const double width_b = std::max(0.5, rng.uniform(S / 12.0, S / 3.0));
            const double amp = rng.uniform(0.3, 1.0);
            for (std::size_t k = 0; k < bands; ++k) {
                const double t = (static_cast<double>(k) - centre) / width_b;
                spec[k] += amp * std::exp(-0.5 * t * t);
            }
        }
        const double peak = *std::max_element(spec.begin(), spec.end());
        if (peak > 1.0) {
            for (double& v : spec) v /= peak;
        }
        scene.spectra.push_back(std::move(spec));
    }

    const std::size_t plane = height * width;
    const double lowpass = std::max(1.0, static_cast<double>(std::max(height, width)) / 16.0);
    std::vector<std::vector<double>> logits(endmembers, std::vector<double>(plane));
    for (auto& field : logits) {
        for (double& v : field) v = rng.uniform(-1.0, 1.0);
        detail::smooth_field(field, height, width, lowpass);
        double mean = 0.0, sq = 0.0;
        for (double v : field) mean += v;
        mean /= static_cast<double>(plane);
        for (double v : field) sq += (v - mean) * (v - mean);
        const double sd = std::sqrt(sq / static_cast<double>(plane));
        for (double& v : field) v = sd > 0.0 ? 3.0 * (v - mean) / sd : 0.0;
    }
    scene.abundances.assign(endmembers, std::vector<double>(plane));
    for (std::size_t p = 0; p < plane; ++p) {
        double top = logits[0][p];
        for (std::size_t e = 1; e < endmembers; ++e) top = std::max(top, logits[e][p]);
        double total = 0.0;
        for (std::size_t e = 0; e < endmembers; ++e) total += std::exp(logits[e][p] - top);
        for (std::size_t e = 0; e < endmembers; ++e) scene.abundances[e][p] = std::exp(logits[e][p] - top) / total;
    }

    for (std::size_t k = 0; k < bands; ++k) {
        auto dst = scene.cube.plane(0, k);
        for (std::size_t p = 0; p < plane; ++p) {
            double v = 0.0;
            for (std::size_t e = 0; e < endmembers; ++e) v += scene.abundances[e][p] * scene.spectra[e][k];
            dst[p] = std::clamp(v, 0.0, 1.0);
        }
    }
    return scene;
}

template <typename T = double>
HsiCube<T> synth_scene(std::size_t bands, std::size_t height, std::size_t width, std::size_t endmembers,
                       std::uint64_t seed) {
    auto scene = synth_scene_components(bands, height, width, endmembers, seed);
    if constexpr (std::is_same_v<T, double>) {
        return std::move(scene.cube);
    } else {
        return scene.cube.template cast<T>();
    }
}

}  // namespace pzres
