// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pzres/error.hpp"

namespace pzres {

/// Extents of a batched feature map, outermost first.
struct Dims {
    std::size_t batch = 1;
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t plane() const { return height * width; }
    std::size_t count() const { return batch * channels * height * width; }
    bool same_spatial(const Dims& o) const { return batch == o.batch && height == o.height && width == o.width; }

    friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
    return std::to_string(d.batch) + "x" + std::to_string(d.channels) + "x" + std::to_string(d.height) + "x" +
           std::to_string(d.width);
}

/// Dense B x C x H x W tensor, row-major with width fastest.
template <typename T>
class Tensor4 {
public:
    using value_type = T;

    Tensor4() = default;
    explicit Tensor4(Dims dims, T fill = T(0)) : dims_(validated(dims)), data_(dims_.count(), fill) {}
    Tensor4(std::size_t b, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
        : Tensor4(Dims{b, c, h, w}, fill) {}

    const Dims& dims() const { return dims_; }
    std::size_t batch() const { return dims_.batch; }
    std::size_t channels() const { return dims_.channels; }
    std::size_t height() const { return dims_.height; }
    std::size_t width() const { return dims_.width; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((b * dims_.channels + c) * dims_.height + y) * dims_.width + x];
    }
    const T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((b * dims_.channels + c) * dims_.height + y) * dims_.width + x];
    }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Contiguous H*W slice for one (batch, channel) pair.
    std::span<T> plane(std::size_t b, std::size_t c) {
        return {data_.data() + (b * dims_.channels + c) * dims_.plane(), dims_.plane()};
    }
    std::span<const T> plane(std::size_t b, std::size_t c) const {
        return {data_.data() + (b * dims_.channels + c) * dims_.plane(), dims_.plane()};
    }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out(dims_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    static Dims validated(Dims d) {
        if (d.batch == 0 || d.channels == 0 || d.height == 0 || d.width == 0) {
            throw ConfigError("tensor dims must all be >= 1, got " + to_string(d));
        }
        return d;
    }

    Dims dims_{};
    std::vector<T> data_;
};

/// An S-band image cube is a single-batch tensor: channels are bands.
template <typename T>
using HsiCube = Tensor4<T>;

template <typename T>
HsiCube<T> make_cube(std::size_t bands, std::size_t height, std::size_t width, T fill = T(0)) {
    return HsiCube<T>(1, bands, height, width, fill);
}

}  // namespace pzres
