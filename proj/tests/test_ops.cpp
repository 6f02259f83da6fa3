#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pzres/ops.hpp"
#include "pzres/random.hpp"
#include "support.hpp"

using namespace pzres;
using pzres::testkit::inner;
using pzres::testkit::numeric_gradient;
using pzres::testkit::random_tensor;
using pzres::testkit::random_vector;
using pzres::testkit::rel_error;

namespace {

constexpr double kGradTol = 1e-6;

// out[b,o,y,x] = sum_i w[o,i] in[b,i,y,x] + bias[o], one pixel at a time.
Tensor4<double> spectral_oracle(const Tensor4<double>& in, const std::vector<double>& w,
                                const std::vector<double>& bias) {
    const std::size_t cout = bias.size(), cin = in.channels();
    Tensor4<double> out(in.batch(), cout, in.height(), in.width());
    for (std::size_t b = 0; b < in.batch(); ++b)
        for (std::size_t y = 0; y < in.height(); ++y)
            for (std::size_t x = 0; x < in.width(); ++x)
                for (std::size_t o = 0; o < cout; ++o) {
                    double acc = bias[o];
                    for (std::size_t i = 0; i < cin; ++i) acc += w[o * cin + i] * in(b, i, y, x);
                    out(b, o, y, x) = acc;
                }
    return out;
}

// Direct sliding window with explicit bounds checks instead of clipped ranges.
Tensor4<double> depthwise_oracle(const Tensor4<double>& in, const std::vector<double>& kernels,
                                 const std::vector<double>& bias, std::size_t k) {
    Tensor4<double> out(in.dims());
    const long pad = static_cast<long>(k / 2);
    for (std::size_t b = 0; b < in.batch(); ++b)
        for (std::size_t c = 0; c < in.channels(); ++c)
            for (long y = 0; y < static_cast<long>(in.height()); ++y)
                for (long x = 0; x < static_cast<long>(in.width()); ++x) {
                    double acc = bias[c];
                    for (long u = 0; u < static_cast<long>(k); ++u)
                        for (long v = 0; v < static_cast<long>(k); ++v) {
                            const long yy = y + u - pad, xx = x + v - pad;
                            if (yy < 0 || xx < 0 || yy >= static_cast<long>(in.height()) ||
                                xx >= static_cast<long>(in.width()))
                                continue;
                            acc += kernels[(c * k + u) * k + v] * in(b, c, yy, xx);
                        }
                    out(b, c, y, x) = acc;
                }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Tensor, RejectsZeroExtent) {
    EXPECT_THROW(Tensor4<double>(1, 0, 2, 2), ConfigError);
    EXPECT_THROW(Tensor4<double>(Dims{0, 1, 1, 1}), ConfigError);
}

TEST(Tensor, IndexingIsRowMajorWidthFastest) {
    Tensor4<int> t(2, 3, 4, 5);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<int>(i);
    EXPECT_EQ(t(1, 2, 3, 4), static_cast<int>(t.size() - 1));
    EXPECT_EQ(t(0, 1, 0, 0), 20);
    EXPECT_EQ(t.plane(1, 0)[0], 60);
    EXPECT_EQ(t.dims().count(), 120u);
}

TEST(Tensor, GradPairRequiresMatchingDims) {
    GradPair<double> p(Tensor4<double>(1, 2, 3, 3));
    EXPECT_EQ(p.grad.dims(), p.value.dims());
    EXPECT_THROW(GradPair<double>(Tensor4<double>(1, 2, 3, 3), Tensor4<double>(1, 2, 3, 2)), ConfigError);
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    EXPECT_NE(a.next(), c.next());
}

TEST(Rng, StateRoundTrip) {
    Rng a(7);
    for (int i = 0; i < 10; ++i) a.normal();
    Rng b(0);
    b.set_state(a.state());
    EXPECT_TRUE(a == b);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform(), b.uniform());
    EXPECT_THROW(b.set_state("not a state"), InputError);
}

TEST(Rng, VariatesInRange) {
    Rng r(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(r.below(7), 7u);
    }
    EXPECT_THROW(r.below(0), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(ConvSpectral, IdentityWeightsReproduceInput) {
    Rng rng(1);
    const auto x = random_tensor(Dims{2, 3, 4, 4}, rng);
    const std::vector<double> w{1, 0, 0, 0, 1, 0, 0, 0, 1}, bias(3, 0.0);
    EXPECT_EQ(conv_spectral<double>(x, w, bias), x);
}

TEST(ConvSpectral, ZeroInputGivesBias) {
    const Tensor4<double> x(1, 2, 3, 3);
    const std::vector<double> w(4 * 2, 0.7), bias{0.1, -0.2, 0.3, 4.0};
    const auto out = conv_spectral<double>(x, w, bias);
    ASSERT_EQ(out.channels(), 4u);
    for (std::size_t o = 0; o < 4; ++o)
        for (double v : out.plane(0, o)) EXPECT_EQ(v, bias[o]);
}

TEST(ConvSpectral, MatchesPerPixelProduct) {
    Rng rng(2);
    const auto x = random_tensor(Dims{2, 3, 4, 4}, rng);
    const auto w = random_vector(5 * 3, rng);
    const auto bias = random_vector(5, rng);
    const auto out = conv_spectral<double>(x, w, bias);
    EXPECT_LE(rel_error(out.values(), spectral_oracle(x, w, bias).values()), 1e-14);
}

TEST(ConvSpectral, LargePlaneCrossesTileBoundary) {
    Rng rng(3);
    const auto x = random_tensor(Dims{1, 4, 40, 30}, rng);
    const auto w = random_vector(2 * 4, rng);
    const auto bias = random_vector(2, rng);
    EXPECT_LE(rel_error(conv_spectral<double>(x, w, bias).values(), spectral_oracle(x, w, bias).values()), 1e-14);
}

TEST(ConvSpectral, GradientsMatchFiniteDifferences) {
    Rng rng(4);
    auto x = random_tensor(Dims{2, 3, 4, 4}, rng);
    auto w = random_vector(5 * 3, rng);
    auto bias = random_vector(5, rng);
    const auto probe = random_tensor(Dims{2, 5, 4, 4}, rng);
    auto f = [&] { return inner(conv_spectral<double>(x, w, bias), probe); };

    std::vector<double> gw(w.size()), gb(bias.size());
    const auto gx = conv_spectral_backward<double>(x, w, probe, gw, gb);
    EXPECT_LE(rel_error(gx.values(), numeric_gradient(x.values(), f)), kGradTol);
    EXPECT_LE(rel_error(gw, numeric_gradient(w, f)), kGradTol);
    EXPECT_LE(rel_error(gb, numeric_gradient(bias, f)), kGradTol);
}

TEST(ConvSpectral, BackwardAccumulatesParameterGradients) {
    Rng rng(5);
    const auto x = random_tensor(Dims{1, 2, 3, 3}, rng);
    const auto w = random_vector(2 * 2, rng);
    const auto g = random_tensor(Dims{1, 2, 3, 3}, rng);
    std::vector<double> gw1(4), gb1(2), gw2(4), gb2(2);
    conv_spectral_backward<double>(x, w, g, gw1, gb1);
    conv_spectral_backward<double>(x, w, g, gw2, gb2);
    conv_spectral_backward<double>(x, w, g, gw2, gb2);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(gw2[i], 2.0 * gw1[i]);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(gb2[i], 2.0 * gb1[i]);
}

TEST(ConvSpectral, ShapeMismatchIsConfigError) {
    const Tensor4<double> x(1, 3, 2, 2);
    const std::vector<double> w(4 * 2), bias(4);
    EXPECT_THROW(conv_spectral<double>(x, w, bias), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(ConvDepthwise, UnitKernelIsIdentity) {
    Rng rng(6);
    const auto x = random_tensor(Dims{2, 3, 5, 4}, rng);
    const std::vector<double> kernels(3, 1.0), bias(3, 0.0);
    EXPECT_EQ(conv_spatial_depthwise<double>(x, kernels, bias, 1), x);
}

TEST(ConvDepthwise, UnitSumKernelKeepsConstantInterior) {
    const Tensor4<double> x(1, 1, 6, 6, 0.37);
    const std::vector<double> kernel{0.05, 0.1, 0.05, 0.1, 0.4, 0.1, 0.05, 0.1, 0.05}, bias{0.0};
    const auto out = conv_spatial_depthwise<double>(x, kernel, bias, 3);
    for (std::size_t y = 1; y + 1 < 6; ++y)
        for (std::size_t xx = 1; xx + 1 < 6; ++xx) EXPECT_NEAR(out(0, 0, y, xx), 0.37, 1e-15);
    // Zero padding pulls the corners down.
    EXPECT_LT(out(0, 0, 0, 0), 0.37);
}

TEST(ConvDepthwise, MatchesSlidingWindow) {
    Rng rng(7);
    for (std::size_t k : {1u, 3u, 5u}) {
        const auto x = random_tensor(Dims{1, 2, 5, 5}, rng);
        const auto kernels = random_vector(2 * k * k, rng);
        const auto bias = random_vector(2, rng);
        const auto out = conv_spatial_depthwise<double>(x, kernels, bias, k);
        EXPECT_LE(rel_error(out.values(), depthwise_oracle(x, kernels, bias, k).values()), 1e-14) << "k=" << k;
    }
}

TEST(ConvDepthwise, KernelWiderThanImage) {
    Rng rng(8);
    const auto x = random_tensor(Dims{1, 1, 2, 3}, rng);
    const auto kernels = random_vector(25, rng);
    const std::vector<double> bias{0.5};
    EXPECT_LE(rel_error(conv_spatial_depthwise<double>(x, kernels, bias, 5).values(),
                        depthwise_oracle(x, kernels, bias, 5).values()),
              1e-14);
}

TEST(ConvDepthwise, GradientsMatchFiniteDifferences) {
    Rng rng(9);
    for (std::size_t k : {1u, 3u, 5u}) {
        auto x = random_tensor(Dims{1, 2, 5, 5}, rng);
        auto kernels = random_vector(2 * k * k, rng);
        auto bias = random_vector(2, rng);
        const auto probe = random_tensor(x.dims(), rng);
        auto f = [&] { return inner(conv_spatial_depthwise<double>(x, kernels, bias, k), probe); };

        std::vector<double> gk(kernels.size()), gb(bias.size());
        const auto gx = conv_spatial_depthwise_backward<double>(x, kernels, probe, k, gk, gb);
        EXPECT_LE(rel_error(gx.values(), numeric_gradient(x.values(), f)), kGradTol) << "k=" << k;
        EXPECT_LE(rel_error(gk, numeric_gradient(kernels, f)), kGradTol) << "k=" << k;
        EXPECT_LE(rel_error(gb, numeric_gradient(bias, f)), kGradTol) << "k=" << k;
    }
}

TEST(ConvDepthwise, EvenKernelIsConfigError) {
    const Tensor4<double> x(1, 1, 4, 4);
    const std::vector<double> kernels(4), bias(1);
    EXPECT_THROW(conv_spatial_depthwise<double>(x, kernels, bias, 2), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Relu, ClampsNegatives) {
    Tensor4<double> x(1, 1, 1, 3);
    x[0] = -1.0;
    x[1] = 0.0;
    x[2] = 2.0;
    const auto y = relu(x);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 0.0);
    EXPECT_EQ(y[2], 2.0);
}

TEST(Relu, PositiveInputPassesThrough) {
    Rng rng(10);
    const auto x = random_tensor(Dims{1, 2, 3, 3}, rng, 0.1, 1.0);
    const auto g = random_tensor(x.dims(), rng);
    EXPECT_EQ(relu(x), x);
    EXPECT_EQ(relu_backward(x, g), g);
}

TEST(Relu, GradientAwayFromKink) {
    Rng rng(11);
    auto x = random_tensor(Dims{1, 3, 4, 4}, rng);
    const auto probe = random_tensor(x.dims(), rng);
    auto f = [&] { return inner(relu(x), probe); };
    const auto analytic = relu_backward(x, probe);
    const auto numeric = numeric_gradient(x.values(), f);
    std::vector<double> a, n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) < 1e-4) continue;
        a.push_back(analytic[i]);
        n.push_back(numeric[i]);
    }
    EXPECT_GT(a.size(), x.size() / 2);
    EXPECT_LE(rel_error(a, n), kGradTol);
}

// ---------------------------------------------------------------------------

TEST(Concat, SingleInputIsIdentity) {
    Rng rng(12);
    const auto a = random_tensor(Dims{2, 3, 2, 2}, rng);
    EXPECT_EQ(concat_channels<double>({&a}), a);
}

TEST(Concat, StacksInOrderAndSlicesBack) {
    Rng rng(13);
    const auto a = random_tensor(Dims{2, 2, 3, 3}, rng);
    const auto b = random_tensor(Dims{2, 3, 3, 3}, rng);
    const auto ab = concat_channels<double>({&a, &b});
    ASSERT_EQ(ab.channels(), 5u);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(ab(n, c, y, x), a(n, c, y, x));
    EXPECT_EQ(slice_channels(ab, 0, 2), a);
    EXPECT_EQ(slice_channels(ab, 2, 3), b);
}

TEST(Concat, SpatialMismatchIsConfigError) {
    const Tensor4<double> a(1, 1, 3, 3), b(1, 1, 3, 4), c(2, 1, 3, 3);
    EXPECT_THROW(concat_channels<double>({&a, &b}), ConfigError);
    EXPECT_THROW(concat_channels<double>({&a, &c}), ConfigError);
    EXPECT_THROW(slice_channels(a, 1, 1), ConfigError);
}

TEST(Concat, GatherPicksListedChannels) {
    Rng rng(14);
    const auto t = random_tensor(Dims{1, 5, 2, 2}, rng);
    const std::vector<std::size_t> idx{4, 0, 2};
    const auto g = gather_channels<double>(t, idx);
    for (std::size_t j = 0; j < idx.size(); ++j) EXPECT_EQ(slice_channels(g, j, 1), slice_channels(t, idx[j], 1));
    const std::vector<std::size_t> bad{5};
    EXPECT_THROW(gather_channels<double>(t, bad), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Add, NeutralInverseCommutative) {
    Rng rng(15);
    const auto a = random_tensor(Dims{1, 2, 3, 3}, rng);
    const auto b = random_tensor(a.dims(), rng);
    Tensor4<double> neg = a;
    for (auto& v : neg.values()) v = -v;
    EXPECT_EQ(add(a, Tensor4<double>(a.dims())), a);
    EXPECT_EQ(add(a, neg), Tensor4<double>(a.dims()));
    EXPECT_EQ(add(a, b), add(b, a));
    EXPECT_THROW(add(a, Tensor4<double>(1, 2, 3, 2)), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Bilinear, ConstantStaysConstant) {
    const Tensor4<double> x(1, 2, 3, 5, 0.3);
    for (std::size_t r : {1u, 2u, 3u, 8u}) {
        const auto up = bilinear_upsample(x, r);
        for (double v : up.values()) EXPECT_EQ(v, 0.3);
    }
}

TEST(Bilinear, UnitScaleIsIdentity) {
    Rng rng(16);
    const auto x = random_tensor(Dims{2, 2, 4, 3}, rng);
    EXPECT_EQ(bilinear_upsample(x, 1), x);
}

TEST(Bilinear, TwoByTwoHandEvaluated) {
    // Source rows/cols sampled at -0.25 (clamped to 0), 0.25, 0.75, 1.25
    // (clamped to 1): weights (1,0), (.75,.25), (.25,.75), (0,1).
    Tensor4<double> x(1, 1, 2, 2);
    x[0] = 0.0;
    x[1] = 1.0;
    x[2] = 2.0;
    x[3] = 3.0;
    const double expected[4][4] = {{0.0, 0.25, 0.75, 1.0},
                                   {0.5, 0.75, 1.25, 1.5},
                                   {1.5, 1.75, 2.25, 2.5},
                                   {2.0, 2.25, 2.75, 3.0}};
    const auto up = bilinear_upsample(x, 2);
    ASSERT_EQ(up.dims(), (Dims{1, 1, 4, 4}));
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t xx = 0; xx < 4; ++xx) EXPECT_DOUBLE_EQ(up(0, 0, y, xx), expected[y][xx]);
}

TEST(Bilinear, Linear) {
    Rng rng(17);
    const auto a = random_tensor(Dims{1, 2, 3, 4}, rng);
    const auto b = random_tensor(a.dims(), rng);
    const double alpha = 0.7, beta = -1.3;
    Tensor4<double> mix(a.dims());
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = alpha * a[i] + beta * b[i];
    const auto lhs = bilinear_upsample(mix, 3);
    const auto ua = bilinear_upsample(a, 3), ub = bilinear_upsample(b, 3);
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], alpha * ua[i] + beta * ub[i], 1e-12);
}

TEST(Bilinear, BackwardIsTranspose) {
    Rng rng(18);
    for (std::size_t r : {1u, 2u, 3u, 4u}) {
        const auto a = random_tensor(Dims{2, 2, 3, 5}, rng);
        const auto g = random_tensor(Dims{2, 2, 3 * r, 5 * r}, rng);
        EXPECT_NEAR(inner(bilinear_upsample(a, r), g), inner(a, bilinear_upsample_backward(g, r)), 1e-12);
    }
}

TEST(Bilinear, GradientMatchesFiniteDifferences) {
    Rng rng(19);
    auto a = random_tensor(Dims{1, 2, 3, 3}, rng);
    const auto g = random_tensor(Dims{1, 2, 6, 6}, rng);
    auto f = [&] { return inner(bilinear_upsample(a, 2), g); };
    EXPECT_LE(rel_error(bilinear_upsample_backward(g, 2).values(), numeric_gradient(a.values(), f)), kGradTol);
}

TEST(Bilinear, IntegerScalePreservesMean) {
    Rng rng(20);
    const auto a = random_tensor(Dims{1, 3, 5, 7}, rng);
    for (std::size_t r : {2u, 4u, 8u}) {
        const auto before = spatial_mean(a), after = spatial_mean(bilinear_upsample(a, r));
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(before[c], after[c], 1e-12);
    }
}

TEST(Bilinear, ZeroScaleIsConfigError) {
    EXPECT_THROW(bilinear_upsample(Tensor4<double>(1, 1, 2, 2), 0), ConfigError);
    EXPECT_THROW(bicubic_upsample(Tensor4<double>(1, 1, 2, 2), 0), ConfigError);
}

TEST(Bicubic, ConstantAndIdentity) {
    const Tensor4<double> c(1, 1, 4, 4, 0.6);
    for (double v : bicubic_upsample(c, 4).values()) EXPECT_NEAR(v, 0.6, 1e-14);
    Rng rng(21);
    const auto x = random_tensor(Dims{1, 2, 3, 3}, rng);
    const auto up = bicubic_upsample(x, 1);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(up[i], x[i], 1e-15);
}

// ---------------------------------------------------------------------------

TEST(SpatialMean, Examples) {
    EXPECT_EQ(spatial_mean(Tensor4<double>(1, 1, 3, 3, 0.25))[0], 0.25);
    Tensor4<double> x(1, 1, 2, 2);
    x[0] = 1;
    x[1] = 2;
    x[2] = 3;
    x[3] = 4;
    EXPECT_EQ(spatial_mean(x)[0], 2.5);
}

TEST(SpatialMean, MatchesNaiveSum) {
    Rng rng(22);
    const auto x = random_tensor(Dims{2, 3, 7, 5}, rng);
    const auto m = spatial_mean(x);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c) {
            double s = 0.0;
            for (std::size_t y = 0; y < 7; ++y)
                for (std::size_t xx = 0; xx < 5; ++xx) s += x(b, c, y, xx);
            EXPECT_NEAR(m[b * 3 + c], s / 35.0, 1e-15);
        }
}
