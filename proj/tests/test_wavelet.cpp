#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "advswap/wavelet.hpp"

using namespace advswap;

namespace {

template <class T>
ImageT<T> random_image(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageT<T> img({c, h, w});
    for (auto& x : img.v) x = static_cast<T>(u(rng));
    return img;
}

}  // namespace

TEST_CASE("constant image has zero detail and doubled LL") {
    ImageT<double> img({1, 2, 2}, 0.5);
    const auto p = dwt(img);
    CHECK(p.ll.v[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(p.lh.v[0]) < 1e-7);
    CHECK(std::abs(p.hl.v[0]) < 1e-7);
    CHECK(std::abs(p.hh.v[0]) < 1e-7);
}

TEST_CASE("single impulse splits evenly across bands") {
    // hand-applied orthonormal Haar filters on [[1,0],[0,0]]
    ImageT<double> img({1, 2, 2});
    img.at(0, 0, 0) = 1.0;
    const auto p = dwt(img);
    CHECK(p.ll.v[0] == doctest::Approx(0.5));
    CHECK(p.lh.v[0] == doctest::Approx(0.5));
    CHECK(p.hl.v[0] == doctest::Approx(0.5));
    CHECK(p.hh.v[0] == doctest::Approx(0.5));
}

TEST_CASE("energy preservation on random 3x32x32") {
    const auto img = random_image<double>(3, 32, 32, 7);
    const auto p = dwt(img);
    const double ei = sq_norm(img);
    CHECK(std::abs(pyramid_sq_norm(p) - ei) / ei < 1e-5);
}

TEST_CASE("idwt of constant LL pyramid") {
    WaveletPyramidT<double> p;
    p.ll = TensorT<double>({1, 1, 1}, 1.0);
    p.lh = TensorT<double>({1, 1, 1});
    p.hl = TensorT<double>({1, 1, 1});
    p.hh = TensorT<double>({1, 1, 1});
    const auto img = idwt(p);
    for (double v : img.v) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("all-zero pyramid reconstructs to zero") {
    WaveletPyramidT<double> p;
    p.ll = p.lh = p.hl = p.hh = TensorT<double>({2, 3, 3});
    const auto img = idwt(p);
    for (double v : img.v) CHECK(v == 0.0);
}

TEST_CASE("perfect reconstruction on random 3x16x16") {
    const auto img = random_image<double>(3, 16, 16, 11);
    CHECK(max_abs_diff(idwt(dwt(img)), img) < 1e-6);
}

TEST_CASE("round trip and energy across many random sizes") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 2 * (4 + static_cast<int>(rng() % 14));
        const int w = 2 * (4 + static_cast<int>(rng() % 14));
        const auto img = random_image<double>(3, h, w, rng());
        const auto p = dwt(img);
        CHECK(max_abs_diff(idwt(p), img) < 1e-6);
        const double ei = sq_norm(img);
        CHECK(std::abs(pyramid_sq_norm(p) - ei) / ei < 1e-5);
    }
}

TEST_CASE("linearity of the analysis transform") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_image<double>(2, 8, 8, rng());
        const auto y = random_image<double>(2, 8, 8, rng());
        const double a = coef(rng), b = coef(rng);
        TensorT<double> mix({2, 8, 8});
        for (std::size_t i = 0; i < mix.numel(); ++i) mix.v[i] = a * x.v[i] + b * y.v[i];
        const auto pm = dwt(mix);
        const auto px = dwt(x);
        const auto py = dwt(y);
        auto combine = [&](const TensorT<double>& bx, const TensorT<double>& by) {
            TensorT<double> r(bx.shape);
            for (std::size_t i = 0; i < r.numel(); ++i) r.v[i] = a * bx.v[i] + b * by.v[i];
            return r;
        };
        CHECK(max_abs_diff(pm.ll, combine(px.ll, py.ll)) < 1e-6);
        CHECK(max_abs_diff(pm.lh, combine(px.lh, py.lh)) < 1e-6);
        CHECK(max_abs_diff(pm.hl, combine(px.hl, py.hl)) < 1e-6);
        CHECK(max_abs_diff(pm.hh, combine(px.hh, py.hh)) < 1e-6);
    }
}

TEST_CASE("odd dimensions are rejected naming the axis") {
    ImageT<double> odd_h({1, 3, 4});
    ImageT<double> odd_w({1, 4, 5});
    CHECK_THROWS_WITH_AS(dwt(odd_h), doctest::Contains("height"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(dwt(odd_w), doctest::Contains("width"), std::invalid_argument);
}

TEST_CASE("mismatched sub-band shapes are rejected") {
    WaveletPyramidT<double> p;
    p.ll = TensorT<double>({1, 2, 2});
    p.lh = TensorT<double>({1, 2, 3});
    p.hl = TensorT<double>({1, 2, 2});
    p.hh = TensorT<double>({1, 2, 2});
    CHECK_THROWS_AS(idwt(p), std::invalid_argument);
}

TEST_CASE("high band extraction and replacement") {
    const auto img = random_image<double>(3, 8, 8, 5);
    const auto p = dwt(img);
    const auto hb = high_bands(p);
    CHECK(hb.shape == std::vector<int>{9, 4, 4});

    SUBCASE("round trip is bit-exact") {
        const auto p2 = replace_high_bands(p, hb);
        CHECK(p2.ll.v == p.ll.v);
        CHECK(p2.lh.v == p.lh.v);
        CHECK(p2.hl.v == p.hl.v);
        CHECK(p2.hh.v == p.hh.v);
    }
    SUBCASE("constant image has zero high bands") {
        const auto hc = high_bands(dwt(ImageT<double>({3, 8, 8}, 0.25)));
        for (double v : hc.v) CHECK(std::abs(v) < 1e-7);
    }
    SUBCASE("zeroed high bands give the block-average low-pass image") {
        const auto lp = idwt(replace_high_bands(p, TensorT<double>({9, 4, 4})));
        // averaging oracle: each 2x2 block replaced by its mean
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x) {
                    const double mean = (img.at(c, 2 * y, 2 * x) + img.at(c, 2 * y, 2 * x + 1) +
                                         img.at(c, 2 * y + 1, 2 * x) + img.at(c, 2 * y + 1, 2 * x + 1)) /
                                        4.0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            CHECK(lp.at(c, 2 * y + dy, 2 * x + dx) == doctest::Approx(mean).epsilon(1e-10));
                }
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(replace_high_bands(p, TensorT<double>({9, 4, 5})), std::invalid_argument);
    }
}
