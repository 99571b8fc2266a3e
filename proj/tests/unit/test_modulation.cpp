#include "oracle.hpp"

#include "microast/error.hpp"
#include "microast/modulation.hpp"
#include "microast/ops.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace microast;
using namespace microast::testing;

namespace {

bool close_rel(float a, float b, float tol) { return std::abs(a - b) <= tol * std::max(1.0f, std::abs(b)); }

FilterSignal constant_signal(std::size_t c, float w, float b) {
    return {std::vector<float>(c, w), std::vector<float>(c, b)};
}

FilterSignal random_signal(std::size_t c, std::uint64_t seed) {
    return {random_vector(c, seed, -1.5f, 1.5f), random_vector(c, seed + 1, -1.0f, 1.0f)};
}

// Direct modulated filter run through the naive convolution.
TensorF32 direct_oracle(const TensorF32& x, const ConvParams& p, const FilterSignal& s) {
    return conv2d_oracle(x, modulate_filter(p, s));
}

}  // namespace

TEST_SUITE("adain") {
    TEST_CASE("style equal to content is the identity up to eps") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const TensorF32 x = random_tensor({1, 4, 8, 8}, 300 + seed);
            CHECK(max_abs_diff(adain(x, x), x) <= 1e-4f);
        }
    }

    TEST_CASE("constant content collapses to the style mean") {
        TensorF32 c(1, 2, 5, 5);
        for (std::size_t i = 0; i < 25; ++i) {
            c.data()[i] = 3.0f;
            c.data()[25 + i] = -1.0f;
        }
        const TensorF32 s = random_tensor({1, 2, 7, 3}, 310);
        const ChannelStats st = instance_stats_oracle(s);
        const TensorF32 y = adain(c, s);
        for (std::size_t ch = 0; ch < 2; ++ch)
            for (std::size_t i = 0; i < 25; ++i) CHECK(std::abs(y.plane(0, ch)[i] - st.mean[ch]) <= 1e-3f);
    }

    TEST_CASE("hand-evaluated 2x2 case") {
        const TensorF32 c(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
        const TensorF32 s(Shape{1, 1, 2, 2}, {0, 0, 0, 2});
        const double mu_c = 2.5;
        const double sd_c = std::sqrt(1.25 + 1e-5);
        const double mu_s = 0.5;
        const double sd_s = std::sqrt(0.75 + 1e-5);
        const TensorF32 y = adain(c, s);
        for (std::size_t i = 0; i < 4; ++i) {
            const double expected = sd_s * (c.data()[i] - mu_c) / sd_c + mu_s;
            CHECK(y.data()[i] == doctest::Approx(expected).epsilon(1e-6));
        }
    }

    TEST_CASE("equals feat_mod with the style statistics, bitwise") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const TensorF32 x = random_tensor({1, 5, 9, 6}, 320 + seed);
            const TensorF32 s = random_tensor({1, 5, 4, 11}, 340 + seed, -3.0f, 2.0f);
            const ChannelStats st = instance_stats(s);
            CHECK(bitwise_equal(adain(x, s), feat_mod(x, st.mean, st.std)));
        }
    }

    TEST_CASE("per-sample style batch") {
        const TensorF32 x = random_tensor({2, 3, 6, 6}, 350);
        const TensorF32 s = random_tensor({2, 3, 5, 5}, 351, 0.0f, 4.0f);
        const TensorF32 y = adain(x, s);
        const ChannelStats got = instance_stats_oracle(y);
        const ChannelStats want = instance_stats_oracle(s);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(close_rel(got.mean[i], want.mean[i], 1e-4f));
            CHECK(close_rel(got.std[i], want.std[i], 1e-4f));
        }
        CHECK_THROWS_AS(adain(x, random_tensor({3, 3, 5, 5}, 352)), ShapeError);
    }

    TEST_CASE("channel mismatch") {
        CHECK_THROWS_AS(adain(random_tensor({1, 3, 4, 4}, 1), random_tensor({1, 4, 4, 4}, 2)), ShapeError);
    }
}

TEST_SUITE("feat_mod") {
    TEST_CASE("own statistics reproduce the input") {
        const TensorF32 x = random_tensor({1, 4, 8, 8}, 400);
        const ChannelStats st = instance_stats(x);
        CHECK(max_abs_diff(feat_mod(x, st.mean, st.std), x) <= 1e-4f);
    }

    TEST_CASE("sigma sqrt(eps) flattens every channel to mu") {
        const TensorF32 x = random_tensor({1, 3, 8, 8}, 401);
        const std::vector<float> mu = {0.25f, -2.0f, 7.0f};
        const std::vector<float> sigma(3, std::sqrt(kStatsEpsilon));
        const TensorF32 y = feat_mod(x, mu, sigma);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(y.plane(0, c)[i] - mu[c]) <= 1e-2f);
    }

    TEST_CASE("output statistics equal the targets on random tensors") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const TensorF32 x = random_tensor({2, 4, 8, 8}, 410 + seed, -2.0f, 2.0f);
            const std::vector<float> mu = random_vector(4, 430 + seed, -3.0f, 3.0f);
            const std::vector<float> sigma = random_vector(4, 450 + seed, 0.5f, 2.5f);
            const ChannelStats st = instance_stats_oracle(feat_mod(x, mu, sigma));
            for (std::size_t i = 0; i < 8; ++i) {
                CHECK(close_rel(st.mean[i], mu[i % 4], 1e-4f));
                CHECK(close_rel(st.std[i], sigma[i % 4], 1e-4f));
            }
        }
    }

    TEST_CASE("applying twice changes nothing further") {
        const TensorF32 x = random_tensor({1, 4, 7, 9}, 470);
        const std::vector<float> mu = random_vector(4, 471);
        const std::vector<float> sigma = random_vector(4, 472, 0.5f, 2.0f);
        const TensorF32 once = feat_mod(x, mu, sigma);
        CHECK(max_abs_diff(feat_mod(once, mu, sigma), once) <= 1e-4f);
    }

    TEST_CASE("length and sigma errors") {
        const TensorF32 x = random_tensor({1, 3, 4, 4}, 480);
        const std::vector<float> three(3, 1.0f);
        CHECK_THROWS_AS(feat_mod(x, std::vector<float>(2, 0.0f), three), ShapeError);
        CHECK_THROWS_AS(feat_mod(x, three, std::vector<float>(4, 1.0f)), ShapeError);
        CHECK_THROWS_AS(feat_mod(x, three, std::vector<float>{1.0f, 0.0f, 1.0f}), ValueError);
        CHECK_THROWS_AS(feat_mod(x, three, std::vector<float>{1.0f, -1.0f, 1.0f}), ValueError);
        CHECK_THROWS_AS(feat_mod(x, three, std::vector<float>{1.0f, NAN, 1.0f}), ValueError);
    }
}

TEST_SUITE("filter modulation") {
    TEST_CASE("unit weight and zero bias leave the convolution untouched") {
        const TensorF32 x = random_tensor({1, 5, 8, 8}, 500);
        const ConvParams p = random_conv(5, 5, 3, 1, 1, PadMode::Reflect, 501);
        CHECK(bitwise_equal(filter_mod_direct(x, p, constant_signal(5, 1.0f, 0.0f)), conv2d(x, p)));
    }

    TEST_CASE("zero weight and unit bias give the pointwise identity") {
        const TensorF32 x = random_tensor({1, 5, 8, 8}, 502);
        ConvParams p = random_conv(5, 5, 3, 1, 1, PadMode::Reflect, 503);
        std::fill(p.bias.begin(), p.bias.end(), 0.0f);
        CHECK(bitwise_equal(filter_mod_direct(x, p, constant_signal(5, 0.0f, 1.0f)), x));
        CHECK(bitwise_equal(filter_mod_pseudo(x, p, constant_signal(5, 0.0f, 1.0f)), x));
    }

    TEST_CASE("modulated filter layout") {
        const ConvParams p = random_conv(2, 2, 3, 1, 1, PadMode::Zero, 504);
        const FilterSignal s{{2.0f, -0.5f}, {0.25f, 3.0f}};
        const ConvParams m = modulate_filter(p, s);
        CHECK(m.weight.at(0, 1, 0, 2) == 2.0f * p.weight.at(0, 1, 0, 2));
        CHECK(m.weight.at(1, 0, 2, 2) == -0.5f * p.weight.at(1, 0, 2, 2));
        CHECK(m.weight.at(0, 0, 1, 1) == 2.0f * p.weight.at(0, 0, 1, 1) + 0.25f);
        CHECK(m.weight.at(1, 1, 1, 1) == -0.5f * p.weight.at(1, 1, 1, 1) + 3.0f);
        CHECK(m.weight.at(0, 1, 1, 1) == 2.0f * p.weight.at(0, 1, 1, 1));
        CHECK(m.bias[0] == 2.0f * p.bias[0]);
        CHECK(m.bias[1] == -0.5f * p.bias[1]);
    }

    TEST_CASE("direct and pseudo forms agree on 100 random layers") {
        std::mt19937 rng(7);
        float worst = 0.0f;
        for (int t = 0; t < 100; ++t) {
            auto pick = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
            const std::size_t c = static_cast<std::size_t>(pick(1, 8));
            const std::size_t k = pick(0, 1) ? 3 : 1;
            const std::size_t h = static_cast<std::size_t>(pick(2, 8));
            const std::size_t w = static_cast<std::size_t>(pick(2, 8));
            const PadMode mode = pick(0, 1) ? PadMode::Reflect : PadMode::Zero;
            const TensorF32 x = random_tensor({1, c, h, w}, 600 + t);
            const ConvParams p = random_conv(c, c, k, 1, static_cast<int>(k / 2), mode, 800 + t);
            const FilterSignal s = random_signal(c, 1000 + 2 * t);
            const float d = max_abs_diff(filter_mod_direct(x, p, s), filter_mod_pseudo(x, p, s));
            worst = std::max(worst, d);
            CAPTURE(t);
            CHECK(d <= 1e-4f);
        }
        MESSAGE("worst direct/pseudo difference " << worst);
    }

    TEST_CASE("pseudo form is linear in the weight signal") {
        const TensorF32 x = random_tensor({1, 4, 6, 6}, 520);
        const ConvParams p = random_conv(4, 4, 3, 1, 1, PadMode::Reflect, 521);
        FilterSignal s = random_signal(4, 522);
        std::fill(s.bias.begin(), s.bias.end(), 0.0f);
        FilterSignal s2 = s;
        for (float& v : s2.weight) v *= 2.0f;
        TensorF32 doubled = filter_mod_pseudo(x, p, s);
        for (float& v : doubled.data()) v *= 2.0f;
        CHECK(bitwise_equal(filter_mod_pseudo(x, p, s2), doubled));

        // With a bias term only the convolution part doubles.
        const FilterSignal b = random_signal(4, 523);
        FilterSignal b2 = b;
        for (float& v : b2.weight) v *= 2.0f;
        const TensorF32 y1 = filter_mod_pseudo(x, p, b);
        const TensorF32 y2 = filter_mod_pseudo(x, p, b2);
        TensorF32 expected(y1.shape());
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < 36; ++i) {
                const float second = b.bias[c] * x.plane(0, c)[i];
                expected.plane(0, c)[i] = 2.0f * (y1.plane(0, c)[i] - second) + second;
            }
        CHECK(max_abs_diff(y2, expected) <= 1e-5f);
    }

    TEST_CASE("zero bias signal scales the convolution") {
        const TensorF32 x = random_tensor({1, 3, 5, 7}, 530);
        const ConvParams p = random_conv(3, 3, 3, 1, 1, PadMode::Reflect, 531);
        FilterSignal s = random_signal(3, 532);
        std::fill(s.bias.begin(), s.bias.end(), 0.0f);
        TensorF32 expected = conv2d(x, p);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 35; ++i) expected.plane(0, c)[i] *= s.weight[c];
        CHECK(bitwise_equal(filter_mod_pseudo(x, p, s), expected));
    }

    TEST_CASE("shape errors") {
        const TensorF32 x = random_tensor({1, 4, 6, 6}, 540);
        const FilterSignal s = random_signal(4, 541);
        CHECK_THROWS_AS(filter_mod_direct(x, random_conv(5, 4, 3, 1, 1, PadMode::Zero, 542), s), ShapeError);
        CHECK_THROWS_AS(filter_mod_pseudo(x, random_conv(4, 4, 3, 2, 1, PadMode::Zero, 543), s), ShapeError);
        CHECK_THROWS_AS(filter_mod_pseudo(x, random_conv(4, 4, 3, 1, 1, PadMode::Zero, 544), random_signal(3, 545)),
                        ShapeError);
        CHECK_THROWS_AS(filter_mod_direct(x, random_conv(4, 4, 3, 1, 0, PadMode::Zero, 546), s), ShapeError);
    }
}

TEST_SUITE("modulated_resblock") {
    TEST_CASE("zero convolutions with neutral signals pass the input through bitwise") {
        const TensorF32 x = random_tensor({1, 6, 9, 7}, 700);
        ConvParams zero = random_conv(6, 6, 3, 1, 1, PadMode::Reflect, 701);
        std::fill(zero.weight.data().begin(), zero.weight.data().end(), 0.0f);
        std::fill(zero.bias.begin(), zero.bias.end(), 0.0f);
        const FilterSignal n = constant_signal(6, 1.0f, 0.0f);
        CHECK(bitwise_equal(modulated_resblock(x, zero, zero, n, n), x));
    }

    TEST_CASE("neutral signals equal the plain residual block") {
        const TensorF32 x = random_tensor({1, 6, 9, 7}, 710);
        const ConvParams c1 = random_conv(6, 6, 3, 1, 1, PadMode::Reflect, 711);
        const ConvParams c2 = random_conv(6, 6, 3, 1, 1, PadMode::Reflect, 712);
        const FilterSignal n = constant_signal(6, 1.0f, 0.0f);
        CHECK(bitwise_equal(modulated_resblock(x, c1, c2, n, n), residual_block(x, c1, c2)));
    }

    TEST_CASE("random case against direct filters and the naive convolution") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const TensorF32 x = random_tensor({1, 5, 8, 6}, 720 + seed);
            const ConvParams c1 = random_conv(5, 5, 3, 1, 1, PadMode::Reflect, 740 + seed);
            const ConvParams c2 = random_conv(5, 5, 3, 1, 1, PadMode::Reflect, 760 + seed);
            const FilterSignal s1 = random_signal(5, 780 + 2 * seed);
            const FilterSignal s2 = random_signal(5, 800 + 2 * seed);
            TensorF32 ref = relu(direct_oracle(x, c1, s1));
            ref = direct_oracle(ref, c2, s2);
            for (std::size_t i = 0; i < ref.numel(); ++i) ref.data()[i] += x.data()[i];
            CHECK(max_abs_diff(modulated_resblock(x, c1, c2, s1, s2), ref) <= 1e-4f);
        }
    }
}

TEST_SUITE("signals") {
    TEST_CASE("flatten order") {
        ModSignals m;
        m.mu = {1, 2};
        m.sigma = {3, 4};
        m.filters = {{{5, 6}, {7, 8}}};
        CHECK(flatten_signals(m) == std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
    }

    TEST_CASE("round trip and injectivity") {
        const std::vector<float> flat = random_vector(2 * 8 + 2 * 8 * 4, 900);
        const ModSignals m = unflatten_signals(flat, 8, 4);
        REQUIRE(m.filters.size() == 4);
        CHECK(m.mu[3] == flat[3]);
        CHECK(m.sigma[0] == flat[8]);
        CHECK(m.filters[1].weight[2] == flat[16 + 16 + 2]);
        CHECK(m.filters[3].bias[7] == flat.back());
        CHECK(flatten_signals(m) == flat);

        for (std::size_t i = 0; i < flat.size(); i += 7) {
            std::vector<float> other = flat;
            other[i] += 0.5f;
            const ModSignals o = unflatten_signals(other, 8, 4);
            CHECK_FALSE(o == m);
            CHECK(flatten_signals(o) != flatten_signals(m));
        }
        CHECK_THROWS_AS(unflatten_signals(flat, 8, 3), ShapeError);
    }

    TEST_CASE("validate") {
        ModSignals m = unflatten_signals(random_vector(2 * 3 + 2 * 3 * 2, 910, 0.1f, 1.0f), 3, 2);
        CHECK_NOTHROW(m.validate(3, 2));
        CHECK_THROWS_AS(m.validate(3, 4), ShapeError);
        CHECK_THROWS_AS(m.validate(4, 2), ShapeError);
        m.sigma[1] = 0.0f;
        CHECK_THROWS_AS(m.validate(3, 2), ValueError);
    }
}
