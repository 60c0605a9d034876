#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cfenv>
#include <cmath>
#include <limits>
#include <numeric>

#include "qvt/errors.hpp"
#include "qvt/quantizer.hpp"
#include "test_util.hpp"

using namespace qvt;

namespace {

// Scalar reference: row scale max|w|/q_max in f32, f64 ratio rounded by
// nearbyint under the default round-to-nearest-even mode, clip, rescale.
// Codes are integers, so a zero code dequantizes to +0.
std::vector<float> oracle_fq(const Tensor & w, int bits) {
    const float qmax = static_cast<float>((1 << (bits - 1)) - 1);
    const float qmin = -static_cast<float>(1 << (bits - 1));
    std::vector<float> out(w.size());
    for (std::int64_t r = 0; r < w.rows(); ++r) {
        float m = 0.0f;
        for (std::int64_t c = 0; c < w.cols(); ++c) m = std::max(m, std::fabs(w.at(r, c)));
        const float s = m / qmax;
        for (std::int64_t c = 0; c < w.cols(); ++c) {
            float v = 0.0f;
            if (s != 0.0f) {
                const double q = std::clamp(std::nearbyint(double(w.at(r, c)) / s), double(qmin), double(qmax));
                v              = q == 0.0 ? 0.0f : s * static_cast<float>(q);
            }
            out[static_cast<std::size_t>(r * w.cols() + c)] = v;
        }
    }
    return out;
}

bool same_bits(float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); }

}  // namespace

TEST(RoundHalfEven, Ties) {
    EXPECT_EQ(round_half_even(0.5f), 0.0f);
    EXPECT_EQ(round_half_even(1.5f), 2.0f);
    EXPECT_EQ(round_half_even(2.5f), 2.0f);
    EXPECT_EQ(round_half_even(-0.5f), 0.0f);
    EXPECT_EQ(round_half_even(-1.5f), -2.0f);
    EXPECT_EQ(round_half_even(-2.5f), -2.0f);
    EXPECT_EQ(round_half_even(2.4999998f), 2.0f);
    EXPECT_EQ(round_half_even(-3.7f), -4.0f);
}

TEST(RoundHalfEven, IgnoresRoundingMode) {
    const int saved = std::fegetround();
    std::fesetround(FE_UPWARD);
    const float r = round_half_even(2.5f);
    std::fesetround(saved);
    EXPECT_EQ(r, 2.0f);
}

TEST(RoundHalfEven, MatchesNearbyintOnDenseSample) {
    Rng rng(11);
    for (int i = 0; i < 100000; ++i) {
        const float x = static_cast<float>(rng.uniform(-40.0, 40.0));
        ASSERT_EQ(round_half_even(x), std::nearbyint(x)) << x;
        const float tie = static_cast<float>(static_cast<int>(x)) + 0.5f;
        ASSERT_EQ(round_half_even(tie), std::nearbyint(tie)) << tie;
    }
}

TEST(QuantSpec, Range) {
    QuantSpec s{3};
    EXPECT_EQ(s.q_min(), -4);
    EXPECT_EQ(s.q_max(), 3);
    EXPECT_EQ((QuantSpec{8}.q_max()), 127);
    EXPECT_THROW(QuantSpec{1}.validate(), ValidationError);
    EXPECT_THROW(QuantSpec{17}.validate(), ValidationError);
    EXPECT_NO_THROW(QuantSpec{16}.validate());
}

TEST(FakeQuantize, HandWorkedRow) {
    // s = fl(1/3) is slightly above 1/3, so the exact ratios are
    // {3 - 6e-8, -1.5 + 3e-8, 0.75 - 1.5e-8, 0}: codes {3, -1, 1, 0}. The
    // f32 quotient of -0.5 / s rounds to the tie -1.5 and would pick -2.
    const Tensor        w({1, 4}, {1.0f, -0.5f, 0.25f, 0.0f});
    const QuantizedView q = quantize(w, QuantSpec{3});
    EXPECT_EQ(-0.5f / (1.0f / 3.0f), -1.5f);
    EXPECT_EQ(q.codes, (std::vector<std::int32_t>{3, -1, 1, 0}));
    const float s = 1.0f / 3.0f;
    ASSERT_EQ(q.scales.size(), 1u);
    EXPECT_EQ(q.scales[0], s);
    const Tensor fq = fake_quantize_tensor(w, QuantSpec{3});
    EXPECT_EQ(fq[0], s * 3.0f);
    EXPECT_EQ(fq[1], -s);
    EXPECT_EQ(fq[2], s * 1.0f);
    EXPECT_EQ(fq[3], 0.0f);
    EXPECT_TRUE(q.dequantize().bitwise_equal(fq));
}

TEST(FakeQuantize, ZeroRowStaysZero) {
    const Tensor w({2, 3}, {0.0f, 0.0f, 0.0f, 1.0f, 2.0f, -3.0f});
    const auto   q = quantize(w, QuantSpec{3});
    EXPECT_EQ(q.scales[0], 0.0f);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(q.codes[static_cast<std::size_t>(c)], 0);
    const Tensor fq = fake_quantize_tensor(w, QuantSpec{3});
    for (int c = 0; c < 3; ++c) EXPECT_EQ(fq.at(0, c), 0.0f);
    EXPECT_EQ(fq.at(1, 2), -3.0f);
}

TEST(FakeQuantize, MatchesScalarOracleBitwise) {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const int    bits = std::array{2, 3, 4, 8}[trial % 4];
        const auto   rows = static_cast<std::int64_t>(1 + rng.below(16));
        const auto   cols = static_cast<std::int64_t>(1 + rng.below(16));
        const Tensor w    = testutil::random_tensor({rows, cols}, rng, rng.uniform(1e-3, 10.0));
        const Tensor fq   = fake_quantize_tensor(w, QuantSpec{bits});
        const auto   ref  = oracle_fq(w, bits);
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_TRUE(same_bits(fq[i], ref[i])) << trial << ":" << i;
    }
}

TEST(FakeQuantize, ErrorBoundCodeRangeAndIdempotence) {
    Rng         rng(9);
    const float eps = std::numeric_limits<float>::epsilon();
    for (int trial = 0; trial < 200; ++trial) {
        const QuantSpec spec{std::array{2, 3, 4, 8}[trial % 4]};
        const Tensor    w = testutil::random_tensor({1 + static_cast<std::int64_t>(rng.below(12)), 7}, rng);
        const auto      q  = quantize(w, spec);
        const Tensor    fq = q.dequantize();
        for (std::int64_t r = 0; r < w.rows(); ++r) {
            const float s = q.scales[static_cast<std::size_t>(r)];
            for (std::int64_t c = 0; c < w.cols(); ++c) {
                const auto   i    = static_cast<std::size_t>(r * w.cols() + c);
                const float  diff = std::fabs(fq[i] - w[i]);
                ASSERT_LE(diff, s / 2.0f * (1.0f + 8.0f * eps));
                ASSERT_LE(std::abs(q.codes[i]), spec.q_max());
            }
        }
        const Tensor once = fake_quantize_tensor(w, spec);
        EXPECT_EQ(quantize(once, spec).codes, q.codes);
    }
}

TEST(FakeQuantize, CommutesWithPermutations) {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t rows    = 1 + static_cast<std::int64_t>(rng.below(10));
        const std::int64_t cols    = 1 + static_cast<std::int64_t>(rng.below(10));
        const bool         signed_ = trial % 2 == 1;
        const Tensor       w       = testutil::random_tensor({rows, cols}, rng);
        std::vector<std::size_t> pr(static_cast<std::size_t>(rows)), pc(static_cast<std::size_t>(cols));
        std::iota(pr.begin(), pr.end(), 0);
        std::iota(pc.begin(), pc.end(), 0);
        rng.shuffle(std::span(pr));
        rng.shuffle(std::span(pc));
        std::vector<float> sr(pr.size(), 1.0f), sc(pc.size(), 1.0f);
        if (signed_) {
            for (float & s : sr) s = rng.uniform() < 0.5 ? -1.0f : 1.0f;
            for (float & s : sc) s = rng.uniform() < 0.5 ? -1.0f : 1.0f;
        }
        auto transform = [&](const Tensor & t) {
            std::vector<float> out(t.size());
            for (std::int64_t r = 0; r < rows; ++r) {
                for (std::int64_t c = 0; c < cols; ++c) {
                    out[static_cast<std::size_t>(r * cols + c)] =
                        sr[static_cast<std::size_t>(r)] * sc[static_cast<std::size_t>(c)] *
                        t.at(static_cast<std::int64_t>(pr[static_cast<std::size_t>(r)]),
                             static_cast<std::int64_t>(pc[static_cast<std::size_t>(c)]));
                }
            }
            return Tensor(t.shape(), std::move(out));
        };
        const QuantSpec spec{3};
        const Tensor    lhs = fake_quantize_tensor(transform(w), spec);
        const Tensor    rhs = transform(fake_quantize_tensor(w, spec));
        if (signed_) {
            // Sign flips can only disagree on the sign of a zero.
            EXPECT_EQ(lhs.values(), rhs.values());
        } else {
            EXPECT_TRUE(lhs.bitwise_equal(rhs));
        }
    }
}

TEST(FakeQuantize, InPlaceAliasing) {
    Rng                rng(2);
    const Tensor       w = testutil::random_tensor({4, 5}, rng);
    std::vector<float> buf(w.values());
    fake_quantize_into(buf, 4, 5, QuantSpec{3}, buf);
    EXPECT_TRUE(Tensor({4, 5}, buf).bitwise_equal(fake_quantize_tensor(w, QuantSpec{3})));
}

TEST(FakeQuantize, RejectsNonMatrix) {
    EXPECT_THROW(fake_quantize_tensor(Tensor({3}, {1, 2, 3}), QuantSpec{3}), ValidationError);
}

TEST(FakeQuantizeCheckpoint, LeavesBiasesAndExcludedNamesAlone) {
    Rng              rng(4);
    const Checkpoint ck(TensorMap{{"backbone.0.weight", testutil::random_tensor({3, 4}, rng)},
                                  {"backbone.0.bias", testutil::random_tensor({3}, rng)},
                                  {"head.weight", testutil::random_tensor({2, 3}, rng)}},
                        Meta{{"task", "x"}});
    const Checkpoint fq = fake_quantize_checkpoint(ck, QuantSpec{3}, NameFilter::default_head_filter());
    EXPECT_TRUE(fq.at("backbone.0.bias").bitwise_equal(ck.at("backbone.0.bias")));
    EXPECT_TRUE(fq.at("head.weight").bitwise_equal(ck.at("head.weight")));
    EXPECT_TRUE(fq.at("backbone.0.weight").bitwise_equal(fake_quantize_tensor(ck.at("backbone.0.weight"), QuantSpec{3})));
    EXPECT_EQ(fq.meta(), ck.meta());

    const Checkpoint all = fake_quantize_checkpoint(ck, QuantSpec{3}, NameFilter{});
    EXPECT_FALSE(all.at("head.weight").bitwise_equal(ck.at("head.weight")));
}

TEST(StraightThrough, BackwardIsIdentity) {
    const std::vector<float> g{0.5f, -1.0f, 3.0f};
    EXPECT_EQ(StraightThrough::backward(g), g);
    const Tensor w({1, 3}, {0.9f, -0.1f, 0.4f});
    EXPECT_TRUE(ste_apply(w, QuantSpec{3}).bitwise_equal(fake_quantize_tensor(w, QuantSpec{3})));
}
