#include <sepkit/channels.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace sepkit;

namespace {

Rational r(std::int64_t a, std::int64_t b = 1) { return make_rational(a, b); }

BlockLaw product_law(const ExactChannelMatrix& k, const Sequence& in)
{
    BlockLaw law;
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < in.size(); ++i)
        total *= k.outputs();
    for (std::uint64_t idx = 0; idx < total; ++idx) {
        Sequence o(in.size());
        std::uint64_t v = idx;
        for (std::size_t i = in.size(); i-- > 0; v /= k.outputs())
            o[i] = static_cast<Symbol>(v % k.outputs());
        Rational p = 1;
        for (std::size_t i = 0; i < in.size(); ++i)
            p *= k(in[i], o[i]);
        if (p != 0)
            law[o] = p;
    }
    return law;
}

} // namespace

TEST(Apply, BscExamples)
{
    Rng rng(1);
    Sequence x{0, 1, 0, 1};
    EXPECT_EQ(bsc(r(0)).apply(x, rng), x);
    EXPECT_EQ(bsc(r(1)).apply(x, rng), (Sequence{1, 0, 1, 0}));
    auto k = bsc(r(1, 10));
    const int trials = 100000;
    Sequence zeros(4, 0);
    std::vector<int> flips(4, 0);
    for (int t = 0; t < trials; ++t) {
        auto y = k.apply(zeros, rng);
        for (std::size_t i = 0; i < 4; ++i)
            flips[i] += y[i];
    }
    double sigma = std::sqrt(0.1 * 0.9 / trials);
    for (int f : flips)
        EXPECT_NEAR(f / double(trials), 0.1, 5 * sigma);
    EXPECT_THROW(k.apply(Sequence{0, 2}, rng), std::invalid_argument);
    EXPECT_THROW(k.apply(Sequence{}, rng), std::invalid_argument);
}

TEST(Apply, DmcExactLawFactorizes)
{
    ExactChannelMatrix m(Matrix<Rational>(2, 3, {r(1, 2), r(1, 3), r(1, 6), r(0), r(1, 4), r(3, 4)}));
    auto k = dmc(m);
    for (std::uint64_t i = 0; i < 8; ++i) {
        auto in = sequence_at(i, 3, 2);
        auto law = k.exact_law(in);
        EXPECT_EQ(law, product_law(m, in));
        EXPECT_EQ(law_total(law), 1);
    }
}

TEST(Compose, IdentityCodersPreserveTheChannel)
{
    auto k = bsc(r(1, 10));
    auto c = compose(identity_map(), k, identity_map());
    for (std::size_t n = 1; n <= 3; ++n)
        for (std::uint64_t i = 0; i < (1u << n); ++i) {
            auto in = sequence_at(i, n, 2);
            EXPECT_EQ(c.exact_law(in), k.exact_law(in));
            EXPECT_EQ(law_total(c.exact_law(in)), 1);
        }
}

TEST(Compose, ConstantEncoderGivesInputIndependentOutput)
{
    auto c = compose(constant_letter_map(2, 2, 1), bsc(r(1, 5)), identity_map());
    auto ref = c.exact_law(Sequence{0, 0});
    for (std::uint64_t i = 1; i < 4; ++i)
        EXPECT_EQ(c.exact_law(sequence_at(i, 2, 2)), ref);
}

TEST(Compose, RepetitionAndMajority)
{
    auto c = compose(repetition_encoder(3), bsc(r(1, 10)), majority_decoder(3));
    auto law = c.exact_law(Sequence{0});
    // Oracle: P(at least two of three flips) with p = 1/10.
    Rational p = r(1, 10);
    Rational flip = 3 * p * p * (1 - p) + p * p * p;
    EXPECT_EQ(law[Sequence{1}], flip);
    EXPECT_NEAR(to_double(flip), 0.028, 1e-12);
    EXPECT_EQ(law_total(law), 1);
}

TEST(Compose, AlphabetMismatch)
{
    EXPECT_THROW(compose(identity_map(3), bsc(r(1, 10)), identity_map()), std::invalid_argument);
}

TEST(Compose, SharedSeedCoders)
{
    auto coders = CoderPair{[](std::uint64_t seed) {
                                Rng rng(seed);
                                return random_block_map(2, 2, 2, 2, rng);
                            },
                            [](std::uint64_t) { return identity_map(); }};
    auto a = compose(coders, 42, identity_channel());
    auto b = compose(coders, 42, identity_channel());
    for (std::uint64_t i = 0; i < 4; ++i)
        EXPECT_EQ(a.exact_law(sequence_at(i, 2, 2)), b.exact_law(sequence_at(i, 2, 2)));
}

TEST(HalfLying, Examples)
{
    auto k = half_lying_channel(4);
    Rng rng(2);
    Sequence x{0, 1, 0, 1};
    const int trials = 100000;
    int match = 0;
    for (int t = 0; t < trials; ++t)
        match += k.apply(x, rng) == x;
    double p = 0.5 + 0.5 / 16;
    EXPECT_NEAR(match / double(trials), p, 5 * std::sqrt(p * (1 - p) / trials));
    auto law = k.exact_law(x);
    EXPECT_EQ(law[x], p);
    EXPECT_EQ(law_total(law), 1);
    EXPECT_THROW(half_lying_channel(0), std::invalid_argument);
    EXPECT_THROW(k.apply(Sequence{0, 1}, rng), std::invalid_argument);
}

TEST(HalfLying, IdentitySchemeDistortion)
{
    const std::size_t n = 20;
    auto k = half_lying_channel(n);
    Rng rng(2024);
    std::bernoulli_distribution bit(0.5);
    const int trials = 100000;
    double total = 0;
    for (int t = 0; t < trials; ++t) {
        Sequence x(n);
        for (auto& s : x)
            s = bit(rng);
        auto y = k.apply(x, rng);
        for (std::size_t i = 0; i < n; ++i)
            total += x[i] != y[i];
    }
    EXPECT_NEAR(total / (trials * double(n)), 0.25, 0.01);
}

TEST(ExplicitBlock, RowsAndSampling)
{
    // n = 1 over a binary alphabet is just a 2x2 matrix.
    ExactChannelMatrix m(Matrix<Rational>(2, 2, {r(1, 4), r(3, 4), r(1), r(0)}));
    auto k = explicit_block_channel("blk", 2, 2, 1, m);
    EXPECT_EQ(k.exact_law(Sequence{1}).size(), 1u);
    Rng rng(0);
    EXPECT_EQ(k.apply(Sequence{1}, rng), Sequence{0});
    EXPECT_THROW(k.apply(Sequence{1, 1}, rng), std::invalid_argument);
}

TEST(Exact, StateLimit)
{
    auto k = bsc(r(1, 10));
    EXPECT_THROW(k.exact_law(Sequence(13, 0)), BudgetExceeded);
    EXPECT_NO_THROW(k.exact_law(Sequence(12, 0)));
}

TEST(Compound, SharedAlphabets)
{
    EXPECT_THROW(CompoundChannel({}), std::invalid_argument);
    EXPECT_THROW(CompoundChannel({bsc(r(1, 10)), identity_channel(3)}), std::invalid_argument);
    CompoundChannel c({bsc(r(1, 10)), bsc(r(1, 5))});
    EXPECT_EQ(c.size(), 2u);
}
