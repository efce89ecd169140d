#include <sepkit/covering_packing.hpp>

#include <gtest/gtest.h>

using namespace sepkit;

namespace {

Rational r(std::int64_t a, std::int64_t b = 1) { return make_rational(a, b); }

ExactDistribution dist(std::vector<Rational> m) { return ExactDistribution(std::move(m)); }

const UniformSourceSpec& half()
{
    static UniformSourceSpec s(dist({r(1, 2), r(1, 2)}));
    return s;
}

CertifiedDistortion hamming() { return CertifiedDistortion::certify(DistortionSpec::hamming(2), 1); }

// Channel side by brute force over all binary words of the source type.
Rational brute_channel(std::size_t n, const ExactDistribution& p, const Sequence& y, const Rational& D)
{
    auto ones = type_counts(n, p)[1];
    std::uint64_t total = 0, hits = 0;
    for (std::uint64_t w = 0; w < (std::uint64_t{1} << n); ++w) {
        auto u = sequence_at(w, n, 2);
        if (letter_counts(u, 2)[1] != ones)
            continue;
        ++total;
        std::size_t d = 0;
        for (std::size_t i = 0; i < n; ++i)
            d += u[i] != y[i];
        if (Rational(d) > D * n)
            ++hits;
    }
    return r(hits, total);
}

} // namespace

TEST(Excess, ChannelSideExamples)
{
    auto h = hamming();
    EXPECT_EQ(excess_prob_channel_side(4, half(), dist({r(1, 2), r(1, 2)}), h, r(1, 4)), r(5, 6));
    EXPECT_EQ(excess_prob_channel_side(4, half(), dist({r(1, 2), r(1, 2)}), h, r(1)), r(0));
    EXPECT_EQ(excess_prob_channel_side(4, half(), dist({r(1), r(0)}), h, r(1, 4)), r(1));
    EXPECT_EQ(excess_prob_channel_side(4, half(), dist({r(1, 2), r(1, 2)}), h, r(1, 4), ExcessMethod::enumerate),
              r(5, 6));
}

TEST(Excess, SourceSideExamples)
{
    auto h = hamming();
    auto q = dist({r(1, 2), r(1, 2)});
    EXPECT_EQ(excess_prob_source_side(4, half(), q, h, r(1, 4)), r(5, 6));
    EXPECT_EQ(excess_prob_source_side(2, half(), q, h, r(0)), r(1, 2));
    EXPECT_EQ(excess_prob_source_side(2, half(), q, h, r(1)), r(0));
    EXPECT_EQ(excess_prob_source_side(4, half(), q, h, r(1, 4), ExcessMethod::enumerate), r(5, 6));
}

TEST(Excess, Preconditions)
{
    auto h = hamming();
    UniformSourceSpec third(dist({r(1, 3), r(2, 3)}));
    EXPECT_THROW(excess_prob_channel_side(4, third, dist({r(1, 2), r(1, 2)}), h, r(0)), std::invalid_argument);
    EXPECT_THROW(excess_prob_channel_side(4, half(), dist({r(1, 3), r(2, 3)}), h, r(0)), std::invalid_argument);
    auto sorted = CertifiedDistortion::certify(DistortionSpec::sorted_sequence(2), 4);
    EXPECT_THROW(excess_prob_channel_side(6, half(), dist({r(1, 2), r(1, 2)}), sorted, r(0)), std::invalid_argument);
    EXPECT_THROW(CertifiedDistortion::certify(DistortionSpec::position_weighted(2), 3), VerificationFailure);
    EXPECT_THROW(excess_prob_channel_side(4, half(), dist({r(1, 2), r(1, 2)}), h, r(1, 4), ExcessMethod::enumerate,
                                          std::nullopt, 2),
                 BudgetExceeded);
}

TEST(Excess, OverlapCountingMatchesEnumeration)
{
    auto h = hamming();
    Matrix<double> m(3, 2, {0, 1, 0.5, 0.5, 2, 0});
    auto general = CertifiedDistortion::certify(DistortionSpec::additive(m), 1);
    std::vector<ExactDistribution> sources{dist({r(1, 2), r(1, 2)}), dist({r(1, 4), r(3, 4)})};
    for (const auto& p : sources) {
        UniformSourceSpec src(p);
        for (std::size_t n = src.n0; n <= 8; n += src.n0)
            for (const auto& q : achievable_types(n, indexed_alphabet(2)))
                for (std::size_t k = 0; k <= n; ++k) {
                    Rational D = r(static_cast<std::int64_t>(k), static_cast<std::int64_t>(n));
                    EXPECT_EQ(excess_prob_channel_side(n, src, q, h, D, ExcessMethod::overlap),
                              excess_prob_channel_side(n, src, q, h, D, ExcessMethod::enumerate));
                    EXPECT_EQ(excess_prob_source_side(n, src, q, h, D, ExcessMethod::overlap),
                              excess_prob_source_side(n, src, q, h, D, ExcessMethod::enumerate));
                }
    }
    UniformSourceSpec tern(dist({r(1, 4), r(1, 4), r(1, 2)}));
    for (std::size_t n : {4, 8})
        for (const auto& q : achievable_types(n, indexed_alphabet(2)))
            for (Rational D : {r(0), r(1, 4), r(3, 8), r(1, 2), r(1)}) {
                EXPECT_EQ(excess_prob_channel_side(n, tern, q, general, D, ExcessMethod::overlap),
                          excess_prob_channel_side(n, tern, q, general, D, ExcessMethod::enumerate));
                EXPECT_EQ(excess_prob_source_side(n, tern, q, general, D, ExcessMethod::overlap),
                          excess_prob_source_side(n, tern, q, general, D, ExcessMethod::enumerate));
            }
}

TEST(Excess, BruteForceOracle)
{
    auto h = hamming();
    Rng rng(8);
    UniformSourceSpec third(dist({r(1, 3), r(2, 3)}));
    for (std::size_t n : {3, 6, 9}) {
        for (const auto& q : achievable_types(n, indexed_alphabet(2))) {
            TypeClass vq(n, q);
            auto y = vq.sample(rng);
            for (std::size_t k = 0; k <= n; ++k) {
                Rational D = r(static_cast<std::int64_t>(k), static_cast<std::int64_t>(n));
                EXPECT_EQ(excess_prob_channel_side(n, third, q, h, D, ExcessMethod::enumerate, y),
                          brute_channel(n, third.p_x, y, D));
            }
        }
    }
}

TEST(Duality, Examples)
{
    auto h = hamming();
    auto s = verify_duality(2, half(), dist({r(1, 2), r(1, 2)}), h, r(0));
    EXPECT_EQ(s.channel_side, r(1, 2));
    EXPECT_EQ(s.source_side, r(1, 2));
    EXPECT_EQ(s.representatives_checked, 5u);
    auto b = verify_duality(4, half(), dist({r(1, 2), r(1, 2)}), h, r(1, 4));
    EXPECT_EQ(b.channel_side, r(5, 6));
    UniformSourceSpec third(dist({r(1, 3), r(2, 3)}));
    for (const auto& q : achievable_types(6, indexed_alphabet(2)))
        for (Rational D : {r(0), r(1, 6), r(1, 3)})
            EXPECT_NO_THROW(verify_duality(6, third, q, h, D, 3));
}

TEST(Duality, SortedSequenceDistortion)
{
    UniformSourceSpec third(dist({r(1, 3), r(2, 3)}));
    auto sorted = CertifiedDistortion::certify(DistortionSpec::sorted_sequence(2), 6);
    for (const auto& q : achievable_types(6, indexed_alphabet(2)))
        for (std::size_t k = 0; k <= 6; ++k)
            EXPECT_NO_THROW(verify_duality(6, third, q, sorted, r(static_cast<std::int64_t>(k), 6), 11));
}

TEST(Duality, RejectsCertificateAtOtherLength)
{
    auto sorted = CertifiedDistortion::certify(DistortionSpec::sorted_sequence(2), 4);
    EXPECT_THROW(verify_duality(6, half(), dist({r(1, 2), r(1, 2)}), sorted, r(0)), std::invalid_argument);
}

TEST(ComputeA, Examples)
{
    auto h = hamming();
    auto a = compute_A(4, half(), h, r(1, 4));
    EXPECT_EQ(a.A, r(1, 2));
    EXPECT_EQ(a.minimizer.masses(), (std::vector<Rational>{r(1, 4), r(3, 4)}));
    std::vector<Rational> per;
    for (const auto& [q, v] : a.per_type)
        per.push_back(v);
    EXPECT_EQ(per, (std::vector<Rational>{r(1), r(1, 2), r(5, 6), r(1, 2), r(1)}));
    EXPECT_EQ(compute_A(4, half(), h, r(1)).A, r(0));
    auto z = compute_A(2, half(), h, r(0));
    EXPECT_EQ(z.A, r(1, 2));
    EXPECT_EQ(z.minimizer.masses(), (std::vector<Rational>{r(1, 2), r(1, 2)}));
}

TEST(ComputeA, IsACertifiedMinimum)
{
    auto h = hamming();
    UniformSourceSpec third(dist({r(1, 3), r(2, 3)}));
    for (std::size_t n : {3, 6, 9, 12})
        for (std::size_t k = 0; k <= n; ++k) {
            Rational D = r(static_cast<std::int64_t>(k), static_cast<std::int64_t>(n));
            auto a = compute_A(n, third, h, D, 2);
            for (const auto& q : achievable_types(n, indexed_alphabet(2)))
                EXPECT_LE(a.A, excess_prob_channel_side(n, third, q, h, D));
        }
}

TEST(Threshold, Trace)
{
    auto h = hamming();
    auto zero = threshold_trace(half(), h, r(1, 4), 0.0, {4, 8, 12});
    for (const auto& p : zero.points) {
        EXPECT_EQ(p.channel_functional, 1.0);
        EXPECT_EQ(*p.channel_exact, r(1));
    }
    auto t = threshold_trace(half(), h, r(1, 4), 0.1, {4, 8, 12});
    ASSERT_EQ(t.points.size(), 3u);
    EXPECT_EQ(t.points[0].A, r(1, 2));
    EXPECT_EQ(t.points[0].message_bits, 0u);
    EXPECT_EQ(t.points[2].message_bits, 1u);
    EXPECT_EQ(*t.points[2].channel_exact, t.points[2].A);
    EXPECT_EQ(*t.points[2].source_exact, t.points[2].A * t.points[2].A);
    auto big = threshold_trace(half(), h, r(1), 0.5, {4});
    EXPECT_EQ(big.points[0].source_functional, 0.0);
}

TEST(MonteCarlo, MatchesExactFormulas)
{
    auto h = hamming();
    auto q = dist({r(1, 4), r(3, 4)});
    for (std::size_t n : {4, 8})
        for (double R : {0.25, 0.5}) {
            auto est = mc_packing_covering(n, half(), q, h, r(1, 4), R, 10000, 77 + n);
            EXPECT_TRUE(est.consistent()) << n << " " << R << ": " << est.packing_correct.rate() << " vs "
                                          << to_double(est.packing_exact) << ", " << est.covering_error.rate()
                                          << " vs " << to_double(est.covering_exact);
        }
}

TEST(MonteCarlo, EdgeCases)
{
    auto h = hamming();
    auto q = dist({r(1, 2), r(1, 2)});
    auto all = mc_packing_covering(4, half(), q, h, r(1), 0.5, 500, 1);
    EXPECT_EQ(all.covering_error.events, 0u);
    auto single = mc_packing_covering(4, half(), q, h, r(0), 0.0, 10000, 2);
    EXPECT_EQ(single.codebook_size, 1u);
    EXPECT_EQ(single.covering_exact, r(5, 6));
    double x = 5.0 / 6.0;
    EXPECT_NEAR(single.covering_error.rate(), x, 3 * std::sqrt(x * (1 - x) / 10000));
}
