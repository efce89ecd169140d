#include <sepkit/distortion.hpp>

#include <gtest/gtest.h>

using namespace sepkit;

TEST(BlockDistortion, HammingExamples)
{
    auto h = DistortionSpec::hamming(2);
    EXPECT_EQ(block_distortion(h, Sequence{0, 0, 1, 1}, Sequence{0, 0, 1, 1}), 0);
    EXPECT_EQ(block_distortion(h, Sequence{0, 0, 1, 1}, Sequence{0, 1, 0, 1}), 2);
    EXPECT_EQ(block_distortion(h, Sequence{0, 0, 1, 1}, Sequence{1, 1, 0, 0}), 4);
    EXPECT_THROW(block_distortion(h, Sequence{0, 1}, Sequence{0}), std::invalid_argument);
    EXPECT_THROW(block_distortion(h, Sequence{2}, Sequence{0}), std::invalid_argument);
    EXPECT_TRUE(h.is_hamming());
}

TEST(BlockDistortion, RejectsInvalidMatrices)
{
    EXPECT_THROW(DistortionSpec::additive(Matrix<double>(2, 2, {0, -1, 1, 0})), std::invalid_argument);
    EXPECT_THROW(DistortionSpec::additive(Matrix<double>(1, 1, {std::nan("")})), std::invalid_argument);
}

TEST(BlockDistortion, NonnegativeAndZeroIffEqual)
{
    auto h = DistortionSpec::hamming(3);
    for (std::uint64_t a = 0; a < 81; ++a)
        for (std::uint64_t b = 0; b < 81; ++b) {
            auto x = sequence_at(a, 4, 3);
            auto y = sequence_at(b, 4, 3);
            double d = h.block(x, y);
            EXPECT_GE(d, 0);
            EXPECT_EQ(d == 0, x == y);
        }
}

TEST(Invariance, AdditiveSpecsExhaustive)
{
    auto m = DistortionSpec::additive(Matrix<double>(2, 3, {0, 1, 2.5, 3, 0, 0.5}), "custom");
    for (std::size_t n = 1; n <= 5; ++n) {
        auto rep = check_permutation_invariance(m, n);
        EXPECT_TRUE(rep.invariant);
        EXPECT_TRUE(rep.exhaustive);
    }
    EXPECT_TRUE(check_permutation_invariance(DistortionSpec::hamming(2), 4).invariant);
}

TEST(Invariance, PositionWeightedFailsWithWitness)
{
    auto pw = DistortionSpec::position_weighted(2);
    auto rep = check_permutation_invariance(pw, 3);
    EXPECT_FALSE(rep.invariant);
    ASSERT_TRUE(rep.witness.has_value());
    const auto& w = *rep.witness;
    EXPECT_NE(w.original, w.permuted);
    EXPECT_EQ(pw.block(w.x, w.y), w.original);
    EXPECT_EQ(pw.block(w.pi.apply(w.x), w.pi.apply(w.y)), w.permuted);
    EXPECT_THROW(CertifiedDistortion::certify(pw, 3), VerificationFailure);
    EXPECT_FALSE(check_permutation_invariance(pw, 10, InvarianceMode::random, 500, 1).invariant);
}

TEST(Invariance, SortedSequenceIsInvariant)
{
    auto s = DistortionSpec::sorted_sequence(2);
    auto rep = check_permutation_invariance(s, 4);
    EXPECT_TRUE(rep.invariant);
    // 4! permutations times 16 x 16 pairs.
    EXPECT_EQ(rep.checks, 24u * 256u);
    EXPECT_NO_THROW(CertifiedDistortion::certify(s, 9, 3));
    EXPECT_THROW(check_permutation_invariance(s, 7), std::invalid_argument);
}

TEST(Certified, BlocklengthIsChecked)
{
    auto c = CertifiedDistortion::certify(DistortionSpec::hamming(2), 4);
    EXPECT_NO_THROW(c.require_blocklength(4));
    EXPECT_THROW(c.require_blocklength(5), std::invalid_argument);
}

TEST(DMax, Examples)
{
    auto h = DistortionSpec::hamming(2);
    EXPECT_DOUBLE_EQ(d_max(h, Distribution({0.5, 0.5})), 0.5);
    EXPECT_NEAR(d_max(h, Distribution({0.9, 0.1})), 0.1, 1e-15);
    EXPECT_DOUBLE_EQ(d_max(DistortionSpec::additive(Matrix<double>(2, 2, 0.0)), Distribution({0.5, 0.5})), 0.0);
    EXPECT_THROW(d_max(DistortionSpec::sorted_sequence(2), Distribution({0.5, 0.5})), std::invalid_argument);
    EXPECT_DOUBLE_EQ(d_min(h, Distribution({0.5, 0.5})), 0.0);
}
