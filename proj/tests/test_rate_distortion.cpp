#include <sepkit/rate_distortion.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace sepkit;

namespace {

double h2(double p)
{
    if (p <= 0 || p >= 1)
        return 0;
    return -(p * std::log(p) + (1 - p) * std::log(1 - p)) / std::log(2.0);
}

double achieved_distortion(const RateDistortionResult& r, const Distribution& p, const DistortionSpec& d)
{
    double acc = 0;
    for (std::size_t x = 0; x < p.size(); ++x)
        for (std::size_t y = 0; y < d.y_size(); ++y)
            acc += p[x] * r.test_channel(x, y) * d.letter(Symbol(x), Symbol(y));
    return acc;
}

} // namespace

TEST(BlahutArimoto, UniformBinaryHamming)
{
    Distribution u({0.5, 0.5});
    auto h = DistortionSpec::hamming(2);
    for (double D : {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45}) {
        auto r = blahut_arimoto(u, h, D);
        EXPECT_NEAR(r.rate, 1 - h2(D), 1e-6) << "D=" << D;
        EXPECT_NEAR(r.distortion, D, 1e-8);
        EXPECT_LE(achieved_distortion(r, u, h), D + 1e-8);
        EXPECT_NEAR(mutual_information(u, r.test_channel), r.rate, 1e-8);
        EXPECT_LT(r.gap, 1e-9);
    }
    EXPECT_NEAR(blahut_arimoto(u, h, 0.1).rate, 0.531004, 1e-6);
}

TEST(BlahutArimoto, Endpoints)
{
    Distribution u({0.5, 0.5});
    auto h = DistortionSpec::hamming(2);
    EXPECT_EQ(blahut_arimoto(u, h, 0.5).rate, 0.0);
    EXPECT_EQ(blahut_arimoto(u, h, 0.9).rate, 0.0);
    EXPECT_NEAR(blahut_arimoto(u, h, 0.0).rate, 1.0, 1e-9);
    EXPECT_THROW(blahut_arimoto(u, h, -0.1), std::domain_error);
    EXPECT_THROW(blahut_arimoto(u, DistortionSpec::sorted_sequence(2), 0.1), std::invalid_argument);
}

TEST(BlahutArimoto, BelowMinimumDistortion)
{
    // Every reproduction costs at least 1.
    auto d = DistortionSpec::additive(Matrix<double>(2, 2, {1, 2, 2, 1}));
    Distribution u({0.5, 0.5});
    EXPECT_THROW(blahut_arimoto(u, d, 0.5), std::domain_error);
    EXPECT_NEAR(blahut_arimoto(u, d, 1.0).rate, 1.0, 1e-9);
}

TEST(BlahutArimoto, SkewedSourceMatchesClosedForm)
{
    // Binary source with Hamming distortion: R(D) = h(p) - h(D) for D < min(p, 1-p).
    Distribution p({0.8, 0.2});
    auto h = DistortionSpec::hamming(2);
    for (double D : {0.02, 0.05, 0.1, 0.15}) {
        auto r = blahut_arimoto(p, h, D);
        EXPECT_NEAR(r.rate, h2(0.2) - h2(D), 1e-6) << "D=" << D;
    }
    EXPECT_EQ(blahut_arimoto(p, h, 0.2).rate, 0.0);
    EXPECT_NEAR(blahut_arimoto(ExactDistribution({make_rational(4, 5), make_rational(1, 5)}), h, 0.1).rate,
                h2(0.2) - h2(0.1), 1e-6);
}

TEST(BlahutArimoto, TernaryHammingClosedForm)
{
    // Uniform m-ary with Hamming: R(D) = log m - h(D) - D log(m-1).
    Distribution u = Distribution::uniform(indexed_alphabet(3));
    auto h = DistortionSpec::hamming(3);
    for (double D : {0.1, 0.3, 0.5}) {
        auto r = blahut_arimoto(u, h, D);
        EXPECT_NEAR(r.rate, std::log2(3.0) - h2(D) - D, 1e-6);
    }
}

TEST(RdCurve, Examples)
{
    Distribution u({0.5, 0.5});
    auto h = DistortionSpec::hamming(2);
    auto ends = rd_curve(u, h, {0.0, 0.5});
    EXPECT_NEAR(ends[0].rate, 1.0, 1e-9);
    EXPECT_EQ(ends[1].rate, 0.0);
    auto c = rd_curve(u, h, {0.1, 0.2, 0.3}, 2);
    const double expect[] = {0.531004, 0.278072, 0.118709};
    for (int i = 0; i < 3; ++i)
        EXPECT_NEAR(c[i].rate, expect[i], 1e-6);
    auto single = rd_curve(u, h, {0.17});
    EXPECT_EQ(single[0].rate, blahut_arimoto(u, h, 0.17).rate);
}

TEST(RdCurve, MonotoneAndConvex)
{
    Distribution p({0.5, 0.3, 0.2});
    auto d = DistortionSpec::additive(Matrix<double>(3, 3, {0, 1, 2, 1, 0, 1, 2, 1, 0}));
    std::vector<double> grid;
    double dm = d_max(d, p);
    for (int i = 0; i <= 20; ++i)
        grid.push_back(dm * i / 20.0);
    auto c = rd_curve(p, d, grid);
    for (std::size_t i = 1; i < c.size(); ++i)
        EXPECT_LE(c[i].rate, c[i - 1].rate + 1e-8);
    for (std::size_t i = 1; i + 1 < c.size(); ++i)
        EXPECT_LE(c[i].rate, 0.5 * (c[i - 1].rate + c[i + 1].rate) + 1e-7);
    for (const auto& r : c)
        EXPECT_NEAR(mutual_information(p, r.test_channel), r.rate, 1e-8);
}

TEST(RdCurve, Continuity)
{
    Distribution p({0.7, 0.3});
    auto h = DistortionSpec::hamming(2);
    for (double D : {0.05, 0.12, 0.2}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double delta : {1e-2, 1e-3, 1e-4}) {
            double diff = std::abs(blahut_arimoto(p, h, D).rate - blahut_arimoto(p, h, D + delta).rate);
            EXPECT_LT(diff, prev);
            prev = diff;
        }
        EXPECT_LT(prev, 1e-3);
    }
}
