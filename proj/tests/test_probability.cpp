#include <sepkit/probability.hpp>
#include <sepkit/rng.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace sepkit;

namespace {

// Independent reference for the binary entropy function.
double h2(double p)
{
    if (p <= 0 || p >= 1)
        return 0;
    return -p * std::log(p) / std::log(2.0) - (1 - p) * std::log(1 - p) / std::log(2.0);
}

ExactDistribution exact(std::vector<Rational> m) { return ExactDistribution(std::move(m)); }

Rational r(std::int64_t a, std::int64_t b = 1) { return make_rational(a, b); }

// Random rational pmf with small denominators and full support unless zeros are allowed.
std::vector<Rational> random_masses(std::size_t k, Rng& rng, bool allow_zero)
{
    std::uniform_int_distribution<int> w(allow_zero ? 0 : 1, 9);
    std::vector<int> weights(k);
    int total = 0;
    while (total == 0) {
        total = 0;
        for (auto& x : weights)
            total += (x = w(rng));
    }
    std::vector<Rational> m;
    for (int x : weights)
        m.push_back(r(x, total));
    return m;
}

} // namespace

TEST(Distribution, RejectsInvalidMasses)
{
    EXPECT_THROW(Distribution({0.5, 0.6}), std::invalid_argument);
    EXPECT_THROW(Distribution({-0.1, 1.1}), std::invalid_argument);
    EXPECT_THROW(exact({r(1, 3), r(1, 3)}), std::invalid_argument);
    EXPECT_THROW(Distribution(Alphabet{"a"}, {0.5, 0.5}), std::invalid_argument);
    EXPECT_NO_THROW(Distribution({0.1, 0.2, 0.7 + 1e-13}));
    EXPECT_EQ(exact({r(1, 3), r(2, 3)}).mode(), NumericMode::rational);
    EXPECT_EQ(Distribution({1.0}).mode(), NumericMode::floating);
}

TEST(Entropy, Examples)
{
    EXPECT_DOUBLE_EQ(entropy(Distribution({0.5, 0.5})), 1.0);
    EXPECT_DOUBLE_EQ(entropy(Distribution({1.0, 0.0})), 0.0);
    EXPECT_NEAR(entropy(Distribution({0.25, 0.75})), 0.811278, 1e-6);
    EXPECT_TRUE(entropy(exact({r(1), r(0)})).is_zero());
    EXPECT_NEAR(entropy(exact({r(1, 4), r(3, 4)})).value(), h2(0.25), 1e-12);
    // H(1/2,1/2) is exactly log2 2 = 1.
    ExactLog one;
    one.add_log2(1, 2);
    EXPECT_EQ(entropy(exact({r(1, 2), r(1, 2)})), one);
}

TEST(KlDivergence, Examples)
{
    Distribution p({0.5, 0.5});
    EXPECT_DOUBLE_EQ(kl_divergence(p, p), 0.0);
    EXPECT_NEAR(kl_divergence(p, Distribution({0.25, 0.75})), 0.5 * 1 + 0.5 * std::log2(2.0 / 3.0), 1e-12);
    EXPECT_NEAR(kl_divergence(p, Distribution({0.25, 0.75})), 0.207519, 1e-6);
    EXPECT_TRUE(std::isinf(kl_divergence(Distribution({1.0, 0.0}), Distribution({0.0, 1.0}))));
    EXPECT_TRUE(kl_divergence(exact({r(1), r(0)}), exact({r(0), r(1)})).is_infinite());
    EXPECT_THROW(kl_divergence(Distribution({1.0}), p), std::invalid_argument);
}

TEST(KlDivergence, NonnegativeWithEqualityOnlyAtIdentity)
{
    Rng rng(11);
    for (int t = 0; t < 300; ++t) {
        auto p = exact(random_masses(3, rng, true));
        auto q = exact(random_masses(3, rng, false));
        auto d = kl_divergence(p, q);
        EXPECT_GE(d.value(), -1e-12);
        EXPECT_EQ(d.is_zero(), p == q);
        EXPECT_TRUE(kl_divergence(q, q).is_zero());
    }
}

TEST(MutualInformation, Examples)
{
    Distribution u({0.5, 0.5});
    EXPECT_NEAR(mutual_information(u, bsc_matrix(0.0)), 1.0, 1e-15);
    EXPECT_NEAR(mutual_information(Distribution({0.3, 0.7}), bsc_matrix(0.5)), 0.0, 1e-15);
    EXPECT_NEAR(mutual_information(u, bsc_matrix(0.1)), 1 - h2(0.1), 1e-12);
    EXPECT_NEAR(mutual_information(u, bsc_matrix(0.1)), 0.531004, 1e-6);
    EXPECT_THROW(mutual_information(Distribution({1.0}), bsc_matrix(0.1)), std::invalid_argument);
    // BSC(1/2) is exactly useless in rational mode too.
    EXPECT_TRUE(mutual_information(exact({r(1, 3), r(2, 3)}), bsc_matrix(r(1, 2))).is_zero());
}

TEST(MutualInformation, AgreesWithJointForm)
{
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        auto q = exact(random_masses(3, rng, true));
        Matrix<Rational> k(3, 2);
        for (std::size_t i = 0; i < 3; ++i) {
            auto row = random_masses(2, rng, true);
            k(i, 0) = row[0];
            k(i, 1) = row[1];
        }
        ExactChannelMatrix km(k);
        auto joint = ExactJointDistribution::from_channel(q, km);
        EXPECT_EQ(mutual_information(q, km), mutual_information(joint));
        auto qf = q.to_float();
        auto kf = km.to_float();
        EXPECT_NEAR(mutual_information(qf, kf), mutual_information(JointDistribution::from_channel(qf, kf)), 1e-12);
    }
}

TEST(InformationDensity, Examples)
{
    Distribution u({0.5, 0.5});
    EXPECT_NEAR(information_density(0, 0, u, bsc_matrix(0.1)), std::log2(0.9 / 0.5), 1e-12);
    EXPECT_NEAR(information_density(0, 0, u, bsc_matrix(0.1)), 0.847997, 1e-6);
    EXPECT_DOUBLE_EQ(information_density(1, 1, u, identity_matrix<double>(2)), 1.0);
    EXPECT_DOUBLE_EQ(information_density(0, 1, u, bsc_matrix(0.5)), 0.0);
    EXPECT_THROW(information_density(0, 1, Distribution({1.0, 0.0}), identity_matrix<double>(2)), std::domain_error);
}

TEST(InformationDensity, ExpectationIsMutualInformation)
{
    Rng rng(9);
    for (int t = 0; t < 100; ++t) {
        auto q = exact(random_masses(2, rng, false)).to_float();
        ChannelMatrix k(Matrix<double>(2, 3, [&] {
            std::vector<double> v;
            for (int i = 0; i < 2; ++i)
                for (auto& m : random_masses(3, rng, false))
                    v.push_back(to_double(m));
            return v;
        }()));
        k = ExactChannelMatrix(Matrix<Rational>(2, 3, [&] {
                std::vector<Rational> v;
                for (std::size_t i = 0; i < 2; ++i)
                    for (std::size_t j = 0; j < 3; ++j)
                        v.push_back(exact_from_double(k(i, j)));
                for (std::size_t i = 0; i < 2; ++i) {
                    Rational s = v[3 * i] + v[3 * i + 1] + v[3 * i + 2];
                    v[3 * i + 2] += 1 - s;
                }
                return v;
            }())).to_float();
        double e = 0;
        for (Symbol a = 0; a < 2; ++a)
            for (Symbol b = 0; b < 3; ++b)
                e += q[a] * k(a, b) * information_density(a, b, q, k);
        EXPECT_NEAR(e, mutual_information(q, k), 1e-10);
    }
}

TEST(KlChain, ExactOnRandomJoints)
{
    Rng rng(3);
    auto p = exact({r(1, 3), r(2, 3)});
    for (int t = 0; t < 200; ++t) {
        auto m = random_masses(6, rng, true);
        ExactJointDistribution q(Matrix<Rational>(2, 3, m));
        auto qz = q.row_marginal();
        auto qy = q.col_marginal();
        auto lhs = kl_divergence(q, ExactJointDistribution::product(p, qy));
        auto rhs = kl_divergence(qz, p) + kl_divergence(q, ExactJointDistribution::product(qz, qy));
        EXPECT_EQ(lhs, rhs);

        auto qf = JointDistribution(Matrix<double>(2, 3, [&] {
            std::vector<double> v;
            for (auto& x : m)
                v.push_back(to_double(x));
            return v;
        }()));
        auto pf = p.to_float();
        double l = kl_divergence(qf, JointDistribution::product(pf, qf.col_marginal()));
        double rr = kl_divergence(qf.row_marginal(), pf) +
                    kl_divergence(qf, JointDistribution::product(qf.row_marginal(), qf.col_marginal()));
        EXPECT_NEAR(l, rr, 1e-10);
    }
}

TEST(ExactLog, CoprimeReduction)
{
    ExactLog a;
    a.add_log2(1, 6);
    a.add_log2(-1, 2);
    a.add_log2(-1, 3);
    EXPECT_TRUE(a.is_zero());
    ExactLog b;
    b.add_log2(2, 4);
    ExactLog c;
    c.add_log2(4, 2);
    EXPECT_EQ(b, c);
    EXPECT_NEAR(b.value(), 4.0, 1e-15);
    ExactLog d;
    d.add_log2(1, r(9, 4));
    ExactLog e;
    e.add_log2(2, 3);
    e.add_log2(-2, 2);
    EXPECT_EQ(d, e);
}

TEST(TotalVariation, Basic)
{
    std::vector<Rational> a{r(1, 2), r(1, 2)}, b{r(1, 4), r(3, 4)};
    EXPECT_EQ(total_variation<Rational>(a, b), r(1, 4));
    EXPECT_EQ(total_variation<Rational>(a, a), r(0));
}

TEST(Parsing, Rationals)
{
    EXPECT_EQ(parse_rational("3/6"), r(1, 2));
    EXPECT_EQ(parse_rational("0.1"), r(1, 10));
    EXPECT_EQ(parse_rational("-2"), r(-2));
    EXPECT_EQ(to_string(r(2, 4)), "1/2");
    EXPECT_THROW(parse_rational("1/0"), std::invalid_argument);
    EXPECT_THROW(parse_rational("x"), std::invalid_argument);
    EXPECT_EQ(exact_from_double(0.375), r(3, 8));
}
