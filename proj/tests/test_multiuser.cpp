#include <sepkit/multiuser.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace sepkit;

namespace {

Rational r(std::int64_t a, std::int64_t b = 1) { return make_rational(a, b); }

ExactDistribution dist(std::vector<Rational> m) { return ExactDistribution(std::move(m)); }

UnicastDemandSet two_pairs(double D, ExactDistribution p = dist({r(1, 2), r(1, 2)}))
{
    UnicastDemandSet d;
    d.users = 2;
    d.pairs.push_back({0, 1, p, DistortionSpec::hamming(2), D});
    d.pairs.push_back({1, 0, p, DistortionSpec::hamming(2), D});
    return d;
}

double binomial_upper_tail(std::size_t n, double p, double above)
{
    double total = 0;
    for (std::size_t k = 0; k <= n; ++k)
        if (static_cast<double>(k) > above)
            total += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                              k * std::log(p) + (n - k) * std::log1p(-p));
    return total;
}

UnicastSystem interfering_system()
{
    auto d = two_pairs(0.1, dist({r(1, 3), r(2, 3)}));
    return UnicastSystem{interfering_two_user(r(1, 10)), d, ModemStack::identity(d), {}, {}, {}};
}

} // namespace

TEST(Medium, ExactLawOfIndependentLinks)
{
    auto m = two_way_links(bsc_matrix(r(1, 10)), bsc_matrix(r(1, 5)));
    auto law = m.exact_law({{0, 1}, {1, 1}});
    Rational total = 0;
    for (const auto& [o, p] : law)
        total += p;
    EXPECT_EQ(total, r(1));
    // user 1 hears 01 flipped on neither letter, user 0 hears 11 exactly.
    EXPECT_EQ(law.at({{1, 1}, {0, 1}}), r(4, 5) * r(4, 5) * r(9, 10) * r(9, 10));
    EXPECT_THROW(m.exact_law({{0, 2}, {1, 1}}), std::invalid_argument);
}

TEST(Medium, SamplerMatchesLetterLaw)
{
    auto m = interfering_two_user(r(1, 10));
    Rng rng(5);
    std::size_t xor_flips = 0, direct_flips = 0;
    const std::size_t n = 20000;
    auto out = m.apply({Sequence(n, 1), Sequence(n, 1)}, rng);
    for (std::size_t i = 0; i < n; ++i) {
        xor_flips += out[0][i] != 0;
        direct_flips += out[1][i] != 1;
    }
    const double sd = std::sqrt(0.09 / n);
    EXPECT_NEAR(static_cast<double>(xor_flips) / n, 0.1, 4 * sd);
    EXPECT_NEAR(static_cast<double>(direct_flips) / n, 0.1, 4 * sd);
}

TEST(Unicast, NoiselessLinksNeverExceed)
{
    auto d = two_pairs(0.0);
    auto m = two_way_links(identity_matrix<Rational>(2), identity_matrix<Rational>(2));
    SimulationOptions opt;
    opt.trials = 300;
    auto prof = simulate_unicast({m}, d, ModemStack::identity(d), 16, opt);
    for (const auto& p : prof.pairs)
        EXPECT_EQ(p.per_medium[0].events, 0u);
    EXPECT_TRUE(prof.warnings.empty());
}

TEST(Unicast, BscLinksMatchBinomialTail)
{
    auto d = two_pairs(0.15);
    auto m = two_way_links(bsc_matrix(r(1, 10)), bsc_matrix(r(1, 10)));
    SimulationOptions opt;
    opt.trials = 4000;
    opt.seed = 3;
    auto prof = simulate_unicast({m}, d, ModemStack::identity(d), 64, opt);
    const double tail = binomial_upper_tail(64, 0.1, 9.6);
    for (const auto& p : prof.pairs) {
        EXPECT_NEAR(p.worst(), tail, 4 * std::sqrt(tail * (1 - tail) / 4000));
    }
}

TEST(Unicast, IndependentLinksFactorize)
{
    auto d = two_pairs(0.1);
    auto m = two_way_links(bsc_matrix(r(1, 10)), bsc_matrix(r(3, 20)));
    SimulationOptions opt;
    opt.trials = 20000;
    opt.seed = 11;
    opt.threads = 2;
    auto prof = simulate_unicast({m}, d, ModemStack::identity(d), 20, opt);
    const double a = prof.pairs[0].per_medium[0].rate();
    const double b = prof.pairs[1].per_medium[0].rate();
    const double joint = prof.all_pairs_excess[0].rate();
    const double prod = a * b;
    EXPECT_GT(prod, 0.01);
    EXPECT_NEAR(joint, prod, 3 * std::sqrt(prod * (1 - prod) / opt.trials));
}

TEST(Unicast, WorstMediumAndDegenerateTarget)
{
    auto d = two_pairs(0.1);
    std::vector<MediumKernel> set{two_way_links(bsc_matrix(r(1, 20)), bsc_matrix(r(1, 20)), "quiet"),
                                  two_way_links(bsc_matrix(r(1, 5)), bsc_matrix(r(1, 5)), "loud")};
    SimulationOptions opt;
    opt.trials = 1000;
    auto prof = simulate_unicast(set, d, ModemStack::identity(d), 32, opt);
    for (const auto& p : prof.pairs)
        EXPECT_EQ(p.worst_medium, 1u);

    auto neg = two_pairs(-0.1);
    auto bad = simulate_unicast({set[0]}, neg, ModemStack::identity(neg), 8, opt);
    EXPECT_EQ(bad.pairs[0].per_medium[0].rate(), 1.0);
    EXPECT_EQ(bad.warnings.size(), 2u);
}

TEST(Unicast, Determinism)
{
    auto d = two_pairs(0.1);
    auto m = interfering_two_user(r(1, 10));
    SimulationOptions opt;
    opt.trials = 700;
    opt.seed = 9;
    auto a = simulate_unicast({m}, d, ModemStack::identity(d), 16, opt);
    opt.threads = 3;
    auto b = simulate_unicast({m}, d, ModemStack::identity(d), 16, opt);
    for (std::size_t p = 0; p < 2; ++p)
        EXPECT_EQ(a.pairs[p].per_medium[0].events, b.pairs[p].per_medium[0].events);
}

TEST(Replacement, IndependentLinksUnchanged)
{
    auto d = two_pairs(0.1, dist({r(1, 4), r(3, 4)}));
    UnicastSystem sys{two_way_links(bsc_matrix(r(1, 10)), bsc_matrix(r(1, 10))), d, ModemStack::identity(d), {}, {}, {}};
    ReplacementOptions opt;
    opt.rate = 0.5;
    auto [after, rep] = layered_replacement(sys, 0, 2, opt);
    EXPECT_TRUE(rep.exact);
    EXPECT_EQ(*rep.other_pairs_tv_exact, r(0));
    EXPECT_EQ(after.codebook_law.count(0), 1u);
}

TEST(Replacement, InterferingMediumPreservesOtherPairs)
{
    auto sys = interfering_system();
    ReplacementOptions opt;
    opt.rate = 0.5;
    for (std::size_t pair : {0, 1}) {
        auto [after, rep] = layered_replacement(sys, pair, 2, opt);
        ASSERT_TRUE(rep.exact);
        EXPECT_EQ(*rep.other_pairs_tv_exact, r(0));
        EXPECT_LE(rep.other_pairs_tv, 1e-12);
        for (const auto& tv : rep.input_tv_exact)
            EXPECT_EQ(*tv, r(0));
    }
}

TEST(Replacement, MismatchedLawIsDetected)
{
    auto sys = interfering_system();
    ReplacementOptions opt;
    opt.rate = 0.5;
    opt.letter_law = dist({r(1, 2), r(1, 2)});
    auto [after, rep] = layered_replacement(sys, 0, 2, opt);
    ASSERT_TRUE(rep.exact);
    EXPECT_GT(rep.other_pairs_tv, 1e-3);
    EXPECT_GT(rep.input_tv[0], 1e-3);
    EXPECT_EQ(rep.input_tv[1], 0.0);

    // Oracle: user 0 alone gets a new input law; pair 1 observes x1 xor x0 and
    // its own source, so the distance is the input distance of user 0 pushed
    // through an invertible map followed by a BSC, bounded by it.
    EXPECT_LE(rep.other_pairs_tv, rep.input_tv[0] + 1e-12);
}

TEST(Replacement, OrdersCommute)
{
    auto sys = interfering_system();
    ReplacementOptions opt;
    opt.rate = 0.5;
    auto a = layered_replacement(layered_replacement(sys, 0, 2, opt).first, 1, 2, opt).first;
    auto b = layered_replacement(layered_replacement(sys, 1, 2, opt).first, 0, 2, opt).first;
    EXPECT_EQ(total_variation(exact_system_law(a, 2), exact_system_law(b, 2)), r(0));
    EXPECT_EQ(total_variation(exact_system_law(a, 2), exact_system_law(sys, 2)), r(0));

    opt.letter_law = dist({r(1, 2), r(1, 2)});
    auto c = layered_replacement(layered_replacement(sys, 0, 2, opt).first, 1, 2, opt).first;
    auto e = layered_replacement(layered_replacement(sys, 1, 2, opt).first, 0, 2, opt).first;
    EXPECT_EQ(total_variation(exact_system_law(c, 2), exact_system_law(e, 2)), r(0));
}

TEST(Replacement, EmpiricalFallback)
{
    auto sys = interfering_system();
    ReplacementOptions opt;
    opt.rate = 0.5;
    opt.exact_budget = 4;
    opt.trials = 20000;
    opt.seed = 2;
    auto [after, rep] = layered_replacement(sys, 0, 2, opt);
    EXPECT_FALSE(rep.exact);
    EXPECT_LT(rep.other_pairs_tv, 3 * rep.noise_floor + 0.02);

    opt.letter_law = dist({r(1, 2), r(1, 2)});
    auto bad = layered_replacement(sys, 0, 2, opt).second;
    EXPECT_GT(bad.other_pairs_tv, 3 * bad.noise_floor);
}

TEST(Replacement, Preconditions)
{
    auto sys = interfering_system();
    ReplacementOptions opt;
    EXPECT_THROW(layered_replacement(sys, 2, 2, opt), std::invalid_argument);
    opt.letter_law = dist({r(1, 3), r(1, 3), r(1, 3)});
    EXPECT_THROW(layered_replacement(sys, 0, 2, opt), std::invalid_argument);
}

TEST(EndToEnd, NoiselessLinksAboveRateDistortion)
{
    auto d = two_pairs(0.2);
    auto m = two_way_links(identity_matrix<Rational>(2), identity_matrix<Rational>(2));
    // R(0.2) for a fair bit is 1 - h(0.2) = 0.278.
    PairCodes codes{{SourceCodeKind::random_covering, 0.45, std::nullopt, CodebookMode::automatic},
                    {ChannelCodeKind::identity, 0.0, std::nullopt, 0.0, std::nullopt, 0.0, CodebookMode::automatic}};
    SimulationOptions opt;
    opt.trials = 300;
    opt.seed = 4;
    auto prof = end_to_end_separation(d, {m}, {codes, codes}, 64, opt);
    for (const auto& p : prof.pairs)
        EXPECT_LE(p.worst(), 0.1) << p.pair;
}

TEST(EndToEnd, ZeroRatePairFailsAlone)
{
    auto d = two_pairs(0.2);
    auto m = two_way_links(identity_matrix<Rational>(2), identity_matrix<Rational>(2));
    PairCodes good{{SourceCodeKind::random_covering, 0.45, std::nullopt, CodebookMode::automatic},
                   {ChannelCodeKind::identity, 0.0, std::nullopt, 0.0, std::nullopt, 0.0, CodebookMode::automatic}};
    PairCodes starved = good;
    starved.source.rate = 0.0;
    SimulationOptions opt;
    opt.trials = 300;
    opt.seed = 6;
    auto prof = end_to_end_separation(d, {m}, {good, starved}, 64, opt);
    EXPECT_LE(prof.pairs[0].worst(), 0.1);
    EXPECT_GE(prof.pairs[1].worst(), 0.4);
}

TEST(EndToEnd, ZeroUsersGiveEmptyReport)
{
    UnicastDemandSet none;
    SimulationOptions opt;
    auto prof = end_to_end_separation(none, {}, {}, 8, opt);
    EXPECT_TRUE(prof.pairs.empty());
    EXPECT_TRUE(prof.media.empty());
}
