#include <sepkit/conditional_types.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace sepkit;

namespace {

// Pr[Z typical and d(Z, ref) <= nD] by summing over all |gen|^n blocks.
double brute_force(const Distribution& gen, const Matrix<double>& cost, const std::optional<TypicalityWindow>& w,
                   const Sequence& ref, double D)
{
    const std::size_t n = ref.size();
    const std::size_t total = *sequence_space_size(gen.size(), n);
    double acc = 0;
    for (std::uint64_t idx = 0; idx < total; ++idx) {
        auto z = sequence_at(idx, n, gen.size());
        if (w && !w->contains(letter_counts(z, gen.size())))
            continue;
        double d = 0, p = 1;
        for (std::size_t i = 0; i < n; ++i) {
            d += cost(z[i], ref[i]);
            p *= gen[z[i]];
        }
        if (within_distortion(d, n, D))
            acc += p;
    }
    return acc;
}

} // namespace

TEST(TypicalityWindow, ExactBounds)
{
    auto p = ExactDistribution({make_rational(1, 2), make_rational(1, 2)});
    auto w = TypicalityWindow::make(p, 0.1, 10);
    // 0.1 is not exactly representable, so [4, 6] shrinks only if the double
    // lies below 1/10; the window stays symmetric around 5 either way.
    EXPECT_EQ(w.lo[0] + w.hi[0], 10u);
    EXPECT_TRUE(w.contains(std::vector<std::size_t>{5, 5}));
    EXPECT_FALSE(w.contains(std::vector<std::size_t>{8, 2}));
    auto z = TypicalityWindow::make(p, 0.0, 3);
    EXPECT_TRUE(z.empty());
    auto all = TypicalityWindow::make(p, 1.0, 7);
    EXPECT_EQ(all.lo[0], 0u);
    EXPECT_EQ(all.hi[0], 7u);
}

TEST(CompositionEngine, MatchesBruteForceBinary)
{
    Distribution gen({0.3, 0.7});
    Matrix<double> ham(2, 2, {0, 1, 1, 0});
    Rng rng(5);
    for (int with_window = 0; with_window < 2; ++with_window) {
        std::optional<TypicalityWindow> w;
        if (with_window)
            w = TypicalityWindow::make(to_exact(gen), 0.15, 8);
        CompositionEngine eng(gen, ham, w);
        for (int rep = 0; rep < 10; ++rep) {
            Sequence ref(8);
            for (auto& s : ref)
                s = static_cast<Symbol>(rng() % 2);
            for (double D : {0.0, 0.125, 0.25, 0.5, 1.0}) {
                double want = brute_force(gen, ham, w, ref, D);
                EXPECT_NEAR(eng.probability(ref, 2, D), want, 1e-12 + 1e-10 * want);
            }
        }
    }
}

TEST(CompositionEngine, MatchesBruteForceTernaryRectangular)
{
    Distribution gen({0.2, 0.5, 0.3});
    Matrix<double> cost(3, 2, {0, 1, 0.5, 0.5, 2, 0});
    auto w = TypicalityWindow::make(to_exact(gen), 0.25, 6);
    CompositionEngine plain(gen, cost, std::nullopt);
    CompositionEngine typed(gen, cost, w);
    Rng rng(9);
    for (int rep = 0; rep < 8; ++rep) {
        Sequence ref(6);
        for (auto& s : ref)
            s = static_cast<Symbol>(rng() % 2);
        for (double D : {0.0, 0.25, 0.5, 0.75}) {
            EXPECT_NEAR(plain.probability(ref, 2, D), brute_force(gen, cost, std::nullopt, ref, D), 1e-12);
            EXPECT_NEAR(typed.probability(ref, 2, D), brute_force(gen, cost, w, ref, D), 1e-12);
        }
    }
}

TEST(CompositionEngine, BinaryClosedFormAtLargeN)
{
    // Uniform generator, Hamming: Pr[d <= k] = sum_{j<=k} C(n,j) 2^-n.
    Distribution gen({0.5, 0.5});
    Matrix<double> ham(2, 2, {0, 1, 1, 0});
    CompositionEngine eng(gen, ham, std::nullopt);
    const std::size_t n = 200;
    Sequence ref(n, 0);
    for (std::size_t i = 0; i < n; i += 3)
        ref[i] = 1;
    const double D = 0.3;
    double lse = -INFINITY;
    for (std::size_t j = 0; j <= 60; ++j) {
        double t = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) - n * std::log(2.0);
        double m = std::max(lse, t);
        lse = m + std::log(std::exp(lse - m) + std::exp(t - m));
    }
    EXPECT_NEAR(eng.log_probability(ref, 2, D), lse, 1e-9);
}

TEST(CompositionEngine, DependsOnlyOnReferenceType)
{
    Distribution gen({0.6, 0.4});
    Matrix<double> cost(2, 2, {0, 1, 2, 0});
    CompositionEngine eng(gen, cost, TypicalityWindow::make(to_exact(gen), 0.2, 7));
    Sequence a{0, 0, 1, 1, 1, 0, 1};
    Sequence b{1, 1, 1, 1, 0, 0, 0};
    EXPECT_DOUBLE_EQ(eng.probability(a, 2, 0.4), brute_force(gen, cost, TypicalityWindow::make(to_exact(gen), 0.2, 7), b, 0.4));
}

TEST(CompositionEngine, Budget)
{
    Distribution gen({0.25, 0.25, 0.25, 0.25});
    Matrix<double> cost(4, 4, std::vector<double>(16, 0.0));
    CompositionEngine eng(gen, cost, std::nullopt, 1000);
    Sequence ref(60, 0);
    for (std::size_t i = 0; i < ref.size(); ++i)
        ref[i] = static_cast<Symbol>(i % 4);
    EXPECT_THROW(eng.log_probability(ref, 4, 1.0), BudgetExceeded);
}
