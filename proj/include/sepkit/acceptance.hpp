#pragma once

// The reference scenario set. Each criterion recomputes its expected values
// from closed forms or brute force, independently of the routine under test,
// and reports a one-line verdict.

#include "capacity.hpp"
#include "coding.hpp"
#include "covering_packing.hpp"
#include "multiuser.hpp"
#include "rate_distortion.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

namespace sepkit {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0;
    double limit = 0;   // runtime ceiling in seconds; 0 when none applies
};

enum class InjectedFault { none, mismatched_codebook_law };

struct AcceptanceOptions {
    std::uint64_t seed = 2024;
    unsigned threads = 1;
    InjectedFault fault = InjectedFault::none;
    std::optional<double> budget;   // wall-clock seconds for the whole suite
};

struct AcceptanceReport {
    std::vector<CriterionResult> results;
    bool budget_exceeded = false;

    bool passed() const
    {
        if (budget_exceeded)
            return false;
        for (const auto& r : results)
            if (!r.passed)
                return false;
        return true;
    }
};

namespace acceptance {

inline Rational q(std::int64_t a, std::int64_t b = 1) { return make_rational(a, b); }

inline double h2(double p)
{
    if (p <= 0 || p >= 1)
        return 0;
    return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

template <class... Args>
std::string fmt(Args&&... args)
{
    std::ostringstream os;
    os << std::setprecision(6);
    (os << ... << args);
    return os.str();
}

struct Outcome {
    bool passed;
    std::string detail;
};

inline Outcome rate_distortion_oracle()
{
    auto p = Distribution({0.5, 0.5});
    auto ham = DistortionSpec::hamming(2);
    double worst = 0;
    for (int k = 1; k <= 9; ++k) {
        double D = 0.05 * k;
        worst = std::max(worst, std::abs(blahut_arimoto(p, ham, D).rate - (1 - h2(D))));
    }
    return {worst <= 1e-6, fmt("max |R(D) - (1 - h(D))| = ", worst, " over D in {0.05..0.45}")};
}

// Every admissible n' <= 12, every q, every D on the 1/n' grid.
template <class Visit>
void for_each_duality_case(Visit&& visit)
{
    static const std::vector<UniformSourceSpec> sources{UniformSourceSpec(ExactDistribution({q(1, 2), q(1, 2)})),
                                                        UniformSourceSpec(ExactDistribution({q(1, 3), q(2, 3)}))};
    for (std::size_t n = 1; n <= 12; ++n) {
        std::vector<CertifiedDistortion> specs{CertifiedDistortion::certify(DistortionSpec::hamming(2), 1),
                                               CertifiedDistortion::certify(DistortionSpec::sorted_sequence(2), n)};
        for (const auto& src : sources) {
            if (n % src.n0 != 0)
                continue;
            for (const auto& cd : specs)
                for (const auto& qz : achievable_types(n, indexed_alphabet(2)))
                    for (std::size_t k = 0; k <= n; ++k)
                        visit(n, src, cd, qz, q(static_cast<std::int64_t>(k), static_cast<std::int64_t>(n)));
        }
    }
}

inline Outcome duality_exact()
{
    std::size_t cases = 0, mismatches = 0;
    std::string first;
    for_each_duality_case([&](std::size_t n, const UniformSourceSpec& src, const CertifiedDistortion& cd,
                              const ExactDistribution& qz, const Rational& D) {
        ++cases;
        auto c = excess_prob_channel_side(n, src, qz, cd, D, ExcessMethod::enumerate);
        auto s = excess_prob_source_side(n, src, qz, cd, D, ExcessMethod::enumerate);
        if (c != s && mismatches++ == 0)
            first = fmt(" first at n' = ", n, ", spec ", cd.spec().name(), ", D = ", to_string(D));
    });
    return {mismatches == 0 && cases > 0, fmt(cases, " cases, ", mismatches, " mismatches", first)};
}

inline Outcome representative_invariance(std::uint64_t seed)
{
    std::size_t cases = 0, draws = 0, changed = 0;
    for_each_duality_case([&](std::size_t n, const UniformSourceSpec& src, const CertifiedDistortion& cd,
                              const ExactDistribution& qz, const Rational& D) {
        auto c = excess_prob_channel_side(n, src, qz, cd, D, ExcessMethod::enumerate);
        auto s = excess_prob_source_side(n, src, qz, cd, D, ExcessMethod::enumerate);
        Rng rng = make_rng(seed, {3, cases++});
        TypeClass vq(n, qz);
        auto U = src.type_class(n);
        for (int r = 0; r < 5; ++r) {
            auto y = Permutation::random(n, rng).apply(vq.canonical());
            auto u = Permutation::random(n, rng).apply(U.canonical());
            changed += excess_prob_channel_side(n, src, qz, cd, D, ExcessMethod::enumerate, y) != c;
            changed += excess_prob_source_side(n, src, qz, cd, D, ExcessMethod::enumerate, u) != s;
            draws += 2;
        }
    });
    return {changed == 0, fmt(cases, " cases, ", draws, " permuted representatives, ", changed, " changed")};
}

inline Outcome bound_domination(std::uint64_t seed, unsigned threads)
{
    CompoundChannel ch({bsc(q(1, 10))});
    auto p = ExactDistribution({q(1, 2), q(1, 2)});
    auto ham = DistortionSpec::hamming(2);
    const double eps = 0.2, D = 0.2;
    bool ok = true;
    double margin = std::numeric_limits<double>::infinity();
    double smallest = margin, worst_e2 = 0;
    int k = 0;
    for (std::size_t n : {8, 16, 32})
        for (double R : {0.1, 0.3}) {
            SimulationOptions opt;
            opt.trials = 10000;
            opt.seed = derive_seed(seed, {4, static_cast<std::uint64_t>(k++)});
            opt.threads = threads;
            auto prof = simulate_reliable_comm(ch, p, eps, ham, D, R, n, opt);
            const auto& e2 = prof.per_kernel[0].events.at("E2");
            auto b = error_exponent_bound({p, ham, D, eps, R, n});
            double m = b.bound - (e2.rate() - 3 * e2.sigma());
            margin = std::min(margin, m);
            smallest = std::min(smallest, b.bound);
            worst_e2 = std::max(worst_e2, e2.rate());
            ok = ok && m >= 0;
        }
    return {ok, fmt("6 configurations, 1e4 trials each, smallest bound ", smallest, ", largest E2 rate ", worst_e2,
                    ", min(bound - (E2 - 3 sigma)) = ", margin)};
}

inline Outcome kl_chain(std::uint64_t seed)
{
    Rng rng = make_rng(seed, {5});
    std::uniform_int_distribution<int> w(0, 9), pos(1, 9), dim(2, 3);
    std::size_t failures = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t xs = dim(rng), ys = dim(rng);
        std::vector<std::int64_t> pw(xs), jw(xs * ys);
        std::int64_t pt = 0, jt = 0;
        for (auto& v : pw)
            pt += v = pos(rng);
        while (jt == 0) {
            jt = 0;
            for (auto& v : jw)
                jt += v = w(rng);
        }
        std::vector<Rational> pm, jm;
        for (auto v : pw)
            pm.push_back(q(v, pt));
        for (auto v : jw)
            jm.push_back(q(v, jt));
        ExactDistribution px(std::move(pm));
        ExactJointDistribution joint(Matrix<Rational>(xs, ys, std::move(jm)));
        auto rep = kl_chain_report(joint, px);
        // Total divergence evaluated directly: sum q log(q / (p(z) q(y))).
        std::vector<Rational> qz(xs, Rational(0)), qy(ys, Rational(0));
        for (std::size_t z = 0; z < xs; ++z)
            for (std::size_t y = 0; y < ys; ++y) {
                qz[z] += joint(z, y);
                qy[y] += joint(z, y);
            }
        ExactLog direct;
        for (std::size_t z = 0; z < xs; ++z)
            for (std::size_t y = 0; y < ys; ++y)
                if (joint(z, y) != 0)
                    direct.add_log2(joint(z, y), joint(z, y) / (px[z] * qy[y]));
        failures += !(rep.identity_holds() && rep.total == direct);
    }
    return {failures == 0, fmt("1000 random rational joints, ", failures, " failures of the exact identity")};
}

inline Outcome compound_capacity_values(std::uint64_t seed, unsigned threads)
{
    CompoundCapacityOptions opt;
    opt.seed = derive_seed(seed, {6});
    opt.threads = threads;
    auto pair = compound_capacity(std::vector<ExactChannelMatrix>{bsc_matrix(q(1, 10)), bsc_matrix(q(1, 5))}, opt);
    auto single = compound_capacity(std::vector<ExactChannelMatrix>{bsc_matrix(q(1, 10))}, opt);
    double e1 = std::abs(pair.capacity - (1 - h2(0.2)));
    double e2 = std::abs(single.capacity - (1 - h2(0.1)));
    return {e1 <= 1e-4 && e2 <= 1e-4 && std::abs(1 - h2(0.2) - 0.278072) < 1e-6 &&
                std::abs(1 - h2(0.1) - 0.531004) < 1e-6,
            fmt("{BSC(0.1), BSC(0.2)} -> ", pair.capacity, " (err ", e1, "), {BSC(0.1)} -> ", single.capacity,
                " (err ", e2, ")")};
}

inline ExactChannelMatrix random_exact_matrix(std::size_t rows, std::size_t cols, Rng& rng)
{
    std::uniform_int_distribution<int> w(0, 6);
    std::vector<Rational> v;
    for (std::size_t i = 0; i < rows; ++i) {
        std::vector<int> ws(cols);
        int total = 0;
        while (total == 0) {
            total = 0;
            for (auto& x : ws)
                total += (x = w(rng));
        }
        for (int x : ws)
            v.push_back(q(x, total));
    }
    return ExactChannelMatrix(Matrix<Rational>(rows, cols, std::move(v)));
}

inline Outcome single_letterization(std::uint64_t seed)
{
    Rng rng = make_rng(seed, {7});
    std::uniform_int_distribution<int> w(1, 9);
    double worst = std::numeric_limits<double>::infinity();
    std::size_t failures = 0;
    for (int t = 0; t < 1000; ++t) {
        std::size_t n = 1 + t % 3;
        auto e = random_block_map(2, 2, n, n, rng);
        auto f = random_block_map(2, 2, n, n, rng);
        auto k = random_exact_matrix(2, 2, rng);
        int a = w(rng), b = w(rng);
        ExactDistribution p({q(a, a + b), q(b, a + b)});
        auto rep = verify_single_letterization(e, f, k, p, n);
        worst = std::min(worst, rep.min_slack);
        failures += rep.min_slack < -1e-9;
    }
    return {failures == 0, fmt("1000 instances, min slack ", worst)};
}

inline Outcome end_to_end_demo(std::uint64_t seed, unsigned threads)
{
    CompoundChannel ch({bsc(q(1, 20))});
    auto p = ExactDistribution({q(1, 2), q(1, 2)});
    auto ham = DistortionSpec::hamming(2);
    SimulationOptions opt;
    opt.trials = 500;
    opt.threads = threads;
    opt.seed = derive_seed(seed, {8, 128});
    auto small = simulate_reliable_comm(ch, p, 0.1, ham, 0.07, 0.4, 128, opt);
    opt.seed = derive_seed(seed, {8, 512});
    auto large = simulate_reliable_comm(ch, p, 0.1, ham, 0.07, 0.4, 512, opt);
    return {large.worst() <= 0.05 && large.worst() <= small.worst(),
            fmt("error ", small.worst(), " at n = 128, ", large.worst(), " at n = 512 (500 trials, ", large.mode,
                ")")};
}

inline Outcome half_lying(std::uint64_t seed, unsigned threads)
{
    const std::size_t n = 20;
    auto k = half_lying_channel(n);
    Rng rng = make_rng(seed, {9});
    std::bernoulli_distribution bit(0.5);
    double total = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
        Sequence x(n);
        for (auto& s : x)
            s = bit(rng);
        auto y = k.apply(x, rng);
        for (std::size_t i = 0; i < n; ++i)
            total += x[i] != y[i];
    }
    double dist = total / (trials * static_cast<double>(n));
    SimulationOptions opt;
    opt.trials = 10000;
    opt.threads = threads;
    opt.seed = derive_seed(seed, {9, 1});
    auto prof = simulate_reliable_comm(CompoundChannel({k}), ExactDistribution({q(1, 2), q(1, 2)}), 0.1,
                                       DistortionSpec::hamming(2), 0.1, 0.5, n, opt);
    return {std::abs(dist - 0.25) <= 0.01 && prof.worst() >= 0.45,
            fmt("expected distortion ", dist, ", reliable-communication error ", prof.worst(), " at R = 0.5")};
}

inline Outcome packing_covering(std::uint64_t seed, unsigned threads)
{
    UniformSourceSpec src(ExactDistribution({q(1, 2), q(1, 2)}));
    auto ham = CertifiedDistortion::certify(DistortionSpec::hamming(2), 1);
    const Rational D = q(1, 4);
    std::size_t bad = 0;
    std::string worst;
    int k = 0;
    for (std::size_t n : {4, 8}) {
        auto qz = compute_A(n, src, ham, D).minimizer;
        for (double R : {0.25, 0.5}) {
            auto est = mc_packing_covering(n, src, qz, ham, D, R, 10000, derive_seed(seed, {10, std::uint64_t(k++)}),
                                           threads);
            if (!est.consistent(3.0)) {
                ++bad;
                worst += fmt(" [n' = ", n, ", R = ", R, ": packing ", est.packing_correct.rate(), " vs ",
                             to_double(est.packing_exact), ", covering ", est.covering_error.rate(), " vs ",
                             to_double(est.covering_exact), "]");
            }
        }
    }
    return {bad == 0, fmt("4 configurations, 1e4 trials, ", bad, " outside 3 sigma", worst)};
}

inline Outcome compute_A_reference()
{
    UniformSourceSpec src(ExactDistribution({q(1, 2), q(1, 2)}));
    auto a = compute_A(4, src, CertifiedDistortion::certify(DistortionSpec::hamming(2), 1), q(1, 4));
    bool ok = a.A == q(1, 2) && a.minimizer.masses() == std::vector<Rational>{q(1, 4), q(3, 4)};
    return {ok, fmt("A = ", to_string(a.A), ", minimizer (", to_string(a.minimizer[0]), ", ",
                    to_string(a.minimizer[1]), ")")};
}

inline Outcome marginal_preservation(std::uint64_t seed, InjectedFault fault)
{
    UnicastDemandSet d;
    d.users = 2;
    ExactDistribution p({q(1, 3), q(2, 3)});
    ExactDistribution wrong({q(1, 2), q(1, 2)});
    d.pairs.push_back({0, 1, p, DistortionSpec::hamming(2), 0.1});
    d.pairs.push_back({1, 0, p, DistortionSpec::hamming(2), 0.1});
    UnicastSystem sys{interfering_two_user(q(1, 10)), d, ModemStack::identity(d), {}, {}, {}};
    ReplacementOptions opt;
    opt.rate = 0.5;
    opt.seed = derive_seed(seed, {12});
    if (fault == InjectedFault::mismatched_codebook_law)
        opt.letter_law = wrong;
    auto matched = layered_replacement(sys, 0, 2, opt).second;
    opt.letter_law = wrong;
    auto control = layered_replacement(sys, 0, 2, opt).second;
    bool ok = matched.exact && matched.other_pairs_tv <= 1e-12 && control.exact && control.other_pairs_tv > 1e-3;
    return {ok, fmt("matched law TV = ", matched.other_pairs_tv, matched.exact ? " (exact)" : " (sampled)",
                    ", mismatched control TV = ", control.other_pairs_tv)};
}

struct Criterion {
    int id;
    const char* name;
    double limit;
    std::function<Outcome(const AcceptanceOptions&)> run;
};

inline const std::vector<Criterion>& criteria()
{
    static const std::vector<Criterion> all{
        {1, "rate-distortion oracle", 5, [](const auto&) { return rate_distortion_oracle(); }},
        {2, "covering-packing duality", 60, [](const auto&) { return duality_exact(); }},
        {3, "representative invariance", 0, [](const auto& o) { return representative_invariance(o.seed); }},
        {4, "union bound domination", 120, [](const auto& o) { return bound_domination(o.seed, o.threads); }},
        {5, "KL chain identity", 0, [](const auto& o) { return kl_chain(o.seed); }},
        {6, "compound capacity", 30, [](const auto& o) { return compound_capacity_values(o.seed, o.threads); }},
        {7, "single-letterization chain", 60, [](const auto& o) { return single_letterization(o.seed); }},
        {8, "end-to-end random coding", 600, [](const auto& o) { return end_to_end_demo(o.seed, o.threads); }},
        {9, "half-lying channel", 0, [](const auto& o) { return half_lying(o.seed, o.threads); }},
        {10, "packing/covering exact vs Monte Carlo", 0,
         [](const auto& o) { return packing_covering(o.seed, o.threads); }},
        {11, "compute_A reference", 0, [](const auto&) { return compute_A_reference(); }},
        {12, "marginal preservation", 0, [](const auto& o) { return marginal_preservation(o.seed, o.fault); }},
    };
    return all;
}

} // namespace acceptance

inline std::string format_result(const CriterionResult& r)
{
    std::ostringstream os;
    os << (r.passed ? "[PASS] " : "[FAIL] ") << "#" << r.id << " " << r.name << ": " << r.detail << " ("
       << std::fixed << std::setprecision(2) << r.seconds << " s";
    if (r.limit > 0)
        os << ", limit " << std::setprecision(0) << r.limit << " s";
    os << ")";
    return os.str();
}

/// Runs the criteria in order. `only` restricts to the listed ids; `report`
/// sees each result as it completes. Stops once the budget is spent.
inline AcceptanceReport verify_all(const AcceptanceOptions& opt, const std::vector<int>& only = {},
                                   const std::function<void(const CriterionResult&)>& report = {})
{
    using clock = std::chrono::steady_clock;
    AcceptanceReport out;
    const auto start = clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };
    for (const auto& c : acceptance::criteria()) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end())
            continue;
        if (opt.budget && elapsed() >= *opt.budget) {
            out.budget_exceeded = true;
            break;
        }
        CriterionResult r{c.id, c.name, false, "", 0, c.limit};
        const auto t0 = clock::now();
        try {
            auto o = c.run(opt);
            r.passed = o.passed;
            r.detail = o.detail;
        } catch (const std::exception& e) {
            r.detail = std::string("threw: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        if (r.limit > 0 && r.seconds >= r.limit) {
            r.passed = false;
            r.detail += "; over the runtime limit";
        }
        if (report)
            report(r);
        out.results.push_back(std::move(r));
    }
    return out;
}

} // namespace sepkit
