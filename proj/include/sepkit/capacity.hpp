#pragma once

// Compound-DMC capacity max_Q min_k I(Q,k), and exact checks of the
// single-letterization chain for a coded block through a DMC.

#include "channels.hpp"
#include "probability.hpp"
#include "rng.hpp"

#include <cmath>
#include <map>

namespace sepkit {

struct CompoundCapacityOptions {
    unsigned restarts = 20;
    std::uint64_t iterations = 10000;
    double step = 0.5;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    double tie_tolerance = 1e-12;
};

struct CompoundCapacityResult {
    double capacity = 0;
    Distribution input = Distribution({1.0});
    std::size_t worst_kernel = 0;
    std::vector<double> per_kernel;   // I(Q*, k) for every member
    std::uint64_t evaluations = 0;
    unsigned restarts = 0;
    std::uint64_t iterations = 0;
    double subgradient_value = 0;     // best value before the polish
};

namespace detail {

// Euclidean projection onto the probability simplex.
inline void project_simplex(std::vector<double>& v)
{
    std::vector<double> u(v);
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0, theta = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        css += u[i];
        double t = (css - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0)
            theta = t;
    }
    for (auto& x : v)
        x = std::max(x - theta, 0.0);
    double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v)
        x /= s;
}

inline double mi(std::span<const double> q, const ChannelMatrix& k)
{
    std::vector<double> out(k.outputs(), 0.0);
    for (std::size_t i = 0; i < k.inputs(); ++i)
        for (std::size_t j = 0; j < k.outputs(); ++j)
            out[j] += q[i] * k(i, j);
    double acc = 0;
    for (std::size_t i = 0; i < k.inputs(); ++i) {
        if (q[i] <= 0)
            continue;
        for (std::size_t j = 0; j < k.outputs(); ++j)
            if (k(i, j) > 0)
                acc += q[i] * k(i, j) * std::log2(k(i, j) / out[j]);
    }
    return std::max(acc, 0.0);
}

class MinMi {
public:
    explicit MinMi(const std::vector<ChannelMatrix>& ks, double tie) : ks_(ks), tie_(tie) {}

    // Value and the lowest-index minimizing kernel.
    std::pair<double, std::size_t> operator()(std::span<const double> q) const
    {
        ++evals;
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t k = 0; k < ks_.size(); ++k) {
            double v = mi(q, ks_[k]);
            if (v < best - tie_) {
                best = v;
                arg = k;
            }
        }
        return {best, arg};
    }

    // Gradient of I(., k) up to an additive constant: D(k(.|i) || output law).
    std::vector<double> gradient(std::span<const double> q, std::size_t kernel) const
    {
        const auto& k = ks_[kernel];
        std::vector<double> out(k.outputs(), 0.0), g(k.inputs(), 0.0);
        for (std::size_t i = 0; i < k.inputs(); ++i)
            for (std::size_t j = 0; j < k.outputs(); ++j)
                out[j] += q[i] * k(i, j);
        for (std::size_t i = 0; i < k.inputs(); ++i)
            for (std::size_t j = 0; j < k.outputs(); ++j)
                if (k(i, j) > 0)
                    g[i] += out[j] > 0 ? k(i, j) * std::log2(k(i, j) / out[j]) : 60.0;
        return g;
    }

    mutable std::uint64_t evals = 0;

private:
    const std::vector<ChannelMatrix>& ks_;
    double tie_;
};

// Maximizes a concave function of t on [a, b].
template <class F>
double golden_max(F&& f, double a, double b, double tol = 1e-13)
{
    const double g = (std::sqrt(5.0) - 1) / 2;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        } else {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        }
    }
    return 0.5 * (a + b);
}

} // namespace detail

inline CompoundCapacityResult compound_capacity(const std::vector<ChannelMatrix>& kernels,
                                                const CompoundCapacityOptions& opt = {})
{
    if (kernels.empty())
        throw std::invalid_argument("compound_capacity: empty kernel set");
    const std::size_t ni = kernels[0].inputs();
    for (const auto& k : kernels)
        if (k.inputs() != ni || k.outputs() != kernels[0].outputs())
            throw std::invalid_argument("compound_capacity: kernels must share alphabets");

    const unsigned restarts = std::max(1u, opt.restarts);
    std::vector<std::vector<double>> best_q(restarts);
    std::vector<double> best_v(restarts, -1.0);
    std::vector<std::uint64_t> evals(restarts, 0);
    parallel_for(restarts, opt.threads, [&](std::size_t r) {
        detail::MinMi f(kernels, opt.tie_tolerance);
        std::vector<double> q(ni, 1.0 / static_cast<double>(ni));
        if (r > 0) {
            Rng rng = make_rng(opt.seed, {0x43415041ULL, r});
            std::exponential_distribution<double> e(1.0);
            for (auto& x : q)
                x = e(rng);
            double s = std::accumulate(q.begin(), q.end(), 0.0);
            for (auto& x : q)
                x /= s;
        }
        for (std::uint64_t t = 1; t <= opt.iterations; ++t) {
            auto [v, k] = f(q);
            if (v > best_v[r]) {
                best_v[r] = v;
                best_q[r] = q;
            }
            auto g = f.gradient(q, k);
            double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(ni);
            double step = opt.step / std::sqrt(static_cast<double>(t));
            for (std::size_t i = 0; i < ni; ++i)
                q[i] += step * (g[i] - mean);
            detail::project_simplex(q);
        }
        evals[r] = f.evals;
    });

    // Deterministic argmax over restarts; ties go to the lower restart index.
    std::size_t r_best = 0;
    for (std::size_t r = 1; r < restarts; ++r)
        if (best_v[r] > best_v[r_best])
            r_best = r;
    std::vector<double> q = best_q[r_best];

    CompoundCapacityResult res;
    res.subgradient_value = best_v[r_best];
    detail::MinMi f(kernels, opt.tie_tolerance);
    auto value = [&](const std::vector<double>& v) { return f(v).first; };

    // Polish: exact line search for binary inputs, pairwise mass transfers otherwise.
    if (ni == 2) {
        double t = detail::golden_max([&](double a) { return value({a, 1 - a}); }, 0.0, 1.0);
        std::vector<double> cand{t, 1 - t};
        if (value(cand) >= value(q))
            q = cand;
    } else {
        for (int sweep = 0; sweep < 200; ++sweep) {
            double before = value(q);
            for (std::size_t i = 0; i < ni; ++i)
                for (std::size_t j = i + 1; j < ni; ++j) {
                    double total = q[i] + q[j];
                    if (total <= 0)
                        continue;
                    auto at = [&](double a) {
                        auto c = q;
                        c[i] = a;
                        c[j] = total - a;
                        return value(c);
                    };
                    double a = detail::golden_max(at, 0.0, total);
                    if (at(a) >= value(q)) {
                        q[i] = a;
                        q[j] = total - a;
                    }
                }
            if (value(q) - before < 1e-13)
                break;
        }
    }

    auto [v, k] = f(q);
    res.capacity = v;
    res.worst_kernel = k;
    double s = std::accumulate(q.begin(), q.end(), 0.0);
    for (auto& x : q)
        x /= s;
    res.input = Distribution(q);
    for (const auto& kk : kernels)
        res.per_kernel.push_back(detail::mi(q, kk));
    res.evaluations = std::accumulate(evals.begin(), evals.end(), std::uint64_t{0}) + f.evals;
    res.restarts = restarts;
    res.iterations = opt.iterations;
    return res;
}

inline CompoundCapacityResult compound_capacity(const std::vector<ExactChannelMatrix>& kernels,
                                                const CompoundCapacityOptions& opt = {})
{
    std::vector<ChannelMatrix> f;
    for (const auto& k : kernels)
        f.push_back(k.to_float());
    return compound_capacity(f, opt);
}

// ---------------------------------------------------------------------------
// Induced letter distribution and the single-letterization chain

struct InducedLetterDistribution {
    ExactDistribution T;
    std::size_t blocklength;
    std::string encoder;
};

namespace detail {

// Visits every source block with its exact i.i.d. probability.
template <class Visit>
void for_each_source_block(const ExactDistribution& p_x, std::size_t n, Visit&& visit)
{
    require_exact_space(p_x.size(), n, "source enumeration");
    auto total = *sequence_space_size(p_x.size(), n);
    for (std::uint64_t idx = 0; idx < total; ++idx) {
        Sequence x = sequence_at(idx, n, p_x.size());
        Rational p = 1;
        for (auto s : x)
            p *= p_x[s];
        if (p != 0)
            visit(x, p);
    }
}

using SparseJoint = std::map<std::pair<Sequence, Sequence>, Rational>;

inline ExactLog sparse_mutual_information(const SparseJoint& joint)
{
    std::map<Sequence, Rational> a, b;
    for (const auto& [k, p] : joint) {
        a[k.first] += p;
        b[k.second] += p;
    }
    ExactLog acc;
    for (const auto& [k, p] : joint)
        if (p != 0)
            acc.add_log2(p, p / (a[k.first] * b[k.second]));
    return acc;
}

} // namespace detail

/// T(i) = (1/n) sum_t Pr(I(t) = i) for source blocks i.i.d. p_x through the encoder.
inline InducedLetterDistribution induced_T(const BlockMap& encoder, const ExactDistribution& p_x, std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("induced_T: blocklength must be positive");
    if (encoder.input_size != p_x.size())
        throw std::invalid_argument("induced_T: encoder input alphabet does not match the source");
    std::vector<Rational> t(encoder.output_size, Rational(0));
    std::size_t len = 0;
    detail::for_each_source_block(p_x, n, [&](const Sequence& x, const Rational& p) {
        auto in = encoder(x);
        if (len == 0)
            len = in.size();
        else if (in.size() != len)
            throw std::invalid_argument("induced_T: encoder output length varies");
        for (auto s : in)
            t[s] += p;
    });
    if (len == 0)
        throw std::invalid_argument("induced_T: encoder produced empty blocks");
    for (auto& v : t)
        v /= static_cast<long>(len);
    return {ExactDistribution(indexed_alphabet(encoder.output_size), std::move(t)), n, encoder.name};
}

struct SingleLetterizationReport {
    double source_information = 0;    // I(X^n; Y^n)
    double block_information = 0;     // I(I^n; O^n)
    double letter_sum = 0;            // sum_t I(I(t); O(t))
    double single_letter_bound = 0;   // n I(T, k)
    double min_slack = 0;             // smallest rhs - lhs across the three inequalities
    bool holds = true;
    ExactDistribution T = ExactDistribution({Rational(1)});
};

/// Evaluates the chain I(X;Y) <= I(I;O) <= sum_t I(I_t;O_t) <= n I(T,k) exactly.
inline SingleLetterizationReport verify_single_letterization(const BlockMap& encoder, const BlockMap& decoder,
                                                             const ExactChannelMatrix& k,
                                                             const ExactDistribution& p_x, std::size_t n,
                                                             double slack = 1e-9)
{
    if (encoder.output_size != k.inputs() || decoder.input_size != k.outputs())
        throw std::invalid_argument("verify_single_letterization: alphabets do not chain");
    auto channel = dmc(k);
    detail::SparseJoint xy, io;
    std::vector<detail::SparseJoint> letters;
    detail::for_each_source_block(p_x, n, [&](const Sequence& x, const Rational& px) {
        auto in = encoder(x);
        if (letters.empty())
            letters.resize(in.size());
        for (const auto& [o, po] : channel.exact_law(in)) {
            Rational p = px * po;
            xy[{x, decoder(o)}] += p;
            io[{in, o}] += p;
            for (std::size_t t = 0; t < in.size(); ++t)
                letters[t][{Sequence{in[t]}, Sequence{o[t]}}] += p;
        }
    });
    SingleLetterizationReport rep;
    rep.source_information = detail::sparse_mutual_information(xy).value();
    rep.block_information = detail::sparse_mutual_information(io).value();
    ExactLog sum;
    for (const auto& j : letters)
        sum += detail::sparse_mutual_information(j);
    rep.letter_sum = sum.value();
    rep.T = induced_T(encoder, p_x, n).T;
    auto itk = mutual_information(rep.T, k);
    rep.single_letter_bound = static_cast<double>(letters.size()) * itk.value();
    rep.min_slack = std::min({rep.block_information - rep.source_information, rep.letter_sum - rep.block_information,
                              rep.single_letter_bound - rep.letter_sum});
    rep.holds = rep.min_slack >= -slack;
    return rep;
}

} // namespace sepkit
