#pragma once

// Exact excess-distortion probabilities over type classes, for a source that is
// uniform on the type class of p_X (the "U" side) and codewords uniform on an
// output type class (the "V_q" side). The channel-side and source-side
// probabilities coincide by a symmetry argument; verify_duality checks that
// exactly, computing each side independently by enumeration.

#include "coding.hpp"
#include "distortion.hpp"
#include "types.hpp"

namespace sepkit {

enum class ExcessMethod { automatic, enumerate, overlap };

namespace detail {

inline void check_part3(std::size_t n, const UniformSourceSpec& src, const ExactDistribution& q,
                        const CertifiedDistortion& cd)
{
    if (!src.admissible(n))
        throw std::invalid_argument("blocklength " + std::to_string(n) + " is not admissible for p_X (n0 = " +
                                    std::to_string(src.n0) + ")");
    const auto& spec = cd.spec();
    if (src.p_x.size() != spec.x_size() || q.size() != spec.y_size())
        throw std::invalid_argument("type alphabets do not match the distortion");
    if (!spec.is_additive())
        cd.require_blocklength(n);
    type_counts(n, q);   // throws unless q is a type at n
}

inline std::string masses_str(const ExactDistribution& q)
{
    std::string out = "(";
    for (std::size_t i = 0; i < q.size(); ++i)
        out += (i ? "," : "") + q[i].str();
    return out + ")";
}

inline bool exceeds(double total, const Rational& limit) { return exact_from_double(total) > limit; }

// Pr[d(A, b) > limit] for A uniform on the class with counts `ca` and b fixed
// with counts `cb`, by summing over joint compositions N[b][a]. The number of
// A in the class with composition N is prod_b cb[b]! / prod_a N[b][a]!.
inline Rational overlap_excess(const std::vector<std::size_t>& ca, const std::vector<std::size_t>& cb,
                               const Matrix<double>& d_ab, const Rational& limit, std::uint64_t budget)
{
    const std::size_t na = ca.size(), nb = cb.size();
    std::vector<BigInt> fact(1, BigInt(1));
    std::size_t n = std::accumulate(cb.begin(), cb.end(), std::size_t{0});
    for (std::size_t k = 1; k <= n; ++k)
        fact.push_back(fact.back() * k);
    std::vector<std::size_t> left = ca;
    BigInt hits = 0;
    std::uint64_t visited = 0;
    // Numerator of the weight: prod_b cb[b]!, divided per cell by N!.
    auto rec = [&](auto&& self, std::size_t b, std::size_t a, std::size_t row_left, double dist, Rational w) -> void {
        if (++visited > budget)
            throw BudgetExceeded("overlap counting exceeds its budget");
        if (b == nb) {
            if (exceeds(dist, limit))
                hits += numerator_of(w) / denominator_of(w);
            return;
        }
        if (a + 1 == na) {
            std::size_t c = row_left;
            if (c > left[a])
                return;
            left[a] -= c;
            Rational nw = w / Rational(fact[c]);
            double nd = dist + static_cast<double>(c) * d_ab(a, b);
            if (b + 1 < nb)
                self(self, b + 1, 0, cb[b + 1], nd, nw * Rational(fact[cb[b + 1]]));
            else
                self(self, b + 1, 0, 0, nd, nw);
            left[a] += c;
            return;
        }
        for (std::size_t c = 0; c <= std::min(row_left, left[a]); ++c) {
            left[a] -= c;
            self(self, b, a + 1, row_left - c, dist + static_cast<double>(c) * d_ab(a, b), w / Rational(fact[c]));
            left[a] += c;
        }
    };
    if (nb == 0)
        return 0;
    rec(rec, 0, 0, cb[0], 0.0, Rational(fact[cb[0]]));
    return Rational(hits) / Rational(multinomial(ca));
}

} // namespace detail

/// Pr[d(U, y) > n D] with U uniform on the source type class and y a member
/// of the type class of q (the canonical one unless a representative is given).
inline Rational excess_prob_channel_side(std::size_t n, const UniformSourceSpec& src, const ExactDistribution& q,
                                         const CertifiedDistortion& cd, const Rational& D,
                                         ExcessMethod method = ExcessMethod::automatic,
                                         std::optional<Sequence> representative = std::nullopt,
                                         std::uint64_t budget = default_enumeration_budget)
{
    detail::check_part3(n, src, q, cd);
    const auto& spec = cd.spec();
    TypeClass vq(n, q);
    Sequence y = representative ? *representative : vq.canonical();
    if (!vq.contains(y))
        throw std::invalid_argument("representative is not a member of the output type class");
    const Rational limit = D * n;
    if (method == ExcessMethod::automatic)
        method = spec.is_additive() ? ExcessMethod::overlap : ExcessMethod::enumerate;
    auto U = src.type_class(n);
    if (method == ExcessMethod::overlap) {
        spec.require_additive("overlap counting");
        return detail::overlap_excess(U.counts(), vq.counts(), spec.letter_matrix(), limit, budget);
    }
    BigInt hits = 0;
    U.for_each_member(
        [&](const Sequence& u) {
            if (detail::exceeds(spec.block(u, y), limit))
                ++hits;
        },
        budget);
    return Rational(hits) / Rational(U.cardinality());
}

/// Pr[d(u, V) > n D] with V uniform on the type class of q and u a member of
/// the source type class (the canonical one unless a representative is given).
inline Rational excess_prob_source_side(std::size_t n, const UniformSourceSpec& src, const ExactDistribution& q,
                                        const CertifiedDistortion& cd, const Rational& D,
                                        ExcessMethod method = ExcessMethod::automatic,
                                        std::optional<Sequence> representative = std::nullopt,
                                        std::uint64_t budget = default_enumeration_budget)
{
    detail::check_part3(n, src, q, cd);
    const auto& spec = cd.spec();
    auto U = src.type_class(n);
    Sequence u = representative ? *representative : U.canonical();
    if (!U.contains(u))
        throw std::invalid_argument("representative is not a member of the source type class");
    const Rational limit = D * n;
    if (method == ExcessMethod::automatic)
        method = spec.is_additive() ? ExcessMethod::overlap : ExcessMethod::enumerate;
    TypeClass vq(n, q);
    if (method == ExcessMethod::overlap) {
        spec.require_additive("overlap counting");
        const auto& d = spec.letter_matrix();
        Matrix<double> dt(d.cols, d.rows);
        for (std::size_t x = 0; x < d.rows; ++x)
            for (std::size_t y = 0; y < d.cols; ++y)
                dt(y, x) = d(x, y);
        return detail::overlap_excess(vq.counts(), U.counts(), dt, limit, budget);
    }
    BigInt hits = 0;
    vq.for_each_member(
        [&](const Sequence& v) {
            if (detail::exceeds(spec.block(u, v), limit))
                ++hits;
        },
        budget);
    return Rational(hits) / Rational(vq.cardinality());
}

struct DualitySample {
    std::size_t blocklength = 0;
    ExactDistribution p_x;
    ExactDistribution q;
    std::string spec;
    Rational D;
    Rational channel_side;
    Rational source_side;
    std::size_t representatives_checked = 0;
};

/// Both sides by enumeration, plus `representatives` random re-draws of the
/// fixed block on each side; throws VerificationFailure on any mismatch.
inline DualitySample verify_duality(std::size_t n, const UniformSourceSpec& src, const ExactDistribution& q,
                                    const CertifiedDistortion& cd, const Rational& D, std::uint64_t seed = 0,
                                    std::size_t representatives = 5,
                                    std::uint64_t budget = default_enumeration_budget)
{
    DualitySample s{n, src.p_x, q, cd.spec().name(), D, 0, 0, 0};
    s.channel_side = excess_prob_channel_side(n, src, q, cd, D, ExcessMethod::enumerate, std::nullopt, budget);
    s.source_side = excess_prob_source_side(n, src, q, cd, D, ExcessMethod::enumerate, std::nullopt, budget);
    auto describe = [&] {
        return "n' = " + std::to_string(n) + ", q = " + detail::masses_str(q) + ", D = " + D.str() + ", spec " + cd.spec().name() +
               ": channel side " + s.channel_side.str() + ", source side " + s.source_side.str();
    };
    if (s.channel_side != s.source_side)
        throw VerificationFailure("duality fails: " + describe());
    Rng rng = make_rng(seed, {n, sequence_index(TypeClass(n, q).canonical(), q.size())});
    TypeClass vq(n, q);
    auto U = src.type_class(n);
    for (std::size_t r = 0; r < representatives; ++r) {
        auto y = Permutation::random(n, rng).apply(vq.canonical());
        auto u = Permutation::random(n, rng).apply(U.canonical());
        auto c = excess_prob_channel_side(n, src, q, cd, D, ExcessMethod::enumerate, y, budget);
        auto v = excess_prob_source_side(n, src, q, cd, D, ExcessMethod::enumerate, u, budget);
        if (c != s.channel_side || v != s.source_side)
            throw VerificationFailure("representative dependence: " + describe() + "; permuted " + c.str() + " / " +
                                      v.str());
        ++s.representatives_checked;
    }
    return s;
}

struct AResult {
    Rational A;
    ExactDistribution minimizer;
    std::vector<std::pair<ExactDistribution, Rational>> per_type;
};

/// A_{n'} = min over output types q of the channel-side excess probability.
/// Ties go to the lexicographically smallest q.
inline AResult compute_A(std::size_t n, const UniformSourceSpec& src, const CertifiedDistortion& cd,
                         const Rational& D, unsigned threads = 1, std::uint64_t budget = default_enumeration_budget)
{
    auto types = achievable_types(n, indexed_alphabet(cd.spec().y_size()));
    std::vector<Rational> vals(types.size());
    parallel_for(types.size(), threads, [&](std::size_t i) {
        vals[i] = excess_prob_channel_side(n, src, types[i], cd, D, ExcessMethod::automatic, std::nullopt, budget);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < types.size(); ++i)
        if (vals[i] < vals[best])
            best = i;
    AResult res{vals[best], types[best], {}};
    for (std::size_t i = 0; i < types.size(); ++i)
        res.per_type.emplace_back(types[i], vals[i]);
    return res;
}

struct ThresholdPoint {
    std::size_t blocklength = 0;
    Rational A;
    ExactDistribution minimizer;
    std::size_t message_bits = 0;
    double channel_functional = 0;   // A^(2^bits - 1)
    double source_functional = 0;    // A^(2^bits)
    std::optional<Rational> channel_exact;
    std::optional<Rational> source_exact;
};

struct ThresholdTrace {
    double rate = 0;
    std::vector<ThresholdPoint> points;

    bool channel_nondecreasing() const
    {
        for (std::size_t i = 1; i < points.size(); ++i)
            if (points[i].channel_functional < points[i - 1].channel_functional)
                return false;
        return true;
    }

    bool source_nonincreasing() const
    {
        for (std::size_t i = 1; i < points.size(); ++i)
            if (points[i].source_functional > points[i - 1].source_functional)
                return false;
        return true;
    }
};

namespace detail {

inline Rational rational_pow(Rational base, std::uint64_t e)
{
    Rational acc = 1;
    while (e) {
        if (e & 1)
            acc *= base;
        base *= base;
        e >>= 1;
    }
    return acc;
}

inline double pow_to_double(const Rational& a, double e)
{
    if (e == 0)
        return 1.0;
    if (a == 0)
        return 0.0;
    return std::exp(e * std::log(to_double(a)));
}

} // namespace detail

/// Tabulates A_{n'} and the packing and covering functionals over n'.
/// Exact powers are kept while the exponent is at most `exact_exponent_limit`.
inline ThresholdTrace threshold_trace(const UniformSourceSpec& src, const CertifiedDistortion& cd, const Rational& D,
                                      double R, const std::vector<std::size_t>& blocklengths, unsigned threads = 1,
                                      std::uint64_t exact_exponent_limit = 4096)
{
    ThresholdTrace t;
    t.rate = R;
    for (auto n : blocklengths) {
        auto a = compute_A(n, src, cd, D, threads);
        ThresholdPoint p{n, a.A, a.minimizer, 0, 0, 0, std::nullopt, std::nullopt};
        p.message_bits = message_bits(n, R);
        double M = std::ldexp(1.0, static_cast<int>(p.message_bits));
        p.channel_functional = detail::pow_to_double(a.A, M - 1);
        p.source_functional = detail::pow_to_double(a.A, M);
        if (p.message_bits < 63 && (std::uint64_t{1} << p.message_bits) <= exact_exponent_limit) {
            std::uint64_t m = std::uint64_t{1} << p.message_bits;
            p.channel_exact = detail::rational_pow(a.A, m - 1);
            p.source_exact = *p.channel_exact * a.A;
            p.channel_functional = to_double(*p.channel_exact);
            p.source_functional = to_double(*p.source_exact);
        }
        t.points.push_back(std::move(p));
    }
    return t;
}

struct PackingCoveringEstimate {
    McEstimate packing_correct;   // no other codeword within D of the received block
    McEstimate covering_error;    // no codeword within D of the source block
    Rational packing_exact;       // P_channel^(M-1)
    Rational covering_exact;      // P_source^M
    std::uint64_t codebook_size = 0;

    bool consistent(double z = 3.0) const
    {
        auto ok = [&](const McEstimate& e, const Rational& exact) {
            double x = to_double(exact);
            double sigma = std::sqrt(x * (1 - x) / static_cast<double>(e.trials));
            return std::abs(e.rate() - x) <= z * sigma + 1e-12;
        };
        return ok(packing_correct, packing_exact) && ok(covering_error, covering_exact);
    }
};

/// Direct simulation of the packing and covering events with codebooks drawn
/// uniformly from type classes, against the exact product formulas.
inline PackingCoveringEstimate mc_packing_covering(std::size_t n, const UniformSourceSpec& src,
                                                   const ExactDistribution& q, const CertifiedDistortion& cd,
                                                   const Rational& D, double R, std::uint64_t trials,
                                                   std::uint64_t seed, unsigned threads = 1)
{
    if (trials == 0)
        throw std::invalid_argument("mc_packing_covering needs at least one trial");
    detail::check_part3(n, src, q, cd);
    const auto bits = message_bits(n, R);
    if (bits > 20)
        throw BudgetExceeded("codebook of 2^" + std::to_string(bits) + " words is too large to simulate directly");
    const std::uint64_t M = std::uint64_t{1} << bits;
    const auto& spec = cd.spec();
    const Rational limit = D * n;
    auto U = src.type_class(n);
    TypeClass vq(n, q);

    PackingCoveringEstimate est;
    est.codebook_size = M;
    est.packing_exact = detail::rational_pow(excess_prob_channel_side(n, src, q, cd, D), M - 1);
    est.covering_exact = detail::rational_pow(excess_prob_source_side(n, src, q, cd, D), M);

    const std::uint64_t batch = 100;
    const std::uint64_t batches = (trials + batch - 1) / batch;
    std::vector<std::pair<McEstimate, McEstimate>> parts(batches);
    parallel_for(batches, threads, [&](std::size_t b) {
        for (std::uint64_t t = b * batch; t < std::min(trials, (b + 1) * batch); ++t) {
            Rng rng = make_rng(seed, {t});
            auto y = vq.sample(rng);
            bool correct = true;
            for (std::uint64_t j = 1; j < M && correct; ++j)
                correct = detail::exceeds(spec.block(U.sample(rng), y), limit);
            parts[b].first.record(correct);
            auto u = U.sample(rng);
            bool error = true;
            for (std::uint64_t j = 0; j < M && error; ++j)
                error = detail::exceeds(spec.block(u, vq.sample(rng)), limit);
            parts[b].second.record(error);
        }
    });
    for (const auto& [a, c] : parts) {
        est.packing_correct += a;
        est.covering_error += c;
    }
    return est;
}

} // namespace sepkit
