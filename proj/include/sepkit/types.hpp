#pragma once

// Method-of-types machinery: empirical types, type classes, uniform sources
// on a single type class, achievable types and permutations of positions.

#include "errors.hpp"
#include "probability.hpp"
#include "rng.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

namespace sepkit {

inline constexpr std::uint64_t default_enumeration_budget = 1'000'000;

inline BigInt factorial(std::size_t n)
{
    BigInt f = 1;
    for (std::size_t i = 2; i <= n; ++i)
        f *= i;
    return f;
}

inline BigInt multinomial(std::span<const std::size_t> counts)
{
    std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    BigInt r = factorial(n);
    for (auto c : counts)
        r /= factorial(c);
    return r;
}

inline BigInt binomial(std::size_t n, std::size_t k)
{
    if (k > n)
        return 0;
    std::size_t c[2] = {k, n - k};
    return multinomial(c);
}

/// Letter counts of a sequence over an alphabet of the given size.
inline std::vector<std::size_t> letter_counts(std::span<const Symbol> seq, std::size_t alphabet_size)
{
    std::vector<std::size_t> counts(alphabet_size, 0);
    for (auto s : seq) {
        if (s >= alphabet_size)
            throw std::invalid_argument("symbol " + std::to_string(s) + " outside the alphabet");
        ++counts[s];
    }
    return counts;
}

/// Empirical type of a nonempty sequence, as an exact pmf.
inline ExactDistribution type_of(std::span<const Symbol> seq, const Alphabet& alphabet)
{
    if (seq.empty())
        throw std::invalid_argument("type_of: empty sequence");
    auto counts = letter_counts(seq, alphabet.size());
    std::vector<Rational> m;
    m.reserve(counts.size());
    for (auto c : counts)
        m.push_back(make_rational(static_cast<std::int64_t>(c), static_cast<std::int64_t>(seq.size())));
    return ExactDistribution(alphabet, std::move(m));
}

/// Least n0 with n0 * p(x) integral for every x.
inline std::size_t base_blocklength(const ExactDistribution& p)
{
    BigInt l = 1;
    for (const auto& m : p.masses())
        l = boost::multiprecision::lcm(l, denominator_of(m));
    return l.convert_to<std::size_t>();
}

[[noreturn]] inline std::size_t base_blocklength(const Distribution&)
{
    throw std::invalid_argument("uniform sources need rational masses; got a float-mode distribution");
}

/// Integer letter counts n * q(y); throws if q is not a type at blocklength n.
inline std::vector<std::size_t> type_counts(std::size_t n, const ExactDistribution& q)
{
    std::vector<std::size_t> counts;
    counts.reserve(q.size());
    for (const auto& m : q.masses()) {
        Rational c = m * n;
        if (denominator_of(c) != 1)
            throw std::invalid_argument("type " + to_string(m) + " is not achievable at blocklength " +
                                        std::to_string(n));
        counts.push_back(numerator_of(c).convert_to<std::size_t>());
    }
    return counts;
}

/// The set of length-n sequences with empirical type exactly q.
class TypeClass {
public:
    TypeClass(std::size_t n, ExactDistribution q) : n_(n), type_(std::move(q))
    {
        if (n_ == 0)
            throw std::invalid_argument("type class needs a positive blocklength");
        counts_ = type_counts(n_, type_);
        cardinality_ = multinomial(counts_);
    }

    std::size_t blocklength() const { return n_; }
    const ExactDistribution& type() const { return type_; }
    const std::vector<std::size_t>& counts() const { return counts_; }
    const BigInt& cardinality() const { return cardinality_; }

    /// The lexicographically smallest member.
    Sequence canonical() const
    {
        Sequence s;
        s.reserve(n_);
        for (std::size_t y = 0; y < counts_.size(); ++y)
            s.insert(s.end(), counts_[y], static_cast<Symbol>(y));
        return s;
    }

    bool contains(std::span<const Symbol> seq) const
    {
        return seq.size() == n_ && letter_counts(seq, counts_.size()) == counts_;
    }

    /// Visits every member in lexicographic order.
    template <class Visitor>
    void for_each_member(Visitor&& visit, std::uint64_t budget = default_enumeration_budget) const
    {
        if (cardinality_ > budget)
            throw BudgetExceeded("type class of size " + cardinality_.str() + " exceeds the enumeration budget");
        Sequence s = canonical();
        do {
            visit(std::as_const(s));
        } while (std::next_permutation(s.begin(), s.end()));
    }

    std::vector<Sequence> members(std::uint64_t budget = default_enumeration_budget) const
    {
        std::vector<Sequence> out;
        for_each_member([&](const Sequence& s) { out.push_back(s); }, budget);
        return out;
    }

    /// Uniform draw from the class: a random shuffle of the canonical member.
    Sequence sample(Rng& rng) const
    {
        Sequence s = canonical();
        std::shuffle(s.begin(), s.end(), rng);
        return s;
    }

private:
    std::size_t n_;
    ExactDistribution type_;
    std::vector<std::size_t> counts_;
    BigInt cardinality_;
};

/// All types at blocklength n, ordered lexicographically by their mass vectors.
inline std::vector<ExactDistribution> achievable_types(std::size_t n, const Alphabet& alphabet)
{
    if (n == 0)
        throw std::invalid_argument("achievable_types: blocklength must be positive");
    std::vector<ExactDistribution> out;
    std::vector<std::size_t> counts(alphabet.size(), 0);
    auto rec = [&](auto&& self, std::size_t pos, std::size_t remaining) -> void {
        if (pos + 1 == counts.size()) {
            counts[pos] = remaining;
            std::vector<Rational> m;
            m.reserve(counts.size());
            for (auto c : counts)
                m.push_back(make_rational(static_cast<std::int64_t>(c), static_cast<std::int64_t>(n)));
            out.emplace_back(alphabet, std::move(m));
            return;
        }
        for (std::size_t c = 0; c <= remaining; ++c) {
            counts[pos] = c;
            self(self, pos + 1, remaining - c);
        }
    };
    rec(rec, 0, n);
    return out;
}

/// i.i.d. pmf restricted to the single type class with type exactly p_X.
struct UniformSourceSpec {
    ExactDistribution p_x;
    std::size_t n0;

    explicit UniformSourceSpec(ExactDistribution p) : p_x(std::move(p)), n0(base_blocklength(p_x)) {}

    bool admissible(std::size_t blocklength) const { return blocklength > 0 && blocklength % n0 == 0; }

    TypeClass type_class(std::size_t blocklength) const
    {
        if (!admissible(blocklength))
            throw std::invalid_argument("blocklength " + std::to_string(blocklength) + " is not a multiple of n0 = " +
                                        std::to_string(n0));
        return TypeClass(blocklength, p_x);
    }
};

/// Letterwise L-infinity typicality: |type(x) - p(x)| <= eps for every letter.
template <class T>
bool is_epsilon_typical(std::span<const Symbol> seq, const BasicDistribution<T>& p, double eps)
{
    if (eps < 0)
        throw std::invalid_argument("is_epsilon_typical: negative epsilon");
    if (seq.empty())
        throw std::invalid_argument("is_epsilon_typical: empty sequence");
    auto counts = letter_counts(seq, p.size());
    const auto n = static_cast<double>(seq.size());
    if constexpr (std::is_same_v<T, double>) {
        for (std::size_t x = 0; x < counts.size(); ++x)
            if (std::abs(static_cast<double>(counts[x]) / n - p[x]) > eps)
                return false;
    } else {
        Rational e = exact_from_double(eps);
        for (std::size_t x = 0; x < counts.size(); ++x) {
            Rational diff = make_rational(static_cast<std::int64_t>(counts[x]), static_cast<std::int64_t>(seq.size())) - p[x];
            if (boost::multiprecision::abs(diff) > e)
                return false;
        }
    }
    return true;
}

/// A rearrangement of positions: (pi x)(i) = x(image[i]).
class Permutation {
public:
    explicit Permutation(std::vector<std::size_t> image) : image_(std::move(image))
    {
        std::vector<bool> seen(image_.size(), false);
        for (auto i : image_) {
            if (i >= image_.size() || seen[i])
                throw std::invalid_argument("permutation image is not a bijection");
            seen[i] = true;
        }
    }

    static Permutation identity(std::size_t n)
    {
        std::vector<std::size_t> img(n);
        std::iota(img.begin(), img.end(), std::size_t{0});
        return Permutation(std::move(img));
    }

    static Permutation random(std::size_t n, Rng& rng)
    {
        std::vector<std::size_t> img(n);
        std::iota(img.begin(), img.end(), std::size_t{0});
        std::shuffle(img.begin(), img.end(), rng);
        return Permutation(std::move(img));
    }

    std::size_t size() const { return image_.size(); }
    const std::vector<std::size_t>& image() const { return image_; }

    Sequence apply(std::span<const Symbol> seq) const
    {
        if (seq.size() != image_.size())
            throw std::invalid_argument("permutation and sequence lengths differ");
        Sequence out(seq.size());
        for (std::size_t i = 0; i < seq.size(); ++i)
            out[i] = seq[image_[i]];
        return out;
    }

    Permutation inverse() const
    {
        std::vector<std::size_t> inv(image_.size());
        for (std::size_t i = 0; i < image_.size(); ++i)
            inv[image_[i]] = i;
        return Permutation(std::move(inv));
    }

private:
    std::vector<std::size_t> image_;
};

/// Number of types at blocklength n over an alphabet of size k: C(n+k-1, k-1).
inline BigInt type_count(std::size_t n, std::size_t k) { return binomial(n + k - 1, k - 1); }

/// Lexicographic index <-> sequence over an alphabet of the given size.
inline std::uint64_t sequence_index(std::span<const Symbol> seq, std::size_t alphabet_size)
{
    std::uint64_t idx = 0;
    for (auto s : seq)
        idx = idx * alphabet_size + s;
    return idx;
}

inline Sequence sequence_at(std::uint64_t index, std::size_t length, std::size_t alphabet_size)
{
    Sequence s(length);
    for (std::size_t i = length; i-- > 0;) {
        s[i] = static_cast<Symbol>(index % alphabet_size);
        index /= alphabet_size;
    }
    return s;
}

/// |alphabet|^length, or nullopt when it does not fit in 64 bits.
inline std::optional<std::uint64_t> sequence_space_size(std::size_t alphabet_size, std::size_t length)
{
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < length; ++i) {
        if (total > std::numeric_limits<std::uint64_t>::max() / std::max<std::size_t>(alphabet_size, 1))
            return std::nullopt;
        total *= alphabet_size;
    }
    return total;
}

} // namespace sepkit
