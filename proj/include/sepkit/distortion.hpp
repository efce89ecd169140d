#pragma once

#include "errors.hpp"
#include "probability.hpp"
#include "rng.hpp"
#include "types.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace sepkit {

enum class DistortionKind { additive, general };

using BlockEvaluator = std::function<double(std::span<const Symbol>, std::span<const Symbol>)>;

/// A block distortion function. Additive specs carry a per-letter matrix and
/// sum it over positions; general specs wrap an opaque stateless evaluator.
class DistortionSpec {
public:
    static DistortionSpec additive(Matrix<double> letter, std::string name = "matrix")
    {
        if (letter.rows == 0 || letter.cols == 0)
            throw std::invalid_argument("distortion matrix must be nonempty");
        for (double v : letter.data)
            if (!std::isfinite(v) || v < 0)
                throw std::invalid_argument("distortion values must be finite and nonnegative");
        DistortionSpec s;
        s.kind_ = DistortionKind::additive;
        s.name_ = std::move(name);
        s.x_size_ = letter.rows;
        s.y_size_ = letter.cols;
        s.letter_ = std::move(letter);
        return s;
    }

    static DistortionSpec hamming(std::size_t x_size, std::size_t y_size = 0)
    {
        if (y_size == 0)
            y_size = x_size;
        Matrix<double> m(x_size, y_size);
        for (std::size_t x = 0; x < x_size; ++x)
            for (std::size_t y = 0; y < y_size; ++y)
                m(x, y) = x == y ? 0.0 : 1.0;
        return additive(std::move(m), "hamming");
    }

    static DistortionSpec general(std::string name, std::size_t x_size, std::size_t y_size, BlockEvaluator f)
    {
        if (!f)
            throw std::invalid_argument("general distortion needs an evaluator");
        DistortionSpec s;
        s.kind_ = DistortionKind::general;
        s.name_ = std::move(name);
        s.x_size_ = x_size;
        s.y_size_ = y_size;
        s.eval_ = std::move(f);
        return s;
    }

    /// Hamming distance between the sorted versions of the two blocks.
    static DistortionSpec sorted_sequence(std::size_t alphabet_size)
    {
        return general("sorted", alphabet_size, alphabet_size, [](std::span<const Symbol> x, std::span<const Symbol> y) {
            Sequence a(x.begin(), x.end());
            Sequence b(y.begin(), y.end());
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            double d = 0;
            for (std::size_t i = 0; i < a.size(); ++i)
                d += a[i] != b[i] ? 1.0 : 0.0;
            return d;
        });
    }

    /// sum_i i * 1[x_i != y_i] with 1-based positions. Not permutation invariant.
    static DistortionSpec position_weighted(std::size_t alphabet_size)
    {
        return general("position_weighted", alphabet_size, alphabet_size,
                       [](std::span<const Symbol> x, std::span<const Symbol> y) {
                           double d = 0;
                           for (std::size_t i = 0; i < x.size(); ++i)
                               d += x[i] != y[i] ? static_cast<double>(i + 1) : 0.0;
                           return d;
                       });
    }

    DistortionKind kind() const { return kind_; }
    bool is_additive() const { return kind_ == DistortionKind::additive; }
    const std::string& name() const { return name_; }
    std::size_t x_size() const { return x_size_; }
    std::size_t y_size() const { return y_size_; }

    const Matrix<double>& letter_matrix() const
    {
        require_additive("letter_matrix");
        return letter_;
    }

    double letter(Symbol x, Symbol y) const { return letter_matrix()(x, y); }

    bool is_hamming() const
    {
        if (!is_additive())
            return false;
        for (std::size_t x = 0; x < x_size_; ++x)
            for (std::size_t y = 0; y < y_size_; ++y)
                if (letter_(x, y) != (x == y ? 0.0 : 1.0))
                    return false;
        return true;
    }

    double max_letter() const
    {
        const auto& m = letter_matrix();
        return *std::max_element(m.data.begin(), m.data.end());
    }

    /// Un-normalized block distortion d^n(x, y); callers divide by n.
    double block(std::span<const Symbol> x, std::span<const Symbol> y) const
    {
        if (x.size() != y.size())
            throw std::invalid_argument("block_distortion: length mismatch (" + std::to_string(x.size()) + " vs " +
                                        std::to_string(y.size()) + ")");
        for (auto s : x)
            if (s >= x_size_)
                throw std::invalid_argument("block_distortion: source symbol outside the alphabet");
        for (auto s : y)
            if (s >= y_size_)
                throw std::invalid_argument("block_distortion: reproduction symbol outside the alphabet");
        if (kind_ == DistortionKind::general)
            return eval_(x, y);
        double d = 0;
        for (std::size_t i = 0; i < x.size(); ++i)
            d += letter_(x[i], y[i]);
        return d;
    }

    void require_additive(const char* what) const
    {
        if (kind_ != DistortionKind::additive)
            throw std::invalid_argument(std::string(what) + " needs an additive distortion");
    }

private:
    DistortionSpec() = default;

    DistortionKind kind_ = DistortionKind::additive;
    std::string name_;
    std::size_t x_size_ = 0;
    std::size_t y_size_ = 0;
    Matrix<double> letter_;
    BlockEvaluator eval_;
};

inline double block_distortion(const DistortionSpec& spec, std::span<const Symbol> x, std::span<const Symbol> y)
{
    return spec.block(x, y);
}

struct InvarianceWitness {
    Permutation pi;
    Sequence x;
    Sequence y;
    double original;
    double permuted;
};

struct InvarianceReport {
    bool invariant = true;
    bool exhaustive = false;
    std::size_t blocklength = 0;
    std::uint64_t checks = 0;
    std::optional<InvarianceWitness> witness;
};

enum class InvarianceMode { exhaustive, random };

/// Tests d(pi x, pi y) == d(x, y). Exhaustive mode covers every pi, x, y and
/// is limited to n <= 6; random mode draws `trials` triples from `seed`.
inline InvarianceReport check_permutation_invariance(const DistortionSpec& spec, std::size_t n,
                                                     InvarianceMode mode = InvarianceMode::exhaustive,
                                                     std::uint64_t trials = 2000, std::uint64_t seed = 0)
{
    if (n == 0)
        throw std::invalid_argument("check_permutation_invariance: blocklength must be positive");
    InvarianceReport rep;
    rep.blocklength = n;
    auto test = [&](const Permutation& pi, const Sequence& x, const Sequence& y) {
        ++rep.checks;
        double a = spec.block(x, y);
        double b = spec.block(pi.apply(x), pi.apply(y));
        if (a != b) {
            rep.invariant = false;
            rep.witness = InvarianceWitness{pi, x, y, a, b};
            return false;
        }
        return true;
    };
    if (mode == InvarianceMode::exhaustive) {
        if (n > 6)
            throw std::invalid_argument("exhaustive invariance check is limited to n <= 6");
        rep.exhaustive = true;
        auto nx = *sequence_space_size(spec.x_size(), n);
        auto ny = *sequence_space_size(spec.y_size(), n);
        std::vector<std::size_t> img(n);
        std::iota(img.begin(), img.end(), std::size_t{0});
        do {
            Permutation pi(img);
            for (std::uint64_t ix = 0; ix < nx; ++ix) {
                Sequence x = sequence_at(ix, n, spec.x_size());
                for (std::uint64_t iy = 0; iy < ny; ++iy)
                    if (!test(pi, x, sequence_at(iy, n, spec.y_size())))
                        return rep;
            }
        } while (std::next_permutation(img.begin(), img.end()));
        return rep;
    }
    Rng rng(derive_seed(seed, {n, 0x5045524dULL}));
    std::uniform_int_distribution<Symbol> xs(0, static_cast<Symbol>(spec.x_size() - 1));
    std::uniform_int_distribution<Symbol> ys(0, static_cast<Symbol>(spec.y_size() - 1));
    for (std::uint64_t t = 0; t < trials; ++t) {
        Sequence x(n), y(n);
        for (auto& s : x)
            s = xs(rng);
        for (auto& s : y)
            s = ys(rng);
        if (!test(Permutation::random(n, rng), x, y))
            break;
    }
    return rep;
}

/// A distortion together with evidence that it is permutation invariant at
/// one blocklength. Additive specs are invariant by construction.
class CertifiedDistortion {
public:
    static CertifiedDistortion certify(DistortionSpec spec, std::size_t n, std::uint64_t seed = 0,
                                       std::uint64_t random_trials = 2000)
    {
        InvarianceReport rep;
        rep.blocklength = n;
        if (!spec.is_additive()) {
            rep = check_permutation_invariance(spec, n, n <= 6 ? InvarianceMode::exhaustive : InvarianceMode::random,
                                               random_trials, seed);
            if (!rep.invariant)
                throw VerificationFailure("distortion '" + spec.name() + "' is not permutation invariant at n = " +
                                          std::to_string(n));
        }
        return CertifiedDistortion(std::move(spec), std::move(rep));
    }

    const DistortionSpec& spec() const { return spec_; }
    std::size_t blocklength() const { return report_.blocklength; }
    const InvarianceReport& report() const { return report_; }

    void require_blocklength(std::size_t n) const
    {
        if (n != report_.blocklength)
            throw std::invalid_argument("distortion certified at n = " + std::to_string(report_.blocklength) +
                                        " but used at n = " + std::to_string(n));
    }

private:
    CertifiedDistortion(DistortionSpec s, InvarianceReport r) : spec_(std::move(s)), report_(std::move(r)) {}

    DistortionSpec spec_;
    InvarianceReport report_;
};

/// min_y sum_x p(x) d(x, y): the distortion reachable at rate zero.
template <class T>
double d_max(const DistortionSpec& spec, const BasicDistribution<T>& p)
{
    spec.require_additive("d_max");
    if (p.size() != spec.x_size())
        throw std::invalid_argument("d_max: source alphabet does not match the distortion");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < spec.y_size(); ++y) {
        double acc = 0;
        for (std::size_t x = 0; x < spec.x_size(); ++x)
            acc += to_double(p[x]) * spec.letter(static_cast<Symbol>(x), static_cast<Symbol>(y));
        best = std::min(best, acc);
    }
    return best;
}

/// sum_x p(x) min_y d(x, y): the smallest achievable expected distortion.
template <class T>
double d_min(const DistortionSpec& spec, const BasicDistribution<T>& p)
{
    spec.require_additive("d_min");
    double acc = 0;
    for (std::size_t x = 0; x < spec.x_size(); ++x) {
        auto r = spec.letter_matrix().row(x);
        acc += to_double(p[x]) * *std::min_element(r.begin(), r.end());
    }
    return acc;
}

} // namespace sepkit
