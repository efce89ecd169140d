#pragma once

// Probability mass functions over finite alphabets and the information
// measures built on them. Every routine is templated on the scalar: `double`
// for numerical work, `Rational` for exact work. Exact-mode information
// measures come back as ExactLog values so identities between them can be
// checked with zero tolerance. All logarithms are base 2.

#include "exact_log.hpp"
#include "rational.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace sepkit {

using Symbol = std::uint32_t;
using Sequence = std::vector<Symbol>;
using Alphabet = std::vector<std::string>;

enum class NumericMode { rational, floating };

inline const char* to_string(NumericMode m) { return m == NumericMode::rational ? "rational" : "float"; }

template <class T>
struct scalar_traits;

template <>
struct scalar_traits<double> {
    static constexpr NumericMode mode = NumericMode::floating;
    using bits_type = double;
};

template <>
struct scalar_traits<Rational> {
    static constexpr NumericMode mode = NumericMode::rational;
    using bits_type = ExactLog;
};

/// Information quantity type for a scalar: double, or ExactLog for rationals.
template <class T>
using bits_t = typename scalar_traits<T>::bits_type;

inline double bits_value(double v) { return v; }
inline double bits_value(const ExactLog& v) { return v.value(); }

inline Alphabet indexed_alphabet(std::size_t size)
{
    Alphabet a;
    a.reserve(size);
    for (std::size_t i = 0; i < size; ++i)
        a.push_back(std::to_string(i));
    return a;
}

inline Alphabet binary_alphabet() { return indexed_alphabet(2); }

namespace detail {

template <class T>
bits_t<T> infinite_bits()
{
    if constexpr (std::is_same_v<T, double>)
        return std::numeric_limits<double>::infinity();
    else
        return ExactLog::infinity();
}

// acc += coef * log2(ratio)
template <class T>
void add_xlog(bits_t<T>& acc, const T& coef, const T& ratio)
{
    if constexpr (std::is_same_v<T, double>)
        acc += coef * std::log2(ratio);
    else
        acc.add_log2(coef, ratio);
}

template <class T>
void check_mass(const T& m)
{
    if constexpr (std::is_same_v<T, double>) {
        if (!std::isfinite(m) || m < 0.0)
            throw std::invalid_argument("probability masses must be finite and nonnegative");
    } else {
        if (m < 0)
            throw std::invalid_argument("probability masses must be nonnegative");
    }
}

template <class T>
void check_total(const T& total)
{
    if constexpr (std::is_same_v<T, double>) {
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("probability masses must sum to 1 (got " + std::to_string(total) + ")");
    } else {
        if (total != 1)
            throw std::invalid_argument("rational probability masses must sum to exactly 1 (got " +
                                        to_string(total) + ")");
    }
}

} // namespace detail

template <class T>
class BasicDistribution {
public:
    using scalar_type = T;

    BasicDistribution(Alphabet alphabet, std::vector<T> masses)
        : alphabet_(std::move(alphabet)), masses_(std::move(masses))
    {
        validate();
    }

    explicit BasicDistribution(std::vector<T> masses)
        : alphabet_(indexed_alphabet(masses.size())), masses_(std::move(masses))
    {
        validate();
    }

private:
    void validate() const
    {
        if (alphabet_.empty())
            throw std::invalid_argument("distribution over an empty alphabet");
        if (alphabet_.size() != masses_.size())
            throw std::invalid_argument("alphabet and mass vector differ in length");
        T total{0};
        for (const auto& m : masses_) {
            detail::check_mass(m);
            total += m;
        }
        detail::check_total(total);
    }

public:

    static BasicDistribution uniform(Alphabet alphabet)
    {
        std::vector<T> m(alphabet.size(), T{1} / T(static_cast<long>(alphabet.size())));
        if constexpr (std::is_same_v<T, double>) {
            // Keep the sum within tolerance for awkward sizes.
            double total = std::accumulate(m.begin(), m.end(), 0.0);
            m.back() += 1.0 - total;
        }
        return BasicDistribution(std::move(alphabet), std::move(m));
    }

    static BasicDistribution point_mass(Alphabet alphabet, Symbol at)
    {
        std::vector<T> m(alphabet.size(), T{0});
        m.at(at) = T{1};
        return BasicDistribution(std::move(alphabet), std::move(m));
    }

    const Alphabet& alphabet() const { return alphabet_; }
    const std::vector<T>& masses() const { return masses_; }
    std::size_t size() const { return masses_.size(); }
    const T& operator[](std::size_t i) const { return masses_[i]; }
    static constexpr NumericMode mode() { return scalar_traits<T>::mode; }

    BasicDistribution<double> to_float() const
    {
        std::vector<double> m;
        m.reserve(masses_.size());
        for (const auto& x : masses_)
            m.push_back(to_double(x));
        if constexpr (!std::is_same_v<T, double>) {
            double total = std::accumulate(m.begin(), m.end(), 0.0);
            std::size_t largest = static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin());
            m[largest] += 1.0 - total;
        }
        return BasicDistribution<double>(alphabet_, std::move(m));
    }

    friend bool operator==(const BasicDistribution& a, const BasicDistribution& b)
    {
        return a.alphabet_ == b.alphabet_ && a.masses_ == b.masses_;
    }

private:
    Alphabet alphabet_;
    std::vector<T> masses_;
};

using Distribution = BasicDistribution<double>;
using ExactDistribution = BasicDistribution<Rational>;

inline ExactDistribution to_exact(const Distribution& p)
{
    std::vector<Rational> m;
    Rational total = 0;
    for (double x : p.masses()) {
        m.push_back(exact_from_double(x));
        total += m.back();
    }
    // Float pmfs are only normalized to within 1e-12; absorb the residue into
    // the largest mass so the exact pmf is valid.
    auto largest = static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin());
    m[largest] += 1 - total;
    return ExactDistribution(p.alphabet(), std::move(m));
}

inline const ExactDistribution& to_exact(const ExactDistribution& p) { return p; }

/// Dense row-major matrix.
template <class T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T{0}) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<T> values) : rows(r), cols(c), data(std::move(values))
    {
        if (data.size() != r * c)
            throw std::invalid_argument("matrix data has the wrong length");
    }

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Single-letter transition matrix: row i is the output pmf given input i.
template <class T>
class BasicChannelMatrix {
public:
    BasicChannelMatrix(Matrix<T> m) : m_(std::move(m))
    {
        if (m_.rows == 0 || m_.cols == 0)
            throw std::invalid_argument("channel matrix must be nonempty");
        for (std::size_t r = 0; r < m_.rows; ++r) {
            T total{0};
            for (const auto& x : m_.row(r)) {
                detail::check_mass(x);
                total += x;
            }
            detail::check_total(total);
        }
    }

    std::size_t inputs() const { return m_.rows; }
    std::size_t outputs() const { return m_.cols; }
    const T& operator()(std::size_t in, std::size_t out) const { return m_(in, out); }
    const Matrix<T>& matrix() const { return m_; }

    BasicDistribution<T> row(std::size_t in) const
    {
        auto r = m_.row(in);
        return BasicDistribution<T>(std::vector<T>(r.begin(), r.end()));
    }

    BasicChannelMatrix<double> to_float() const
    {
        Matrix<double> m(m_.rows, m_.cols);
        for (std::size_t i = 0; i < m_.data.size(); ++i)
            m.data[i] = to_double(m_.data[i]);
        for (std::size_t r = 0; r < m.rows; ++r) {
            double total = 0;
            for (std::size_t c = 0; c < m.cols; ++c)
                total += m(r, c);
            m(r, m.cols - 1) += 1.0 - total;
            if (m(r, m.cols - 1) < 0)
                m(r, m.cols - 1) = 0;
        }
        return BasicChannelMatrix<double>(std::move(m));
    }

private:
    Matrix<T> m_;
};

using ChannelMatrix = BasicChannelMatrix<double>;
using ExactChannelMatrix = BasicChannelMatrix<Rational>;

template <class T>
BasicChannelMatrix<T> bsc_matrix(const T& crossover)
{
    if (crossover < 0 || crossover > 1)
        throw std::invalid_argument("crossover probability outside [0,1]");
    T one{1};
    return BasicChannelMatrix<T>(Matrix<T>(2, 2, {one - crossover, crossover, crossover, one - crossover}));
}

template <class T>
BasicChannelMatrix<T> identity_matrix(std::size_t size)
{
    Matrix<T> m(size, size);
    for (std::size_t i = 0; i < size; ++i)
        m(i, i) = T{1};
    return BasicChannelMatrix<T>(std::move(m));
}

template <class T>
class BasicJointDistribution {
public:
    BasicJointDistribution(Alphabet rows, Alphabet cols, Matrix<T> masses)
        : rows_(std::move(rows)), cols_(std::move(cols)), m_(std::move(masses))
    {
        validate();
    }

    explicit BasicJointDistribution(Matrix<T> masses)
        : rows_(indexed_alphabet(masses.rows)), cols_(indexed_alphabet(masses.cols)), m_(std::move(masses))
    {
        validate();
    }

private:
    void validate() const
    {
        if (rows_.size() != m_.rows || cols_.size() != m_.cols)
            throw std::invalid_argument("joint distribution shape does not match its alphabets");
        T total{0};
        for (const auto& x : m_.data) {
            detail::check_mass(x);
            total += x;
        }
        detail::check_total(total);
    }

public:

    static BasicJointDistribution product(const BasicDistribution<T>& a, const BasicDistribution<T>& b)
    {
        Matrix<T> m(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j)
                m(i, j) = a[i] * b[j];
        return BasicJointDistribution(a.alphabet(), b.alphabet(), std::move(m));
    }

    /// Joint law of (input, output) for an input pmf driven through a kernel.
    static BasicJointDistribution from_channel(const BasicDistribution<T>& input, const BasicChannelMatrix<T>& k)
    {
        if (input.size() != k.inputs())
            throw std::invalid_argument("input pmf and channel matrix disagree on the input alphabet");
        Matrix<T> m(k.inputs(), k.outputs());
        for (std::size_t i = 0; i < k.inputs(); ++i)
            for (std::size_t j = 0; j < k.outputs(); ++j)
                m(i, j) = input[i] * k(i, j);
        return BasicJointDistribution(input.alphabet(), indexed_alphabet(k.outputs()), std::move(m));
    }

    const Alphabet& row_alphabet() const { return rows_; }
    const Alphabet& col_alphabet() const { return cols_; }
    const Matrix<T>& masses() const { return m_; }
    const T& operator()(std::size_t r, std::size_t c) const { return m_(r, c); }

    BasicDistribution<T> row_marginal() const
    {
        std::vector<T> p(m_.rows, T{0});
        for (std::size_t r = 0; r < m_.rows; ++r)
            for (std::size_t c = 0; c < m_.cols; ++c)
                p[r] += m_(r, c);
        if constexpr (std::is_same_v<T, double>)
            return renormalized(rows_, std::move(p));
        else
            return BasicDistribution<T>(rows_, std::move(p));
    }

    BasicDistribution<T> col_marginal() const
    {
        std::vector<T> p(m_.cols, T{0});
        for (std::size_t r = 0; r < m_.rows; ++r)
            for (std::size_t c = 0; c < m_.cols; ++c)
                p[c] += m_(r, c);
        if constexpr (std::is_same_v<T, double>)
            return renormalized(cols_, std::move(p));
        else
            return BasicDistribution<T>(cols_, std::move(p));
    }

    BasicJointDistribution<double> to_float() const
    {
        Matrix<double> m(m_.rows, m_.cols);
        for (std::size_t i = 0; i < m_.data.size(); ++i)
            m.data[i] = to_double(m_.data[i]);
        return BasicJointDistribution<double>(rows_, cols_, std::move(m));
    }

private:
    static BasicDistribution<double> renormalized(const Alphabet& a, std::vector<double> p)
    {
        double total = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& x : p)
            x /= total;
        return BasicDistribution<double>(a, std::move(p));
    }

    Alphabet rows_;
    Alphabet cols_;
    Matrix<T> m_;
};

using JointDistribution = BasicJointDistribution<double>;
using ExactJointDistribution = BasicJointDistribution<Rational>;

// ---------------------------------------------------------------------------
// Information measures

template <class T>
bits_t<T> entropy(const BasicDistribution<T>& p)
{
    bits_t<T> h{};
    for (const auto& m : p.masses())
        if (m > 0)
            detail::add_xlog<T>(h, m, T{1} / m);
    return h;
}

/// D(p || q) over masses laid out identically; +infinity on a support violation.
template <class T>
bits_t<T> kl_divergence(std::span<const T> p, std::span<const T> q)
{
    if (p.size() != q.size())
        throw std::invalid_argument("kl_divergence: alphabets differ");
    bits_t<T> d{};
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0)
            continue;
        if (q[i] == 0)
            return detail::infinite_bits<T>();
        detail::add_xlog<T>(d, p[i], p[i] / q[i]);
    }
    return d;
}

template <class T>
bits_t<T> kl_divergence(const BasicDistribution<T>& p, const BasicDistribution<T>& q)
{
    if (p.alphabet() != q.alphabet())
        throw std::invalid_argument("kl_divergence: alphabets differ");
    return kl_divergence<T>(std::span<const T>(p.masses()), std::span<const T>(q.masses()));
}

template <class T>
bits_t<T> kl_divergence(const BasicJointDistribution<T>& p, const BasicJointDistribution<T>& q)
{
    if (p.row_alphabet() != q.row_alphabet() || p.col_alphabet() != q.col_alphabet())
        throw std::invalid_argument("kl_divergence: joint alphabets differ");
    return kl_divergence<T>(std::span<const T>(p.masses().data), std::span<const T>(q.masses().data));
}

/// I(X;Y) of a joint law, as D(joint || product of marginals).
template <class T>
bits_t<T> mutual_information(const BasicJointDistribution<T>& joint)
{
    auto prod = BasicJointDistribution<T>::product(joint.row_marginal(), joint.col_marginal());
    return kl_divergence<T>(std::span<const T>(joint.masses().data), std::span<const T>(prod.masses().data));
}

/// I(Q, k) = H(output marginal) - sum_i Q(i) H(k(.|i)).
template <class T>
bits_t<T> mutual_information(const BasicDistribution<T>& input, const BasicChannelMatrix<T>& k)
{
    if (input.size() != k.inputs())
        throw std::invalid_argument("mutual_information: input pmf and channel matrix disagree");
    std::vector<T> out(k.outputs(), T{0});
    for (std::size_t i = 0; i < k.inputs(); ++i)
        for (std::size_t j = 0; j < k.outputs(); ++j)
            out[j] += input[i] * k(i, j);
    bits_t<T> acc{};
    for (const auto& m : out)
        if (m > 0)
            detail::add_xlog<T>(acc, m, T{1} / m);
    for (std::size_t i = 0; i < k.inputs(); ++i) {
        if (input[i] == 0)
            continue;
        for (std::size_t j = 0; j < k.outputs(); ++j)
            if (k(i, j) > 0)
                detail::add_xlog<T>(acc, input[i] * k(i, j), k(i, j));
    }
    if constexpr (std::is_same_v<T, double>)
        return std::max(acc, 0.0);
    else
        return acc;
}

/// log2( k(b|a) / P(b) ), the pointwise information density.
template <class T>
bits_t<T> information_density(Symbol a, Symbol b, const BasicDistribution<T>& input, const BasicChannelMatrix<T>& k)
{
    if (input.size() != k.inputs() || a >= k.inputs() || b >= k.outputs())
        throw std::invalid_argument("information_density: symbol or dimension mismatch");
    T pb{0};
    for (std::size_t i = 0; i < k.inputs(); ++i)
        pb += input[i] * k(i, b);
    if (pb == 0)
        throw std::domain_error("information_density: output symbol has zero probability");
    if (k(a, b) == 0)
        return -detail::infinite_bits<T>();
    bits_t<T> r{};
    detail::add_xlog<T>(r, T{1}, k(a, b) / pb);
    return r;
}

/// Total variation distance between two pmfs on the same alphabet.
template <class T>
T total_variation(std::span<const T> p, std::span<const T> q)
{
    if (p.size() != q.size())
        throw std::invalid_argument("total_variation: alphabets differ");
    T acc{0};
    for (std::size_t i = 0; i < p.size(); ++i)
        acc += p[i] > q[i] ? p[i] - q[i] : q[i] - p[i];
    return acc / T{2};
}

} // namespace sepkit
