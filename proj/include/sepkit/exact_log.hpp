#pragma once

#include "rational.hpp"

#include <limits>
#include <ostream>
#include <utility>
#include <vector>

namespace sepkit {

/// An exact value of the form  sum_i c_i * log2(b_i)  with rational c_i and
/// integer bases b_i > 1, plus an optional +/- infinity flag.
///
/// The bases are kept pairwise coprime. Logarithms of pairwise coprime
/// integers greater than one are linearly independent over the rationals, so
/// the value is zero exactly when every coefficient is zero. This is what lets
/// entropies and divergences of rational pmfs be compared without rounding.
class ExactLog {
public:
    ExactLog() = default;

    static ExactLog infinity(int sign = +1)
    {
        ExactLog v;
        v.infinite_ = sign >= 0 ? +1 : -1;
        return v;
    }

    /// Adds coef * log2(arg). arg must be positive.
    void add_log2(const Rational& coef, const Rational& arg)
    {
        if (arg <= 0)
            throw std::domain_error("logarithm of a non-positive rational");
        if (coef == 0)
            return;
        add_base(numerator_of(arg), coef);
        add_base(denominator_of(arg), -coef);
    }

    bool is_infinite() const { return infinite_ != 0; }
    int infinity_sign() const { return infinite_; }
    bool is_zero() const { return infinite_ == 0 && terms_.empty(); }

    double value() const
    {
        if (infinite_ != 0)
            return infinite_ * std::numeric_limits<double>::infinity();
        double acc = 0.0;
        for (const auto& [base, coef] : terms_)
            acc += to_double(coef) * log2_big(base);
        return acc;
    }

    const std::vector<std::pair<BigInt, Rational>>& terms() const { return terms_; }

    ExactLog& operator+=(const ExactLog& other)
    {
        if (other.infinite_ != 0 || infinite_ != 0) {
            if (infinite_ != 0 && other.infinite_ != 0 && infinite_ != other.infinite_)
                throw std::domain_error("indeterminate infinite difference");
            if (infinite_ == 0)
                infinite_ = other.infinite_;
            terms_.clear();
            return *this;
        }
        for (const auto& [base, coef] : other.terms_)
            add_base(base, coef);
        return *this;
    }

    ExactLog operator-() const
    {
        ExactLog r = *this;
        r.infinite_ = -infinite_;
        for (auto& t : r.terms_)
            t.second = -t.second;
        return r;
    }

    ExactLog& operator-=(const ExactLog& other) { return *this += -other; }

    ExactLog& operator*=(const Rational& scale)
    {
        if (scale == 0) {
            if (infinite_ != 0)
                throw std::domain_error("zero times infinity");
            terms_.clear();
            return *this;
        }
        if (scale < 0)
            infinite_ = -infinite_;
        for (auto& t : terms_)
            t.second *= scale;
        return *this;
    }

    friend ExactLog operator+(ExactLog a, const ExactLog& b) { return a += b; }
    friend ExactLog operator-(ExactLog a, const ExactLog& b) { return a -= b; }
    friend ExactLog operator*(ExactLog a, const Rational& s) { return a *= s; }

    /// Equal infinities compare equal, which is the convention the divergence
    /// chain rule needs when a support condition fails.
    friend bool operator==(const ExactLog& a, const ExactLog& b)
    {
        if (a.infinite_ != 0 || b.infinite_ != 0)
            return a.infinite_ == b.infinite_;
        return (a - b).is_zero();
    }

    friend std::ostream& operator<<(std::ostream& os, const ExactLog& v)
    {
        if (v.infinite_ != 0)
            return os << (v.infinite_ > 0 ? "+inf" : "-inf");
        if (v.terms_.empty())
            return os << "0";
        bool first = true;
        for (const auto& [base, coef] : v.terms_) {
            if (!first)
                os << " + ";
            os << "(" << to_string(coef) << ")*log2(" << base << ")";
            first = false;
        }
        return os;
    }

private:
    static double log2_big(const BigInt& b)
    {
        if (b < BigInt(1) << 1000)
            return std::log2(b.convert_to<double>());
        unsigned top = boost::multiprecision::msb(b);
        BigInt head = b >> (top - 60);
        return std::log2(head.convert_to<double>()) + static_cast<double>(top - 60);
    }

    // Keeps the bases pairwise coprime by splitting on common factors.
    void add_base(BigInt b, Rational c)
    {
        if (c == 0 || b == 1)
            return;
        for (std::size_t i = 0; i < terms_.size(); ++i) {
            if (terms_[i].first == b) {
                terms_[i].second += c;
                if (terms_[i].second == 0)
                    terms_.erase(terms_.begin() + static_cast<std::ptrdiff_t>(i));
                return;
            }
            BigInt g = boost::multiprecision::gcd(terms_[i].first, b);
            if (g == 1)
                continue;
            BigInt k = terms_[i].first;
            Rational ck = terms_[i].second;
            terms_.erase(terms_.begin() + static_cast<std::ptrdiff_t>(i));
            add_base(g, ck);
            add_base(k / g, ck);
            add_base(g, c);
            add_base(b / g, c);
            return;
        }
        terms_.emplace_back(std::move(b), std::move(c));
    }

    std::vector<std::pair<BigInt, Rational>> terms_;
    int infinite_ = 0;
};

} // namespace sepkit
