#pragma once

// Exact rational scalars and the helpers shared by every exact-mode module.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sepkit {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline Rational make_rational(std::int64_t num, std::int64_t den = 1)
{
    if (den == 0)
        throw std::invalid_argument("rational with zero denominator");
    return Rational(BigInt(num), BigInt(den));
}

inline BigInt numerator_of(const Rational& r) { return boost::multiprecision::numerator(r); }
inline BigInt denominator_of(const Rational& r) { return boost::multiprecision::denominator(r); }

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline double to_double(double x) { return x; }

// Every finite double is a dyadic rational; the conversion is exact.
inline Rational exact_from_double(double x)
{
    if (!std::isfinite(x))
        throw std::invalid_argument("cannot convert non-finite value to rational");
    int exp = 0;
    double mant = std::frexp(x, &exp);
    // mant * 2^53 is an integer for any double.
    auto scaled = static_cast<std::int64_t>(std::ldexp(mant, 53));
    exp -= 53;
    Rational r{BigInt(scaled)};
    if (exp > 0)
        r *= Rational(BigInt(1) << exp);
    else if (exp < 0)
        r /= Rational(BigInt(1) << -exp);
    return r;
}

// "num/den", "num", or a decimal literal such as "0.1" (read as 1/10).
inline Rational parse_rational(std::string_view text)
{
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
            s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
            s.remove_suffix(1);
        return s;
    };
    text = trim(text);
    if (text.empty())
        throw std::invalid_argument("empty rational literal");
    auto parse_int = [](std::string_view s) {
        if (s.empty())
            throw std::invalid_argument("malformed rational literal");
        std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
        if (i == s.size())
            throw std::invalid_argument("malformed rational literal");
        for (std::size_t k = i; k < s.size(); ++k)
            if (!std::isdigit(static_cast<unsigned char>(s[k])))
                throw std::invalid_argument("malformed rational literal '" + std::string(s) + "'");
        return BigInt(std::string(s));
    };
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        BigInt num = parse_int(trim(text.substr(0, slash)));
        BigInt den = parse_int(trim(text.substr(slash + 1)));
        if (den == 0)
            throw std::invalid_argument("rational with zero denominator");
        return Rational(num, den);
    }
    if (auto dot = text.find('.'); dot != std::string_view::npos) {
        std::string digits(text.substr(0, dot));
        std::string frac(text.substr(dot + 1));
        if (digits.empty() || digits == "-" || digits == "+")
            digits += "0";
        BigInt whole = parse_int(digits);
        BigInt f = frac.empty() ? BigInt(0) : parse_int(frac);
        BigInt scale = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(frac.size()));
        bool neg = !digits.empty() && digits[0] == '-';
        BigInt num = whole * scale + (neg ? -f : f);
        return Rational(num, scale);
    }
    return Rational(parse_int(text));
}

inline std::string to_string(const Rational& r)
{
    return numerator_of(r).str() + "/" + denominator_of(r).str();
}

} // namespace sepkit
