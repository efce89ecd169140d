#pragma once

// Probability that an i.i.d. random block lands within a distortion threshold
// of a fixed reference block, with an optional typicality constraint on the
// random block's type. The event depends on the reference only through its
// type, so the probability is a sum over conditional compositions: for each
// reference letter b, how many of its positions receive each generated letter.

#include "errors.hpp"
#include "probability.hpp"
#include "types.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>

namespace sepkit {

/// Per-letter count bounds [lo, hi] for an eps-typical type at blocklength n.
struct TypicalityWindow {
    std::vector<std::size_t> lo;
    std::vector<std::size_t> hi;

    static TypicalityWindow make(const ExactDistribution& p, double eps, std::size_t n)
    {
        if (eps < 0)
            throw std::invalid_argument("typicality window: negative epsilon");
        TypicalityWindow w;
        Rational e = exact_from_double(eps);
        for (const auto& m : p.masses()) {
            Rational a = (m - e) * n;
            Rational b = (m + e) * n;
            // ceil(a) and floor(b), clamped to [0, n].
            BigInt ca = numerator_of(a) / denominator_of(a);
            if (Rational(ca) < a)
                ++ca;
            BigInt fb = numerator_of(b) / denominator_of(b);
            if (Rational(fb) > b)
                --fb;
            if (ca < 0)
                ca = 0;
            if (fb > BigInt(n))
                fb = n;
            w.lo.push_back(ca.convert_to<std::size_t>());
            w.hi.push_back(fb < 0 ? 0 : fb.convert_to<std::size_t>());
        }
        return w;
    }

    bool contains(std::span<const std::size_t> counts) const
    {
        for (std::size_t a = 0; a < counts.size(); ++a)
            if (counts[a] < lo[a] || counts[a] > hi[a])
                return false;
        return true;
    }

    bool empty() const
    {
        for (std::size_t a = 0; a < lo.size(); ++a)
            if (lo[a] > hi[a])
                return true;
        return false;
    }
};

/// total <= n D, with a small relative allowance for float rounding of n D.
inline bool within_distortion(double total, std::size_t n, double D)
{
    double limit = D * static_cast<double>(n);
    return total <= limit + 1e-9 * std::max(1.0, std::abs(limit));
}

/// Computes ln Pr[ Z i.i.d. `gen`, Z typical, sum_i cost(Z_i, b_i) <= n D ]
/// from the reference letter counts. Results are cached per reference type.
class CompositionEngine {
public:
    CompositionEngine(Distribution gen, Matrix<double> cost, std::optional<TypicalityWindow> window,
                      std::uint64_t budget = 50'000'000)
        : gen_(std::move(gen)), cost_(std::move(cost)), window_(std::move(window)), budget_(budget)
    {
        if (cost_.rows != gen_.size())
            throw std::invalid_argument("composition engine: cost rows must match the generated alphabet");
        for (double p : gen_.masses())
            logp_.push_back(p > 0 ? std::log(p) : -std::numeric_limits<double>::infinity());
    }

    const Distribution& generator() const { return gen_; }

    double log_probability(std::span<const std::size_t> ref_counts, double D)
    {
        std::pair<std::vector<std::size_t>, double> key{{ref_counts.begin(), ref_counts.end()}, D};
        {
            std::lock_guard lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end())
                return it->second;
        }
        double v = compute(key.first, D);
        std::lock_guard lock(mutex_);
        cache_.emplace(std::move(key), v);
        return v;
    }

    double log_probability(std::span<const Symbol> reference, std::size_t ref_alphabet, double D)
    {
        auto counts = letter_counts(reference, ref_alphabet);
        return log_probability(counts, D);
    }

    double probability(std::span<const Symbol> reference, std::size_t ref_alphabet, double D)
    {
        return std::exp(log_probability(reference, ref_alphabet, D));
    }

private:
    double compute(const std::vector<std::size_t>& ref, double D) const
    {
        if (ref.size() != cost_.cols)
            throw std::invalid_argument("composition engine: reference alphabet does not match the cost matrix");
        const std::size_t na = gen_.size();
        std::size_t n = std::accumulate(ref.begin(), ref.end(), std::size_t{0});
        if (window_ && window_->lo.size() != na)
            throw std::invalid_argument("composition engine: typicality window size mismatch");
        if (window_ && window_->empty())
            return -std::numeric_limits<double>::infinity();
        std::vector<double> lfact(n + 1, 0.0);
        for (std::size_t k = 1; k <= n; ++k)
            lfact[k] = lfact[k - 1] + std::log(static_cast<double>(k));
        const double limit = D * static_cast<double>(n);

        // Running log-sum-exp.
        double mx = -std::numeric_limits<double>::infinity();
        double acc = 0;
        auto add = [&](double t) {
            if (t == -std::numeric_limits<double>::infinity())
                return;
            if (t > mx) {
                acc = acc * std::exp(mx - t) + 1.0;
                mx = t;
            } else {
                acc += std::exp(t - mx);
            }
        };

        std::vector<std::size_t> totals(na, 0);
        std::uint64_t visited = 0;
        // Recursion over (reference letter b, generated letter a).
        auto rec = [&](auto&& self, std::size_t b, std::size_t a, std::size_t left, double dist, double logw) -> void {
            if (++visited > budget_)
                throw BudgetExceeded("composition enumeration exceeds its budget");
            if (b == ref.size()) {
                if (window_ && !window_->contains(totals))
                    return;
                add(logw);
                return;
            }
            if (a + 1 == na) {
                // Remaining positions of reference letter b all get letter a.
                std::size_t c = left;
                double nd = dist + static_cast<double>(c) * cost_(a, b);
                if (!within_distortion(nd, 1, limit))
                    return;
                if (window_ && totals[a] + c > window_->hi[a])
                    return;
                if (c > 0 && logp_[a] == -std::numeric_limits<double>::infinity())
                    return;
                totals[a] += c;
                double w = logw - lfact[c] + static_cast<double>(c) * (c > 0 ? logp_[a] : 0.0);
                self(self, b + 1, 0, b + 1 < ref.size() ? ref[b + 1] : 0, nd, w + (b + 1 < ref.size() ? lfact[ref[b + 1]] : 0.0));
                totals[a] -= c;
                return;
            }
            std::size_t cap = left;
            if (window_)
                cap = std::min(cap, window_->hi[a] - std::min(window_->hi[a], totals[a]));
            if (logp_[a] == -std::numeric_limits<double>::infinity())
                cap = 0;
            for (std::size_t c = 0; c <= cap; ++c) {
                double nd = dist + static_cast<double>(c) * cost_(a, b);
                if (!within_distortion(nd, 1, limit))
                    break;
                totals[a] += c;
                self(self, b, a + 1, left - c, nd, logw - lfact[c] + static_cast<double>(c) * (c > 0 ? logp_[a] : 0.0));
                totals[a] -= c;
            }
        };
        if (ref.empty())
            return 0.0;
        rec(rec, 0, 0, ref[0], 0.0, lfact[ref[0]]);
        if (acc == 0)
            return -std::numeric_limits<double>::infinity();
        return std::min(0.0, mx + std::log(acc));
    }

    Distribution gen_;
    Matrix<double> cost_;
    std::optional<TypicalityWindow> window_;
    std::uint64_t budget_;
    std::vector<double> logp_;
    std::mutex mutex_;
    std::map<std::pair<std::vector<std::size_t>, double>, double> cache_;
};

} // namespace sepkit
