#pragma once

// Informational rate-distortion function by Blahut-Arimoto, parameterized by
// the slope beta (nats per unit distortion) with bisection on beta to meet a
// distortion target.

#include "distortion.hpp"
#include "probability.hpp"
#include "rng.hpp"

#include <cmath>
#include <limits>

namespace sepkit {

struct BlahutArimotoOptions {
    double gap_tolerance = 1e-9;
    std::uint64_t max_iterations = 100000;
    double distortion_tolerance = 1e-8;
    double prune_below = 1e-300;
    int max_bisections = 200;
};

struct RateDistortionResult {
    double target = 0;      // requested D
    double distortion = 0;  // expected distortion of the reported test channel
    double rate = 0;        // bits
    double slope = 0;       // beta; infinity at D_min
    ChannelMatrix test_channel = identity_matrix<double>(1);
    std::vector<double> output_marginal;
    std::uint64_t iterations = 0;
    double gap = 0;         // final upper/lower bound gap in bits
    bool converged = true;
};

namespace detail {

struct BaState {
    std::vector<double> q;   // output marginal
    Matrix<double> Q;        // test channel
    double distortion = 0;
    double rate = 0;
    double gap = 0;
    std::uint64_t iterations = 0;
    bool converged = false;
};

// A(x,y) is exp(-beta (d(x,y) - min_y d(x,y))), or the indicator of the
// minimizing set when beta is infinite.
inline BaState run_ba(const std::vector<double>& p, const Matrix<double>& d, const Matrix<double>& A,
                      const BlahutArimotoOptions& opt)
{
    const std::size_t nx = d.rows, ny = d.cols;
    BaState s;
    s.q.assign(ny, 1.0 / static_cast<double>(ny));
    std::vector<double> denom(nx), c(ny);
    s.gap = std::numeric_limits<double>::infinity();
    for (std::uint64_t it = 0; it < opt.max_iterations; ++it) {
        for (std::size_t x = 0; x < nx; ++x) {
            double z = 0;
            for (std::size_t y = 0; y < ny; ++y)
                z += s.q[y] * A(x, y);
            denom[x] = z;
        }
        double cmax = 0, qclogc = 0;
        for (std::size_t y = 0; y < ny; ++y) {
            double acc = 0;
            for (std::size_t x = 0; x < nx; ++x)
                if (p[x] > 0 && denom[x] > 0)
                    acc += p[x] * A(x, y) / denom[x];
            c[y] = acc;
            cmax = std::max(cmax, acc);
            if (s.q[y] > 0 && acc > 0)
                qclogc += s.q[y] * acc * std::log2(acc);
        }
        s.gap = std::log2(cmax) - qclogc;
        s.iterations = it + 1;
        if (s.gap < opt.gap_tolerance) {
            s.converged = true;
            break;
        }
        double total = 0;
        for (std::size_t y = 0; y < ny; ++y) {
            s.q[y] *= c[y];
            if (s.q[y] < opt.prune_below)
                s.q[y] = 0;
            total += s.q[y];
        }
        for (auto& v : s.q)
            v /= total;
    }
    s.Q = Matrix<double>(nx, ny);
    for (std::size_t x = 0; x < nx; ++x) {
        double z = 0;
        for (std::size_t y = 0; y < ny; ++y)
            z += s.q[y] * A(x, y);
        for (std::size_t y = 0; y < ny; ++y)
            s.Q(x, y) = z > 0 ? s.q[y] * A(x, y) / z : (y == 0 ? 1.0 : 0.0);
    }
    // Recompute the marginal from the final channel so rate and channel agree.
    std::fill(s.q.begin(), s.q.end(), 0.0);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
            s.q[y] += p[x] * s.Q(x, y);
            s.distortion += p[x] * s.Q(x, y) * d(x, y);
        }
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y)
            if (p[x] > 0 && s.Q(x, y) > 0)
                s.rate += p[x] * s.Q(x, y) * std::log2(s.Q(x, y) / s.q[y]);
    s.rate = std::max(s.rate, 0.0);
    return s;
}

inline Matrix<double> ba_kernel(const Matrix<double>& d, double beta)
{
    Matrix<double> A(d.rows, d.cols);
    for (std::size_t x = 0; x < d.rows; ++x) {
        auto r = d.row(x);
        double m = *std::min_element(r.begin(), r.end());
        for (std::size_t y = 0; y < d.cols; ++y) {
            if (std::isinf(beta))
                A(x, y) = d(x, y) == m ? 1.0 : 0.0;
            else
                A(x, y) = std::exp(-beta * (d(x, y) - m));
        }
    }
    return A;
}

inline ChannelMatrix normalized_channel(Matrix<double> m)
{
    for (std::size_t r = 0; r < m.rows; ++r) {
        double t = 0;
        for (std::size_t c = 0; c < m.cols; ++c)
            t += m(r, c);
        for (std::size_t c = 0; c < m.cols; ++c)
            m(r, c) /= t;
    }
    return ChannelMatrix(std::move(m));
}

} // namespace detail

/// R^I(D) for a source pmf and an additive distortion.
inline RateDistortionResult blahut_arimoto(const Distribution& p_x, const DistortionSpec& spec, double D,
                                           const BlahutArimotoOptions& opt = {})
{
    spec.require_additive("blahut_arimoto");
    if (!(D >= 0))
        throw std::domain_error("blahut_arimoto: distortion target must be nonnegative");
    if (p_x.size() != spec.x_size())
        throw std::invalid_argument("blahut_arimoto: source alphabet does not match the distortion");
    const auto& d = spec.letter_matrix();
    const std::vector<double>& p = p_x.masses();
    RateDistortionResult res;
    res.target = D;

    const double dmax = d_max(spec, p_x);
    const double dmin = d_min(spec, p_x);
    if (D >= dmax) {
        // Rate zero: reproduce the best constant letter.
        std::size_t best = 0;
        double bestv = std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < d.cols; ++y) {
            double acc = 0;
            for (std::size_t x = 0; x < d.rows; ++x)
                acc += p[x] * d(x, y);
            if (acc < bestv) {
                bestv = acc;
                best = y;
            }
        }
        Matrix<double> Q(d.rows, d.cols);
        for (std::size_t x = 0; x < d.rows; ++x)
            Q(x, best) = 1.0;
        res.test_channel = ChannelMatrix(std::move(Q));
        res.output_marginal.assign(d.cols, 0.0);
        res.output_marginal[best] = 1.0;
        res.distortion = bestv;
        res.rate = 0;
        res.slope = 0;
        return res;
    }
    const double tol = 1e-12 * std::max(1.0, dmax);
    if (D < dmin - tol)
        throw std::domain_error("blahut_arimoto: distortion target below the minimum achievable distortion");

    auto finish = [&](const detail::BaState& s, double beta) {
        res.distortion = s.distortion;
        res.rate = s.rate;
        res.slope = beta;
        res.gap = s.gap;
        res.converged = res.converged && s.converged;
        res.test_channel = detail::normalized_channel(s.Q);
        res.output_marginal = s.q;
        return res;
    };

    const double inf = std::numeric_limits<double>::infinity();
    if (D <= dmin + tol) {
        auto s = detail::run_ba(p, d, detail::ba_kernel(d, inf), opt);
        res.iterations = s.iterations;
        return finish(s, inf);
    }

    // Initial bracket [0, max d / min nonzero p], doubled until it contains the target.
    double pmin = 1.0;
    for (double v : p)
        if (v > 0)
            pmin = std::min(pmin, v);
    double lo = 0.0;
    double hi = spec.max_letter() / pmin;
    if (!(hi > 0))
        hi = 1.0;
    auto eval = [&](double beta) {
        auto s = detail::run_ba(p, d, detail::ba_kernel(d, beta), opt);
        res.iterations += s.iterations;
        res.converged = res.converged && s.converged;
        return s;
    };
    auto s_hi = eval(hi);
    for (int k = 0; s_hi.distortion > D && k < 60; ++k) {
        lo = hi;
        hi *= 2;
        s_hi = eval(hi);
    }
    if (s_hi.distortion > D) {
        // Numerically the restricted-support limit.
        auto s = eval(inf);
        return finish(s, inf);
    }
    if (std::abs(s_hi.distortion - D) < opt.distortion_tolerance)
        return finish(s_hi, hi);
    // At lo the distortion is above target (lo = 0 stands for the d_max end).
    std::optional<detail::BaState> s_lo;
    for (int k = 0; k < opt.max_bisections; ++k) {
        double mid = 0.5 * (lo + hi);
        auto s = eval(mid);
        if (std::abs(s.distortion - D) < opt.distortion_tolerance)
            return finish(s, mid);
        if (s.distortion > D) {
            lo = mid;
            s_lo = std::move(s);
        } else {
            hi = mid;
            s_hi = std::move(s);
        }
        if (hi - lo <= 1e-15 * hi)
            break;
    }
    // The curve has a straight segment at this slope: time-share the two
    // bracketing test channels, which lie on the same supporting line.
    if (!s_lo) {
        s_lo = detail::BaState{};
        auto zero = blahut_arimoto(p_x, spec, dmax, opt);
        s_lo->Q = zero.test_channel.matrix();
        s_lo->q = zero.output_marginal;
        s_lo->distortion = zero.distortion;
        s_lo->rate = 0;
        s_lo->gap = 0;
        s_lo->converged = true;
    }
    double lam = (s_lo->distortion - D) / (s_lo->distortion - s_hi.distortion);
    detail::BaState mix;
    mix.Q = Matrix<double>(d.rows, d.cols);
    mix.q.assign(d.cols, 0.0);
    for (std::size_t i = 0; i < mix.Q.data.size(); ++i)
        mix.Q.data[i] = lam * s_hi.Q.data[i] + (1 - lam) * s_lo->Q.data[i];
    mix.distortion = lam * s_hi.distortion + (1 - lam) * s_lo->distortion;
    mix.rate = lam * s_hi.rate + (1 - lam) * s_lo->rate;
    mix.gap = std::max(s_hi.gap, s_lo->gap);
    mix.converged = s_hi.converged && s_lo->converged;
    for (std::size_t x = 0; x < d.rows; ++x)
        for (std::size_t y = 0; y < d.cols; ++y)
            mix.q[y] += p[x] * mix.Q(x, y);
    return finish(mix, 0.5 * (lo + hi));
}

template <class T>
RateDistortionResult blahut_arimoto(const BasicDistribution<T>& p_x, const DistortionSpec& spec, double D,
                                    const BlahutArimotoOptions& opt = {})
    requires(!std::is_same_v<T, double>)
{
    return blahut_arimoto(p_x.to_float(), spec, D, opt);
}

/// One result per grid point; points are independent and run in parallel.
template <class T>
std::vector<RateDistortionResult> rd_curve(const BasicDistribution<T>& p_x, const DistortionSpec& spec,
                                           const std::vector<double>& grid, unsigned threads = 1,
                                           const BlahutArimotoOptions& opt = {})
{
    auto pf = p_x.to_float();
    std::vector<RateDistortionResult> out(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t i) { out[i] = blahut_arimoto(pf, spec, grid[i], opt); });
    return out;
}

} // namespace sepkit
