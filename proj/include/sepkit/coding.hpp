#pragma once

// Random coding with joint-typicality decoding through black-box channels,
// the union-bound error exponent for the impostor event, and the full
// source-code / channel-code separation chain.
//
// Two simulation engines are provided. Explicit mode materializes the
// codebook (one per batch of trials, shared by all kernels of the batch).
// Implicit mode handles codebooks far too large to store: given the channel
// output y, the other codewords are independent of y, so the number of
// impostors that pass the typicality test is Binomial(M-1, pi(y)), where
// pi(y) is computed by enumerating conditional compositions. That reproduces
// the random-coding average exactly in distribution, with a fresh codebook
// per trial.

#include "channels.hpp"
#include "conditional_types.hpp"
#include "distortion.hpp"
#include "probability.hpp"
#include "rate_distortion.hpp"
#include "rng.hpp"
#include "types.hpp"

#include <cmath>
#include <map>
#include <optional>

namespace sepkit {

/// floor(n R), robust to the representation error of R.
inline std::size_t message_bits(std::size_t n, double R)
{
    if (!(R >= 0) || !std::isfinite(R))
        throw std::invalid_argument("rate must be finite and nonnegative");
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * R + 1e-9));
}

inline BigInt codebook_size(std::size_t n, double R) { return BigInt(1) << message_bits(n, R); }

enum class CodebookMode { automatic, explicit_list, implicit };
enum class CodebookOrigin { iid, type_class, explicit_list };

inline const char* to_string(CodebookMode m)
{
    switch (m) {
    case CodebookMode::explicit_list: return "explicit";
    case CodebookMode::implicit: return "implicit";
    default: return "auto";
    }
}

inline const char* to_string(CodebookOrigin o)
{
    switch (o) {
    case CodebookOrigin::iid: return "iid";
    case CodebookOrigin::type_class: return "type_class";
    default: return "explicit";
    }
}

struct Codebook {
    std::size_t blocklength = 0;
    double rate = 0;
    CodebookOrigin origin = CodebookOrigin::explicit_list;
    std::uint64_t seed = 0;
    std::vector<Sequence> words;

    std::size_t size() const { return words.size(); }
    const Sequence& operator[](std::size_t i) const { return words[i]; }
};

inline constexpr std::uint64_t default_explicit_limit = 1u << 16;

namespace detail {

inline std::uint64_t checked_size(std::size_t n, double R, std::uint64_t limit)
{
    auto bits = message_bits(n, R);
    if (bits >= 63 || (std::uint64_t{1} << bits) > limit)
        throw BudgetExceeded("codebook of 2^" + std::to_string(bits) + " words is too large to store");
    return std::uint64_t{1} << bits;
}

} // namespace detail

/// 2^floor(nR) codewords with letters i.i.d. p.
inline Codebook generate_iid_codebook(const Distribution& p, std::size_t n, double R, Rng& rng,
                                      std::uint64_t limit = default_explicit_limit)
{
    if (n == 0)
        throw std::invalid_argument("codebook blocklength must be positive");
    auto m = detail::checked_size(n, R, limit);
    LetterSampler draw(p);
    Codebook cb;
    cb.blocklength = n;
    cb.rate = R;
    cb.origin = CodebookOrigin::iid;
    cb.words.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i)
        cb.words.push_back(draw.block(n, rng));
    return cb;
}

/// 2^floor(nR) codewords drawn independently and uniformly from a type class.
inline Codebook generate_type_class_codebook(const TypeClass& tc, double R, Rng& rng,
                                             std::uint64_t limit = default_explicit_limit)
{
    auto m = detail::checked_size(tc.blocklength(), R, limit);
    Codebook cb;
    cb.blocklength = tc.blocklength();
    cb.rate = R;
    cb.origin = CodebookOrigin::type_class;
    cb.words.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i)
        cb.words.push_back(tc.sample(rng));
    return cb;
}

inline Codebook explicit_codebook(std::vector<Sequence> words)
{
    if (words.empty())
        throw std::invalid_argument("explicit codebook must be nonempty");
    Codebook cb;
    cb.blocklength = words[0].size();
    for (const auto& w : words)
        if (w.size() != cb.blocklength || w.empty())
            throw std::invalid_argument("explicit codebook words must share a positive length");
    cb.rate = std::log2(static_cast<double>(words.size())) / static_cast<double>(cb.blocklength);
    cb.origin = CodebookOrigin::explicit_list;
    cb.words = std::move(words);
    return cb;
}

// ---------------------------------------------------------------------------
// Joint typicality

/// x is eps-typical for p and d(x, y) <= n D.
class JointTypicality {
public:
    JointTypicality(ExactDistribution p, double eps, DistortionSpec spec, double D)
        : p_(std::move(p)), eps_(eps), spec_(std::move(spec)), D_(D)
    {
        if (eps < 0)
            throw std::invalid_argument("typicality: negative epsilon");
        if (p_.size() != spec_.x_size())
            throw std::invalid_argument("typicality: codeword alphabet does not match the distortion");
    }

    const ExactDistribution& p() const { return p_; }
    double eps() const { return eps_; }
    const DistortionSpec& spec() const { return spec_; }
    double D() const { return D_; }

    const TypicalityWindow& window(std::size_t n) const
    {
        std::lock_guard lock(*mutex_);
        auto it = windows_.find(n);
        if (it == windows_.end())
            it = windows_.emplace(n, TypicalityWindow::make(p_, eps_, n)).first;
        return it->second;
    }

    bool typical(std::span<const Symbol> x) const
    {
        return window(x.size()).contains(letter_counts(x, p_.size()));
    }

    bool close(std::span<const Symbol> x, std::span<const Symbol> y) const
    {
        return within_distortion(spec_.block(x, y), x.size(), D_);
    }

    bool joint(std::span<const Symbol> x, std::span<const Symbol> y) const { return typical(x) && close(x, y); }

private:
    ExactDistribution p_;
    double eps_;
    DistortionSpec spec_;
    double D_;
    std::shared_ptr<std::mutex> mutex_ = std::make_shared<std::mutex>();
    mutable std::map<std::size_t, TypicalityWindow> windows_;
};

enum class DecodeStatus { decoded, none, ambiguous };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::none;
    std::size_t index = 0;
    std::size_t count = 0;   // number of jointly typical codewords

    bool ok() const { return status == DecodeStatus::decoded; }

    std::string reason() const
    {
        switch (status) {
        case DecodeStatus::decoded: return "decoded";
        case DecodeStatus::none: return "none";
        default: return "ambiguous(" + std::to_string(count) + ")";
        }
    }
};

/// Scans a fixed codebook; codeword typicality is computed once.
class TypicalityDecoder {
public:
    TypicalityDecoder(const Codebook& cb, const JointTypicality& test) : cb_(&cb), test_(&test)
    {
        typical_.reserve(cb.size());
        for (const auto& w : cb.words)
            typical_.push_back(test.typical(w));
    }

    bool typical(std::size_t i) const { return typical_[i]; }

    DecodeResult decode(std::span<const Symbol> y) const
    {
        DecodeResult r;
        for (std::size_t i = 0; i < cb_->size(); ++i) {
            if (!typical_[i] || !test_->close((*cb_)[i], y))
                continue;
            if (r.count++ == 0)
                r.index = i;
        }
        r.status = r.count == 0 ? DecodeStatus::none : r.count == 1 ? DecodeStatus::decoded : DecodeStatus::ambiguous;
        return r;
    }

    /// Number of jointly typical codewords other than `sent`.
    std::size_t impostors(std::span<const Symbol> y, std::size_t sent) const
    {
        std::size_t k = 0;
        for (std::size_t i = 0; i < cb_->size(); ++i)
            if (i != sent && typical_[i] && test_->close((*cb_)[i], y))
                ++k;
        return k;
    }

private:
    const Codebook* cb_;
    const JointTypicality* test_;
    std::vector<bool> typical_;
};

inline DecodeResult typicality_decode(std::span<const Symbol> y, const Codebook& cb, const ExactDistribution& p,
                                      double eps, const DistortionSpec& spec, double D)
{
    JointTypicality test(p, eps, spec, D);
    return TypicalityDecoder(cb, test).decode(y);
}

inline DecodeResult typicality_decode(std::span<const Symbol> y, const Codebook& cb, const Distribution& p,
                                      double eps, const DistortionSpec& spec, double D)
{
    return typicality_decode(y, cb, to_exact(p), eps, spec, D);
}

// ---------------------------------------------------------------------------
// Implicit codebooks

namespace detail {

// Draws the number of successes among `trials` independent events of
// probability exp(log_p); trials is given by its natural log. Pr[K = 0] is
// exact; K >= 1 is sampled from the (zero-truncated) binomial or Poisson law.
inline std::uint64_t sample_hits(double log_trials, double trials, double log_p, Rng& rng)
{
    if (trials <= 0 || log_p == -std::numeric_limits<double>::infinity())
        return 0;
    const double p = std::exp(log_p);
    double log_p0;
    if (p >= 1)
        log_p0 = -std::numeric_limits<double>::infinity();
    else if (p > 1e-300)
        log_p0 = trials * std::log1p(-p);
    else
        log_p0 = -std::exp(log_trials + log_p);
    if (uniform01(rng) < std::exp(log_p0))
        return 0;
    if (trials < 9.2e18 && trials * p < 1e15) {
        auto t = static_cast<std::uint64_t>(std::llround(trials));
        if (t < (std::uint64_t{1} << 62)) {
            std::binomial_distribution<std::uint64_t> bin(t, std::min(p, 1.0));
            for (int k = 0; k < 1000; ++k)
                if (auto v = bin(rng); v > 0)
                    return v;
        }
    }
    double lambda = std::exp(log_trials + log_p);
    if (lambda > 1e18)
        return std::numeric_limits<std::uint64_t>::max();
    if (lambda >= 30) {
        std::poisson_distribution<std::uint64_t> po(lambda);
        return std::max<std::uint64_t>(1, po(rng));
    }
    // Zero-truncated Poisson by inversion.
    double u = uniform01(rng) * -std::expm1(-lambda);
    double term = std::exp(-lambda) * lambda;
    std::uint64_t k = 1;
    double acc = term;
    while (acc < u && k < 1000) {
        ++k;
        term *= lambda / static_cast<double>(k);
        acc += term;
    }
    return k;
}

inline double log_count_minus_one(std::size_t bits)
{
    // ln(2^bits - 1)
    if (bits == 0)
        return -std::numeric_limits<double>::infinity();
    if (bits < 50)
        return std::log(std::ldexp(1.0, static_cast<int>(bits)) - 1.0);
    return static_cast<double>(bits) * std::log(2.0);
}

} // namespace detail

/// Impostor statistics of an implicit i.i.d. codebook under a typicality test.
class ImpostorModel {
public:
    ImpostorModel(const JointTypicality& test, std::size_t n, std::uint64_t budget = 50'000'000)
        : n_(n),
          engine_(std::make_shared<CompositionEngine>(test.p().to_float(), cost_of(test.spec()), test.window(n), budget)),
          D_(test.D()), y_size_(test.spec().y_size())
    {
    }

    /// ln Pr[an independent codeword is jointly typical with y].
    double log_probability(std::span<const Symbol> y) const
    {
        if (y.size() != n_)
            throw std::invalid_argument("impostor model: blocklength mismatch");
        return engine_->log_probability(y, y_size_, D_);
    }

    std::uint64_t sample(std::span<const Symbol> y, std::size_t bits, Rng& rng) const
    {
        double lt = detail::log_count_minus_one(bits);
        double t = std::exp(lt);
        return detail::sample_hits(lt, t, log_probability(y), rng);
    }

private:
    static Matrix<double> cost_of(const DistortionSpec& spec)
    {
        spec.require_additive("implicit codebooks");
        return spec.letter_matrix();
    }

    std::size_t n_;
    std::shared_ptr<CompositionEngine> engine_;
    double D_;
    std::size_t y_size_;
};

// ---------------------------------------------------------------------------
// Monte Carlo bookkeeping

struct McEstimate {
    std::uint64_t trials = 0;
    std::uint64_t events = 0;

    double rate() const { return trials ? static_cast<double>(events) / static_cast<double>(trials) : 0.0; }
    double sigma() const
    {
        if (!trials)
            return 0.0;
        double p = rate();
        return std::sqrt(p * (1 - p) / static_cast<double>(trials));
    }
    /// Half-width of the z-sigma interval.
    double radius(double z = 3.0) const { return z * sigma(); }

    void record(bool event)
    {
        ++trials;
        events += event ? 1 : 0;
    }

    McEstimate& operator+=(const McEstimate& o)
    {
        trials += o.trials;
        events += o.events;
        return *this;
    }
};

struct KernelEstimate {
    std::string kernel;
    McEstimate error;
    std::map<std::string, McEstimate> events;
};

struct ErrorProfile {
    std::string quantity;          // what `error` counts
    std::size_t blocklength = 0;
    double rate = 0;
    std::uint64_t trials = 0;
    std::uint64_t seed = 0;
    std::string mode;
    std::vector<KernelEstimate> per_kernel;
    std::size_t worst_kernel = 0;

    double worst() const { return per_kernel.empty() ? 0.0 : per_kernel[worst_kernel].error.rate(); }

    void finalize()
    {
        worst_kernel = 0;
        for (std::size_t k = 1; k < per_kernel.size(); ++k)
            if (per_kernel[k].error.rate() > per_kernel[worst_kernel].error.rate())
                worst_kernel = k;
    }
};

struct SimulationOptions {
    std::uint64_t trials = 1000;
    std::uint64_t batch_size = 100;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    CodebookMode mode = CodebookMode::automatic;
    std::uint64_t explicit_limit = 4096;
    std::uint64_t composition_budget = 50'000'000;
};

namespace detail {

enum : std::uint64_t {
    stream_codebook = 0xC0DEB00CULL,
    stream_message = 0x4D455353ULL,
    stream_source = 0x534F5552ULL,
    stream_source_codebook = 0x53434F44ULL,
    stream_kernel = 0x4B45524EULL,
};

inline bool use_explicit(CodebookMode mode, std::size_t bits, std::uint64_t limit)
{
    if (mode == CodebookMode::explicit_list)
        return true;
    if (mode == CodebookMode::implicit)
        return false;
    return bits < 63 && (std::uint64_t{1} << bits) <= limit;
}

inline std::uint64_t batch_count(const SimulationOptions& opt)
{
    if (opt.trials == 0)
        throw std::invalid_argument("simulation needs at least one trial");
    if (opt.batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    return (opt.trials + opt.batch_size - 1) / opt.batch_size;
}

inline std::uint64_t batch_trials(const SimulationOptions& opt, std::uint64_t b)
{
    return std::min(opt.batch_size, opt.trials - b * opt.batch_size);
}

inline void merge(std::vector<KernelEstimate>& into, const std::vector<KernelEstimate>& part)
{
    for (std::size_t k = 0; k < into.size(); ++k) {
        into[k].error += part[k].error;
        for (const auto& [name, e] : part[k].events)
            into[k].events[name] += e;
    }
}

} // namespace detail

/// Message error of an i.i.d. random code with joint-typicality decoding,
/// for every kernel of the compound channel (kernels map codewords X^n to Y^n).
inline ErrorProfile simulate_reliable_comm(const CompoundChannel& channels, const ExactDistribution& p_x, double eps,
                                           const DistortionSpec& spec, double D, double R, std::size_t n,
                                           const SimulationOptions& opt)
{
    if (n == 0)
        throw std::invalid_argument("blocklength must be positive");
    for (const auto& k : channels.kernels())
        if (k.input_size() != p_x.size() || k.output_size() != spec.y_size())
            throw std::invalid_argument("kernel '" + k.name() + "' does not map the codeword alphabet to the decoder alphabet");
    JointTypicality test(p_x, eps, spec, D);
    const std::size_t bits = message_bits(n, R);
    const bool expl = detail::use_explicit(opt.mode, bits, opt.explicit_limit);
    const auto batches = detail::batch_count(opt);
    const std::size_t nk = channels.size();
    std::optional<ImpostorModel> impostors;
    if (!expl)
        impostors.emplace(test, n, opt.composition_budget);
    auto pf = p_x.to_float();
    LetterSampler draw(pf);

    std::vector<std::vector<KernelEstimate>> parts(batches, std::vector<KernelEstimate>(nk));
    parallel_for(batches, opt.threads, [&](std::size_t b) {
        auto& part = parts[b];
        std::optional<Codebook> cb;
        std::optional<TypicalityDecoder> dec;
        if (expl) {
            Rng crng = make_rng(opt.seed, {detail::stream_codebook, b});
            cb = generate_iid_codebook(pf, n, R, crng, std::numeric_limits<std::uint64_t>::max());
            dec.emplace(*cb, test);
        }
        for (std::uint64_t t = 0; t < detail::batch_trials(opt, b); ++t) {
            Rng mrng = make_rng(opt.seed, {detail::stream_message, b, t});
            Sequence sent_word;
            std::size_t m = 0;
            if (expl) {
                m = std::uniform_int_distribution<std::size_t>(0, cb->size() - 1)(mrng);
                sent_word = (*cb)[m];
            } else {
                sent_word = draw.block(n, mrng);
            }
            for (std::size_t k = 0; k < nk; ++k) {
                Rng krng = make_rng(opt.seed, {detail::stream_kernel, k, b, t});
                auto y = channels[k].apply(sent_word, krng);
                bool sent_ok;
                std::uint64_t others;
                if (expl) {
                    sent_ok = dec->typical(m) && test.close(sent_word, y);
                    others = dec->impostors(y, m);
                } else {
                    sent_ok = test.joint(sent_word, y);
                    others = impostors->sample(y, bits, krng);
                }
                auto& e = part[k];
                bool correct = sent_ok && others == 0;
                e.error.record(!correct);
                e.events["E1"].record(!sent_ok);
                e.events["E2"].record(others > 0);
                e.events["none"].record(!sent_ok && others == 0);
                e.events["ambiguous"].record(sent_ok ? others >= 1 : others >= 2);
                e.events["wrong"].record(!sent_ok && others == 1);
            }
        }
    });

    ErrorProfile prof;
    prof.quantity = "message_error";
    prof.blocklength = n;
    prof.rate = R;
    prof.trials = opt.trials;
    prof.seed = opt.seed;
    prof.mode = expl ? "explicit" : "implicit";
    prof.per_kernel.resize(nk);
    for (std::size_t k = 0; k < nk; ++k)
        prof.per_kernel[k].kernel = channels[k].name();
    for (const auto& part : parts)
        detail::merge(prof.per_kernel, part);
    prof.finalize();
    return prof;
}

inline ErrorProfile simulate_reliable_comm(const CompoundChannel& channels, const Distribution& p_x, double eps,
                                           const DistortionSpec& spec, double D, double R, std::size_t n,
                                           const SimulationOptions& opt)
{
    return simulate_reliable_comm(channels, to_exact(p_x), eps, spec, D, R, n, opt);
}

/// Worst-case error across blocklengths, e.g. to inspect its decay.
struct ErrorDecay {
    std::vector<ErrorProfile> profiles;

    bool nonincreasing() const
    {
        for (std::size_t i = 1; i < profiles.size(); ++i)
            if (profiles[i].worst() > profiles[i - 1].worst())
                return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Error exponent of the impostor event

struct ExponentQuery {
    ExactDistribution p_x;
    DistortionSpec spec;
    double D = 0;
    double eps = 0;
    double R = 0;
    std::size_t n = 1;
};

struct ExponentResult {
    double exponent = 0;             // bits; +inf when the constraint set is empty
    bool feasible = true;
    std::vector<double> minimizer;   // optimal q_Z
    double log2_bound = 0;           // log2 of the union bound
    double bound = 0;                // (n+1)^{|X||Y|} 2^{floor(nR)} 2^{-nE}, unclipped
    std::uint64_t evaluations = 0;
};

namespace detail {

// D(q || p) + R_q(D), the inner problem solved for a fixed q_Z.
class ExponentObjective {
public:
    ExponentObjective(const Distribution& p, const DistortionSpec& spec, double D) : p_(p), spec_(spec), D_(D)
    {
        const auto& m = spec.letter_matrix();
        for (std::size_t x = 0; x < m.rows; ++x) {
            auto r = m.row(x);
            mins_.push_back(*std::min_element(r.begin(), r.end()));
        }
    }

    double dmin(std::span<const double> q) const
    {
        double acc = 0;
        for (std::size_t i = 0; i < q.size(); ++i)
            acc += q[i] * mins_[i];
        return acc;
    }

    const std::vector<double>& letter_mins() const { return mins_; }

    double operator()(std::span<const double> q) const
    {
        ++evals;
        if (dmin(q) > D_ + 1e-12)
            return std::numeric_limits<double>::infinity();
        double kl = 0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            if (q[i] <= 0)
                continue;
            if (p_[i] <= 0)
                return std::numeric_limits<double>::infinity();
            kl += q[i] * std::log2(q[i] / p_[i]);
        }
        std::vector<double> qq(q.begin(), q.end());
        double s = std::accumulate(qq.begin(), qq.end(), 0.0);
        for (auto& v : qq)
            v /= s;
        double rd;
        try {
            rd = blahut_arimoto(Distribution(qq), spec_, std::max(D_, dmin(qq))).rate;
        } catch (const std::domain_error&) {
            return std::numeric_limits<double>::infinity();
        }
        return std::max(kl, 0.0) + rd;
    }

    mutable std::uint64_t evals = 0;

private:
    const Distribution& p_;
    const DistortionSpec& spec_;
    double D_;
    std::vector<double> mins_;
};

template <class F>
double golden_min(F&& f, double a, double b, double tol = 1e-10)
{
    const double g = (std::sqrt(5.0) - 1) / 2;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
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
    double mid = 0.5 * (a + b);
    // The optimum may sit on an endpoint of the original interval.
    return mid;
}

// Interval of t such that q + t (e_i - e_j) stays in the box and meets dmin <= D.
inline std::pair<double, double> pair_range(const std::vector<double>& q, std::size_t i, std::size_t j,
                                            const std::vector<double>& lo, const std::vector<double>& hi,
                                            const std::vector<double>& mins, double slack)
{
    double tlo = std::max(lo[i] - q[i], q[j] - hi[j]);
    double thi = std::min(hi[i] - q[i], q[j] - lo[j]);
    double delta = mins[i] - mins[j];
    if (delta > 0)
        thi = std::min(thi, slack / delta);
    else if (delta < 0)
        tlo = std::max(tlo, slack / delta);
    return {tlo, thi};
}

} // namespace detail

/// E = min over q_ZY with q_Z in p_X +- eps and E d <= D of D(q_ZY || p_X x q_Y),
/// reduced to min over q_Z of D(q_Z || p_X) + R_{q_Z}(D), a convex problem.
inline ExponentResult error_exponent_bound(const ExponentQuery& query)
{
    const auto& spec = query.spec;
    spec.require_additive("error_exponent_bound");
    if (query.eps < 0 || query.D < 0)
        throw std::invalid_argument("error_exponent_bound: eps and D must be nonnegative");
    if (query.p_x.size() != spec.x_size())
        throw std::invalid_argument("error_exponent_bound: source alphabet does not match the distortion");
    auto p = query.p_x.to_float();
    const std::size_t k = p.size();
    detail::ExponentObjective F(p, spec, query.D);
    const auto& mins = F.letter_mins();

    std::vector<double> lo(k), hi(k);
    for (std::size_t i = 0; i < k; ++i) {
        lo[i] = std::max(0.0, p[i] - query.eps);
        hi[i] = std::min(1.0, p[i] + query.eps);
    }
    double slo = std::accumulate(lo.begin(), lo.end(), 0.0);
    double shi = std::accumulate(hi.begin(), hi.end(), 0.0);

    ExponentResult res;
    auto finish = [&](double E, std::vector<double> q) {
        res.exponent = E;
        res.minimizer = std::move(q);
        res.feasible = std::isfinite(E);
        const double n = static_cast<double>(query.n);
        res.log2_bound = static_cast<double>(spec.x_size() * spec.y_size()) * std::log2(n + 1) +
                         static_cast<double>(message_bits(query.n, query.R)) - n * E;
        res.bound = std::exp2(res.log2_bound);
        res.evaluations = F.evals;
        return res;
    };
    const double inf = std::numeric_limits<double>::infinity();
    if (slo > 1 + 1e-12 || shi < 1 - 1e-12)
        return finish(inf, {});

    // Feasible start: p itself, else the box point with the least D_min.
    std::vector<double> q(p.masses());
    if (F.dmin(q) > query.D + 1e-12) {
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return mins[a] < mins[b]; });
        q = lo;
        double left = 1 - slo;
        for (auto i : order) {
            double add = std::min(left, hi[i] - lo[i]);
            q[i] += add;
            left -= add;
        }
        if (F.dmin(q) > query.D + 1e-12)
            return finish(inf, {});
    }

    if (k == 2) {
        // One free coordinate: t = q_Z(0).
        double a = lo[0], b = hi[0];
        a = std::max(a, 1 - hi[1]);
        b = std::min(b, 1 - lo[1]);
        double delta = mins[0] - mins[1];
        double slack = query.D - mins[1];
        if (delta > 0)
            b = std::min(b, slack / delta);
        else if (delta < 0)
            a = std::max(a, slack / delta);
        a = std::clamp(a, 0.0, 1.0);
        b = std::clamp(b, 0.0, 1.0);
        auto f = [&](double t) {
            double v[2] = {t, 1 - t};
            return F(v);
        };
        if (b - a < 1e-12) {
            double t = 0.5 * (a + b);
            return finish(f(t), {t, 1 - t});
        }
        double t = detail::golden_min(f, a, b);
        double best = f(t);
        for (double e : {a, b})
            if (double v = f(e); v < best) {
                best = v;
                t = e;
            }
        return finish(best, {t, 1 - t});
    }

    double cur = F(q);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double before = cur;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) {
                auto [tlo, thi] = detail::pair_range(q, i, j, lo, hi, mins, query.D - F.dmin(q));
                if (thi - tlo < 1e-12)
                    continue;
                auto g = [&](double t) {
                    auto c = q;
                    c[i] += t;
                    c[j] -= t;
                    c[i] = std::max(c[i], 0.0);
                    c[j] = std::max(c[j], 0.0);
                    return F(c);
                };
                double t = detail::golden_min(g, tlo, thi);
                double v = g(t);
                for (double e : {tlo, thi})
                    if (double w = g(e); w < v) {
                        v = w;
                        t = e;
                    }
                if (v < cur) {
                    cur = v;
                    q[i] = std::max(q[i] + t, 0.0);
                    q[j] = std::max(q[j] - t, 0.0);
                }
            }
        if (before - cur < 1e-11)
            break;
    }
    return finish(cur, q);
}

// ---------------------------------------------------------------------------
// KL chain

template <class T>
struct KlChainReport {
    bits_t<T> total;      // D(q_ZY || p_X x q_Y)
    bits_t<T> marginal;   // D(q_Z || p_X)
    bits_t<T> coupling;   // D(q_ZY || q_Z x q_Y)

    bool identity_holds(double tol = 0.0) const
    {
        if constexpr (std::is_same_v<T, double>) {
            if (std::isinf(total) || std::isinf(marginal) || std::isinf(coupling))
                return std::isinf(total) == (std::isinf(marginal) || std::isinf(coupling));
            return std::abs(total - (marginal + coupling)) <= tol;
        } else {
            return total == marginal + coupling;
        }
    }
};

template <class T>
KlChainReport<T> kl_chain_report(const BasicJointDistribution<T>& q_zy, const BasicDistribution<T>& p_x)
{
    if (q_zy.row_alphabet().size() != p_x.size())
        throw std::invalid_argument("kl_chain_report: joint rows do not match the source alphabet");
    BasicDistribution<T> p(q_zy.row_alphabet(), p_x.masses());
    auto qz = q_zy.row_marginal();
    auto qy = q_zy.col_marginal();
    KlChainReport<T> r{kl_divergence(q_zy, BasicJointDistribution<T>::product(p, qy)), kl_divergence(qz, p),
                       kl_divergence(q_zy, BasicJointDistribution<T>::product(qz, qy))};
    return r;
}

// ---------------------------------------------------------------------------
// Separation pipeline

enum class SourceCodeKind { identity, random_covering };
enum class ChannelCodeKind { identity, random_iid };

struct SourceCodeConfig {
    SourceCodeKind kind = SourceCodeKind::identity;
    double rate = 0;
    std::optional<Distribution> reproduction;   // defaults to the optimal output law at D
    CodebookMode mode = CodebookMode::automatic;
};

struct ChannelCodeConfig {
    ChannelCodeKind kind = ChannelCodeKind::identity;
    double rate = 0;
    std::optional<ExactDistribution> input;
    double eps = 0;
    std::optional<DistortionSpec> spec;
    double D = 0;
    CodebookMode mode = CodebookMode::automatic;
};

struct SeparationConfig {
    ExactDistribution p_x;
    DistortionSpec spec;
    double D = 0;
    SourceCodeConfig source;
    ChannelCodeConfig channel;
    std::size_t n = 1;
    SimulationOptions sim;
};

namespace detail {

// Base-q value of a block, or nullopt if it is at least `limit`.
inline std::optional<std::uint64_t> block_to_index(std::span<const Symbol> s, std::size_t q, std::uint64_t limit)
{
    std::uint64_t v = 0;
    for (auto x : s) {
        if (v > (limit - x) / q)
            return std::nullopt;
        v = v * q + x;
        if (v >= limit)
            return std::nullopt;
    }
    return v;
}

} // namespace detail

/// One source code followed by one channel code, for a channel with the given
/// input and output alphabet sizes. Trials go through encode_source, then
/// channel_input per channel realization, then finish on the observed block.
/// Decoding failures ('e') map to message index 0.
class SeparationChain {
public:
    struct Batch {
        std::optional<Codebook> source_codebook;
        std::optional<Codebook> channel_codebook;
        std::optional<TypicalityDecoder> channel_decoder;
    };

    struct SourceState {
        Sequence x;
        std::uint64_t J = 0;      // message index
        bool covered = true;
        double pi_other = 0;      // implicit covering: chance that another index also covers
    };

    struct Outcome {
        bool excess = false;
        bool channel_error = false;
    };

    SeparationChain(const SeparationConfig& cfg, std::size_t channel_inputs, std::size_t channel_outputs)
        : cfg_(cfg), n_(cfg.n), ins_(channel_inputs), outs_(channel_outputs), pf_(cfg.p_x.to_float()), draw_(pf_)
    {
        if (n_ == 0)
            throw std::invalid_argument("blocklength must be positive");
        const std::size_t xs = cfg.p_x.size();
        if (cfg.spec.x_size() != xs)
            throw std::invalid_argument("separation: distortion does not match the source alphabet");
        const auto& opt = cfg.sim;

        src_identity_ = cfg.source.kind == SourceCodeKind::identity;
        if (src_identity_) {
            if (cfg.spec.y_size() != xs)
                throw std::invalid_argument("identity source code needs matching source and reproduction alphabets");
            auto size = sequence_space_size(xs, n_);
            Ms_ = size && *size < (std::uint64_t{1} << 62) ? *size : 0;
        } else {
            cfg.spec.require_additive("random covering source code");
            src_bits_ = message_bits(n_, cfg.source.rate);
            if (src_bits_ >= 62)
                throw std::invalid_argument("source codebook of 2^" + std::to_string(src_bits_) +
                                            " words cannot be indexed");
            Ms_ = std::uint64_t{1} << src_bits_;
            src_explicit_ = detail::use_explicit(cfg.source.mode, src_bits_, opt.explicit_limit);
            repro_ = cfg.source.reproduction ? *cfg.source.reproduction
                                             : Distribution(blahut_arimoto(pf_, cfg.spec, std::max(cfg.D, 0.0)).output_marginal);
            if (repro_->size() != cfg.spec.y_size())
                throw std::invalid_argument("reproduction law does not match the distortion");
            if (!src_explicit_) {
                // Covering uses the transposed cost: generated letters are reproductions.
                const auto& d = cfg.spec.letter_matrix();
                Matrix<double> cost(d.cols, d.rows);
                for (std::size_t x = 0; x < d.rows; ++x)
                    for (std::size_t y = 0; y < d.cols; ++y)
                        cost(y, x) = d(x, y);
                cover_engine_ = std::make_shared<CompositionEngine>(*repro_, std::move(cost), std::nullopt,
                                                                    opt.composition_budget);
            }
        }

        ch_identity_ = cfg.channel.kind == ChannelCodeKind::identity;
        if (ch_identity_) {
            if (ins_ != outs_)
                throw std::invalid_argument("identity channel code needs matching channel input and output alphabets");
            if (src_identity_ && ins_ != xs)
                throw std::invalid_argument("identity source and channel codes need the channel to carry source letters");
            if (!src_identity_) {
                auto cap = sequence_space_size(ins_, n_);
                if (cap && *cap < Ms_)
                    throw std::invalid_argument("identity channel code cannot carry " + std::to_string(Ms_) +
                                                " messages");
            }
        } else {
            if (!cfg.channel.input || !cfg.channel.spec)
                throw std::invalid_argument("random channel code needs an input law and a decoding distortion");
            if (cfg.channel.input->size() != ins_ || cfg.channel.spec->x_size() != ins_ ||
                cfg.channel.spec->y_size() != outs_)
                throw std::invalid_argument("random channel code alphabets do not match the channel");
            if (Ms_ == 0)
                throw std::invalid_argument("identity source code is too large for a random channel code");
            ch_bits_ = message_bits(n_, cfg.channel.rate);
            if (ch_bits_ < 63 && (std::uint64_t{1} << ch_bits_) < Ms_)
                throw std::invalid_argument("channel code rate is below the source code rate");
            ch_explicit_ = detail::use_explicit(cfg.channel.mode, ch_bits_, opt.explicit_limit);
            ch_law_ = cfg.channel.input->to_float();
            ch_test_.emplace(*cfg.channel.input, cfg.channel.eps, *cfg.channel.spec, cfg.channel.D);
            if (!ch_explicit_)
                ch_impostors_.emplace(*ch_test_, n_, opt.composition_budget);
        }
    }

    std::string mode() const
    {
        return std::string("source:") + (src_identity_ ? "identity" : src_explicit_ ? "explicit" : "implicit") +
               ",channel:" + (ch_identity_ ? "identity" : ch_explicit_ ? "explicit" : "implicit");
    }

    double source_rate() const
    {
        return src_identity_ ? std::log2(static_cast<double>(cfg_.p_x.size())) : cfg_.source.rate;
    }

    /// Codebooks shared by every trial of a batch; `salt` separates chains.
    Batch prepare_batch(std::uint64_t seed, std::uint64_t salt, std::uint64_t batch) const
    {
        Batch b;
        if (!src_identity_ && src_explicit_) {
            Rng r = make_rng(seed, {detail::stream_source_codebook, salt, batch});
            b.source_codebook =
                generate_iid_codebook(*repro_, n_, cfg_.source.rate, r, std::numeric_limits<std::uint64_t>::max());
        }
        if (!ch_identity_ && ch_explicit_) {
            Rng r = make_rng(seed, {detail::stream_codebook, salt, batch});
            b.channel_codebook =
                generate_iid_codebook(ch_law_, n_, cfg_.channel.rate, r, std::numeric_limits<std::uint64_t>::max());
            b.channel_decoder.emplace(*b.channel_codebook, *ch_test_);
        }
        return b;
    }

    SourceState encode_source(const Batch& b, Rng& rng) const
    {
        SourceState s;
        s.x = draw_.block(n_, rng);
        const std::size_t xs = cfg_.p_x.size();
        if (src_identity_) {
            if (Ms_)
                s.J = sequence_index(s.x, xs);
        } else if (src_explicit_) {
            std::vector<std::uint64_t> covers;
            const auto& cb = *b.source_codebook;
            for (std::uint64_t i = 0; i < cb.size(); ++i)
                if (within_distortion(cfg_.spec.block(s.x, cb[i]), n_, cfg_.D))
                    covers.push_back(i);
            s.covered = !covers.empty();
            if (s.covered)
                s.J = covers[std::uniform_int_distribution<std::size_t>(0, covers.size() - 1)(rng)];
        } else {
            double p = std::exp(cover_engine_->log_probability(s.x, xs, cfg_.D));
            double M = static_cast<double>(Ms_);
            double none = p >= 1 ? 0.0 : std::exp(M * std::log1p(-p));
            s.covered = uniform01(rng) >= none;
            if (s.covered) {
                s.J = std::uniform_int_distribution<std::uint64_t>(0, Ms_ - 1)(rng);
                if (Ms_ > 1) {
                    // E[covering count | at least one] = M p / (1 - (1-p)^M); exchangeability
                    // spreads the surplus evenly over the other M - 1 indices.
                    if (M * p < 1e-8) {
                        s.pi_other = p;
                    } else {
                        long double mean = static_cast<long double>(M) * p / (1.0L - static_cast<long double>(none));
                        s.pi_other = static_cast<double>((mean - 1.0L) / (static_cast<long double>(M) - 1.0L));
                    }
                    s.pi_other = std::clamp(s.pi_other, 0.0, 1.0);
                }
            }
        }
        return s;
    }

    /// The block fed to the channel. Implicit channel codebooks draw a fresh
    /// codeword, which is how a fresh i.i.d. codebook looks from the channel.
    Sequence channel_input(const Batch& b, const SourceState& s, Rng& rng) const
    {
        if (ch_identity_)
            return src_identity_ ? s.x : sequence_at(s.J, n_, ins_);
        if (ch_explicit_)
            return (*b.channel_codebook)[s.J];
        return LetterSampler(ch_law_).block(n_, rng);
    }

    Outcome finish(const Batch& b, const SourceState& s, const Sequence& sent, const Sequence& observed, Rng& rng) const
    {
        Outcome out;
        // Delivered index; `other` marks a wrong index that is not materialized.
        std::uint64_t idx = 0;
        bool other = false;
        Sequence direct;
        if (ch_identity_) {
            if (src_identity_) {
                direct = observed;
            } else {
                auto v = detail::block_to_index(observed, ins_, Ms_);
                idx = v ? *v : 0;
                out.channel_error = !v || *v != s.J;
            }
        } else if (ch_explicit_) {
            auto r = b.channel_decoder->decode(observed);
            idx = r.ok() && r.index < Ms_ ? r.index : 0;
            out.channel_error = !r.ok() || r.index != s.J;
        } else {
            bool sent_ok = ch_test_->joint(sent, observed);
            auto others = ch_impostors_->sample(observed, ch_bits_, rng);
            if (sent_ok && others == 0) {
                idx = s.J;
            } else if (!sent_ok && others == 1) {
                // The unique typical codeword carries a uniformly chosen other index.
                out.channel_error = true;
                double Mc = std::ldexp(1.0, static_cast<int>(ch_bits_));
                double in_source = (static_cast<double>(Ms_) - 1) / (Mc - 1);
                if (uniform01(rng) < in_source) {
                    if (src_explicit_ || src_identity_) {
                        auto o = std::uniform_int_distribution<std::uint64_t>(0, Ms_ - 2)(rng);
                        idx = o >= s.J ? o + 1 : o;
                    } else {
                        other = true;
                    }
                }
            } else {
                out.channel_error = true;
            }
        }

        const std::size_t xs = cfg_.p_x.size();
        if (src_identity_) {
            Sequence yhat = ch_identity_ ? direct : sequence_at(idx, n_, xs);
            out.excess = !within_distortion(cfg_.spec.block(s.x, yhat), n_, cfg_.D);
        } else if (src_explicit_) {
            out.excess = !within_distortion(cfg_.spec.block(s.x, (*b.source_codebook)[idx]), n_, cfg_.D);
        } else if (!s.covered) {
            out.excess = true;
        } else if (!other && idx == s.J) {
            out.excess = false;
        } else {
            out.excess = uniform01(rng) >= s.pi_other;
        }
        return out;
    }

private:
    SeparationConfig cfg_;
    std::size_t n_, ins_, outs_;
    Distribution pf_;
    LetterSampler draw_;
    bool src_identity_ = true, src_explicit_ = false;
    bool ch_identity_ = true, ch_explicit_ = false;
    std::size_t src_bits_ = 0, ch_bits_ = 0;
    std::uint64_t Ms_ = 0;   // 0: too many messages to index (identity source only)
    std::optional<Distribution> repro_;
    std::shared_ptr<CompositionEngine> cover_engine_;
    Distribution ch_law_ = Distribution({1.0});
    std::optional<JointTypicality> ch_test_;
    std::optional<ImpostorModel> ch_impostors_;
};

/// Pr[(1/n) d(X^n, Y^n) > D] for source code -> channel code -> kernel -> decoders.
inline ErrorProfile separation_pipeline(const SeparationConfig& cfg, const CompoundChannel& channels)
{
    SeparationChain chain(cfg, channels[0].input_size(), channels[0].output_size());
    const auto& opt = cfg.sim;
    const auto batches = detail::batch_count(opt);
    const std::size_t nk = channels.size();
    std::vector<std::vector<KernelEstimate>> parts(batches, std::vector<KernelEstimate>(nk));
    parallel_for(batches, opt.threads, [&](std::size_t b) {
        auto batch = chain.prepare_batch(opt.seed, 0, b);
        for (std::uint64_t t = 0; t < detail::batch_trials(opt, b); ++t) {
            Rng srng = make_rng(opt.seed, {detail::stream_source, b, t});
            auto s = chain.encode_source(batch, srng);
            for (std::size_t k = 0; k < nk; ++k) {
                Rng krng = make_rng(opt.seed, {detail::stream_kernel, k, b, t});
                auto sent = chain.channel_input(batch, s, krng);
                auto y = channels[k].apply(sent, krng);
                auto o = chain.finish(batch, s, sent, y, krng);
                auto& e = parts[b][k];
                e.error.record(o.excess);
                e.events["cover_failure"].record(!s.covered);
                e.events["channel_error"].record(o.channel_error);
            }
        }
    });

    ErrorProfile prof;
    prof.quantity = "excess_distortion";
    prof.blocklength = cfg.n;
    prof.rate = chain.source_rate();
    prof.trials = opt.trials;
    prof.seed = opt.seed;
    prof.mode = chain.mode();
    prof.per_kernel.resize(nk);
    for (std::size_t k = 0; k < nk; ++k)
        prof.per_kernel[k].kernel = channels[k].name();
    for (const auto& part : parts)
        detail::merge(prof.per_kernel, part);
    prof.finalize();
    return prof;
}

} // namespace sepkit
