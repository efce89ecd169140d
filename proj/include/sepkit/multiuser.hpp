#pragma once

// N-user media with unicast demands. Each user feeds one block into the medium
// and observes one block from it; per-user modems map local sources to the
// medium input and the local observation to reproductions.
//
// layered_replacement swaps the source of one pair for an i.i.d. random
// codebook carrying a uniform message and compares the law of everything the
// other pairs see, before and after. In exact mode the codeword law is the
// ensemble average over codebooks, which is the product of the codebook letter
// law; with a matched letter law nothing observable elsewhere changes.

#include "channels.hpp"
#include "coding.hpp"
#include "distortion.hpp"
#include "probability.hpp"
#include "rng.hpp"

#include <functional>
#include <map>

namespace sepkit {

/// Joint blocks, one per user.
using Blocks = std::vector<Sequence>;
using JointBlockLaw = std::map<Blocks, Rational>;

class MediumKernel {
public:
    using Sampler = std::function<Blocks(const Blocks&, Rng&)>;
    using ExactEvaluator = std::function<JointBlockLaw(const Blocks&)>;

    MediumKernel(std::string name, std::vector<std::size_t> in, std::vector<std::size_t> out, Sampler s,
                 ExactEvaluator e = {})
        : name_(std::move(name)), in_(std::move(in)), out_(std::move(out)), sample_(std::move(s)), exact_(std::move(e))
    {
        if (in_.size() != out_.size())
            throw std::invalid_argument("medium needs one input and one output alphabet per user");
    }

    /// Memoryless medium: per position, joint input letters (user 0 most
    /// significant) map to a law over joint output letters.
    static MediumKernel memoryless(std::string name, std::vector<std::size_t> in, std::vector<std::size_t> out,
                                   ExactChannelMatrix letter)
    {
        auto radix = [](const std::vector<std::size_t>& sizes) {
            std::size_t t = 1;
            for (auto s : sizes)
                t *= s;
            return t;
        };
        if (letter.inputs() != radix(in) || letter.outputs() != radix(out))
            throw std::invalid_argument("medium letter matrix does not match the user alphabets");
        auto fl = std::make_shared<std::vector<std::vector<double>>>();
        const auto lf = letter.to_float();
        for (std::size_t r = 0; r < letter.inputs(); ++r)
            fl->push_back(detail::cumulative(lf.matrix().row(r)));
        auto shared = std::make_shared<ExactChannelMatrix>(std::move(letter));
        auto in_copy = in, out_copy = out;
        auto encode = [in_copy](const Blocks& b, std::size_t pos) {
            std::size_t v = 0;
            for (std::size_t u = 0; u < in_copy.size(); ++u)
                v = v * in_copy[u] + b[u][pos];
            return v;
        };
        auto decode = [out_copy](std::size_t v, Blocks& b, std::size_t pos) {
            for (std::size_t u = out_copy.size(); u-- > 0;) {
                b[u][pos] = static_cast<Symbol>(v % out_copy[u]);
                v /= out_copy[u];
            }
        };
        auto check = [in_copy](const Blocks& b) {
            if (b.size() != in_copy.size())
                throw std::invalid_argument("medium: one input block per user is required");
            for (std::size_t u = 0; u < b.size(); ++u) {
                if (b[u].size() != b[0].size() || b[u].empty())
                    throw std::invalid_argument("medium: input blocks must share a positive length");
                for (auto s : b[u])
                    if (s >= in_copy[u])
                        throw std::invalid_argument("medium: input symbol outside the user alphabet");
            }
        };
        Sampler sampler = [fl, encode, decode, check, out_copy](const Blocks& b, Rng& rng) {
            check(b);
            const std::size_t n = b[0].size();
            Blocks o(out_copy.size(), Sequence(n));
            for (std::size_t i = 0; i < n; ++i)
                decode(detail::sample_index((*fl)[encode(b, i)], rng), o, i);
            return o;
        };
        ExactEvaluator exact = [shared, encode, decode, check, out_copy](const Blocks& b) {
            check(b);
            const std::size_t n = b[0].size();
            const std::size_t letters = shared->outputs();
            JointBlockLaw law{{Blocks(out_copy.size(), Sequence(n)), Rational(1)}};
            for (std::size_t i = 0; i < n; ++i) {
                if (law.size() * letters > 1'000'000)
                    throw BudgetExceeded("medium output law is too large to enumerate");
                JointBlockLaw next;
                const std::size_t row = encode(b, i);
                for (const auto& [blocks, p] : law)
                    for (std::size_t v = 0; v < letters; ++v) {
                        const auto& w = (*shared)(row, v);
                        if (w == 0)
                            continue;
                        Blocks nb = blocks;
                        decode(v, nb, i);
                        next[std::move(nb)] += p * w;
                    }
                law = std::move(next);
            }
            return law;
        };
        return MediumKernel(std::move(name), std::move(in), std::move(out), std::move(sampler), std::move(exact));
    }

    const std::string& name() const { return name_; }
    std::size_t users() const { return in_.size(); }
    std::size_t input_size(std::size_t u) const { return in_[u]; }
    std::size_t output_size(std::size_t u) const { return out_[u]; }
    bool has_exact() const { return static_cast<bool>(exact_); }

    Blocks apply(const Blocks& in, Rng& rng) const { return sample_(in, rng); }

    JointBlockLaw exact_law(const Blocks& in) const
    {
        if (!exact_)
            throw std::logic_error("medium '" + name_ + "' has no exact law");
        return exact_(in);
    }

private:
    std::string name_;
    std::vector<std::size_t> in_, out_;
    Sampler sample_;
    ExactEvaluator exact_;
};

/// Two users over separate links: user 1 hears user 0 through `forward`, and
/// user 0 hears user 1 through `backward`.
inline MediumKernel two_way_links(const ExactChannelMatrix& forward, const ExactChannelMatrix& backward,
                                  std::string name = "links")
{
    const std::size_t i0 = forward.inputs(), i1 = backward.inputs();
    const std::size_t o0 = backward.outputs(), o1 = forward.outputs();
    Matrix<Rational> m(i0 * i1, o0 * o1);
    for (std::size_t a = 0; a < i0; ++a)
        for (std::size_t b = 0; b < i1; ++b)
            for (std::size_t y0 = 0; y0 < o0; ++y0)
                for (std::size_t y1 = 0; y1 < o1; ++y1)
                    m(a * i1 + b, y0 * o1 + y1) = backward(b, y0) * forward(a, y1);
    return MediumKernel::memoryless(std::move(name), {i0, i1}, {o0, o1}, ExactChannelMatrix(std::move(m)));
}

/// Binary two-user medium with interference: user 1 observes user 0's input
/// through BSC(p); user 0 observes the XOR of both inputs through BSC(p).
inline MediumKernel interfering_two_user(const Rational& p)
{
    auto k = bsc_matrix(p);
    Matrix<Rational> m(4, 4);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t y0 = 0; y0 < 2; ++y0)
                for (std::size_t y1 = 0; y1 < 2; ++y1)
                    m(a * 2 + b, y0 * 2 + y1) = k(a ^ b, y0) * k(a, y1);
    return MediumKernel::memoryless("interfering(" + to_string(p) + ")", {2, 2}, {2, 2}, ExactChannelMatrix(std::move(m)));
}

struct Demand {
    std::size_t from = 0;
    std::size_t to = 0;
    ExactDistribution p_x;
    DistortionSpec spec;
    double D = 0;

    std::string label() const { return std::to_string(from) + "->" + std::to_string(to); }
};

/// Pairs are independent: each source is drawn from its own stream.
struct UnicastDemandSet {
    std::size_t users = 0;
    std::vector<Demand> pairs;

    std::vector<std::size_t> outgoing(std::size_t u) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < pairs.size(); ++i)
            if (pairs[i].from == u)
                out.push_back(i);
        return out;
    }

    std::vector<std::size_t> incoming(std::size_t u) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < pairs.size(); ++i)
            if (pairs[i].to == u)
                out.push_back(i);
        return out;
    }

    void validate() const
    {
        for (const auto& d : pairs) {
            if (d.from >= users || d.to >= users || d.from == d.to)
                throw std::invalid_argument("demand " + d.label() + " does not name two distinct users");
            if (d.p_x.size() != d.spec.x_size())
                throw std::invalid_argument("demand " + d.label() + ": source and distortion alphabets differ");
        }
    }
};

/// Per-user block maps. The encoder sees the user's outgoing sources (in
/// demand order); the decoder sees the observation and the same local sources
/// and returns one reproduction per incoming pair.
struct Modem {
    std::function<Sequence(const std::vector<Sequence>& outgoing, std::size_t n, std::uint64_t seed)> encode;
    std::function<std::vector<Sequence>(const Sequence& observed, const std::vector<Sequence>& outgoing,
                                        std::uint64_t seed)>
        decode;
};

struct ModemStack {
    std::vector<Modem> modems;
    std::uint64_t seed = 0;

    /// Sends the single outgoing source verbatim (or zeros when there is none)
    /// and reproduces the single incoming pair as the observation itself.
    static ModemStack identity(const UnicastDemandSet& demands, std::uint64_t seed = 0)
    {
        ModemStack st;
        st.seed = seed;
        for (std::size_t u = 0; u < demands.users; ++u) {
            auto out = demands.outgoing(u);
            auto in = demands.incoming(u);
            if (out.size() > 1 || in.size() > 1)
                throw std::invalid_argument("identity modems support at most one pair per direction per user");
            Modem m;
            m.encode = [](const std::vector<Sequence>& src, std::size_t n, std::uint64_t) {
                return src.empty() ? Sequence(n, 0) : src[0];
            };
            std::size_t incoming = in.size();
            m.decode = [incoming](const Sequence& obs, const std::vector<Sequence>&, std::uint64_t) {
                return std::vector<Sequence>(incoming, obs);
            };
            st.modems.push_back(std::move(m));
        }
        return st;
    }
};

struct PairEstimate {
    std::string pair;
    std::vector<McEstimate> per_medium;
    std::size_t worst_medium = 0;

    double worst() const { return per_medium.empty() ? 0.0 : per_medium[worst_medium].rate(); }
};

struct UnicastProfile {
    std::size_t blocklength = 0;
    std::uint64_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> media;
    std::vector<PairEstimate> pairs;
    std::vector<McEstimate> all_pairs_excess;   // per medium: every pair in excess at once
    std::vector<std::string> warnings;

    void finalize()
    {
        for (auto& p : pairs) {
            p.worst_medium = 0;
            for (std::size_t m = 1; m < p.per_medium.size(); ++m)
                if (p.per_medium[m].rate() > p.per_medium[p.worst_medium].rate())
                    p.worst_medium = m;
        }
    }
};

namespace detail {

enum : std::uint64_t {
    stream_pair_source = 0x50414952ULL,
    stream_medium = 0x4D454449ULL,
    stream_pair_decode = 0x44454344ULL,
    stream_modem = 0x4D4F4445ULL,
};

inline void check_media(const std::vector<MediumKernel>& media, const UnicastDemandSet& demands)
{
    demands.validate();
    if (media.empty())
        throw std::invalid_argument("medium set must be nonempty");
    for (const auto& m : media)
        if (m.users() != demands.users)
            throw std::invalid_argument("medium '" + m.name() + "' has the wrong number of users");
}

inline UnicastProfile make_profile(const std::vector<MediumKernel>& media, const UnicastDemandSet& demands,
                                   std::size_t n, const SimulationOptions& opt)
{
    UnicastProfile prof;
    prof.blocklength = n;
    prof.trials = opt.trials;
    prof.seed = opt.seed;
    for (const auto& m : media)
        prof.media.push_back(m.name());
    for (const auto& d : demands.pairs) {
        prof.pairs.push_back({d.label(), std::vector<McEstimate>(media.size()), 0});
        if (d.D < 0)
            prof.warnings.push_back("pair " + d.label() + " has D < 0: excess is certain (degenerate configuration)");
    }
    prof.all_pairs_excess.resize(media.size());
    return prof;
}

inline void merge_unicast(UnicastProfile& into, const UnicastProfile& part)
{
    for (std::size_t p = 0; p < into.pairs.size(); ++p)
        for (std::size_t m = 0; m < into.media.size(); ++m)
            into.pairs[p].per_medium[m] += part.pairs[p].per_medium[m];
    for (std::size_t m = 0; m < into.media.size(); ++m)
        into.all_pairs_excess[m] += part.all_pairs_excess[m];
}

inline std::uint64_t modem_seed(std::uint64_t shared, std::size_t user)
{
    return derive_seed(shared, {stream_modem, user});
}

} // namespace detail

/// Per-pair excess-distortion frequencies for each medium of the set.
inline UnicastProfile simulate_unicast(const std::vector<MediumKernel>& media, const UnicastDemandSet& demands,
                                       const ModemStack& modems, std::size_t n, const SimulationOptions& opt)
{
    if (demands.pairs.empty())
        return detail::make_profile(media, demands, n, opt);
    detail::check_media(media, demands);
    if (modems.modems.size() != demands.users)
        throw std::invalid_argument("one modem per user is required");
    if (n == 0)
        throw std::invalid_argument("blocklength must be positive");
    const auto batches = detail::batch_count(opt);
    std::vector<LetterSampler> draws;
    for (const auto& d : demands.pairs)
        draws.emplace_back(d.p_x.to_float());
    std::vector<UnicastProfile> parts(batches, detail::make_profile(media, demands, n, opt));

    parallel_for(batches, opt.threads, [&](std::size_t b) {
        auto& part = parts[b];
        for (std::uint64_t t = 0; t < detail::batch_trials(opt, b); ++t) {
            std::vector<Sequence> src;
            for (std::size_t p = 0; p < demands.pairs.size(); ++p) {
                Rng r = make_rng(opt.seed, {detail::stream_pair_source, p, b, t});
                src.push_back(draws[p].block(n, r));
            }
            Blocks inputs;
            std::vector<std::vector<Sequence>> local(demands.users);
            for (std::size_t u = 0; u < demands.users; ++u) {
                for (auto p : demands.outgoing(u))
                    local[u].push_back(src[p]);
                inputs.push_back(modems.modems[u].encode(local[u], n, detail::modem_seed(modems.seed, u)));
            }
            for (std::size_t m = 0; m < media.size(); ++m) {
                Rng mr = make_rng(opt.seed, {detail::stream_medium, m, b, t});
                auto obs = media[m].apply(inputs, mr);
                bool all = true;
                for (std::size_t u = 0; u < demands.users; ++u) {
                    auto in = demands.incoming(u);
                    if (in.empty())
                        continue;
                    auto rep = modems.modems[u].decode(obs[u], local[u], detail::modem_seed(modems.seed, u));
                    if (rep.size() != in.size())
                        throw std::logic_error("modem returned the wrong number of reproductions");
                    for (std::size_t k = 0; k < in.size(); ++k) {
                        const auto& d = demands.pairs[in[k]];
                        bool excess = !within_distortion(d.spec.block(src[in[k]], rep[k]), n, d.D);
                        part.pairs[in[k]].per_medium[m].record(excess);
                        all = all && excess;
                    }
                }
                part.all_pairs_excess[m].record(all);
            }
        }
    });

    auto prof = detail::make_profile(media, demands, n, opt);
    for (const auto& part : parts)
        detail::merge_unicast(prof, part);
    prof.finalize();
    return prof;
}

// ---------------------------------------------------------------------------
// Layered replacement

/// A medium, demands and modems; `codebook_law[p]` is set once pair p's source
/// has been replaced by an i.i.d. codebook with that letter law.
struct UnicastSystem {
    MediumKernel medium;
    UnicastDemandSet demands;
    ModemStack modems;
    std::map<std::size_t, ExactDistribution> codebook_law;
    std::map<std::size_t, double> codebook_rate;
    std::map<std::size_t, std::uint64_t> codebook_seed;
};

struct ReplacementOptions {
    double rate = 0;
    std::optional<ExactDistribution> letter_law;   // mismatched laws serve as negative controls
    bool exact = true;
    std::uint64_t trials = 20000;
    std::uint64_t seed = 0;
    std::uint64_t exact_budget = 1'000'000;
};

struct ReplacementReport {
    std::size_t pair = 0;
    std::string label;
    bool exact = true;
    std::uint64_t seed = 0;
    // Law of (sources, observations, reproductions) of every other pair.
    double other_pairs_tv = 0;
    std::optional<Rational> other_pairs_tv_exact;
    // Law of each user's medium input.
    std::vector<double> input_tv;
    std::vector<std::optional<Rational>> input_tv_exact;
    double noise_floor = 0;   // empirical mode: TV between two independent runs of the original system
};

namespace detail {

// Law of the block that pair p feeds into its sender's encoder.
inline BlockLaw pair_input_law(const UnicastSystem& sys, std::size_t p, std::size_t n)
{
    auto it = sys.codebook_law.find(p);
    // Averaged over the random codebook, the transmitted codeword is i.i.d.
    // from the codebook letter law whatever the (uniform) message is.
    const ExactDistribution& law = it != sys.codebook_law.end() ? it->second : sys.demands.pairs[p].p_x;
    BlockLaw out;
    const auto total = *sequence_space_size(law.size(), n);
    for (std::uint64_t i = 0; i < total; ++i) {
        auto s = sequence_at(i, n, law.size());
        Rational w = 1;
        for (auto x : s)
            w *= law[x];
        if (w != 0)
            out[s] = w;
    }
    return out;
}

struct SignalLaws {
    BlockLaw others;                 // per pair != skip: source, observation at receiver, reproduction
    std::vector<BlockLaw> inputs;    // per user
};

inline Sequence flatten(const std::vector<const Sequence*>& parts)
{
    Sequence out;
    for (auto* p : parts)
        out.insert(out.end(), p->begin(), p->end());
    return out;
}

inline SignalLaws exact_signal_laws(const UnicastSystem& sys, std::size_t skip, std::size_t n, std::uint64_t budget)
{
    const auto& dem = sys.demands;
    const std::size_t np = dem.pairs.size();
    std::vector<std::vector<std::pair<Sequence, Rational>>> per_pair;
    std::uint64_t configs = 1;
    for (std::size_t p = 0; p < np; ++p) {
        auto law = pair_input_law(sys, p, n);
        per_pair.emplace_back(law.begin(), law.end());
        configs *= per_pair.back().size();
        if (configs > budget)
            throw BudgetExceeded("joint source space exceeds the exact budget");
    }
    SignalLaws out;
    out.inputs.resize(dem.users);
    std::vector<std::size_t> pick(np, 0);
    std::uint64_t work = 0;
    for (std::uint64_t c = 0; c < configs; ++c) {
        std::uint64_t v = c;
        Rational w = 1;
        std::vector<Sequence> src(np);
        for (std::size_t p = np; p-- > 0;) {
            const auto& e = per_pair[p][v % per_pair[p].size()];
            v /= per_pair[p].size();
            src[p] = e.first;
            w *= e.second;
        }
        Blocks inputs;
        std::vector<std::vector<Sequence>> local(dem.users);
        for (std::size_t u = 0; u < dem.users; ++u) {
            for (auto p : dem.outgoing(u))
                local[u].push_back(src[p]);
            inputs.push_back(sys.modems.modems[u].encode(local[u], n, modem_seed(sys.modems.seed, u)));
            out.inputs[u][inputs.back()] += w;
        }
        for (const auto& [obs, q] : sys.medium.exact_law(inputs)) {
            if (++work > budget)
                throw BudgetExceeded("joint signal space exceeds the exact budget");
            std::vector<Sequence> rep(np);
            for (std::size_t u = 0; u < dem.users; ++u) {
                auto in = dem.incoming(u);
                if (in.empty())
                    continue;
                auto r = sys.modems.modems[u].decode(obs[u], local[u], modem_seed(sys.modems.seed, u));
                for (std::size_t k = 0; k < in.size(); ++k)
                    rep[in[k]] = std::move(r[k]);
            }
            std::vector<const Sequence*> parts;
            for (std::size_t p = 0; p < np; ++p) {
                if (p == skip)
                    continue;
                parts.push_back(&src[p]);
                parts.push_back(&obs[dem.pairs[p].to]);
                parts.push_back(&rep[p]);
            }
            out.others[flatten(parts)] += w * q;
        }
    }
    return out;
}

inline double histogram_tv(const std::map<Sequence, std::uint64_t>& a, const std::map<Sequence, std::uint64_t>& b,
                           std::uint64_t na, std::uint64_t nb)
{
    double tv = 0;
    for (const auto& [k, c] : a) {
        auto it = b.find(k);
        double other = it == b.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(nb);
        tv += std::abs(static_cast<double>(c) / static_cast<double>(na) - other);
    }
    for (const auto& [k, c] : b)
        if (!a.count(k))
            tv += static_cast<double>(c) / static_cast<double>(nb);
    return tv / 2;
}

struct SignalHistograms {
    std::map<Sequence, std::uint64_t> others;
    std::vector<std::map<Sequence, std::uint64_t>> inputs;
};

// Samples the system; replaced pairs draw a fresh codebook per trial and send
// the codeword of a uniform message.
inline SignalHistograms sample_signals(const UnicastSystem& sys, std::size_t skip, std::size_t n,
                                       std::uint64_t trials, std::uint64_t seed)
{
    const auto& dem = sys.demands;
    const std::size_t np = dem.pairs.size();
    SignalHistograms h;
    h.inputs.resize(dem.users);
    for (std::uint64_t t = 0; t < trials; ++t) {
        std::vector<Sequence> src(np);
        for (std::size_t p = 0; p < np; ++p) {
            Rng r = make_rng(seed, {stream_pair_source, p, t});
            auto it = sys.codebook_law.find(p);
            if (it == sys.codebook_law.end()) {
                src[p] = LetterSampler(dem.pairs[p].p_x.to_float()).block(n, r);
            } else {
                Rng cr = make_rng(sys.codebook_seed.at(p), {t});
                auto cb = generate_iid_codebook(it->second.to_float(), n, sys.codebook_rate.at(p), cr);
                auto w = std::uniform_int_distribution<std::size_t>(0, cb.size() - 1)(r);
                src[p] = cb[w];
            }
        }
        Blocks inputs;
        std::vector<std::vector<Sequence>> local(dem.users);
        for (std::size_t u = 0; u < dem.users; ++u) {
            for (auto p : dem.outgoing(u))
                local[u].push_back(src[p]);
            inputs.push_back(sys.modems.modems[u].encode(local[u], n, modem_seed(sys.modems.seed, u)));
            ++h.inputs[u][inputs.back()];
        }
        Rng mr = make_rng(seed, {stream_medium, t});
        auto obs = sys.medium.apply(inputs, mr);
        std::vector<Sequence> rep(np);
        for (std::size_t u = 0; u < dem.users; ++u) {
            auto in = dem.incoming(u);
            if (in.empty())
                continue;
            auto r = sys.modems.modems[u].decode(obs[u], local[u], modem_seed(sys.modems.seed, u));
            for (std::size_t k = 0; k < in.size(); ++k)
                rep[in[k]] = std::move(r[k]);
        }
        std::vector<const Sequence*> parts;
        for (std::size_t p = 0; p < np; ++p) {
            if (p == skip)
                continue;
            parts.push_back(&src[p]);
            parts.push_back(&obs[dem.pairs[p].to]);
            parts.push_back(&rep[p]);
        }
        ++h.others[flatten(parts)];
    }
    return h;
}

} // namespace detail

/// Exact joint law of all sources (or codewords), medium outputs and
/// reproductions, flattened pair by pair. Used to compare replacement orders.
inline BlockLaw exact_system_law(const UnicastSystem& sys, std::size_t n, std::uint64_t budget = 1'000'000)
{
    return detail::exact_signal_laws(sys, std::numeric_limits<std::size_t>::max(), n, budget).others;
}

/// Replaces the source of pair `pair` by an i.i.d. codebook encoder and
/// reports how the law seen by every other pair moved.
inline std::pair<UnicastSystem, ReplacementReport> layered_replacement(const UnicastSystem& sys, std::size_t pair,
                                                                       std::size_t n, const ReplacementOptions& opt)
{
    sys.demands.validate();
    if (pair >= sys.demands.pairs.size())
        throw std::invalid_argument("layered_replacement: no such pair");
    if (sys.modems.modems.size() != sys.demands.users || sys.medium.users() != sys.demands.users)
        throw std::invalid_argument("layered_replacement: system has inconsistent user counts");
    const auto& d = sys.demands.pairs[pair];
    ExactDistribution law = opt.letter_law ? *opt.letter_law : d.p_x;
    if (law.size() != d.p_x.size())
        throw std::invalid_argument("codebook letter law does not match the source alphabet");

    UnicastSystem after = sys;
    after.codebook_law.insert_or_assign(pair, law);
    after.codebook_rate[pair] = opt.rate;
    after.codebook_seed[pair] = derive_seed(opt.seed, {detail::stream_codebook, pair});

    ReplacementReport rep;
    rep.pair = pair;
    rep.label = d.label();
    rep.seed = after.codebook_seed[pair];
    bool exact = opt.exact && sys.medium.has_exact();
    if (exact) {
        try {
            auto a = detail::exact_signal_laws(sys, pair, n, opt.exact_budget);
            auto b = detail::exact_signal_laws(after, pair, n, opt.exact_budget);
            rep.other_pairs_tv_exact = total_variation(a.others, b.others);
            rep.other_pairs_tv = to_double(*rep.other_pairs_tv_exact);
            for (std::size_t u = 0; u < a.inputs.size(); ++u) {
                auto tv = total_variation(a.inputs[u], b.inputs[u]);
                rep.input_tv_exact.push_back(tv);
                rep.input_tv.push_back(to_double(tv));
            }
        } catch (const BudgetExceeded&) {
            exact = false;
        }
    }
    rep.exact = exact;
    if (!exact) {
        const auto s1 = derive_seed(opt.seed, {1});
        const auto s2 = derive_seed(opt.seed, {2});
        const auto s3 = derive_seed(opt.seed, {3});
        auto a = detail::sample_signals(sys, pair, n, opt.trials, s1);
        auto b = detail::sample_signals(after, pair, n, opt.trials, s2);
        auto c = detail::sample_signals(sys, pair, n, opt.trials, s3);
        rep.other_pairs_tv = detail::histogram_tv(a.others, b.others, opt.trials, opt.trials);
        rep.noise_floor = detail::histogram_tv(a.others, c.others, opt.trials, opt.trials);
        rep.input_tv_exact.assign(a.inputs.size(), std::nullopt);
        for (std::size_t u = 0; u < a.inputs.size(); ++u)
            rep.input_tv.push_back(detail::histogram_tv(a.inputs[u], b.inputs[u], opt.trials, opt.trials));
    }
    return {std::move(after), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Separation over a shared medium

/// Per-pair source and channel codes, in demand order.
struct PairCodes {
    SourceCodeConfig source;
    ChannelCodeConfig channel;
};

/// Every pair runs its own separation chain at the same time; users with no
/// outgoing pair send zeros. Each sender carries at most one pair.
inline UnicastProfile end_to_end_separation(const UnicastDemandSet& demands, const std::vector<MediumKernel>& media,
                                            const std::vector<PairCodes>& codes, std::size_t n,
                                            const SimulationOptions& opt)
{
    if (demands.pairs.empty())
        return detail::make_profile(media, demands, n, opt);
    detail::check_media(media, demands);
    if (codes.size() != demands.pairs.size())
        throw std::invalid_argument("one code configuration per pair is required");
    for (std::size_t u = 0; u < demands.users; ++u)
        if (demands.outgoing(u).size() > 1)
            throw std::invalid_argument("each user may send at most one pair");
    std::vector<SeparationChain> chains;
    for (std::size_t p = 0; p < demands.pairs.size(); ++p) {
        const auto& d = demands.pairs[p];
        SeparationConfig cfg{d.p_x, d.spec, d.D, codes[p].source, codes[p].channel, n, opt};
        chains.emplace_back(cfg, media[0].input_size(d.from), media[0].output_size(d.to));
        for (const auto& m : media)
            if (m.input_size(d.from) != media[0].input_size(d.from) || m.output_size(d.to) != media[0].output_size(d.to))
                throw std::invalid_argument("media in the set must share alphabets");
    }
    const auto batches = detail::batch_count(opt);
    std::vector<UnicastProfile> parts(batches, detail::make_profile(media, demands, n, opt));
    parallel_for(batches, opt.threads, [&](std::size_t b) {
        auto& part = parts[b];
        std::vector<SeparationChain::Batch> bs;
        for (std::size_t p = 0; p < chains.size(); ++p)
            bs.push_back(chains[p].prepare_batch(opt.seed, p + 1, b));
        for (std::uint64_t t = 0; t < detail::batch_trials(opt, b); ++t) {
            std::vector<SeparationChain::SourceState> st;
            for (std::size_t p = 0; p < chains.size(); ++p) {
                Rng r = make_rng(opt.seed, {detail::stream_pair_source, p, b, t});
                st.push_back(chains[p].encode_source(bs[p], r));
            }
            for (std::size_t m = 0; m < media.size(); ++m) {
                Blocks inputs(demands.users);
                std::vector<Sequence> sent(chains.size());
                for (std::size_t u = 0; u < demands.users; ++u)
                    inputs[u] = Sequence(n, 0);
                for (std::size_t p = 0; p < chains.size(); ++p) {
                    Rng r = make_rng(opt.seed, {detail::stream_pair_decode, m, p, b, t});
                    sent[p] = chains[p].channel_input(bs[p], st[p], r);
                    inputs[demands.pairs[p].from] = sent[p];
                }
                Rng mr = make_rng(opt.seed, {detail::stream_medium, m, b, t});
                auto obs = media[m].apply(inputs, mr);
                bool all = true;
                for (std::size_t p = 0; p < chains.size(); ++p) {
                    Rng r = make_rng(opt.seed, {detail::stream_pair_decode, m, p, b, t, 1});
                    auto o = chains[p].finish(bs[p], st[p], sent[p], obs[demands.pairs[p].to], r);
                    part.pairs[p].per_medium[m].record(o.excess);
                    all = all && o.excess;
                }
                part.all_pairs_excess[m].record(all);
            }
        }
    });
    auto prof = detail::make_profile(media, demands, n, opt);
    for (const auto& part : parts)
        detail::merge_unicast(prof, part);
    prof.finalize();
    return prof;
}

} // namespace sepkit
