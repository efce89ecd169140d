#pragma once

// Block channels k^n, deterministic/randomized block coders, and the
// black-box composition e o k o f used to build end-to-end channels.

#include "probability.hpp"
#include "rng.hpp"
#include "types.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>

namespace sepkit {

inline constexpr std::uint64_t exact_state_limit = 4096;

/// Exact law of an output block, sparse: only positive masses are stored.
using BlockLaw = std::map<Sequence, Rational>;

inline Rational law_total(const BlockLaw& law)
{
    Rational t = 0;
    for (const auto& [s, p] : law)
        t += p;
    return t;
}

inline Rational total_variation(const BlockLaw& a, const BlockLaw& b)
{
    Rational acc = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
            acc += ia->second;
            ++ia;
        } else if (ia == a.end() || ib->first < ia->first) {
            acc += ib->second;
            ++ib;
        } else {
            acc += boost::multiprecision::abs(ia->second - ib->second);
            ++ia;
            ++ib;
        }
    }
    return acc / 2;
}

namespace detail {

inline Symbol sample_index(std::span<const double> cdf, Rng& rng)
{
    double u = uniform01(rng);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end())
        --it;
    return static_cast<Symbol>(it - cdf.begin());
}

inline std::vector<double> cumulative(std::span<const double> p)
{
    std::vector<double> c(p.size());
    std::partial_sum(p.begin(), p.end(), c.begin());
    if (!c.empty())
        c.back() = 1.0;
    return c;
}

inline void require_exact_space(std::size_t alphabet, std::size_t n, const char* what)
{
    auto size = sequence_space_size(alphabet, n);
    if (!size || *size > exact_state_limit)
        throw BudgetExceeded(std::string(what) + ": exact mode is limited to " + std::to_string(exact_state_limit) +
                             " block states");
}

} // namespace detail

/// Draws i.i.d. letters from a float pmf.
class LetterSampler {
public:
    explicit LetterSampler(const Distribution& p) : cdf_(detail::cumulative(p.masses())) {}
    Symbol operator()(Rng& rng) const { return detail::sample_index(cdf_, rng); }
    Sequence block(std::size_t n, Rng& rng) const
    {
        Sequence s(n);
        for (auto& x : s)
            x = (*this)(rng);
        return s;
    }

private:
    std::vector<double> cdf_;
};

class ChannelKernel {
public:
    using Sampler = std::function<Sequence(std::span<const Symbol>, Rng&)>;
    using ExactEvaluator = std::function<BlockLaw(std::span<const Symbol>)>;

    ChannelKernel(std::string name, std::size_t input_size, std::size_t output_size, Sampler sampler,
                  ExactEvaluator exact = {}, std::size_t fixed_blocklength = 0)
        : name_(std::move(name)), in_(input_size), out_(output_size), sampler_(std::move(sampler)),
          exact_(std::move(exact)), fixed_n_(fixed_blocklength)
    {
        if (in_ == 0 || out_ == 0)
            throw std::invalid_argument("channel alphabets must be nonempty");
        if (!sampler_)
            throw std::invalid_argument("channel needs a sampler");
    }

    const std::string& name() const { return name_; }
    std::size_t input_size() const { return in_; }
    std::size_t output_size() const { return out_; }
    bool has_exact() const { return static_cast<bool>(exact_); }
    std::size_t fixed_blocklength() const { return fixed_n_; }
    const std::optional<ExactChannelMatrix>& letter_matrix() const { return letter_; }

    Sequence apply(std::span<const Symbol> input, Rng& rng) const
    {
        check_input(input);
        return sampler_(input, rng);
    }

    BlockLaw exact_law(std::span<const Symbol> input) const
    {
        check_input(input);
        if (!exact_)
            throw std::logic_error("channel '" + name_ + "' has no exact evaluator");
        return exact_(input);
    }

    /// Marks the kernel as memoryless with the given per-letter matrix.
    ChannelKernel& with_letter_matrix(ExactChannelMatrix m)
    {
        letter_ = std::move(m);
        return *this;
    }

private:
    void check_input(std::span<const Symbol> input) const
    {
        if (input.empty())
            throw std::invalid_argument("channel '" + name_ + "': empty input block");
        if (fixed_n_ != 0 && input.size() != fixed_n_)
            throw std::invalid_argument("channel '" + name_ + "' does not support blocklength " +
                                        std::to_string(input.size()));
        for (auto s : input)
            if (s >= in_)
                throw std::invalid_argument("channel '" + name_ + "': input symbol outside the alphabet");
    }

    std::string name_;
    std::size_t in_;
    std::size_t out_;
    Sampler sampler_;
    ExactEvaluator exact_;
    std::size_t fixed_n_;
    std::optional<ExactChannelMatrix> letter_;
};

/// Memoryless channel: k^n(o|i) = prod_t k(o_t | i_t).
inline ChannelKernel dmc(const ExactChannelMatrix& k, std::string name = "dmc")
{
    auto kf = k.to_float();
    std::vector<std::vector<double>> cdfs;
    for (std::size_t i = 0; i < kf.inputs(); ++i)
        cdfs.push_back(detail::cumulative(kf.matrix().row(i)));
    auto sampler = [cdfs = std::move(cdfs)](std::span<const Symbol> in, Rng& rng) {
        Sequence out(in.size());
        for (std::size_t t = 0; t < in.size(); ++t)
            out[t] = detail::sample_index(cdfs[in[t]], rng);
        return out;
    };
    auto exact = [k](std::span<const Symbol> in) {
        detail::require_exact_space(k.outputs(), in.size(), "dmc");
        BlockLaw law;
        auto total = *sequence_space_size(k.outputs(), in.size());
        for (std::uint64_t idx = 0; idx < total; ++idx) {
            Sequence o = sequence_at(idx, in.size(), k.outputs());
            Rational p = 1;
            for (std::size_t t = 0; t < in.size() && p != 0; ++t)
                p *= k(in[t], o[t]);
            if (p != 0)
                law.emplace(std::move(o), std::move(p));
        }
        return law;
    };
    ChannelKernel kernel(std::move(name), k.inputs(), k.outputs(), std::move(sampler), std::move(exact));
    kernel.with_letter_matrix(k);
    return kernel;
}

inline ChannelKernel bsc(const Rational& crossover)
{
    return dmc(bsc_matrix(crossover), "bsc(" + to_string(crossover) + ")");
}

inline ChannelKernel identity_channel(std::size_t alphabet_size = 2)
{
    return dmc(identity_matrix<Rational>(alphabet_size), "identity");
}

/// With probability 1/2 the output equals the input block; otherwise it is
/// uniform on {0,1}^n and independent of the input.
inline ChannelKernel half_lying_channel(std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("half_lying_channel: blocklength must be positive");
    auto sampler = [](std::span<const Symbol> in, Rng& rng) {
        if (uniform01(rng) < 0.5)
            return Sequence(in.begin(), in.end());
        Sequence out(in.size());
        std::uniform_int_distribution<Symbol> bit(0, 1);
        for (auto& s : out)
            s = bit(rng);
        return out;
    };
    auto exact = [](std::span<const Symbol> in) {
        detail::require_exact_space(2, in.size(), "half_lying");
        BlockLaw law;
        auto total = *sequence_space_size(2, in.size());
        Rational each = Rational(1) / (Rational(2) * Rational(BigInt(total)));
        for (std::uint64_t idx = 0; idx < total; ++idx)
            law.emplace(sequence_at(idx, in.size(), 2), each);
        law[Sequence(in.begin(), in.end())] += Rational(1, 2);
        return law;
    };
    return ChannelKernel("half_lying", 2, 2, sampler, exact, n);
}

/// Arbitrary block channel for a single tiny blocklength, given as a
/// |I|^n x |O|^n transition matrix over lexicographically indexed blocks.
inline ChannelKernel explicit_block_channel(std::string name, std::size_t input_size, std::size_t output_size,
                                            std::size_t n, const ExactChannelMatrix& blocks)
{
    detail::require_exact_space(input_size, n, "explicit_block_channel");
    detail::require_exact_space(output_size, n, "explicit_block_channel");
    if (blocks.inputs() != *sequence_space_size(input_size, n) ||
        blocks.outputs() != *sequence_space_size(output_size, n))
        throw std::invalid_argument("explicit_block_channel: matrix shape does not match the block spaces");
    auto kf = blocks.to_float();
    std::vector<std::vector<double>> cdfs;
    for (std::size_t i = 0; i < kf.inputs(); ++i)
        cdfs.push_back(detail::cumulative(kf.matrix().row(i)));
    auto sampler = [=, cdfs = std::move(cdfs)](std::span<const Symbol> in, Rng& rng) {
        auto row = sequence_index(in, input_size);
        return sequence_at(detail::sample_index(cdfs[row], rng), n, output_size);
    };
    auto exact = [=](std::span<const Symbol> in) {
        BlockLaw law;
        auto row = sequence_index(in, input_size);
        for (std::size_t o = 0; o < blocks.outputs(); ++o)
            if (blocks(row, o) != 0)
                law.emplace(sequence_at(o, n, output_size), blocks(row, o));
        return law;
    };
    return ChannelKernel(std::move(name), input_size, output_size, sampler, exact, n);
}

// ---------------------------------------------------------------------------
// Block coders

/// A deterministic block map between sequence spaces.
struct BlockMap {
    std::string name;
    std::size_t input_size = 0;
    std::size_t output_size = 0;
    std::function<Sequence(std::span<const Symbol>)> fn;

    Sequence operator()(std::span<const Symbol> in) const
    {
        for (auto s : in)
            if (s >= input_size)
                throw std::invalid_argument("block map '" + name + "': symbol outside the input alphabet");
        Sequence out = fn(in);
        for (auto s : out)
            if (s >= output_size)
                throw std::logic_error("block map '" + name + "' produced a symbol outside its output alphabet");
        return out;
    }
};

inline BlockMap identity_map(std::size_t alphabet_size = 2)
{
    return {"identity", alphabet_size, alphabet_size,
            [](std::span<const Symbol> in) { return Sequence(in.begin(), in.end()); }};
}

/// Maps every block to the same output block.
inline BlockMap constant_map(std::size_t input_size, std::size_t output_size, Sequence value)
{
    return {"constant", input_size, output_size, [value = std::move(value)](std::span<const Symbol>) { return value; }};
}

/// Constant map that keeps the input length.
inline BlockMap constant_letter_map(std::size_t input_size, std::size_t output_size, Symbol letter)
{
    return {"constant", input_size, output_size,
            [letter](std::span<const Symbol> in) { return Sequence(in.size(), letter); }};
}

inline BlockMap complement_map()
{
    return {"complement", 2, 2, [](std::span<const Symbol> in) {
                Sequence out(in.size());
                for (std::size_t i = 0; i < in.size(); ++i)
                    out[i] = 1 - in[i];
                return out;
            }};
}

inline BlockMap repetition_encoder(std::size_t repeats, std::size_t alphabet_size = 2)
{
    return {"repetition", alphabet_size, alphabet_size, [repeats](std::span<const Symbol> in) {
                Sequence out;
                out.reserve(in.size() * repeats);
                for (auto s : in)
                    out.insert(out.end(), repeats, s);
                return out;
            }};
}

/// Majority vote over consecutive groups of `repeats` binary letters.
inline BlockMap majority_decoder(std::size_t repeats)
{
    return {"majority", 2, 2, [repeats](std::span<const Symbol> in) {
                if (in.size() % repeats != 0)
                    throw std::invalid_argument("majority_decoder: length is not a multiple of the group size");
                Sequence out;
                for (std::size_t g = 0; g < in.size(); g += repeats) {
                    std::size_t ones = 0;
                    for (std::size_t t = 0; t < repeats; ++t)
                        ones += in[g + t];
                    out.push_back(2 * ones > repeats ? 1 : 0);
                }
                return out;
            }};
}

/// Lookup-table map over length-n blocks, indexed lexicographically.
inline BlockMap table_map(std::string name, std::size_t input_size, std::size_t output_size, std::size_t n,
                          std::vector<Sequence> table)
{
    auto expected = sequence_space_size(input_size, n);
    if (!expected || table.size() != *expected)
        throw std::invalid_argument("table_map: table size does not match the input block space");
    return {std::move(name), input_size, output_size,
            [=, table = std::move(table)](std::span<const Symbol> in) {
                if (in.size() != n)
                    throw std::invalid_argument("table_map: unsupported blocklength");
                return table[sequence_index(in, input_size)];
            }};
}

/// A uniformly random deterministic map from length-n blocks to length-m blocks.
inline BlockMap random_block_map(std::size_t input_size, std::size_t output_size, std::size_t n, std::size_t m,
                                 Rng& rng)
{
    auto rows = *sequence_space_size(input_size, n);
    std::uniform_int_distribution<Symbol> letter(0, static_cast<Symbol>(output_size - 1));
    std::vector<Sequence> table(rows);
    for (auto& out : table) {
        out.resize(m);
        for (auto& s : out)
            s = letter(rng);
    }
    return table_map("random", input_size, output_size, n, std::move(table));
}

/// Encoder/decoder pair, possibly randomized through a shared seed that both
/// sides see.
struct CoderPair {
    std::function<BlockMap(std::uint64_t)> encoder;
    std::function<BlockMap(std::uint64_t)> decoder;

    static CoderPair deterministic(BlockMap e, BlockMap f)
    {
        return {[e = std::move(e)](std::uint64_t) { return e; }, [f = std::move(f)](std::uint64_t) { return f; }};
    }
};

/// The black-box channel x -> f(k(e(x))).
inline ChannelKernel compose(const BlockMap& e, const ChannelKernel& k, const BlockMap& f)
{
    if (e.output_size != k.input_size() || k.output_size() != f.input_size)
        throw std::invalid_argument("compose: alphabets do not chain (" + e.name + " -> " + k.name() + " -> " +
                                    f.name + ")");
    auto sampler = [e, k, f](std::span<const Symbol> in, Rng& rng) { return f(k.apply(e(in), rng)); };
    ChannelKernel::ExactEvaluator exact;
    if (k.has_exact()) {
        exact = [e, k, f](std::span<const Symbol> in) {
            detail::require_exact_space(e.input_size, in.size(), "compose");
            BlockLaw law;
            for (auto& [o, p] : k.exact_law(e(in)))
                law[f(o)] += p;
            return law;
        };
    }
    return ChannelKernel(e.name + "*" + k.name() + "*" + f.name, e.input_size, f.output_size, std::move(sampler),
                         std::move(exact));
}

inline ChannelKernel compose(const CoderPair& coders, std::uint64_t shared_seed, const ChannelKernel& k)
{
    return compose(coders.encoder(shared_seed), k, coders.decoder(shared_seed));
}

/// A compound channel: the code must work for every member.
class CompoundChannel {
public:
    explicit CompoundChannel(std::vector<ChannelKernel> kernels) : kernels_(std::move(kernels))
    {
        if (kernels_.empty())
            throw std::invalid_argument("compound channel must be nonempty");
        for (const auto& k : kernels_)
            if (k.input_size() != kernels_[0].input_size() || k.output_size() != kernels_[0].output_size())
                throw std::invalid_argument("compound channel members must share alphabets");
    }

    const std::vector<ChannelKernel>& kernels() const { return kernels_; }
    std::size_t size() const { return kernels_.size(); }
    const ChannelKernel& operator[](std::size_t i) const { return kernels_[i]; }

private:
    std::vector<ChannelKernel> kernels_;
};

} // namespace sepkit
