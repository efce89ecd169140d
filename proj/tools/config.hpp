#pragma once

// JSON config parsing for the sepkit CLI. Rationals are "num/den" strings (or
// plain integers); channels and distortions are named builtins or matrices.

#include <sepkit/channels.hpp>
#include <sepkit/coding.hpp>
#include <sepkit/distortion.hpp>
#include <sepkit/multiuser.hpp>
#include <sepkit/probability.hpp>

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>

namespace sepkit::cli {

using json = nlohmann::json;

/// Malformed or incomplete config; the message names the offending field.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A view of one JSON object plus its path, for field-level messages.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw SchemaError(where() + " must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json& at(const std::string& key) const
    {
        if (!has(key))
            throw SchemaError("missing field '" + field(key) + "'");
        return j_.at(key);
    }

    Node child(const std::string& key) const { return Node(at(key), field(key)); }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string& key) const
    {
        const auto& v = at(key);
        if (v.is_number())
            return v.get<double>();
        if (v.is_string())
            return to_double(rational(key));
        throw SchemaError("field '" + field(key) + "' must be a number");
    }

    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::uint64_t count(const std::string& key) const
    {
        const auto& v = at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw SchemaError("field '" + field(key) + "' must be a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) const
    {
        return has(key) ? count(key) : fallback;
    }

    bool flag(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        if (!at(key).is_boolean())
            throw SchemaError("field '" + field(key) + "' must be true or false");
        return at(key).get<bool>();
    }

    std::string text(const std::string& key) const
    {
        if (!at(key).is_string())
            throw SchemaError("field '" + field(key) + "' must be a string");
        return at(key).get<std::string>();
    }

    std::string text(const std::string& key, std::string fallback) const
    {
        return has(key) ? text(key) : std::move(fallback);
    }

    Rational rational(const std::string& key) const { return to_rational(at(key), field(key)); }

    std::vector<std::size_t> counts(const std::string& key) const
    {
        const auto& v = at(key);
        if (v.is_number())
            return {static_cast<std::size_t>(count(key))};
        if (!v.is_array() || v.empty())
            throw SchemaError("field '" + field(key) + "' must be a positive integer or a nonempty list of them");
        std::vector<std::size_t> out;
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<std::int64_t>() <= 0)
                throw SchemaError("field '" + field(key) + "' must hold positive integers");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }

    std::vector<double> numbers(const std::string& key) const
    {
        const auto& v = at(key);
        if (v.is_number() || v.is_string())
            return {number(key)};
        if (!v.is_array() || v.empty())
            throw SchemaError("field '" + field(key) + "' must be a number or a nonempty list of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out.push_back(v[i].is_number() ? v[i].get<double>()
                                           : to_double(to_rational(v[i], field(key) + "[" + std::to_string(i) + "]")));
        return out;
    }

    static Rational to_rational(const json& v, const std::string& where)
    {
        if (v.is_number_integer())
            return Rational(v.get<std::int64_t>());
        if (v.is_string()) {
            try {
                return parse_rational(v.get<std::string>());
            } catch (const std::exception& e) {
                throw SchemaError("field '" + where + "': " + e.what());
            }
        }
        throw SchemaError("field '" + where + "' must be a rational string such as \"1/10\"");
    }

    const json& raw() const { return j_; }
    const std::string& path() const { return path_; }

private:
    std::string where() const { return path_.empty() ? "config" : "field '" + path_ + "'"; }

    const json& j_;
    std::string path_;
};

inline ExactDistribution distribution(const json& v, const std::string& where)
{
    if (!v.is_array() || v.empty())
        throw SchemaError("field '" + where + "' must be a nonempty list of probabilities");
    std::vector<Rational> m;
    for (std::size_t i = 0; i < v.size(); ++i)
        m.push_back(Node::to_rational(v[i], where + "[" + std::to_string(i) + "]"));
    try {
        return ExactDistribution(std::move(m));
    } catch (const std::exception& e) {
        throw SchemaError("field '" + where + "': " + e.what());
    }
}

inline ExactDistribution distribution(const Node& n, const std::string& key)
{
    return distribution(n.at(key), n.field(key));
}

inline Matrix<Rational> rational_matrix(const json& v, const std::string& where)
{
    if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty())
        throw SchemaError("field '" + where + "' must be a nonempty list of rows");
    const std::size_t cols = v[0].size();
    Matrix<Rational> m(v.size(), cols);
    for (std::size_t r = 0; r < v.size(); ++r) {
        if (!v[r].is_array() || v[r].size() != cols)
            throw SchemaError("field '" + where + "' rows must have equal length");
        for (std::size_t c = 0; c < cols; ++c)
            m(r, c) = Node::to_rational(v[r][c], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    return m;
}

/// "hamming", "sorted", "position_weighted", or {"matrix": [[...]]}.
inline DistortionSpec distortion(const Node& n, const std::string& key, std::size_t alphabet)
{
    const auto& v = n.at(key);
    const auto where = n.field(key);
    if (v.is_string()) {
        auto name = v.get<std::string>();
        if (name == "hamming")
            return DistortionSpec::hamming(alphabet);
        if (name == "sorted")
            return DistortionSpec::sorted_sequence(alphabet);
        if (name == "position_weighted")
            return DistortionSpec::position_weighted(alphabet);
        throw SchemaError("field '" + where + "': unknown distortion '" + name + "'");
    }
    Node d(v, where);
    auto m = rational_matrix(d.at("matrix"), d.field("matrix"));
    Matrix<double> f(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (m.data[i] < 0)
            throw SchemaError("field '" + d.field("matrix") + "' must be nonnegative");
        f.data[i] = to_double(m.data[i]);
    }
    if (m.rows != alphabet)
        throw SchemaError("field '" + d.field("matrix") + "' needs one row per source letter");
    return DistortionSpec::additive(std::move(f), d.text("name", "matrix"));
}

/// Single-letter matrices: {"type": "bsc", "p": "1/10"}, {"type": "identity", "size": k},
/// {"type": "matrix", "rows": [[...]]}.
inline ExactChannelMatrix channel_matrix(const json& v, const std::string& where)
{
    Node c(v, where);
    auto type = c.text("type");
    try {
        if (type == "bsc")
            return bsc_matrix(c.rational("p"));
        if (type == "identity")
            return identity_matrix<Rational>(c.count("size", 2));
        if (type == "matrix")
            return ExactChannelMatrix(rational_matrix(c.at("rows"), c.field("rows")));
    } catch (const SchemaError&) {
        throw;
    } catch (const std::exception& e) {
        throw SchemaError("field '" + where + "': " + e.what());
    }
    throw SchemaError("field '" + c.field("type") + "': unknown single-letter channel '" + type + "'");
}

/// Block channels add {"type": "half_lying"} (blocklength taken from the run).
inline ChannelKernel channel_kernel(const json& v, const std::string& where, std::size_t n)
{
    Node c(v, where);
    auto type = c.text("type");
    if (type == "half_lying")
        return half_lying_channel(n);
    auto m = channel_matrix(v, where);
    if (type == "bsc")
        return bsc(c.rational("p"));
    if (type == "identity")
        return identity_channel(m.inputs());
    return dmc(m, c.text("name", "dmc"));
}

inline const json& list(const Node& n, const std::string& key)
{
    const auto& v = n.at(key);
    if (!v.is_array() || v.empty())
        throw SchemaError("field '" + n.field(key) + "' must be a nonempty list");
    return v;
}

inline CodebookMode codebook_mode(const Node& n, const std::string& key)
{
    auto m = n.text(key, "automatic");
    if (m == "automatic" || m == "auto")
        return CodebookMode::automatic;
    if (m == "explicit")
        return CodebookMode::explicit_list;
    if (m == "implicit")
        return CodebookMode::implicit;
    throw SchemaError("field '" + n.field(key) + "' must be automatic, explicit or implicit");
}

/// {"type": "interfering", "p": "1/10"} or {"type": "links", "forward": ch, "backward": ch}.
inline MediumKernel medium(const json& v, const std::string& where)
{
    Node m(v, where);
    auto type = m.text("type");
    if (type == "interfering")
        return interfering_two_user(m.rational("p"));
    if (type == "links")
        return two_way_links(channel_matrix(m.at("forward"), m.field("forward")),
                             channel_matrix(m.at("backward"), m.field("backward")), m.text("name", "links"));
    throw SchemaError("field '" + m.field("type") + "': unknown medium '" + type + "'");
}

// ---------------------------------------------------------------------------
// Output

inline json exact_value(const Rational& r) { return {{"mode", "exact"}, {"value", to_string(r)}, {"float", to_double(r)}}; }

inline json float_value(double x)
{
    json j{{"mode", "float"}};
    if (std::isfinite(x))
        j["value"] = x;
    else
        j["value"] = x > 0 ? "inf" : "-inf";
    return j;
}

inline json mc_value(const McEstimate& e)
{
    return {{"mode", "monte-carlo"}, {"value", e.rate()}, {"events", e.events}, {"trials", e.trials},
            {"sigma", e.sigma()}};
}

inline json masses(const ExactDistribution& p)
{
    json a = json::array();
    for (const auto& m : p.masses())
        a.push_back(to_string(m));
    return a;
}

/// RFC-4180 table: fields quoted when they contain commas, quotes or line breaks.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    template <class... Cells>
    void row(const Cells&... cells)
    {
        std::vector<std::string> r{cell(cells)...};
        if (r.size() != header_.size())
            throw std::logic_error("csv row has the wrong number of fields");
        rows_.push_back(std::move(r));
    }

    bool empty() const { return rows_.empty(); }

    std::string str() const
    {
        std::string out;
        line(out, header_);
        for (const auto& r : rows_)
            line(out, r);
        return out;
    }

private:
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(const Rational& r) { return to_string(r); }
    static std::string cell(bool b) { return b ? "true" : "false"; }
    static std::string cell(double x)
    {
        std::ostringstream os;
        os.precision(17);
        os << x;
        return os.str();
    }
    template <class T>
        requires std::is_integral_v<T>
    static std::string cell(T x)
    {
        return std::to_string(x);
    }

    static void line(std::string& out, const std::vector<std::string>& r)
    {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i)
                out += ',';
            const auto& f = r[i];
            if (f.find_first_of(",\"\r\n") == std::string::npos) {
                out += f;
                continue;
            }
            out += '"';
            for (char c : f) {
                if (c == '"')
                    out += '"';
                out += c;
            }
            out += '"';
        }
        out += "\r\n";
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Wall-clock allowance for one run, checked between work items.
class Deadline {
public:
    explicit Deadline(std::optional<double> seconds) : seconds_(seconds), start_(std::chrono::steady_clock::now()) {}

    double elapsed() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

    std::optional<double> remaining() const
    {
        if (!seconds_)
            return std::nullopt;
        return std::max(0.0, *seconds_ - elapsed());
    }

    void check(const std::string& what) const
    {
        if (seconds_ && elapsed() >= *seconds_)
            throw BudgetExceeded("runtime budget of " + std::to_string(*seconds_) + " s spent before " + what);
    }

private:
    std::optional<double> seconds_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace sepkit::cli
