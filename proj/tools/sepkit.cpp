// sepkit command-line runner: one JSON config in, one JSON report (and an
// optional CSV table) out.
//
// Exit codes: 0 success, 2 config/schema error, 3 failed assertion,
// 4 runtime or enumeration budget exceeded.

#include "config.hpp"

#include <sepkit/sepkit.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace sepkit;
using namespace sepkit::cli;

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::optional<double> budget;
};

struct Run {
    explicit Run(const Flags& f) : flags(f), deadline(f.budget) {}

    const Flags& flags;
    Deadline deadline;
    json results = json::object();
    std::optional<CsvTable> csv;
    std::vector<std::string> failures;
    std::optional<std::uint64_t> seed_used;

    std::uint64_t seed(const Node& cfg)
    {
        if (flags.seed)
            seed_used = *flags.seed;
        else if (cfg.has("seed"))
            seed_used = cfg.count("seed");
        else
            throw SchemaError("missing field 'seed' (required for stochastic runs; or pass --seed)");
        return *seed_used;
    }

    void check(bool ok, const std::string& name)
    {
        if (!ok)
            failures.push_back(name);
    }
};

json profile_json(const ErrorProfile& p)
{
    json kernels = json::array();
    for (const auto& k : p.per_kernel) {
        json ev = json::object();
        for (const auto& [name, e] : k.events)
            ev[name] = mc_value(e);
        kernels.push_back({{"kernel", k.kernel}, {"error", mc_value(k.error)}, {"events", ev}});
    }
    return {{"blocklength", p.blocklength}, {"rate", p.rate}, {"quantity", p.quantity}, {"codebook", p.mode},
            {"worst_kernel", p.worst_kernel}, {"kernels", kernels}};
}

void profile_rows(CsvTable& t, const ErrorProfile& p)
{
    for (const auto& k : p.per_kernel) {
        t.row(p.blocklength, k.kernel, std::string("error"), k.error.events, k.error.trials, k.error.rate(),
              k.error.sigma());
        for (const auto& [name, e] : k.events)
            t.row(p.blocklength, k.kernel, name, e.events, e.trials, e.rate(), e.sigma());
    }
}

// ---------------------------------------------------------------------------

void cmd_rd(const Node& cfg, Run& run)
{
    auto p = distribution(cfg, "source");
    auto spec = distortion(cfg, "distortion", p.size());
    auto grid = cfg.numbers("D");
    run.csv.emplace(std::vector<std::string>{"D", "rate", "distortion", "slope", "iterations", "converged"});
    json points = json::array();
    run.results["points"] = points;
    for (double D : grid) {
        run.deadline.check("D = " + std::to_string(D));
        auto r = blahut_arimoto(p, spec, D);
        run.results["points"].push_back({{"D", D},
                                         {"rate", float_value(r.rate)},
                                         {"distortion", float_value(r.distortion)},
                                         {"slope", float_value(r.slope)},
                                         {"iterations", r.iterations},
                                         {"gap", r.gap},
                                         {"converged", r.converged},
                                         {"output_marginal", r.output_marginal}});
        run.csv->row(D, r.rate, r.distortion, r.slope, r.iterations, r.converged);
    }
}

void cmd_capacity(const Node& cfg, Run& run)
{
    const auto& list_ = list(cfg, "channels");
    std::vector<ExactChannelMatrix> ks;
    for (std::size_t i = 0; i < list_.size(); ++i)
        ks.push_back(channel_matrix(list_[i], cfg.field("channels") + "[" + std::to_string(i) + "]"));
    CompoundCapacityOptions opt;
    opt.seed = run.seed(cfg);
    opt.threads = run.flags.threads;
    opt.restarts = static_cast<unsigned>(cfg.count("restarts", opt.restarts));
    opt.iterations = cfg.count("iterations", opt.iterations);
    run.deadline.check("the capacity search");
    CompoundCapacityResult r;
    try {
        r = compound_capacity(ks, opt);
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("field 'channels': ") + e.what());
    }
    run.results = {{"capacity", float_value(r.capacity)},
                   {"input", r.input.masses()},
                   {"worst_kernel", r.worst_kernel},
                   {"per_kernel", r.per_kernel},
                   {"restarts", r.restarts}};
    run.csv.emplace(std::vector<std::string>{"kernel", "mutual_information"});
    for (std::size_t k = 0; k < r.per_kernel.size(); ++k)
        run.csv->row(k, r.per_kernel[k]);
}

SourceCodeConfig source_code(const Node& n)
{
    SourceCodeConfig s;
    auto kind = n.text("kind", "identity");
    if (kind == "random_covering")
        s.kind = SourceCodeKind::random_covering;
    else if (kind != "identity")
        throw SchemaError("field '" + n.field("kind") + "' must be identity or random_covering");
    s.rate = n.number("rate", 0.0);
    s.mode = codebook_mode(n, "mode");
    return s;
}

ChannelCodeConfig channel_code(const Node& n, std::size_t inputs, std::size_t outputs)
{
    ChannelCodeConfig c;
    auto kind = n.text("kind", "identity");
    if (kind == "identity")
        return c;
    if (kind != "random_iid")
        throw SchemaError("field '" + n.field("kind") + "' must be identity or random_iid");
    c.kind = ChannelCodeKind::random_iid;
    c.rate = n.number("rate");
    c.input = distribution(n, "input");
    c.eps = n.number("eps");
    c.spec = distortion(n, "distortion", inputs);
    if (c.spec->y_size() != outputs)
        throw SchemaError("field '" + n.field("distortion") + "' does not match the channel output alphabet");
    c.D = n.number("D");
    c.mode = codebook_mode(n, "mode");
    return c;
}

void cmd_simulate(const Node& cfg, Run& run)
{
    auto p = distribution(cfg, "source");
    auto blocklengths = cfg.counts("n");
    SimulationOptions opt;
    opt.seed = run.seed(cfg);
    opt.threads = run.flags.threads;
    opt.trials = cfg.count("trials", opt.trials);
    opt.batch_size = cfg.count("batch_size", opt.batch_size);
    opt.mode = codebook_mode(cfg, "mode");
    if (opt.trials == 0 || opt.batch_size == 0)
        throw SchemaError("fields 'trials' and 'batch_size' must be positive");
    const auto pipeline = cfg.text("pipeline", "reliable");
    if (pipeline != "reliable" && pipeline != "separation")
        throw SchemaError("field 'pipeline' must be reliable or separation");
    const auto& chans = list(cfg, "channels");
    run.csv.emplace(std::vector<std::string>{"n", "kernel", "event", "events", "trials", "rate", "sigma"});
    run.results["profiles"] = json::array();
    for (auto n : blocklengths) {
        run.deadline.check("n = " + std::to_string(n));
        std::vector<ChannelKernel> ks;
        for (std::size_t i = 0; i < chans.size(); ++i)
            ks.push_back(channel_kernel(chans[i], cfg.field("channels") + "[" + std::to_string(i) + "]", n));
        CompoundChannel ch(std::move(ks));
        ErrorProfile prof;
        json extra = json::object();
        if (pipeline == "reliable") {
            auto spec = distortion(cfg, "distortion", p.size());
            if (spec.y_size() != ch[0].output_size() || p.size() != ch[0].input_size())
                throw SchemaError("field 'distortion' must match the channel input and output alphabets");
            const double eps = cfg.number("eps"), D = cfg.number("D"), R = cfg.number("rate");
            prof = simulate_reliable_comm(ch, p, eps, spec, D, R, n, opt);
            if (cfg.flag("bound", false)) {
                auto b = error_exponent_bound({p, spec, D, eps, R, n});
                extra["bound"] = {{"exponent", float_value(b.exponent)}, {"log2_bound", float_value(b.log2_bound)},
                                  {"bound", float_value(b.bound)}};
            }
        } else {
            auto spec = distortion(cfg, "distortion", p.size());
            SeparationConfig sc{p,
                                spec,
                                cfg.number("D"),
                                source_code(cfg.child("source_code")),
                                channel_code(cfg.child("channel_code"), ch[0].input_size(), ch[0].output_size()),
                                n,
                                opt};
            prof = separation_pipeline(sc, ch);
        }
        auto j = profile_json(prof);
        j.update(extra);
        run.results["profiles"].push_back(j);
        profile_rows(*run.csv, prof);
    }
}

void cmd_exponent(const Node& cfg, Run& run)
{
    auto p = distribution(cfg, "source");
    auto spec = distortion(cfg, "distortion", p.size());
    const double D = cfg.number("D"), eps = cfg.number("eps"), R = cfg.number("rate");
    run.csv.emplace(std::vector<std::string>{"n", "exponent", "feasible", "log2_bound", "bound"});
    run.results["points"] = json::array();
    for (auto n : cfg.counts("n")) {
        run.deadline.check("n = " + std::to_string(n));
        auto r = error_exponent_bound({p, spec, D, eps, R, n});
        run.results["points"].push_back({{"n", n},
                                         {"exponent", float_value(r.exponent)},
                                         {"feasible", r.feasible},
                                         {"minimizer", r.minimizer},
                                         {"log2_bound", float_value(r.log2_bound)},
                                         {"bound", float_value(r.bound)}});
        run.csv->row(n, r.exponent, r.feasible, r.log2_bound, r.bound);
    }
}

CertifiedDistortion certified(const Node& cfg, std::size_t alphabet, std::size_t n, std::uint64_t seed)
{
    try {
        return CertifiedDistortion::certify(distortion(cfg, "distortion", alphabet), n, seed);
    } catch (const VerificationFailure& e) {
        throw SchemaError(std::string("field 'distortion': ") + e.what());
    }
}

void cmd_duality(const Node& cfg, Run& run)
{
    UniformSourceSpec src(distribution(cfg, "source"));
    std::vector<std::size_t> ns;
    if (cfg.has("n"))
        ns = cfg.counts("n");
    else
        for (std::size_t n = src.n0; n <= cfg.count("max_n"); n += src.n0)
            ns.push_back(n);
    const auto reps = cfg.count("representatives", 5);
    const std::uint64_t seed = reps ? run.seed(cfg) : 0;
    const auto budget = cfg.count("enumeration_budget", default_enumeration_budget);
    run.csv.emplace(std::vector<std::string>{"n", "q", "D", "channel_side", "source_side", "equal", "representatives"});
    run.results["cases"] = json::array();
    std::size_t checked = 0;
    for (auto n : ns) {
        run.deadline.check("n' = " + std::to_string(n));
        if (!src.admissible(n))
            throw SchemaError("field 'n': " + std::to_string(n) + " is not a multiple of n0 = " +
                              std::to_string(src.n0));
        auto cd = certified(cfg, src.p_x.size(), n, seed);
        for (const auto& q : achievable_types(n, indexed_alphabet(cd.spec().y_size())))
            for (std::size_t k = 0; k <= n; ++k) {
                Rational D = make_rational(static_cast<std::int64_t>(k), static_cast<std::int64_t>(n));
                std::string failure;
                auto s = [&] {
                    try {
                        return verify_duality(n, src, q, cd, D, seed, reps, budget);
                    } catch (const VerificationFailure& e) {
                        failure = e.what();
                        return DualitySample{n, src.p_x, q, cd.spec().name(), D,
                                             excess_prob_channel_side(n, src, q, cd, D, ExcessMethod::enumerate),
                                             excess_prob_source_side(n, src, q, cd, D, ExcessMethod::enumerate), 0};
                    }
                }();
                ++checked;
                bool equal = failure.empty();
                run.check(equal, "duality " + failure);
                run.results["cases"].push_back({{"n", n},
                                                {"q", masses(q)},
                                                {"D", to_string(D)},
                                                {"channel_side", exact_value(s.channel_side)},
                                                {"source_side", exact_value(s.source_side)},
                                                {"equal", equal},
                                                {"representatives", s.representatives_checked}});
                std::string qs;
                for (const auto& m : q.masses())
                    qs += (qs.empty() ? "" : " ") + to_string(m);
                run.csv->row(n, qs, D, s.channel_side, s.source_side, equal, s.representatives_checked);
            }
    }
    run.results["checked"] = checked;
}

void cmd_threshold(const Node& cfg, Run& run)
{
    UniformSourceSpec src(distribution(cfg, "source"));
    auto ns = cfg.counts("n");
    auto D = cfg.rational("D");
    const double R = cfg.number("rate");
    for (auto n : ns)
        if (!src.admissible(n))
            throw SchemaError("field 'n': " + std::to_string(n) + " is not a multiple of n0 = " +
                              std::to_string(src.n0));
    run.deadline.check("the threshold trace");
    auto spec = distortion(cfg, "distortion", src.p_x.size());
    if (!spec.is_additive() && ns.size() > 1)
        throw SchemaError("field 'distortion': a non-additive distortion is certified at one blocklength only");
    auto cd = certified(cfg, src.p_x.size(), ns[0], 0);
    auto t = threshold_trace(src, cd, D, R, ns, run.flags.threads);
    run.csv.emplace(std::vector<std::string>{"n", "A", "message_bits", "channel_functional", "source_functional"});
    json pts = json::array();
    for (const auto& p : t.points) {
        json j{{"n", p.blocklength},
               {"A", exact_value(p.A)},
               {"minimizer", masses(p.minimizer)},
               {"message_bits", p.message_bits},
               {"channel_functional", p.channel_exact ? exact_value(*p.channel_exact) : float_value(p.channel_functional)},
               {"source_functional", p.source_exact ? exact_value(*p.source_exact) : float_value(p.source_functional)}};
        pts.push_back(j);
        run.csv->row(p.blocklength, p.A, p.message_bits, p.channel_functional, p.source_functional);
    }
    run.results = {{"rate", R},
                   {"points", pts},
                   {"channel_nondecreasing", t.channel_nondecreasing()},
                   {"source_nonincreasing", t.source_nonincreasing()}};
}

ExactDistribution mismatched(const ExactDistribution& p)
{
    // Halfway toward a point mass; differs from p unless p is that point mass.
    std::size_t target = p[0] == 1 ? 1 % p.size() : 0;
    std::vector<Rational> m;
    for (std::size_t i = 0; i < p.size(); ++i)
        m.push_back((p[i] + (i == target ? Rational(1) : Rational(0))) / 2);
    return ExactDistribution(std::move(m));
}

void cmd_multiuser(const Node& cfg, Run& run)
{
    const auto seed = run.seed(cfg);
    std::vector<MediumKernel> media;
    if (cfg.has("medium"))
        media.push_back(medium(cfg.at("medium"), "medium"));
    else {
        const auto& ms = list(cfg, "media");
        for (std::size_t i = 0; i < ms.size(); ++i)
            media.push_back(medium(ms[i], "media[" + std::to_string(i) + "]"));
    }
    UnicastDemandSet demands;
    demands.users = media[0].users();
    const auto& ds = cfg.at("demands");
    if (!ds.is_array())
        throw SchemaError("field 'demands' must be a list");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Node d(ds[i], "demands[" + std::to_string(i) + "]");
        auto p = distribution(d, "source");
        demands.pairs.push_back({static_cast<std::size_t>(d.count("from")), static_cast<std::size_t>(d.count("to")),
                                 p, distortion(d, "distortion", p.size()), d.number("D")});
    }
    try {
        demands.validate();
        for (const auto& m : media)
            if (m.users() != demands.users)
                throw std::invalid_argument("all media must have the same users");
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("field 'demands': ") + e.what());
    }
    const std::size_t n = cfg.count("n");
    const bool fault = cfg.text("inject_fault", "") == "mismatched_codebook_law";
    if (cfg.has("inject_fault") && !fault)
        throw SchemaError("field 'inject_fault' must be mismatched_codebook_law");

    ModemStack modems;
    try {
        modems = ModemStack::identity(demands, derive_seed(seed, {1}));
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("field 'demands': ") + e.what());
    }
    run.csv.emplace(std::vector<std::string>{"section", "pair", "medium", "events", "trials", "rate", "sigma"});
    SimulationOptions sim;
    sim.seed = derive_seed(seed, {2});
    sim.threads = run.flags.threads;
    sim.trials = cfg.count("trials", 1000);
    if (sim.trials > 0 && !demands.pairs.empty()) {
        run.deadline.check("simulate_unicast");
        auto prof = simulate_unicast(media, demands, modems, n, sim);
        json pairs = json::array();
        for (const auto& p : prof.pairs) {
            json per = json::array();
            for (std::size_t m = 0; m < p.per_medium.size(); ++m) {
                per.push_back(mc_value(p.per_medium[m]));
                const auto& e = p.per_medium[m];
                run.csv->row(std::string("unicast"), p.pair, prof.media[m], e.events, e.trials, e.rate(), e.sigma());
            }
            pairs.push_back({{"pair", p.pair}, {"per_medium", per}, {"worst_medium", p.worst_medium}});
        }
        json all = json::array();
        for (const auto& e : prof.all_pairs_excess)
            all.push_back(mc_value(e));
        run.results["unicast"] = {{"media", prof.media}, {"pairs", pairs}, {"all_pairs_excess", all},
                                  {"warnings", prof.warnings}};
    }

    if (cfg.has("replacement")) {
        auto rc = cfg.child("replacement");
        ReplacementOptions ro;
        ro.rate = rc.number("rate");
        ro.exact = rc.flag("exact", true);
        ro.trials = rc.count("trials", ro.trials);
        ro.exact_budget = rc.count("exact_budget", ro.exact_budget);
        const bool control = rc.flag("negative_control", false);
        std::vector<std::size_t> pairs;
        if (rc.has("pairs"))
            for (auto p : rc.counts("pairs"))
                pairs.push_back(p);
        else
            for (std::size_t p = 0; p < demands.pairs.size(); ++p)
                pairs.push_back(p);
        UnicastSystem sys{media[0], demands, modems, {}, {}, {}};
        json reps = json::array();
        for (auto pair : pairs) {
            if (pair >= demands.pairs.size())
                throw SchemaError("field 'replacement.pairs': no pair " + std::to_string(pair));
            run.deadline.check("replacement of pair " + std::to_string(pair));
            const auto& p_x = demands.pairs[pair].p_x;
            ro.seed = derive_seed(seed, {3, pair});
            ro.letter_law.reset();
            if (rc.has("letter_law"))
                ro.letter_law = distribution(rc, "letter_law");
            if (fault)
                ro.letter_law = mismatched(p_x);
            auto [after, rep] = layered_replacement(sys, pair, n, ro);
            const auto label = demands.pairs[pair].label();
            bool kept = rep.exact ? rep.other_pairs_tv <= 1e-12 : rep.other_pairs_tv <= 3 * rep.noise_floor;
            run.check(kept, "marginal preservation after replacing pair " + label + " (total variation " +
                                std::to_string(rep.other_pairs_tv) + ")");
            if (rep.exact) {
                bool same_inputs = true;
                for (const auto& tv : rep.input_tv_exact)
                    same_inputs = same_inputs && *tv == 0;
                run.check(same_inputs, "medium input law changed after replacing pair " + label);
                kept = kept && same_inputs;
            }
            json j{{"pair", label},
                   {"codebook_seed", rep.seed},
                   {"letter_law", masses(ro.letter_law ? *ro.letter_law : p_x)},
                   {"other_pairs_tv", rep.other_pairs_tv_exact ? exact_value(*rep.other_pairs_tv_exact)
                                                               : json{{"mode", "monte-carlo"},
                                                                      {"value", rep.other_pairs_tv},
                                                                      {"trials", ro.trials},
                                                                      {"noise_floor", rep.noise_floor}}},
                   {"preserved", kept}};
            json inputs = json::array();
            for (std::size_t u = 0; u < rep.input_tv.size(); ++u)
                inputs.push_back(rep.input_tv_exact[u] ? exact_value(*rep.input_tv_exact[u])
                                                       : float_value(rep.input_tv[u]));
            j["input_tv"] = inputs;
            if (control) {
                ReplacementOptions co = ro;
                co.letter_law = mismatched(p_x);
                auto neg = layered_replacement(sys, pair, n, co).second;
                // A mismatched law must show up in the sender's medium input even
                // when no other pair can hear it.
                const double floor = neg.exact ? 1e-3 : 3 * neg.noise_floor;
                const double input_tv = neg.input_tv[demands.pairs[pair].from];
                const bool seen = neg.other_pairs_tv > floor || input_tv > floor;
                run.check(seen, "negative control for pair " + label + " went undetected");
                j["negative_control"] = {{"letter_law", masses(*co.letter_law)},
                                         {"other_pairs_tv", neg.other_pairs_tv},
                                         {"sender_input_tv", input_tv},
                                         {"detected", seen}};
            }
            reps.push_back(j);
            sys = std::move(after);
        }
        run.results["replacement"] = reps;
    }

    if (cfg.has("separation")) {
        const auto& codes_json = list(cfg, "separation");
        if (codes_json.size() != demands.pairs.size())
            throw SchemaError("field 'separation' needs one entry per demand");
        std::vector<PairCodes> codes;
        for (std::size_t i = 0; i < codes_json.size(); ++i) {
            Node c(codes_json[i], "separation[" + std::to_string(i) + "]");
            const auto& d = demands.pairs[i];
            codes.push_back({source_code(c.child("source_code")),
                             channel_code(c.child("channel_code"), media[0].input_size(d.from),
                                          media[0].output_size(d.to))});
        }
        run.deadline.check("end-to-end separation");
        SimulationOptions so = sim;
        so.seed = derive_seed(seed, {4});
        so.trials = cfg.count("separation_trials", 500);
        auto prof = end_to_end_separation(demands, media, codes, n, so);
        json pairs = json::array();
        for (const auto& p : prof.pairs) {
            json per = json::array();
            for (std::size_t m = 0; m < p.per_medium.size(); ++m) {
                per.push_back(mc_value(p.per_medium[m]));
                const auto& e = p.per_medium[m];
                run.csv->row(std::string("separation"), p.pair, prof.media[m], e.events, e.trials, e.rate(),
                             e.sigma());
            }
            pairs.push_back({{"pair", p.pair}, {"per_medium", per}, {"worst_medium", p.worst_medium}});
        }
        run.results["separation"] = {{"pairs", pairs}};
    }
}

void cmd_verify_all(const Node& cfg, Run& run)
{
    AcceptanceOptions opt;
    opt.threads = run.flags.threads;
    if (run.flags.seed || cfg.has("seed"))
        opt.seed = run.seed(cfg);
    else
        run.seed_used = opt.seed;
    auto fault = cfg.text("inject_fault", "");
    if (fault == "mismatched_codebook_law")
        opt.fault = InjectedFault::mismatched_codebook_law;
    else if (!fault.empty())
        throw SchemaError("field 'inject_fault' must be mismatched_codebook_law");
    std::vector<int> only;
    if (cfg.has("criteria"))
        for (auto c : cfg.counts("criteria")) {
            if (c < 1 || c > 12)
                throw SchemaError("field 'criteria' holds ids 1..12");
            only.push_back(static_cast<int>(c));
        }
    run.deadline.check("the first criterion");
    opt.budget = run.deadline.remaining();
    std::ostream& log = run.flags.out.empty() ? std::cerr : std::cout;
    auto rep = verify_all(opt, only, [&](const CriterionResult& r) { log << format_result(r) << std::endl; });
    run.results["criteria"] = json::array();
    run.csv.emplace(std::vector<std::string>{"id", "name", "passed", "detail"});
    for (const auto& r : rep.results) {
        // Timings stay out of the report so reruns are byte-identical.
        run.results["criteria"].push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
        run.csv->row(r.id, r.name, r.passed, r.detail);
        run.check(r.passed, "#" + std::to_string(r.id) + " " + r.name);
    }
    if (rep.budget_exceeded)
        throw BudgetExceeded("runtime budget spent after " + std::to_string(rep.results.size()) + " criteria");
}

using Command = void (*)(const Node&, Run&);

const std::map<std::string, std::pair<Command, const char*>>& commands()
{
    static const std::map<std::string, std::pair<Command, const char*>> all{
        {"rd", {cmd_rd, "rate-distortion curve by Blahut-Arimoto"}},
        {"capacity", {cmd_capacity, "compound channel capacity"}},
        {"simulate", {cmd_simulate, "random-coding simulation over a compound channel"}},
        {"exponent", {cmd_exponent, "union-bound error exponent"}},
        {"duality", {cmd_duality, "exact covering/packing duality sweep"}},
        {"threshold", {cmd_threshold, "A_n and the packing/covering functionals"}},
        {"multiuser", {cmd_multiuser, "unicast media, layered replacement, separation"}},
        {"verify-all", {cmd_verify_all, "acceptance suite"}},
    };
    return all;
}

json read_config(const std::string& path)
{
    if (path.empty())
        return json::object();
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot read config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

void write_outputs(const std::string& name, const Flags& flags, const json& config, const Run& run, bool partial,
                   const std::string& error)
{
    json report{{"command", name},
                {"version", version},
                {"config", config},
                {"results", run.results},
                {"verdict", {{"passed", run.failures.empty() && error.empty()}, {"failures", run.failures},
                             {"partial", partial}}}};
    if (run.seed_used)
        report["seed"] = *run.seed_used;
    if (!error.empty())
        report["verdict"]["error"] = error;
    const auto text = report.dump(2) + "\n";
    if (flags.out.empty()) {
        std::cout << text;
        return;
    }
    std::filesystem::create_directories(flags.out);
    std::ofstream(std::filesystem::path(flags.out) / "report.json", std::ios::binary) << text;
    if (run.csv && !run.csv->empty())
        std::ofstream(std::filesystem::path(flags.out) / (name + ".csv"), std::ios::binary) << run.csv->str();
}

int execute(const std::string& name, const Flags& flags)
{
    json config;
    try {
        config = read_config(flags.config);
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 2;
    }
    Run run(flags);
    try {
        Node cfg(config, "");
        if (cfg.has("command") && cfg.text("command") != name)
            throw SchemaError("field 'command' is '" + cfg.text("command") + "' but the subcommand is '" + name + "'");
        run.deadline.check("starting " + name);
        commands().at(name).first(cfg, run);
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 2;
    } catch (const BudgetExceeded& e) {
        std::cerr << "budget exceeded: " << e.what() << "\n";
        write_outputs(name, flags, config, run, true, e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 2;
    }
    write_outputs(name, flags, config, run, false, "");
    if (!run.failures.empty()) {
        for (const auto& f : run.failures)
            std::cerr << "assertion failed: " << f << "\n";
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"sepkit: source-channel separation experiments"};
    app.require_subcommand(1);
    Flags flags;
    for (const auto& [name, entry] : commands()) {
        auto* sub = app.add_subcommand(name, entry.second);
        auto* cfg = sub->add_option("--config", flags.config, "JSON config document");
        if (name != "verify-all")
            cfg->required();
        sub->add_option("--out", flags.out, "directory for report.json and the CSV table");
        sub->add_option("--seed", flags.seed, "master seed; overrides the config");
        sub->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--budget", flags.budget, "runtime budget in seconds")->check(CLI::NonNegativeNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    for (const auto& [name, entry] : commands())
        if (app.got_subcommand(name))
            return execute(name, flags);
    return 2;
}
