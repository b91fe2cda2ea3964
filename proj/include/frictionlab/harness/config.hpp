#pragma once

// Experiment configuration: a JSON document with a schema_version field.
// Environment variables FRICTIONLAB_<SECTION>__<KEY>=<value> override
// entries before the document is interpreted, e.g.
//   FRICTIONLAB_MARKET__SIGMA=0.3   FRICTIONLAB_SEED=7   FRICTIONLAB_MARKET__N=[8,16]
// A value that parses as JSON is taken as such, anything else as a string.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "frictionlab/limit_pde.hpp"
#include "frictionlab/primal.hpp"
#include "frictionlab/text_io.hpp"

extern char** environ;

namespace frictionlab::harness {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kEnvPrefix = "FRICTIONLAB_";

using json = nlohmann::json;

struct PenaltySpec {
    std::string kind = "quadratic";  // quadratic, proportional, zero, power, tabulated
    double lambda = 1.0;
    double c = 0.0;                  // proportional level
    double gamma = 2.0;
    std::optional<double> truncation;
    std::string table;               // (nu, g) file for tabulated
    bool price_scaled = false;
};

struct ClaimSpec {
    std::string kind = "call";  // constant, call, put, asian_call, asian_put, lookback_max, tabulated
    double strike = 100.0;
    std::string table;          // (price, payoff) file for tabulated
};

struct Thresholds {
    double duality_gap = 1e-3;       // relative
    double convergence_gap = 0.02;   // relative, final row
    double ordering = 1e-6;          // dual, Kusuoka <= primal + this
    double verify_slack = -1e-8;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::vector<int> n{8};
    double sigma = 0.2;
    double s0 = 100.0;
    PenaltySpec penalty;
    ClaimSpec claim;
    std::string engine = "auto";  // auto, exact, lattice
    std::optional<GammaGrid> gamma;
    int average_buckets = 101;
    int hjb_nx = 801;
    int hjb_nt = 0;
    bool hjb_scan = false;
    int hjb_na = 201;
    int hjb_store_every = 0;
    double q_resolution = 1e-3;
    std::string dual_method = "auto";  // auto, brute, ascent, none
    AscentOptions ascent;
    std::optional<double> kusuoka_a;
    double premium_eps = 0.05;
    std::optional<double> limit_c;  // control level for the limit when the penalty is untruncated
    Thresholds thresholds;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir = ".";
    std::string strategy_file;      // verify: strategy to audit (empty: solve for it)
    std::string base_dir = ".";     // directory of the config file, for relative table paths

    MarketParams market(int steps) const { return MarketParams{steps, sigma, s0}; }

    std::string resolve(const std::string& path) const {
        if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
        return (std::filesystem::path(base_dir) / path).string();
    }

    Penalty make_penalty() const {
        const auto& p = penalty;
        Penalty out = [&] {
            if (p.kind == "quadratic") return Penalty::quadratic(p.lambda);
            if (p.kind == "proportional") return Penalty::proportional(p.c);
            if (p.kind == "zero") {
                detail::require(p.truncation.has_value(), "config: penalty 'zero' needs a truncation level");
                return Penalty::truncated_zero(*p.truncation);
            }
            if (p.kind == "power") return Penalty::power(p.gamma);
            if (p.kind == "tabulated") return load_penalty_table(resolve(p.table), p.price_scaled);
            throw InvalidInput("config: unknown penalty kind '" + p.kind + "'");
        }();
        if (p.truncation && p.kind != "zero") out = truncate(out, *p.truncation);
        return out;
    }

    Claim make_claim() const {
        const auto& c = claim;
        if (c.kind == "constant") return Claim::constant(c.strike);
        if (c.kind == "call") return Claim::call(c.strike);
        if (c.kind == "put") return Claim::put(c.strike);
        if (c.kind == "asian_call") return Claim::asian_call(c.strike);
        if (c.kind == "asian_put") return Claim::asian_put(c.strike);
        if (c.kind == "lookback_max") return Claim::lookback_max(c.strike);
        if (c.kind == "tabulated") return load_payoff_table(resolve(c.table));
        throw InvalidInput("config: unknown claim kind '" + c.kind + "'");
    }

    GammaGrid gamma_grid(const Claim& c) const { return gamma ? *gamma : GammaGrid::for_claim(c); }

    PrimalOptions primal_options() const {
        PrimalOptions o;
        o.threads = threads;
        o.average_buckets = average_buckets;
        return o;
    }

    AscentOptions ascent_options() const {
        AscentOptions o = ascent;
        o.seed = seed;
        o.threads = threads;
        return o;
    }

    LimitSpec limit_spec() const { return LimitSpec::from_penalty(make_penalty(), sigma, s0, limit_c); }

    HJBGrid hjb_grid(const LimitSpec& spec) const {
        HJBGrid g = HJBGrid::around(spec, hjb_nx);
        g.nt = hjb_nt;
        g.scan_controls = hjb_scan;
        g.na = hjb_na;
        g.store_every = hjb_store_every;
        g.threads = threads;
        return g;
    }

    bool use_lattice(int steps, const Claim& c) const {
        if (engine == "lattice") return true;
        if (engine == "exact") return false;
        return steps > kExhaustiveCap || c.markov_state() != MarkovState::full_path;
    }

    void validate() const {
        detail::require(schema_version == kSchemaVersion,
                        "config: schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                            std::to_string(kSchemaVersion) + ")");
        detail::require(!n.empty(), "config: market.n must be a nonempty list");
        for (std::size_t i = 0; i < n.size(); ++i) {
            detail::require(n[i] >= 1, "config: market.n entries must be >= 1");
            if (i) detail::require(n[i] > n[i - 1], "config: market.n must be increasing");
        }
        market(n.front()).validate();
        detail::require(engine == "auto" || engine == "exact" || engine == "lattice", "config: engine must be auto, exact or lattice");
        detail::require(dual_method == "auto" || dual_method == "brute" || dual_method == "ascent" || dual_method == "none",
                        "config: dual.method must be auto, brute, ascent or none");
        if (gamma) gamma->validate();
        detail::require(average_buckets >= 2, "config: average_buckets must be >= 2");
        detail::require(hjb_nx >= 5 && hjb_nt >= 0 && hjb_na >= 2 && hjb_store_every >= 0, "config: bad hjb grid");
        detail::require(q_resolution > 0.0 && q_resolution <= 0.1, "config: q_resolution must lie in (0, 0.1]");
        detail::require(ascent.starts >= 1 && ascent.steps >= 0, "config: dual.starts >= 1 and dual.steps >= 0");
        detail::require(premium_eps >= 0.0, "config: premium.eps must be >= 0");
        detail::require(threads >= 1, "config: threads must be >= 1");
        detail::require(thresholds.duality_gap >= 0.0 && thresholds.convergence_gap >= 0.0 && thresholds.ordering >= 0.0,
                        "config: thresholds must be >= 0");
        make_penalty();
        make_claim();
    }
};

namespace json_io {

/// Strict reader: unknown keys are errors so that typos do not pass silently.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        frictionlab::detail::require(j.is_object(), "config: " + where_ + " must be an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw InvalidInput("config: unknown key '" + prefix() + it.key() + "'");
    }
    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw InvalidInput("config: '" + prefix() + key + "' has the wrong type");
        }
    }
    template <class T>
    void get(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }
    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }
    Reader child(const char* key) {
        seen_.insert(key);
        return Reader(j_.at(key), prefix() + key);
    }

private:
    std::string prefix() const { return where_.empty() ? "" : where_ + "."; }
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

inline std::string to_lower(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

}  // namespace json_io

/// Applies FRICTIONLAB_* variables from env (name=value strings) to j.
inline void apply_env_overrides(json& j, const std::vector<std::string>& env) {
    const std::string prefix = kEnvPrefix;
    for (const auto& entry : env) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || entry.compare(0, prefix.size(), prefix) != 0) continue;
        const std::string name = json_io::to_lower(entry.substr(prefix.size(), eq - prefix.size()));
        const std::string raw = entry.substr(eq + 1);
        if (name.empty()) continue;
        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;
        json* node = &j;
        std::size_t start = 0;
        for (;;) {
            const auto sep = name.find("__", start);
            const std::string key = name.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
            if (sep == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
            node = &(*node)[key];
            start = sep + 2;
        }
    }
}

inline std::vector<std::string> process_environment() {
    std::vector<std::string> out;
    for (char** e = environ; e && *e; ++e) out.emplace_back(*e);
    return out;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    json_io::Reader r(j, "");
    r.get("schema_version", c.schema_version);
    if (r.has("market")) {
        auto m = r.child("market");
        if (j.at("market").contains("n") && j.at("market").at("n").is_number_integer()) {
            int single = 0;
            m.get("n", single);
            c.n = {single};
        } else {
            m.get("n", c.n);
        }
        m.get("sigma", c.sigma);
        m.get("s0", c.s0);
    }
    if (r.has("penalty")) {
        auto p = r.child("penalty");
        p.get("kind", c.penalty.kind);
        p.get("lambda", c.penalty.lambda);
        p.get("c", c.penalty.c);
        p.get("gamma", c.penalty.gamma);
        p.get("truncation", c.penalty.truncation);
        p.get("table", c.penalty.table);
        p.get("price_scaled", c.penalty.price_scaled);
    }
    if (r.has("claim")) {
        auto cl = r.child("claim");
        cl.get("kind", c.claim.kind);
        cl.get("strike", c.claim.strike);
        cl.get("table", c.claim.table);
    }
    r.get("engine", c.engine);
    if (r.has("grids")) {
        auto g = r.child("grids");
        if (g.has("gamma")) {
            auto gg = g.child("gamma");
            GammaGrid grid;
            gg.get("lo", grid.lo);
            gg.get("hi", grid.hi);
            gg.get("m", grid.m);
            c.gamma = grid;
        }
        g.get("average_buckets", c.average_buckets);
        g.get("q_resolution", c.q_resolution);
        if (g.has("hjb")) {
            auto h = g.child("hjb");
            h.get("nx", c.hjb_nx);
            h.get("nt", c.hjb_nt);
            h.get("scan_controls", c.hjb_scan);
            h.get("na", c.hjb_na);
            h.get("store_every", c.hjb_store_every);
        }
    }
    if (r.has("dual")) {
        auto d = r.child("dual");
        d.get("method", c.dual_method);
        d.get("steps", c.ascent.steps);
        d.get("starts", c.ascent.starts);
        d.get("perturbation", c.ascent.perturbation);
        d.get("initial_step", c.ascent.initial_step);
    }
    r.get("kusuoka_a", c.kusuoka_a);
    r.get("limit_c", c.limit_c);
    if (r.has("premium")) {
        auto p = r.child("premium");
        p.get("eps", c.premium_eps);
    }
    if (r.has("thresholds")) {
        auto t = r.child("thresholds");
        t.get("duality_gap", c.thresholds.duality_gap);
        t.get("convergence_gap", c.thresholds.convergence_gap);
        t.get("ordering", c.thresholds.ordering);
        t.get("verify_slack", c.thresholds.verify_slack);
    }
    r.get("seed", c.seed);
    r.get("threads", c.threads);
    if (r.has("output")) {
        auto o = r.child("output");
        o.get("dir", c.out_dir);
        o.get("strategy", c.strategy_file);
    }
    return c;
}

/// Parses text, applies environment overrides and validates.
inline ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& env = {},
                                     const std::string& base_dir = ".") {
    json j = json::parse(text, nullptr, false, true);
    if (j.is_discarded()) throw InvalidInput("config: not valid JSON");
    detail::require(j.is_object(), "config: top level must be an object");
    detail::require(j.contains("schema_version"), "config: schema_version is required");
    apply_env_overrides(j, env);
    ExperimentConfig c = config_from_json(j);
    c.base_dir = base_dir;
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& env) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config " + path);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config(text, env, dir.empty() ? "." : dir.string());
}

}  // namespace frictionlab::harness
