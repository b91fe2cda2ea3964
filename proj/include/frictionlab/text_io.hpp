#pragma once

// Plain-text tables for strategies, measures, kappa processes and surfaces.
//
// A table is a block of "#key=value" metadata lines, one comma-separated
// header line and numeric rows. Numbers are written with 17 significant
// digits so that a write/read cycle reproduces every double exactly.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "frictionlab/dual.hpp"
#include "frictionlab/kusuoka.hpp"
#include "frictionlab/primal.hpp"

namespace frictionlab {

struct TextTable {
    std::map<std::string, std::string> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    const std::string& get(const std::string& key) const {
        auto it = meta.find(key);
        detail::require(it != meta.end(), "table: missing #" + key);
        return it->second;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view s, const std::string& where) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw InvalidInput(where + ": cannot parse '" + std::string(s) + "' as a number");
    return v;
}

inline long long as_int(double v, const std::string& where) {
    if (!(std::abs(v) < 9e15) || v != std::floor(v)) throw InvalidInput(where + ": expected an integer");
    return static_cast<long long>(v);
}

inline long long parse_int(std::string_view s, const std::string& where) { return as_int(parse_double(s, where), where); }

inline std::vector<std::string_view> split(std::string_view line, bool any_space) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i <= line.size()) {
        std::size_t j = i;
        while (j < line.size() && line[j] != ',' && !(any_space && (line[j] == ' ' || line[j] == '\t'))) ++j;
        const auto field = trim(line.substr(i, j - i));
        if (!(any_space && field.empty())) out.push_back(field);
        i = j + 1;
    }
    return out;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_header(std::ostream& os, const std::string& format, const std::vector<std::pair<std::string, std::string>>& meta,
                         const std::string& columns) {
    os << "#format=" << format << '\n';
    for (const auto& [k, v] : meta) os << '#' << k << '=' << v << '\n';
    os << columns << '\n';
}

inline void expect(const TextTable& t, const std::string& format, const std::vector<std::string>& columns) {
    detail::require(t.get("format") == format, "table: expected format " + format + ", got " + t.get("format"));
    detail::require(t.columns == columns, "table: unexpected columns for " + format);
}

}  // namespace detail

/// Reads a table; blank lines and lines starting with "# " are skipped.
inline TextTable read_table(std::istream& is) {
    TextTable t;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto s = detail::trim(line);
        if (s.empty()) continue;
        if (s.front() == '#') {
            const auto eq = s.find('=');
            if (eq != std::string_view::npos && s.size() > 1 && s[1] != ' ')
                t.meta[std::string(detail::trim(s.substr(1, eq - 1)))] = std::string(detail::trim(s.substr(eq + 1)));
            continue;
        }
        const auto fields = detail::split(s, false);
        if (t.columns.empty()) {
            for (auto f : fields) t.columns.emplace_back(f);
            continue;
        }
        detail::require(fields.size() == t.columns.size(), "table line " + std::to_string(lineno) + ": expected " +
                                                               std::to_string(t.columns.size()) + " fields");
        std::vector<double> row;
        row.reserve(fields.size());
        for (auto f : fields) row.push_back(detail::parse_double(f, "table line " + std::to_string(lineno)));
        t.rows.push_back(std::move(row));
    }
    detail::require(!t.columns.empty(), "table: no header line");
    return t;
}

/// Two numeric columns separated by commas or whitespace; '#' starts a
/// comment. A non-numeric first line is taken as a header and skipped.
inline std::pair<std::vector<double>, std::vector<double>> read_two_columns(std::istream& is) {
    std::vector<double> a, b;
    std::string line;
    int lineno = 0;
    bool first = true;
    while (std::getline(is, line)) {
        ++lineno;
        auto s = detail::trim(std::string_view(line).substr(0, line.find('#')));
        if (s.empty()) continue;
        const auto fields = detail::split(s, true);
        const std::string where = "two-column file line " + std::to_string(lineno);
        detail::require(fields.size() == 2, where + ": expected 2 fields");
        try {
            const double x = detail::parse_double(fields[0], where);
            const double y = detail::parse_double(fields[1], where);
            a.push_back(x);
            b.push_back(y);
        } catch (const InvalidInput&) {
            if (!first) throw;
        }
        first = false;
    }
    return {std::move(a), std::move(b)};
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    return in;
}

/// Tabulated penalty from a (nu, g) file.
inline Penalty load_penalty_table(const std::string& path, bool price_scaled = false) {
    auto in = open_input(path);
    auto [nu, g] = read_two_columns(in);
    return Penalty::tabulated(std::move(nu), std::move(g), price_scaled);
}

/// Tabulated terminal payoff from a (price, payoff) file.
inline Claim load_payoff_table(const std::string& path) {
    auto in = open_input(path);
    auto [s, f] = read_two_columns(in);
    return Claim::tabulated(std::move(s), std::move(f));
}

// Strategies

inline void write_strategy(std::ostream& os, const Strategy& s) {
    detail::write_header(os, "strategy", {{"n", std::to_string(s.n)}, {"capital", detail::fmt17(s.capital)}}, "node,holding");
    for (std::size_t u = 0; u < s.holdings.size(); ++u) os << u << ',' << detail::fmt17(s.holdings[u]) << '\n';
}

namespace detail {

/// One value per key 0..count-1, every key exactly once, any order.
inline std::vector<double> keyed_values(const TextTable& t, std::size_t count, const std::string& what) {
    std::vector<double> out(count, 0.0);
    std::vector<char> seen(count, 0);
    for (const auto& row : t.rows) {
        const long long key = as_int(row[0], what);
        require(key >= 0 && static_cast<std::size_t>(key) < count, what + ": node id " + std::to_string(key) + " out of range");
        require(!seen[key], what + ": node id " + std::to_string(key) + " appears twice");
        seen[key] = 1;
        out[key] = row[1];
    }
    for (std::size_t i = 0; i < count; ++i) require(seen[i], what + ": node id " + std::to_string(i) + " missing");
    return out;
}

inline int table_n(const TextTable& t) {
    const long long n = parse_int(t.get("n"), "table #n");
    require(n >= 1 && n <= 62, "table: n out of range");
    return static_cast<int>(n);
}

}  // namespace detail

inline Strategy read_strategy(std::istream& is) {
    const auto t = read_table(is);
    detail::expect(t, "strategy", {"node", "holding"});
    Strategy s;
    s.n = detail::table_n(t);
    tree::check_depth(s.n, kExhaustiveCap);
    s.capital = detail::parse_double(t.get("capital"), "strategy #capital");
    s.holdings = detail::keyed_values(t, tree::interior_count(s.n), "strategy");
    return s;
}

// Measures

inline void write_measure(std::ostream& os, const TreeMeasure& m) {
    detail::write_header(os, "tree_measure", {{"n", std::to_string(m.n)}}, "node,q");
    for (std::size_t u = 0; u < m.q.size(); ++u) os << u << ',' << detail::fmt17(m.q[u]) << '\n';
}

inline TreeMeasure read_tree_measure(std::istream& is) {
    const auto t = read_table(is);
    detail::expect(t, "tree_measure", {"node", "q"});
    TreeMeasure m;
    m.n = detail::table_n(t);
    tree::check_depth(m.n, kExhaustiveCap);
    m.q = detail::keyed_values(t, tree::interior_count(m.n), "tree measure");
    m.validate();
    return m;
}

/// Reachable states only: (k, level, last) with last the previous move.
inline void write_measure(std::ostream& os, const LatticeMeasure& m) {
    detail::write_header(os, "lattice_measure", {{"n", std::to_string(m.n)}}, "k,level,last,q");
    for (int k = 0; k < m.n; ++k)
        for (int i = 0; i <= k; ++i)
            for (int last = 0; last <= (k ? 1 : 0); ++last) {
                if (k > 0 && ((i == 0 && last == 1) || (i == k && last == 0))) continue;
                os << k << ',' << 2 * i - k << ',' << last << ',' << detail::fmt17(m.at(k, 2 * i - k, last)) << '\n';
            }
}

inline LatticeMeasure read_lattice_measure(std::istream& is) {
    const auto t = read_table(is);
    detail::expect(t, "lattice_measure", {"k", "level", "last", "q"});
    const int n = detail::table_n(t);
    LatticeMeasure m = LatticeMeasure::constant(n, 0.5);
    std::vector<char> seen(m.q.size(), 0);
    for (const auto& row : t.rows) {
        const long long k = detail::as_int(row[0], "lattice measure k");
        const long long level = detail::as_int(row[1], "lattice measure level");
        const long long last = detail::as_int(row[2], "lattice measure last");
        detail::require(k >= 0 && k < n && std::abs(level) <= k && (level + k) % 2 == 0 && (last == 0 || last == 1),
                        "lattice measure: bad state (" + std::to_string(k) + "," + std::to_string(level) + "," +
                            std::to_string(last) + ")");
        const auto s = LatticeMeasure::slot(static_cast<int>(k), static_cast<int>(level), static_cast<int>(last));
        detail::require(!seen[s], "lattice measure: state listed twice");
        seen[s] = 1;
        m.q[s] = row[3];
    }
    detail::for_each_slot(n, true, [&](int k, std::size_t s, std::size_t, std::size_t) {
        detail::require(seen[s], "lattice measure: a state at time " + std::to_string(k) + " is missing");
    });
    m.validate();
    return m;
}

// Kappa

inline void write_kappa(std::ostream& os, const KappaProcess& kappa) {
    const auto& v = kappa.values();
    if (kappa.is_deterministic()) {
        detail::write_header(os, "kappa_time", {{"n", std::to_string(kappa.n())}}, "k,kappa");
    } else {
        detail::write_header(os, "kappa_node", {{"n", std::to_string(kappa.n())}}, "node,kappa");
    }
    for (std::size_t i = 0; i < v.size(); ++i) os << i << ',' << detail::fmt17(v[i]) << '\n';
}

inline KappaProcess read_kappa(std::istream& is) {
    const auto t = read_table(is);
    const int n = detail::table_n(t);
    if (t.get("format") == "kappa_time") {
        detail::expect(t, "kappa_time", {"k", "kappa"});
        return KappaProcess::deterministic(detail::keyed_values(t, static_cast<std::size_t>(n) + 1, "kappa"));
    }
    detail::expect(t, "kappa_node", {"node", "kappa"});
    tree::check_depth(n, kExhaustiveCap);
    return KappaProcess::per_node(n, detail::keyed_values(t, tree::node_count(n), "kappa"));
}

// Surfaces and reports

/// One row per (state, grid point) of a primal value surface.
inline void write_surface_csv(std::ostream& os, const ValueSurface& s) {
    os << "state,gamma,value\n";
    char buf[96];
    for (std::size_t st = 0; st < s.states; ++st) {
        const auto v = s.at(st);
        for (int j = 0; j < s.grid.m; ++j) {
            std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g\n", st, s.grid.point(j), v[j]);
            os << buf;
        }
    }
}

/// Header plus one record: value, relative gap to the primal (if given),
/// iterations and bookkeeping.
inline void write_dual_record(std::ostream& os, const DualReport& r, std::optional<double> primal = std::nullopt) {
    os << "method,n,value,primal,gap,iterations,starts,evaluations,gradient_norm,certified\n";
    const int n = r.lattice_measure ? r.lattice_measure->n : r.measure.n;
    const double gap = primal ? (*primal - r.value) / std::max(std::abs(*primal), 1e-300) : std::nan("");
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%d,%.12g,%.12g,%.12g,%d,%d,%lld,%.12g,%d\n", r.method.c_str(), n, r.value,
                  primal ? *primal : std::nan(""), gap, r.iterations, r.starts, r.evaluations, r.gradient_norm,
                  r.certified ? 1 : 0);
    os << buf;
}

}  // namespace frictionlab
