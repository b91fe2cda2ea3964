#pragma once

// Explicit martingale measures M(k) = S(k) exp(xi_k kappa(k) / sqrt(n)),
// xi_k the last move (0 at the root), built from a predictable process kappa
// with kappa(n) = 0 so that M(n) = S(n).

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "frictionlab/dual.hpp"

namespace frictionlab {

/// Regularity constants: |kappa| < c - delta, kappa > delta - 1/2,
/// |kappa(k) - kappa(k-1)| <= L / sqrt(n).
struct KappaBounds {
    double c = HUGE_VAL;
    double delta = 0.0;
    double lipschitz = HUGE_VAL;
};

struct KappaCheck {
    bool level = true;
    bool floor = true;
    bool lipschitz = true;
    bool terminal = true;
    double max_abs = 0.0;
    double max_jump = 0.0;  // max |kappa(k) - kappa(k-1)| * sqrt(n)

    bool ok() const { return level && floor && lipschitz && terminal; }
};

/// kappa(k) per node at time k. Either deterministic (a schedule in k) or
/// path-dependent (one value per tree node, equal on siblings).
class KappaProcess {
public:
    static KappaProcess deterministic(std::vector<double> by_time) {
        KappaProcess out;
        out.n_ = static_cast<int>(by_time.size()) - 1;
        out.values_ = std::move(by_time);
        out.deterministic_ = true;
        out.validate();
        return out;
    }
    /// kappa = a for k < n, kappa(n) = 0.
    static KappaProcess constant(int n, double a) {
        detail::require(n >= 1, "KappaProcess: n must be >= 1");
        std::vector<double> v(static_cast<std::size_t>(n) + 1, a);
        v.back() = 0.0;
        return deterministic(std::move(v));
    }
    static KappaProcess per_node(int n, std::vector<double> by_node) {
        KappaProcess out;
        out.n_ = n;
        out.values_ = std::move(by_node);
        out.deterministic_ = false;
        out.validate();
        return out;
    }

    int n() const { return n_; }
    bool is_deterministic() const { return deterministic_; }
    const std::vector<double>& values() const { return values_; }

    double at_time(int k) const {
        detail::require(deterministic_, "KappaProcess: at_time on a path-dependent process");
        return values_.at(static_cast<std::size_t>(k));
    }
    double at_node(std::size_t u) const { return deterministic_ ? values_[tree::depth(u)] : values_.at(u); }

    void validate() const {
        detail::require(n_ >= 1, "KappaProcess: n must be >= 1");
        if (deterministic_) {
            detail::require(values_.size() == static_cast<std::size_t>(n_) + 1, "KappaProcess: need kappa(0..n)");
        } else {
            tree::check_depth(n_, kExhaustiveCap);
            detail::require(values_.size() == tree::node_count(n_), "KappaProcess: need one kappa per tree node");
        }
        for (double v : values_) detail::require(std::isfinite(v), "KappaProcess: kappa must be finite");
        if (deterministic_) {
            detail::require(values_.back() == 0.0, "KappaProcess: kappa(n) must be 0");
            return;
        }
        for (std::size_t u = 1; u < values_.size(); u += 2)
            detail::require(values_[u] == values_[u + 1],
                            "KappaProcess: kappa must be predictable (equal on siblings), node " + std::to_string(u));
        for (std::size_t u = tree::index(n_, 0); u < values_.size(); ++u)
            detail::require(values_[u] == 0.0, "KappaProcess: kappa(n) must be 0");
    }

    KappaCheck check(const KappaBounds& b) const {
        KappaCheck out;
        const double rn = std::sqrt(static_cast<double>(n_));
        auto visit = [&](double v, double prev, bool has_prev, bool terminal) {
            out.max_abs = std::max(out.max_abs, std::abs(v));
            if (!(std::abs(v) < b.c - b.delta)) out.level = false;
            if (!(v > b.delta - 0.5)) out.floor = false;
            if (has_prev) {
                const double jump = std::abs(v - prev) * rn;
                out.max_jump = std::max(out.max_jump, jump);
                if (jump > b.lipschitz) out.lipschitz = false;
            }
            if (terminal && v != 0.0) out.terminal = false;
        };
        if (deterministic_) {
            for (int k = 0; k <= n_; ++k) visit(values_[k], k ? values_[k - 1] : 0.0, k > 0, k == n_);
        } else {
            for (std::size_t u = 0; u < values_.size(); ++u)
                visit(values_[u], u ? values_[tree::parent(u)] : 0.0, u > 0, tree::depth(u) == n_);
        }
        return out;
    }

private:
    int n_ = 0;
    bool deterministic_ = true;
    std::vector<double> values_;
};

struct KusuokaTree {
    TreeMeasure measure;
    std::vector<double> martingale;  // M per node, heap order
    double max_residual = 0.0;       // max |E_q[M(k+1) | node] - M(k)|
};

struct KusuokaLattice {
    LatticeMeasure measure;
    std::vector<double> martingale;  // M per LatticeMeasure slot
    double max_residual = 0.0;
};

namespace detail {

/// Explicit up probability at a node with last move xi, kappa(k) = now and
/// kappa(k+1) = next.
inline double kusuoka_q_formula(const MarketParams& p, int xi, double now, double next) {
    const double rn = std::sqrt(static_cast<double>(p.n));
    const double z = p.log_step() + next / rn;  // log of U * e
    return (std::expm1(xi * now / rn) - std::expm1(-z)) / (2.0 * std::sinh(z));
}

/// The same q as the root of the one-step martingale equation for the stored
/// M values; keeps the identity at rounding level even where M is large.
inline double kusuoka_q(double m, double m_up, double m_down) {
    const long double q = (static_cast<long double>(m) - m_down) / (static_cast<long double>(m_up) - m_down);
    if (!(q > 0.0L && q < 1.0L)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6Lg", q);
        throw InvalidInput(std::string("kusuoka_measure: q = ") + buf + " outside (0,1); n is too small for this kappa");
    }
    return static_cast<double>(q);
}

inline double kusuoka_m(const MarketParams& p, int level, int xi, double kappa) {
    return p.s0 * std::exp((level * p.sigma + xi * kappa) / std::sqrt(static_cast<double>(p.n)));
}

/// |q M_up + (1-q) M_down - M| for the stored doubles, evaluated in extended precision.
inline double martingale_residual(double q, double m_up, double m_down, double m) {
    const long double lq = q;
    return static_cast<double>(std::fabs(lq * m_up + (1.0L - lq) * m_down - static_cast<long double>(m)));
}

}  // namespace detail

inline KusuokaTree kusuoka_measure(const MarketParams& params, const KappaProcess& kappa, int cap = kExhaustiveCap) {
    params.validate();
    kappa.validate();
    detail::require(kappa.n() == params.n, "kusuoka_measure: kappa built for a different n");
    tree::check_depth(params.n, cap);
    const int n = params.n;
    KusuokaTree out;
    out.measure = TreeMeasure::constant(n, 0.5);
    out.martingale.resize(tree::node_count(n));
    auto xi = [](std::size_t u) { return u == 0 ? 0 : (tree::is_up_child(u) ? 1 : -1); };
    for (std::size_t u = 0; u < out.martingale.size(); ++u)
        out.martingale[u] = detail::kusuoka_m(params, tree::level(u), xi(u), kappa.at_node(u));
    for (std::size_t u = 0; u < out.measure.q.size(); ++u) {
        const std::size_t a = tree::up_child(u), b = tree::down_child(u);
        const double q = detail::kusuoka_q(out.martingale[u], out.martingale[a], out.martingale[b]);
        out.measure.q[u] = q;
        out.max_residual = std::max(out.max_residual,
                                    detail::martingale_residual(q, out.martingale[a], out.martingale[b], out.martingale[u]));
    }
    return out;
}

/// Deterministic kappa on the recombining lattice; any n.
inline KusuokaLattice kusuoka_measure_lattice(const MarketParams& params, const KappaProcess& kappa) {
    params.validate();
    kappa.validate();
    detail::require(kappa.n() == params.n, "kusuoka_measure: kappa built for a different n");
    detail::require(kappa.is_deterministic(), "kusuoka_measure_lattice: kappa must depend on time only");
    const int n = params.n;
    KusuokaLattice out;
    out.measure = LatticeMeasure::constant(n, 0.5);
    out.martingale.assign(LatticeMeasure::slot_count(n), 0.0);
    for (int k = 0; k <= n; ++k)
        for (int i = 0; i <= k; ++i)
            for (int last = 0; last <= 1; ++last) {
                const int xi = k == 0 ? 0 : (last ? 1 : -1);
                out.martingale[LatticeMeasure::slot(k, 2 * i - k, last)] =
                    detail::kusuoka_m(params, 2 * i - k, xi, kappa.at_time(k));
            }
    detail::for_each_slot(n, true, [&](int, std::size_t s, std::size_t a, std::size_t b) {
        const double q = detail::kusuoka_q(out.martingale[s], out.martingale[a], out.martingale[b]);
        out.measure.q[s] = q;
        out.max_residual = std::max(out.max_residual,
                                    detail::martingale_residual(q, out.martingale[a], out.martingale[b], out.martingale[s]));
    });
    return out;
}

/// Dual objective under the constant-kappa measure: a lower bound on the
/// super-replication cost. Terminal-price claims use the lattice (any n),
/// others the full tree.
inline ExtendedReal kusuoka_lower_bound(const MarketParams& params, const Penalty& penalty, const Claim& claim, double a) {
    if (auto c = penalty.truncation_level())
        detail::require(std::abs(a) < *c, "kusuoka_lower_bound: need |a| < c of the truncation");
    const auto kappa = KappaProcess::constant(params.n, a);
    if (claim.markov_state() == MarkovState::terminal_price)
        return dual_objective(params, kusuoka_measure_lattice(params, kappa).measure, penalty, claim);
    return dual_objective(params, kusuoka_measure(params, kappa).measure, penalty, claim);
}

}  // namespace frictionlab
