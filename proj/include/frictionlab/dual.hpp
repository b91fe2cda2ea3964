#pragma once

// Dual side: maximize over measures on the tree
//   E[F] - E[ sum_k G(k/n, S, E[S_n | F_k] - S_k) ].
// Measures are branch probabilities q per node. Every measure gives a lower
// bound on the super-replication cost; the maximum equals it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "frictionlab/error.hpp"
#include "frictionlab/extended_real.hpp"
#include "frictionlab/friction.hpp"
#include "frictionlab/market_tree.hpp"
#include "frictionlab/parallel.hpp"
#include "frictionlab/payoffs.hpp"
#include "frictionlab/primal.hpp"

namespace frictionlab {

inline constexpr double kProbabilityFloor = 1e-9;
inline constexpr int kBruteForceCap = 3;

/// Up-move probability per interior node of the full tree (heap order).
struct TreeMeasure {
    int n = 0;
    std::vector<double> q;

    static TreeMeasure constant(int n, double value) { return TreeMeasure{n, std::vector<double>(tree::interior_count(n), value)}; }
    static TreeMeasure crr(const MarketParams& p) { return constant(p.n, p.crr_probability()); }

    void validate() const {
        detail::require(n >= 1 && q.size() == tree::interior_count(n), "TreeMeasure: need one q per interior node");
        for (double v : q) detail::require(v >= 0.0 && v <= 1.0, "TreeMeasure: q must lie in [0,1]");
    }
};

/// Up-move probability per lattice state (k, level, last move), k < n.
/// Node-for-node it is a tree measure that only looks at the current price
/// level and the direction of the previous step.
struct LatticeMeasure {
    int n = 0;
    std::vector<double> q;  // indexed by slot(k, level, last)

    /// last = 1 after an up move, 0 after a down move; ignored at k = 0.
    static std::size_t slot(int k, int level, int last) { return 2 * lattice_state(k, level) + (k == 0 ? 0 : last); }
    static std::size_t slot_count(int n) { return 2 * lattice_state_count(n); }

    static LatticeMeasure constant(int n, double value) {
        return LatticeMeasure{n, std::vector<double>(slot_count(n - 1), value)};
    }
    static LatticeMeasure crr(const MarketParams& p) { return constant(p.n, p.crr_probability()); }

    double at(int k, int level, int last) const { return q[slot(k, level, last)]; }

    void validate() const {
        detail::require(n >= 1 && q.size() == slot_count(n - 1), "LatticeMeasure: need two q per state k < n");
        for (double v : q) detail::require(v >= 0.0 && v <= 1.0, "LatticeMeasure: q must lie in [0,1]");
    }

    TreeMeasure to_tree(int cap = kExhaustiveCap) const {
        tree::check_depth(n, cap);
        TreeMeasure out = TreeMeasure::constant(n, 0.5);
        for (std::size_t u = 0; u < out.q.size(); ++u)
            out.q[u] = at(tree::depth(u), tree::level(u), tree::is_up_child(u) ? 1 : 0);
        return out;
    }
};

/// Terminal-mass flows Phi(u) = probability of reaching node u.
struct PhiWeights {
    int n = 0;
    std::vector<double> phi;  // all nodes, heap order, phi[0] = 1
};

struct DualReport {
    double value = 0.0;  // objective of the returned measure: a lower bound on V_n
    TreeMeasure measure;
    std::optional<LatticeMeasure> lattice_measure;
    int iterations = 0;
    double gradient_norm = 0.0;
    int starts = 1;
    long long evaluations = 0;
    bool certified = true;
    std::string method;
};

namespace detail {

struct TreeData {
    std::vector<double> spot;     // every node
    std::vector<double> payoff;   // leaves, index u - first_leaf
    std::vector<BoundPenalty> cost;  // interior nodes
};

inline TreeData tree_data(const MarketParams& params, const Penalty& penalty, const Claim& claim) {
    const int n = params.n;
    TreeData d;
    d.spot.resize(tree::node_count(n));
    for (std::size_t u = 0; u < d.spot.size(); ++u) d.spot[u] = price_at_level(params, tree::level(u));
    const std::size_t first_leaf = tree::index(n, 0);
    d.payoff.resize(std::size_t{1} << n);
    for (std::size_t l = 0; l < d.payoff.size(); ++l) d.payoff[l] = payoff_eval(claim, node_path(params, first_leaf + l));
    d.cost.resize(tree::interior_count(n));
    for (std::size_t u = 0; u < d.cost.size(); ++u)
        d.cost[u] = penalty.bind(node_context(params, tree::depth(u), d.spot[u]));
    return d;
}

inline std::vector<double> tree_martingale(const TreeData& d, const TreeMeasure& m) {
    std::vector<double> M(d.spot.size());
    const std::size_t interior = m.q.size();
    for (std::size_t u = interior; u < M.size(); ++u) M[u] = d.spot[u];
    for (std::size_t u = interior; u-- > 0;)
        M[u] = m.q[u] * M[tree::up_child(u)] + (1.0 - m.q[u]) * M[tree::down_child(u)];
    return M;
}

inline ExtendedReal tree_objective(const TreeData& d, const TreeMeasure& m) {
    const std::vector<double> M = tree_martingale(d, m);
    const std::size_t interior = m.q.size();
    std::vector<double> P(d.spot.size(), 0.0);
    P[0] = 1.0;
    double penalty_sum = 0.0;
    for (std::size_t u = 0; u < interior; ++u) {
        P[tree::up_child(u)] = P[u] * m.q[u];
        P[tree::down_child(u)] = P[u] * (1.0 - m.q[u]);
        if (P[u] == 0.0) continue;
        const ExtendedReal g = d.cost[u].G(M[u] - d.spot[u]);
        if (!g.is_finite()) return ExtendedReal::minus_infinity();
        penalty_sum += P[u] * g.value();
    }
    // Backward form: a claim that is constant below a node stays exact.
    std::vector<double> E(d.spot.size());
    for (std::size_t l = 0; l < d.payoff.size(); ++l) E[interior + l] = d.payoff[l];
    for (std::size_t u = interior; u-- > 0;) {
        const double down = E[tree::down_child(u)];
        E[u] = down + m.q[u] * (E[tree::up_child(u)] - down);
    }
    return E[0] - penalty_sum;
}

/// Ascent direction: d J / d q(u) divided by P(u) (positive rescaling).
inline std::vector<double> tree_direction(const TreeData& d, const TreeMeasure& m) {
    const std::vector<double> M = tree_martingale(d, m);
    const std::size_t interior = m.q.size();
    std::vector<double> V(d.spot.size());
    for (std::size_t l = 0; l < d.payoff.size(); ++l) V[interior + l] = d.payoff[l];
    std::vector<double> slope(interior);
    for (std::size_t u = interior; u-- > 0;) {
        const double y = M[u] - d.spot[u];
        slope[u] = d.cost[u].G_slope(y);
        V[u] = -d.cost[u].G(y).to_double() + m.q[u] * V[tree::up_child(u)] + (1.0 - m.q[u]) * V[tree::down_child(u)];
    }
    std::vector<double> lambda(interior);
    std::vector<double> dir(interior);
    for (std::size_t u = 0; u < interior; ++u) {
        lambda[u] = -slope[u] + (u == 0 ? 0.0 : lambda[tree::parent(u)]);
        const std::size_t a = tree::up_child(u), b = tree::down_child(u);
        dir[u] = V[a] - V[b] + lambda[u] * (M[a] - M[b]);
    }
    return dir;
}

/// Feasible q interval at one node so that M stays in the conjugate's domain
/// given the children's M, intersected with [floor, 1 - floor].
inline std::pair<double, double> feasible_q(const BoundPenalty& cost, double spot, double m_up, double m_down,
                                            double floor) {
    auto [dlo, dhi] = cost.domain();
    const double lo_m = spot + dlo;
    const double hi_m = spot + dhi;
    double qa = 0.0, qb = 1.0;
    const double span = m_up - m_down;
    if (span > 0.0) {
        if (std::isfinite(dlo)) qa = std::max(qa, (lo_m - m_down) / span);
        if (std::isfinite(dhi)) qb = std::min(qb, (hi_m - m_down) / span);
    } else if (span < 0.0) {
        if (std::isfinite(dhi)) qa = std::max(qa, (hi_m - m_down) / span);
        if (std::isfinite(dlo)) qb = std::min(qb, (lo_m - m_down) / span);
    }
    if (qa > qb) return {qa, qb};  // empty
    const double fa = std::max(qa, floor), fb = std::min(qb, 1.0 - floor);
    if (fa <= fb) return {fa, fb};
    return {qa, qb};
}

/// Bottom-up repair: clamps every q into the interval that keeps M inside
/// the conjugate's domain given the (already repaired) subtree.
inline bool tree_repair(const TreeData& d, TreeMeasure& m, double floor) {
    const std::size_t interior = m.q.size();
    std::vector<double> M(d.spot.size());
    for (std::size_t u = interior; u < M.size(); ++u) M[u] = d.spot[u];
    bool ok = true;
    for (std::size_t u = interior; u-- > 0;) {
        const double mu = M[tree::up_child(u)], md = M[tree::down_child(u)];
        auto [a, b] = feasible_q(d.cost[u], d.spot[u], mu, md, floor);
        if (a > b) {
            ok = false;
        } else {
            m.q[u] = std::clamp(m.q[u], a, b);
        }
        M[u] = m.q[u] * mu + (1.0 - m.q[u]) * md;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// Lattice-Markov measures (terminal-price claims). Arrays run over the
// slots of LatticeMeasure for k = 0..n.

struct LatticeData {
    int n = 0;
    std::vector<double> spot;          // every slot
    std::vector<double> payoff;        // levels at k = n, index i
    std::vector<BoundPenalty> cost;    // slots with k < n
};

/// Calls fn(k, slot, up_slot, down_slot) for every reachable slot with
/// k < n, forward in time when forward is true and backward otherwise.
template <class Fn>
void for_each_slot(int n, bool forward, Fn&& fn) {
    for (int step = 0; step < n; ++step) {
        const int k = forward ? step : n - 1 - step;
        for (int i = 0; i <= k; ++i) {
            const int level = 2 * i - k;
            const std::size_t up = LatticeMeasure::slot(k + 1, level + 1, 1);
            const std::size_t down = LatticeMeasure::slot(k + 1, level - 1, 0);
            for (int last = 0; last <= (k == 0 ? 0 : 1); ++last) {
                // The extreme levels are reached by one direction only.
                if (k > 0 && ((i == 0 && last == 1) || (i == k && last == 0))) continue;
                fn(k, LatticeMeasure::slot(k, level, last), up, down);
            }
        }
    }
}

inline std::vector<double> lattice_spots(const MarketParams& params) {
    std::vector<double> spot(LatticeMeasure::slot_count(params.n), 0.0);
    for (int k = 0; k <= params.n; ++k)
        for (int i = 0; i <= k; ++i)
            for (int last = 0; last <= 1; ++last)
                spot[LatticeMeasure::slot(k, 2 * i - k, last)] = price_at_level(params, 2 * i - k);
    return spot;
}

inline LatticeData lattice_data(const MarketParams& params, const Penalty& penalty, const Claim& claim) {
    if (claim.markov_state() != MarkovState::terminal_price)
        throw EngineRefusal(std::string("lattice dual: claim ") + to_string(claim.kind()) + " is not a terminal-price claim");
    const int n = params.n;
    LatticeData d;
    d.n = n;
    d.spot = lattice_spots(params);
    d.payoff.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) d.payoff[i] = claim.terminal(price_at_level(params, 2 * i - n));
    d.cost.resize(LatticeMeasure::slot_count(n - 1));
    for (int k = 0; k < n; ++k)
        for (int i = 0; i <= k; ++i) {
            const BoundPenalty cost = penalty.bind(node_context(params, k, price_at_level(params, 2 * i - k)));
            d.cost[LatticeMeasure::slot(k, 2 * i - k, 0)] = cost;
            d.cost[LatticeMeasure::slot(k, 2 * i - k, 1)] = cost;
        }
    return d;
}

inline void set_terminal(const LatticeData& d, std::vector<double>& out, bool payoff) {
    const int n = d.n;
    for (int i = 0; i <= n; ++i)
        for (int last = 0; last <= 1; ++last) {
            const std::size_t s = LatticeMeasure::slot(n, 2 * i - n, last);
            out[s] = payoff ? d.payoff[i] : d.spot[s];
        }
}

inline std::vector<double> lattice_martingale(const LatticeData& d, const LatticeMeasure& m) {
    std::vector<double> M(d.spot.size(), 0.0);
    set_terminal(d, M, false);
    for_each_slot(d.n, false, [&](int, std::size_t s, std::size_t a, std::size_t b) {
        M[s] = m.q[s] * M[a] + (1.0 - m.q[s]) * M[b];
    });
    return M;
}

inline std::vector<double> lattice_mass(const LatticeData& d, const LatticeMeasure& m) {
    std::vector<double> P(d.spot.size(), 0.0);
    P[0] = 1.0;
    for_each_slot(d.n, true, [&](int, std::size_t s, std::size_t a, std::size_t b) {
        P[a] += P[s] * m.q[s];
        P[b] += P[s] * (1.0 - m.q[s]);
    });
    return P;
}

inline ExtendedReal lattice_objective(const LatticeData& d, const LatticeMeasure& m) {
    const int n = d.n;
    const std::vector<double> M = lattice_martingale(d, m);
    const std::vector<double> P = lattice_mass(d, m);
    double penalty_sum = 0.0;
    bool finite = true;
    for_each_slot(n, true, [&](int, std::size_t s, std::size_t, std::size_t) {
        if (P[s] == 0.0 || !finite) return;
        const ExtendedReal g = d.cost[s].G(M[s] - d.spot[s]);
        if (!g.is_finite()) {
            finite = false;
            return;
        }
        penalty_sum += P[s] * g.value();
    });
    if (!finite) return ExtendedReal::minus_infinity();
    std::vector<double> E(d.spot.size(), 0.0);
    for (int i = 0; i <= n; ++i)
        for (int last = 0; last <= 1; ++last) E[LatticeMeasure::slot(n, 2 * i - n, last)] = d.payoff[i];
    for_each_slot(n, false, [&](int, std::size_t s, std::size_t a, std::size_t b) { E[s] = E[b] + m.q[s] * (E[a] - E[b]); });
    return E[0] - penalty_sum;
}

inline std::vector<double> lattice_direction(const LatticeData& d, const LatticeMeasure& m) {
    const std::vector<double> M = lattice_martingale(d, m);
    const std::vector<double> P = lattice_mass(d, m);
    std::vector<double> V(d.spot.size(), 0.0);
    set_terminal(d, V, true);
    std::vector<double> slope(d.cost.size(), 0.0);
    for_each_slot(d.n, false, [&](int, std::size_t s, std::size_t a, std::size_t b) {
        const double y = M[s] - d.spot[s];
        slope[s] = d.cost[s].G_slope(y);
        V[s] = -d.cost[s].G(y).to_double() + m.q[s] * V[a] + (1.0 - m.q[s]) * V[b];
    });
    // W(s) = P(s) * E[sum of -G' along the path up to s | at s].
    std::vector<double> W(d.spot.size(), 0.0);
    std::vector<double> dir(d.cost.size(), 0.0);
    for_each_slot(d.n, true, [&](int, std::size_t s, std::size_t a, std::size_t b) {
        W[s] += -P[s] * slope[s];
        W[a] += W[s] * m.q[s];
        W[b] += W[s] * (1.0 - m.q[s]);
        const double lam = P[s] > 0.0 ? W[s] / P[s] : 0.0;
        dir[s] = V[a] - V[b] + lam * (M[a] - M[b]);
    });
    return dir;
}

inline bool lattice_repair(const LatticeData& d, LatticeMeasure& m, double floor) {
    std::vector<double> M(d.spot.size(), 0.0);
    set_terminal(d, M, false);
    bool ok = true;
    for_each_slot(d.n, false, [&](int, std::size_t s, std::size_t a, std::size_t b) {
        auto [lo, hi] = feasible_q(d.cost[s], d.spot[s], M[a], M[b], floor);
        if (lo > hi) {
            ok = false;
        } else {
            m.q[s] = std::clamp(m.q[s], lo, hi);
        }
        M[s] = m.q[s] * M[a] + (1.0 - m.q[s]) * M[b];
    });
    return ok;
}

}  // namespace detail

/// M(u) = E_q[S_n | node u] for every node (heap order).
inline std::vector<double> conditional_terminal_expectation(const MarketParams& params, const TreeMeasure& measure) {
    params.validate();
    measure.validate();
    detail::require(measure.n == params.n, "conditional_terminal_expectation: measure built for a different n");
    std::vector<double> M(tree::node_count(params.n));
    const std::size_t interior = measure.q.size();
    for (std::size_t u = interior; u < M.size(); ++u) M[u] = price_at_level(params, tree::level(u));
    for (std::size_t u = interior; u-- > 0;)
        M[u] = measure.q[u] * M[tree::up_child(u)] + (1.0 - measure.q[u]) * M[tree::down_child(u)];
    return M;
}

/// Lattice version, indexed by LatticeMeasure::slot(k, level, last).
inline std::vector<double> conditional_terminal_expectation(const MarketParams& params, const LatticeMeasure& measure) {
    params.validate();
    measure.validate();
    detail::require(measure.n == params.n, "conditional_terminal_expectation: measure built for a different n");
    detail::LatticeData d;
    d.n = params.n;
    d.spot = detail::lattice_spots(params);
    return detail::lattice_martingale(d, measure);
}

/// E_q[F] - E_q[sum_k G(M_k - S_k)]; -inf when a node reached with positive
/// probability leaves the conjugate's domain.
inline ExtendedReal dual_objective(const MarketParams& params, const TreeMeasure& measure, const Penalty& penalty,
                                   const Claim& claim, int cap = kExhaustiveCap) {
    params.validate();
    measure.validate();
    detail::require(measure.n == params.n, "dual_objective: measure built for a different n");
    tree::check_depth(params.n, cap);
    return detail::tree_objective(detail::tree_data(params, penalty, claim), measure);
}

inline ExtendedReal dual_objective(const MarketParams& params, const LatticeMeasure& measure, const Penalty& penalty,
                                   const Claim& claim) {
    params.validate();
    measure.validate();
    detail::require(measure.n == params.n, "dual_objective: measure built for a different n");
    return detail::lattice_objective(detail::lattice_data(params, penalty, claim), measure);
}

/// Gradient of the objective with respect to q (finite objective required).
inline std::vector<double> dual_gradient(const MarketParams& params, const TreeMeasure& measure, const Penalty& penalty,
                                         const Claim& claim) {
    measure.validate();
    const auto d = detail::tree_data(params, penalty, claim);
    std::vector<double> dir = detail::tree_direction(d, measure);
    std::vector<double> P(tree::node_count(params.n), 0.0);
    P[0] = 1.0;
    for (std::size_t u = 0; u < measure.q.size(); ++u) {
        P[tree::up_child(u)] = P[u] * measure.q[u];
        P[tree::down_child(u)] = P[u] * (1.0 - measure.q[u]);
        dir[u] *= P[u];
    }
    return dir;
}

inline std::vector<double> dual_gradient(const MarketParams& params, const LatticeMeasure& measure, const Penalty& penalty,
                                         const Claim& claim) {
    measure.validate();
    const auto d = detail::lattice_data(params, penalty, claim);
    std::vector<double> dir = detail::lattice_direction(d, measure);
    const std::vector<double> P = detail::lattice_mass(d, measure);
    for (std::size_t s = 0; s < dir.size(); ++s) dir[s] *= P[s];
    return dir;
}

// ---------------------------------------------------------------------------
// Flow (Phi) form.

inline PhiWeights phi_from_measure(const TreeMeasure& measure) {
    measure.validate();
    PhiWeights out{measure.n, std::vector<double>(tree::node_count(measure.n), 0.0)};
    out.phi[0] = 1.0;
    for (std::size_t u = 0; u < measure.q.size(); ++u) {
        out.phi[tree::up_child(u)] = out.phi[u] * measure.q[u];
        out.phi[tree::down_child(u)] = out.phi[u] * (1.0 - measure.q[u]);
    }
    return out;
}

/// Inverse of phi_from_measure; q is set to 1/2 below zero-mass nodes.
inline TreeMeasure measure_from_phi(const PhiWeights& phi) {
    TreeMeasure out = TreeMeasure::constant(phi.n, 0.5);
    for (std::size_t u = 0; u < out.q.size(); ++u)
        if (phi.phi[u] > 0.0) out.q[u] = std::clamp(phi.phi[tree::up_child(u)] / phi.phi[u], 0.0, 1.0);
    return out;
}

inline void validate_flows(const PhiWeights& phi, double tol = 1e-12) {
    detail::require(phi.n >= 1 && phi.phi.size() == tree::node_count(phi.n), "PhiWeights: need one weight per node");
    for (double v : phi.phi) detail::require(v >= 0.0 && std::isfinite(v), "PhiWeights: weights must be >= 0");
    detail::require(std::abs(phi.phi[1] + phi.phi[2] - 1.0) <= tol, "PhiWeights: root children must carry mass 1");
    for (std::size_t u = 1; u < tree::interior_count(phi.n); ++u)
        detail::require(std::abs(phi.phi[u] - phi.phi[tree::up_child(u)] - phi.phi[tree::down_child(u)]) <=
                            tol * std::max(1.0, phi.phi[u]),
                        "PhiWeights: flow constraint violated at node " + std::to_string(u));
}

/// sum_leaves Phi F - sum_interior Phi(u) G(sum_{leaves below u} Phi S / Phi(u) - S(u)), with 0/0 = 0.
inline ExtendedReal dual_objective_phi(const MarketParams& params, const PhiWeights& phi, const Penalty& penalty,
                                       const Claim& claim, int cap = kExhaustiveCap) {
    params.validate();
    tree::check_depth(params.n, cap);
    detail::require(phi.n == params.n, "dual_objective_phi: weights built for a different n");
    validate_flows(phi);
    const int n = params.n;
    const std::size_t interior = tree::interior_count(n);
    const std::size_t nodes = tree::node_count(n);
    // Terminal-mass-weighted price below every node, summed over leaves directly.
    std::vector<double> mass(nodes, 0.0), weighted(nodes, 0.0);
    double expected = 0.0;
    for (std::size_t u = interior; u < nodes; ++u) {
        const double s = price_at_level(params, tree::level(u));
        expected += phi.phi[u] * payoff_eval(claim, node_path(params, u));
        for (std::size_t a = u;; a = tree::parent(a)) {
            mass[a] += phi.phi[u];
            weighted[a] += phi.phi[u] * s;
            if (a == 0) break;
        }
    }
    double penalty_sum = 0.0;
    for (std::size_t u = 0; u < interior; ++u) {
        if (phi.phi[u] == 0.0) continue;
        const double s = price_at_level(params, tree::level(u));
        const BoundPenalty cost = penalty.bind(detail::node_context(params, tree::depth(u), s));
        const ExtendedReal g = cost.G(weighted[u] / phi.phi[u] - s);
        if (!g.is_finite()) return ExtendedReal::minus_infinity();
        penalty_sum += phi.phi[u] * g.value();
    }
    return expected - penalty_sum;
}

// ---------------------------------------------------------------------------
// Brute force (n <= 3).

namespace detail {

/// Exhaustive search over theta in [0,1] per node, where the node's q is
/// q_lo + theta (q_hi - q_lo) on the interval that keeps M in the
/// conjugate's domain given the subtree below. Levels refine the theta step
/// (0.1, 0.01, ... down to the requested resolution) in a window around the
/// previous optimum. Subtrees are enumerated as lists of (M, V) options.
class BruteForce {
public:
    BruteForce(const MarketParams& params, const Penalty& penalty, const Claim& claim)
        : n_(params.n), d_(tree_data(params, penalty, claim)) {
        interior_ = tree::interior_count(n_);
        theta_.assign(interior_, std::vector<double>{});
    }

    DualReport run(double resolution) {
        std::vector<double> center(interior_, 0.5);
        const int window = n_ <= 2 ? 10 : 5;
        double step = 0.1;
        bool first = true;
        double best_value = -HUGE_VAL;
        std::vector<double> best_theta(interior_, 0.0);
        int levels = 0;
        while (true) {
            const double st = std::max(step, resolution);
            for (int recenter = 0; recenter < 20; ++recenter) {
                for (std::size_t u = 0; u < interior_; ++u) theta_[u] = first ? full_grid(st) : window_grid(center[u], st, window);
                auto [value, chosen] = solve();
                ++levels;
                if (value > best_value) {
                    best_value = value;
                    best_theta = chosen;
                }
                bool on_edge = false;
                if (!first)
                    for (std::size_t u = 0; u < interior_; ++u) {
                        const double lo = theta_[u].front(), hi = theta_[u].back();
                        const double t = best_theta[u];
                        if ((t == lo && lo > 0.0) || (t == hi && hi < 1.0)) on_edge = true;
                    }
                center = best_theta;
                if (!on_edge) break;
            }
            first = false;
            if (st <= resolution) break;
            step = st / 10.0;
        }
        DualReport rep;
        rep.measure = measure_for(best_theta);
        rep.value = tree_objective(d_, rep.measure).value();
        rep.iterations = levels;
        rep.evaluations = evaluations_;
        rep.method = "brute-force";
        return rep;
    }

private:
    struct Option {
        double M, V, theta;
        int up, down;
    };

    static std::vector<double> full_grid(double step) {
        std::vector<double> g;
        const int k = static_cast<int>(std::lround(1.0 / step));
        for (int i = 0; i <= k; ++i) g.push_back(std::min(1.0, i * step));
        return g;
    }
    static std::vector<double> window_grid(double c, double step, int w) {
        std::vector<double> g;
        for (int i = -w; i <= w; ++i) {
            const double t = c + i * step;
            if (t < -1e-12 || t > 1.0 + 1e-12) continue;
            const double v = std::clamp(t, 0.0, 1.0);
            if (g.empty() || v > g.back()) g.push_back(v);
        }
        return g;
    }

    double q_of(std::size_t u, double theta, double mu, double md) const {
        auto [a, b] = feasible_q(d_.cost[u], d_.spot[u], mu, md, 0.0);
        if (a > b) return -1.0;
        return a + theta * (b - a);
    }

    std::pair<double, std::vector<double>> solve() {
        const std::size_t nodes = tree::node_count(n_);
        std::vector<std::vector<Option>> opts(nodes);
        for (std::size_t u = interior_; u < nodes; ++u) opts[u] = {Option{d_.spot[u], d_.payoff[u - interior_], 0.0, -1, -1}};
        for (std::size_t u = interior_; u-- > 1;) {
            const auto& up = opts[tree::up_child(u)];
            const auto& down = opts[tree::down_child(u)];
            auto& out = opts[u];
            out.reserve((theta_[u].size() + 1) * up.size() * down.size());
            for (int a = 0; a < static_cast<int>(up.size()); ++a)
                for (int b = 0; b < static_cast<int>(down.size()); ++b)
                    for (int t = 0; t <= static_cast<int>(theta_[u].size()); ++t) {
                        Option o{};
                        double theta = 0.0;
                        if (!candidate(u, t, up[a], down[b], theta)) continue;
                        if (eval(u, theta, up[a], down[b], o)) {
                            o.theta = theta;
                            o.up = a;
                            o.down = b;
                            out.push_back(o);
                        }
                    }
        }
        // Root: enumerate without storing.
        const auto& up = opts[2];
        const auto& down = opts[1];
        double best = -HUGE_VAL;
        Option best_root{};
        for (int a = 0; a < static_cast<int>(up.size()); ++a)
            for (int b = 0; b < static_cast<int>(down.size()); ++b)
                for (int t = 0; t <= static_cast<int>(theta_[0].size()); ++t) {
                    Option o{};
                    double theta = 0.0;
                    if (!candidate(0, t, up[a], down[b], theta)) continue;
                    if (eval(0, theta, up[a], down[b], o) && o.V > best) {
                        best = o.V;
                        best_root = o;
                        best_root.theta = theta;
                        best_root.up = a;
                        best_root.down = b;
                    }
                }
        std::vector<double> chosen(interior_, 0.0);
        // Walk the recorded choices back down.
        std::vector<int> pick(nodes, 0);
        chosen[0] = best_root.theta;
        pick[2] = best_root.up;
        pick[1] = best_root.down;
        for (std::size_t u = 1; u < interior_; ++u) {
            const Option& o = opts[u][pick[u]];
            chosen[u] = o.theta;
            pick[tree::up_child(u)] = o.up;
            pick[tree::down_child(u)] = o.down;
        }
        return {best, chosen};
    }

    /// Grid point t, or for t == grid size the point where M equals the spot
    /// (the local martingale choice, so the CRR measure is always a candidate).
    bool candidate(std::size_t u, int t, const Option& up, const Option& down, double& theta) const {
        if (t < static_cast<int>(theta_[u].size())) {
            theta = theta_[u][t];
            return true;
        }
        auto [a, b] = feasible_q(d_.cost[u], d_.spot[u], up.M, down.M, 0.0);
        if (!(b > a) || up.M == down.M) return false;
        const double q = (d_.spot[u] - down.M) / (up.M - down.M);
        if (q < a || q > b) return false;
        theta = (q - a) / (b - a);
        return true;
    }

    bool eval(std::size_t u, double theta, const Option& up, const Option& down, Option& out) {
        ++evaluations_;
        const double q = q_of(u, theta, up.M, down.M);
        if (q < 0.0) return false;
        out.M = q * up.M + (1.0 - q) * down.M;
        const ExtendedReal g = d_.cost[u].G(out.M - d_.spot[u]);
        if (!g.is_finite()) return false;
        out.V = -g.value() + q * up.V + (1.0 - q) * down.V;
        return true;
    }

    TreeMeasure measure_for(const std::vector<double>& theta) const {
        TreeMeasure m = TreeMeasure::constant(n_, 0.5);
        std::vector<double> M(d_.spot.size());
        for (std::size_t u = interior_; u < M.size(); ++u) M[u] = d_.spot[u];
        for (std::size_t u = interior_; u-- > 0;) {
            const double mu = M[tree::up_child(u)], md = M[tree::down_child(u)];
            m.q[u] = std::clamp(q_of(u, theta[u], mu, md), 0.0, 1.0);
            M[u] = m.q[u] * mu + (1.0 - m.q[u]) * md;
        }
        return m;
    }

    int n_;
    TreeData d_;
    std::size_t interior_ = 0;
    std::vector<std::vector<double>> theta_;
    long long evaluations_ = 0;
};

}  // namespace detail

/// Grid search for the dual maximum at tiny n (default cap 3). The returned
/// objective is exact for the returned measure, hence a certified lower bound.
inline DualReport dual_brute_force(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                                   double q_resolution = 1e-3, int cap = kBruteForceCap) {
    params.validate();
    detail::require(q_resolution > 0.0 && q_resolution <= 0.1, "dual_brute_force: resolution must lie in (0, 0.1]");
    tree::check_depth(params.n, cap);
    detail::BruteForce bf(params, penalty, claim);
    return bf.run(q_resolution);
}

// ---------------------------------------------------------------------------
// Projected ascent.

struct AscentOptions {
    int steps = 400;
    int starts = 5;
    double perturbation = 0.05;  // amplitude of the random start offsets around CRR
    std::uint64_t seed = 1;
    double floor = kProbabilityFloor;
    double initial_step = 0.05;
    double tolerance = 1e-13;  // relative improvement that counts as progress
    int threads = 1;
};

namespace detail {

/// Monotone ascent along the rescaled gradient with step halving / doubling.
/// `repair` maps any q vector into the feasible set; `objective` and
/// `direction` evaluate at a feasible point.
template <class Measure, class Objective, class Direction, class Repair>
DualReport ascend(Measure start, const AscentOptions& opt, Objective&& objective, Direction&& direction, Repair&& repair) {
    DualReport rep;
    repair(start);
    ExtendedReal fx = objective(start);
    long long evals = 1;
    if (!fx.is_finite()) throw NumericalFailure("dual ascent: could not make the start feasible");
    double f = fx.value();
    double t = opt.initial_step;
    int stall = 0;
    int it = 0;
    std::vector<double> dir;
    for (; it < opt.steps; ++it) {
        dir = direction(start);
        double scale = 0.0;
        for (double v : dir) {
            if (!std::isfinite(v)) throw NumericalFailure("dual ascent: non-finite gradient");
            scale = std::max(scale, std::abs(v));
        }
        if (scale == 0.0) break;
        bool moved = false;
        while (t > 1e-12) {
            Measure trial = start;
            for (std::size_t i = 0; i < trial.q.size(); ++i)
                trial.q[i] = std::clamp(trial.q[i] + t * dir[i] / scale, opt.floor, 1.0 - opt.floor);
            repair(trial);
            const ExtendedReal ft = objective(trial);
            ++evals;
            if (ft.is_finite() && std::isnan(ft.value())) throw NumericalFailure("dual ascent: objective is NaN");
            if (ft.is_finite() && ft.value() > f) {
                const double gain = ft.value() - f;
                start = std::move(trial);
                f = ft.value();
                t = std::min(2.0 * t, 0.5);
                moved = true;
                stall = gain <= opt.tolerance * std::max(1.0, std::abs(f)) ? stall + 1 : 0;
                break;
            }
            t *= 0.5;
        }
        if (!moved || stall >= 10) break;
    }
    double norm = 0.0;
    for (double v : dir) norm += v * v;
    rep.value = f;
    rep.iterations = it;
    rep.gradient_norm = std::sqrt(norm);
    rep.evaluations = evals;
    if constexpr (std::is_same_v<Measure, TreeMeasure>) {
        rep.measure = std::move(start);
    } else {
        rep.lattice_measure = std::move(start);
    }
    return rep;
}

template <class Measure>
std::vector<Measure> ascent_starts(const Measure& crr, const AscentOptions& opt) {
    std::vector<Measure> starts{crr};
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(-opt.perturbation, opt.perturbation);
    for (int s = 1; s < opt.starts; ++s) {
        Measure m = crr;
        for (double& q : m.q) q = std::clamp(q + u(rng), opt.floor, 1.0 - opt.floor);
        starts.push_back(std::move(m));
    }
    return starts;
}

template <class Measure, class Run>
DualReport best_of_starts(const std::vector<Measure>& starts, int threads, Run&& run) {
    std::vector<DualReport> reports(starts.size());
    parallel_for(threads, starts.size(), [&](std::size_t i) { reports[i] = run(starts[i]); });
    std::size_t best = 0;
    long long evals = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        evals += reports[i].evaluations;
        if (reports[i].value > reports[best].value) best = i;
    }
    DualReport out = std::move(reports[best]);
    out.starts = static_cast<int>(starts.size());
    out.evaluations = evals;
    return out;
}

}  // namespace detail

/// Projected gradient ascent over tree measures with multi-start.
inline DualReport dual_ascent(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                              const AscentOptions& opt = {}, std::optional<TreeMeasure> init = std::nullopt,
                              int cap = kExhaustiveCap) {
    params.validate();
    tree::check_depth(params.n, cap);
    detail::require(opt.starts >= 1 && opt.steps >= 0, "dual_ascent: need starts >= 1 and steps >= 0");
    const auto d = detail::tree_data(params, penalty, claim);
    TreeMeasure base = init ? *init : TreeMeasure::crr(params);
    if (init) {
        base.validate();
        detail::require(base.n == params.n, "dual_ascent: initial measure built for a different n");
    }
    const auto starts = detail::ascent_starts(base, opt);
    DualReport rep = detail::best_of_starts(starts, opt.threads, [&](const TreeMeasure& s) {
        return detail::ascend(
            s, opt, [&](const TreeMeasure& m) { return detail::tree_objective(d, m); },
            [&](const TreeMeasure& m) { return detail::tree_direction(d, m); },
            [&](TreeMeasure& m) { detail::tree_repair(d, m, opt.floor); });
    });
    rep.method = "ascent";
    return rep;
}

/// Ascent restricted to lattice-Markov measures (terminal-price claims, any n).
/// A restricted maximum, so still a lower bound.
inline DualReport dual_ascent_lattice(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                                      const AscentOptions& opt = {}, std::optional<LatticeMeasure> init = std::nullopt) {
    params.validate();
    detail::require(opt.starts >= 1 && opt.steps >= 0, "dual_ascent_lattice: need starts >= 1 and steps >= 0");
    const auto d = detail::lattice_data(params, penalty, claim);
    LatticeMeasure base = init ? *init : LatticeMeasure::crr(params);
    if (init) {
        base.validate();
        detail::require(base.n == params.n, "dual_ascent_lattice: initial measure built for a different n");
    }
    const auto starts = detail::ascent_starts(base, opt);
    DualReport rep = detail::best_of_starts(starts, opt.threads, [&](const LatticeMeasure& s) {
        return detail::ascend(
            s, opt, [&](const LatticeMeasure& m) { return detail::lattice_objective(d, m); },
            [&](const LatticeMeasure& m) { return detail::lattice_direction(d, m); },
            [&](LatticeMeasure& m) { detail::lattice_repair(d, m, opt.floor); });
    });
    rep.method = "lattice-ascent";
    if (params.n <= kExhaustiveCap) rep.measure = rep.lattice_measure->to_tree();
    return rep;
}

}  // namespace frictionlab
