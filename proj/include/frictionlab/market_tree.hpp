#pragma once

// Binomial market geometry: stock prices on the full (non-recombining) tree
// and on the recombining lattice, plus piecewise-linear price paths.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "frictionlab/error.hpp"

namespace frictionlab {

/// Default cap on the number of steps handled by exhaustive-tree engines.
inline constexpr int kExhaustiveCap = 14;

/// The n-step binomial market S(k) = s0 * exp(sigma / sqrt(n) * sum_{i<=k} xi_i).
struct MarketParams {
    int n = 1;
    double sigma = 0.2;
    double s0 = 100.0;

    void validate() const {
        detail::require(n >= 1, "MarketParams: n must be >= 1");
        detail::require(sigma > 0.0 && std::isfinite(sigma), "MarketParams: sigma must be > 0");
        detail::require(s0 > 0.0 && std::isfinite(s0), "MarketParams: s0 must be > 0");
    }

    /// Log-price increment of one up move.
    double log_step() const { return sigma / std::sqrt(static_cast<double>(n)); }
    double up_factor() const { return std::exp(log_step()); }
    double down_factor() const { return std::exp(-log_step()); }

    /// One-step probability making S a martingale (zero interest).
    double crr_probability() const {
        const double u = up_factor();
        const double d = down_factor();
        return (1.0 - d) / (u - d);
    }
};

/// Sequence of moves xi_1..xi_k, every entry +1 or -1.
using PathPrefix = std::vector<int>;

/// Recombining-lattice node: time index k and level = sum of the first k moves.
struct LatticeNode {
    int k = 0;
    int level = 0;

    bool valid_for(int n) const {
        return k >= 0 && k <= n && std::abs(level) <= k && ((k - level) % 2 == 0);
    }
};

inline double stock_price(const MarketParams& params, std::span<const int> moves) {
    detail::require(static_cast<int>(moves.size()) <= params.n, "stock_price: prefix longer than n");
    int sum = 0;
    for (int m : moves) {
        detail::require(m == 1 || m == -1, "stock_price: moves must be +1 or -1");
        sum += m;
    }
    return params.s0 * std::exp(params.log_step() * sum);
}

inline double lattice_price(const MarketParams& params, LatticeNode node) {
    if (!node.valid_for(params.n)) throw InvalidInput("lattice_price: invalid lattice node");
    return params.s0 * std::exp(params.log_step() * node.level);
}

/// Unchecked closed-form price at a given level (hot loops).
inline double price_at_level(const MarketParams& params, int level) {
    return params.s0 * std::exp(params.log_step() * level);
}

/// Continuous price path on [0,1] obtained by linear interpolation of n+1
/// strictly positive knots placed at the times k/n.
class PLPath {
public:
    PLPath() = default;
    explicit PLPath(std::vector<double> knots) : knots_(std::move(knots)) {
        detail::require(knots_.size() >= 2, "PLPath: need at least two knots");
        for (double v : knots_)
            detail::require(v > 0.0 && std::isfinite(v), "PLPath: knots must be strictly positive");
    }

    int steps() const { return static_cast<int>(knots_.size()) - 1; }
    std::span<const double> knots() const { return knots_; }
    double knot(int k) const { return knots_.at(static_cast<std::size_t>(k)); }
    double terminal() const { return knots_.back(); }

    double operator()(double t) const {
        if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("PLPath: t outside [0,1]");
        const int n = steps();
        const double nt = n * t;
        const double nearest = std::round(nt);
        if (std::abs(nt - nearest) <= 1e-12 * std::max(1.0, nt)) return knots_[static_cast<std::size_t>(nearest)];
        const int i = std::min(static_cast<int>(std::floor(nt)), n - 1);
        const double frac = nt - i;
        return (1.0 - frac) * knots_[i] + frac * knots_[i + 1];
    }

    double max() const { return *std::max_element(knots_.begin(), knots_.end()); }

    /// Exact time integral over [0,1] of the piecewise-linear path.
    double average() const {
        const int n = steps();
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += 0.5 * (knots_[k] + knots_[k + 1]);
        return s / n;
    }

    /// Arithmetic mean of the knots (alternate averaging convention).
    double knot_mean() const {
        double s = 0.0;
        for (double v : knots_) s += v;
        return s / static_cast<double>(knots_.size());
    }

private:
    std::vector<double> knots_;
};

inline PLPath interpolate(const MarketParams& params, std::span<const double> values) {
    detail::require(static_cast<int>(values.size()) == params.n + 1, "interpolate: need n+1 values");
    return PLPath(std::vector<double>(values.begin(), values.end()));
}

/// Node bookkeeping for the full binomial tree of depth n.
///
/// Nodes are stored in heap order: the root is 0, the node (k, mask) sits at
/// 2^k - 1 + mask, where the bits of mask read most-significant-first are the
/// moves (1 = up). Children of i are 2i+1 (down) and 2i+2 (up).
namespace tree {

inline std::size_t index(int k, std::uint64_t mask) { return (std::size_t{1} << k) - 1 + mask; }
inline std::size_t node_count(int n) { return (std::size_t{1} << (n + 1)) - 1; }
inline std::size_t interior_count(int n) { return (std::size_t{1} << n) - 1; }
inline std::size_t down_child(std::size_t i) { return 2 * i + 1; }
inline std::size_t up_child(std::size_t i) { return 2 * i + 2; }
inline std::size_t parent(std::size_t i) { return (i - 1) / 2; }
inline int depth(std::size_t i) { return std::bit_width(i + 1) - 1; }
inline std::uint64_t mask(std::size_t i) { return i + 1 - (std::size_t{1} << depth(i)); }
inline bool is_up_child(std::size_t i) { return i > 0 && (i % 2 == 0); }

inline int level(std::size_t i) {
    const int k = depth(i);
    return 2 * std::popcount(mask(i)) - k;
}

inline PathPrefix moves(std::size_t i) {
    const int k = depth(i);
    const std::uint64_t m = mask(i);
    PathPrefix out(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) out[j] = ((m >> (k - 1 - j)) & 1U) ? 1 : -1;
    return out;
}

inline std::size_t from_moves(std::span<const int> moves) {
    std::uint64_t m = 0;
    for (int mv : moves) m = 2 * m + (mv > 0 ? 1U : 0U);
    return index(static_cast<int>(moves.size()), m);
}

inline void check_depth(int n, int cap) {
    if (n > cap)
        throw EngineRefusal("exhaustive tree engine: n=" + std::to_string(n) + " exceeds cap " +
                            std::to_string(cap));
}

}  // namespace tree

/// Price knots of the path through node i, frozen after the node's depth
/// (the stopped path used for costs at intermediate times).
inline std::vector<double> stopped_knots(const MarketParams& params, std::size_t i) {
    const PathPrefix mv = tree::moves(i);
    std::vector<double> knots(static_cast<std::size_t>(params.n) + 1);
    int sum = 0;
    knots[0] = params.s0;
    for (int k = 1; k <= params.n; ++k) {
        if (k <= static_cast<int>(mv.size())) sum += mv[k - 1];
        knots[k] = price_at_level(params, sum);
    }
    return knots;
}

inline PLPath node_path(const MarketParams& params, std::size_t i) { return PLPath(stopped_knots(params, i)); }

}  // namespace frictionlab
