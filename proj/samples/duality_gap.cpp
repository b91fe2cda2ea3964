// Primal cost against the best martingale measure found by grid search
// (n <= 3) and by projected ascent.

#include <cstdio>

#include "frictionlab/frictionlab.hpp"

using namespace frictionlab;

int main() {
    const Penalty cost = Penalty::truncated_quadratic(0.5, 0.25);
    const Claim call = Claim::call(100.0);
    for (int n = 1; n <= 8; ++n) {
        const MarketParams market{n, 0.2, 100.0};
        const double primal = superrep_exact(market, cost, call, GammaGrid{-0.5, 1.5, 401}).value;
        const auto dual = n <= 3 ? dual_brute_force(market, cost, call) : dual_ascent(market, cost, call);
        std::printf("n=%d  primal %.6f  dual %.6f  gap %.1e  (%s)\n", n, primal, dual.value, (primal - dual.value) / primal,
                    dual.method.c_str());
    }
    return 0;
}
