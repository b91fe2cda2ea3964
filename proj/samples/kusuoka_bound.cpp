// Lower bounds from the constant-kappa measures, against the closed form
// for a constant control.

#include <cstdio>

#include "frictionlab/frictionlab.hpp"

using namespace frictionlab;

int main() {
    const Penalty cost = Penalty::quadratic(1.0);
    const Claim call = Claim::call(100.0);
    for (double a : {0.0, 0.025, 0.05}) {
        std::printf("a=%.3f  closed form %.6f\n", a, j_constant_alpha(a, 1.0, 0.2, 100.0, 100.0));
        for (int n : {16, 64, 256}) {
            const MarketParams market{n, 0.2, 100.0};
            const auto k = kusuoka_measure_lattice(market, KappaProcess::constant(n, a));
            std::printf("  n=%-4d bound %.6f  residual %.1e\n", n, kusuoka_lower_bound(market, cost, call, a).value(),
                        k.max_residual);
        }
    }
    return 0;
}
