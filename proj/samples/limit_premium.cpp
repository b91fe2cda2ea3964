// Continuous-time limit of the super-replication cost and its premium over
// Black-Scholes, for a few control levels.

#include <cmath>
#include <cstdio>

#include "frictionlab/frictionlab.hpp"

using namespace frictionlab;

int main() {
    const Claim call = Claim::call(100.0);
    const double bs = bs_closed_form(OptionType::call, 100.0, 100.0, 0.2);
    std::printf("Black-Scholes %.6f\n", bs);
    for (double c : {0.01, 0.05, 0.1, 0.25}) {
        const auto zero = LimitSpec::from_penalty(Penalty::truncated_zero(c), 0.2, 100.0);
        const auto quad = LimitSpec::from_penalty(Penalty::truncated_quadratic(1.0, c), 0.2, 100.0);
        const double v0 = hjb_solve(zero, call).value;
        const double vq = hjb_solve(quad, call).value;
        std::printf("c=%.2f  no running cost %.6f (closed form %.6f)  quadratic %.6f\n", c, v0,
                    bs_closed_form(OptionType::call, 100.0, 100.0, std::sqrt(0.2 * (0.2 + 2 * c))), vq);
    }
    return 0;
}
