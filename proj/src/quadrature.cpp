#include "flowrecon/quadrature.hpp"

#include "flowrecon/error.hpp"

#include <cmath>
#include <numbers>

namespace flowrecon {

QuadratureRule gauss_legendre_unit(int n)
{
    if (n < 1) {
        throw InvalidArgument("quadrature order must be >= 1");
    }
    QuadratureRule rule{std::vector<double>(n), std::vector<double>(n)};
    // Newton iteration on P_n from the Chebyshev-like initial guess; roots are symmetric.
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double pn = n == 1 ? x : p1;
            const double pnm1 = n == 1 ? 1.0 : p0;
            dp = n * (x * pn - pnm1) / (x * x - 1.0);
            const double dx = pn / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        rule.nodes[i] = 0.5 * (1.0 - x);
        rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
        rule.weights[i] = rule.weights[n - 1 - i] = 0.5 * w;
    }
    return rule;
}

} // namespace flowrecon
