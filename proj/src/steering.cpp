#include "lander/steering.hpp"

#include <algorithm>
#include <cmath>

namespace lander {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Combined weight of the regularization gradient, exp(beta z)/(z+eps),
/// evaluated at the same frozen-below-surface altitude the model uses so
/// that steering and regularization stay consistent.
double reg_weight(double z, const RegularizationParams& reg) {
    const double zc = detail::reg_altitude(z, reg);
    return std::exp(reg.beta * zc) / (zc + reg.eps);
}

/// Stable quadratic solve a x^2 + b x + c = 0; real roots appended to out.
void solve_quadratic(double a, double b, double c, std::vector<double>& out) {
    if (a == 0.0) {
        if (b != 0.0) out.push_back(-c / b);
        return;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return;
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + std::copysign(sq, b));
    if (q == 0.0) {
        // b == 0 and disc == 0 (c == 0): double root at zero
        out.push_back(0.0);
        return;
    }
    out.push_back(q / a);
    out.push_back(c / q);
}

}  // namespace

UnconstrainedSteering steering_unconstrained(double pvy, double pvz) {
    detail::require_finite(pvy, "pvy");
    detail::require_finite(pvz, "pvz");
    const double norm = std::hypot(pvy, pvz);
    if (norm == 0.0)
        throw std::domain_error("steering_unconstrained: degenerate costate p_v = 0");
    return UnconstrainedSteering{-pvy / norm, -pvz / norm, std::atan2(-pvy, -pvz)};
}

double stationarity_residual(double theta, const LanderState& x, const Costate& p,
                             const VehicleEnv& env, const RegularizationParams& reg) {
    if (!(x.m > 0.0)) throw std::domain_error("stationarity_residual: mass must be positive");
    const double w = reg_weight(x.z, reg);
    return env.t_max / x.m * (p.pvy * std::cos(theta) - p.pvz * std::sin(theta)) + w * theta;
}

double steering_objective(double theta, const LanderState& x, const Costate& p,
                          const VehicleEnv& env, const RegularizationParams& reg) {
    return env.t_max / x.m * (p.pvy * std::sin(theta) + p.pvz * std::cos(theta)) +
           regularization_term(x.z, theta, reg);
}

std::vector<double> critical_points(const LanderState& x, const Costate& p,
                                    const VehicleEnv& env, const RegularizationParams& reg) {
    if (!(x.m > 0.0)) throw std::domain_error("critical_points: mass must be positive");
    const double c = x.m * reg_weight(x.z, reg) / env.t_max;

    std::vector<double> roots;
    solve_quadratic(-p.pvz - c, 2.0 * p.pvy, p.pvz - c, roots);

    std::vector<double> thetas;
    for (double r : roots) {
        if (!std::isfinite(r)) continue;
        const double theta = 2.0 * std::atan(r);
        if (theta > -kPi && theta < kPi) thetas.push_back(theta);
    }
    std::sort(thetas.begin(), thetas.end());
    thetas.erase(std::unique(thetas.begin(), thetas.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-15; }),
                 thetas.end());
    return thetas;
}

SteeringSolution solve_steering(const LanderState& x, const Costate& p, const VehicleEnv& env,
                                const RegularizationParams& reg, double tol) {
    if (!(tol > 0.0)) throw std::domain_error("solve_steering: tol must be > 0");

    const auto residual = [&](double theta) {
        return stationarity_residual(theta, x, p, env, reg);
    };
    const double w = reg_weight(x.z, reg);
    const auto residual_slope = [&](double theta) {
        return env.t_max / x.m * (-p.pvy * std::sin(theta) - p.pvz * std::cos(theta)) + w;
    };
    // Bisection alone leaves |f(theta)| ~ slope * tol, which near the surface
    // (slope ~ 1/eps) is far from a numerical zero; a few guarded Newton
    // steps take each bracketed zero to evaluation precision.
    const auto polish = [&](double theta, double lo, double hi) {
        double best = theta;
        double fbest = std::abs(residual(theta));
        for (int it = 0; it < 4 && fbest > 0.0; ++it) {
            const double d = residual_slope(theta);
            if (d == 0.0) break;
            double next = theta - residual(theta) / d;
            if (!(next > lo) || !(next < hi)) break;
            const double fn = std::abs(residual(next));
            if (fn < fbest) {
                best = next;
                fbest = fn;
            }
            theta = next;
        }
        return best;
    };

    // Partition [-pi, pi] at the derivative zeros; the residual is monotone
    // on each subinterval, so a sign change brackets exactly one zero.
    std::vector<double> knots;
    knots.push_back(-kPi);
    for (double t : critical_points(x, p, env, reg)) knots.push_back(t);
    knots.push_back(kPi);

    std::vector<double> zeros;
    std::vector<double> zero_residuals;
    double fa = residual(knots.front());
    if (fa == 0.0) {
        zeros.push_back(knots.front());
        zero_residuals.push_back(0.0);
    }
    for (std::size_t i = 1; i < knots.size(); ++i) {
        double a = knots[i - 1];
        double b = knots[i];
        double fb = residual(b);
        if (fb == 0.0) {
            zeros.push_back(b);
            zero_residuals.push_back(0.0);
        } else if (fa != 0.0 && std::signbit(fa) != std::signbit(fb)) {
            double lo = a, hi = b, flo = fa;
            while (hi - lo > tol) {
                const double mid = 0.5 * (lo + hi);
                const double fm = residual(mid);
                if (fm == 0.0) {
                    lo = hi = mid;
                    break;
                }
                if (std::signbit(fm) == std::signbit(flo)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            const double theta = polish(0.5 * (lo + hi), a, b);
            zeros.push_back(theta);
            zero_residuals.push_back(residual(theta));
        }
        fa = fb;
    }

    if (zeros.empty())
        throw SteeringError("solve_steering: no stationarity zero found in [-pi, pi]");

    SteeringSolution sol;
    sol.candidates = zeros;
    sol.hamiltonian_values.reserve(zeros.size());
    for (double theta : zeros)
        sol.hamiltonian_values.push_back(steering_objective(theta, x, p, env, reg));

    std::size_t best = 0;
    for (std::size_t i = 1; i < zeros.size(); ++i) {
        const double hi = sol.hamiltonian_values[i];
        const double hb = sol.hamiltonian_values[best];
        if (hi < hb || (hi == hb && std::abs(zeros[i]) < std::abs(zeros[best]))) best = i;
    }
    sol.theta_star = zeros[best];
    sol.residual = zero_residuals[best];
    return sol;
}

}  // namespace lander
