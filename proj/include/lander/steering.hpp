/**
 * Optimal steering angle laws.
 *
 * Unconstrained mode has the closed form i_theta = -p_v/|p_v|. The
 * regularized (vertical landing) mode requires the zeros of a transcendental
 * stationarity equation: the zeros of its theta-derivative are obtained from
 * a quadratic in tan(theta/2), they partition [-pi, pi] into monotone
 * subintervals, each bracketed zero is found by bisection, and the candidate
 * minimizing the theta-dependent Hamiltonian part is selected.
 */

#ifndef LANDER_STEERING_HPP
#define LANDER_STEERING_HPP

#include <vector>

#include "lander/model.hpp"

namespace lander {

/// Raised when the regularized steering solve finds no stationary zero in
/// [-pi, pi]; should not occur for a continuous residual and is surfaced
/// for diagnostics.
struct SteeringError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Result of the regularized steering solve.
struct SteeringSolution {
    double theta_star = 0.0;                 // selected angle [rad]
    double residual = 0.0;                   // stationarity residual at theta_star
    std::vector<double> candidates;          // all zeros found, ascending
    std::vector<double> hamiltonian_values;  // theta-dependent H part per candidate
};

/// Unit thrust direction and angle for the unconstrained law.
struct UnconstrainedSteering {
    double sin_theta;
    double cos_theta;
    double theta;  // atan2(-pvy, -pvz), in (-pi, pi]
};

/// Closed-form unconstrained optimal steering: thrust opposite p_v.
/// Throws std::domain_error on degenerate p_v = 0 (caller decides policy).
UnconstrainedSteering steering_unconstrained(double pvy, double pvz);

/// u-independent stationarity function of the regularized problem:
///   (T_m/m)(pvy cos(theta) - pvz sin(theta)) + exp(beta z) theta/(z+eps).
/// A zero is a candidate optimal steering angle.
double stationarity_residual(double theta, const LanderState& x, const Costate& p,
                             const VehicleEnv& env, const RegularizationParams& reg);

/// Theta-dependent part of the augmented Hamiltonian per unit thrust ratio:
///   (T_m/m)(pvy sin(theta) + pvz cos(theta)) + Delta(z, theta).
/// The selection objective among stationarity zeros.
double steering_objective(double theta, const LanderState& x, const Costate& p,
                          const VehicleEnv& env, const RegularizationParams& reg);

/// Zeros of the theta-derivative of the stationarity function, via the
/// half-angle substitution x = tan(theta/2): real roots of
///   [-pvz - c] x^2 + 2 pvy x + (pvz - c) = 0,  c = m exp(beta z)/(T_m (z+eps)),
/// mapped back by theta = 2 atan(x). Returns 0, 1 or 2 angles in (-pi, pi),
/// ascending. An empty list is valid (derivative has no zero).
std::vector<double> critical_points(const LanderState& x, const Costate& p,
                                    const VehicleEnv& env, const RegularizationParams& reg);

/// Full regularized steering solve: bracket the stationarity zeros between
/// the critical points and the interval endpoints, bisect each bracket to
/// |interval| <= tol, and return the zero minimizing the theta-dependent
/// Hamiltonian part (ties broken by smaller |theta|).
SteeringSolution solve_steering(const LanderState& x, const Costate& p, const VehicleEnv& env,
                                const RegularizationParams& reg, double tol = 1e-12);

}  // namespace lander

#endif
