/**
 * Variational (sensitivity) propagation of the extremal flow: integrates the
 * 10-dimensional state-costate system together with its 10x5 sensitivity to
 * the initial costates, giving shooting Jacobians accurate to the integrator
 * tolerance instead of a finite-difference step.
 *
 * Internal to the library; not installed.
 */

#ifndef LANDER_VARIATIONAL_HPP
#define LANDER_VARIATIONAL_HPP

#include <array>

#include "lander/ode.hpp"

namespace lander {

/// Switching function with its thrust-ratio chain and total gradient with
/// respect to the packed vector (y z vy vz m py pz pvy pvz pm). The steering
/// chain is enveloped away: the theta-derivative of the switching function is
/// the stationarity condition, zero at the solved angle.
struct SwitchingSensitivity {
    double s = 0.0;
    double u = 0.0;
    double du_ds = 0.0;
    std::array<double, 10> grad_s{};
};

SwitchingSensitivity switching_sensitivity(const LanderState& x, const Costate& p,
                                           const VehicleEnv& env,
                                           const RegularizationParams& reg, Mode mode);

/// Endpoint of a sensitivity propagation. Packing order of the 10-vectors
/// matches the integrator: y z vy vz m py pz pvy pvz pm.
struct SensitivityEndpoint {
    std::array<double, 10> y{};  // state and costate at t_final
    std::array<double, 10> f{};  // their time derivative at t_final
    double phi[10][5]{};         // d y(t_final) / d (initial costate)
    double hamiltonian = 0.0;    // H at the endpoint
    double dh_dt = 0.0;          // dH/dt along the flow at the endpoint
    SwitchingSensitivity sw;     // switching sensitivities at the endpoint
};

SensitivityEndpoint propagate_sensitivity(const LanderState& x0, const Costate& p0,
                                          double t_final, const VehicleEnv& env,
                                          const RegularizationParams& reg, Mode mode,
                                          const IntegratorConfig& cfg);

}  // namespace lander

#endif
