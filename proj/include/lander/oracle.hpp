/**
 * Independent cross-checks of the optimality machinery: brute-force grid
 * minimization against the steering solver, finite differences of the
 * Hamiltonian against the analytic adjoint rates, and conservation of the
 * Hamiltonian along computed extremals.
 */

#ifndef LANDER_ORACLE_HPP
#define LANDER_ORACLE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lander/ode.hpp"

namespace lander {

struct OracleReport {
    std::string name;
    double max_error = 0.0;
    std::size_t samples = 0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Draws random altitude/mass/velocity-adjoint points and compares the
/// steering solver's angle against the argmin of the steering objective on a
/// dense uniform angle grid. The error is the worst |theta_star - theta_grid|,
/// bounded by the grid spacing when both land in the same basin.
OracleReport grid_scan_steering(const VehicleEnv& env, const RegularizationParams& reg,
                                std::uint64_t seed, std::size_t n_samples,
                                std::size_t grid_points, double tol);

/// Central finite differences of the Hamiltonian in each state component,
/// at fixed control, versus the analytic adjoint rates. Relative error
/// normalized by max(1, |rate|).
OracleReport fd_costate_check(Mode mode, const VehicleEnv& env,
                              const RegularizationParams& reg, std::uint64_t seed,
                              std::size_t n_points, double tol);

/// Maximum scaled |H| over a trajectory's step points and segment midpoints,
/// with control re-derived from the stored state and costate. An autonomous
/// free-final-time extremal must hold H = 0 throughout.
OracleReport hamiltonian_drift_check(const Trajectory& traj, double tol);

/// Same check over explicit sample arrays, e.g. parsed back from files.
OracleReport hamiltonian_drift_check(const std::vector<LanderState>& states,
                                     const std::vector<Costate>& costates,
                                     const VehicleEnv& env, const RegularizationParams& reg,
                                     Mode mode, double tol);

}  // namespace lander

#endif
