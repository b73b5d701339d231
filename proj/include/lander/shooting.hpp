/**
 * Two-point boundary value solver. The six shooting unknowns are the initial
 * costates and the flight time; the six residuals are the terminal position
 * and velocity components, the terminal mass adjoint, and the terminal
 * Hamiltonian (free final time). Solved by damped Newton iteration whose
 * Jacobian comes from a variational (sensitivity) propagation, wrapped in a
 * continuation over the thrust smoothing width, and restarted from
 * randomized guesses when needed.
 */

#ifndef LANDER_SHOOTING_HPP
#define LANDER_SHOOTING_HPP

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lander/ode.hpp"

namespace lander {

struct ShootingUnknowns {
    double py0 = 0.0;
    double pz0 = 0.0;
    double pvy0 = 0.0;
    double pvz0 = 0.0;
    double pm0 = 0.0;
    double tf = 1.0;

    Costate costate() const { return {py0, pz0, pvy0, pvz0, pm0}; }
    std::array<double, 6> as_array() const { return {py0, pz0, pvy0, pvz0, pm0, tf}; }
    static ShootingUnknowns from_array(const std::array<double, 6>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5]};
    }
};

struct SolverOptions {
    std::vector<double> delta_schedule = {1e-2, 1e-4, 1e-6, 1e-8, 1e-10};
    double tol = 1e-10;       // scaled residual infinity norm for convergence
    double accept_tol = 1e-7;  // stalled Newton still counts below this norm
    int max_iter = 60;        // Newton iterations per continuation stage
    // Budget of fixed-width solves for the barrier-width walk that retries a
    // stalled VerticalLanding solve from a relaxed problem. 0 disables it.
    int eps_ladder_budget = 40;
    // Newton uses exact Jacobians from the sensitivity propagation; setting
    // fd_jacobian falls back to central differences with step fd_step. The
    // fallback loses the residual components that live in the Jacobian's
    // small singular values and exists for cross-checking, not production.
    bool fd_jacobian = false;
    double fd_step = 1e-7;    // relative Jacobian perturbation
    int n_starts = 16;
    std::uint64_t seed = 20240817;
    double pos_scale = 100.0;  // residual scaling for positions [m]
    double vel_scale = 10.0;   // residual scaling for velocities [m/s]
    double coarse_tol = 1e-10;  // integrator tolerance before the final stage

    void validate() const {
        if (delta_schedule.empty())
            throw std::domain_error("SolverOptions: delta_schedule must be non-empty");
        for (double d : delta_schedule)
            if (!(d > 0.0))
                throw std::domain_error("SolverOptions: delta_schedule entries must be > 0");
        if (!(tol > 0.0)) throw std::domain_error("SolverOptions: tol must be > 0");
        if (!(accept_tol > 0.0))
            throw std::domain_error("SolverOptions: accept_tol must be > 0");
        if (max_iter <= 0) throw std::domain_error("SolverOptions: max_iter must be > 0");
        if (eps_ladder_budget < 0)
            throw std::domain_error("SolverOptions: eps_ladder_budget must be >= 0");
        if (!(fd_step > 0.0)) throw std::domain_error("SolverOptions: fd_step must be > 0");
        if (n_starts <= 0) throw std::domain_error("SolverOptions: n_starts must be > 0");
        if (!(pos_scale > 0.0) || !(vel_scale > 0.0))
            throw std::domain_error("SolverOptions: residual scales must be > 0");
        if (!(coarse_tol > 0.0))
            throw std::domain_error("SolverOptions: coarse_tol must be > 0");
    }
};

/// One landing problem: initial condition, vehicle, mode and numerics.
struct Scenario {
    std::string name;
    LanderState x0{};
    VehicleEnv env;
    RegularizationParams reg;
    Mode mode = Mode::Unconstrained;
    IntegratorConfig integrator;
    SolverOptions solver;
};

struct SolveReport {
    bool converged = false;
    int iterations = 0;     // Newton iterations summed over continuation stages
    int starts_tried = 0;   // only set by the multi-start driver
    double residual_norm = std::numeric_limits<double>::infinity();
    ShootingUnknowns unknowns;
    Trajectory trajectory;  // at the target smoothing width
    double fuel_used = 0.0;
    std::string failure;    // empty when converged
};

/// Raw terminal residuals {y_f, z_f, vy_f, vz_f, pm_f, H_f} for the given
/// unknowns, propagated at the scenario's smoothing width and tolerances.
std::array<double, 6> shooting_residual(const ShootingUnknowns& u, const Scenario& sc);

/// Residuals divided by the position and velocity scales; the adjoint and
/// Hamiltonian components pass through unscaled.
std::array<double, 6> scale_residual(const std::array<double, 6>& raw,
                                     const SolverOptions& opts);

/// Time to kill the initial speed plus the free-fall speed at full thrust,
/// used to seed the flight time.
double heuristic_flight_time(const LanderState& x0, const VehicleEnv& env);

/// Physics-informed deterministic initial guess.
ShootingUnknowns default_guess(const Scenario& sc);

/// Damped Newton at a single smoothing width (the scenario's reg.delta).
SolveReport solve_fixed_delta(const Scenario& sc, const ShootingUnknowns& guess);

/// Continuation over solver.delta_schedule down to the scenario's reg.delta,
/// warm-starting each stage from the previous one. Early stages integrate at
/// coarse_tol, the final stage at the scenario tolerances.
SolveReport solve(const Scenario& sc, const ShootingUnknowns& guess);

/// Multi-start driver: the deterministic guess first (for VerticalLanding, a
/// converged Unconstrained solution when one exists), then seeded random
/// guesses until one converges or n_starts is exhausted.
SolveReport solve_multi_start(const Scenario& sc);

}  // namespace lander

#endif
