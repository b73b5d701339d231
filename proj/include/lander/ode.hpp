/**
 * Adaptive Dormand-Prince 5(4) propagation of the coupled 10-dimensional
 * state-costate system, with dense output for interpolation between steps.
 */

#ifndef LANDER_ODE_HPP
#define LANDER_ODE_HPP

#include <array>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lander/control.hpp"
#include "lander/model.hpp"

namespace lander {

struct IntegratorConfig {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    int max_steps = 500000;
    double initial_step = 0.0;  // 0 selects an automatic estimate

    void validate() const {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
            throw std::domain_error("IntegratorConfig: tolerances must be > 0");
        if (max_steps <= 0)
            throw std::domain_error("IntegratorConfig: max_steps must be > 0");
    }
};

/// Propagation failure carrying the time at which it occurred.
struct PropagationError : std::runtime_error {
    double time;
    PropagationError(const std::string& msg, double t)
        : std::runtime_error(msg + " (at t = " + std::to_string(t) + " s)"), time(t) {}
};

/// Combined control evaluation at a state-costate point: the mode's steering
/// law, the switching function at that angle, and the smoothed thrust ratio.
struct ControlEval {
    ControlSample control;
    double switching;
};

ControlEval evaluate_control(const LanderState& x, const Costate& p, const VehicleEnv& env,
                             const RegularizationParams& reg, Mode mode);

/// Time-sampled extremal: state, costate, control and diagnostics at every
/// accepted integrator step, plus the dense interpolant of each step.
struct Trajectory {
    Mode mode = Mode::Unconstrained;
    VehicleEnv env;
    RegularizationParams reg;

    std::vector<double> times;
    std::vector<LanderState> states;
    std::vector<Costate> costates;
    std::vector<ControlSample> controls;
    std::vector<double> switching_values;
    std::vector<double> hamiltonian_values;
    std::vector<double> delta_values;

    /// Quartic interpolation coefficients of one accepted step.
    struct DenseSegment {
        double t0;
        double h;
        std::array<double, 10> c1, c2, c3, c4, c5;
    };
    std::vector<DenseSegment> segments;

    std::size_t size() const { return times.size(); }
    double final_time() const { return times.back(); }
    const LanderState& final_state() const { return states.back(); }
    const Costate& final_costate() const { return costates.back(); }

    /// State and costate at any t in [0, final_time], via dense output.
    std::pair<LanderState, Costate> sample(double t) const;

    /// Control law re-evaluated at sample(t).
    ControlEval control_at(double t) const;
};

/// Propagates the coupled system on [0, t_final]. At every right-hand-side
/// evaluation theta comes from the mode's steering law and u from the
/// smoothed thrust ratio. Errors (step underflow, max_steps, steering
/// failure, domain violations) surface as PropagationError with the time.
Trajectory propagate(const LanderState& x0, const Costate& p0, double t_final,
                     const VehicleEnv& env, const RegularizationParams& reg, Mode mode,
                     const IntegratorConfig& cfg);

/// Integral of the thrust ratio over the trajectory by per-segment Simpson
/// quadrature on the dense interpolant. Multiplied by T_m/(I_sp g0) this
/// must reproduce the mass drop.
double integrate_thrust_ratio(const Trajectory& traj);

}  // namespace lander

#endif
