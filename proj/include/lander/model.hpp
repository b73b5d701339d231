/**
 * Planar lunar soft-landing model: state/costate dynamics, Hamiltonians,
 * and the altitude-weighted steering regularization term.
 *
 * Pure functions only; solving logic lives in steering/shooting.
 */

#ifndef LANDER_MODEL_HPP
#define LANDER_MODEL_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace lander {

/// Lander state: ground range y, altitude z, velocities, mass. SI units.
struct LanderState {
    double y;   // horizontal range [m]
    double z;   // altitude [m]
    double vy;  // horizontal speed [m/s]
    double vz;  // vertical speed [m/s]
    double m;   // mass [kg]
};

/// Adjoints paired with (y, z, vy, vz, m).
struct Costate {
    double py;
    double pz;
    double pvy;
    double pvz;
    double pm;
};

/// Engine and gravity constants.
struct VehicleEnv {
    double t_max = 44000.0;  // maximum thrust [N]
    double isp = 311.0;      // specific impulse [s]
    double g_moon = 1.6229;  // lunar gravity [m/s^2]
    double g0 = 9.81;        // Earth sea-level gravity [m/s^2]

    /// Mass flow at full throttle [kg/s].
    double max_mass_flow() const { return t_max / (isp * g0); }

    void validate() const {
        if (!(t_max > 0.0) || !(isp > 0.0) || !(g_moon > 0.0) || !(g0 > 0.0))
            throw std::domain_error("VehicleEnv: all constants must be strictly positive");
    }
};

/// Parameters of the regularization term and the thrust smoothing constant.
/// beta is signed; the nonnegativity of the term at high altitude relies on
/// beta < 0, which is the default.
struct RegularizationParams {
    double beta = -1.0e-2;  // exponent coefficient [1/m]
    double eps = 1.0e-8;    // singularity guard [m]
    double delta = 1.0e-10; // thrust-ratio smoothing constant

    void validate() const {
        if (!(eps > 0.0)) throw std::domain_error("RegularizationParams: eps must be > 0");
        if (!(delta > 0.0)) throw std::domain_error("RegularizationParams: delta must be > 0");
    }
};

/// Thrust ratio u in [0,1] and steering angle theta in [-pi, pi]
/// (angle from the thrust vector to local vertical).
struct ControlSample {
    double u;
    double theta;
};

/// Selects which Hamiltonian, costate field, steering law and switching
/// function the downstream operations use.
enum class Mode {
    Unconstrained,
    VerticalLanding,
};

inline const char* mode_name(Mode mode) {
    return mode == Mode::Unconstrained ? "unconstrained" : "vertical";
}

namespace detail {
inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw std::domain_error(std::string("non-finite ") + what);
}
inline void require_finite_state(const LanderState& x) {
    require_finite(x.y, "state.y");
    require_finite(x.z, "state.z");
    require_finite(x.vy, "state.vy");
    require_finite(x.vz, "state.vz");
    require_finite(x.m, "state.m");
}
inline void require_finite_control(const ControlSample& c) {
    require_finite(c.u, "control.u");
    require_finite(c.theta, "control.theta");
}
}  // namespace detail

/// Time derivative of the state under thrust ratio u and steering angle theta.
/// Returned LanderState holds (dy, dz, dvy, dvz, dm)/dt.
inline LanderState state_dynamics(const LanderState& x, const ControlSample& c,
                                  const VehicleEnv& env) {
    detail::require_finite_state(x);
    detail::require_finite_control(c);
    if (!(x.m > 0.0)) throw std::domain_error("state_dynamics: mass must be positive");

    const double accel = c.u * env.t_max / x.m;
    return LanderState{
        x.vy,
        x.vz,
        accel * std::sin(c.theta),
        -env.g_moon + accel * std::cos(c.theta),
        -c.u * env.t_max / (env.isp * env.g0),
    };
}

namespace detail {
/// Altitude as seen by the regularization. Exact for every z >= -eps/2, a
/// range that includes touchdown itself; below that the evaluation point is
/// frozen so that transient solver iterates which dip under the surface see
/// a large finite weight instead of the pole at z = -eps. Converged
/// trajectories never enter the frozen region.
inline double reg_altitude(double z, const RegularizationParams& reg) {
    const double floor = -0.5 * reg.eps;
    return z > floor ? z : floor;
}
}  // namespace detail

/// Regularization term Delta = exp(beta z) theta^2 / (2 (z + eps)).
/// Nonnegative everywhere; zero iff theta == 0.
inline double regularization_term(double z, double theta, const RegularizationParams& reg) {
    detail::require_finite(z, "z");
    detail::require_finite(theta, "theta");
    const double zc = detail::reg_altitude(z, reg);
    return 0.5 * std::exp(reg.beta * zc) * theta * theta / (zc + reg.eps);
}

/// Partial derivative of the regularization term w.r.t. altitude. Zero in
/// the frozen region below -eps/2.
inline double regularization_term_dz(double z, double theta, const RegularizationParams& reg) {
    const double zc = detail::reg_altitude(z, reg);
    if (z != zc) return 0.0;
    const double zp = zc + reg.eps;
    return 0.5 * theta * theta * std::exp(reg.beta * zc) * (reg.beta * zp - 1.0) / (zp * zp);
}

/// Time derivative of the costates for the selected mode.
///
/// Both modes share dpy = 0, dpv = -p_r, and the mass adjoint rate; vertical
/// landing adds the altitude gradient of the regularization to dpz.
inline Costate costate_dynamics(const LanderState& x, const Costate& p, const ControlSample& c,
                                const VehicleEnv& env, const RegularizationParams& reg,
                                Mode mode) {
    detail::require_finite_state(x);
    detail::require_finite_control(c);
    if (!(x.m > 0.0)) throw std::domain_error("costate_dynamics: mass must be positive");

    Costate dp;
    dp.py = 0.0;
    dp.pz = 0.0;
    if (mode == Mode::VerticalLanding)
        dp.pz = -c.u * regularization_term_dz(x.z, c.theta, reg);
    dp.pvy = -p.py;
    dp.pvz = -p.pz;
    dp.pm = c.u * env.t_max / (x.m * x.m) *
            (p.pvy * std::sin(c.theta) + p.pvz * std::cos(c.theta));
    return dp;
}

/// Hamiltonian of the selected mode. Vertical landing augments the running
/// cost from u to (1 + Delta) u; with theta == 0 it reduces to the
/// unconstrained value.
inline double hamiltonian(const LanderState& x, const Costate& p, const ControlSample& c,
                          const VehicleEnv& env, const RegularizationParams& reg, Mode mode) {
    detail::require_finite_state(x);
    detail::require_finite_control(c);
    if (!(x.m > 0.0)) throw std::domain_error("hamiltonian: mass must be positive");

    const double accel = c.u * env.t_max / x.m;
    double h = p.py * x.vy + p.pz * x.vz;
    h += p.pvy * accel * std::sin(c.theta);
    h += p.pvz * (-env.g_moon + accel * std::cos(c.theta));
    h += p.pm * (-c.u * env.t_max / (env.isp * env.g0));
    double running_cost = c.u;
    if (mode == Mode::VerticalLanding)
        running_cost = (1.0 + regularization_term(x.z, c.theta, reg)) * c.u;
    return h + running_cost;
}

/// Magnitude scale of the Hamiltonian's additive terms, used to express
/// |H| tolerances relative to the size of what is being cancelled.
inline double hamiltonian_term_scale(const LanderState& x, const Costate& p,
                                     const ControlSample& c, const VehicleEnv& env,
                                     const RegularizationParams& reg, Mode mode) {
    const double accel = c.u * env.t_max / x.m;
    double s = std::abs(p.py * x.vy) + std::abs(p.pz * x.vz);
    s += std::abs(p.pvy * accel * std::sin(c.theta));
    s += std::abs(p.pvz * (-env.g_moon + accel * std::cos(c.theta)));
    s += std::abs(p.pm * c.u * env.t_max / (env.isp * env.g0));
    double running_cost = c.u;
    if (mode == Mode::VerticalLanding)
        running_cost = (1.0 + regularization_term(x.z, c.theta, reg)) * c.u;
    s += std::abs(running_cost);
    return s > 1.0 ? s : 1.0;
}

}  // namespace lander

#endif
