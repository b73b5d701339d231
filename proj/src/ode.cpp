#include "lander/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lander/steering.hpp"
#include "variational.hpp"

namespace lander {

namespace {

using Vec = std::array<double, 10>;

// Packing order: y z vy vz m py pz pvy pvz pm.
Vec pack(const LanderState& x, const Costate& p) {
    return {x.y, x.z, x.vy, x.vz, x.m, p.py, p.pz, p.pvy, p.pvz, p.pm};
}

LanderState state_of(const Vec& v) { return {v[0], v[1], v[2], v[3], v[4]}; }
Costate costate_of(const Vec& v) { return {v[5], v[6], v[7], v[8], v[9]}; }

// Dormand-Prince 5(4) tableau with the Hairer dense-output weights.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0;
constexpr double a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0;
constexpr double a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0;
constexpr double a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0;
constexpr double e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

// Step size controller constants.
constexpr double kSafe = 0.9;
constexpr double kBeta = 0.04;
constexpr double kFacl = 0.2;   // max shrink factor per step
constexpr double kFacr = 10.0;  // max growth factor per step
constexpr double kExpo1 = 0.2 - kBeta * 0.75;

struct System {
    VehicleEnv env;
    RegularizationParams reg;
    Mode mode;

    // Derivative of the packed vector under the mode's feedback control.
    // Model-level domain violations surface tagged with the evaluation time.
    void operator()(double t, const Vec& v, Vec& f) const {
        try {
            const LanderState x = state_of(v);
            const Costate p = costate_of(v);
            const ControlEval ce = evaluate_control(x, p, env, reg, mode);
            const LanderState xd = state_dynamics(x, ce.control, env);
            const Costate pd = costate_dynamics(x, p, ce.control, env, reg, mode);
            f = {xd.y, xd.z, xd.vy, xd.vz, xd.m, pd.py, pd.pz, pd.pvy, pd.pvz, pd.pm};
        } catch (const PropagationError&) {
            throw;
        } catch (const std::exception& e) {
            throw PropagationError(std::string("right-hand side failed: ") + e.what(), t);
        }
    }
};

// Starting step estimate from the local derivative magnitudes.
double initial_step_guess(const System& sys, double t0, const Vec& y0, const Vec& f0,
                          double hmax, double atol, double rtol) {
    double dnf = 0.0, dny = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double sk = atol + rtol * std::fabs(y0[i]);
        dnf += (f0[i] / sk) * (f0[i] / sk);
        dny += (y0[i] / sk) * (y0[i] / sk);
    }
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);

    Vec y1, f1;
    for (int i = 0; i < 10; ++i) y1[i] = y0[i] + h * f0[i];
    sys(t0 + h, y1, f1);

    double der2 = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double sk = atol + rtol * std::fabs(y0[i]);
        der2 += ((f1[i] - f0[i]) / sk) * ((f1[i] - f0[i]) / sk);
    }
    der2 = std::sqrt(der2) / h;

    const double der12 = std::max(std::fabs(der2), std::sqrt(dnf));
    const double h1 =
        (der12 <= 1e-15) ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    return std::min({100.0 * h, h1, hmax});
}

// Pointwise linearization of the extremal flow under feedback control: the
// derivative f and its Jacobian a with respect to the packed vector, plus the
// switching-level quantities needed for Hamiltonian sensitivities.
//
// The steering angle theta(x, p) enters through the implicit function
// theorem. The switching function needs no theta chain: its theta-derivative
// is the stationarity condition, zero at the solved angle (and identically
// zero under the closed-form unconstrained law).
struct FlowLinearization {
    Vec f{};                  // time derivative of the packed vector
    std::array<Vec, 10> a{};  // a[i][k] = d f_i / d y_k
    double theta = 0.0;
    double s = 0.0;      // switching value
    double u = 0.0;      // thrust ratio
    double du_ds = 0.0;  // derivative of the smoothed ratio at s
    Vec grad_s{};        // d s / d y
};

FlowLinearization linearize_flow(const LanderState& x, const Costate& p, const VehicleEnv& env,
                                 const RegularizationParams& reg, Mode mode) {
    FlowLinearization lin;
    const double t_m = env.t_max;
    const double m = x.m;
    const double acc = t_m / m;                    // thrust acceleration per unit u
    const double rate = t_m / (env.isp * env.g0);  // mass flow per unit u

    double st, ct;
    Vec grad_theta{};
    double delta_z = 0.0, delta_zz = 0.0, delta_ztheta = 0.0;

    if (mode == Mode::Unconstrained) {
        const UnconstrainedSteering us = steering_unconstrained(p.pvy, p.pvz);
        st = us.sin_theta;
        ct = us.cos_theta;
        lin.theta = us.theta;
        const double n2 = p.pvy * p.pvy + p.pvz * p.pvz;
        grad_theta[7] = p.pvz / n2;
        grad_theta[8] = -p.pvy / n2;
    } else {
        lin.theta = solve_steering(x, p, env, reg).theta_star;
        st = std::sin(lin.theta);
        ct = std::cos(lin.theta);
        // Regularization gradient weight exp(beta z)/(z + eps) and its
        // altitude derivative, constant below the same freeze the model uses.
        const double zc = detail::reg_altitude(x.z, reg);
        const double zp = zc + reg.eps;
        const double ez = std::exp(reg.beta * zc);
        const double w = ez / zp;
        const bool frozen = (x.z != zc);
        const double wp = frozen ? 0.0 : ez * (reg.beta * zp - 1.0) / (zp * zp);
        // Curvature of the steering objective at the selected minimum, the
        // implicit-function denominator. Positive at a strict minimum; a fold
        // (double root) makes theta genuinely non-differentiable and the
        // resulting non-finite entries surface through the step controller.
        const double g_theta = acc * (-p.pvy * st - p.pvz * ct) + w;
        grad_theta[1] = -wp * lin.theta / g_theta;
        grad_theta[4] = -w * lin.theta / (m * g_theta);
        grad_theta[7] = -acc * ct / g_theta;
        grad_theta[8] = acc * st / g_theta;
        delta_z = regularization_term_dz(x.z, lin.theta, reg);
        delta_ztheta = frozen ? 0.0 : lin.theta * ez * (reg.beta * zp - 1.0) / (zp * zp);
        delta_zz = frozen ? 0.0
                          : 0.5 * lin.theta * lin.theta * ez *
                                (reg.beta * reg.beta * zp * zp - 2.0 * reg.beta * zp + 2.0) /
                                (zp * zp * zp);
    }

    lin.s = switching_function(x, p, lin.theta, env, reg, mode);
    lin.u = smoothed_thrust_ratio(lin.s, reg.delta);
    const double root = std::sqrt(reg.delta + lin.s * lin.s);
    lin.du_ds = -0.5 * reg.delta / (root * root * root);

    const double proj = p.pvy * st + p.pvz * ct;
    if (mode == Mode::Unconstrained) {
        const double n = std::hypot(p.pvy, p.pvz);
        lin.grad_s[4] = acc * n / m;
        lin.grad_s[7] = -acc * p.pvy / n;
        lin.grad_s[8] = -acc * p.pvz / n;
    } else {
        lin.grad_s[1] = delta_z;
        lin.grad_s[4] = -acc * proj / m;
        lin.grad_s[7] = acc * st;
        lin.grad_s[8] = acc * ct;
    }
    lin.grad_s[9] = -rate;

    Vec grad_u;
    for (int k = 0; k < 10; ++k) grad_u[k] = lin.du_ds * lin.grad_s[k];

    const ControlSample c{lin.u, lin.theta};
    const LanderState xd = state_dynamics(x, c, env);
    const Costate pd = costate_dynamics(x, p, c, env, reg, mode);
    lin.f = {xd.y, xd.z, xd.vy, xd.vz, xd.m, pd.py, pd.pz, pd.pvy, pd.pvz, pd.pm};

    auto& a = lin.a;
    a[0][2] = 1.0;
    a[1][3] = 1.0;
    a[7][5] = -1.0;
    a[8][6] = -1.0;
    const double fy = acc * st;  // thrust acceleration components per unit u
    const double fz = acc * ct;
    for (int k = 0; k < 10; ++k) {
        a[2][k] = grad_u[k] * fy + lin.u * fz * grad_theta[k];
        a[3][k] = grad_u[k] * fz - lin.u * fy * grad_theta[k];
        a[4][k] = -rate * grad_u[k];
    }
    a[2][4] -= lin.u * fy / m;
    a[3][4] -= lin.u * fz / m;
    if (mode == Mode::VerticalLanding) {
        for (int k = 0; k < 10; ++k)
            a[6][k] = -grad_u[k] * delta_z - lin.u * delta_ztheta * grad_theta[k];
        a[6][1] -= lin.u * delta_zz;
    }
    // Mass adjoint rate u (t_m/m^2) proj; the theta-derivative of proj is
    // identically zero under the unconstrained law.
    const double q = t_m / (m * m) * proj;
    const double dproj_dtheta = p.pvy * ct - p.pvz * st;
    for (int k = 0; k < 10; ++k)
        a[9][k] = grad_u[k] * q + lin.u * t_m / (m * m) * dproj_dtheta * grad_theta[k];
    a[9][4] -= 2.0 * lin.u * q / m;
    a[9][7] += lin.u * t_m / (m * m) * st;
    a[9][8] += lin.u * t_m / (m * m) * ct;

    return lin;
}

// Flow plus its 10x5 sensitivity to the initial costates, packed as the base
// vector followed by the sensitivity columns.
using VecA = std::array<double, 60>;

struct AugSystem {
    VehicleEnv env;
    RegularizationParams reg;
    Mode mode;

    void operator()(double t, const VecA& v, VecA& f) const {
        try {
            const LanderState x{v[0], v[1], v[2], v[3], v[4]};
            const Costate p{v[5], v[6], v[7], v[8], v[9]};
            const FlowLinearization lin = linearize_flow(x, p, env, reg, mode);
            for (int i = 0; i < 10; ++i) f[i] = lin.f[i];
            for (int j = 0; j < 5; ++j) {
                const double* phi = v.data() + 10 + 10 * j;
                double* dphi = f.data() + 10 + 10 * j;
                for (int i = 0; i < 10; ++i) {
                    double s = 0.0;
                    for (int k = 0; k < 10; ++k) s += lin.a[i][k] * phi[k];
                    dphi[i] = s;
                }
            }
        } catch (const PropagationError&) {
            throw;
        } catch (const std::exception& e) {
            throw PropagationError(std::string("sensitivity right-hand side failed: ") + e.what(),
                                   t);
        }
    }
};

}  // namespace

ControlEval evaluate_control(const LanderState& x, const Costate& p, const VehicleEnv& env,
                             const RegularizationParams& reg, Mode mode) {
    ControlSample c{};
    if (mode == Mode::Unconstrained) {
        c.theta = steering_unconstrained(p.pvy, p.pvz).theta;
    } else {
        c.theta = solve_steering(x, p, env, reg).theta_star;
    }
    const double s = switching_function(x, p, c.theta, env, reg, mode);
    c.u = smoothed_thrust_ratio(s, reg.delta);
    return {c, s};
}

std::pair<LanderState, Costate> Trajectory::sample(double t) const {
    if (segments.empty()) throw std::out_of_range("Trajectory::sample: empty trajectory");
    const double tf = final_time();
    const double slack = 1e-9 * std::max(1.0, std::fabs(tf));
    if (t < -slack || t > tf + slack)
        throw std::out_of_range("Trajectory::sample: time outside [0, tf]");
    t = std::clamp(t, 0.0, tf);

    // Last segment whose start does not exceed t.
    auto it = std::upper_bound(segments.begin(), segments.end(), t,
                               [](double v, const DenseSegment& s) { return v < s.t0; });
    const DenseSegment& seg = (it == segments.begin()) ? segments.front() : *(it - 1);

    const double sigma = std::clamp((t - seg.t0) / seg.h, 0.0, 1.0);
    const double sigma1 = 1.0 - sigma;
    Vec v;
    for (int i = 0; i < 10; ++i)
        v[i] = seg.c1[i] +
               sigma * (seg.c2[i] + sigma1 * (seg.c3[i] + sigma * (seg.c4[i] + sigma1 * seg.c5[i])));
    return {state_of(v), costate_of(v)};
}

ControlEval Trajectory::control_at(double t) const {
    const auto [x, p] = sample(t);
    return evaluate_control(x, p, env, reg, mode);
}

Trajectory propagate(const LanderState& x0, const Costate& p0, double t_final,
                     const VehicleEnv& env, const RegularizationParams& reg, Mode mode,
                     const IntegratorConfig& cfg) {
    cfg.validate();
    env.validate();
    reg.validate();
    detail::require_finite_state(x0);
    detail::require_finite(p0.py, "costate.py");
    detail::require_finite(p0.pz, "costate.pz");
    detail::require_finite(p0.pvy, "costate.pvy");
    detail::require_finite(p0.pvz, "costate.pvz");
    detail::require_finite(p0.pm, "costate.pm");
    if (!(t_final > 0.0)) throw std::domain_error("propagate: t_final must be > 0");

    const System sys{env, reg, mode};
    const double uround = std::numeric_limits<double>::epsilon();

    Trajectory traj;
    traj.mode = mode;
    traj.env = env;
    traj.reg = reg;
    const std::size_t reserve = 1024;
    traj.times.reserve(reserve);
    traj.states.reserve(reserve);
    traj.costates.reserve(reserve);
    traj.controls.reserve(reserve);
    traj.switching_values.reserve(reserve);
    traj.hamiltonian_values.reserve(reserve);
    traj.delta_values.reserve(reserve);
    traj.segments.reserve(reserve);

    auto record = [&](double t, const Vec& v) {
        const LanderState x = state_of(v);
        const Costate p = costate_of(v);
        ControlEval ce;
        try {
            ce = evaluate_control(x, p, env, reg, mode);
        } catch (const std::exception& e) {
            throw PropagationError(std::string("control evaluation failed: ") + e.what(), t);
        }
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.costates.push_back(p);
        traj.controls.push_back(ce.control);
        traj.switching_values.push_back(ce.switching);
        traj.hamiltonian_values.push_back(hamiltonian(x, p, ce.control, env, reg, mode));
        // The steering solve above already guarantees z + eps > 0 in
        // VerticalLanding mode; Unconstrained flight has no such barrier and
        // no regularization either.
        traj.delta_values.push_back(
            mode == Mode::VerticalLanding ? regularization_term(x.z, ce.control.theta, reg)
                                          : 0.0);
    };

    double t = 0.0;
    Vec y = pack(x0, p0);
    Vec k1, k2, k3, k4, k5, k6, k7, ys, ynew;

    sys(t, y, k1);
    record(t, y);

    const double hmax = t_final;
    double h = (cfg.initial_step > 0.0)
                   ? std::min(cfg.initial_step, hmax)
                   : initial_step_guess(sys, t, y, k1, hmax, cfg.abs_tol, cfg.rel_tol);

    double facold = 1e-4;
    bool last = false;
    bool reject = false;
    int nstep = 0;

    while (!last) {
        if (++nstep > cfg.max_steps)
            throw PropagationError("maximum step count exceeded", t);
        if (0.1 * h <= std::fabs(t) * uround)
            throw PropagationError("step size underflow", t);
        if (t + 1.01 * h >= t_final) {
            h = t_final - t;
            last = true;
        }

        for (int i = 0; i < 10; ++i) ys[i] = y[i] + h * a21 * k1[i];
        sys(t + c2 * h, ys, k2);
        for (int i = 0; i < 10; ++i) ys[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        sys(t + c3 * h, ys, k3);
        for (int i = 0; i < 10; ++i)
            ys[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        sys(t + c4 * h, ys, k4);
        for (int i = 0; i < 10; ++i)
            ys[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        sys(t + c5 * h, ys, k5);
        for (int i = 0; i < 10; ++i)
            ys[i] = y[i] +
                    h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        sys(t + h, ys, k6);
        for (int i = 0; i < 10; ++i)
            ynew[i] = y[i] +
                      h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
        sys(t + h, ynew, k7);  // first stage of the next step if accepted

        double err = 0.0;
        for (int i = 0; i < 10; ++i) {
            const double ee =
                h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            const double sk =
                cfg.abs_tol + cfg.rel_tol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            err += (ee / sk) * (ee / sk);
        }
        err = std::sqrt(err / 10.0);

        const double fac11 = std::pow(err, kExpo1);
        double fac = fac11 / std::pow(facold, kBeta);  // Lund stabilization
        fac = std::max(1.0 / kFacr, std::min(1.0 / kFacl, fac / kSafe));
        double hnew = h / fac;

        if (err <= 1.0) {
            facold = std::max(err, 1e-4);

            Trajectory::DenseSegment seg;
            seg.t0 = t;
            seg.h = h;
            for (int i = 0; i < 10; ++i) {
                const double ydiff = ynew[i] - y[i];
                const double bspl = h * k1[i] - ydiff;
                seg.c1[i] = y[i];
                seg.c2[i] = ydiff;
                seg.c3[i] = bspl;
                seg.c4[i] = ydiff - h * k7[i] - bspl;
                seg.c5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                                 d6 * k6[i] + d7 * k7[i]);
            }
            traj.segments.push_back(seg);

            t += h;
            y = ynew;
            k1 = k7;
            record(t, y);

            if (reject) hnew = std::min(std::fabs(hnew), std::fabs(h));
            reject = false;
            h = std::min(hnew, hmax);
        } else {
            hnew = h / std::min(1.0 / kFacl, fac11 / kSafe);
            reject = true;
            last = false;
            h = hnew;
        }
    }
    return traj;
}

double integrate_thrust_ratio(const Trajectory& traj) {
    double total = 0.0;
    for (const auto& seg : traj.segments) {
        const double u0 = traj.control_at(seg.t0).control.u;
        const double um = traj.control_at(seg.t0 + 0.5 * seg.h).control.u;
        const double u1 = traj.control_at(seg.t0 + seg.h).control.u;
        total += seg.h / 6.0 * (u0 + 4.0 * um + u1);
    }
    return total;
}

SwitchingSensitivity switching_sensitivity(const LanderState& x, const Costate& p,
                                           const VehicleEnv& env,
                                           const RegularizationParams& reg, Mode mode) {
    const FlowLinearization lin = linearize_flow(x, p, env, reg, mode);
    return {lin.s, lin.u, lin.du_ds, lin.grad_s};
}

SensitivityEndpoint propagate_sensitivity(const LanderState& x0, const Costate& p0,
                                          double t_final, const VehicleEnv& env,
                                          const RegularizationParams& reg, Mode mode,
                                          const IntegratorConfig& cfg) {
    cfg.validate();
    env.validate();
    reg.validate();
    detail::require_finite_state(x0);
    detail::require_finite(p0.py, "costate.py");
    detail::require_finite(p0.pz, "costate.pz");
    detail::require_finite(p0.pvy, "costate.pvy");
    detail::require_finite(p0.pvz, "costate.pvz");
    detail::require_finite(p0.pm, "costate.pm");
    if (!(t_final > 0.0))
        throw std::domain_error("propagate_sensitivity: t_final must be > 0");

    const AugSystem sys{env, reg, mode};
    const double uround = std::numeric_limits<double>::epsilon();
    constexpr int n = 60;

    double t = 0.0;
    VecA y{};
    y[0] = x0.y;
    y[1] = x0.z;
    y[2] = x0.vy;
    y[3] = x0.vz;
    y[4] = x0.m;
    y[5] = p0.py;
    y[6] = p0.pz;
    y[7] = p0.pvy;
    y[8] = p0.pvz;
    y[9] = p0.pm;
    // Sensitivity columns start as the identity on the costate block.
    for (int j = 0; j < 5; ++j) y[10 + 10 * j + 5 + j] = 1.0;

    VecA k1, k2, k3, k4, k5, k6, k7, ys, ynew;
    sys(t, y, k1);

    const double hmax = t_final;
    double h = cfg.initial_step > 0.0 ? std::min(cfg.initial_step, hmax) : 0.0;
    if (h <= 0.0) {
        // Same derivative-magnitude estimate the plain propagation uses,
        // taken over the augmented vector.
        double dnf = 0.0, dny = 0.0;
        for (int i = 0; i < n; ++i) {
            const double sk = cfg.abs_tol + cfg.rel_tol * std::fabs(y[i]);
            dnf += (k1[i] / sk) * (k1[i] / sk);
            dny += (y[i] / sk) * (y[i] / sk);
        }
        h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
        h = std::min(h, hmax);
        VecA y1, f1;
        for (int i = 0; i < n; ++i) y1[i] = y[i] + h * k1[i];
        sys(t + h, y1, f1);
        double der2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double sk = cfg.abs_tol + cfg.rel_tol * std::fabs(y[i]);
            der2 += ((f1[i] - k1[i]) / sk) * ((f1[i] - k1[i]) / sk);
        }
        der2 = std::sqrt(der2) / h;
        const double der12 = std::max(std::fabs(der2), std::sqrt(dnf));
        const double h1 =
            (der12 <= 1e-15) ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
        h = std::min({100.0 * h, h1, hmax});
    }

    double facold = 1e-4;
    bool last = false;
    bool reject = false;
    int nstep = 0;

    while (!last) {
        if (++nstep > cfg.max_steps)
            throw PropagationError("maximum step count exceeded", t);
        if (0.1 * h <= std::fabs(t) * uround)
            throw PropagationError("step size underflow", t);
        if (t + 1.01 * h >= t_final) {
            h = t_final - t;
            last = true;
        }

        for (int i = 0; i < n; ++i) ys[i] = y[i] + h * a21 * k1[i];
        sys(t + c2 * h, ys, k2);
        for (int i = 0; i < n; ++i) ys[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        sys(t + c3 * h, ys, k3);
        for (int i = 0; i < n; ++i)
            ys[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        sys(t + c4 * h, ys, k4);
        for (int i = 0; i < n; ++i)
            ys[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        sys(t + c5 * h, ys, k5);
        for (int i = 0; i < n; ++i)
            ys[i] = y[i] +
                    h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        sys(t + h, ys, k6);
        for (int i = 0; i < n; ++i)
            ynew[i] = y[i] +
                      h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
        sys(t + h, ynew, k7);

        double err = 0.0;
        for (int i = 0; i < n; ++i) {
            const double ee =
                h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            const double sk =
                cfg.abs_tol + cfg.rel_tol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            err += (ee / sk) * (ee / sk);
        }
        err = std::sqrt(err / n);

        const double fac11 = std::pow(err, kExpo1);
        double fac = fac11 / std::pow(facold, kBeta);
        fac = std::max(1.0 / kFacr, std::min(1.0 / kFacl, fac / kSafe));
        double hnew = h / fac;

        if (err <= 1.0) {
            facold = std::max(err, 1e-4);

            // Freeze-floor event handling (vertical mode). Where the altitude
            // crosses -eps/2 the pz rate jumps because the regularization
            // gradient freezes, so the sensitivity needs the standard
            // crossing correction phi += (f_after - f_before) dtau/dp0 with
            // dtau/dp0 = -phi_z / vz. Steps straddling the floor are first
            // shrunk onto it (secant estimate, refined by revisits).
            const double floor_z = -0.5 * reg.eps;
            if (mode == Mode::VerticalLanding) {
                const double g0 = y[1] - floor_z;
                const double g1 = ynew[1] - floor_z;
                if (std::fabs(g0) > 1e-11 && g0 * g1 < 0.0 && std::fabs(g1) > 1e-12) {
                    h = std::max(h * g0 / (g0 - g1), 1e-13);
                    last = false;
                    continue;
                }
            }
            const double g_before = y[1] - floor_z;

            t += h;
            y = ynew;
            k1 = k7;

            if (mode == Mode::VerticalLanding && std::fabs(y[1] - floor_z) <= 1e-12 &&
                std::fabs(g_before) > 1e-11 && std::fabs(y[3]) > 1e-8 &&
                ((g_before > 0.0) == (y[3] < 0.0))) {
                const LanderState xc{y[0], y[1], y[2], y[3], y[4]};
                const Costate pc{y[5], y[6], y[7], y[8], y[9]};
                const ControlEval cc = evaluate_control(xc, pc, env, reg, mode);
                // Live-side regularization gradient at the floor; the frozen
                // side is zero by construction.
                const double zp = 0.5 * reg.eps;
                const double wlive = std::exp(reg.beta * floor_z) * (reg.beta * zp - 1.0) /
                                     (zp * zp);
                const double dlive = 0.5 * cc.control.theta * cc.control.theta * wlive;
                const double f_live = -cc.control.u * dlive;
                const double df6 = (g_before > 0.0) ? -f_live : f_live;
                for (int j = 0; j < 5; ++j)
                    y[10 + 10 * j + 6] += df6 * y[10 + 10 * j + 1] / y[3];
                sys(t, y, k1);
            }

            if (reject) hnew = std::min(std::fabs(hnew), std::fabs(h));
            reject = false;
            h = std::min(hnew, hmax);
        } else {
            hnew = h / std::min(1.0 / kFacl, fac11 / kSafe);
            reject = true;
            last = false;
            h = hnew;
        }
    }

    SensitivityEndpoint se;
    for (int i = 0; i < 10; ++i) se.y[i] = y[i];
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 10; ++i) se.phi[i][j] = y[10 + 10 * j + i];

    const LanderState xf{y[0], y[1], y[2], y[3], y[4]};
    const Costate pf{y[5], y[6], y[7], y[8], y[9]};
    const FlowLinearization lin = linearize_flow(xf, pf, env, reg, mode);
    se.f = lin.f;
    se.hamiltonian = hamiltonian(xf, pf, ControlSample{lin.u, lin.theta}, env, reg, mode);
    se.sw = {lin.s, lin.u, lin.du_ds, lin.grad_s};

    // dH/dt along the feedback flow reduces to s du/dt: the Hamiltonian
    // structure cancels the state-costate terms and the steering chain
    // vanishes at the solved angle.
    double sdot = 0.0;
    for (int k = 0; k < 10; ++k) sdot += lin.grad_s[k] * lin.f[k];
    se.dh_dt = lin.s * lin.du_ds * sdot;
    return se;
}

}  // namespace lander
