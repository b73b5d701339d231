#include "lander/control.hpp"

#include <cmath>
#include <stdexcept>

#include "lander/ode.hpp"

namespace lander {

double switching_function(const LanderState& x, const Costate& p, double theta,
                          const VehicleEnv& env, const RegularizationParams& reg, Mode mode) {
    detail::require_finite_state(x);
    detail::require_finite(theta, "theta");
    if (!(x.m > 0.0)) throw std::domain_error("switching_function: mass must be positive");

    const double acc = env.t_max / x.m;
    const double adjoint_rate = env.t_max * p.pm / (env.isp * env.g0);

    if (mode == Mode::Unconstrained) {
        // Thrust direction already opposes p_v, so its contribution enters
        // with magnitude ||p_v||.
        return 1.0 - adjoint_rate - acc * std::hypot(p.pvy, p.pvz);
    }
    const double proj = p.pvy * std::sin(theta) + p.pvz * std::cos(theta);
    return acc * proj - adjoint_rate + 1.0 + regularization_term(x.z, theta, reg);
}

double smoothed_thrust_ratio(double s, double delta) {
    detail::require_finite(s, "switching value");
    if (!(delta > 0.0)) throw std::domain_error("smoothed_thrust_ratio: delta must be > 0");
    return 0.5 * (1.0 - s / std::sqrt(delta + s * s));
}

std::vector<SwitchRecord> detect_switches(const Trajectory& traj) {
    std::vector<SwitchRecord> out;
    const auto& sv = traj.switching_values;
    if (sv.size() < 2) return out;

    const double tol = 1e-6;  // crossing time resolution [s]
    for (std::size_t i = 0; i + 1 < sv.size(); ++i) {
        const double sa = sv[i];
        const double sb = sv[i + 1];
        if ((sa > 0.0) == (sb > 0.0)) continue;

        double lo = traj.times[i];
        double hi = traj.times[i + 1];
        double flo = sa;
        while (hi - lo > tol) {
            const double mid = 0.5 * (lo + hi);
            const double fm = traj.control_at(mid).switching;
            if ((flo > 0.0) == (fm > 0.0) && fm != 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        // Positive switching value means coasting, so + to - turns thrust on.
        out.push_back({0.5 * (lo + hi), sa > 0.0 ? SwitchDirection::OffToOn
                                                 : SwitchDirection::OnToOff});
    }
    return out;
}

}  // namespace lander
