/**
 * Bang-bang switching functions and the smoothed thrust-ratio law.
 */

#ifndef LANDER_CONTROL_HPP
#define LANDER_CONTROL_HPP

#include <vector>

#include "lander/model.hpp"

namespace lander {

struct Trajectory;

/// Direction of an engine switch.
enum class SwitchDirection { OffToOn, OnToOff };

struct SwitchRecord {
    double time;  // [s]
    SwitchDirection direction;
};

/// Switching function of the selected mode; negative means full thrust,
/// positive means coast.
///
/// Unconstrained: S = 1 - T_m p_m/(I_sp g0) - (T_m/m)|p_v|.
/// Vertical:      S = (T_m/m) p_v . i_theta - T_m p_m/(I_sp g0) + 1 + Delta.
double switching_function(const LanderState& x, const Costate& p, double theta,
                          const VehicleEnv& env, const RegularizationParams& reg, Mode mode);

/// Smoothed thrust ratio u = (1 - s/sqrt(delta + s^2))/2, in (0, 1),
/// strictly decreasing in s, u(0) = 1/2.
double smoothed_thrust_ratio(double s, double delta);

/// Locates sign changes of the stored switching-function samples, refined by
/// bisection on the dense interpolant to 1e-6 s. Empty list is valid.
std::vector<SwitchRecord> detect_switches(const Trajectory& traj);

}  // namespace lander

#endif
