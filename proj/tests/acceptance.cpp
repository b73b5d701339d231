/**
 * Acceptance gate. Solves the reference landing case in both modes, runs the
 * seeded Monte Carlo batch and the property oracles, and prints one verdict
 * line per criterion. Exit code is the number of failed criteria.
 */

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lander/control.hpp"
#include "lander/model.hpp"
#include "lander/ode.hpp"
#include "lander/oracle.hpp"
#include "lander/scenario.hpp"
#include "lander/shooting.hpp"
#include "lander/steering.hpp"

namespace {

constexpr double kDegPerRad = 57.295779513082320877;

int g_failed = 0;

std::string f(const char* fmt, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    return buf;
}

void verdict(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %d %s: %s\n", ok ? "PASS" : "FAIL", idx, name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failed;
}

void note(const std::string& text) {
    std::printf("       %s\n", text.c_str());
    std::fflush(stdout);
}

bool within(double v, double center, double tol) { return std::fabs(v - center) <= tol; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Endpoint {
    double tf = std::nan("");
    double mf = std::nan("");
    double theta_deg = std::nan("");
    std::vector<lander::SwitchRecord> switches;
};

Endpoint endpoint(const lander::SolveReport& rep) {
    Endpoint e;
    if (!rep.converged || rep.trajectory.size() == 0) return e;
    e.tf = rep.trajectory.final_time();
    e.mf = rep.trajectory.final_state().m;
    e.theta_deg = rep.trajectory.controls.back().theta * kDegPerRad;
    e.switches = lander::detect_switches(rep.trajectory);
    return e;
}

bool one_off_to_on(const Endpoint& e, double t_center, double t_tol) {
    return e.switches.size() == 1 &&
           e.switches[0].direction == lander::SwitchDirection::OffToOn &&
           within(e.switches[0].time, t_center, t_tol);
}

// Largest deviation of samples (t_i, v_i) from their least-squares line.
double linear_fit_residual(const std::vector<double>& t, const std::vector<double>& v) {
    const std::size_t n = t.size();
    double st = 0, sv = 0, stt = 0, stv = 0;
    for (std::size_t i = 0; i < n; ++i) {
        st += t[i];
        sv += v[i];
        stt += t[i] * t[i];
        stv += t[i] * v[i];
    }
    const double det = n * stt - st * st;
    const double slope = (n * stv - st * sv) / det;
    const double offset = (sv - slope * st) / n;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::fabs(v[i] - (offset + slope * t[i])));
    return worst;
}

}  // namespace

int main() {
    lander::Scenario base;
    base.name = "reference";
    base.x0 = {-61.0, 145.0, 14.0, -28.0, 9444.0};

    // 1: unconstrained reference case.
    auto t0 = std::chrono::steady_clock::now();
    const lander::SolveReport unc = lander::solve_multi_start(base);
    const double unc_wall = seconds_since(t0);
    const Endpoint ue = endpoint(unc);
    {
        const bool ok = unc.converged && within(ue.tf, 9.9779, 0.01) &&
                        within(ue.mf, 9301.18, 0.5) && within(ue.theta_deg, -11.02, 0.2) &&
                        one_off_to_on(ue, 0.0748, 0.003) && unc_wall < 10.0;
        verdict(1, "unconstrained reference case", ok,
                f("tf=%.6f s (9.9779+-0.01) mf=%.3f kg (9301.18+-0.5) theta_f=%.4f deg "
                  "(-11.02+-0.2) switches=%zu first=%.6f s (0.0748+-0.003) solve=%.2f s (<10)",
                  ue.tf, ue.mf, ue.theta_deg, ue.switches.size(),
                  ue.switches.empty() ? std::nan("") : ue.switches[0].time, unc_wall));
    }

    // 2: vertical landing on the same case.
    lander::Scenario vsc = base;
    vsc.mode = lander::Mode::VerticalLanding;
    t0 = std::chrono::steady_clock::now();
    const lander::SolveReport vert = lander::solve_multi_start(vsc);
    const double vert_wall = seconds_since(t0);
    const Endpoint ve = endpoint(vert);
    {
        const double penalty = vert.fuel_used - unc.fuel_used;
        const bool ok = vert.converged && within(ve.tf, 9.9994, 0.01) &&
                        within(ve.mf, 9300.96, 0.5) && std::fabs(ve.theta_deg) < 0.05 &&
                        one_off_to_on(ve, 0.0811, 0.003) && within(penalty, 0.22, 0.1) &&
                        vert_wall < 30.0;
        verdict(2, "vertical landing reference case", ok,
                f("tf=%.6f s (9.9994+-0.01) mf=%.3f kg (9300.96+-0.5) |theta_f|=%.2e deg "
                  "(<0.05) switch=%.6f s (0.0811+-0.003) fuel penalty=%.4f kg (0.22+-0.1) "
                  "solve=%.2f s (<30)",
                  ve.tf, ve.mf, std::fabs(ve.theta_deg),
                  ve.switches.empty() ? std::nan("") : ve.switches[0].time, penalty, vert_wall));
    }

    // 3: scaled Hamiltonian magnitude along both solutions. The smoothing of
    // the thrust ratio shifts H by up to sqrt(delta)/2 = 5e-6 while the engine
    // ramps between bounds, so the check reads |H| on the full-thrust and
    // coast arcs, where the extremal condition H = 0 is meaningful.
    {
        const lander::OracleReport du = lander::hamiltonian_drift_check(unc.trajectory, 1e-6);
        const lander::OracleReport dv = lander::hamiltonian_drift_check(vert.trajectory, 1e-6);
        const bool ok = unc.converged && vert.converged && du.passed && dv.passed;
        verdict(3, "hamiltonian flatness", ok,
                f("max scaled |H| on arcs: unconstrained=%.3e vertical=%.3e (<1e-6)",
                  du.max_error, dv.max_error));
    }

    // 4: regularization penalty nonnegative everywhere and negligible at
    // touchdown. The touchdown value is pinned by the stationarity condition:
    // theta_f = -(T_m/m) pvy_f eps, hence Delta(tf) = eps (T_m pvy_f / m_f)^2 / 2,
    // about 8e-10 for this case. The 1e-10 bound would need eps below ~1.2e-9,
    // while eps is fixed at 1e-8, so this criterion fails by construction;
    // the measured value and the floor are printed alongside.
    {
        double dmin = std::numeric_limits<double>::infinity();
        double dfinal = std::nan("");
        double floor = std::nan("");
        if (vert.converged && vert.trajectory.size() > 0) {
            for (double d : vert.trajectory.delta_values) dmin = std::min(dmin, d);
            dfinal = vert.trajectory.delta_values.back();
            const double pvyf = vert.trajectory.costates.back().pvy;
            const double mf = vert.trajectory.final_state().m;
            const double rate = vsc.env.t_max * pvyf / mf;
            floor = 0.5 * vsc.reg.eps * rate * rate;
        }
        const bool ok = vert.converged && dmin >= 0.0 && dfinal < 1e-10;
        verdict(4, "regularization profile", ok,
                f("min Delta=%.3e (>=0) Delta(tf)=%.3e (<1e-10); stationarity floor "
                  "eps*(T_m*pvy_f/m_f)^2/2=%.3e with eps=1e-8",
                  dmin, dfinal, floor));
    }

    // 5: unconstrained costate structure. py, pz are constant, so pvy, pvz
    // are linear in time; measured as worst deviation from a least-squares line.
    {
        double rvy = std::nan(""), rvz = std::nan(""), pzdrift = std::nan("");
        if (unc.converged && unc.trajectory.size() > 1) {
            std::vector<double> pvy, pvz;
            pzdrift = 0.0;
            const double pz0 = unc.trajectory.costates.front().pz;
            for (const lander::Costate& p : unc.trajectory.costates) {
                pvy.push_back(p.pvy);
                pvz.push_back(p.pvz);
                pzdrift = std::max(pzdrift, std::fabs(p.pz - pz0));
            }
            rvy = linear_fit_residual(unc.trajectory.times, pvy);
            rvz = linear_fit_residual(unc.trajectory.times, pvz);
        }
        const bool ok = unc.converged && rvy < 1e-6 && rvz < 1e-6 && pzdrift < 1e-8;
        verdict(5, "unconstrained costate structure", ok,
                f("linear-fit residuals pvy=%.3e pvz=%.3e (<1e-6) pz drift=%.3e (<1e-8)",
                  rvy, rvz, pzdrift));
    }

    // 6: seeded Monte Carlo batch over the landing domain, vertical mode.
    // The runtime budget (30 min on 8 cores) is applied as core-seconds so the
    // verdict is machine-independent.
    {
        lander::BatchOptions opts;
        opts.n = 100;
        opts.seed = 1;
        opts.mode = lander::Mode::VerticalLanding;
        opts.max_threads = 0;
        t0 = std::chrono::steady_clock::now();
        const lander::BatchSummary sum = lander::run_batch(base, lander::DomainBox{}, opts);
        const double wall = seconds_since(t0);
        const int cores = std::min(lander::thread_budget(0), opts.n);
        const double core_seconds = wall * cores;
        const double rate = static_cast<double>(sum.n_converged) / sum.n_total;
        const double worst_theta_deg = sum.max_abs_final_theta * kDegPerRad;
        const bool ok = rate >= 0.90 && worst_theta_deg < 0.1 && sum.max_final_speed < 1e-3 &&
                        sum.max_final_miss < 0.1 && core_seconds <= 14400.0;
        verdict(6, "monte carlo batch (n=100, seed=1)", ok,
                f("converged %d/100 (>=90) max|theta_f|=%.2e deg (<0.1) max speed=%.2e m/s "
                  "(<1e-3) max miss=%.2e m (<0.1) runtime=%.0f s x %d cores = %.0f core-s "
                  "(<=14400)",
                  sum.n_converged, worst_theta_deg, sum.max_final_speed, sum.max_final_miss,
                  wall, cores, core_seconds));
        std::map<std::string, int> tally;
        for (const lander::CaseResult& r : sum.cases)
            if (!r.converged) ++tally[r.failure];
        for (const auto& [msg, count] : tally) note(f("%2dx %s", count, msg.c_str()));
    }

    // 7: property suites on random inputs, no stored references.
    {
        const lander::VehicleEnv env;
        const lander::RegularizationParams reg;

        const std::size_t grid = 1000000;
        const double spacing = 2.0 * std::numbers::pi / grid;
        const lander::OracleReport steer =
            lander::grid_scan_steering(env, reg, 20240819, 10000, grid, spacing + 1e-12);

        const lander::OracleReport adj_u = lander::fd_costate_check(
            lander::Mode::Unconstrained, env, reg, 20240819, 1000, 1e-6);
        const lander::OracleReport adj_v = lander::fd_costate_check(
            lander::Mode::VerticalLanding, env, reg, 20240819, 1000, 1e-6);

        std::mt19937_64 rng(20240819);
        auto uniform = [&](double lo, double hi) {
            return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        };
        // Magnitudes span 1e-9..1.5e2; the realized switching function stays
        // O(1), and past |s| ~ 6e2 the ratio saturates to an exact 0 or 1 in
        // doubles, where the open-interval bound is no longer representable.
        bool control_ok = lander::smoothed_thrust_ratio(0.0, reg.delta) == 0.5;
        double sym_worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const double mag = std::pow(10.0, uniform(-9.0, 2.0));
            double s1 = (uniform(0, 1) < 0.5 ? -mag : mag) * uniform(0.5, 1.5);
            double s2 = uniform(-30.0, 30.0);
            if (s1 > s2) std::swap(s1, s2);
            const double u1 = lander::smoothed_thrust_ratio(s1, reg.delta);
            const double u2 = lander::smoothed_thrust_ratio(s2, reg.delta);
            control_ok = control_ok && u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0 && u1 >= u2;
            sym_worst = std::max(
                sym_worst, std::fabs(u1 + lander::smoothed_thrust_ratio(-s1, reg.delta) - 1.0));
        }
        control_ok = control_ok && sym_worst < 1e-12;

        double crit_worst = 0.0;
        std::size_t crit_count = 0;
        for (int i = 0; i < 10000; ++i) {
            lander::LanderState x{0.0, uniform(0.0, 1500.0), 0.0, 0.0, uniform(9050.0, 9450.0)};
            lander::Costate p{0.0, 0.0, uniform(-2.0, 2.0), uniform(-2.0, 2.0), 0.0};
            const double a = env.t_max / x.m;
            const double c = std::exp(reg.beta * x.z) / (x.z + reg.eps);
            for (double th : lander::critical_points(x, p, env, reg)) {
                const double deriv = a * (-p.pvy * std::sin(th) - p.pvz * std::cos(th)) + c;
                const double scale = std::max(1.0, a * (std::fabs(p.pvy) + std::fabs(p.pvz)) + c);
                crit_worst = std::max(crit_worst, std::fabs(deriv) / scale);
                ++crit_count;
            }
        }
        const bool crit_ok = crit_worst <= 1e-9;

        const bool ok = steer.passed && adj_u.passed && adj_v.passed && control_ok && crit_ok;
        verdict(7, "property suites", ok,
                f("steering vs 1e6-point grid on 1e4 inputs max=%.3e (<=%.3e); adjoint vs "
                  "finite differences on 1e3 points max=%.3e/%.3e (<=1e-6); thrust-ratio "
                  "bounds/monotonicity/symmetry on 1e4 samples %s (sym max=%.1e); %zu critical "
                  "points satisfy the differentiated stationarity equation max=%.3e (<=1e-9)",
                  steer.max_error, steer.tolerance, adj_u.max_error, adj_v.max_error,
                  control_ok ? "ok" : "VIOLATED", sym_worst, crit_count, crit_worst));
    }

    std::printf("%d of 7 criteria passed\n", 7 - g_failed);
    return g_failed;
}
