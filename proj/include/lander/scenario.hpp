/**
 * Problem configuration, Monte Carlo batches over the initial-condition
 * domain, and file persistence (scenario JSON in, trajectory CSV and
 * summary/solution JSON out).
 */

#ifndef LANDER_SCENARIO_HPP
#define LANDER_SCENARIO_HPP

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lander/shooting.hpp"

namespace lander {

/// Bad configuration content (parse errors, schema or invariant violations).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (missing file, unwritable path).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Initial-condition sampling box. Defaults cover the landing envelope the
/// batch studies draw from.
struct DomainBox {
    Interval y0{-125.0, 600.0};
    Interval z0{50.0, 1500.0};
    Interval vy0{-50.0, 10.0};
    Interval vz0{-100.0, 10.0};
    Interval m0{9050.0, 9450.0};

    void validate() const {
        for (const Interval* iv : {&y0, &z0, &vy0, &vz0, &m0})
            if (!(iv->lo <= iv->hi))
                throw ConfigError("DomainBox: lo <= hi violated");
    }
};

/// n initial states uniform per component, deterministic for a given seed.
std::vector<LanderState> sample_initial_states(const DomainBox& box, int n,
                                               std::uint64_t seed);

struct CaseResult {
    int index = -1;
    LanderState x0{};
    bool converged = false;
    double final_time = 0.0;
    double final_mass = 0.0;
    double final_theta = 0.0;  // rad
    double final_speed = 0.0;  // |v(tf)|
    double final_miss = 0.0;   // |r(tf)|
    double fuel_used = 0.0;
    std::vector<double> switch_times;
    int iterations = 0;
    int starts_tried = 0;
    double residual_norm = std::numeric_limits<double>::infinity();
    double max_scaled_h = std::numeric_limits<double>::infinity();
    std::string failure;
};

struct BatchSummary {
    int n_total = 0;
    int n_converged = 0;
    std::vector<CaseResult> cases;  // ordered by case index
    // Aggregates over converged cases.
    double max_abs_final_theta = 0.0;
    double max_final_speed = 0.0;
    double max_final_miss = 0.0;
    double mean_final_time = 0.0;
    double mean_fuel_used = 0.0;
    double wall_seconds = 0.0;  // informational only, never serialized
};

struct BatchOptions {
    int n = 100;
    std::uint64_t seed = 0;
    Mode mode = Mode::VerticalLanding;
    std::string out_dir;  // when set, converged trajectories land here as CSV
    int max_threads = 0;  // 0 picks hardware concurrency
};

/// "unconstrained" or "vertical"; anything else is a ConfigError.
Mode parse_mode(const std::string& s);

/// Parses and validates a scenario file. Missing optional groups fall back
/// to the reference constants baked into the defaults; unknown keys are
/// rejected. Throws IoError when unreadable, ConfigError otherwise.
Scenario load_scenario(const std::string& path);

/// Runs one solve per sampled initial state, in parallel, and aggregates.
/// A case counts as converged only if the solver reports convergence and
/// the trajectory passes the Hamiltonian drift check. Per-case failures are
/// recorded, never propagated. Deterministic given the seed.
BatchSummary run_batch(const Scenario& base, const DomainBox& box, const BatchOptions& opts);

/// Worker count after applying the LANDER_THREADS environment cap.
int thread_budget(int requested);

/// CSV with header t,y,z,vy,vz,m,theta,u,S,H,Delta, 17 significant digits.
void export_trajectory(const Trajectory& traj, const std::string& path);

/// Batch summary JSON text: per-case records plus aggregates, key order
/// fixed so equal-seed runs produce identical bytes.
std::string batch_summary_json(const BatchSummary& summary);

void write_batch_summary(const BatchSummary& summary, const std::string& path);

/// Solution bundle: solution.json plus trajectory.csv and costates.csv.
void write_solution(const SolveReport& report, const Scenario& sc, const std::string& dir);

/// A solution bundle read back from disk for verification.
struct SolutionBundle {
    Scenario scenario;
    ShootingUnknowns unknowns;
    std::vector<double> times;
    std::vector<LanderState> states;
    std::vector<Costate> costates;
    std::vector<ControlSample> controls;
    std::vector<double> switching_values;
    std::vector<double> hamiltonian_values;
    std::vector<double> delta_values;
};

SolutionBundle read_solution(const std::string& dir);

}  // namespace lander

#endif
