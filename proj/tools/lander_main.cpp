/**
 * Command-line driver: solve one landing problem, run a Monte Carlo batch,
 * verify a stored solution against the oracle suites, or export plot data.
 * Exit codes: 0 success, 2 solver/oracle failure, 3 bad configuration,
 * 4 I/O failure.
 */

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lander/control.hpp"
#include "lander/oracle.hpp"
#include "lander/scenario.hpp"

namespace {

constexpr double kRadToDeg = 57.295779513082320877;

constexpr int kExitOk = 0;
constexpr int kExitSolver = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;

void print_kv(const char* key, const std::string& value) {
    std::printf("%-22s %s\n", key, value.c_str());
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string sci3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

struct SolveArgs {
    std::string scenario_path;
    std::string mode;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int starts = 0;
    bool json = false;
};

int cmd_solve(const SolveArgs& args) {
    lander::Scenario sc = lander::load_scenario(args.scenario_path);
    if (!args.mode.empty()) sc.mode = lander::parse_mode(args.mode);
    if (args.seed_set) sc.solver.seed = args.seed;
    if (args.starts > 0) sc.solver.n_starts = args.starts;

    const lander::SolveReport rep = lander::solve_multi_start(sc);

    std::vector<double> switch_times;
    if (rep.converged)
        for (const auto& sw : lander::detect_switches(rep.trajectory))
            switch_times.push_back(sw.time);

    if (args.json) {
        nlohmann::ordered_json j;
        j["scenario"] = sc.name;
        j["mode"] = lander::mode_name(sc.mode);
        j["converged"] = rep.converged;
        j["final_time_s"] = rep.converged ? rep.trajectory.final_time() : 0.0;
        j["final_mass_kg"] = rep.converged ? rep.trajectory.final_state().m : 0.0;
        const double theta = rep.converged ? rep.trajectory.controls.back().theta : 0.0;
        j["final_theta_rad"] = theta;
        j["final_theta_deg"] = theta * kRadToDeg;
        j["fuel_used_kg"] = rep.fuel_used;
        j["switch_times_s"] = switch_times;
        j["iterations"] = rep.iterations;
        j["starts_tried"] = rep.starts_tried;
        j["residual_norm"] = rep.residual_norm;
        j["unknowns"] = {{"py0", rep.unknowns.py0},   {"pz0", rep.unknowns.pz0},
                         {"pvy0", rep.unknowns.pvy0}, {"pvz0", rep.unknowns.pvz0},
                         {"pm0", rep.unknowns.pm0},   {"tf", rep.unknowns.tf}};
        j["failure"] = rep.failure;
        std::printf("%s\n", j.dump(2).c_str());
    } else {
        print_kv("scenario", sc.name);
        print_kv("mode", lander::mode_name(sc.mode));
        print_kv("converged", rep.converged ? "yes" : "no");
        if (rep.converged) {
            print_kv("final_time_s", fixed6(rep.trajectory.final_time()));
            print_kv("final_mass_kg", fixed6(rep.trajectory.final_state().m));
            print_kv("final_theta_deg",
                     fixed6(rep.trajectory.controls.back().theta * kRadToDeg));
            print_kv("fuel_used_kg", fixed6(rep.fuel_used));
            std::string sw;
            for (double t : switch_times) {
                if (!sw.empty()) sw += ' ';
                sw += fixed6(t);
            }
            print_kv("switch_times_s", sw.empty() ? "none" : sw);
        }
        print_kv("iterations", std::to_string(rep.iterations));
        print_kv("starts_tried", std::to_string(rep.starts_tried));
        print_kv("residual_norm", sci3(rep.residual_norm));
        if (!rep.failure.empty()) print_kv("failure", rep.failure);
    }

    if (!rep.converged) {
        std::fprintf(stderr, "solve failed: %s\n", rep.failure.c_str());
        return kExitSolver;
    }
    if (!args.out_dir.empty()) lander::write_solution(rep, sc, args.out_dir);
    return kExitOk;
}

struct BatchArgs {
    std::string scenario_path;
    std::string mode;
    std::string out_dir;
    int n = 100;
    std::uint64_t seed = 0;
    double min_rate = 0.9;
    bool json = false;
};

int cmd_batch(const BatchArgs& args) {
    lander::Scenario base;
    base.name = "batch";
    if (!args.scenario_path.empty()) base = lander::load_scenario(args.scenario_path);

    lander::BatchOptions opts;
    opts.n = args.n;
    opts.seed = args.seed;
    opts.mode = !args.mode.empty()          ? lander::parse_mode(args.mode)
                : !args.scenario_path.empty() ? base.mode
                                              : lander::Mode::VerticalLanding;
    opts.out_dir = args.out_dir;

    const lander::DomainBox box;
    const lander::BatchSummary sum = lander::run_batch(base, box, opts);

    if (!args.out_dir.empty())
        lander::write_batch_summary(sum, args.out_dir + "/summary.json");

    if (args.json) {
        std::printf("%s\n", lander::batch_summary_json(sum).c_str());
    } else {
        print_kv("mode", lander::mode_name(opts.mode));
        print_kv("n_total", std::to_string(sum.n_total));
        print_kv("n_converged", std::to_string(sum.n_converged));
        print_kv("convergence_rate",
                 fixed6(static_cast<double>(sum.n_converged) / sum.n_total));
        print_kv("max_abs_final_theta_deg", sci3(sum.max_abs_final_theta * kRadToDeg));
        print_kv("max_final_speed_ms", sci3(sum.max_final_speed));
        print_kv("max_final_miss_m", sci3(sum.max_final_miss));
        print_kv("mean_final_time_s", fixed6(sum.mean_final_time));
        print_kv("mean_fuel_used_kg", fixed6(sum.mean_fuel_used));
        print_kv("wall_seconds", fixed6(sum.wall_seconds));
        for (const auto& r : sum.cases)
            if (!r.converged)
                std::fprintf(stderr, "case %d failed: %s\n", r.index, r.failure.c_str());
    }

    const double rate = static_cast<double>(sum.n_converged) / sum.n_total;
    if (rate < args.min_rate) {
        std::fprintf(stderr, "convergence rate %.3f below required %.3f\n", rate,
                     args.min_rate);
        return kExitSolver;
    }
    return kExitOk;
}

struct VerifyArgs {
    std::string dir;
    std::vector<std::string> checks;
    bool json = false;
};

int cmd_verify(const VerifyArgs& args) {
    const lander::SolutionBundle b = lander::read_solution(args.dir);
    const lander::Scenario& sc = b.scenario;

    auto selected = [&](const char* name) {
        if (args.checks.empty()) return true;
        for (const auto& c : args.checks)
            if (c == name) return true;
        return false;
    };

    std::vector<lander::OracleReport> reports;
    if (selected("drift"))
        reports.push_back(lander::hamiltonian_drift_check(b.states, b.costates, sc.env,
                                                          sc.reg, sc.mode, 1e-6));
    if (selected("steering")) {
        const std::size_t grid = 200000;
        const double tol = 2.0 * 3.14159265358979323846 / grid + 1e-12;
        reports.push_back(
            lander::grid_scan_steering(sc.env, sc.reg, 20240817, 200, grid, tol));
    }
    if (selected("adjoint"))
        reports.push_back(
            lander::fd_costate_check(sc.mode, sc.env, sc.reg, 20240817, 200, 1e-6));

    if (reports.empty()) throw lander::ConfigError("verify: no such check");

    bool all_passed = true;
    if (args.json) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& r : reports) {
            j.push_back({{"name", r.name},
                         {"samples", r.samples},
                         {"max_error", r.max_error},
                         {"tolerance", r.tolerance},
                         {"passed", r.passed}});
            all_passed = all_passed && r.passed;
        }
        std::printf("%s\n", j.dump(2).c_str());
    } else {
        std::printf("%-42s %9s %13s %12s %6s\n", "check", "samples", "max_error",
                    "tolerance", "result");
        for (const auto& r : reports) {
            std::printf("%-42s %9zu %13.3e %12.3e %6s\n", r.name.c_str(), r.samples,
                        r.max_error, r.tolerance, r.passed ? "pass" : "FAIL");
            all_passed = all_passed && r.passed;
        }
    }
    return all_passed ? kExitOk : kExitSolver;
}

struct ExportArgs {
    std::string dir;
    std::string out_path;
    int points = 1000;
};

// Re-propagates the stored solution and writes a uniform time grid, which is
// friendlier to plotting than the adaptive step points.
int cmd_export(const ExportArgs& args) {
    const lander::SolutionBundle b = lander::read_solution(args.dir);
    const lander::Scenario& sc = b.scenario;
    if (args.points < 2) throw lander::ConfigError("export: --points must be >= 2");

    const lander::Trajectory traj =
        lander::propagate(sc.x0, b.unknowns.costate(), b.unknowns.tf, sc.env, sc.reg,
                          sc.mode, sc.integrator);

    lander::Trajectory grid;
    grid.mode = traj.mode;
    grid.env = traj.env;
    grid.reg = traj.reg;
    const double tf = traj.final_time();
    for (int i = 0; i < args.points; ++i) {
        const double t = tf * static_cast<double>(i) / (args.points - 1);
        const auto [x, p] = traj.sample(t);
        const lander::ControlEval ce = lander::evaluate_control(x, p, sc.env, sc.reg, sc.mode);
        grid.times.push_back(t);
        grid.states.push_back(x);
        grid.costates.push_back(p);
        grid.controls.push_back(ce.control);
        grid.switching_values.push_back(ce.switching);
        grid.hamiltonian_values.push_back(
            lander::hamiltonian(x, p, ce.control, sc.env, sc.reg, sc.mode));
        grid.delta_values.push_back(
            sc.mode == lander::Mode::VerticalLanding
                ? lander::regularization_term(x.z, ce.control.theta, sc.reg)
                : 0.0);
    }
    const std::string out = args.out_path.empty() ? args.dir + "/plot.csv" : args.out_path;
    lander::export_trajectory(grid, out);
    std::printf("wrote %s (%d points)\n", out.c_str(), args.points);
    return kExitOk;
}

template <typename F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const lander::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const lander::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitSolver;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fuel-optimal lunar soft landing by indirect shooting"};
    app.require_subcommand(1);

    SolveArgs solve_args;
    CLI::App* solve = app.add_subcommand("solve", "solve one landing problem");
    solve->add_option("--scenario", solve_args.scenario_path, "scenario JSON path")
        ->required();
    solve->add_option("--mode", solve_args.mode, "unconstrained|vertical");
    solve->add_option("--out", solve_args.out_dir, "directory for the solution bundle");
    solve->add_option("--seed", solve_args.seed, "multi-start RNG seed");
    solve->add_option("--starts", solve_args.starts, "number of multi-start attempts");
    solve->add_flag("--json", solve_args.json, "machine-readable output");

    BatchArgs batch_args;
    CLI::App* batch = app.add_subcommand("batch", "Monte Carlo batch over the landing domain");
    batch->add_option("--scenario", batch_args.scenario_path,
                      "base scenario JSON (defaults used when omitted)");
    batch->add_option("--mode", batch_args.mode, "unconstrained|vertical");
    batch->add_option("--out", batch_args.out_dir, "directory for summary and case CSVs");
    batch->add_option("--n", batch_args.n, "number of cases")->check(CLI::PositiveNumber);
    batch->add_option("--seed", batch_args.seed, "sampling seed");
    batch->add_option("--min-rate", batch_args.min_rate,
                      "minimum convergence rate for exit 0");
    batch->add_flag("--json", batch_args.json, "machine-readable output");

    VerifyArgs verify_args;
    CLI::App* verify = app.add_subcommand("verify", "run oracle checks on a stored solution");
    verify->add_option("dir", verify_args.dir, "solution bundle directory")->required();
    verify->add_option("--check", verify_args.checks,
                       "subset of checks: drift, steering, adjoint");
    verify->add_flag("--json", verify_args.json, "machine-readable output");

    ExportArgs export_args;
    CLI::App* exp = app.add_subcommand("export", "resample a stored solution for plotting");
    exp->add_option("dir", export_args.dir, "solution bundle directory")->required();
    exp->add_option("--out", export_args.out_path, "output CSV path (default dir/plot.csv)");
    exp->add_option("--points", export_args.points, "number of uniform time samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    solve_args.seed_set = solve->count("--seed") > 0;

    if (solve->parsed()) return guarded([&] { return cmd_solve(solve_args); });
    if (batch->parsed()) return guarded([&] { return cmd_batch(batch_args); });
    if (verify->parsed()) return guarded([&] { return cmd_verify(verify_args); });
    if (exp->parsed()) return guarded([&] { return cmd_export(export_args); });
    return kExitConfig;
}
