#include "lander/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lander/control.hpp"
#include "lander/oracle.hpp"

namespace lander {

namespace {

using ordered_json = nlohmann::ordered_json;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    const double x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * x;
}

// splitmix64 finalizer, decorrelates per-case solver seeds.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void reject_unknown_keys(const ordered_json& obj, const char* where,
                         std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError(std::string(where) + ": unknown field '" + it.key() + "'");
    }
}

double num_field(const ordered_json& obj, const char* where, const char* key) {
    if (!obj.contains(key))
        throw ConfigError(std::string(where) + ": missing required field '" + key + "'");
    const auto& v = obj.at(key);
    if (!v.is_number())
        throw ConfigError(std::string(where) + "." + key + " must be a number");
    return v.get<double>();
}

void opt_num(const ordered_json& obj, const char* where, const char* key, double& target) {
    if (obj.contains(key)) target = num_field(obj, where, key);
}

void opt_int(const ordered_json& obj, const char* where, const char* key, int& target) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer())
        throw ConfigError(std::string(where) + "." + key + " must be an integer");
    target = v.get<int>();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Mode parse_mode(const std::string& s) {
    if (s == "unconstrained") return Mode::Unconstrained;
    if (s == "vertical") return Mode::VerticalLanding;
    throw ConfigError("mode must be \"unconstrained\" or \"vertical\", got \"" + s + "\"");
}

Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open scenario file: " + path);

    ordered_json j;
    try {
        j = ordered_json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("scenario parse error in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("scenario: top level must be an object");
    reject_unknown_keys(j, "scenario",
                        {"initial_state", "env", "reg", "mode", "integrator", "solver"});

    Scenario sc;
    sc.name = std::filesystem::path(path).stem().string();

    if (!j.contains("initial_state"))
        throw ConfigError("scenario: missing required field 'initial_state'");
    {
        const auto& o = j.at("initial_state");
        if (!o.is_object()) throw ConfigError("initial_state must be an object");
        reject_unknown_keys(o, "initial_state", {"y", "z", "vy", "vz", "m"});
        sc.x0.y = num_field(o, "initial_state", "y");
        sc.x0.z = num_field(o, "initial_state", "z");
        sc.x0.vy = num_field(o, "initial_state", "vy");
        sc.x0.vz = num_field(o, "initial_state", "vz");
        sc.x0.m = num_field(o, "initial_state", "m");
    }
    if (j.contains("env")) {
        const auto& o = j.at("env");
        if (!o.is_object()) throw ConfigError("env must be an object");
        reject_unknown_keys(o, "env", {"t_max", "isp", "g_moon", "g0"});
        opt_num(o, "env", "t_max", sc.env.t_max);
        opt_num(o, "env", "isp", sc.env.isp);
        opt_num(o, "env", "g_moon", sc.env.g_moon);
        opt_num(o, "env", "g0", sc.env.g0);
    }
    if (j.contains("reg")) {
        const auto& o = j.at("reg");
        if (!o.is_object()) throw ConfigError("reg must be an object");
        reject_unknown_keys(o, "reg", {"beta", "eps", "delta"});
        opt_num(o, "reg", "beta", sc.reg.beta);
        opt_num(o, "reg", "eps", sc.reg.eps);
        opt_num(o, "reg", "delta", sc.reg.delta);
    }
    if (j.contains("mode")) {
        const auto& o = j.at("mode");
        if (!o.is_string()) throw ConfigError("mode must be a string");
        sc.mode = parse_mode(o.get<std::string>());
    }
    if (j.contains("integrator")) {
        const auto& o = j.at("integrator");
        if (!o.is_object()) throw ConfigError("integrator must be an object");
        reject_unknown_keys(o, "integrator", {"abs_tol", "rel_tol"});
        opt_num(o, "integrator", "abs_tol", sc.integrator.abs_tol);
        opt_num(o, "integrator", "rel_tol", sc.integrator.rel_tol);
    }
    if (j.contains("solver")) {
        const auto& o = j.at("solver");
        if (!o.is_object()) throw ConfigError("solver must be an object");
        reject_unknown_keys(o, "solver", {"max_iter", "n_starts", "seed"});
        opt_int(o, "solver", "max_iter", sc.solver.max_iter);
        opt_int(o, "solver", "n_starts", sc.solver.n_starts);
        if (o.contains("seed")) {
            const auto& v = o.at("seed");
            if (!v.is_number_integer())
                throw ConfigError("solver.seed must be an integer");
            sc.solver.seed = v.get<std::uint64_t>();
        }
    }

    if (!(sc.x0.z > 0.0)) throw ConfigError("scenario: initial z > 0 violated");
    if (!(sc.x0.m > 0.0)) throw ConfigError("scenario: initial m > 0 violated");
    try {
        sc.env.validate();
        sc.reg.validate();
        sc.integrator.validate();
        sc.solver.validate();
    } catch (const std::domain_error& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    return sc;
}

std::vector<LanderState> sample_initial_states(const DomainBox& box, int n,
                                               std::uint64_t seed) {
    box.validate();
    if (n < 1) throw ConfigError("sample_initial_states: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<LanderState> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        LanderState x;
        x.y = uniform(rng, box.y0.lo, box.y0.hi);
        x.z = uniform(rng, box.z0.lo, box.z0.hi);
        x.vy = uniform(rng, box.vy0.lo, box.vy0.hi);
        x.vz = uniform(rng, box.vz0.lo, box.vz0.hi);
        x.m = uniform(rng, box.m0.lo, box.m0.hi);
        out.push_back(x);
    }
    return out;
}

int thread_budget(int requested) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    int n = requested > 0 ? requested : hw;
    if (const char* env = std::getenv("LANDER_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1)
            n = std::min(n, static_cast<int>(v));
    }
    return std::max(1, n);
}

namespace {

std::string case_csv_path(const std::string& dir, int index) {
    char name[32];
    std::snprintf(name, sizeof name, "case_%04d.csv", index);
    return dir + "/" + name;
}

}  // namespace

BatchSummary run_batch(const Scenario& base, const DomainBox& box, const BatchOptions& opts) {
    if (opts.n < 1) throw ConfigError("run_batch: n must be >= 1");
    const auto t_start = std::chrono::steady_clock::now();

    const std::vector<LanderState> starts = sample_initial_states(box, opts.n, opts.seed);
    if (!opts.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(opts.out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + opts.out_dir);
    }

    std::vector<CaseResult> results(static_cast<std::size_t>(opts.n));
    std::atomic<int> next{0};

    auto run_case = [&](int i) {
        CaseResult r;
        r.index = i;
        r.x0 = starts[static_cast<std::size_t>(i)];
        Scenario sc = base;
        sc.x0 = r.x0;
        sc.mode = opts.mode;
        sc.solver.seed = mix64(opts.seed ^ static_cast<std::uint64_t>(i + 1));
        try {
            SolveReport rep = solve_multi_start(sc);
            r.iterations = rep.iterations;
            r.starts_tried = rep.starts_tried;
            r.residual_norm = rep.residual_norm;
            if (!rep.converged) {
                r.failure = rep.failure;
                return r;
            }
            const OracleReport drift = hamiltonian_drift_check(rep.trajectory, 1e-6);
            r.max_scaled_h = drift.max_error;
            if (!drift.passed) {
                r.failure = "Hamiltonian drift check failed";
                return r;
            }
            r.converged = true;
            const Trajectory& traj = rep.trajectory;
            r.final_time = traj.final_time();
            r.final_mass = traj.final_state().m;
            r.final_theta = traj.controls.back().theta;
            r.final_speed = std::hypot(traj.final_state().vy, traj.final_state().vz);
            r.final_miss = std::hypot(traj.final_state().y, traj.final_state().z);
            r.fuel_used = rep.fuel_used;
            for (const SwitchRecord& sw : detect_switches(traj))
                r.switch_times.push_back(sw.time);
            if (!opts.out_dir.empty())
                export_trajectory(traj, case_csv_path(opts.out_dir, i));
        } catch (const std::exception& e) {
            r.converged = false;
            r.failure = e.what();
        }
        return r;
    };

    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= opts.n) return;
            results[static_cast<std::size_t>(i)] = run_case(i);
        }
    };

    const int n_threads = std::min(thread_budget(opts.max_threads), opts.n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads - 1));
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    BatchSummary sum;
    sum.n_total = opts.n;
    sum.cases = std::move(results);
    double time_acc = 0.0, fuel_acc = 0.0;
    for (const CaseResult& r : sum.cases) {
        if (!r.converged) continue;
        ++sum.n_converged;
        sum.max_abs_final_theta = std::max(sum.max_abs_final_theta, std::fabs(r.final_theta));
        sum.max_final_speed = std::max(sum.max_final_speed, r.final_speed);
        sum.max_final_miss = std::max(sum.max_final_miss, r.final_miss);
        time_acc += r.final_time;
        fuel_acc += r.fuel_used;
    }
    if (sum.n_converged > 0) {
        sum.mean_final_time = time_acc / sum.n_converged;
        sum.mean_fuel_used = fuel_acc / sum.n_converged;
    }
    sum.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sum;
}

void export_trajectory(const Trajectory& traj, const std::string& path) {
    if (traj.size() == 0)
        throw std::invalid_argument("export_trajectory: trajectory is empty");
    std::ofstream f(path);
    if (!f) throw IoError("cannot write trajectory file: " + path);
    f << "t,y,z,vy,vz,m,theta,u,S,H,Delta\n";
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const LanderState& x = traj.states[i];
        const ControlSample& c = traj.controls[i];
        f << fmt(traj.times[i]) << ',' << fmt(x.y) << ',' << fmt(x.z) << ',' << fmt(x.vy)
          << ',' << fmt(x.vz) << ',' << fmt(x.m) << ',' << fmt(c.theta) << ',' << fmt(c.u)
          << ',' << fmt(traj.switching_values[i]) << ',' << fmt(traj.hamiltonian_values[i])
          << ',' << fmt(traj.delta_values[i]) << '\n';
    }
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

namespace {

ordered_json state_json(const LanderState& x) {
    return {{"y", x.y}, {"z", x.z}, {"vy", x.vy}, {"vz", x.vz}, {"m", x.m}};
}

// Rows of a comma-separated numeric file whose header must match exactly.
std::vector<std::vector<double>> read_csv(const std::string& path,
                                          const std::string& expected_header) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open file: " + path);
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw ConfigError(path + ": unexpected header '" + line + "'");

    const std::size_t n_cols = std::count(expected_header.begin(), expected_header.end(), ',') + 1;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(n_cols);
        const char* s = line.c_str();
        for (;;) {
            char* end = nullptr;
            const double v = std::strtod(s, &end);
            if (end == s)
                throw ConfigError(path + ": bad number at line " + std::to_string(line_no));
            row.push_back(v);
            if (*end == ',') {
                s = end + 1;
            } else if (*end == '\0') {
                break;
            } else {
                throw ConfigError(path + ": unexpected character at line " +
                                  std::to_string(line_no));
            }
        }
        if (row.size() != n_cols)
            throw ConfigError(path + ": wrong column count at line " + std::to_string(line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError(path + ": no data rows");
    return rows;
}

}  // namespace

std::string batch_summary_json(const BatchSummary& summary) {
    ordered_json j;
    j["n_total"] = summary.n_total;
    j["n_converged"] = summary.n_converged;
    j["aggregates"] = {{"max_abs_final_theta", summary.max_abs_final_theta},
                       {"max_final_speed", summary.max_final_speed},
                       {"max_final_miss", summary.max_final_miss},
                       {"mean_final_time", summary.mean_final_time},
                       {"mean_fuel_used", summary.mean_fuel_used}};
    ordered_json cases = ordered_json::array();
    for (const CaseResult& r : summary.cases) {
        ordered_json c;
        c["index"] = r.index;
        c["x0"] = state_json(r.x0);
        c["converged"] = r.converged;
        c["final_time"] = r.final_time;
        c["final_mass"] = r.final_mass;
        c["final_theta"] = r.final_theta;
        c["final_speed"] = r.final_speed;
        c["final_miss"] = r.final_miss;
        c["fuel_used"] = r.fuel_used;
        c["switch_times"] = r.switch_times;
        c["iterations"] = r.iterations;
        c["starts_tried"] = r.starts_tried;
        c["residual_norm"] = r.residual_norm;
        c["max_scaled_h"] = r.max_scaled_h;
        c["failure"] = r.failure;
        cases.push_back(std::move(c));
    }
    j["cases"] = std::move(cases);
    return j.dump(2);
}

void write_batch_summary(const BatchSummary& summary, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write summary file: " + path);
    f << batch_summary_json(summary) << '\n';
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

void write_solution(const SolveReport& report, const Scenario& sc, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir);

    ordered_json j;
    j["name"] = sc.name;
    j["mode"] = mode_name(sc.mode);
    j["initial_state"] = state_json(sc.x0);
    j["env"] = {{"t_max", sc.env.t_max},
                {"isp", sc.env.isp},
                {"g_moon", sc.env.g_moon},
                {"g0", sc.env.g0}};
    j["reg"] = {{"beta", sc.reg.beta}, {"eps", sc.reg.eps}, {"delta", sc.reg.delta}};
    j["integrator"] = {{"abs_tol", sc.integrator.abs_tol}, {"rel_tol", sc.integrator.rel_tol}};
    j["unknowns"] = {{"py0", report.unknowns.py0},   {"pz0", report.unknowns.pz0},
                     {"pvy0", report.unknowns.pvy0}, {"pvz0", report.unknowns.pvz0},
                     {"pm0", report.unknowns.pm0},   {"tf", report.unknowns.tf}};
    ordered_json res;
    res["converged"] = report.converged;
    res["iterations"] = report.iterations;
    res["starts_tried"] = report.starts_tried;
    res["residual_norm"] = report.residual_norm;
    res["fuel_used"] = report.fuel_used;
    res["final_time"] = report.trajectory.final_time();
    res["final_mass"] = report.trajectory.final_state().m;
    res["final_theta"] = report.trajectory.controls.back().theta;
    ordered_json switches = ordered_json::array();
    for (const SwitchRecord& sw : detect_switches(report.trajectory))
        switches.push_back(sw.time);
    res["switch_times"] = std::move(switches);
    j["result"] = std::move(res);

    {
        std::ofstream f(dir + "/solution.json");
        if (!f) throw IoError("cannot write " + dir + "/solution.json");
        f << j.dump(2) << '\n';
        f.flush();
        if (!f) throw IoError("write failed: " + dir + "/solution.json");
    }

    export_trajectory(report.trajectory, dir + "/trajectory.csv");

    {
        const Trajectory& traj = report.trajectory;
        std::ofstream f(dir + "/costates.csv");
        if (!f) throw IoError("cannot write " + dir + "/costates.csv");
        f << "t,py,pz,pvy,pvz,pm\n";
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const Costate& p = traj.costates[i];
            f << fmt(traj.times[i]) << ',' << fmt(p.py) << ',' << fmt(p.pz) << ','
              << fmt(p.pvy) << ',' << fmt(p.pvz) << ',' << fmt(p.pm) << '\n';
        }
        f.flush();
        if (!f) throw IoError("write failed: " + dir + "/costates.csv");
    }
}

SolutionBundle read_solution(const std::string& dir) {
    SolutionBundle b;

    std::ifstream f(dir + "/solution.json");
    if (!f) throw IoError("cannot open " + dir + "/solution.json");
    ordered_json j;
    try {
        j = ordered_json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("solution parse error in " + dir + ": " + e.what());
    }

    try {
        b.scenario.name = j.at("name").get<std::string>();
        b.scenario.mode = parse_mode(j.at("mode").get<std::string>());
        const auto& xs = j.at("initial_state");
        b.scenario.x0 = {xs.at("y").get<double>(), xs.at("z").get<double>(),
                         xs.at("vy").get<double>(), xs.at("vz").get<double>(),
                         xs.at("m").get<double>()};
        const auto& env = j.at("env");
        b.scenario.env = {env.at("t_max").get<double>(), env.at("isp").get<double>(),
                          env.at("g_moon").get<double>(), env.at("g0").get<double>()};
        const auto& reg = j.at("reg");
        b.scenario.reg = {reg.at("beta").get<double>(), reg.at("eps").get<double>(),
                          reg.at("delta").get<double>()};
        const auto& integ = j.at("integrator");
        b.scenario.integrator.abs_tol = integ.at("abs_tol").get<double>();
        b.scenario.integrator.rel_tol = integ.at("rel_tol").get<double>();
        const auto& u = j.at("unknowns");
        b.unknowns = {u.at("py0").get<double>(),  u.at("pz0").get<double>(),
                      u.at("pvy0").get<double>(), u.at("pvz0").get<double>(),
                      u.at("pm0").get<double>(),  u.at("tf").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("solution.json in " + dir + " is malformed: " + e.what());
    }

    const auto traj_rows = read_csv(dir + "/trajectory.csv", "t,y,z,vy,vz,m,theta,u,S,H,Delta");
    const auto cost_rows = read_csv(dir + "/costates.csv", "t,py,pz,pvy,pvz,pm");
    if (traj_rows.size() != cost_rows.size())
        throw ConfigError(dir + ": trajectory.csv and costates.csv row counts differ");

    for (std::size_t i = 0; i < traj_rows.size(); ++i) {
        const auto& t = traj_rows[i];
        const auto& c = cost_rows[i];
        if (std::fabs(t[0] - c[0]) > 1e-12 * std::max(1.0, std::fabs(t[0])))
            throw ConfigError(dir + ": time columns disagree at row " + std::to_string(i));
        b.times.push_back(t[0]);
        b.states.push_back({t[1], t[2], t[3], t[4], t[5]});
        b.controls.push_back({t[7], t[6]});
        b.switching_values.push_back(t[8]);
        b.hamiltonian_values.push_back(t[9]);
        b.delta_values.push_back(t[10]);
        b.costates.push_back({c[1], c[2], c[3], c[4], c[5]});
    }
    return b;
}

}  // namespace lander
