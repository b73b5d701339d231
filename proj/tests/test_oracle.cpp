#include "doctest.h"

#include <cmath>

#include "lander/oracle.hpp"

using namespace lander;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Reference landing case and its converged unknowns, frozen from solver
// output.
const LanderState kRefState{-61.0, 145.0, 14.0, -28.0, 9444.0};

const Costate kUncCostate{0.0032574074749976314, 0.012519899416821913, 0.0934507396047913,
                          -0.18790651689924787, 0.0013067374605796249};
const double kUncTf = 9.977934892929914;

const Costate kVertCostate{-0.00022562451086220237, 0.011027709598655825, 0.08409689048219307,
                           -0.1922081572124052, 0.0013059244813480961};
const double kVertTf = 9.999361198645575;

Trajectory solved_trajectory(Mode mode) {
    VehicleEnv env;
    RegularizationParams reg;
    IntegratorConfig cfg;
    cfg.abs_tol = 1e-12;
    cfg.rel_tol = 1e-12;
    const bool vert = mode == Mode::VerticalLanding;
    return propagate(kRefState, vert ? kVertCostate : kUncCostate, vert ? kVertTf : kUncTf,
                     env, reg, mode, cfg);
}

void check_report_consistency(const OracleReport& rep) {
    CHECK(rep.passed == (rep.max_error <= rep.tolerance));
    CHECK(rep.max_error >= 0.0);
    CHECK(!rep.name.empty());
}

}  // namespace

TEST_CASE("steering solver agrees with a dense angle grid") {
    VehicleEnv env;
    RegularizationParams reg;
    const std::size_t grid = 20000;
    const double spacing = 2.0 * kPi / static_cast<double>(grid);

    OracleReport rep = grid_scan_steering(env, reg, 0x5eed0006u, 200, grid, spacing + 1e-12);
    check_report_consistency(rep);
    CHECK(rep.passed);
    CHECK(rep.samples == 200);
    CHECK(rep.max_error > 0.0);

    // A finer grid pins the argmin tighter.
    OracleReport fine =
        grid_scan_steering(env, reg, 0x5eed0006u, 200, 2 * grid, 0.5 * spacing + 1e-12);
    check_report_consistency(fine);
    CHECK(fine.passed);
    CHECK(fine.max_error < rep.tolerance);

    // The grid cannot resolve angles below its spacing.
    OracleReport hopeless = grid_scan_steering(env, reg, 0x5eed0006u, 200, grid, 1e-9);
    check_report_consistency(hopeless);
    CHECK_FALSE(hopeless.passed);

    // A scan with no samples proves nothing and must not pass.
    OracleReport empty = grid_scan_steering(env, reg, 1, 0, grid, 1.0);
    CHECK(empty.samples == 0);
    CHECK_FALSE(empty.passed);
}

TEST_CASE("adjoint rates match Hamiltonian finite differences") {
    VehicleEnv env;
    RegularizationParams reg;
    for (Mode mode : {Mode::Unconstrained, Mode::VerticalLanding}) {
        OracleReport rep = fd_costate_check(mode, env, reg, 0x5eed0006u, 300, 1e-6);
        check_report_consistency(rep);
        CHECK(rep.passed);
        CHECK(rep.samples == 300);
        CHECK(rep.max_error > 0.0);
    }
    // Finite differences carry truncation error, so an exact-match demand
    // must fail.
    OracleReport strict =
        fd_costate_check(Mode::VerticalLanding, env, reg, 0x5eed0006u, 300, 1e-16);
    check_report_consistency(strict);
    CHECK_FALSE(strict.passed);
}

TEST_CASE("hamiltonian stays flat along converged extremals") {
    for (Mode mode : {Mode::Unconstrained, Mode::VerticalLanding}) {
        Trajectory traj = solved_trajectory(mode);
        OracleReport rep = hamiltonian_drift_check(traj, 1e-6);
        check_report_consistency(rep);
        CHECK(rep.passed);
        CHECK(rep.samples > 10);

        // The stored-sample overload sees the same flat profile.
        OracleReport parsed = hamiltonian_drift_check(traj.states, traj.costates, traj.env,
                                                      traj.reg, traj.mode, 1e-6);
        check_report_consistency(parsed);
        CHECK(parsed.passed);
    }
}

TEST_CASE("hamiltonian check rejects a non-extremal trajectory") {
    VehicleEnv env;
    RegularizationParams reg;
    IntegratorConfig cfg;
    // Bumping pm0 flips the switching function negative from the start, so
    // the flow conserves a Hamiltonian far from zero.
    Costate p0 = kUncCostate;
    p0.pm += 0.1;
    Trajectory traj = propagate(kRefState, p0, 5.0, env, reg, Mode::Unconstrained, cfg);
    OracleReport rep = hamiltonian_drift_check(traj, 1e-6);
    check_report_consistency(rep);
    CHECK_FALSE(rep.passed);
    CHECK(rep.max_error > 1e-3);
}
