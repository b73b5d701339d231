#include "doctest.h"

#include <cmath>
#include <random>

#include "lander/control.hpp"
#include "lander/scenario.hpp"
#include "lander/shooting.hpp"
#include "lander/steering.hpp"

using namespace lander;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::mt19937_64 seeded_rng() { return std::mt19937_64(0x5eed0003u); }

double uniform(std::mt19937_64& rng, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
}

}  // namespace

TEST_CASE("smoothed thrust ratio pinned values") {
    CHECK(smoothed_thrust_ratio(0.0, 1e-10) == 0.5);
    CHECK(smoothed_thrust_ratio(-1.0, 1e-10) ==
          doctest::Approx(0.999999999975).epsilon(1e-14));
    CHECK(smoothed_thrust_ratio(1.0, 1e-10) ==
          doctest::Approx(2.5000002068509275e-11).epsilon(1e-10));
    CHECK(smoothed_thrust_ratio(0.5, 1e-10) ==
          doctest::Approx(1.000000082740371e-10).epsilon(1e-10));
    CHECK(smoothed_thrust_ratio(-0.25, 1e-10) ==
          doctest::Approx(0.99999999960000008).epsilon(1e-14));
    CHECK_THROWS_AS(smoothed_thrust_ratio(0.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(smoothed_thrust_ratio(0.0, -1e-3), std::domain_error);
    CHECK_THROWS_AS(smoothed_thrust_ratio(std::nan(""), 1e-10), std::domain_error);
}

TEST_CASE("smoothed thrust ratio bounds, monotonicity, symmetry") {
    auto rng = seeded_rng();
    const double deltas[] = {1e-2, 1e-6, 1e-10};
    for (int i = 0; i < 10000; ++i) {
        const double d = deltas[i % 3];
        const double s1 = uniform(rng, -3, 3);
        const double s2 = uniform(rng, -3, 3);
        const double u1 = smoothed_thrust_ratio(s1, d);
        const double u2 = smoothed_thrust_ratio(s2, d);
        CHECK(u1 > 0.0);
        CHECK(u1 < 1.0);
        if (s1 < s2) CHECK(u1 > u2);
        if (s1 > s2) CHECK(u1 < u2);
        CHECK(smoothed_thrust_ratio(-s1, d) + u1 == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("smoothed thrust ratio approaches bang-bang as delta shrinks") {
    auto rng = seeded_rng();
    for (double delta : {1e-2, 1e-6, 1e-10}) {
        for (int i = 0; i < 300; ++i) {
            double s = uniform(rng, 0.05, 3.0) * (i % 2 ? 1.0 : -1.0);
            const double u = smoothed_thrust_ratio(s, delta);
            const double bang = s < 0.0 ? 1.0 : 0.0;
            CHECK(std::abs(u - bang) <= delta / (s * s));
        }
    }
}

TEST_CASE("switching function closed forms") {
    VehicleEnv env;
    RegularizationParams reg;
    auto rng = seeded_rng();
    for (int i = 0; i < 3000; ++i) {
        LanderState x{uniform(rng, -500, 500), uniform(rng, 0, 1500), uniform(rng, -100, 100),
                      uniform(rng, -100, 100), uniform(rng, 8000, 9500)};
        Costate p{uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2),
                  uniform(rng, -2, 2), uniform(rng, -2, 2)};
        const double theta = uniform(rng, -kPi, kPi);

        const double acc = env.t_max / x.m;
        const double rate = env.t_max * p.pm / (env.isp * env.g0);

        const double su = switching_function(x, p, theta, env, reg, Mode::Unconstrained);
        CHECK(su == doctest::Approx(1.0 - rate - acc * std::hypot(p.pvy, p.pvz)).epsilon(1e-13));

        const double sv = switching_function(x, p, theta, env, reg, Mode::VerticalLanding);
        const double proj = p.pvy * std::sin(theta) + p.pvz * std::cos(theta);
        CHECK(sv == doctest::Approx(acc * proj - rate + 1.0 +
                                    regularization_term(x.z, theta, reg))
                        .epsilon(1e-13));
    }
}

TEST_CASE("switching function is the hamiltonian's thrust coefficient") {
    VehicleEnv env;
    RegularizationParams reg;
    auto rng = seeded_rng();
    for (int i = 0; i < 2000; ++i) {
        LanderState x{uniform(rng, -500, 500), uniform(rng, 0, 1500), uniform(rng, -100, 100),
                      uniform(rng, -100, 100), uniform(rng, 8000, 9500)};
        Costate p{uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2),
                  uniform(rng, -2, 2), uniform(rng, -2, 2)};
        const double u = uniform(rng, 0, 1);

        // Vertical mode: H is affine in u at any fixed steering angle.
        const double th = uniform(rng, -kPi, kPi);
        const double h0 = hamiltonian(x, p, {0.0, th}, env, reg, Mode::VerticalLanding);
        const double h1 = hamiltonian(x, p, {u, th}, env, reg, Mode::VerticalLanding);
        const double sv = switching_function(x, p, th, env, reg, Mode::VerticalLanding);
        CHECK(h1 - h0 == doctest::Approx(u * sv).epsilon(1e-11));

        // Unconstrained mode: the closed form assumes the optimal direction.
        if (p.pvy != 0.0 || p.pvz != 0.0) {
            UnconstrainedSteering st = steering_unconstrained(p.pvy, p.pvz);
            const double g0 = hamiltonian(x, p, {0.0, st.theta}, env, reg, Mode::Unconstrained);
            const double g1 = hamiltonian(x, p, {u, st.theta}, env, reg, Mode::Unconstrained);
            const double su = switching_function(x, p, st.theta, env, reg, Mode::Unconstrained);
            CHECK(g1 - g0 == doctest::Approx(u * su).epsilon(1e-11));
        }
    }
}

TEST_CASE("vertical switching matches unconstrained when the weight vanishes") {
    VehicleEnv env;
    RegularizationParams reg;
    auto rng = seeded_rng();
    for (int i = 0; i < 500; ++i) {
        LanderState x{0, 1500.0, 0, 0, uniform(rng, 8000, 9500)};
        Costate p{0, 0, uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -1, 1)};
        if (std::hypot(p.pvy, p.pvz) < 1e-6) continue;
        UnconstrainedSteering st = steering_unconstrained(p.pvy, p.pvz);
        const double su = switching_function(x, p, st.theta, env, reg, Mode::Unconstrained);
        const double sv = switching_function(x, p, st.theta, env, reg, Mode::VerticalLanding);
        CHECK(sv == doctest::Approx(su).epsilon(1e-8).scale(1.0));
    }
}

TEST_CASE("switch detection on the reference case") {
    Scenario sc;
    sc.name = "reference";
    sc.x0 = {-61.0, 145.0, 14.0, -28.0, 9444.0};

    sc.mode = Mode::Unconstrained;
    SolveReport unc = solve_multi_start(sc);
    REQUIRE(unc.converged);
    std::vector<SwitchRecord> su = detect_switches(unc.trajectory);
    REQUIRE(su.size() == 1);
    CHECK(su[0].direction == SwitchDirection::OffToOn);
    CHECK(su[0].time == doctest::Approx(0.0748).epsilon(0).scale(1.0).epsilon(0.04));
    CHECK(std::abs(su[0].time - 0.0748) <= 0.003);

    sc.mode = Mode::VerticalLanding;
    SolveReport vert = solve_multi_start(sc);
    REQUIRE(vert.converged);
    std::vector<SwitchRecord> sv = detect_switches(vert.trajectory);
    REQUIRE(sv.size() == 1);
    CHECK(sv[0].direction == SwitchDirection::OffToOn);
    CHECK(std::abs(sv[0].time - 0.0811) <= 0.003);

    // Crossing refinement resolves the time to the advertised tolerance:
    // the stored sample grid is far coarser than 1e-6 s.
    const Trajectory& tr = unc.trajectory;
    const double t_sw = su[0].time;
    CHECK(tr.control_at(t_sw - 1e-4).switching > 0.0);
    CHECK(tr.control_at(t_sw + 1e-4).switching < 0.0);
}

TEST_CASE("switch detection handles empty and constant-sign inputs") {
    Trajectory t;
    CHECK(detect_switches(t).empty());
}
