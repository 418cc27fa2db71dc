#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "voltmargin/error.hpp"
#include "voltmargin/grid_model.hpp"
#include "voltmargin/load_model.hpp"

using namespace voltmargin;

namespace {

LoadDynParams unit_load() {
    LoadDynParams l;
    l.bus = 2;
    l.p0 = 1.0;
    l.q0 = 0.5;
    return l;
}

// Writes z back into the state following the solver's column order: angles
// of the non-slack buses, then magnitudes of the PQ-behaving buses.
void set_z(const GridModel& m, GridState& s, const Eigen::VectorXd& z) {
    const auto& buses = m.network().buses;
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].kind != BusKind::Slack) s.theta[static_cast<Eigen::Index>(i)] = z[k++];
    }
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const bool pq = buses[i].kind == BusKind::PQ ||
                        (buses[i].kind == BusKind::PV && s.qlimit[i] != QLimit::Free);
        if (pq) s.v[static_cast<Eigen::Index>(i)] = z[k++];
    }
    REQUIRE(k == z.size());
}

Eigen::MatrixXd fd_jacobian(const GridModel& m, const GridState& s, LoadMode mode) {
    const Eigen::VectorXd z0 = m.algebraic_vector(s);
    const double h = 1e-6;
    Eigen::MatrixXd J(z0.size(), z0.size());
    for (Eigen::Index c = 0; c < z0.size(); ++c) {
        GridState sp = s, sm = s;
        Eigen::VectorXd zp = z0, zm = z0;
        zp[c] += h;
        zm[c] -= h;
        set_z(m, sp, zp);
        set_z(m, sm, zm);
        J.col(c) = (m.algebraic_residuals(sp, mode) - m.algebraic_residuals(sm, mode)) / (2 * h);
    }
    return J;
}

double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(1.0, std::abs(a(i, j))));
        }
    }
    return worst;
}

GridState solved_at(const GridModel& m, double lambda) {
    GridState s = m.initial_guess();
    s.eta.eta.assign(m.noise_dim(), 0.0);
    s.lambda = lambda;
    REQUIRE(m.initialize_equilibrium(s).ok());
    return s;
}

}  // namespace

TEST_CASE("load consumption") {
    LoadDynParams l = unit_load();
    const auto nominal = load_consumption(l, 1.0, 0.0, 0.0, 0.0, 0.0);
    CHECK(nominal.p == doctest::Approx(1.0));
    CHECK(nominal.q == doctest::Approx(0.5));
    CHECK(load_consumption(l, 0.95, 0.0, 0.0, 0.0, 0.0).p == doctest::Approx(0.9025));
    l.tp = 10.0;
    CHECK(load_consumption(l, 1.0, 0.1, 0.0, 0.0, 0.0).p == doctest::Approx(1.01));
    // Ramp and fluctuation enter the nominal power.
    l = unit_load();
    CHECK(load_consumption(l, 1.0, 0.0, 0.0, 0.5, 0.1).p == doctest::Approx(1.6));
    CHECK(load_consumption(l, 1.0, 0.0, 0.0, 0.5, 0.1).q == doctest::Approx(0.85));
    l.ramped = false;
    CHECK(load_consumption(l, 1.0, 0.0, 0.0, 0.5, 0.0).p == doctest::Approx(1.0));
    CHECK_THROWS_AS(load_consumption(l, 0.0, 0.0, 0.0, 0.0, 0.0), NumericalError);
    CHECK_THROWS_AS(load_consumption(l, -0.1, 0.0, 0.0, 0.0, 0.0), NumericalError);
}

TEST_CASE("load state derivative") {
    LoadDynParams l = unit_load();
    l.tp = 2.0;
    l.tq = 4.0;
    const auto r = load_state_derivative(l, 1.0, 0.3, -0.2, 0.7, 0.05);
    CHECK(r.xp_dot == doctest::Approx(-0.15));
    CHECK(r.xq_dot == doctest::Approx(0.05));
    CHECK(load_state_derivative(unit_load(), 0.95, 0.0, 0.0, 0.0, 0.0).xp_dot == doctest::Approx(0.0975));
    const auto ss = load_steady_consumption(l, 0.9, 0.0, 0.0);
    const double xp = l.tp * (ss.p - 0.81);
    CHECK(load_state_derivative(l, 0.9, xp, 0.0, 0.0, 0.0).xp_dot == doctest::Approx(0.0).epsilon(1e-15));

    LoadDynParams st = unit_load();
    st.dynamic = false;
    const auto z = load_state_derivative(st, 0.9, 0.0, 0.0, 0.0, 0.0);
    CHECK(z.xp_dot == 0.0);
    CHECK(z.xq_dot == 0.0);
}

TEST_CASE("load validation") {
    LoadDynParams l = unit_load();
    l.tp = 0.0;
    CHECK_THROWS_AS(l.validate(), InvalidArgument);
    l = unit_load();
    l.p0 = -1.0;
    CHECK_THROWS_AS(l.validate(), InvalidArgument);
    l = unit_load();
    l.v0 = 0.0;
    CHECK_THROWS_AS(l.validate(), InvalidArgument);
}

TEST_CASE("ramp schedule") {
    RampSchedule s;
    s.delta_lambda = 0.02;
    s.interval = 0.4;
    CHECK(ramp_lambda(s, 0.0) == 0.0);
    CHECK(ramp_lambda(s, 1.0) == doctest::Approx(0.04));
    CHECK(ramp_lambda(s, 0.8) == doctest::Approx(0.04));  // boundary counts as reached
    CHECK_THROWS_AS(ramp_lambda(s, -1.0), InvalidArgument);
    s.lambda_max = 0.1;
    CHECK(ramp_lambda(s, 100.0) == doctest::Approx(0.1));
    s.continuous = true;
    CHECK(ramp_lambda(s, 0.2) == doctest::Approx(0.01));

    RampSchedule fast;
    fast.interval = 0.1;
    CHECK(fast.speed_mw_per_s(40.0) == doctest::Approx(8.0));
    const double speeds[] = {8.0, 2.0, 0.9, 0.5};
    const double intervals[] = {0.1, 0.4, 0.9, 1.6};
    for (int k = 0; k < 4; ++k) {
        RampSchedule r;
        r.interval = intervals[k];
        CHECK(std::round(r.speed_mw_per_s(40.0) * 10.0) / 10.0 == doctest::Approx(speeds[k]));
        // Speed and interval convert back and forth.
        const auto back = RampSchedule::from_speed(r.speed_mw_per_s(40.0), 0.02, 40.0, 50.0);
        CHECK(back.interval == doctest::Approx(intervals[k]).epsilon(1e-14));
    }
    RampSchedule bad;
    bad.interval = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_THROWS_AS(RampSchedule::from_speed(1.0, 0.02, 0.0, 50.0), InvalidArgument);

    RampSchedule mono;
    double prev = 0.0;
    for (int k = 0; k <= 400; ++k) {
        const double lam = ramp_lambda(mono, 0.013 * k);
        CHECK(lam >= prev);
        prev = lam;
    }
}

TEST_CASE("two-bus residuals and solve") {
    SUBCASE("zero load gives a zero residual and a flat solution") {
        const auto doc = vmtest::two_bus_static(0.0, 0.0);
        const GridModel m = vmtest::model_of(doc);
        GridState s = m.initial_guess();
        CHECK(m.algebraic_residuals(s).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE(m.solve_algebraic(s).ok());
        CHECK(s.v[1] == doctest::Approx(1.0));
        CHECK(s.theta[1] == doctest::Approx(0.0));
    }
    SUBCASE("hand power flow at the flat start") {
        const auto doc = vmtest::two_bus_static(0.5, 0.0);
        const GridModel m = vmtest::model_of(doc);
        const GridState s = m.initial_guess();
        const Eigen::VectorXd r = m.algebraic_residuals(s);
        REQUIRE(r.size() == 2);
        CHECK(r[0] == doctest::Approx(-0.5));
        CHECK(r[1] == doctest::Approx(0.0));
    }
    SUBCASE("closed-form voltage") {
        for (double p : {0.3, 1.0, 1.8}) {
            CAPTURE(p);
            const auto doc = vmtest::two_bus_static(p, 0.25 * p);
            const GridModel m = vmtest::model_of(doc);
            GridState s = m.initial_guess();
            const auto res = m.solve_algebraic(s);
            REQUIRE(res.ok());
            CHECK(res.residual <= 1e-8);
            CHECK(std::abs(s.v[1] - vmtest::two_bus_voltage(p, 0.25 * p, 0.1)) <= 1e-8);
            CHECK(m.algebraic_residuals(s).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }
    SUBCASE("past the nose there is no solution") {
        const double s_nose = vmtest::two_bus_nose_scale(1.0, 0.25, 0.1);
        const auto doc = vmtest::two_bus_static(1.02 * s_nose, 0.25 * 1.02 * s_nose);
        CHECK(std::isnan(vmtest::two_bus_voltage(1.02 * s_nose, 0.255 * s_nose, 0.1)));
        const GridModel m = vmtest::model_of(doc);
        GridState s = m.initial_guess();
        CHECK_FALSE(m.solve_algebraic(s).ok());
    }
}

TEST_CASE("constructed equilibrium has vanishing residuals and rates") {
    // Solve a static 2-bus case, then place a dynamic load whose V0 is the
    // solved voltage: at x = 0 transient and steady absorption agree.
    const auto stat = vmtest::two_bus_static(0.8, 0.2);
    const GridModel ms = vmtest::model_of(stat);
    GridState s0 = ms.initial_guess();
    REQUIRE(ms.solve_algebraic(s0).ok());

    auto doc = stat;
    doc.network.buses[1].v0 = s0.v[1];
    doc.network.buses[1].theta0 = s0.theta[1];
    doc.loads[0].dynamic = true;
    doc.loads[0].v0 = s0.v[1];
    const GridModel m = vmtest::model_of(doc);
    GridState s = m.initial_guess();
    CHECK(m.state_derivative(s).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(m.algebraic_residuals(s).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("algebraic Jacobian matches finite differences") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const std::string name : {"two_bus.case", "three_bus.case", "ieee14_ref.case"}) {
        CAPTURE(name);
        const auto doc = vmtest::load_case(name);
        const GridModel m = vmtest::model_of(doc);
        for (int trial = 0; trial < 5; ++trial) {
            GridState s = solved_at(m, 0.3 * trial);
            for (Eigen::Index i = 0; i < s.v.size(); ++i) {
                s.v[i] *= 1.0 + 0.02 * u(gen);
                s.theta[i] += 0.02 * u(gen);
            }
            for (Eigen::Index i = 0; i < s.x.size(); ++i) s.x[i] += 0.05 * u(gen);
            for (auto& e : s.eta.eta) e = 0.05 * u(gen);
            for (LoadMode mode : {LoadMode::Transient, LoadMode::SteadyState}) {
                const Eigen::MatrixXd J = m.algebraic_jacobian(s, mode);
                CHECK(max_rel_diff(J, fd_jacobian(m, s, mode)) <= 1e-5);
            }
        }
    }
}

TEST_CASE("reduced state matrix") {
    SUBCASE("analytic against finite differences") {
        for (const std::string name : {"two_bus.case", "three_bus.case", "ieee14_ref.case"}) {
            CAPTURE(name);
            const auto doc = vmtest::load_case(name);
            const GridModel m = vmtest::model_of(doc);
            for (double lambda : {0.0, 1.0, 1.8}) {
                CAPTURE(lambda);
                const GridState s = solved_at(m, lambda);
                const Eigen::MatrixXd A = m.reduced_state_matrix(s, doc.ou);
                const Eigen::MatrixXd F = m.reduced_state_matrix_fd(s, doc.ou);
                REQUIRE(A.rows() == F.rows());
                CHECK((A - F).cwiseAbs().maxCoeff() <= 1e-5);
            }
        }
    }
    SUBCASE("load on the slack bus decouples") {
        auto doc = vmtest::two_bus_static(0.0, 0.0);
        LoadDynParams l = unit_load();
        l.bus = 1;
        l.tp = 2.0;
        l.tq = 5.0;
        doc.loads = {l};
        const GridModel m = vmtest::model_of(doc);
        const GridState s = solved_at(m, 0.0);
        const Eigen::MatrixXd A = m.reduced_state_matrix(s, OUParams{});
        REQUIRE(A.rows() == 2);
        CHECK(A(0, 0) == doctest::Approx(-0.5));
        CHECK(A(1, 1) == doctest::Approx(-0.2));
        CHECK(A(0, 1) == doctest::Approx(0.0));
        CHECK(A(1, 0) == doctest::Approx(0.0));
    }
    SUBCASE("OU block") {
        auto doc = vmtest::load_case("three_bus.case");
        doc.ou = OUParams::unit_variance({0.7}, 0.1);
        const GridModel m = vmtest::model_of(doc);
        const GridState s = solved_at(m, 0.5);
        const Eigen::MatrixXd A = m.reduced_state_matrix(s, doc.ou);
        const Eigen::Index n = A.rows();
        CHECK(A(n - 1, n - 1) == -0.7);
        for (Eigen::Index j = 0; j + 1 < n; ++j) CHECK(A(n - 1, j) == 0.0);
        const Eigen::VectorXcd ev = A.eigenvalues();
        bool found = false;
        for (Eigen::Index i = 0; i < ev.size(); ++i) found |= std::abs(ev[i] - std::complex<double>(-0.7, 0)) < 1e-12;
        CHECK(found);
    }
}

TEST_CASE("Q-limit switching") {
    const auto doc = vmtest::load_case("three_bus.case");
    const GridModel m = vmtest::model_of(doc);
    GridState s = m.initial_guess();
    s.eta.eta.assign(1, 0.0);
    s.lambda = 2.0;
    REQUIRE(m.initialize_equilibrium(s).ok());
    const auto pv = static_cast<std::size_t>(*doc.network.bus_index(2));
    CHECK(s.qlimit[pv] == QLimit::AtMax);
    // Re-solving from the same point keeps the same PV/PQ assignment.
    GridState again = s;
    REQUIRE(m.solve_algebraic(again).ok());
    CHECK(again.qlimit == s.qlimit);
    CHECK((again.v - s.v).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(again.v[static_cast<Eigen::Index>(pv)] < 1.0);

    GridState light = solved_at(m, 0.0);
    CHECK(light.qlimit[pv] == QLimit::Free);
    CHECK(light.v[static_cast<Eigen::Index>(pv)] == doctest::Approx(1.0));
}

TEST_CASE("energy bookkeeping") {
    for (const std::string name : {"two_bus.case", "three_bus.case", "ieee14_ref.case"}) {
        CAPTURE(name);
        const auto doc = vmtest::load_case(name);
        const GridModel m = vmtest::model_of(doc);
        for (double lambda : {0.0, 0.8, 1.6}) {
            const GridState s = solved_at(m, lambda);
            GridState t = s;
            REQUIRE(m.solve_algebraic(t).ok());
            const PowerBalance pb = m.power_balance(t);
            CHECK(std::abs(pb.generation - pb.consumption - pb.losses) <= 10 * 1e-8 * m.bus_count());
            CHECK(pb.losses >= -1e-12);
        }
    }
}

TEST_CASE("model construction errors") {
    auto doc = vmtest::load_case("three_bus.case");
    doc.loads[0].bus = 42;
    CHECK_THROWS(vmtest::model_of(doc));
    doc = vmtest::load_case("three_bus.case");
    doc.loads[0].noise_channel = 3;
    CHECK_THROWS_AS(vmtest::model_of(doc), InvalidArgument);
}
