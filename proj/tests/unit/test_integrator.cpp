#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "voltmargin/error.hpp"
#include "voltmargin/integrator.hpp"

using namespace voltmargin;

namespace {

RampSchedule frozen() {
    RampSchedule s;
    s.interval = 1e9;
    return s;
}

GridState equilibrium(const GridModel& m, const OUParams& ou, double lambda = 0.0) {
    GridState s = m.initial_guess();
    s.eta.eta.assign(ou.dim(), 0.0);
    s.lambda = lambda;
    REQUIRE(m.initialize_equilibrium(s).ok());
    return s;
}

TrajectoryRecord run(const CaseDocument& doc, double sigma, const RampSchedule& sched, std::uint64_t seed,
                     IntegratorConfig cfg = {}, DetectorConfig det = {}, TrajectoryOptions opt = {}) {
    const GridModel m = vmtest::model_of(doc);
    OUParams ou = doc.ou;
    ou.sigma = sigma;
    RngStream rng(seed, 1);
    return simulate_trajectory(m, ou, sched, cfg, det, rng, opt);
}

RampSchedule desk_ramp() {
    RampSchedule s;
    s.delta_lambda = 0.02;
    s.interval = 0.4;
    return s;
}

}  // namespace

TEST_CASE("integrator config") {
    IntegratorConfig c;
    CHECK(c.dt == 0.05);
    CHECK(c.newton_tol == 1e-8);
    CHECK(c.max_newton_iter == 20);
    CHECK_NOTHROW(c.validate());
    c.dt = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.horizon = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);

    const auto doc = vmtest::load_case("three_bus.case");
    const GridModel m = vmtest::model_of(doc);
    CHECK(integrator_warnings(IntegratorConfig{}, m).empty());
    IntegratorConfig coarse;
    coarse.dt = 0.2;
    CHECK(integrator_warnings(coarse, m).size() == 1);
}

TEST_CASE("sdae_step keeps the equilibrium without noise") {
    for (const std::string name : {"three_bus.case", "ieee14_ref.case"}) {
        CAPTURE(name);
        const auto doc = vmtest::load_case(name);
        const GridModel m = vmtest::model_of(doc);
        OUParams ou = doc.ou;
        ou.sigma = 0.0;
        GridState s = equilibrium(m, ou);
        RngStream rng(1, 1);
        for (int k = 0; k < 200; ++k) {
            const GridState before = s;
            const StepResult r = sdae_step(m, s, ou, frozen(), IntegratorConfig{}, rng);
            REQUIRE(r.outcome == StepOutcome::Ok);
            REQUIRE((s.x - before.x).cwiseAbs().maxCoeff() <= 1e-10);
            REQUIRE((s.v - before.v).cwiseAbs().maxCoeff() <= 1e-10);
            REQUIRE((s.theta - before.theta).cwiseAbs().maxCoeff() <= 1e-10);
        }
        CHECK(s.t == doctest::Approx(200 * 0.05));
    }
}

TEST_CASE("one step under a fluctuation impulse") {
    const auto doc = vmtest::load_case("three_bus.case");
    const GridModel m = vmtest::model_of(doc);
    OUParams ou = doc.ou;
    ou.sigma = 0.0;
    GridState s = equilibrium(m, ou);
    s.eta.eta[0] = 1.0;
    REQUIRE(m.solve_algebraic(s).ok());
    const GridState before = s;
    RngStream rng(1, 1);
    const double dt = 0.05;
    REQUIRE(sdae_step(m, s, ou, frozen(), IntegratorConfig{}, rng).outcome == StepOutcome::Ok);

    // Hand evaluation at the old point: x_p' = -x_p/Tp + P (V/V0)^as - P (V/V0)^at
    const auto& l = doc.loads[0];
    const auto bus = static_cast<Eigen::Index>(*doc.network.bus_index(l.bus));
    const double v = before.v[bus] / l.v0;
    const double p = l.p0 + 1.0;
    const double xp = before.x[0];
    const double expected = dt * (-xp / l.tp + p * std::pow(v, l.alpha_s) - p * std::pow(v, l.alpha_t));
    CHECK(s.x[0] - xp == doctest::Approx(expected).epsilon(1e-12));
    CHECK(s.eta.eta[0] == doctest::Approx(1.0 - dt));
}

TEST_CASE("collapse keeps the last consistent state") {
    // Constant-power load: a ramp jump past the nose has no network solution.
    const auto doc = vmtest::two_bus_static(1.0, 0.25);
    const GridModel m = vmtest::model_of(doc);
    GridState s = equilibrium(m, doc.ou, 2.8);
    RampSchedule jump;
    jump.delta_lambda = 3.5;
    jump.interval = 0.05;
    const GridState before = s;
    RngStream rng(1, 1);
    const StepResult r = sdae_step(m, s, doc.ou, jump, IntegratorConfig{}, rng);
    CHECK(r.outcome == StepOutcome::Collapse);
    CHECK(s.lambda == before.lambda);
    CHECK(s.t == before.t);
    CHECK(s.v == before.v);
}

TEST_CASE("deterministic runs do not depend on the stream") {
    const auto doc = vmtest::load_case("three_bus.case");
    TrajectoryOptions opt;
    opt.record_samples = true;
    const auto a = run(doc, 0.0, desk_ramp(), 1, {}, {}, opt);
    const auto b = run(doc, 0.0, desk_ramp(), 999, {}, {}, opt);
    REQUIRE(a.margin);
    REQUIRE(b.margin);
    CHECK(a.margin->S == b.margin->S);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
        REQUIRE(a.samples[k].v == b.samples[k].v);
        REQUIRE(a.samples[k].x == b.samples[k].x);
    }
    CHECK(a.termination == Termination::SNBDetected);
    CHECK(a.margin->S == doctest::Approx(a.margin->lambda * 0.9 * 100.0));
}

TEST_CASE("seeded runs are reproducible") {
    const auto doc = vmtest::load_case("three_bus.case");
    TrajectoryOptions opt;
    opt.record_samples = true;
    const auto a = run(doc, 0.05, desk_ramp(), 17, {}, {}, opt);
    const auto b = run(doc, 0.05, desk_ramp(), 17, {}, {}, opt);
    const auto c = run(doc, 0.05, desk_ramp(), 18, {}, {}, opt);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
        REQUIRE(a.samples[k].t == b.samples[k].t);
        REQUIRE(a.samples[k].v == b.samples[k].v);
        REQUIRE(a.samples[k].eta == b.samples[k].eta);
        REQUIRE((std::isnan(a.samples[k].rcond) ? std::isnan(b.samples[k].rcond)
                                                 : a.samples[k].rcond == b.samples[k].rcond));
    }
    CHECK(a.margin->S == b.margin->S);
    CHECK(a.termination == b.termination);
    bool differs = a.samples.size() != c.samples.size();
    for (std::size_t k = 0; !differs && k < a.samples.size(); ++k) differs = a.samples[k].eta != c.samples[k].eta;
    CHECK(differs);
}

TEST_CASE("record invariants") {
    const auto doc = vmtest::load_case("three_bus.case");
    TrajectoryOptions opt;
    opt.record_samples = true;
    SUBCASE("time ordered, margin on detection") {
        const auto r = run(doc, 0.05, desk_ramp(), 3, {}, {}, opt);
        for (std::size_t k = 1; k < r.samples.size(); ++k) REQUIRE(r.samples[k].t > r.samples[k - 1].t);
        CHECK(r.termination != Termination::HorizonReached);
        CHECK(r.margin.has_value());
        CHECK(r.margin_S() == r.margin->S);
    }
    SUBCASE("horizon reached leaves no margin") {
        IntegratorConfig cfg;
        cfg.horizon = 2.0;
        const auto r = run(doc, 0.05, desk_ramp(), 3, cfg, {}, opt);
        CHECK(r.termination == Termination::HorizonReached);
        CHECK_FALSE(r.margin.has_value());
        CHECK(r.samples.size() == 41);
        CHECK(r.samples.back().t == doctest::Approx(2.0));
    }
    SUBCASE("no solution records the last consistent lambda") {
        DetectorConfig det;
        det.rcond_threshold = 1e-14;
        const auto r = run(doc, 0.0, desk_ramp(), 3, {}, det, opt);
        REQUIRE(r.margin);
        CHECK(r.termination == Termination::NoSolution);
        CHECK(r.margin->cause == DetectionCause::NoSolution);
        CHECK(r.margin->lambda == doctest::Approx(r.samples.back().lambda));
    }
    SUBCASE("run to collapse fills both events") {
        TrajectoryOptions o = opt;
        o.run_to_collapse = true;
        const auto r = run(doc, 0.0, desk_ramp(), 3, {}, {}, o);
        REQUIRE(r.margin);
        REQUIRE(r.collapse);
        CHECK(r.termination == Termination::SNBDetected);
        CHECK(r.collapse->lambda >= r.margin->lambda);
    }
}

TEST_CASE("two-bus margin against the closed-form nose") {
    const auto doc = vmtest::load_case("two_bus.case");
    RampSchedule fine;
    fine.delta_lambda = 0.01;
    fine.interval = 10.0;
    IntegratorConfig cfg;
    cfg.horizon = 1e4;
    const auto r = run(doc, 0.0, fine, 1, cfg);
    REQUIRE(r.margin);
    const double s_nose = vmtest::two_bus_nose_scale(1.0, 0.25, 0.1);
    const double nose_mw = (s_nose - 1.0) * 1.0 * 100.0;
    CHECK(std::abs(r.margin->S - nose_mw) / nose_mw <= 0.02);
}

TEST_CASE("step-size robustness on the desk case") {
    const auto doc = vmtest::load_case("three_bus.case");
    const auto a = run(doc, 0.0, desk_ramp(), 1);
    IntegratorConfig half;
    half.dt = 0.025;
    const auto b = run(doc, 0.0, desk_ramp(), 1, half);
    REQUIRE(a.margin);
    REQUIRE(b.margin);
    CHECK(std::abs(a.margin->S - b.margin->S) / a.margin->S < 0.005);
}

TEST_CASE("warm-started Newton converges quickly") {
    for (const std::string name : {"three_bus.case", "ieee14_ref.case"}) {
        CAPTURE(name);
        const auto doc = vmtest::load_case(name);
        const auto r = run(doc, 0.1, desk_ramp(), 5);
        REQUIRE(r.newton.steps > 100);
        const double share = static_cast<double>(r.newton.steps_within_5) / static_cast<double>(r.newton.steps);
        MESSAGE(name << ": " << share * 100.0 << "% of " << r.newton.steps << " steps within 5 iterations, max "
                     << r.newton.max_iterations);
        CHECK(share > 0.99);
    }
}

TEST_CASE("load voltage falls along the deterministic ramp") {
    const auto doc = vmtest::load_case("three_bus.case");
    TrajectoryOptions opt;
    opt.record_samples = true;
    const auto r = run(doc, 0.0, desk_ramp(), 1, {}, {}, opt);
    REQUIRE(r.samples.size() > 10);
    // Settled voltage at the end of each ramp level.
    double prev = 10.0;
    int levels = 0;
    for (std::size_t k = 0; k + 1 < r.samples.size(); ++k) {
        if (r.samples[k + 1].lambda == r.samples[k].lambda) continue;
        CHECK(r.samples[k].v[0] <= prev);
        prev = r.samples[k].v[0];
        ++levels;
    }
    CHECK(levels > 50);
}

TEST_CASE("trajectory csv") {
    const auto doc = vmtest::load_case("three_bus.case");
    const GridModel m = vmtest::model_of(doc);
    TrajectoryOptions opt;
    opt.record_samples = true;
    const auto r = run(doc, 0.05, desk_ramp(), 2, {}, {}, opt);
    std::ostringstream os;
    write_trajectory_csv(os, m, r, opt);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,lambda,V_3,x0,x1,eta0,rcond");
    std::size_t rows = 0;
    std::string last;
    while (std::getline(is, line)) {
        if (line.rfind('#', 0) == 0) {
            last = line;
            continue;
        }
        ++rows;
    }
    CHECK(rows == r.samples.size());
    CHECK(last.find("termination=snb_detected") != std::string::npos);
    CHECK(last.find("cause=rcond") != std::string::npos);
}
