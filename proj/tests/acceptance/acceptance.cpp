// Acceptance runner: one PASS/FAIL line per criterion. `--criterion N` runs
// a single one; without it all ten run in order.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/math/special_functions/airy.hpp>
#include <boost/math/tools/roots.hpp>

#include "experiment_io.hpp"
#include "fixtures.hpp"
#include "voltmargin/detector.hpp"
#include "voltmargin/format.hpp"
#include "voltmargin/integrator.hpp"
#include "voltmargin/monte_carlo.hpp"
#include "voltmargin/normal_form.hpp"
#include "voltmargin/ou_process.hpp"

using namespace voltmargin;

namespace {

constexpr std::uint64_t kSeed = 20240917;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [fail]");
    }
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// Zero of Ai'(-y): location, in units of eps^(2/3), where the rescaled
// Riccati solution -Ai'(-Y)/Ai(-Y) changes sign.
double airy_cross_constant() {
    const auto f = [](double y) { return boost::math::airy_ai_prime(-y); };
    std::uintmax_t iters = 100;
    const auto r = boost::math::tools::toms748_solve(f, 0.5, 1.5, boost::math::tools::eps_tolerance<double>(50), iters);
    return 0.5 * (r.first + r.second);
}

struct Sweep {
    cli::ExperimentFile file;
    CaseDocument doc;
    ExperimentSpec spec;
    ExperimentResult result;
};

Sweep run_sweep(const std::string& experiment, std::size_t n_paths, unsigned threads = 1) {
    Sweep s;
    s.file = cli::parse_experiment(vmtest::data_path("experiments/" + experiment));
    s.file.n_paths = n_paths;
    s.doc = cli::load_case_for(s.file);
    s.spec = cli::make_spec(s.file, s.doc);
    const GridModel model = vmtest::model_of(s.doc);
    RunOptions opt;
    opt.threads = threads;
    s.result = run_experiment(model, s.doc.ou, s.spec, opt);
    return s;
}

std::string describe(const MarginStatistics& c) {
    return "mean " + fmt(c.mean_S) + " se " + fmt(c.bootstrap_se, 2) + " var " + fmt(c.var_S);
}

// Consecutive cells must differ by more than two standard errors of the
// difference, in the given direction.
void check_ordering(Verdict& v, const std::vector<const MarginStatistics*>& cells) {
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
        const auto& a = *cells[i];
        const auto& b = *cells[i + 1];
        const double gap = a.mean_S - b.mean_S;
        const double se = std::hypot(a.bootstrap_se, b.bootstrap_se);
        v.require(gap > 2.0 * se, "mean gap " + fmt(gap) + " vs 2se " + fmt(2.0 * se, 2));
    }
}

Verdict criterion_1() {
    Verdict v;
    const OUParams p{{1.0}, {std::sqrt(2.0)}, 0.10};
    const double dt = 0.05;
    const std::size_t steps = 100000;
    RngStream rng(kSeed, 1);
    OUState s = ou_initial_sample(p, rng);
    std::vector<OUState> path;
    path.reserve(steps + 1);
    path.push_back(s);
    for (std::size_t k = 0; k < steps; ++k) {
        ou_step(s, p, dt, rng);
        path.push_back(s);
    }
    const std::vector<double> lags{1.0};
    const auto st = ou_path_statistics(path, lags);
    const double mean = st.mean[0], var = st.variance[0], r1 = st.autocorrelation[0][0];
    v.require(std::abs(mean) <= 0.003, "mean " + fmt(mean));
    v.require(var >= 0.0095 && var <= 0.0105, "variance " + fmt(var));
    v.require(std::abs(r1 - std::exp(-1.0)) <= 0.02, "lag-1s autocorrelation " + fmt(r1));
    return v;
}

Verdict criterion_2() {
    Verdict v;
    const double oracle = airy_cross_constant();
    std::vector<double> ratios;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        NormalFormParams p;
        p.epsilon = eps;
        NormalFormRun run;
        run.dt = eps / 100.0;
        run.record_stride = 0;
        const auto path = nf_deterministic_trajectory(p, run);
        const double r = path.record.crossed_zero ? path.record.y_cross_zero / std::pow(eps, 2.0 / 3.0) : NAN;
        ratios.push_back(r);
        v.require(std::abs(r - oracle) <= 0.02 * oracle, "eps " + fmt(eps) + " ratio " + fmt(r, 5));
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    v.require(*hi - *lo <= 0.02 * *lo, "spread " + fmt((*hi - *lo) / *lo, 3));
    v.detail << "; oracle " << fmt(oracle, 6);
    return v;
}

Verdict criterion_3() {
    Verdict v;
    const double eps = 1e-3;
    NormalFormParams weak;
    weak.epsilon = eps;
    weak.sigma = 0.3 * std::sqrt(eps);
    // The estimator needs y_stop strictly below -eps^(2/3); take the nearest double.
    const double y_stop = std::nextafter(-std::pow(eps, 2.0 / 3.0), -1.0);
    const auto exit = estimate_exit_probability(weak, 6.0 * weak.sigma, y_stop, 1000, RngStream(kSeed, 3));
    v.require(exit.p <= 0.05, "weak exit fraction " + fmt(exit.p));

    NormalFormParams strong = weak;
    strong.sigma = 5.0 * std::sqrt(eps);
    NormalFormRun run;
    run.dt = eps / 100.0;
    run.y_horizon = 0.0;
    run.record_stride = 0;
    const auto records = escape_ensemble(strong, run, 1000, RngStream(kSeed, 4));
    std::size_t escaped = 0;
    for (const auto& r : records) escaped += r.escaped && r.y_at_escape <= 0.0;
    const double frac = static_cast<double>(escaped) / static_cast<double>(records.size());
    v.require(frac >= 0.90, "strong escape fraction " + fmt(frac));
    return v;
}

Verdict criterion_4() {
    Verdict v;
    NormalFormParams p;
    p.epsilon = 1e-3;
    p.sigma = 0.01;
    std::vector<double> hs;
    for (int k = 2; k <= 8; ++k) hs.push_back(k * p.sigma);
    const auto est = estimate_exit_probability(p, hs, -0.1, 2000, RngStream(kSeed, 5));
    std::ostringstream ps;
    bool decreasing = true;
    for (std::size_t i = 0; i < est.size(); ++i) {
        ps << (i ? "," : "") << fmt(est[i].p, 3);
        if (i > 0 && !(est[i].p < est[i - 1].p)) decreasing = false;
    }
    v.require(decreasing, "p(h=2..8 sigma) " + ps.str() + " strictly decreasing");
    const double slope = exit_decay_slope(est, p.sigma);
    v.require(slope >= -2.0 && slope <= -0.5, "slope " + fmt(slope));
    return v;
}

Verdict criterion_5() {
    Verdict v;
    const double a = percent_diff_rounded(534.24, 542.75);
    const double b = percent_diff_rounded(527.76, 542.75);
    v.require(a == -1.57, "pct(534.24) " + format_double(a));
    v.require(b == -2.76, "pct(527.76) " + format_double(b));
    const double eps = 0.04;
    const double s = tradeoff_sigma(0.10, eps, eps / 4.0);
    v.require(s == 0.05, "tradeoff sigma " + format_double(s));
    const double red = margin_reduction_estimate(0.10, 542.75);
    v.require(std::abs(red - 25.2) <= 0.1, "margin reduction " + fmt(red) + " MW");
    return v;
}

Verdict criterion_6() {
    Verdict v;
    const CaseDocument doc = vmtest::load_case("two_bus.case");
    const GridModel model = vmtest::model_of(doc);
    RampSchedule ramp;
    ramp.delta_lambda = 0.02;
    ramp.interval = 20.0;
    IntegratorConfig cfg;
    cfg.horizon = 7200.0;
    TrajectoryOptions opt;
    opt.run_to_collapse = true;
    RngStream rng(kSeed, 6);
    const auto rec = simulate_trajectory(model, doc.ou, ramp, cfg, DetectorConfig{}, rng, opt);
    const double nose = vmtest::two_bus_nose_scale(doc.loads[0].p0, doc.loads[0].q0, 0.1) - 1.0;
    if (!rec.margin || !rec.collapse) {
        v.require(false, "no detection before the horizon");
        return v;
    }
    const double lam = rec.margin->lambda, lam_ns = rec.collapse->lambda;
    v.require(std::abs(lam - nose) <= 2.0 * ramp.delta_lambda + 1e-9,
              "detected lambda " + fmt(lam) + " vs nose " + fmt(nose));
    v.require(std::abs(lam_ns - lam) <= 2.0 * ramp.delta_lambda + 1e-9,
              "no-solution lambda " + fmt(lam_ns));
    return v;
}

Verdict criterion_7() {
    Verdict v;
    const Sweep s = run_sweep("table1_sigma.json", 1000);
    std::vector<const MarginStatistics*> cells;
    for (std::size_t i = 0; i < s.spec.sigma_list.size(); ++i) cells.push_back(&s.result.cell(i, 0));
    for (const auto* c : cells) v.detail << (v.detail.tellp() > 0 ? "; " : "") << "sigma " << fmt(c->sigma) << " " << describe(*c);
    check_ordering(v, cells);
    for (std::size_t i = 0; i + 1 < cells.size(); ++i)
        v.require(cells[i]->var_S < cells[i + 1]->var_S, "var increasing " + fmt(cells[i]->var_S) + " < " + fmt(cells[i + 1]->var_S));
    return v;
}

Verdict criterion_8() {
    Verdict v;
    const Sweep s = run_sweep("table2_speed.json", 1000);
    std::vector<const MarginStatistics*> cells;
    for (std::size_t j = 0; j < s.spec.schedule_list.size(); ++j) cells.push_back(&s.result.cell(0, j));
    for (std::size_t j = 0; j + 1 < cells.size(); ++j)
        v.require(cells[j]->speed_mw_per_s > cells[j + 1]->speed_mw_per_s, "speeds decreasing");
    for (const auto* c : cells)
        v.detail << "; " << fmt(c->speed_mw_per_s) << " MW/s " << describe(*c);
    check_ordering(v, cells);
    for (std::size_t j = 0; j + 1 < cells.size(); ++j)
        v.require(cells[j]->var_S > cells[j + 1]->var_S, "var decreasing " + fmt(cells[j]->var_S) + " > " + fmt(cells[j + 1]->var_S));
    return v;
}

Verdict criterion_9() {
    Verdict v;
    // Reference cell (sigma, interval) and its compensated twin (sigma/2, 4 interval).
    cli::ExperimentFile file = cli::parse_experiment(vmtest::data_path("experiments/table2_speed.json"));
    file.n_paths = 1000;
    file.sigma_list = {0.05, 0.10};
    file.schedules = {cli::ScheduleEntry{0.02, 0.1, std::nullopt}, cli::ScheduleEntry{0.02, 0.4, std::nullopt}};
    const CaseDocument doc = cli::load_case_for(file);
    ExperimentSpec spec = cli::make_spec(file, doc);
    const GridModel model = vmtest::model_of(doc);
    const ExperimentResult res = run_experiment(model, doc.ou, spec);
    const auto& ref = res.cell(1, 0);   // sigma 0.10, interval 0.1
    const auto& twin = res.cell(0, 1);  // sigma 0.05, interval 0.4
    const double diff = twin.mean_S - ref.mean_S;
    const double se = std::hypot(ref.bootstrap_se, twin.bootstrap_se);
    v.require(std::abs(diff) <= se, "reference " + describe(ref) + "; compensated " + describe(twin) +
                                        "; difference " + fmt(diff) + " vs se " + fmt(se, 2));

    std::mt19937_64 gen(kSeed);
    std::uniform_real_distribution<double> log_u(-8.0, 2.0);
    std::size_t mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const double sigma = std::pow(10.0, log_u(gen));
        const double eps = std::pow(10.0, log_u(gen));
        const double k = std::pow(10.0, 0.5 * log_u(gen));
        mismatches += classify_regime(k * sigma, k * k * eps) != classify_regime(sigma, eps);
    }
    v.require(mismatches == 0, "regime invariance mismatches " + std::to_string(mismatches) + "/10000");
    return v;
}

Verdict criterion_10() {
    Verdict v;
    std::vector<std::string> dumps;
    for (unsigned threads : {1u, 4u, 16u}) {
        const Sweep s = run_sweep("table1_sigma.json", 40, threads);
        const auto cfg = cli::resolved_config(s.spec, s.doc);
        dumps.push_back(cli::results_struct(s.result, s.spec, s.doc, cli::config_hash(cfg)).dump(2));
    }
    v.require(dumps[0] == dumps[1], "1 vs 4 threads identical");
    v.require(dumps[0] == dumps[2], "1 vs 16 threads identical");
    v.detail << "; report " << dumps[0].size() << " bytes, fnv1a " << fnv1a_hex(dumps[0]);
    return v;
}

struct Criterion {
    std::function<Verdict()> run;
    double budget_s;  ///< 0: no runtime bound
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voltmargin acceptance criteria"};
    int only = 0;
    app.add_option("--criterion", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {criterion_1, 5.0},    {criterion_2, 30.0},  {criterion_3, 120.0}, {criterion_4, 180.0},
        {criterion_5, 0.0},    {criterion_6, 10.0},  {criterion_7, 900.0}, {criterion_8, 900.0},
        {criterion_9, 0.0},    {criterion_10, 0.0},
    };
    bool ok = true;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (only != 0 && static_cast<int>(i) + 1 != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = all[i].run();
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (all[i].budget_s > 0.0) v.require(secs < all[i].budget_s, "runtime " + fmt(secs, 3) + " s");
        else v.detail << "; runtime " << fmt(secs, 3) << " s";
        std::cout << "criterion " << i + 1 << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail.str() << std::endl;
        ok = ok && v.pass;
    }
    return ok ? 0 : 1;
}
