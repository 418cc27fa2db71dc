#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "experiment_io.hpp"
#include "version.hpp"
#include "voltmargin/error.hpp"
#include "voltmargin/format.hpp"
#include "voltmargin/normal_form.hpp"

namespace voltmargin::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonFlags {
    std::string case_path;
    std::string experiment_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::string out;
    unsigned threads = 1;
    bool dump_trajectories = false;
    std::optional<double> rcond_threshold;
    std::optional<double> dt;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_case, bool with_experiment) {
    if (with_case) cmd->add_option("--case", f.case_path, "Case file (.case canonical, .m MATPOWER)")->envname("VOLTMARGIN_CASE");
    if (with_experiment) {
        cmd->add_option("--experiment", f.experiment_path, "Experiment JSON file")->envname("VOLTMARGIN_EXPERIMENT");
    }
    cmd->add_option("--seed", f.seed, "Seed base")->envname("VOLTMARGIN_SEED");
    cmd->add_option("--out", f.out, "Output directory")->envname("VOLTMARGIN_OUT");
    cmd->add_option("--rcond-threshold", f.rcond_threshold, "SNB detection threshold")
        ->envname("VOLTMARGIN_RCOND_THRESHOLD");
    cmd->add_option("--dt", f.dt, "Integration step, s")->envname("VOLTMARGIN_DT");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InvalidArgument("cannot create directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + path.string());
    return f;
}

void write_text(const fs::path& path, const std::string& text) {
    auto f = open_out(path);
    f << text;
    if (!f) throw InvalidArgument("write failed: " + path.string());
}

CaseDocument read_case(const std::string& path, std::ostream& err) {
    CaseDocument doc = parse_case(path);
    validate_case(doc);
    for (const auto& w : doc.warnings) err << "warning: " << w << '\n';
    return doc;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const std::vector<std::string>& cases, const std::vector<std::string>& experiments,
                 std::ostream& out, std::ostream& err) {
    if (cases.empty() && experiments.empty()) {
        err << "validate: nothing to check (give --case and/or --experiment)\n";
        return 2;
    }
    for (const auto& c : cases) {
        const CaseDocument doc = read_case(c, err);
        GridModel model(doc.network, doc.loads, doc.ou.dim());
        out << "ok case " << c << " (" << to_string(doc.format) << ", " << doc.network.buses.size() << " buses, "
            << doc.network.branches.size() << " branches, " << doc.loads.size() << " loads, checksum "
            << doc.checksum << ")\n";
    }
    for (const auto& e : experiments) {
        const ExperimentFile file = parse_experiment(e);
        const CaseDocument doc = load_case_for(file);
        for (const auto& w : doc.warnings) err << "warning: " << w << '\n';
        GridModel model(doc.network, doc.loads, doc.ou.dim());
        ExperimentSpec spec = make_spec(file, doc);
        spec.validate();
        out << "ok experiment " << e << " (" << spec.sigma_list.size() << " sigma x " << spec.schedule_list.size()
            << " schedules, " << spec.n_paths << " paths, config_hash " << config_hash(resolved_config(spec, doc))
            << ")\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    if (f.experiment_path.empty()) {
        err << "sweep: --experiment is required\n";
        return 2;
    }
    const ExperimentFile file = parse_experiment(f.experiment_path);
    const CaseDocument doc = load_case_for(file);
    for (const auto& w : doc.warnings) err << "warning: " << w << '\n';
    ExperimentSpec spec = make_spec(file, doc);
    if (f.seed) spec.seed_base = *f.seed;
    if (f.paths) spec.n_paths = *f.paths;
    if (f.rcond_threshold) spec.detector.rcond_threshold = *f.rcond_threshold;
    if (f.dt) spec.integrator.dt = *f.dt;
    spec.validate();
    const std::string out_dir = f.out.empty() ? file.output_dir : f.out;

    const ordered_json resolved = resolved_config(spec, doc);
    const std::string hash = config_hash(resolved);
    err << "resolved config (config_hash " << hash << "):\n" << resolved.dump(2) << '\n';

    const GridModel model(doc.network, doc.loads, doc.ou.dim());
    for (const auto& w : integrator_warnings(spec.integrator, model)) err << "warning: " << w << '\n';
    ensure_dir(out_dir);

    RunOptions options;
    options.threads = f.threads;
    std::vector<std::string> cell_dirs;
    if (f.dump_trajectories) {
        options.trajectory.record_samples = true;
        for (double sigma : spec.sigma_list) {
            for (const auto& s : spec.schedule_list) {
                MarginStatistics probe;
                probe.sigma = sigma;
                probe.schedule = s;
                const fs::path dir = fs::path(out_dir) / "trajectories" / cell_name(probe);
                ensure_dir(dir.string());
                cell_dirs.push_back(dir.string());
            }
        }
        options.on_trajectory = [&](std::size_t cell, std::size_t path, const TrajectoryRecord& rec) {
            auto file_out = open_out(fs::path(cell_dirs[cell]) / (std::to_string(path) + ".csv"));
            write_trajectory_csv(file_out, model, rec, options.trajectory);
        };
    }

    const ExperimentResult result = run_experiment(model, doc.ou, spec, options);

    write_text(fs::path(out_dir) / "results.struct", results_struct(result, spec, doc, hash).dump(2) + "\n");
    {
        auto csv = open_out(fs::path(out_dir) / "results.csv");
        write_results_csv(csv, result, spec.seed_base, hash);
    }
    for (const auto& c : result.cells) {
        if (c.n == 0) continue;
        auto h = open_out(fs::path(out_dir) / ("hist_" + cell_name(c) + ".csv"));
        write_histogram_csv(h, c.histogram);
    }
    for (const auto& c : result.cells) {
        out << "sigma=" << format_double(c.sigma) << " interval=" << format_double(c.schedule.interval)
            << " n=" << c.n << " censored=" << c.censored << " mean_S=" << format_double(c.mean_S)
            << " var_S=" << format_double(c.var_S) << " pct=" << format_double(percent_diff_rounded(c.mean_S, c.S_det))
            << '\n';
        if (c.censored > 0) err << "warning: " << c.censored << " censored trajectories in " << cell_name(c) << '\n';
    }
    out << "wrote " << out_dir << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// report

double num_or_nan(const ordered_json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

int cmd_report(const std::string& input, const std::string& out_arg, std::ostream& out) {
    fs::path path(input);
    if (fs::is_directory(path)) path /= "results.struct";
    ordered_json root;
    try {
        root = ordered_json::parse(read_text_file(path.string()));
    } catch (const ordered_json::parse_error&) {
        throw ParseError(path.string(), 0, "not a results file");
    }
    if (!root.is_object() || root.value("format", "") != "voltmargin-results") {
        throw ParseError(path.string(), 0, "not a results file");
    }
    const fs::path out_dir = out_arg.empty() ? path.parent_path() : fs::path(out_arg);
    ensure_dir(out_dir.string());

    // Rows are sigma values, columns schedules, both in sweep order.
    std::vector<double> sigmas;
    std::vector<std::pair<double, double>> scheds;  // (speed, interval)
    const auto& cells = root.at("cells");
    for (const auto& c : cells) {
        const double s = c.at("sigma").get<double>();
        if (std::find(sigmas.begin(), sigmas.end(), s) == sigmas.end()) sigmas.push_back(s);
        const std::pair<double, double> k{c.at("speed_MW_per_s").get<double>(), c.at("interval").get<double>()};
        if (std::find(scheds.begin(), scheds.end(), k) == scheds.end()) scheds.push_back(k);
    }
    const std::string provenance = "# voltmargin " + root.at("version").get<std::string>() +
                                   " seed=" + std::to_string(root.at("seed").get<std::uint64_t>()) +
                                   " config_hash=" + root.at("config_hash").get<std::string>() + "\n";

    const auto table = [&](const std::string& name, const std::string& key, bool rounded) {
        std::ostringstream t;
        t << provenance << "sigma";
        for (const auto& [speed, interval] : scheds) t << ",speed_" << format_double(speed) << "_MW_per_s";
        t << '\n';
        for (std::size_t i = 0; i < sigmas.size(); ++i) {
            t << format_double(sigmas[i]);
            for (std::size_t j = 0; j < scheds.size(); ++j) {
                const auto& c = cells.at(i * scheds.size() + j);
                double v = num_or_nan(c.at(key));
                if (rounded) v = percent_diff_rounded(num_or_nan(c.at("mean_S")), c.at("S_det").get<double>());
                t << ',' << format_double(v);
            }
            t << '\n';
        }
        write_text(out_dir / name, t.str());
    };
    table("table_mean.csv", "mean_S", false);
    table("table_var.csv", "var_S", false);
    table("table_pct.csv", "pct_diff", true);

    std::ostringstream longt;
    longt << provenance
          << "sigma,delta_lambda,interval,speed_MW_per_s,n,censored,S_det,mean_S,var_S,pct_diff,pct_diff_2dp,"
             "ci90_lower,bootstrap_se\n";
    for (const auto& c : cells) {
        const double mean = num_or_nan(c.at("mean_S"));
        const double sdet = c.at("S_det").get<double>();
        longt << format_double(c.at("sigma").get<double>()) << ',' << format_double(c.at("delta_lambda").get<double>())
              << ',' << format_double(c.at("interval").get<double>()) << ','
              << format_double(c.at("speed_MW_per_s").get<double>()) << ',' << c.at("n").get<std::size_t>() << ','
              << c.at("censored").get<std::size_t>() << ',' << format_double(sdet) << ',' << format_double(mean)
              << ',' << format_double(num_or_nan(c.at("var_S"))) << ',' << format_double(percent_diff(mean, sdet))
              << ',' << format_double(percent_diff_rounded(mean, sdet)) << ','
              << format_double(num_or_nan(c.at("ci90_lower"))) << ','
              << format_double(num_or_nan(c.at("bootstrap_se"))) << '\n';
        Histogram h;
        h.edges = c.at("histogram").at("edges").get<std::vector<double>>();
        h.counts = c.at("histogram").at("counts").get<std::vector<std::size_t>>();
        if (!h.counts.empty()) {
            auto hf = open_out(out_dir / ("hist_" + c.at("name").get<std::string>() + ".csv"));
            write_histogram_csv(hf, h);
        }
    }
    write_text(out_dir / "table_long.csv", longt.str());
    out << "wrote tables for " << sigmas.size() << " sigma x " << scheds.size() << " schedules to "
        << out_dir.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateFlags {
    std::optional<double> sigma;
    std::optional<double> interval;
    std::optional<double> delta_lambda;
    std::optional<double> speed;
    std::size_t path_index = 0;
    bool run_to_collapse = false;
};

int cmd_simulate(const CommonFlags& f, const SimulateFlags& s, std::ostream& out, std::ostream& err) {
    if (f.case_path.empty() == f.experiment_path.empty()) {
        err << "simulate: give exactly one of --case or --experiment\n";
        return 2;
    }
    if (s.speed && s.interval) {
        err << "simulate: --speed and --interval are mutually exclusive\n";
        return 2;
    }
    CaseDocument doc;
    double sigma = 0.0;
    RampSchedule schedule;
    std::uint64_t seed = 1;
    DetectorConfig detector;
    IntegratorConfig integrator;
    std::optional<ExperimentFile> file;
    if (!f.experiment_path.empty()) {
        file = parse_experiment(f.experiment_path);
        doc = load_case_for(*file);
        for (const auto& w : doc.warnings) err << "warning: " << w << '\n';
        const ExperimentSpec spec = make_spec(*file, doc);
        sigma = spec.sigma_list.front();
        schedule = spec.schedule_list.front();
        seed = spec.seed_base;
        detector = spec.detector;
        integrator = spec.integrator;
    } else {
        doc = read_case(f.case_path, err);
    }
    const GridModel model(doc.network, doc.loads, doc.ou.dim());
    if (s.sigma) sigma = *s.sigma;
    if (s.delta_lambda) schedule.delta_lambda = *s.delta_lambda;
    if (s.interval) schedule.interval = *s.interval;
    if (s.speed) {
        schedule = RampSchedule::from_speed(*s.speed, schedule.delta_lambda, model.margin_mw(1.0),
                                            schedule.lambda_max);
    }
    schedule.validate();
    if (f.seed) seed = *f.seed;
    if (f.rcond_threshold) detector.rcond_threshold = *f.rcond_threshold;
    if (f.dt) integrator.dt = *f.dt;
    detector.validate();
    integrator.validate();
    if (!(sigma >= 0.0)) throw InvalidArgument("simulate: sigma must be non-negative");
    for (const auto& w : integrator_warnings(integrator, model)) err << "warning: " << w << '\n';

    OUParams ou = doc.ou;
    ou.sigma = sigma;
    ordered_json cfg;
    cfg["case"] = {{"name", doc.network.name}, {"checksum", doc.checksum}};
    cfg["sigma"] = sigma;
    cfg["schedule"] = {{"delta_lambda", schedule.delta_lambda},
                       {"interval", schedule.interval},
                       {"lambda_max", schedule.lambda_max},
                       {"speed_MW_per_s", schedule.speed_mw_per_s(model.margin_mw(1.0))}};
    cfg["detector"] = {{"rcond_threshold", detector.rcond_threshold},
                       {"check_every_step", detector.check_every_step}};
    cfg["integrator"] = {{"dt", integrator.dt},
                         {"newton_tol", integrator.newton_tol},
                         {"max_newton_iter", integrator.max_newton_iter},
                         {"horizon", integrator.horizon}};
    cfg["seed"] = seed;
    cfg["path_index"] = s.path_index;
    cfg["run_to_collapse"] = s.run_to_collapse;
    const std::string hash = config_hash(cfg);
    err << "resolved config (config_hash " << hash << "):\n" << cfg.dump(2) << '\n';

    // Same stream as path `path_index` of the first cell of a sweep.
    RngStream rng(seed, make_stream_id(1, s.path_index));
    TrajectoryOptions topt;
    topt.record_samples = true;
    topt.run_to_collapse = s.run_to_collapse;
    const TrajectoryRecord rec = simulate_trajectory(model, ou, schedule, integrator, detector, rng, topt);

    const std::string out_dir = f.out.empty() ? std::string("out") : f.out;
    ensure_dir(out_dir);
    const fs::path csv_path = fs::path(out_dir) / "trajectory.csv";
    {
        auto csv = open_out(csv_path);
        csv << "# voltmargin " << VOLTMARGIN_VERSION << " seed=" << seed << " config_hash=" << hash << '\n';
        write_trajectory_csv(csv, model, rec, topt);
    }
    out << "termination=" << to_string(rec.termination);
    if (rec.margin) {
        out << " cause=" << to_string(rec.margin->cause) << " S_MW=" << format_double(rec.margin->S)
            << " lambda=" << format_double(rec.margin->lambda) << " t=" << format_double(rec.margin->t);
    }
    if (rec.collapse) out << " collapse_lambda=" << format_double(rec.collapse->lambda);
    out << " steps=" << rec.newton.steps << '\n';
    out << "wrote " << csv_path.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// normalform

struct NormalFormFlags {
    double epsilon = 1e-3;
    double sigma = 0.01;
    std::size_t paths = 1000;
    std::vector<double> h_sweep;  ///< multiples of sigma
    std::optional<double> y_stop;
    std::optional<double> dt;
    double y_horizon = 0.1;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_normalform(const NormalFormFlags& f, std::ostream& out, std::ostream& err) {
    NormalFormParams params;
    params.epsilon = f.epsilon;
    params.sigma = f.sigma;
    params.validate();
    const double dt = f.dt.value_or(f.epsilon / 100.0);
    const double y_stop = f.y_stop.value_or(std::min(-0.1, -2.0 * std::pow(f.epsilon, 2.0 / 3.0)));
    std::vector<double> h_mult = f.h_sweep;
    if (h_mult.empty()) h_mult = {2, 3, 4, 5, 6, 7, 8};
    std::vector<double> h;
    for (double m : h_mult) h.push_back(m * f.sigma);

    const NoiseRegime regime = classify_regime(f.sigma, f.epsilon);
    ordered_json cfg;
    cfg["epsilon"] = f.epsilon;
    cfg["sigma"] = f.sigma;
    cfg["paths"] = f.paths;
    cfg["h_over_sigma"] = h_mult;
    cfg["y_stop"] = y_stop;
    cfg["y_horizon"] = f.y_horizon;
    cfg["dt"] = dt;
    cfg["seed"] = f.seed;
    cfg["escape_threshold"] = params.escape_threshold;
    const std::string hash = config_hash(cfg);
    err << "resolved config (config_hash " << hash << "):\n" << cfg.dump(2) << '\n';

    const std::string out_dir = f.out.empty() ? std::string("out") : f.out;
    ensure_dir(out_dir);
    const std::string provenance = "# voltmargin " + std::string(VOLTMARGIN_VERSION) +
                                   " seed=" + std::to_string(f.seed) + " config_hash=" + hash + "\n";

    NormalFormRun run;
    run.dt = dt;
    run.y_horizon = f.y_horizon;
    run.record_stride = 0;
    const auto records = escape_ensemble(params, run, f.paths, RngStream(f.seed, 0));
    std::size_t escaped = 0;
    {
        std::ostringstream t;
        t << provenance << "path,escaped,y_at_escape,crossed_zero,y_cross_zero\n";
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            escaped += r.escaped ? 1 : 0;
            t << i << ',' << (r.escaped ? 1 : 0) << ',' << format_double(r.y_at_escape) << ','
              << (r.crossed_zero ? 1 : 0) << ',' << format_double(r.y_cross_zero) << '\n';
        }
        write_text(fs::path(out_dir) / "escape_records.csv", t.str());
    }

    std::vector<ProbabilityEstimate> probs;
    if (f.paths >= 100 && y_stop < -std::pow(f.epsilon, 2.0 / 3.0)) {
        probs = estimate_exit_probability(params, h, y_stop, f.paths, RngStream(f.seed, 1), dt);
        std::ostringstream t;
        t << provenance << "h,h_over_sigma,hits,n,p,wilson_lower,wilson_upper\n";
        for (std::size_t k = 0; k < probs.size(); ++k) {
            t << format_double(probs[k].h) << ',' << format_double(h_mult[k]) << ',' << probs[k].hits << ','
              << probs[k].n << ',' << format_double(probs[k].p) << ',' << format_double(probs[k].lower) << ','
              << format_double(probs[k].upper) << '\n';
        }
        write_text(fs::path(out_dir) / "exit_probability.csv", t.str());
    } else {
        err << "warning: exit-probability table skipped (needs paths >= 100 and y_stop < -epsilon^(2/3))\n";
    }

    out << "regime=" << to_string(regime) << " sigma/sqrt(epsilon)=" << format_double(f.sigma / std::sqrt(f.epsilon))
        << " escaped=" << escaped << "/" << records.size();
    if (!probs.empty()) out << " exit_decay_slope=" << format_double(exit_decay_slope(probs, f.sigma));
    out << '\n' << "wrote " << out_dir << '\n';
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stochastic voltage stability margin analysis", "voltmargin"};
    app.set_version_flag("--version", std::string(VOLTMARGIN_VERSION));
    app.require_subcommand(1);

    std::vector<std::string> val_cases;
    std::vector<std::string> val_experiments;
    auto* validate = app.add_subcommand("validate", "Check case and experiment files");
    validate->add_option("--case", val_cases, "Case file(s)");
    validate->add_option("--experiment", val_experiments, "Experiment file(s)");

    CommonFlags sweep_flags;
    auto* sweep = app.add_subcommand("sweep", "Run a Monte Carlo sweep from an experiment file");
    add_common(sweep, sweep_flags, false, true);
    sweep->add_option("--paths", sweep_flags.paths, "Paths per cell")->envname("VOLTMARGIN_PATHS");
    sweep->add_option("--threads", sweep_flags.threads, "Worker threads")
        ->envname("VOLTMARGIN_THREADS")
        ->check(CLI::PositiveNumber);
    sweep->add_flag("--dump-trajectories", sweep_flags.dump_trajectories, "Write every trajectory as CSV")
        ->envname("VOLTMARGIN_DUMP_TRAJECTORIES");

    CommonFlags sim_flags;
    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "Run one trajectory and dump it");
    add_common(simulate, sim_flags, true, true);
    simulate->add_option("--sigma", sim.sigma, "Fluctuation intensity");
    simulate->add_option("--interval", sim.interval, "Ramp step interval, s");
    simulate->add_option("--delta-lambda", sim.delta_lambda, "Ramp increment");
    simulate->add_option("--speed", sim.speed, "Ramp speed, MW/s");
    simulate->add_option("--path-index", sim.path_index, "Stream index within the first sweep cell");
    simulate->add_flag("--run-to-collapse", sim.run_to_collapse, "Continue past detection until no solution");

    std::string report_in;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Render tables from a sweep's results.struct");
    report->add_option("results", report_in, "results.struct or the sweep output directory")->required();
    report->add_option("--out", report_out, "Output directory (default: next to the input)")
        ->envname("VOLTMARGIN_OUT");

    NormalFormFlags nf;
    auto* normalform = app.add_subcommand("normalform", "Stochastic saddle-node normal form experiments");
    normalform->add_option("--epsilon", nf.epsilon, "Slow time-scale ratio")->check(CLI::PositiveNumber);
    normalform->add_option("--sigma", nf.sigma, "Noise intensity")->check(CLI::NonNegativeNumber);
    normalform->add_option("--paths", nf.paths, "Sample paths")->envname("VOLTMARGIN_PATHS");
    normalform->add_option("--h-sweep", nf.h_sweep, "Layer depths as multiples of sigma")->delimiter(',');
    normalform->add_option("--y-stop", nf.y_stop, "Slow time where the exit-probability window ends");
    normalform->add_option("--y-horizon", nf.y_horizon, "Slow time where escape records stop");
    normalform->add_option("--dt", nf.dt, "Slow-time step (default epsilon/100)")->envname("VOLTMARGIN_DT");
    normalform->add_option("--seed", nf.seed, "Seed base")->envname("VOLTMARGIN_SEED");
    normalform->add_option("--out", nf.out, "Output directory")->envname("VOLTMARGIN_OUT");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*validate) return cmd_validate(val_cases, val_experiments, out, err);
        if (*sweep) return cmd_sweep(sweep_flags, out, err);
        if (*simulate) return cmd_simulate(sim_flags, sim, out, err);
        if (*report) return cmd_report(report_in, report_out, out);
        if (*normalform) return cmd_normalform(nf, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace voltmargin::cli
