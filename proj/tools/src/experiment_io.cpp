#include "experiment_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "version.hpp"
#include "voltmargin/error.hpp"
#include "voltmargin/format.hpp"

namespace voltmargin::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class Schema {
public:
    explicit Schema(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& where, const std::string& msg) const {
        throw ParseError(source_, 0, where + ": " + msg);
    }

    void keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) const {
        if (!obj.is_object()) fail(where, "expected an object");
        for (const auto& [key, value] : obj.items()) {
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; })) {
                fail(where, "unknown key '" + key + "'");
            }
        }
    }

    double number(const json& obj, const char* key, const std::string& where) const {
        const auto& v = obj.at(key);
        if (!v.is_number()) fail(where + "." + key, "expected a number");
        return v.get<double>();
    }

    std::uint64_t unsigned_integer(const json& obj, const char* key, const std::string& where) const {
        const auto& v = obj.at(key);
        if (!v.is_number_unsigned()) fail(where + "." + key, "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::vector<double> numbers(const json& obj, const char* key, const std::string& where) const {
        const auto& v = obj.at(key);
        if (!v.is_array()) fail(where + "." + key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(where + "." + key, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::string string(const json& obj, const char* key, const std::string& where) const {
        const auto& v = obj.at(key);
        if (!v.is_string()) fail(where + "." + key, "expected a string");
        return v.get<std::string>();
    }

    bool boolean(const json& obj, const char* key, const std::string& where) const {
        const auto& v = obj.at(key);
        if (!v.is_boolean()) fail(where + "." + key, "expected true or false");
        return v.get<bool>();
    }

    const std::string& source() const { return source_; }

private:
    std::string source_;
};

int line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace

LoadDynParams load_from_json(const json& j, const std::string& where) {
    const Schema s(where);
    s.keys(j, "load", {"bus", "p0", "q0", "tp", "tq", "alpha_s", "alpha_t", "beta_s", "beta_t", "v0",
                       "noise_channel", "dynamic", "ramped"});
    LoadDynParams l;
    if (!j.contains("bus") || !j.at("bus").is_number_integer()) s.fail("load", "missing integer 'bus'");
    l.bus = j.at("bus").get<int>();
    const std::string w = "load at bus " + std::to_string(l.bus);
    const auto opt = [&](const char* key, double& field) {
        if (j.contains(key)) field = s.number(j, key, w);
    };
    opt("p0", l.p0);
    opt("q0", l.q0);
    opt("tp", l.tp);
    opt("tq", l.tq);
    opt("alpha_s", l.alpha_s);
    opt("alpha_t", l.alpha_t);
    opt("beta_s", l.beta_s);
    opt("beta_t", l.beta_t);
    opt("v0", l.v0);
    if (j.contains("noise_channel") && !j.at("noise_channel").is_null()) {
        l.noise_channel = static_cast<std::size_t>(s.unsigned_integer(j, "noise_channel", w));
    }
    if (j.contains("dynamic")) l.dynamic = s.boolean(j, "dynamic", w);
    if (j.contains("ramped")) l.ramped = s.boolean(j, "ramped", w);
    try {
        l.validate();
    } catch (const InvalidArgument& e) {
        s.fail(w, e.what());
    }
    return l;
}

ordered_json load_to_json(const LoadDynParams& l) {
    ordered_json j;
    j["bus"] = l.bus;
    j["p0"] = l.p0;
    j["q0"] = l.q0;
    j["tp"] = l.tp;
    j["tq"] = l.tq;
    j["alpha_s"] = l.alpha_s;
    j["alpha_t"] = l.alpha_t;
    j["beta_s"] = l.beta_s;
    j["beta_t"] = l.beta_t;
    j["v0"] = l.v0;
    j["noise_channel"] = l.noise_channel ? ordered_json(*l.noise_channel) : ordered_json(nullptr);
    j["dynamic"] = l.dynamic;
    j["ramped"] = l.ramped;
    return j;
}

ExperimentFile parse_experiment_text(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source, line_of_offset(text, e.byte), "invalid JSON");
    }
    const Schema s(source);
    s.keys(root, "experiment", {"case", "case_format", "loads", "ou", "sweep", "detector", "integrator", "seed",
                                "output", "histogram_bins"});
    ExperimentFile f;
    f.source = source;
    if (!root.contains("case")) s.fail("experiment", "missing 'case'");
    f.case_path = s.string(root, "case", "experiment");
    const auto base = std::filesystem::path(source).parent_path();
    if (std::filesystem::path(f.case_path).is_relative()) f.case_path = (base / f.case_path).lexically_normal().string();
    if (root.contains("case_format")) {
        try {
            f.case_format = case_format_from_string(s.string(root, "case_format", "experiment"));
        } catch (const InvalidArgument& e) {
            s.fail("experiment.case_format", e.what());
        }
    }
    if (root.contains("loads")) {
        if (!root.at("loads").is_array()) s.fail("experiment.loads", "expected an array");
        std::vector<LoadDynParams> loads;
        for (const auto& l : root.at("loads")) loads.push_back(load_from_json(l, source));
        f.loads = std::move(loads);
    }
    if (root.contains("ou")) {
        const auto& o = root.at("ou");
        s.keys(o, "ou", {"alpha", "beta"});
        if (!o.contains("alpha")) s.fail("ou", "missing 'alpha'");
        OUParams ou;
        ou.alpha = s.numbers(o, "alpha", "ou");
        if (o.contains("beta")) {
            ou.beta = s.numbers(o, "beta", "ou");
        } else {
            ou = OUParams::unit_variance(ou.alpha, 0.0);
        }
        try {
            ou.validate();
        } catch (const InvalidArgument& e) {
            s.fail("ou", e.what());
        }
        f.ou = ou;
    }
    if (!root.contains("sweep")) s.fail("experiment", "missing 'sweep'");
    const auto& sw = root.at("sweep");
    s.keys(sw, "sweep", {"sigma_list", "schedules", "n_paths", "lambda_max"});
    if (!sw.contains("sigma_list") || !sw.contains("schedules")) s.fail("sweep", "needs 'sigma_list' and 'schedules'");
    f.sigma_list = s.numbers(sw, "sigma_list", "sweep");
    if (f.sigma_list.empty()) s.fail("sweep.sigma_list", "must not be empty");
    for (double v : f.sigma_list) {
        if (!(v >= 0.0)) s.fail("sweep.sigma_list", "sigma must be non-negative");
    }
    if (sw.contains("n_paths")) f.n_paths = s.unsigned_integer(sw, "n_paths", "sweep");
    if (f.n_paths < 1) s.fail("sweep.n_paths", "must be at least 1");
    if (sw.contains("lambda_max")) f.lambda_max = s.number(sw, "lambda_max", "sweep");
    const auto& sched = sw.at("schedules");
    if (!sched.is_array() || sched.empty()) s.fail("sweep.schedules", "expected a non-empty array");
    for (std::size_t k = 0; k < sched.size(); ++k) {
        const std::string w = "sweep.schedules[" + std::to_string(k) + "]";
        s.keys(sched[k], w, {"delta_lambda", "interval", "speed_MW_per_s"});
        ScheduleEntry e;
        if (sched[k].contains("delta_lambda")) e.delta_lambda = s.number(sched[k], "delta_lambda", w);
        if (sched[k].contains("interval")) e.interval = s.number(sched[k], "interval", w);
        if (sched[k].contains("speed_MW_per_s")) e.speed_mw_per_s = s.number(sched[k], "speed_MW_per_s", w);
        if (e.speed_mw_per_s && e.interval) s.fail(w, "speed_MW_per_s and interval are mutually exclusive");
        if (!e.speed_mw_per_s && !e.interval) s.fail(w, "needs either interval or speed_MW_per_s");
        f.schedules.push_back(e);
    }
    if (root.contains("detector")) {
        const auto& d = root.at("detector");
        s.keys(d, "detector", {"rcond_threshold", "check_every_step"});
        if (d.contains("rcond_threshold")) f.detector.rcond_threshold = s.number(d, "rcond_threshold", "detector");
        if (d.contains("check_every_step")) f.detector.check_every_step = s.boolean(d, "check_every_step", "detector");
    }
    if (root.contains("integrator")) {
        const auto& d = root.at("integrator");
        s.keys(d, "integrator", {"dt", "newton_tol", "max_newton_iter", "horizon"});
        if (d.contains("dt")) f.integrator.dt = s.number(d, "dt", "integrator");
        if (d.contains("newton_tol")) f.integrator.newton_tol = s.number(d, "newton_tol", "integrator");
        if (d.contains("max_newton_iter")) {
            f.integrator.max_newton_iter = static_cast<int>(s.unsigned_integer(d, "max_newton_iter", "integrator"));
        }
        if (d.contains("horizon")) f.integrator.horizon = s.number(d, "horizon", "integrator");
    }
    if (root.contains("seed")) f.seed = s.unsigned_integer(root, "seed", "experiment");
    if (root.contains("histogram_bins")) f.histogram_bins = s.unsigned_integer(root, "histogram_bins", "experiment");
    if (root.contains("output")) {
        f.output_dir = s.string(root, "output", "experiment");
        if (std::filesystem::path(f.output_dir).is_relative()) {
            f.output_dir = (base / f.output_dir).lexically_normal().string();
        }
    }
    try {
        f.detector.validate();
        f.integrator.validate();
    } catch (const InvalidArgument& e) {
        s.fail("experiment", e.what());
    }
    return f;
}

ExperimentFile parse_experiment(const std::string& path) { return parse_experiment_text(read_text_file(path), path); }

CaseDocument load_case_for(const ExperimentFile& file) {
    CaseDocument doc = file.case_format ? parse_case(file.case_path, *file.case_format) : parse_case(file.case_path);
    if (file.loads) doc.loads = *file.loads;
    if (file.ou) doc.ou = *file.ou;
    try {
        validate_case(doc);
    } catch (const InvalidArgument& e) {
        throw ParseError(file.source, 0, e.what());
    }
    return doc;
}

std::vector<RampSchedule> resolve_schedules(const ExperimentFile& file, double ramp_p0_mw) {
    std::vector<RampSchedule> out;
    for (std::size_t k = 0; k < file.schedules.size(); ++k) {
        const auto& e = file.schedules[k];
        const double delta = e.delta_lambda.value_or(0.02);
        try {
            if (e.speed_mw_per_s) {
                out.push_back(RampSchedule::from_speed(*e.speed_mw_per_s, delta, ramp_p0_mw, file.lambda_max));
            } else {
                RampSchedule r;
                r.delta_lambda = delta;
                r.interval = *e.interval;
                r.lambda_max = file.lambda_max;
                r.validate();
                out.push_back(r);
            }
        } catch (const InvalidArgument& ex) {
            throw ParseError(file.source, 0, "sweep.schedules[" + std::to_string(k) + "]: " + ex.what());
        }
    }
    return out;
}

ExperimentSpec make_spec(const ExperimentFile& file, const CaseDocument& doc) {
    double ramp_p0 = 0.0;
    for (const auto& l : doc.loads) {
        if (l.ramped) ramp_p0 += l.p0;
    }
    ExperimentSpec spec;
    spec.case_ref = file.case_path;
    spec.sigma_list = file.sigma_list;
    spec.schedule_list = resolve_schedules(file, ramp_p0 * doc.network.base_mva);
    spec.n_paths = file.n_paths;
    spec.seed_base = file.seed;
    spec.detector = file.detector;
    spec.integrator = file.integrator;
    spec.histogram_bins = file.histogram_bins;
    return spec;
}

ordered_json resolved_config(const ExperimentSpec& spec, const CaseDocument& doc) {
    ordered_json j;
    j["case"] = {{"name", doc.network.name}, {"format", to_string(doc.format)}, {"checksum", doc.checksum}};
    ordered_json loads = ordered_json::array();
    for (const auto& l : doc.loads) loads.push_back(load_to_json(l));
    j["loads"] = loads;
    j["ou"] = {{"alpha", doc.ou.alpha}, {"beta", doc.ou.beta}};
    ordered_json schedules = ordered_json::array();
    for (const auto& s : spec.schedule_list) {
        schedules.push_back({{"delta_lambda", s.delta_lambda},
                             {"interval", s.interval},
                             {"lambda_max", s.lambda_max},
                             {"continuous", s.continuous}});
    }
    j["sweep"] = {{"sigma_list", spec.sigma_list}, {"schedules", schedules}, {"n_paths", spec.n_paths}};
    j["detector"] = {{"rcond_threshold", spec.detector.rcond_threshold},
                     {"check_every_step", spec.detector.check_every_step}};
    j["integrator"] = {{"dt", spec.integrator.dt},
                       {"newton_tol", spec.integrator.newton_tol},
                       {"max_newton_iter", spec.integrator.max_newton_iter},
                       {"horizon", spec.integrator.horizon}};
    j["seed"] = spec.seed_base;
    j["histogram_bins"] = spec.histogram_bins;
    j["bootstrap_resamples"] = spec.bootstrap_resamples;
    return j;
}

std::string config_hash(const ordered_json& resolved) { return fnv1a_hex(resolved.dump()); }

std::string cell_name(const MarginStatistics& cell) {
    return "sigma" + format_double(cell.sigma) + "_interval" + format_double(cell.schedule.interval) + "_delta" +
           format_double(cell.schedule.delta_lambda);
}

ordered_json results_struct(const ExperimentResult& result, const ExperimentSpec& spec, const CaseDocument& doc,
                            const std::string& hash) {
    ordered_json j;
    j["format"] = "voltmargin-results";
    j["version"] = VOLTMARGIN_VERSION;
    j["seed"] = spec.seed_base;
    j["config_hash"] = hash;
    j["config"] = resolved_config(spec, doc);
    j["s_det"] = result.s_det;
    ordered_json cells = ordered_json::array();
    for (const auto& c : result.cells) {
        ordered_json e;
        e["name"] = cell_name(c);
        e["sigma"] = c.sigma;
        e["delta_lambda"] = c.schedule.delta_lambda;
        e["interval"] = c.schedule.interval;
        e["speed_MW_per_s"] = c.speed_mw_per_s;
        e["n"] = c.n;
        e["censored"] = c.censored;
        e["no_solution"] = c.no_solution;
        e["S_det"] = c.S_det;
        // JSON has no NaN; empty cells carry null.
        const auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
        e["mean_S"] = num(c.mean_S);
        e["var_S"] = num(c.var_S);
        e["pct_diff"] = num(c.pct_diff_vs_det);
        e["ci90_lower"] = num(c.ci90_lower);
        e["bootstrap_se"] = num(c.bootstrap_se);
        e["histogram"] = {{"edges", c.histogram.edges}, {"counts", c.histogram.counts}};
        e["samples"] = c.samples;
        cells.push_back(std::move(e));
    }
    j["cells"] = std::move(cells);
    return j;
}

void write_results_csv(std::ostream& out, const ExperimentResult& result, std::uint64_t seed,
                       const std::string& hash) {
    const auto f = [](double v) { return format_double(v); };
    out << "# voltmargin " << VOLTMARGIN_VERSION << " seed=" << seed << " config_hash=" << hash << '\n';
    out << "sigma,delta_lambda,interval,speed_MW_per_s,n,censored,no_solution,S_det,mean_S,var_S,pct_diff,"
           "ci90_lower,bootstrap_se\n";
    for (const auto& c : result.cells) {
        out << f(c.sigma) << ',' << f(c.schedule.delta_lambda) << ',' << f(c.schedule.interval) << ','
            << f(c.speed_mw_per_s) << ',' << c.n << ',' << c.censored << ',' << c.no_solution << ',' << f(c.S_det)
            << ',' << f(c.mean_S) << ',' << f(c.var_S) << ',' << f(c.pct_diff_vs_det) << ',' << f(c.ci90_lower)
            << ',' << f(c.bootstrap_se) << '\n';
    }
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
    out << "bin_lower,bin_upper,count\n";
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        out << format_double(h.edges[k]) << ',' << format_double(h.edges[k + 1]) << ',' << h.counts[k] << '\n';
    }
}

}  // namespace voltmargin::cli
