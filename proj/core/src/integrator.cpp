#include "voltmargin/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "voltmargin/error.hpp"
#include "voltmargin/format.hpp"

namespace voltmargin {

void IntegratorConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("integrator: dt must be positive");
    if (!(newton_tol > 0.0)) throw InvalidArgument("integrator: newton_tol must be positive");
    if (max_newton_iter < 1) throw InvalidArgument("integrator: max_newton_iter must be at least 1");
    if (!(horizon > 0.0)) throw InvalidArgument("integrator: horizon must be positive");
}

SolverOptions IntegratorConfig::solver_options() const {
    SolverOptions o;
    o.tol = newton_tol;
    o.max_iter = max_newton_iter;
    return o;
}

const char* to_string(Termination termination) {
    switch (termination) {
        case Termination::SNBDetected: return "snb_detected";
        case Termination::NoSolution: return "no_solution";
        case Termination::HorizonReached: return "horizon_reached";
    }
    return "unknown";
}

std::vector<std::string> integrator_warnings(const IntegratorConfig& config, const GridModel& model) {
    std::vector<std::string> out;
    for (const auto& l : model.loads()) {
        if (!l.dynamic) continue;
        const double t_min = std::min(l.tp, l.tq);
        if (config.dt > t_min / 10.0) {
            out.push_back("dt=" + format_double(config.dt) + " s exceeds a tenth of the recovery time constant " +
                          format_double(t_min) + " s of the load at bus " + std::to_string(l.bus));
        }
    }
    return out;
}

StepResult sdae_step(const GridModel& model, GridState& state, const OUParams& ou, const RampSchedule& schedule,
                     const IntegratorConfig& config, RngStream& rng, const AlgebraicFactor* chord) {
    GridState next = state;
    StepResult result;
    try {
        next.x += config.dt * model.state_derivative(state);
    } catch (const NumericalError&) {
        result.outcome = StepOutcome::Collapse;
        result.solve.status = SolveStatus::Diverged;
        return result;
    }
    ou_step(next.eta, ou, config.dt, rng);
    next.t = state.t + config.dt;
    next.lambda = ramp_lambda(schedule, next.t);
    result.solve = model.solve_algebraic(next, config.solver_options(), LoadMode::Transient, chord);
    if (!result.solve.ok()) {
        result.outcome = StepOutcome::Collapse;
        return result;
    }
    state = std::move(next);
    return result;
}

namespace {

std::vector<std::size_t> monitored_indices(const GridModel& model, const TrajectoryOptions& options) {
    std::vector<std::size_t> idx;
    if (options.monitored_buses.empty()) {
        for (const auto& load : model.loads()) {
            const std::size_t i = model.network().require_bus_index(load.bus);
            bool seen = false;
            for (std::size_t k : idx) seen = seen || k == i;
            if (!seen) idx.push_back(i);
        }
    } else {
        for (int id : options.monitored_buses) idx.push_back(model.network().require_bus_index(id));
    }
    return idx;
}

TrajectorySample make_sample(const GridState& s, const std::vector<std::size_t>& buses, double rcond) {
    TrajectorySample out;
    out.t = s.t;
    out.lambda = s.lambda;
    for (std::size_t i : buses) out.v.push_back(s.v[static_cast<Eigen::Index>(i)]);
    out.x.assign(s.x.data(), s.x.data() + s.x.size());
    out.eta = s.eta.eta;
    out.rcond = rcond;
    return out;
}

void count_newton(NewtonStats& stats, const SolveResult& r) {
    ++stats.steps;
    stats.total_iterations += static_cast<std::size_t>(r.iterations);
    stats.max_iterations = std::max(stats.max_iterations, r.iterations);
    if (r.iterations <= 5) ++stats.steps_within_5;
}

}  // namespace

TrajectoryRecord simulate_trajectory(const GridModel& model, const OUParams& ou, const RampSchedule& schedule,
                                     const IntegratorConfig& config, const DetectorConfig& detector, RngStream& rng,
                                     const TrajectoryOptions& options) {
    config.validate();
    detector.validate();
    schedule.validate();
    ou.validate();
    const std::vector<std::size_t> buses = options.record_samples ? monitored_indices(model, options)
                                                                   : std::vector<std::size_t>{};
    TrajectoryRecord rec;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    GridState state = model.initial_guess();
    state.eta = ou_initial_sample(ou, rng);
    state.lambda = ramp_lambda(schedule, 0.0);
    const SolveResult init = model.initialize_equilibrium(state, config.solver_options());
    if (!init.ok()) {
        rec.termination = Termination::NoSolution;
        rec.margin = MarginSample{model.margin_mw(state.lambda), state.lambda, 0.0, DetectionCause::NoSolution};
        rec.collapse = rec.margin;
        return rec;
    }

    bool detected = false;
    AlgebraicFactor factor;
    const auto check = [&](bool lambda_changed) {
        factor.valid = false;
        if (!detector.check_every_step && !lambda_changed && state.t > 0.0) return nan;
        const SnbCheck c = check_snb(model, state, ou, detector, &factor);
        if (c.detected && !detected) {
            detected = true;
            rec.margin = c.sample;
            rec.termination = Termination::SNBDetected;
        }
        return c.rcond;
    };

    double rc = check(true);
    if (options.record_samples) rec.samples.push_back(make_sample(state, buses, rc));
    const auto steps_limit = static_cast<long long>(std::ceil(config.horizon / config.dt - 1e-9));
    for (long long k = 0; k < steps_limit; ++k) {
        if (detected && !options.run_to_collapse) break;
        const double lambda_before = state.lambda;
        const StepResult step = sdae_step(model, state, ou, schedule, config, rng, &factor);
        count_newton(rec.newton, step.solve);
        if (step.outcome == StepOutcome::Collapse) {
            const MarginSample ms{model.margin_mw(state.lambda), state.lambda, state.t, DetectionCause::NoSolution};
            rec.collapse = ms;
            if (!detected) {
                rec.margin = ms;
                rec.termination = Termination::NoSolution;
            }
            return rec;
        }
        rc = check(state.lambda != lambda_before);
        if (options.record_samples) rec.samples.push_back(make_sample(state, buses, rc));
    }
    return rec;
}

void write_trajectory_csv(std::ostream& out, const GridModel& model, const TrajectoryRecord& record,
                          const TrajectoryOptions& options) {
    const std::vector<std::size_t> buses = monitored_indices(model, options);
    out << "t,lambda";
    for (std::size_t i : buses) out << ",V_" << model.network().buses[i].id;
    for (std::size_t k = 0; k < model.dynamic_state_count(); ++k) out << ",x" << k;
    for (std::size_t k = 0; k < model.noise_dim(); ++k) out << ",eta" << k;
    out << ",rcond\n";
    for (const auto& s : record.samples) {
        out << format_double(s.t) << ',' << format_double(s.lambda);
        for (double v : s.v) out << ',' << format_double(v);
        for (double x : s.x) out << ',' << format_double(x);
        for (double e : s.eta) out << ',' << format_double(e);
        out << ',' << format_double(s.rcond) << '\n';
    }
    out << "# termination=" << to_string(record.termination);
    if (record.margin) {
        out << " cause=" << to_string(record.margin->cause) << " S_MW=" << format_double(record.margin->S)
            << " lambda=" << format_double(record.margin->lambda) << " t=" << format_double(record.margin->t);
    }
    out << '\n';
}

}  // namespace voltmargin
