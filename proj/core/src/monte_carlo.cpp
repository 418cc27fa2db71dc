#include "voltmargin/monte_carlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "voltmargin/error.hpp"
#include "voltmargin/format.hpp"

namespace voltmargin {

void ExperimentSpec::validate() const {
    if (sigma_list.empty()) throw InvalidArgument("experiment: sigma_list is empty");
    if (schedule_list.empty()) throw InvalidArgument("experiment: schedule list is empty");
    if (n_paths < 1) throw InvalidArgument("experiment: n_paths must be at least 1");
    if (histogram_bins < 1) throw InvalidArgument("experiment: histogram_bins must be at least 1");
    for (double s : sigma_list) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("experiment: sigma values must be non-negative");
    }
    for (const auto& s : schedule_list) s.validate();
    detector.validate();
    integrator.validate();
}

double percent_diff(double mean_S, double s_det) {
    if (!(s_det > 0.0)) throw InvalidArgument("percent_diff: S_det must be positive");
    return (mean_S - s_det) / s_det * 100.0;
}

double percent_diff_rounded(double mean_S, double s_det) {
    return std::round(percent_diff(mean_S, s_det) * 100.0) / 100.0;
}

Histogram histogram(std::span<const double> samples, std::size_t bins) {
    if (samples.empty()) throw InvalidArgument("histogram: no samples");
    if (bins < 1) throw InvalidArgument("histogram: bins must be positive");
    auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t k = 0; k <= bins; ++k) h.edges[k] = lo + width * static_cast<double>(k);
    h.edges.back() = hi;
    h.counts.assign(bins, 0);
    for (double s : samples) {
        auto k = static_cast<std::size_t>(std::floor((s - lo) / width));
        k = std::min(k, bins - 1);
        // Rounding in the division can land one bin off near an edge.
        while (k > 0 && s < h.edges[k]) --k;
        while (k + 1 < bins && s >= h.edges[k + 1]) ++k;
        ++h.counts[k];
    }
    return h;
}

Histogram histogram(std::span<const double> samples, std::span<const double> edges) {
    if (samples.empty()) throw InvalidArgument("histogram: no samples");
    if (edges.size() < 2) throw InvalidArgument("histogram: need at least two edges");
    if (!std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw InvalidArgument("histogram: edges must be strictly increasing");
    }
    Histogram h;
    h.edges.assign(edges.begin(), edges.end());
    h.counts.assign(edges.size() - 1, 0);
    for (double s : samples) {
        if (s < edges.front() || s > edges.back()) {
            throw InvalidArgument("histogram: sample " + format_double(s) + " outside the edges");
        }
        auto it = std::upper_bound(edges.begin(), edges.end(), s);
        auto k = static_cast<std::size_t>(it - edges.begin());
        k = std::min(k, h.counts.size()) - 1;
        ++h.counts[k];
    }
    return h;
}

double ci90_lower(std::span<const double> samples) {
    if (samples.size() < 20) throw InvalidArgument("ci90_lower: need at least 20 samples");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const double pos = 0.05 * static_cast<double>(s.size() - 1);
    const auto k = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(k);
    if (k + 1 >= s.size()) return s[k];
    return s[k] + frac * (s[k + 1] - s[k]);
}

double bootstrap_standard_error(std::span<const double> samples, std::size_t resamples, RngStream& rng) {
    if (samples.empty()) throw InvalidArgument("bootstrap: no samples");
    if (resamples < 2) return 0.0;
    const std::size_t n = samples.size();
    double mean = 0.0, m2 = 0.0;
    for (std::size_t r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += samples[rng.below(n)];
        const double m = sum / static_cast<double>(n);
        const double delta = m - mean;
        mean += delta / static_cast<double>(r + 1);
        m2 += delta * (m - mean);
    }
    return std::sqrt(m2 / static_cast<double>(resamples - 1));
}

MarginStatistics summarize_margins(std::span<const double> samples, double s_det, std::size_t bins,
                                   std::size_t resamples, RngStream& rng) {
    if (samples.empty()) throw InvalidArgument("summarize_margins: no samples");
    MarginStatistics st;
    st.S_det = s_det;
    st.samples.assign(samples.begin(), samples.end());
    st.n = samples.size();
    // Welford
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double delta = samples[i] - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (samples[i] - mean);
    }
    st.mean_S = mean;
    st.var_S = st.n > 1 ? m2 / static_cast<double>(st.n - 1) : 0.0;
    st.pct_diff_vs_det = s_det > 0.0 ? percent_diff(mean, s_det) : std::numeric_limits<double>::quiet_NaN();
    st.histogram = histogram(samples, bins);
    st.ci90_lower = st.n >= 20 ? ci90_lower(samples) : std::numeric_limits<double>::quiet_NaN();
    st.bootstrap_se = bootstrap_standard_error(samples, resamples, rng);
    return st;
}

namespace {

struct PathOutcome {
    bool censored = true;
    bool no_solution = false;
    double S = 0.0;
};

PathOutcome outcome_of(const TrajectoryRecord& rec) {
    PathOutcome o;
    if (rec.termination == Termination::HorizonReached || !rec.margin) return o;
    o.censored = false;
    o.no_solution = rec.margin->cause == DetectionCause::NoSolution;
    o.S = rec.margin->S;
    return o;
}

std::string cell_label(double sigma, const RampSchedule& s, std::size_t path) {
    std::ostringstream os;
    os << "sigma=" << format_double(sigma) << " schedule=(delta_lambda=" << format_double(s.delta_lambda)
       << ", interval=" << format_double(s.interval) << ") path=" << path;
    return os.str();
}

// Runs job(i) for i in [0, count) on `threads` workers; rethrows the first
// failure by index so the reported error does not depend on scheduling.
template <class Job>
void parallel_for(std::size_t count, unsigned threads, Job job) {
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
                failed.store(true);
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

ExperimentResult run_experiment(const GridModel& model, const OUParams& ou, const ExperimentSpec& spec,
                                const RunOptions& options) {
    spec.validate();
    ou.validate();
    if (ou.dim() != model.noise_dim()) throw InvalidArgument("experiment: OU dimension does not match the case");
    const std::size_t n_sched = spec.schedule_list.size();
    const std::size_t n_cells = spec.sigma_list.size() * n_sched;
    const double ramp_mw = model.ramped_p0() * model.network().base_mva;

    const auto run_path = [&](double sigma, const RampSchedule& schedule, std::size_t stream_cell, std::size_t path) {
        OUParams cell_ou = ou;
        cell_ou.sigma = sigma;
        RngStream rng(spec.seed_base, make_stream_id(stream_cell, path));
        try {
            return simulate_trajectory(model, cell_ou, schedule, spec.integrator, spec.detector, rng,
                                       options.trajectory);
        } catch (const std::exception& e) {
            throw NumericalError(cell_label(sigma, schedule, path) + ": " + e.what());
        }
    };

    ExperimentResult result;
    result.schedule_count = n_sched;
    result.s_det.resize(n_sched);
    // Baselines live in stream cell 0; sigma = 0 draws nothing anyway.
    std::vector<PathOutcome> det(n_sched);
    parallel_for(n_sched, options.threads, [&](std::size_t k) {
        det[k] = outcome_of(run_path(0.0, spec.schedule_list[k], 0, k));
    });
    for (std::size_t k = 0; k < n_sched; ++k) {
        if (det[k].censored) {
            throw NumericalError("deterministic baseline reached the horizon without detection: " +
                                 cell_label(0.0, spec.schedule_list[k], 0));
        }
        result.s_det[k] = det[k].S;
    }

    std::vector<PathOutcome> outcomes(n_cells * spec.n_paths);
    parallel_for(outcomes.size(), options.threads, [&](std::size_t job) {
        const std::size_t cell = job / spec.n_paths;
        const std::size_t path = job % spec.n_paths;
        const double sigma = spec.sigma_list[cell / n_sched];
        const TrajectoryRecord rec = run_path(sigma, spec.schedule_list[cell % n_sched], cell + 1, path);
        if (options.on_trajectory) options.on_trajectory(cell, path, rec);
        outcomes[job] = outcome_of(rec);
    });

    result.cells.resize(n_cells);
    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        std::vector<double> samples;
        std::size_t censored = 0, no_solution = 0;
        for (std::size_t p = 0; p < spec.n_paths; ++p) {
            const PathOutcome& o = outcomes[cell * spec.n_paths + p];
            if (o.censored) {
                ++censored;
                continue;
            }
            if (o.no_solution) ++no_solution;
            samples.push_back(o.S);
        }
        const RampSchedule& schedule = spec.schedule_list[cell % n_sched];
        MarginStatistics st;
        if (!samples.empty()) {
            RngStream boot(spec.seed_base ^ 0xb007b007b007b007ULL, cell);
            st = summarize_margins(samples, result.s_det[cell % n_sched], spec.histogram_bins,
                                   spec.bootstrap_resamples, boot);
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            st.S_det = result.s_det[cell % n_sched];
            st.mean_S = st.var_S = st.pct_diff_vs_det = st.ci90_lower = st.bootstrap_se = nan;
        }
        st.sigma = spec.sigma_list[cell / n_sched];
        st.schedule = schedule;
        st.speed_mw_per_s = schedule.speed_mw_per_s(ramp_mw);
        st.censored = censored;
        st.no_solution = no_solution;
        result.cells[cell] = std::move(st);
    }
    return result;
}

}  // namespace voltmargin
