#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "voltmargin/detector.hpp"
#include "voltmargin/grid_model.hpp"
#include "voltmargin/integrator.hpp"
#include "voltmargin/ou_process.hpp"

namespace voltmargin {

struct ExperimentSpec {
    std::string case_ref;
    std::vector<double> sigma_list;
    std::vector<RampSchedule> schedule_list;
    std::size_t n_paths = 1000;
    std::uint64_t seed_base = 0;
    DetectorConfig detector;
    IntegratorConfig integrator;
    std::size_t histogram_bins = 30;
    std::size_t bootstrap_resamples = 2000;

    void validate() const;
};

struct Histogram {
    std::vector<double> edges;  ///< size counts.size() + 1, ascending
    std::vector<std::size_t> counts;
};

struct MarginStatistics {
    double sigma = 0.0;
    RampSchedule schedule;
    double speed_mw_per_s = 0.0;
    std::size_t n = 0;         ///< trajectories that ended in a detection
    std::size_t censored = 0;  ///< trajectories that reached the horizon
    std::size_t no_solution = 0;
    double mean_S = 0.0;
    double var_S = 0.0;  ///< sample variance, n - 1
    double S_det = 0.0;
    double pct_diff_vs_det = 0.0;
    double ci90_lower = 0.0;
    double bootstrap_se = 0.0;  ///< standard error of mean_S
    Histogram histogram;
    std::vector<double> samples;  ///< margins in path order, censored paths omitted
};

struct ExperimentResult {
    std::vector<double> s_det;  ///< per schedule
    std::vector<MarginStatistics> cells;  ///< sigma-major: cells[i_sigma * schedules + i_schedule]
    std::size_t schedule_count = 0;

    const MarginStatistics& cell(std::size_t i_sigma, std::size_t i_schedule) const {
        return cells.at(i_sigma * schedule_count + i_schedule);
    }
};

struct RunOptions {
    unsigned threads = 1;
    /// Called once per finished trajectory, from the worker thread that ran it.
    std::function<void(std::size_t cell, std::size_t path, const TrajectoryRecord&)> on_trajectory;
    TrajectoryOptions trajectory;
};

/// Deterministic baseline per schedule, then n_paths seeded trajectories per
/// (sigma, schedule) cell. Path p of cell c draws from stream
/// (seed_base, make_stream_id(c + 1, p)); the result does not depend on the
/// thread count. A numerical failure is rethrown as NumericalError naming the
/// cell and path.
ExperimentResult run_experiment(const GridModel& model, const OUParams& ou, const ExperimentSpec& spec,
                                const RunOptions& options = {});

/// Summary of a set of margins. `samples` must be non-empty.
MarginStatistics summarize_margins(std::span<const double> samples, double s_det, std::size_t bins,
                                   std::size_t resamples, RngStream& rng);

/// (mean - S_det) / S_det * 100.
double percent_diff(double mean_S, double s_det);

/// percent_diff rounded half away from zero to two decimals.
double percent_diff_rounded(double mean_S, double s_det);

/// Equal-width bins over [min, max]; a zero-width range is widened to +-0.5.
Histogram histogram(std::span<const double> samples, std::size_t bins);

/// Counts per [edges[k], edges[k+1]), the last bin closed. Throws when a sample
/// lies outside the edges.
Histogram histogram(std::span<const double> samples, std::span<const double> edges);

/// Empirical 5th percentile with linear interpolation between order
/// statistics at position 0.05 (n - 1). Requires n >= 20.
double ci90_lower(std::span<const double> samples);

/// Standard deviation of the mean over `resamples` bootstrap resamples.
double bootstrap_standard_error(std::span<const double> samples, std::size_t resamples, RngStream& rng);

}  // namespace voltmargin
