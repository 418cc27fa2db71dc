#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "voltmargin/detector.hpp"
#include "voltmargin/grid_model.hpp"
#include "voltmargin/ou_process.hpp"
#include "voltmargin/rng.hpp"

namespace voltmargin {

struct IntegratorConfig {
    double dt = 0.05;  ///< s
    double newton_tol = 1e-8;
    int max_newton_iter = 20;
    double horizon = 3600.0;  ///< s

    void validate() const;
    SolverOptions solver_options() const;
};

/// Advisory messages for a configuration, e.g. dt above a tenth of the
/// fastest recovery time constant. Empty when nothing is suspicious.
std::vector<std::string> integrator_warnings(const IntegratorConfig& config, const GridModel& model);

enum class Termination { SNBDetected, NoSolution, HorizonReached };

const char* to_string(Termination termination);

struct TrajectorySample {
    double t = 0.0;
    double lambda = 0.0;
    std::vector<double> v;  ///< at TrajectoryOptions::monitored_buses
    std::vector<double> x;
    std::vector<double> eta;
    double rcond = 1.0;  ///< NaN when not checked at this step
};

struct NewtonStats {
    std::size_t steps = 0;
    std::size_t total_iterations = 0;
    int max_iterations = 0;
    std::size_t steps_within_5 = 0;
};

struct TrajectoryRecord {
    std::vector<TrajectorySample> samples;
    Termination termination = Termination::HorizonReached;
    std::optional<MarginSample> margin;    ///< first detection; absent when the horizon was reached
    std::optional<MarginSample> collapse;  ///< NoSolution point when run past detection
    NewtonStats newton;

    std::optional<double> margin_S() const {
        return margin ? std::optional<double>(margin->S) : std::nullopt;
    }
};

struct TrajectoryOptions {
    bool record_samples = false;
    std::vector<int> monitored_buses;  ///< bus ids; empty means every load bus
    /// Keep stepping after the first detection until NoSolution or the horizon,
    /// filling TrajectoryRecord::collapse.
    bool run_to_collapse = false;
};

enum class StepOutcome { Ok, Collapse };

struct StepResult {
    StepOutcome outcome = StepOutcome::Ok;
    SolveResult solve;
};

/// One SDAE step: Euler on the recovery states with the old algebraic
/// variables, Euler-Maruyama on eta, the ramp evaluated at t + dt, then a
/// warm-started algebraic solve. On Collapse the state is left at the last
/// consistent point. `chord` optionally supplies the algebraic factor from
/// the previous point to speed up the solve.
StepResult sdae_step(const GridModel& model, GridState& state, const OUParams& ou, const RampSchedule& schedule,
                     const IntegratorConfig& config, RngStream& rng, const AlgebraicFactor* chord = nullptr);

/// Runs from the equilibrium at lambda = 0 (with a stationary eta draw) until
/// SNB detection, NoSolution or the horizon.
TrajectoryRecord simulate_trajectory(const GridModel& model, const OUParams& ou, const RampSchedule& schedule,
                                     const IntegratorConfig& config, const DetectorConfig& detector, RngStream& rng,
                                     const TrajectoryOptions& options = {});

/// CSV with header t,lambda,V_<bus>...,x<k>...,eta<k>...,rcond and a final
/// comment line carrying the termination cause and margin.
void write_trajectory_csv(std::ostream& out, const GridModel& model, const TrajectoryRecord& record,
                          const TrajectoryOptions& options = {});

}  // namespace voltmargin
