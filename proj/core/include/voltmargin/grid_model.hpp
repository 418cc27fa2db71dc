#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltmargin/load_model.hpp"
#include "voltmargin/network.hpp"
#include "voltmargin/ou_process.hpp"

namespace voltmargin {

/// Stepwise load ramp: lambda(t) = delta_lambda * floor(t / interval), capped
/// at lambda_max. The continuous variant is delta_lambda * t / interval.
struct RampSchedule {
    double delta_lambda = 0.02;
    double interval = 0.4;  ///< s
    double lambda_max = 50.0;
    bool continuous = false;

    void validate() const;

    /// Load power variation speed in MW/s for a ramped base load of ramp_p0_mw.
    double speed_mw_per_s(double ramp_p0_mw) const { return delta_lambda * ramp_p0_mw / interval; }

    /// Interval that realises `speed` MW/s with the given increment.
    static RampSchedule from_speed(double speed_mw_per_s, double delta_lambda, double ramp_p0_mw,
                                   double lambda_max);
};

double ramp_lambda(const RampSchedule& schedule, double t);

/// Reactive limit state of the generators on a bus.
enum class QLimit : signed char { Free = 0, AtMax = 1, AtMin = -1 };

struct GridState {
    Eigen::VectorXd x;      ///< (x_p, x_q) per dynamic load, in load order
    Eigen::VectorXd v;      ///< voltage magnitude per bus, pu
    Eigen::VectorXd theta;  ///< angle per bus, rad
    OUState eta;
    double lambda = 0.0;
    double t = 0.0;
    std::vector<QLimit> qlimit;  ///< per bus; only meaningful on PV buses
};

struct SolverOptions {
    double tol = 1e-8;
    int max_iter = 20;
    double singular_rcond = 1e-12;
    int max_limit_passes = 10;
    bool enforce_q_limits = true;
};

enum class SolveStatus { Converged, Diverged, Singular };

struct SolveResult {
    SolveStatus status = SolveStatus::Converged;
    int iterations = 0;
    double residual = 0.0;

    bool ok() const { return status == SolveStatus::Converged; }
};

const char* to_string(SolveStatus status);

/// LU factor of the algebraic Jacobian at a solved point, reused as a chord
/// matrix by the next solve while the PV/PQ assignment is unchanged.
struct AlgebraicFactor {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    std::vector<QLimit> qlimit;
    bool valid = false;
};

/// Which absorption the loads present to the network.
enum class LoadMode { Transient, SteadyState };

struct PowerBalance {
    double generation = 0.0;
    double consumption = 0.0;
    double losses = 0.0;  ///< from branch flows and shunts, computed independently
};

/// Power-system SDAE: exponential-recovery loads, network power balance with
/// generator Q limits, and the load ramp. Immutable after construction.
class GridModel {
public:
    GridModel(NetworkCase network, std::vector<LoadDynParams> loads, std::size_t noise_dim);

    const NetworkCase& network() const { return network_; }
    const std::vector<LoadDynParams>& loads() const { return loads_; }
    std::size_t bus_count() const { return network_.buses.size(); }
    std::size_t dynamic_state_count() const { return 2 * dynamic_loads_.size(); }
    std::size_t noise_dim() const { return noise_dim_; }

    /// Sum of p0 over ramped loads, pu.
    double ramped_p0() const { return ramped_p0_; }
    /// Margin in MW for a loading factor: lambda * ramped p0 * base MVA.
    double margin_mw(double lambda) const { return lambda * ramped_p0_ * network_.base_mva; }

    /// Flat start: set-point voltages, case angles, zero recovery states.
    GridState initial_guess() const;

    /// Algebraic unknowns z = (theta at non-slack buses, V at PQ-behaving buses).
    Eigen::VectorXd algebraic_vector(const GridState& state) const;

    /// Power mismatches h2: generation - demand - injection at every non-slack
    /// bus (P) and every PQ-behaving bus (Q).
    Eigen::VectorXd algebraic_residuals(const GridState& state, LoadMode mode = LoadMode::Transient) const;

    /// Newton iteration on the residuals, warm-started from state.v / state.theta,
    /// with Q-limit switching. On failure the state is left at the last iterate.
    /// A valid `chord` factor is tried first (simplified Newton) and abandoned
    /// as soon as it stops contracting.
    SolveResult solve_algebraic(GridState& state, const SolverOptions& options = {},
                                LoadMode mode = LoadMode::Transient, const AlgebraicFactor* chord = nullptr) const;

    /// Solves the steady-state network (loads at p_s, q_s) and sets each
    /// recovery state to its equilibrium x = T (s - t).
    SolveResult initialize_equilibrium(GridState& state, const SolverOptions& options = {}) const;

    /// Differential right-hand side h1 (recovery-state rates).
    Eigen::VectorXd state_derivative(const GridState& state) const;

    LoadPower load_consumption(const GridState& state, std::size_t load_index) const;
    LoadStateRate load_state_derivative(const GridState& state, std::size_t load_index) const;

    /// Reduced state matrix on u = (x, eta):
    ///   [ h1_x - h1_z h2_z^-1 h2_x    h1_eta - h1_z h2_z^-1 h2_eta ]
    ///   [ 0                           -diag(alpha)                 ]
    /// Throws NumericalError when h2_z is numerically singular. The factor of
    /// h2_z is stored in `factor` when given.
    Eigen::MatrixXd reduced_state_matrix(const GridState& state, const OUParams& ou,
                                         AlgebraicFactor* factor = nullptr) const;

    /// Same matrix by central differences of the implicit map u -> h1(u, z(u)).
    Eigen::MatrixXd reduced_state_matrix_fd(const GridState& state, const OUParams& ou, double step = 1e-6) const;

    /// Jacobian of the residuals with respect to z.
    Eigen::MatrixXd algebraic_jacobian(const GridState& state, LoadMode mode = LoadMode::Transient) const;

    PowerBalance power_balance(const GridState& state) const;

    /// Index of each load's x_p in GridState::x, or -1 for static loads.
    int state_offset(std::size_t load_index) const { return state_offset_[load_index]; }

private:
    struct BusGen {
        double p = 0.0;
        double qmin = 0.0;
        double qmax = 0.0;
        double v_set = 1.0;
        bool has_gen = false;
    };
    struct Layout {
        std::vector<int> angle_col;  ///< per bus, -1 when fixed
        std::vector<int> volt_col;   ///< per bus, -1 when fixed
        std::vector<int> p_row;      ///< per bus, -1 when absent
        std::vector<int> q_row;
        int size = 0;
    };
    struct Injections {
        Eigen::VectorXd p;
        Eigen::VectorXd q;
    };
    struct Neighbor {
        std::size_t j;
        double g;
        double b;
    };

    bool behaves_pq(const GridState& state, std::size_t bus) const;
    Layout layout(const GridState& state) const;
    Injections injections(const GridState& state) const;
    void load_totals(const GridState& state, LoadMode mode, Eigen::VectorXd& p, Eigen::VectorXd& q) const;
    double eta_of(const GridState& state, const LoadDynParams& load) const;
    Eigen::VectorXd residuals(const GridState& state, const Layout& lay, LoadMode mode) const;
    Eigen::MatrixXd jacobian(const GridState& state, const Layout& lay, LoadMode mode) const;
    SolveResult newton(GridState& state, const Layout& lay, const SolverOptions& options, LoadMode mode,
                       const AlgebraicFactor* chord) const;
    bool update_limits(GridState& state, LoadMode mode) const;
    Eigen::VectorXd full_rhs(const GridState& state, const OUParams& ou) const;

    NetworkCase network_;
    std::vector<LoadDynParams> loads_;
    std::size_t noise_dim_;
    std::size_t slack_;
    std::vector<BusGen> bus_gen_;
    std::vector<std::size_t> load_bus_;
    std::vector<std::size_t> dynamic_loads_;
    std::vector<int> state_offset_;
    std::vector<std::vector<Neighbor>> adjacency_;  ///< includes the diagonal entry
    Eigen::VectorXd g_diag_;
    Eigen::VectorXd b_diag_;
    double ramped_p0_ = 0.0;
};

}  // namespace voltmargin
