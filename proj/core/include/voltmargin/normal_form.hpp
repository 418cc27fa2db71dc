#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "voltmargin/rng.hpp"

namespace voltmargin {

// Slow-fast saddle-node normal form in slow time s = y:
//
//   dx = (1/eps) (-y - x^2) ds + (sigma / sqrt(eps)) dW1
//   dy = ds + sigma_slow dW2
//
// The stable branch is x = sqrt(-y) for y < 0; the fold sits at the origin.

struct NormalFormParams {
    double epsilon = 1e-3;
    double sigma = 0.0;
    double sigma_slow = 0.0;
    double x0 = 1.0;
    double y0 = -1.0;
    double escape_threshold = -1.0;  ///< x <= this counts as escape

    void validate() const;
};

struct EscapeRecord {
    bool escaped = false;
    double y_at_escape = std::numeric_limits<double>::quiet_NaN();
    bool crossed_zero = false;
    double y_cross_zero = std::numeric_limits<double>::quiet_NaN();
};

struct NormalFormSample {
    double x;
    double y;
};

struct NormalFormPath {
    std::vector<NormalFormSample> samples;  ///< every `stride`-th step, plus the final state
    EscapeRecord record;
};

struct NormalFormRun {
    double dt = 1e-5;              ///< slow-time step; must not exceed epsilon / 10
    double y_horizon = 0.1;        ///< stop once y reaches this value
    std::size_t record_stride = 1; ///< 0 records nothing
};

/// Euler integration of the noiseless normal form. Crossing locations are
/// linearly interpolated between steps. Throws InvalidArgument when
/// dt > epsilon / 10 (the fast dynamics would be under-resolved).
NormalFormPath nf_deterministic_trajectory(const NormalFormParams& params, const NormalFormRun& run);

/// Euler-Maruyama integration with additive fast (and optional slow) noise.
/// With sigma == sigma_slow == 0 the output is bit-identical to the
/// deterministic integrator.
NormalFormPath nf_stochastic_trajectory(const NormalFormParams& params, const NormalFormRun& run,
                                        RngStream& rng);

enum class NoiseRegime { Weak, Strong };

/// Weak iff sigma < sqrt(epsilon). The boundary belongs to Strong.
NoiseRegime classify_regime(double sigma, double epsilon);

const char* to_string(NoiseRegime regime);

// ---------------------------------------------------------------------------
// Cross-section of the concentration layer

/// Solves A U + U A^T + Q = 0 for symmetric U. Throws NumericalError when A is
/// not Hurwitz.
Eigen::MatrixXd stationary_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// diag(kappa I_{n - m}, noise_shape) for an n x n linearisation with an m x m noise block.
Eigen::MatrixXd cross_section_forcing(Eigen::Index n, double kappa, const Eigen::MatrixXd& noise_shape);

using LinearizationFn = std::function<Eigen::MatrixXd(double y)>;

/// Integrates eps U' = A(y) U + U A(y)^T + diag(kappa I, noise_shape) from
/// the stationary value at y_start up to y (RK4, step limited by the fast
/// rate). Throws NumericalError if A is not Hurwitz anywhere on the way.
Eigen::MatrixXd cross_section_value(const LinearizationFn& linearization, double y_start, double y,
                                    double epsilon, double kappa, const Eigen::MatrixXd& noise_shape);

/// Linearisation d/dx (-y - x^2) = -2 sqrt(-y) of the normal form on its stable branch.
Eigen::MatrixXd normal_form_linearization(double y);

/// Ellipsoidal layer { <x - center(y), shape(y)^{-1} (x - center(y))> < h^2 }.
struct EllipsoidSpec {
    std::function<Eigen::VectorXd(double y)> center_fn;
    std::function<Eigen::MatrixXd(double y)> shape_fn;
    double h = 0.0;
};

bool ellipsoid_contains(const Eigen::VectorXd& point, double y, const EllipsoidSpec& spec);

/// Scalar form of the membership test: deviation^2 / shape < h^2.
bool ellipsoid_contains(double deviation, double shape, double h);

/// Nominal path and cross-section of the normal form tabulated on the step
/// grid y_k = y0 + k dt, used by the Monte Carlo estimators.
class NormalFormTube {
public:
    NormalFormTube(const NormalFormParams& params, double dt, double y_stop);

    std::size_t size() const { return center_.size(); }
    double y(std::size_t k) const { return y0_ + static_cast<double>(k) * dt_; }
    double center(std::size_t k) const { return center_[k]; }
    double shape(std::size_t k) const { return shape_[k]; }
    double dt() const { return dt_; }

    /// Interpolated spec usable with the generic ellipsoid_contains.
    EllipsoidSpec spec(double h) const;

private:
    double y0_;
    double dt_;
    std::vector<double> center_;
    std::vector<double> shape_;
};

struct ProbabilityEstimate {
    double h = 0.0;
    std::size_t hits = 0;
    std::size_t n = 0;
    double p = 0.0;
    double lower = 0.0;  ///< 95% Wilson interval
    double upper = 0.0;
};

/// Wilson score interval at 95% coverage.
ProbabilityEstimate wilson_interval(std::size_t hits, std::size_t n);

/// Fraction of stochastic paths that leave B(h) before y_stop, started on
/// the nominal path. One simulation per path serves every h in `h_values`.
/// Requires n_paths >= 100 and y_stop < -epsilon^(2/3).
std::vector<ProbabilityEstimate> estimate_exit_probability(const NormalFormParams& params,
                                                           const std::vector<double>& h_values,
                                                           double y_stop, std::size_t n_paths,
                                                           const RngStream& rng_base, double dt = 0.0);

ProbabilityEstimate estimate_exit_probability(const NormalFormParams& params, double h, double y_stop,
                                              std::size_t n_paths, const RngStream& rng_base,
                                              double dt = 0.0);

/// Escape records for n_paths independent stochastic paths (path i uses rng_base.split(i)).
std::vector<EscapeRecord> escape_ensemble(const NormalFormParams& params, const NormalFormRun& run,
                                          std::size_t n_paths, const RngStream& rng_base);

/// Least-squares slope of log(p) against h^2 / (2 sigma^2) over estimates with p > 0.
/// Returns NaN when fewer than two usable points remain.
double exit_decay_slope(const std::vector<ProbabilityEstimate>& estimates, double sigma);

}  // namespace voltmargin
