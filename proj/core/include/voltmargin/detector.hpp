#pragma once

#include <optional>

#include <Eigen/Dense>

#include "voltmargin/grid_model.hpp"
#include "voltmargin/ou_process.hpp"

namespace voltmargin {

struct DetectorConfig {
    double rcond_threshold = 0.1;
    bool check_every_step = true;  ///< false: only when lambda changes

    void validate() const;
};

enum class DetectionCause { RcondThreshold, NoSolution };

const char* to_string(DetectionCause cause);

struct MarginSample {
    double S = 0.0;  ///< MW
    double lambda = 0.0;
    double t = 0.0;
    DetectionCause cause = DetectionCause::RcondThreshold;
};

struct SnbCheck {
    bool detected = false;
    double rcond = 1.0;  ///< 0 when the algebraic Jacobian was singular
    std::optional<MarginSample> sample;
};

/// Reciprocal 1-norm condition number 1 / (|A|_1 |A^-1|_1). The inverse is
/// formed explicitly, which is exact and cheap at these dimensions. Returns 0
/// for a singular or non-finite matrix and 1 for an empty one.
double rcond_estimate(const Eigen::MatrixXd& A);

/// Builds the reduced state matrix at a solved state and flags the SNB when
/// its rcond drops below the threshold. A singular algebraic Jacobian counts
/// as a detection with cause NoSolution. The algebraic factor is kept in
/// `factor` when given.
SnbCheck check_snb(const GridModel& model, const GridState& state, const OUParams& ou, const DetectorConfig& config,
                   AlgebraicFactor* factor = nullptr);

/// First-order stochastic margin reduction sigma^(4/3) * S_det, MW.
double margin_reduction_estimate(double sigma, double s_det);

/// Intensity that keeps sigma / sqrt(eps) fixed when the ramp speed changes
/// from eps to eps_new.
double tradeoff_sigma(double sigma, double eps, double eps_new);

}  // namespace voltmargin
