#include "voltmargin/detector.hpp"

#include <algorithm>
#include <cmath>

#include "voltmargin/error.hpp"

namespace voltmargin {

void DetectorConfig::validate() const {
    if (!(rcond_threshold > 0.0 && rcond_threshold < 1.0)) {
        throw InvalidArgument("detector: rcond_threshold must lie in (0, 1)");
    }
}

const char* to_string(DetectionCause cause) {
    return cause == DetectionCause::RcondThreshold ? "rcond" : "no_solution";
}

double rcond_estimate(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols()) throw InvalidArgument("rcond_estimate: matrix is not square");
    if (A.size() == 0) return 1.0;
    if (!A.allFinite()) return 0.0;
    const double norm = A.cwiseAbs().colwise().sum().maxCoeff();
    if (norm == 0.0) return 0.0;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) return 0.0;
    const Eigen::MatrixXd inv = lu.inverse();
    if (!inv.allFinite()) return 0.0;
    const double inv_norm = inv.cwiseAbs().colwise().sum().maxCoeff();
    // Rounding can push a perfectly conditioned matrix a hair above 1.
    return std::min(1.0, 1.0 / (norm * inv_norm));
}

SnbCheck check_snb(const GridModel& model, const GridState& state, const OUParams& ou, const DetectorConfig& config,
                   AlgebraicFactor* factor) {
    SnbCheck check;
    const auto sample = [&](DetectionCause cause) {
        return MarginSample{model.margin_mw(state.lambda), state.lambda, state.t, cause};
    };
    try {
        check.rcond = rcond_estimate(model.reduced_state_matrix(state, ou, factor));
    } catch (const NumericalError&) {
        check.rcond = 0.0;
        check.detected = true;
        check.sample = sample(DetectionCause::NoSolution);
        return check;
    }
    if (check.rcond < config.rcond_threshold) {
        check.detected = true;
        check.sample = sample(DetectionCause::RcondThreshold);
    }
    return check;
}

double margin_reduction_estimate(double sigma, double s_det) {
    if (!(s_det > 0.0)) throw InvalidArgument("margin_reduction_estimate: S_det must be positive");
    if (!(sigma >= 0.0)) throw InvalidArgument("margin_reduction_estimate: sigma must be non-negative");
    return std::pow(sigma, 4.0 / 3.0) * s_det;
}

double tradeoff_sigma(double sigma, double eps, double eps_new) {
    if (!(eps > 0.0) || !(eps_new > 0.0)) throw InvalidArgument("tradeoff_sigma: speeds must be positive");
    if (eps_new == eps) return sigma;
    return sigma * std::sqrt(eps_new / eps);
}

}  // namespace voltmargin
