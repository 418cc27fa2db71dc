#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "voltmargin/rng.hpp"

namespace voltmargin {

/// Diagonal vector Ornstein-Uhlenbeck process
///   d eta_i = -alpha_i eta_i dt + sigma beta_i dW_i
/// modelling aggregate load fluctuation in per-unit power.
struct OUParams {
    std::vector<double> alpha;  ///< mean-reversion rates, 1/s
    std::vector<double> beta;   ///< relative strengths
    double sigma = 0.0;         ///< fluctuation intensity

    std::size_t dim() const { return alpha.size(); }

    /// Throws InvalidArgument unless alpha, beta > 0, sigma >= 0 and sizes agree.
    void validate() const;

    /// Stationary variance (sigma beta_i)^2 / (2 alpha_i) of channel i.
    double stationary_variance(std::size_t i) const;

    /// Channels with beta_i = sqrt(2 alpha_i), so every stationary variance is sigma^2.
    static OUParams unit_variance(std::vector<double> alpha, double sigma);
};

struct OUState {
    std::vector<double> eta;
    double t = 0.0;
};

/// Draws eta_i(0) independently from the stationary law N(0, (sigma beta_i)^2 / (2 alpha_i)).
OUState ou_initial_sample(const OUParams& params, RngStream& rng);

/// One Euler-Maruyama step:
///   eta_i <- eta_i - alpha_i eta_i dt + sigma beta_i sqrt(dt) z_i.
/// With sigma == 0 no variates are drawn and the step is the plain decay map.
void ou_step(OUState& state, const OUParams& params, double dt, RngStream& rng);

/// Exact transition kernel of the OU process. Used as an independent
/// reference for the Euler-Maruyama stepper.
void ou_exact_step(OUState& state, const OUParams& params, double dt, RngStream& rng);

struct OUPathStatistics {
    std::vector<double> mean;
    std::vector<double> variance;
    /// autocorrelation[channel][k] at lags[k]; NaN where the channel is degenerate.
    std::vector<std::vector<double>> autocorrelation;
    std::vector<double> lags;
    std::vector<bool> degenerate;  ///< zero-variance channels
};

/// Unbiased mean and variance per channel, and the normalised sample
/// autocorrelation at the requested lags (seconds, rounded to whole steps).
/// Requires at least two samples with uniform spacing.
OUPathStatistics ou_path_statistics(std::span<const OUState> path, std::span<const double> lags_s);

}  // namespace voltmargin
