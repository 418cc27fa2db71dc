#include "voltmargin/ou_process.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "voltmargin/error.hpp"

namespace voltmargin {

void OUParams::validate() const {
    if (alpha.size() != beta.size()) {
        throw InvalidArgument("OUParams: alpha and beta must have the same length");
    }
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (!(alpha[i] > 0.0) || !std::isfinite(alpha[i])) {
            throw InvalidArgument("OUParams: alpha[" + std::to_string(i) + "] must be positive");
        }
        if (!(beta[i] > 0.0) || !std::isfinite(beta[i])) {
            throw InvalidArgument("OUParams: beta[" + std::to_string(i) + "] must be positive");
        }
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw InvalidArgument("OUParams: sigma must be non-negative");
    }
}

double OUParams::stationary_variance(std::size_t i) const {
    const double s = sigma * beta[i];
    return s * s / (2.0 * alpha[i]);
}

OUParams OUParams::unit_variance(std::vector<double> alpha, double sigma) {
    OUParams p;
    p.beta.reserve(alpha.size());
    for (double a : alpha) p.beta.push_back(std::sqrt(2.0 * a));
    p.alpha = std::move(alpha);
    p.sigma = sigma;
    return p;
}

OUState ou_initial_sample(const OUParams& params, RngStream& rng) {
    OUState s;
    s.eta.assign(params.dim(), 0.0);
    if (params.sigma == 0.0) return s;
    for (std::size_t i = 0; i < params.dim(); ++i) {
        s.eta[i] = std::sqrt(params.stationary_variance(i)) * rng.normal();
    }
    return s;
}

void ou_step(OUState& state, const OUParams& params, double dt, RngStream& rng) {
    if (!(dt > 0.0)) throw InvalidArgument("ou_step: dt must be positive");
    const double sqdt = std::sqrt(dt);
    for (std::size_t i = 0; i < params.dim(); ++i) {
        double eta = state.eta[i] - params.alpha[i] * state.eta[i] * dt;
        if (params.sigma != 0.0) eta += params.sigma * params.beta[i] * sqdt * rng.normal();
        state.eta[i] = eta;
    }
    state.t += dt;
}

void ou_exact_step(OUState& state, const OUParams& params, double dt, RngStream& rng) {
    if (!(dt > 0.0)) throw InvalidArgument("ou_exact_step: dt must be positive");
    for (std::size_t i = 0; i < params.dim(); ++i) {
        const double decay = std::exp(-params.alpha[i] * dt);
        double eta = state.eta[i] * decay;
        if (params.sigma != 0.0) {
            const double sd = std::sqrt(params.stationary_variance(i) * (1.0 - decay * decay));
            eta += sd * rng.normal();
        }
        state.eta[i] = eta;
    }
    state.t += dt;
}

OUPathStatistics ou_path_statistics(std::span<const OUState> path, std::span<const double> lags_s) {
    if (path.size() < 2) throw InvalidArgument("ou_path_statistics: need at least two samples");
    const std::size_t n = path.size();
    const std::size_t dim = path.front().eta.size();
    const double spacing = path[1].t - path[0].t;
    if (!(spacing > 0.0)) throw InvalidArgument("ou_path_statistics: non-increasing time stamps");
    const double tol = 1e-9 * std::max(1.0, std::abs(path.back().t));
    for (std::size_t k = 1; k < n; ++k) {
        if (path[k].eta.size() != dim) throw InvalidArgument("ou_path_statistics: ragged path");
        if (std::abs((path[k].t - path[k - 1].t) - spacing) > tol) {
            throw InvalidArgument("ou_path_statistics: invalid path, non-uniform spacing at sample " +
                                  std::to_string(k));
        }
    }

    OUPathStatistics out;
    out.mean.assign(dim, 0.0);
    out.variance.assign(dim, 0.0);
    out.degenerate.assign(dim, false);
    out.lags.assign(lags_s.begin(), lags_s.end());
    out.autocorrelation.assign(dim, std::vector<double>(lags_s.size(), 0.0));

    for (std::size_t c = 0; c < dim; ++c) {
        double mean = 0.0, m2 = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = path[k].eta[c] - mean;
            mean += d / static_cast<double>(k + 1);
            m2 += d * (path[k].eta[c] - mean);
        }
        out.mean[c] = mean;
        out.variance[c] = m2 / static_cast<double>(n - 1);
        out.degenerate[c] = !(out.variance[c] > 0.0);

        // Biased (1/n) covariance estimator normalised by the lag-0 value.
        double c0 = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = path[k].eta[c] - mean;
            c0 += d * d;
        }
        for (std::size_t j = 0; j < lags_s.size(); ++j) {
            if (out.degenerate[c]) {
                out.autocorrelation[c][j] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const auto lag = static_cast<std::size_t>(std::llround(lags_s[j] / spacing));
            if (lag >= n) {
                out.autocorrelation[c][j] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            double acc = 0.0;
            for (std::size_t k = 0; k + lag < n; ++k) {
                acc += (path[k].eta[c] - mean) * (path[k + lag].eta[c] - mean);
            }
            out.autocorrelation[c][j] = acc / c0;
        }
    }
    return out;
}

}  // namespace voltmargin
