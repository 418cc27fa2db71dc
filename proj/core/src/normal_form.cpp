#include "voltmargin/normal_form.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "voltmargin/error.hpp"

namespace voltmargin {

void NormalFormParams::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw InvalidArgument("normal form: epsilon must be positive");
    }
    if (!(sigma >= 0.0) || !(sigma_slow >= 0.0)) {
        throw InvalidArgument("normal form: noise intensities must be non-negative");
    }
    if (!std::isfinite(x0) || !std::isfinite(y0)) {
        throw InvalidArgument("normal form: initial condition must be finite");
    }
}

namespace {

void check_step(const NormalFormParams& params, const NormalFormRun& run) {
    params.validate();
    if (!(run.dt > 0.0)) throw InvalidArgument("normal form: dt must be positive");
    if (run.dt > params.epsilon / 10.0) {
        throw InvalidArgument("normal form: stiffness error, dt = " + std::to_string(run.dt) +
                              " exceeds epsilon/10 = " + std::to_string(params.epsilon / 10.0));
    }
}

// Shared kernel for the deterministic and stochastic integrators. rng is only
// touched when a noise intensity is non-zero.
NormalFormPath integrate(const NormalFormParams& params, const NormalFormRun& run, RngStream* rng) {
    check_step(params, run);
    NormalFormPath out;
    const double dt = run.dt;
    const double drift_scale = dt / params.epsilon;
    const double fast_noise = params.sigma / std::sqrt(params.epsilon) * std::sqrt(dt);
    const double slow_noise = params.sigma_slow * std::sqrt(dt);
    const bool noisy = params.sigma != 0.0 || params.sigma_slow != 0.0;

    double x = params.x0;
    double slow_offset = 0.0;
    double y = params.y0;
    std::size_t k = 0;
    const auto record = [&](bool force) {
        if (run.record_stride == 0) return;
        if (force || k % run.record_stride == 0) out.samples.push_back({x, y});
    };
    record(false);

    while (y < run.y_horizon) {
        double x_next = x + drift_scale * (-y - x * x);
        double y_next_offset = slow_offset;
        if (noisy) {
            if (params.sigma != 0.0) x_next += fast_noise * rng->normal();
            if (params.sigma_slow != 0.0) y_next_offset += slow_noise * rng->normal();
        }
        ++k;
        const double y_next = params.y0 + static_cast<double>(k) * dt + y_next_offset;

        if (!out.record.crossed_zero && x > 0.0 && x_next <= 0.0) {
            out.record.crossed_zero = true;
            const double w = x / (x - x_next);
            out.record.y_cross_zero = y + w * (y_next - y);
        }
        if (x_next <= params.escape_threshold) {
            out.record.escaped = true;
            const double w = (x - params.escape_threshold) / (x - x_next);
            out.record.y_at_escape = y + w * (y_next - y);
            x = x_next;
            y = y_next;
            record(true);
            return out;
        }
        x = x_next;
        y = y_next;
        slow_offset = y_next_offset;
        if (!std::isfinite(x)) throw NumericalError("normal form: non-finite state");
        record(false);
    }
    if (run.record_stride != 0 && (out.samples.empty() || out.samples.back().y != y)) {
        out.samples.push_back({x, y});
    }
    return out;
}

}  // namespace

NormalFormPath nf_deterministic_trajectory(const NormalFormParams& params, const NormalFormRun& run) {
    NormalFormParams quiet = params;
    quiet.sigma = 0.0;
    quiet.sigma_slow = 0.0;
    return integrate(quiet, run, nullptr);
}

NormalFormPath nf_stochastic_trajectory(const NormalFormParams& params, const NormalFormRun& run,
                                        RngStream& rng) {
    return integrate(params, run, &rng);
}

NoiseRegime classify_regime(double sigma, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("classify_regime: epsilon must be positive");
    return sigma < std::sqrt(epsilon) ? NoiseRegime::Weak : NoiseRegime::Strong;
}

const char* to_string(NoiseRegime regime) {
    return regime == NoiseRegime::Weak ? "weak" : "strong";
}

// ---------------------------------------------------------------------------

namespace {

void require_hurwitz(const Eigen::MatrixXd& A, double y) {
    if (A.rows() == 1) {
        if (!(A(0, 0) < 0.0)) {
            throw NumericalError("cross section: linearisation not Hurwitz at y = " + std::to_string(y));
        }
        return;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    if (es.info() != Eigen::Success || (es.eigenvalues().real().array() >= 0.0).any()) {
        throw NumericalError("cross section: linearisation not Hurwitz at y = " + std::to_string(y));
    }
}

Eigen::MatrixXd lyapunov_rhs(const Eigen::MatrixXd& A, const Eigen::MatrixXd& U, const Eigen::MatrixXd& D,
                             double epsilon) {
    return (A * U + U * A.transpose() + D) / epsilon;
}

void advance_cross_section(Eigen::MatrixXd& U, const LinearizationFn& linearization, double y_from,
                           double y_to, double epsilon, const Eigen::MatrixXd& D) {
    double y = y_from;
    while (y < y_to) {
        const Eigen::MatrixXd A0 = linearization(y);
        require_hurwitz(A0, y);
        const double rate = std::max(1.0, A0.cwiseAbs().rowwise().sum().maxCoeff());
        const double h = std::min(y_to - y, 0.05 * epsilon / rate);
        const Eigen::MatrixXd Am = linearization(y + 0.5 * h);
        const Eigen::MatrixXd A1 = linearization(y + h);
        const Eigen::MatrixXd k1 = lyapunov_rhs(A0, U, D, epsilon);
        const Eigen::MatrixXd k2 = lyapunov_rhs(Am, U + 0.5 * h * k1, D, epsilon);
        const Eigen::MatrixXd k3 = lyapunov_rhs(Am, U + 0.5 * h * k2, D, epsilon);
        const Eigen::MatrixXd k4 = lyapunov_rhs(A1, U + h * k3, D, epsilon);
        U += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        y += h;
    }
}

}  // namespace

Eigen::MatrixXd stationary_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
        throw InvalidArgument("stationary_lyapunov: dimension mismatch");
    }
    require_hurwitz(A, std::numeric_limits<double>::quiet_NaN());
    // (I (x) A + A (x) I) vec(U) = -vec(Q), column-major vec.
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            K.block(i * n, j * n, n, n) += I(i, j) * A + A(i, j) * I;
        }
    }
    const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
    Eigen::VectorXd vec = K.partialPivLu().solve(rhs);
    Eigen::MatrixXd U = Eigen::Map<Eigen::MatrixXd>(vec.data(), n, n);
    return 0.5 * (U + U.transpose());
}

Eigen::MatrixXd cross_section_forcing(Eigen::Index n, double kappa, const Eigen::MatrixXd& noise_shape) {
    const Eigen::Index m = noise_shape.rows();
    if (noise_shape.cols() != m || m > n) throw InvalidArgument("cross section: bad noise block");
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n - m; ++i) D(i, i) = kappa;
    D.bottomRightCorner(m, m) = noise_shape;
    return D;
}

Eigen::MatrixXd cross_section_value(const LinearizationFn& linearization, double y_start, double y,
                                    double epsilon, double kappa, const Eigen::MatrixXd& noise_shape) {
    if (!(epsilon > 0.0)) throw InvalidArgument("cross_section_value: epsilon must be positive");
    if (y < y_start) throw InvalidArgument("cross_section_value: y precedes y_start");
    const Eigen::MatrixXd A0 = linearization(y_start);
    const Eigen::MatrixXd D = cross_section_forcing(A0.rows(), kappa, noise_shape);
    Eigen::MatrixXd U = stationary_lyapunov(A0, D);
    advance_cross_section(U, linearization, y_start, y, epsilon, D);
    require_hurwitz(linearization(y), y);
    return U;
}

Eigen::MatrixXd normal_form_linearization(double y) {
    Eigen::MatrixXd A(1, 1);
    A(0, 0) = y < 0.0 ? -2.0 * std::sqrt(-y) : 0.0;
    return A;
}

bool ellipsoid_contains(const Eigen::VectorXd& point, double y, const EllipsoidSpec& spec) {
    const Eigen::VectorXd d = point - spec.center_fn(y);
    const Eigen::MatrixXd X = spec.shape_fn(y);
    const double q = d.dot(X.ldlt().solve(d));
    return q < spec.h * spec.h;
}

bool ellipsoid_contains(double deviation, double shape, double h) {
    return deviation * deviation / shape < h * h;
}

NormalFormTube::NormalFormTube(const NormalFormParams& params, double dt, double y_stop)
    : y0_(params.y0), dt_(dt) {
    NormalFormRun run;
    run.dt = dt;
    run.y_horizon = y_stop;
    run.record_stride = 1;
    const NormalFormPath nominal = nf_deterministic_trajectory(params, run);
    if (nominal.record.escaped) throw NumericalError("normal form tube: nominal path escaped before y_stop");
    center_.reserve(nominal.samples.size());
    for (const auto& s : nominal.samples) center_.push_back(s.x);

    Eigen::MatrixXd noise(1, 1);
    noise(0, 0) = 1.0;
    const Eigen::MatrixXd D = cross_section_forcing(1, 0.0, noise);
    Eigen::MatrixXd U = stationary_lyapunov(normal_form_linearization(y0_), D);
    shape_.reserve(center_.size());
    shape_.push_back(U(0, 0));
    for (std::size_t k = 1; k < center_.size(); ++k) {
        advance_cross_section(U, normal_form_linearization, y(k - 1), y(k), params.epsilon, D);
        shape_.push_back(U(0, 0));
    }
}

EllipsoidSpec NormalFormTube::spec(double h) const {
    const auto interp = [this](const std::vector<double>& v, double yq) {
        const double pos = std::clamp((yq - y0_) / dt_, 0.0, static_cast<double>(v.size() - 1));
        const auto k = static_cast<std::size_t>(pos);
        if (k + 1 >= v.size()) return v.back();
        const double w = pos - static_cast<double>(k);
        return (1.0 - w) * v[k] + w * v[k + 1];
    };
    EllipsoidSpec s;
    s.h = h;
    s.center_fn = [this, interp](double yq) { return Eigen::VectorXd::Constant(1, interp(center_, yq)); };
    s.shape_fn = [this, interp](double yq) { return Eigen::MatrixXd::Constant(1, 1, interp(shape_, yq)); };
    return s;
}

ProbabilityEstimate wilson_interval(std::size_t hits, std::size_t n) {
    ProbabilityEstimate e;
    e.hits = hits;
    e.n = n;
    if (n == 0) return e;
    constexpr double z = 1.959963984540054;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(hits) / nn;
    const double denom = 1.0 + z * z / nn;
    const double centre = (p + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
    e.p = p;
    // The interval touches the boundary exactly at 0 or n hits.
    e.lower = hits == 0 ? 0.0 : std::max(0.0, centre - half);
    e.upper = hits == n ? 1.0 : std::min(1.0, centre + half);
    return e;
}

std::vector<ProbabilityEstimate> estimate_exit_probability(const NormalFormParams& params,
                                                           const std::vector<double>& h_values,
                                                           double y_stop, std::size_t n_paths,
                                                           const RngStream& rng_base, double dt) {
    params.validate();
    if (n_paths < 100) throw InvalidArgument("estimate_exit_probability: need at least 100 paths");
    if (!(y_stop < -std::pow(params.epsilon, 2.0 / 3.0))) {
        throw InvalidArgument("estimate_exit_probability: y_stop must lie below -epsilon^(2/3)");
    }
    for (double h : h_values) {
        if (!(h > 0.0)) throw InvalidArgument("estimate_exit_probability: h must be positive");
    }
    if (dt <= 0.0) dt = params.epsilon / 100.0;

    const NormalFormTube tube(params, dt, y_stop);
    std::vector<std::size_t> hits(h_values.size(), 0);
    if (params.sigma > 0.0 || params.sigma_slow > 0.0) {
        const double drift_scale = dt / params.epsilon;
        const double fast_noise = params.sigma / std::sqrt(params.epsilon) * std::sqrt(dt);
        const double slow_noise = params.sigma_slow * std::sqrt(dt);
        for (std::size_t path = 0; path < n_paths; ++path) {
            RngStream rng = rng_base.split(path);
            double x = params.x0;
            double y = params.y0;
            double worst = 0.0;
            for (std::size_t k = 0; k < tube.size(); ++k) {
                // Slow noise moves the path off the tabulated y, so look the tube up by y.
                std::size_t idx = k;
                if (params.sigma_slow != 0.0) {
                    const double pos = std::round((y - params.y0) / dt);
                    idx = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(tube.size() - 1)));
                }
                const double d = x - tube.center(idx);
                worst = std::max(worst, d * d / tube.shape(idx));
                if (y >= y_stop) break;
                x += drift_scale * (-y - x * x);
                if (params.sigma != 0.0) x += fast_noise * rng.normal();
                y = params.y0 + static_cast<double>(k + 1) * dt;
                if (params.sigma_slow != 0.0) y += slow_noise * rng.normal();
                if (!std::isfinite(x)) {
                    worst = std::numeric_limits<double>::infinity();
                    break;
                }
            }
            for (std::size_t j = 0; j < h_values.size(); ++j) {
                if (!(worst < h_values[j] * h_values[j])) ++hits[j];
            }
        }
    }
    std::vector<ProbabilityEstimate> out;
    out.reserve(h_values.size());
    for (std::size_t j = 0; j < h_values.size(); ++j) {
        ProbabilityEstimate e = wilson_interval(hits[j], n_paths);
        e.h = h_values[j];
        out.push_back(e);
    }
    return out;
}

ProbabilityEstimate estimate_exit_probability(const NormalFormParams& params, double h, double y_stop,
                                              std::size_t n_paths, const RngStream& rng_base, double dt) {
    return estimate_exit_probability(params, std::vector<double>{h}, y_stop, n_paths, rng_base, dt).front();
}

std::vector<EscapeRecord> escape_ensemble(const NormalFormParams& params, const NormalFormRun& run,
                                          std::size_t n_paths, const RngStream& rng_base) {
    NormalFormRun quiet = run;
    quiet.record_stride = 0;
    std::vector<EscapeRecord> out;
    out.reserve(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
        RngStream rng = rng_base.split(i);
        out.push_back(nf_stochastic_trajectory(params, quiet, rng).record);
    }
    return out;
}

double exit_decay_slope(const std::vector<ProbabilityEstimate>& estimates, double sigma) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t n = 0;
    for (const auto& e : estimates) {
        if (!(e.p > 0.0)) continue;
        const double xv = e.h * e.h / (2.0 * sigma * sigma);
        const double yv = std::log(e.p);
        sx += xv;
        sy += yv;
        sxx += xv * xv;
        sxy += xv * yv;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double nn = static_cast<double>(n);
    return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

}  // namespace voltmargin
