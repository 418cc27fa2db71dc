#include "voltmargin/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "voltmargin/error.hpp"

namespace voltmargin {

void RampSchedule::validate() const {
    if (!(delta_lambda > 0.0) || !std::isfinite(delta_lambda)) {
        throw InvalidArgument("ramp: delta_lambda must be positive");
    }
    if (!(interval > 0.0) || !std::isfinite(interval)) throw InvalidArgument("ramp: interval must be positive");
    if (!(lambda_max > 0.0)) throw InvalidArgument("ramp: lambda_max must be positive");
}

RampSchedule RampSchedule::from_speed(double speed_mw_per_s, double delta_lambda, double ramp_p0_mw,
                                      double lambda_max) {
    if (!(speed_mw_per_s > 0.0)) throw InvalidArgument("ramp: speed must be positive");
    if (!(ramp_p0_mw > 0.0)) throw InvalidArgument("ramp: speed needs a positive ramped load");
    RampSchedule s;
    s.delta_lambda = delta_lambda;
    s.interval = delta_lambda * ramp_p0_mw / speed_mw_per_s;
    s.lambda_max = lambda_max;
    s.validate();
    return s;
}

double ramp_lambda(const RampSchedule& schedule, double t) {
    if (!(t >= 0.0)) throw InvalidArgument("ramp_lambda: t must be non-negative");
    double lambda;
    if (schedule.continuous) {
        lambda = schedule.delta_lambda * t / schedule.interval;
    } else {
        // Times that land on an interval boundary up to rounding count as reached.
        const double steps = std::floor(t / schedule.interval + 1e-9);
        lambda = schedule.delta_lambda * steps;
    }
    return std::min(lambda, schedule.lambda_max);
}

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::Diverged: return "diverged";
        case SolveStatus::Singular: return "singular";
    }
    return "unknown";
}

GridModel::GridModel(NetworkCase network, std::vector<LoadDynParams> loads, std::size_t noise_dim)
    : network_(std::move(network)), loads_(std::move(loads)), noise_dim_(noise_dim) {
    network_.validate();
    slack_ = network_.slack_index();
    const std::size_t n = network_.buses.size();

    bus_gen_.assign(n, BusGen{});
    for (std::size_t i = 0; i < n; ++i) bus_gen_[i].v_set = network_.buses[i].v0;
    for (const auto& g : network_.generators) {
        auto& bg = bus_gen_[network_.require_bus_index(g.bus)];
        if (!bg.has_gen) {
            bg.v_set = g.v_set;
            bg.qmin = 0.0;
            bg.qmax = 0.0;
        }
        bg.has_gen = true;
        bg.p += g.p;
        bg.qmin += g.qmin;
        bg.qmax += g.qmax;
    }

    int offset = 0;
    for (std::size_t l = 0; l < loads_.size(); ++l) {
        const auto& load = loads_[l];
        load.validate();
        load_bus_.push_back(network_.require_bus_index(load.bus));
        if (load.noise_channel && *load.noise_channel >= noise_dim_) {
            throw InvalidArgument("load at bus " + std::to_string(load.bus) + ": noise channel " +
                                  std::to_string(*load.noise_channel) + " out of range");
        }
        if (load.dynamic) {
            dynamic_loads_.push_back(l);
            state_offset_.push_back(offset);
            offset += 2;
        } else {
            state_offset_.push_back(-1);
        }
        if (load.ramped) ramped_p0_ += load.p0;
    }

    const Eigen::MatrixXcd Y = network_.admittance();
    adjacency_.assign(n, {});
    g_diag_.resize(static_cast<Eigen::Index>(n));
    b_diag_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        g_diag_[ii] = Y(ii, ii).real();
        b_diag_[ii] = Y(ii, ii).imag();
        for (std::size_t j = 0; j < n; ++j) {
            const auto y = Y(ii, static_cast<Eigen::Index>(j));
            if (i == j || y != std::complex<double>(0.0, 0.0)) adjacency_[i].push_back({j, y.real(), y.imag()});
        }
    }
}

GridState GridModel::initial_guess() const {
    const std::size_t n = bus_count();
    GridState s;
    s.x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dynamic_state_count()));
    s.v.resize(static_cast<Eigen::Index>(n));
    s.theta.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& bus = network_.buses[i];
        const bool regulated = bus.kind != BusKind::PQ && bus_gen_[i].has_gen;
        s.v[static_cast<Eigen::Index>(i)] = regulated ? bus_gen_[i].v_set : bus.v0;
        s.theta[static_cast<Eigen::Index>(i)] = bus.theta0;
    }
    s.eta.eta.assign(noise_dim_, 0.0);
    s.qlimit.assign(n, QLimit::Free);
    return s;
}

bool GridModel::behaves_pq(const GridState& state, std::size_t bus) const {
    const auto kind = network_.buses[bus].kind;
    if (kind == BusKind::Slack) return false;
    if (kind == BusKind::PQ) return true;
    return state.qlimit[bus] != QLimit::Free;
}

GridModel::Layout GridModel::layout(const GridState& state) const {
    const std::size_t n = bus_count();
    Layout lay;
    lay.angle_col.assign(n, -1);
    lay.volt_col.assign(n, -1);
    lay.p_row.assign(n, -1);
    lay.q_row.assign(n, -1);
    int k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == slack_) continue;
        lay.angle_col[i] = k;
        lay.p_row[i] = k;
        ++k;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!behaves_pq(state, i)) continue;
        lay.volt_col[i] = k;
        lay.q_row[i] = k;
        ++k;
    }
    lay.size = k;
    return lay;
}

GridModel::Injections GridModel::injections(const GridState& state) const {
    const auto n = static_cast<Eigen::Index>(bus_count());
    Injections inj{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 0.0, q = 0.0;
        for (const auto& nb : adjacency_[static_cast<std::size_t>(i)]) {
            const auto j = static_cast<Eigen::Index>(nb.j);
            const double th = state.theta[i] - state.theta[j];
            const double c = std::cos(th), s = std::sin(th);
            p += state.v[j] * (nb.g * c + nb.b * s);
            q += state.v[j] * (nb.g * s - nb.b * c);
        }
        inj.p[i] = state.v[i] * p;
        inj.q[i] = state.v[i] * q;
    }
    return inj;
}

double GridModel::eta_of(const GridState& state, const LoadDynParams& load) const {
    return load.noise_channel ? state.eta.eta[*load.noise_channel] : 0.0;
}

void GridModel::load_totals(const GridState& state, LoadMode mode, Eigen::VectorXd& p, Eigen::VectorXd& q) const {
    const auto n = static_cast<Eigen::Index>(bus_count());
    p = Eigen::VectorXd::Zero(n);
    q = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < bus_count(); ++i) {
        p[static_cast<Eigen::Index>(i)] = network_.buses[i].pd;
        q[static_cast<Eigen::Index>(i)] = network_.buses[i].qd;
    }
    for (std::size_t l = 0; l < loads_.size(); ++l) {
        const auto& load = loads_[l];
        const auto b = static_cast<Eigen::Index>(load_bus_[l]);
        const double eta = eta_of(state, load);
        LoadPower lp;
        if (mode == LoadMode::SteadyState || !load.dynamic) {
            lp = load_steady_consumption(load, state.v[b], state.lambda, eta);
        } else {
            const int o = state_offset_[l];
            lp = voltmargin::load_consumption(load, state.v[b], state.x[o], state.x[o + 1], state.lambda, eta);
        }
        p[b] += lp.p;
        q[b] += lp.q;
    }
}

Eigen::VectorXd GridModel::residuals(const GridState& state, const Layout& lay, LoadMode mode) const {
    const Injections inj = injections(state);
    Eigen::VectorXd pl, ql;
    load_totals(state, mode, pl, ql);
    Eigen::VectorXd f(lay.size);
    for (std::size_t i = 0; i < bus_count(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (lay.p_row[i] >= 0) f[lay.p_row[i]] = bus_gen_[i].p - pl[ii] - inj.p[ii];
        if (lay.q_row[i] >= 0) {
            double qg = 0.0;
            if (state.qlimit[i] == QLimit::AtMax) qg = bus_gen_[i].qmax;
            if (state.qlimit[i] == QLimit::AtMin) qg = bus_gen_[i].qmin;
            f[lay.q_row[i]] = qg - ql[ii] - inj.q[ii];
        }
    }
    return f;
}

Eigen::MatrixXd GridModel::jacobian(const GridState& state, const Layout& lay, LoadMode mode) const {
    const Injections inj = injections(state);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(lay.size, lay.size);
    for (std::size_t i = 0; i < bus_count(); ++i) {
        const int pr = lay.p_row[i];
        const int qr = lay.q_row[i];
        if (pr < 0 && qr < 0) continue;
        const auto ii = static_cast<Eigen::Index>(i);
        const double vi = state.v[ii];
        for (const auto& nb : adjacency_[i]) {
            if (nb.j == i) continue;
            const auto jj = static_cast<Eigen::Index>(nb.j);
            const double th = state.theta[ii] - state.theta[jj];
            const double c = std::cos(th), s = std::sin(th);
            const double a = nb.g * c + nb.b * s;
            const double b = nb.g * s - nb.b * c;
            const int ac = lay.angle_col[nb.j];
            const int vc = lay.volt_col[nb.j];
            // Residuals carry a minus sign on the network injection.
            if (pr >= 0) {
                if (ac >= 0) J(pr, ac) -= vi * state.v[jj] * b;
                if (vc >= 0) J(pr, vc) -= vi * a;
            }
            if (qr >= 0) {
                if (ac >= 0) J(qr, ac) += vi * state.v[jj] * a;
                if (vc >= 0) J(qr, vc) -= vi * b;
            }
        }
        const int ac = lay.angle_col[i];
        const int vc = lay.volt_col[i];
        if (pr >= 0) {
            if (ac >= 0) J(pr, ac) -= -inj.q[ii] - b_diag_[ii] * vi * vi;
            if (vc >= 0) J(pr, vc) -= inj.p[ii] / vi + g_diag_[ii] * vi;
        }
        if (qr >= 0) {
            if (ac >= 0) J(qr, ac) -= inj.p[ii] - g_diag_[ii] * vi * vi;
            if (vc >= 0) J(qr, vc) -= inj.q[ii] / vi - b_diag_[ii] * vi;
        }
    }
    for (std::size_t l = 0; l < loads_.size(); ++l) {
        const std::size_t i = load_bus_[l];
        const int vc = lay.volt_col[i];
        if (vc < 0) continue;
        const auto& load = loads_[l];
        const LoadPower d = load_consumption_dv(load, state.v[static_cast<Eigen::Index>(i)], state.lambda,
                                                eta_of(state, load), mode == LoadMode::SteadyState);
        if (lay.p_row[i] >= 0) J(lay.p_row[i], vc) -= d.p;
        if (lay.q_row[i] >= 0) J(lay.q_row[i], vc) -= d.q;
    }
    return J;
}

namespace {

// Ratio of the smallest to the largest pivot magnitude of an LU factor.
double pivot_ratio(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
    if (lu.rows() == 0) return 1.0;
    const Eigen::VectorXd d = lu.matrixLU().diagonal().cwiseAbs();
    const double hi = d.maxCoeff();
    return hi > 0.0 ? d.minCoeff() / hi : 0.0;
}

}  // namespace

SolveResult GridModel::newton(GridState& state, const Layout& lay, const SolverOptions& options, LoadMode mode,
                              const AlgebraicFactor* chord) const {
    SolveResult result;
    bool use_chord = chord != nullptr && chord->valid && chord->lu.rows() == lay.size && chord->qlimit == state.qlimit;
    double previous = std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
        Eigen::VectorXd f;
        try {
            f = residuals(state, lay, mode);
        } catch (const NumericalError&) {
            result.status = SolveStatus::Diverged;
            return result;
        }
        result.residual = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        result.iterations = it;
        if (!std::isfinite(result.residual) || result.residual > 1e8) {
            result.status = SolveStatus::Diverged;
            return result;
        }
        if (result.residual <= options.tol) {
            result.status = SolveStatus::Converged;
            return result;
        }
        if (it >= options.max_iter) {
            result.status = SolveStatus::Diverged;
            return result;
        }
        use_chord = use_chord && result.residual < 0.1 * previous;
        previous = result.residual;
        Eigen::VectorXd dz;
        if (use_chord) {
            dz = chord->lu.solve(-f);
        } else {
            const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jacobian(state, lay, mode));
            if (!(pivot_ratio(lu) > options.singular_rcond)) {
                result.status = SolveStatus::Singular;
                return result;
            }
            dz = lu.solve(-f);
        }
        for (std::size_t i = 0; i < bus_count(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (lay.angle_col[i] >= 0) state.theta[ii] += dz[lay.angle_col[i]];
            if (lay.volt_col[i] >= 0) state.v[ii] += dz[lay.volt_col[i]];
        }
        if (!(state.v.minCoeff() > 0.0)) {
            result.status = SolveStatus::Diverged;
            return result;
        }
    }
}

bool GridModel::update_limits(GridState& state, LoadMode mode) const {
    const Injections inj = injections(state);
    Eigen::VectorXd pl, ql;
    load_totals(state, mode, pl, ql);
    constexpr double q_tol = 1e-9;
    constexpr double v_tol = 1e-9;
    bool changed = false;
    for (std::size_t i = 0; i < bus_count(); ++i) {
        if (network_.buses[i].kind != BusKind::PV || !bus_gen_[i].has_gen) continue;
        const auto ii = static_cast<Eigen::Index>(i);
        const auto& bg = bus_gen_[i];
        switch (state.qlimit[i]) {
            case QLimit::Free: {
                const double q_needed = inj.q[ii] + ql[ii];
                if (q_needed > bg.qmax + q_tol) {
                    state.qlimit[i] = QLimit::AtMax;
                    changed = true;
                } else if (q_needed < bg.qmin - q_tol) {
                    state.qlimit[i] = QLimit::AtMin;
                    changed = true;
                }
                break;
            }
            case QLimit::AtMax:
                if (state.v[ii] > bg.v_set + v_tol) {
                    state.qlimit[i] = QLimit::Free;
                    state.v[ii] = bg.v_set;
                    changed = true;
                }
                break;
            case QLimit::AtMin:
                if (state.v[ii] < bg.v_set - v_tol) {
                    state.qlimit[i] = QLimit::Free;
                    state.v[ii] = bg.v_set;
                    changed = true;
                }
                break;
        }
    }
    return changed;
}

SolveResult GridModel::solve_algebraic(GridState& state, const SolverOptions& options, LoadMode mode,
                                       const AlgebraicFactor* chord) const {
    if (state.qlimit.size() != bus_count()) state.qlimit.assign(bus_count(), QLimit::Free);
    SolveResult result;
    for (int pass = 0;; ++pass) {
        result = newton(state, layout(state), options, mode, chord);
        if (!result.ok() || !options.enforce_q_limits) return result;
        if (pass >= options.max_limit_passes || !update_limits(state, mode)) return result;
    }
}

SolveResult GridModel::initialize_equilibrium(GridState& state, const SolverOptions& options) const {
    SolveResult r = solve_algebraic(state, options, LoadMode::SteadyState);
    if (!r.ok()) return r;
    for (std::size_t l = 0; l < loads_.size(); ++l) {
        const auto& load = loads_[l];
        if (!load.dynamic) continue;
        const double v = state.v[static_cast<Eigen::Index>(load_bus_[l])];
        const double eta = eta_of(state, load);
        const double ratio = v / load.v0;
        const double P = load.nominal_p(state.lambda, eta);
        const double Q = load.nominal_q(state.lambda, eta);
        const int o = state_offset_[l];
        state.x[o] = load.tp * P * (std::pow(ratio, load.alpha_s) - std::pow(ratio, load.alpha_t));
        state.x[o + 1] = load.tq * Q * (std::pow(ratio, load.beta_s) - std::pow(ratio, load.beta_t));
    }
    return solve_algebraic(state, options, LoadMode::Transient);
}

Eigen::VectorXd GridModel::algebraic_vector(const GridState& state) const {
    const Layout lay = layout(state);
    Eigen::VectorXd z(lay.size);
    for (std::size_t i = 0; i < bus_count(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (lay.angle_col[i] >= 0) z[lay.angle_col[i]] = state.theta[ii];
        if (lay.volt_col[i] >= 0) z[lay.volt_col[i]] = state.v[ii];
    }
    return z;
}

Eigen::VectorXd GridModel::algebraic_residuals(const GridState& state, LoadMode mode) const {
    GridState s = state;
    if (s.qlimit.size() != bus_count()) s.qlimit.assign(bus_count(), QLimit::Free);
    return residuals(s, layout(s), mode);
}

Eigen::MatrixXd GridModel::algebraic_jacobian(const GridState& state, LoadMode mode) const {
    return jacobian(state, layout(state), mode);
}

LoadPower GridModel::load_consumption(const GridState& state, std::size_t load_index) const {
    const auto& load = loads_.at(load_index);
    const double v = state.v[static_cast<Eigen::Index>(load_bus_[load_index])];
    const int o = state_offset_[load_index];
    if (o < 0) return load_steady_consumption(load, v, state.lambda, eta_of(state, load));
    return voltmargin::load_consumption(load, v, state.x[o], state.x[o + 1], state.lambda, eta_of(state, load));
}

LoadStateRate GridModel::load_state_derivative(const GridState& state, std::size_t load_index) const {
    const auto& load = loads_.at(load_index);
    const double v = state.v[static_cast<Eigen::Index>(load_bus_[load_index])];
    const int o = state_offset_[load_index];
    if (o < 0) return {};
    return voltmargin::load_state_derivative(load, v, state.x[o], state.x[o + 1], state.lambda, eta_of(state, load));
}

Eigen::VectorXd GridModel::state_derivative(const GridState& state) const {
    Eigen::VectorXd dx(static_cast<Eigen::Index>(dynamic_state_count()));
    for (std::size_t l : dynamic_loads_) {
        const LoadStateRate r = load_state_derivative(state, l);
        const int o = state_offset_[l];
        dx[o] = r.xp_dot;
        dx[o + 1] = r.xq_dot;
    }
    return dx;
}

Eigen::MatrixXd GridModel::reduced_state_matrix(const GridState& state, const OUParams& ou,
                                                AlgebraicFactor* factor) const {
    if (ou.dim() != noise_dim_) throw InvalidArgument("reduced_state_matrix: OU dimension mismatch");
    const Layout lay = layout(state);
    const auto nx = static_cast<Eigen::Index>(dynamic_state_count());
    const auto k = static_cast<Eigen::Index>(noise_dim_);
    const Eigen::Index m = lay.size;

    Eigen::MatrixXd h2_u = Eigen::MatrixXd::Zero(m, nx + k);
    Eigen::MatrixXd h1_u = Eigen::MatrixXd::Zero(nx, nx + k);
    Eigen::MatrixXd h1_z = Eigen::MatrixXd::Zero(nx, m);

    for (std::size_t l = 0; l < loads_.size(); ++l) {
        const auto& load = loads_[l];
        const std::size_t i = load_bus_[l];
        const double v = state.v[static_cast<Eigen::Index>(i)];
        const double r = v / load.v0;
        const int pr = lay.p_row[i];
        const int qr = lay.q_row[i];
        const int o = state_offset_[l];
        if (o >= 0) {
            if (pr >= 0) h2_u(pr, o) = -1.0 / load.tp;
            if (qr >= 0) h2_u(qr, o + 1) = -1.0 / load.tq;
            h1_u(o, o) = -1.0 / load.tp;
            h1_u(o + 1, o + 1) = -1.0 / load.tq;
            const int vc = lay.volt_col[i];
            if (vc >= 0) {
                const double eta = eta_of(state, load);
                const double P = load.nominal_p(state.lambda, eta);
                const double Q = load.nominal_q(state.lambda, eta);
                h1_z(o, vc) = P * (load.alpha_s * std::pow(r, load.alpha_s) - load.alpha_t * std::pow(r, load.alpha_t)) / v;
                h1_z(o + 1, vc) = Q * (load.beta_s * std::pow(r, load.beta_s) - load.beta_t * std::pow(r, load.beta_t)) / v;
            }
        }
        if (load.noise_channel) {
            const auto c = nx + static_cast<Eigen::Index>(*load.noise_channel);
            const double ep = std::pow(r, o >= 0 ? load.alpha_t : load.alpha_s);
            const double eq = std::pow(r, o >= 0 ? load.beta_t : load.beta_s);
            if (pr >= 0) h2_u(pr, c) -= ep;
            if (qr >= 0) h2_u(qr, c) -= eq;
            if (o >= 0) {
                h1_u(o, c) += std::pow(r, load.alpha_s) - std::pow(r, load.alpha_t);
                h1_u(o + 1, c) += std::pow(r, load.beta_s) - std::pow(r, load.beta_t);
            }
        }
    }

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nx + k, nx + k);
    if (m > 0) {
        AlgebraicFactor local;
        AlgebraicFactor& f = factor ? *factor : local;
        f.valid = false;
        f.lu.compute(jacobian(state, lay, LoadMode::Transient));
        if (!(pivot_ratio(f.lu) > 1e-12)) throw NumericalError("reduced_state_matrix: algebraic Jacobian is singular");
        f.qlimit = state.qlimit;
        f.valid = true;
        A.topRows(nx) = h1_u - h1_z * f.lu.solve(h2_u);
    } else {
        A.topRows(nx) = h1_u;
    }
    for (Eigen::Index c = 0; c < k; ++c) A(nx + c, nx + c) = -ou.alpha[static_cast<std::size_t>(c)];
    return A;
}

Eigen::VectorXd GridModel::full_rhs(const GridState& state, const OUParams& ou) const {
    const auto nx = static_cast<Eigen::Index>(dynamic_state_count());
    const auto k = static_cast<Eigen::Index>(noise_dim_);
    Eigen::VectorXd g(nx + k);
    g.head(nx) = state_derivative(state);
    for (Eigen::Index c = 0; c < k; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        g[nx + c] = -ou.alpha[cc] * state.eta.eta[cc];
    }
    return g;
}

Eigen::MatrixXd GridModel::reduced_state_matrix_fd(const GridState& state, const OUParams& ou, double step) const {
    if (ou.dim() != noise_dim_) throw InvalidArgument("reduced_state_matrix_fd: OU dimension mismatch");
    const auto nx = static_cast<Eigen::Index>(dynamic_state_count());
    const auto k = static_cast<Eigen::Index>(noise_dim_);
    SolverOptions opts;
    opts.tol = 1e-13;
    opts.max_iter = 50;
    opts.enforce_q_limits = false;
    Eigen::MatrixXd A(nx + k, nx + k);
    for (Eigen::Index j = 0; j < nx + k; ++j) {
        Eigen::VectorXd col[2];
        for (int side = 0; side < 2; ++side) {
            GridState s = state;
            const double d = side == 0 ? step : -step;
            if (j < nx) {
                s.x[j] += d;
            } else {
                s.eta.eta[static_cast<std::size_t>(j - nx)] += d;
            }
            if (!solve_algebraic(s, opts).ok()) {
                throw NumericalError("reduced_state_matrix_fd: perturbed algebraic solve failed");
            }
            col[side] = full_rhs(s, ou);
        }
        A.col(j) = (col[0] - col[1]) / (2.0 * step);
    }
    return A;
}

PowerBalance GridModel::power_balance(const GridState& state) const {
    using cd = std::complex<double>;
    PowerBalance pb;
    Eigen::VectorXd pl, ql;
    load_totals(state, LoadMode::Transient, pl, ql);
    pb.consumption = pl.sum();
    const Injections inj = injections(state);
    for (std::size_t i = 0; i < bus_count(); ++i) {
        if (i == slack_) {
            pb.generation += inj.p[static_cast<Eigen::Index>(i)] + pl[static_cast<Eigen::Index>(i)];
        } else {
            pb.generation += bus_gen_[i].p;
        }
    }
    const auto phasor = [&](std::size_t i) {
        return std::polar(state.v[static_cast<Eigen::Index>(i)], state.theta[static_cast<Eigen::Index>(i)]);
    };
    for (const auto& br : network_.branches) {
        const std::size_t f = network_.require_bus_index(br.from);
        const std::size_t t = network_.require_bus_index(br.to);
        const cd ys(br.g, br.b);
        const cd ych(0.0, br.b_shunt / 2.0);
        const cd tap = std::polar(br.tap, br.shift);
        const cd vf = phasor(f), vt = phasor(t);
        const cd i_f = (ys + ych) / (br.tap * br.tap) * vf - ys / std::conj(tap) * vt;
        const cd i_t = -ys / tap * vf + (ys + ych) * vt;
        pb.losses += (vf * std::conj(i_f) + vt * std::conj(i_t)).real();
    }
    for (std::size_t i = 0; i < bus_count(); ++i) {
        const double v = state.v[static_cast<Eigen::Index>(i)];
        pb.losses += network_.buses[i].gs * v * v;
    }
    return pb;
}

}  // namespace voltmargin
