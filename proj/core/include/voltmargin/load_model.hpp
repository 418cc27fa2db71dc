#pragma once

#include <cstddef>
#include <optional>

namespace voltmargin {

/// Exponential-recovery load with a stochastic nominal power.
///
///   p   = x_p / Tp + p_t            q   = x_q / Tq + q_t
///   x_p' = -x_p / Tp + p_s - p_t    x_q' = -x_q / Tq + q_s - q_t
///   p_s = P (V/V0)^alpha_s          p_t = P (V/V0)^alpha_t
///   q_s = Q (V/V0)^beta_s           q_t = Q (V/V0)^beta_t
///
/// with P = p0 (1 + lambda) + eta and Q = q0 (1 + lambda) + eta when the load
/// is ramped, the same channel eta entering both. A static load (dynamic =
/// false) has no states and consumes p_s, q_s directly.
struct LoadDynParams {
    int bus = 0;
    double p0 = 0.0;  ///< pu on the case base
    double q0 = 0.0;
    double tp = 1.0;  ///< s
    double tq = 1.0;
    double alpha_s = 0.0;
    double alpha_t = 2.0;
    double beta_s = 0.0;
    double beta_t = 2.0;
    double v0 = 1.0;
    std::optional<std::size_t> noise_channel;
    bool dynamic = true;
    bool ramped = true;

    /// Throws InvalidArgument unless Tp, Tq, V0 > 0 and p0 >= 0.
    void validate() const;

    double nominal_p(double lambda, double eta) const { return p0 * (1.0 + (ramped ? lambda : 0.0)) + eta; }
    double nominal_q(double lambda, double eta) const { return q0 * (1.0 + (ramped ? lambda : 0.0)) + eta; }
};

struct LoadPower {
    double p = 0.0;
    double q = 0.0;
};

struct LoadStateRate {
    double xp_dot = 0.0;
    double xq_dot = 0.0;
};

/// Voltage-dependent absorption at bus voltage v with recovery states (xp, xq).
/// Throws NumericalError when v <= 0 (collapsed algebraic state).
LoadPower load_consumption(const LoadDynParams& load, double v, double xp, double xq, double lambda, double eta);

/// Steady-state absorption (p_s, q_s): what the load settles to once x has recovered.
LoadPower load_steady_consumption(const LoadDynParams& load, double v, double lambda, double eta);

/// Recovery-state rates. Zero for static loads.
LoadStateRate load_state_derivative(const LoadDynParams& load, double v, double xp, double xq, double lambda,
                                    double eta);

/// d(absorption)/dV at fixed states.
LoadPower load_consumption_dv(const LoadDynParams& load, double v, double lambda, double eta, bool steady_state);

}  // namespace voltmargin
