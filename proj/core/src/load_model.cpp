#include "voltmargin/load_model.hpp"

#include <cmath>
#include <string>

#include "voltmargin/error.hpp"

namespace voltmargin {

namespace {

void require_positive_voltage(const LoadDynParams& load, double v) {
    if (!(v > 0.0)) {
        throw NumericalError("load at bus " + std::to_string(load.bus) + ": collapsed voltage V = " +
                             std::to_string(v));
    }
}

// (V/V0)^a, exact 1 for a zero exponent.
inline double vpow(double ratio, double a) { return a == 0.0 ? 1.0 : std::pow(ratio, a); }

}  // namespace

void LoadDynParams::validate() const {
    const std::string where = "load at bus " + std::to_string(bus);
    if (!(tp > 0.0) || !(tq > 0.0)) throw InvalidArgument(where + ": Tp and Tq must be positive");
    if (!(v0 > 0.0)) throw InvalidArgument(where + ": V0 must be positive");
    if (!(p0 >= 0.0)) throw InvalidArgument(where + ": p0 must be non-negative");
}

LoadPower load_consumption(const LoadDynParams& load, double v, double xp, double xq, double lambda, double eta) {
    require_positive_voltage(load, v);
    const double r = v / load.v0;
    const double P = load.nominal_p(lambda, eta);
    const double Q = load.nominal_q(lambda, eta);
    if (!load.dynamic) return {P * vpow(r, load.alpha_s), Q * vpow(r, load.beta_s)};
    return {xp / load.tp + P * vpow(r, load.alpha_t), xq / load.tq + Q * vpow(r, load.beta_t)};
}

LoadPower load_steady_consumption(const LoadDynParams& load, double v, double lambda, double eta) {
    require_positive_voltage(load, v);
    const double r = v / load.v0;
    return {load.nominal_p(lambda, eta) * vpow(r, load.alpha_s), load.nominal_q(lambda, eta) * vpow(r, load.beta_s)};
}

LoadStateRate load_state_derivative(const LoadDynParams& load, double v, double xp, double xq, double lambda,
                                    double eta) {
    require_positive_voltage(load, v);
    if (!load.dynamic) return {};
    const double r = v / load.v0;
    const double P = load.nominal_p(lambda, eta);
    const double Q = load.nominal_q(lambda, eta);
    return {-xp / load.tp + P * (vpow(r, load.alpha_s) - vpow(r, load.alpha_t)),
            -xq / load.tq + Q * (vpow(r, load.beta_s) - vpow(r, load.beta_t))};
}

LoadPower load_consumption_dv(const LoadDynParams& load, double v, double lambda, double eta, bool steady_state) {
    require_positive_voltage(load, v);
    const double r = v / load.v0;
    const bool use_static = steady_state || !load.dynamic;
    const double ap = use_static ? load.alpha_s : load.alpha_t;
    const double aq = use_static ? load.beta_s : load.beta_t;
    const double P = load.nominal_p(lambda, eta);
    const double Q = load.nominal_q(lambda, eta);
    return {P * ap * vpow(r, ap) / v, Q * aq * vpow(r, aq) / v};
}

}  // namespace voltmargin
