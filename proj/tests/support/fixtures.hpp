#pragma once

#include <cmath>
#include <string>

#include "voltmargin/case_io.hpp"
#include "voltmargin/grid_model.hpp"

namespace vmtest {

inline std::string data_path(const std::string& rel) { return std::string(VOLTMARGIN_DATA_DIR) + "/" + rel; }

inline voltmargin::CaseDocument load_case(const std::string& name) {
    return voltmargin::parse_case(data_path("cases/" + name));
}

inline voltmargin::GridModel model_of(const voltmargin::CaseDocument& doc) {
    return voltmargin::GridModel(doc.network, doc.loads, doc.ou.dim());
}

// Slack 1/0 feeding a constant-power load P + jQ through a lossless line of
// reactance x:
//   V^4 + (2 Q x - 1) V^2 + x^2 (P^2 + Q^2) = 0.
// Upper root of the quadratic in V^2, NaN past the nose.
inline double two_bus_voltage(double p, double q, double x) {
    const double b = 2.0 * q * x - 1.0;
    const double disc = b * b - 4.0 * x * x * (p * p + q * q);
    if (disc < 0.0) return std::nan("");
    return std::sqrt((-b + std::sqrt(disc)) / 2.0);
}

// Loading factor s at which s (p0 + j q0) puts the nose on the operating
// point: (1 - 2 s q0 x)^2 = 4 x^2 s^2 (p0^2 + q0^2). Returns 1 + lambda_max.
inline double two_bus_nose_scale(double p0, double q0, double x) {
    // Linear in s after taking the positive root of both sides.
    return 1.0 / (2.0 * x * (q0 + std::sqrt(p0 * p0 + q0 * q0)));
}

// Hand-built 2-bus network with a static constant-power load at bus 2.
inline voltmargin::CaseDocument two_bus_static(double p, double q, double x = 0.1) {
    voltmargin::CaseDocument doc;
    auto& n = doc.network;
    n.name = "two_bus_static";
    n.base_mva = 100.0;
    voltmargin::Bus slack;
    slack.id = 1;
    slack.kind = voltmargin::BusKind::Slack;
    voltmargin::Bus load;
    load.id = 2;
    n.buses = {slack, load};
    voltmargin::Branch br;
    br.from = 1;
    br.to = 2;
    br.b = -1.0 / x;
    n.branches = {br};
    voltmargin::Generator g;
    g.bus = 1;
    n.generators = {g};
    voltmargin::LoadDynParams l;
    l.bus = 2;
    l.p0 = p;
    l.q0 = q;
    l.dynamic = false;
    doc.loads = {l};
    return doc;
}

}  // namespace vmtest
