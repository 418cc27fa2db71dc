#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace voltmargin {

enum class BusKind { Slack, PV, PQ };

const char* to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& text);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v0 = 1.0;        ///< initial / set-point voltage magnitude, pu
    double theta0 = 0.0;    ///< initial angle, rad (reference angle at the slack)
    double base_kv = 0.0;
    double pd = 0.0;        ///< constant-power demand not subject to the ramp, pu
    double qd = 0.0;
    double gs = 0.0;        ///< shunt conductance, pu at 1.0 V
    double bs = 0.0;        ///< shunt susceptance, pu at 1.0 V
};

/// Pi-model branch: series admittance g + jb, total line charging b_shunt,
/// off-nominal tap on the from side.
struct Branch {
    int from = 0;
    int to = 0;
    double g = 0.0;
    double b = 0.0;
    double b_shunt = 0.0;
    double tap = 1.0;
    double shift = 0.0;  ///< phase shift, rad
};

struct Generator {
    int bus = 0;
    double p = 0.0;      ///< active set-point, pu (ignored at the slack)
    double v_set = 1.0;
    double qmin = -1e9;
    double qmax = 1e9;
};

struct NetworkCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    /// Throws InvalidArgument naming the offending item: exactly one slack,
    /// unique bus ids, known branch/generator buses, Qmin <= Qmax, connected graph.
    void validate() const;

    std::optional<std::size_t> bus_index(int id) const;
    std::size_t require_bus_index(int id) const;
    std::size_t slack_index() const;

    /// Dense complex bus admittance matrix in bus order.
    Eigen::MatrixXcd admittance() const;
};

/// Series admittance of an impedance r + jx.
std::complex<double> series_admittance(double r, double x);

}  // namespace voltmargin
