#include "voltmargin/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "voltmargin/error.hpp"

namespace voltmargin {

const char* to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "pq";
}

BusKind bus_kind_from_string(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "slack") return BusKind::Slack;
    if (t == "pv") return BusKind::PV;
    if (t == "pq") return BusKind::PQ;
    throw InvalidArgument("unknown bus kind '" + text + "'");
}

std::optional<std::size_t> NetworkCase::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == id) return i;
    }
    return std::nullopt;
}

std::size_t NetworkCase::require_bus_index(int id) const {
    if (auto idx = bus_index(id)) return *idx;
    throw InvalidArgument("case '" + name + "': unknown bus " + std::to_string(id));
}

std::size_t NetworkCase::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].kind == BusKind::Slack) return i;
    }
    throw InvalidArgument("case '" + name + "': no slack bus");
}

void NetworkCase::validate() const {
    if (!(base_mva > 0.0)) throw InvalidArgument("case '" + name + "': base_mva must be positive");
    if (buses.empty()) throw InvalidArgument("case '" + name + "': no buses");

    std::unordered_set<int> ids;
    std::size_t slacks = 0;
    for (const auto& b : buses) {
        if (!ids.insert(b.id).second) {
            throw InvalidArgument("case '" + name + "': duplicate bus id " + std::to_string(b.id));
        }
        if (!(b.v0 > 0.0)) throw InvalidArgument("case '" + name + "': bus " + std::to_string(b.id) + " has V0 <= 0");
        if (b.kind == BusKind::Slack) ++slacks;
    }
    if (slacks != 1) {
        throw InvalidArgument("case '" + name + "': expected exactly one slack bus, found " + std::to_string(slacks));
    }

    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto& br = branches[k];
        for (int end : {br.from, br.to}) {
            if (!bus_index(end)) {
                throw InvalidArgument("case '" + name + "': branch " + std::to_string(k + 1) +
                                      " references unknown bus " + std::to_string(end));
            }
        }
        if (br.from == br.to) throw InvalidArgument("case '" + name + "': branch " + std::to_string(k + 1) + " is a self loop");
        if (!(br.tap > 0.0)) throw InvalidArgument("case '" + name + "': branch " + std::to_string(k + 1) + " has tap <= 0");
    }

    for (std::size_t k = 0; k < generators.size(); ++k) {
        const auto& g = generators[k];
        const auto idx = bus_index(g.bus);
        const std::string label = "generator " + std::to_string(k + 1) + " at bus " + std::to_string(g.bus);
        if (!idx) throw InvalidArgument("case '" + name + "': " + label + " references an unknown bus");
        if (g.qmin > g.qmax) throw InvalidArgument("case '" + name + "': " + label + " has Qmin > Qmax");
        if (buses[*idx].kind == BusKind::PQ) {
            throw InvalidArgument("case '" + name + "': " + label + " sits on a PQ bus");
        }
    }
    for (const auto& b : buses) {
        if (b.kind == BusKind::PQ) continue;
        const bool has_gen = std::any_of(generators.begin(), generators.end(),
                                         [&](const Generator& g) { return g.bus == b.id; });
        if (!has_gen && b.kind == BusKind::PV) {
            throw InvalidArgument("case '" + name + "': PV bus " + std::to_string(b.id) + " has no generator");
        }
    }

    // Union-find over branches.
    std::vector<std::size_t> parent(buses.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (const auto& br : branches) {
        parent[find(*bus_index(br.from))] = find(*bus_index(br.to));
    }
    const std::size_t root = find(0);
    for (std::size_t i = 1; i < buses.size(); ++i) {
        if (find(i) != root) {
            throw InvalidArgument("case '" + name + "': disconnected network, bus " + std::to_string(buses[i].id) +
                                  " is not reachable from bus " + std::to_string(buses[0].id));
        }
    }
}

Eigen::MatrixXcd NetworkCase::admittance() const {
    using cd = std::complex<double>;
    const auto n = static_cast<Eigen::Index>(buses.size());
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : branches) {
        const auto f = static_cast<Eigen::Index>(require_bus_index(br.from));
        const auto t = static_cast<Eigen::Index>(require_bus_index(br.to));
        const cd ys(br.g, br.b);
        const cd ych(0.0, br.b_shunt / 2.0);
        const cd tap = std::polar(br.tap, br.shift);
        Y(f, f) += (ys + ych) / (br.tap * br.tap);
        Y(t, t) += ys + ych;
        Y(f, t) -= ys / std::conj(tap);
        Y(t, f) -= ys / tap;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = buses[static_cast<std::size_t>(i)];
        Y(i, i) += cd(b.gs, b.bs);
    }
    return Y;
}

std::complex<double> series_admittance(double r, double x) {
    if (r == 0.0 && x == 0.0) throw InvalidArgument("series_admittance: zero impedance");
    return 1.0 / std::complex<double>(r, x);
}

}  // namespace voltmargin
