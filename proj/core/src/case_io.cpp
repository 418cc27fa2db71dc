#include "voltmargin/case_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "voltmargin/error.hpp"
#include "voltmargin/format.hpp"

namespace voltmargin {

const char* to_string(CaseFormat format) {
    return format == CaseFormat::Canonical ? "canonical" : "matpower_subset";
}

CaseFormat case_format_from_string(const std::string& text) {
    if (text == "canonical") return CaseFormat::Canonical;
    if (text == "matpower_subset" || text == "matpower") return CaseFormat::MatpowerSubset;
    throw InvalidArgument("unknown case format '" + text + "'");
}

CaseFormat case_format_for_path(const std::string& path) {
    return path.size() > 2 && path.compare(path.size() - 2, 2, ".m") == 0 ? CaseFormat::MatpowerSubset
                                                                         : CaseFormat::Canonical;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

class LineReader {
public:
    LineReader(const std::string& source, int line) : source_(source), line_(line) {}

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(source_, line_, msg); }

    double number(const std::string& tok, const char* field) const {
        try {
            return parse_double(tok);
        } catch (const InvalidArgument&) {
            fail(std::string("field '") + field + "': expected a number, got '" + tok + "'");
        }
    }

    int integer(const std::string& tok, const char* field) const {
        const double v = number(tok, field);
        if (v != std::floor(v) || std::abs(v) > 2e9) fail(std::string("field '") + field + "': expected an integer");
        return static_cast<int>(v);
    }

    void arity(const std::vector<std::string>& toks, std::size_t n, const char* section) const {
        if (toks.size() != n) {
            fail(std::string("section [") + section + "]: expected " + std::to_string(n) + " fields, got " +
                 std::to_string(toks.size()));
        }
    }

private:
    const std::string& source_;
    int line_;
};

void parse_canonical(const std::string& text, CaseDocument& doc) {
    std::istringstream in(text);
    std::string raw, section;
    int lineno = 0;
    bool have_base = false;
    std::vector<int> section_seen;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const LineReader r(doc.source, lineno);
        if (line.front() == '[') {
            if (line.back() != ']') r.fail("malformed section header '" + line + "'");
            section = line.substr(1, line.size() - 2);
            static const char* known[] = {"case", "buses", "branches", "generators", "loads", "ou"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
                r.fail("unknown section [" + section + "]");
            }
            continue;
        }
        if (section.empty()) r.fail("data before the first section header");
        const auto toks = split_ws(line);
        if (section == "case") {
            const auto eq = line.find('=');
            if (eq == std::string::npos) r.fail("expected key = value in [case]");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key == "name") {
                doc.network.name = value;
            } else if (key == "base_mva") {
                doc.network.base_mva = r.number(value, "base_mva");
                have_base = true;
            } else {
                r.fail("unknown key '" + key + "' in [case]");
            }
        } else if (section == "buses") {
            r.arity(toks, 9, "buses");
            Bus b;
            b.id = r.integer(toks[0], "id");
            try {
                b.kind = bus_kind_from_string(toks[1]);
            } catch (const InvalidArgument& e) {
                r.fail(std::string("field 'kind': ") + e.what());
            }
            b.v0 = r.number(toks[2], "v0");
            b.theta0 = r.number(toks[3], "theta0");
            b.base_kv = r.number(toks[4], "base_kv");
            b.pd = r.number(toks[5], "pd");
            b.qd = r.number(toks[6], "qd");
            b.gs = r.number(toks[7], "gs");
            b.bs = r.number(toks[8], "bs");
            doc.network.buses.push_back(b);
        } else if (section == "branches") {
            r.arity(toks, 7, "branches");
            Branch br;
            br.from = r.integer(toks[0], "from");
            br.to = r.integer(toks[1], "to");
            br.g = r.number(toks[2], "g");
            br.b = r.number(toks[3], "b");
            br.b_shunt = r.number(toks[4], "b_shunt");
            br.tap = r.number(toks[5], "tap");
            br.shift = r.number(toks[6], "shift");
            doc.network.branches.push_back(br);
        } else if (section == "generators") {
            r.arity(toks, 5, "generators");
            Generator g;
            g.bus = r.integer(toks[0], "bus");
            g.p = r.number(toks[1], "p");
            g.v_set = r.number(toks[2], "v_set");
            g.qmin = r.number(toks[3], "qmin");
            g.qmax = r.number(toks[4], "qmax");
            doc.network.generators.push_back(g);
        } else if (section == "loads") {
            r.arity(toks, 13, "loads");
            LoadDynParams l;
            l.bus = r.integer(toks[0], "bus");
            l.p0 = r.number(toks[1], "p0");
            l.q0 = r.number(toks[2], "q0");
            l.tp = r.number(toks[3], "tp");
            l.tq = r.number(toks[4], "tq");
            l.alpha_s = r.number(toks[5], "alpha_s");
            l.alpha_t = r.number(toks[6], "alpha_t");
            l.beta_s = r.number(toks[7], "beta_s");
            l.beta_t = r.number(toks[8], "beta_t");
            l.v0 = r.number(toks[9], "v0");
            if (toks[10] != "-") {
                const int c = r.integer(toks[10], "channel");
                if (c < 0) r.fail("field 'channel': must be non-negative or '-'");
                l.noise_channel = static_cast<std::size_t>(c);
            }
            if (toks[11] == "dynamic") {
                l.dynamic = true;
            } else if (toks[11] == "static") {
                l.dynamic = false;
            } else {
                r.fail("field 'dynamic': expected 'dynamic' or 'static'");
            }
            if (toks[12] == "ramped") {
                l.ramped = true;
            } else if (toks[12] == "fixed") {
                l.ramped = false;
            } else {
                r.fail("field 'ramped': expected 'ramped' or 'fixed'");
            }
            doc.loads.push_back(l);
        } else if (section == "ou") {
            r.arity(toks, 2, "ou");
            doc.ou.alpha.push_back(r.number(toks[0], "alpha"));
            doc.ou.beta.push_back(r.number(toks[1], "beta"));
        }
    }
    if (!have_base) throw ParseError(doc.source, 0, "missing base_mva in [case]");
}

// MATPOWER matrices: name -> rows, each with its source line.
struct MRow {
    int line;
    std::vector<std::string> cells;
};

void parse_matpower(const std::string& text, CaseDocument& doc) {
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    std::map<std::string, std::vector<MRow>> matrices;
    std::string current;
    bool have_base = false;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw.substr(0, raw.find('%')));
        if (line.empty()) continue;
        const LineReader r(doc.source, lineno);
        if (current.empty()) {
            if (line.rfind("function", 0) == 0) {
                const auto eq = line.find('=');
                if (eq != std::string::npos) doc.network.name = trim(line.substr(eq + 1));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string lhs = trim(line.substr(0, eq));
            std::string rhs = trim(line.substr(eq + 1));
            if (lhs.rfind("mpc.", 0) != 0) continue;
            lhs = lhs.substr(4);
            if (lhs == "version") continue;
            if (lhs == "baseMVA") {
                if (!rhs.empty() && rhs.back() == ';') rhs.pop_back();
                doc.network.base_mva = r.number(trim(rhs), "baseMVA");
                have_base = true;
                continue;
            }
            if (rhs.empty() || rhs.front() != '[') {
                doc.warnings.push_back(doc.source + ":" + std::to_string(lineno) + ": ignoring mpc." + lhs);
                continue;
            }
            current = lhs;
            matrices[current];
            line = trim(rhs.substr(1));
            if (line.empty()) continue;
        }
        bool closes = false;
        const auto close = line.find(']');
        if (close != std::string::npos) {
            closes = true;
            line = line.substr(0, close);
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream rows(line);
        for (std::string row; std::getline(rows, row, ';');) {
            auto cells = split_ws(row);
            if (!cells.empty()) matrices[current].push_back({lineno, std::move(cells)});
        }
        if (closes) current.clear();
    }
    if (!current.empty()) throw ParseError(doc.source, lineno, "unterminated matrix mpc." + current);
    if (!have_base) throw ParseError(doc.source, 0, "missing mpc.baseMVA");
    if (doc.network.name.empty()) doc.network.name = doc.source;

    const double base = doc.network.base_mva;
    const double deg = std::numbers::pi / 180.0;
    std::map<std::string, bool> warned;
    const auto require_cols = [&](const MRow& row, std::size_t need, std::size_t known, const char* name) {
        if (row.cells.size() < need) {
            throw ParseError(doc.source, row.line,
                             std::string("mpc.") + name + ": expected at least " + std::to_string(need) + " columns");
        }
        if (row.cells.size() > known && !warned[name]) {
            warned[name] = true;
            doc.warnings.push_back(doc.source + ":" + std::to_string(row.line) + ": mpc." + name + " columns beyond " +
                                   std::to_string(known) + " ignored");
        }
    };

    for (const auto& [name, rows] : matrices) {
        if (name != "bus" && name != "gen" && name != "branch") {
            doc.warnings.push_back(doc.source + ": ignoring matrix mpc." + name);
        }
    }
    if (!matrices.count("bus")) throw ParseError(doc.source, 0, "missing mpc.bus");

    for (const auto& row : matrices["bus"]) {
        const LineReader r(doc.source, row.line);
        require_cols(row, 13, 13, "bus");
        Bus b;
        b.id = r.integer(row.cells[0], "bus_i");
        switch (r.integer(row.cells[1], "type")) {
            case 3: b.kind = BusKind::Slack; break;
            case 2: b.kind = BusKind::PV; break;
            case 1: b.kind = BusKind::PQ; break;
            default: r.fail("mpc.bus: unsupported bus type " + row.cells[1]);
        }
        b.pd = r.number(row.cells[2], "Pd") / base;
        b.qd = r.number(row.cells[3], "Qd") / base;
        b.gs = r.number(row.cells[4], "Gs") / base;
        b.bs = r.number(row.cells[5], "Bs") / base;
        b.v0 = r.number(row.cells[7], "Vm");
        b.theta0 = r.number(row.cells[8], "Va") * deg;
        b.base_kv = r.number(row.cells[9], "baseKV");
        doc.network.buses.push_back(b);
    }
    for (const auto& row : matrices["gen"]) {
        const LineReader r(doc.source, row.line);
        require_cols(row, 10, 21, "gen");
        if (r.number(row.cells[7], "status") <= 0.0) continue;
        Generator g;
        g.bus = r.integer(row.cells[0], "bus");
        g.p = r.number(row.cells[1], "Pg") / base;
        g.qmax = r.number(row.cells[3], "Qmax") / base;
        g.qmin = r.number(row.cells[4], "Qmin") / base;
        g.v_set = r.number(row.cells[5], "Vg");
        doc.network.generators.push_back(g);
    }
    for (const auto& row : matrices["branch"]) {
        const LineReader r(doc.source, row.line);
        require_cols(row, 11, 13, "branch");
        if (r.number(row.cells[10], "status") <= 0.0) continue;
        Branch br;
        br.from = r.integer(row.cells[0], "fbus");
        br.to = r.integer(row.cells[1], "tbus");
        const double rr = r.number(row.cells[2], "r");
        const double xx = r.number(row.cells[3], "x");
        if (rr == 0.0 && xx == 0.0) r.fail("mpc.branch: zero impedance");
        const auto y = series_admittance(rr, xx);
        br.g = y.real();
        br.b = y.imag();
        br.b_shunt = r.number(row.cells[4], "b");
        const double ratio = r.number(row.cells[8], "ratio");
        br.tap = ratio == 0.0 ? 1.0 : ratio;
        br.shift = r.number(row.cells[9], "angle") * deg;
        doc.network.branches.push_back(br);
    }
}

}  // namespace

void validate_case(const CaseDocument& doc) {
    doc.network.validate();
    if (!doc.ou.alpha.empty() || !doc.ou.beta.empty()) doc.ou.validate();
    for (const auto& l : doc.loads) {
        l.validate();
        doc.network.require_bus_index(l.bus);
        if (l.noise_channel && *l.noise_channel >= doc.ou.dim()) {
            throw InvalidArgument("case '" + doc.network.name + "': load at bus " + std::to_string(l.bus) +
                                  " uses noise channel " + std::to_string(*l.noise_channel) + " but [ou] has " +
                                  std::to_string(doc.ou.dim()) + " channels");
        }
    }
}

CaseDocument parse_case_text(const std::string& text, const std::string& source, CaseFormat format) {
    CaseDocument doc;
    doc.source = source;
    doc.format = format;
    doc.checksum = fnv1a_hex(text);
    if (format == CaseFormat::Canonical) {
        parse_canonical(text, doc);
    } else {
        parse_matpower(text, doc);
    }
    try {
        validate_case(doc);
    } catch (const InvalidArgument& e) {
        throw ParseError(source, 0, e.what());
    }
    return doc;
}

CaseDocument parse_case(const std::string& path, CaseFormat format) {
    return parse_case_text(read_text_file(path), path, format);
}

CaseDocument parse_case(const std::string& path) { return parse_case(path, case_format_for_path(path)); }

std::string write_canonical(const CaseDocument& doc) {
    const auto f = [](double v) { return format_double(v); };
    std::ostringstream out;
    const auto& n = doc.network;
    out << "[case]\nname = " << n.name << "\nbase_mva = " << f(n.base_mva) << "\n\n";
    out << "[buses]\n# id kind v0 theta0 base_kv pd qd gs bs\n";
    for (const auto& b : n.buses) {
        out << b.id << ' ' << to_string(b.kind) << ' ' << f(b.v0) << ' ' << f(b.theta0) << ' ' << f(b.base_kv) << ' '
            << f(b.pd) << ' ' << f(b.qd) << ' ' << f(b.gs) << ' ' << f(b.bs) << '\n';
    }
    out << "\n[branches]\n# from to g b b_shunt tap shift\n";
    for (const auto& br : n.branches) {
        out << br.from << ' ' << br.to << ' ' << f(br.g) << ' ' << f(br.b) << ' ' << f(br.b_shunt) << ' ' << f(br.tap)
            << ' ' << f(br.shift) << '\n';
    }
    out << "\n[generators]\n# bus p v_set qmin qmax\n";
    for (const auto& g : n.generators) {
        out << g.bus << ' ' << f(g.p) << ' ' << f(g.v_set) << ' ' << f(g.qmin) << ' ' << f(g.qmax) << '\n';
    }
    out << "\n[loads]\n# bus p0 q0 tp tq alpha_s alpha_t beta_s beta_t v0 channel kind ramp\n";
    for (const auto& l : doc.loads) {
        out << l.bus << ' ' << f(l.p0) << ' ' << f(l.q0) << ' ' << f(l.tp) << ' ' << f(l.tq) << ' ' << f(l.alpha_s)
            << ' ' << f(l.alpha_t) << ' ' << f(l.beta_s) << ' ' << f(l.beta_t) << ' ' << f(l.v0) << ' '
            << (l.noise_channel ? std::to_string(*l.noise_channel) : std::string("-")) << ' '
            << (l.dynamic ? "dynamic" : "static") << ' ' << (l.ramped ? "ramped" : "fixed") << '\n';
    }
    out << "\n[ou]\n# alpha beta\n";
    for (std::size_t i = 0; i < doc.ou.alpha.size(); ++i) out << f(doc.ou.alpha[i]) << ' ' << f(doc.ou.beta[i]) << '\n';
    return out.str();
}

}  // namespace voltmargin
