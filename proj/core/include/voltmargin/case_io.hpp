#pragma once

#include <string>
#include <vector>

#include "voltmargin/load_model.hpp"
#include "voltmargin/network.hpp"
#include "voltmargin/ou_process.hpp"

namespace voltmargin {

enum class CaseFormat { Canonical, MatpowerSubset };

const char* to_string(CaseFormat format);
CaseFormat case_format_from_string(const std::string& text);

/// Guess from the extension: ".m" is MATPOWER, anything else canonical.
CaseFormat case_format_for_path(const std::string& path);

struct CaseDocument {
    NetworkCase network;
    std::vector<LoadDynParams> loads;
    OUParams ou;  ///< alpha and beta per channel; sigma is set per experiment
    std::string source;
    CaseFormat format = CaseFormat::Canonical;
    std::string checksum;  ///< FNV-1a 64 of the file bytes, hex
    std::vector<std::string> warnings;
};

/// Canonical structured text:
///
///   [case]        name = ..., base_mva = ...
///   [buses]       id kind v0 theta0 base_kv pd qd gs bs
///   [branches]    from to g b b_shunt tap shift
///   [generators]  bus p v_set qmin qmax
///   [loads]       bus p0 q0 tp tq alpha_s alpha_t beta_s beta_t v0 channel dynamic|static ramped|fixed
///   [ou]          alpha beta            (one row per channel)
///
/// '#' starts a comment; channel '-' means no noise. Quantities are per unit
/// on base_mva, angles in radians.
CaseDocument parse_case_text(const std::string& text, const std::string& source, CaseFormat format);
CaseDocument parse_case(const std::string& path, CaseFormat format);
CaseDocument parse_case(const std::string& path);

/// Writes the canonical form; numbers use the shortest round-trip representation.
std::string write_canonical(const CaseDocument& doc);

/// Cross-checks loads and OU channels against the network. Throws InvalidArgument.
void validate_case(const CaseDocument& doc);

std::string fnv1a_hex(const std::string& bytes);

std::string read_text_file(const std::string& path);

}  // namespace voltmargin
