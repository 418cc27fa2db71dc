#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voltmargin/case_io.hpp"
#include "voltmargin/monte_carlo.hpp"

namespace voltmargin::cli {

/// One entry of the sweep's schedule list, as written in the file.
struct ScheduleEntry {
    std::optional<double> delta_lambda;
    std::optional<double> interval;
    std::optional<double> speed_mw_per_s;
};

struct ExperimentFile {
    std::string source;
    std::string case_path;  ///< resolved against the experiment file's directory
    std::optional<CaseFormat> case_format;
    std::optional<std::vector<LoadDynParams>> loads;
    std::optional<OUParams> ou;
    std::vector<double> sigma_list;
    std::vector<ScheduleEntry> schedules;
    double lambda_max = 50.0;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 1;
    DetectorConfig detector;
    IntegratorConfig integrator;
    std::size_t histogram_bins = 30;
    std::string output_dir = "out";
};

/// Parses and schema-checks an experiment file. Throws ParseError.
ExperimentFile parse_experiment_text(const std::string& text, const std::string& source);
ExperimentFile parse_experiment(const std::string& path);

/// Case with the experiment's load and OU overrides applied, cross-validated.
CaseDocument load_case_for(const ExperimentFile& file);

/// Converts schedule entries; speeds use the case's ramped load.
std::vector<RampSchedule> resolve_schedules(const ExperimentFile& file, double ramp_p0_mw);

ExperimentSpec make_spec(const ExperimentFile& file, const CaseDocument& doc);

/// Fully resolved configuration, defaults included; the basis of config_hash.
nlohmann::ordered_json resolved_config(const ExperimentSpec& spec, const CaseDocument& doc);

std::string config_hash(const nlohmann::ordered_json& resolved);

nlohmann::ordered_json load_to_json(const LoadDynParams& load);
LoadDynParams load_from_json(const nlohmann::json& j, const std::string& where);

/// Machine-readable report.
nlohmann::ordered_json results_struct(const ExperimentResult& result, const ExperimentSpec& spec,
                                      const CaseDocument& doc, const std::string& hash);

/// Long-format CSV, one row per cell, with a '#' provenance line.
void write_results_csv(std::ostream& out, const ExperimentResult& result, std::uint64_t seed,
                       const std::string& hash);

void write_histogram_csv(std::ostream& out, const Histogram& h);

std::string cell_name(const MarginStatistics& cell);

}  // namespace voltmargin::cli
