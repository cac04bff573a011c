#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridform/simulator.hpp"
#include "gridform/spectral.hpp"

namespace gridform {

struct LoadOptions {
  bool strict = true;  // unknown keys are errors; lenient demotes to warnings
};

/// Shared (inertia, damping) target a `compare` run realizes in every
/// family. c_dc / v_dc_ref pin the matching realization (defaults: c_dc =
/// inertia, v_dc_ref = 1).
struct EquivalentTarget {
  EquivalentParams params;
  std::optional<double> c_dc;
  std::optional<double> v_dc_ref;
};

struct OutputPaths {
  std::optional<std::string> trajectory_csv;
  std::optional<std::string> metrics_json;
  std::optional<std::string> analysis_json;
  std::optional<std::string> sweep_csv;
};

struct LoadedScenario {
  Scenario scenario;
  OutputPaths outputs;
  std::optional<EquivalentTarget> equivalent;
  std::vector<std::string> warnings;  // lenient-mode unknown keys
};

/// Parse + schema-validate a scenario document. Throws ValidationError with
/// one line per violation; JSON syntax errors surface as "parse error: ...".
LoadedScenario parse_scenario_json(const nlohmann::json& doc, const LoadOptions& opt = {});
LoadedScenario load_scenario_file(const std::filesystem::path& path, const LoadOptions& opt = {});

/// Shortest round-trip decimal representation (byte-stable output).
std::string format_double(double v);

/// Header: t,node,theta,omega,vm,p,q,vdc — one row per (time, node); the
/// vdc column is blank for nodes without a DC-link state.
std::string trajectory_to_csv(const Trajectory& traj);

nlohmann::json metrics_to_json(const Metrics& m, const nlohmann::json& effective_config);
std::string metrics_to_text(const Metrics& m);

struct AnalysisReport {
  EquivalentParams equivalent;
  Eigen::VectorXd lambdas;
  ModeSet modes;
  VerifyReport verification;
  TuningReport tuning;
  Eigen::VectorXd voltage_modes;
  SteadyStatePrediction steady_state;
  Eigen::VectorXd p_d;
};

nlohmann::json analysis_to_json(const AnalysisReport& r, const nlohmann::json& effective_config);
std::string analysis_to_text(const AnalysisReport& r);

/// Schema check for a serialized analysis report; empty when valid.
std::vector<std::string> validate_analysis_json(const nlohmann::json& doc);

/// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace gridform
