#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridform/errors.hpp"
#include "gridform/scenario_io.hpp"
#include "gridform/simulator.hpp"
#include "gridform/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridform;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct CommonOptions {
  std::string scenario_path;
  std::optional<double> dt, t_end, tol;
  std::optional<int> decimate;
  std::optional<std::string> flow_model;
  std::string out_dir = ".";
  bool lenient = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("scenario", o.scenario_path, "Scenario JSON file")->required();
  cmd->add_option("--dt", o.dt, "Override integration step [s]");
  cmd->add_option("--t-end", o.t_end, "Override horizon [s]");
  cmd->add_option("--decimate", o.decimate, "Override recording decimation");
  cmd->add_option("--flow-model", o.flow_model, "Override flow model (ac-paper|ac-standard|dc-linear)")
      ->check(CLI::IsMember({"ac-paper", "ac-standard", "dc-linear"}));
  cmd->add_option("--out", o.out_dir, "Directory for default output paths");
  cmd->add_flag("--lenient{true},--strict{false}", o.lenient,
                "Lenient schema mode: warn on unknown keys instead of failing");
}

LoadedScenario load_with_overrides(const CommonOptions& o) {
  LoadedScenario loaded = load_scenario_file(o.scenario_path, LoadOptions{!o.lenient});
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  Scenario& sc = loaded.scenario;
  if (o.dt) sc.dt = *o.dt;
  if (o.t_end) sc.t_end = *o.t_end;
  if (o.decimate) sc.decimate = *o.decimate;
  if (o.flow_model) {
    if (*o.flow_model == "ac-paper") sc.flow_model = FlowModel::ac_paper;
    else if (*o.flow_model == "dc-linear") sc.flow_model = FlowModel::dc_linear;
    else sc.flow_model = FlowModel::ac_standard;
  }
  auto diags = validate_scenario(sc);
  if (!diags.empty()) {
    std::string msg = "validation error:";
    for (const auto& d : diags) msg += "\n  " + d;
    throw ValidationError(msg);
  }
  return loaded;
}

json effective_config(const Scenario& sc, const std::string& path) {
  return json{{"scenario", path},
              {"dt", sc.dt},
              {"t_end", sc.t_end},
              {"decimation", sc.decimate},
              {"flow_model", to_string(sc.flow_model)},
              {"nodes", sc.graph.node_count}};
}

fs::path default_path(const CommonOptions& o, const std::optional<std::string>& from_file,
                      const char* suffix) {
  if (from_file) return *from_file;
  const fs::path stem = fs::path(o.scenario_path).stem();
  return fs::path(o.out_dir) / (stem.string() + suffix);
}

/// Common (M, D, tau_f, r_q) tuning across all nodes, or an explanation of
/// the first mismatch.
EquivalentParams homogeneous_equivalent(const std::vector<ControllerConfig>& ctrls) {
  const EquivalentParams ref = map_to_equivalent(ctrls.at(0));
  auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1.0});
  };
  for (size_t k = 1; k < ctrls.size(); ++k) {
    const EquivalentParams eq = map_to_equivalent(ctrls[k]);
    if (!close(eq.inertia, ref.inertia) || !close(eq.damping, ref.damping) ||
        !close(eq.tau_f, ref.tau_f) || !close(eq.r_q, ref.r_q))
      throw ValidationError(
          "validation error: node " + std::to_string(k) +
          " is tuned differently from node 0 (network analysis assumes identically tuned "
          "converters; equivalent inertia/damping must match on every node)");
  }
  return ref;
}

Eigen::VectorXd injected_disturbance(const Scenario& sc) {
  Eigen::VectorXd p_d = Eigen::VectorXd::Zero(sc.graph.node_count);
  for (const auto& d : sc.disturbances) p_d[d.node] -= d.delta_p;  // load step -> injection
  return p_d;
}

int cmd_simulate(const CommonOptions& o) {
  LoadedScenario loaded = load_with_overrides(o);
  const Trajectory traj = run_scenario(loaded.scenario);
  const Metrics metrics = compute_metrics(traj);

  const fs::path csv_path = default_path(o, loaded.outputs.trajectory_csv, "_trajectory.csv");
  const fs::path metrics_path = default_path(o, loaded.outputs.metrics_json, "_metrics.json");
  atomic_write_file(csv_path, trajectory_to_csv(traj));
  atomic_write_file(metrics_path,
                    metrics_to_json(metrics, effective_config(loaded.scenario, o.scenario_path))
                            .dump(2) +
                        "\n");
  std::cout << metrics_to_text(metrics);
  std::cout << "trajectory: " << csv_path.string() << "\n";
  std::cout << "metrics: " << metrics_path.string() << "\n";
  return kExitOk;
}

struct FamilyForm {
  Family family;
  Form form;
  std::string label;
};

std::vector<FamilyForm> parse_families(const std::vector<std::string>& tokens) {
  std::vector<FamilyForm> out;
  for (const auto& t : tokens) {
    FamilyForm ff;
    ff.label = t;
    std::string fam = t, form = "reduced";
    if (auto pos = t.find('-'); pos != std::string::npos) {
      fam = t.substr(0, pos);
      form = t.substr(pos + 1);
    }
    if (fam == "vsm") ff.family = Family::vsm;
    else if (fam == "droop") ff.family = Family::droop;
    else if (fam == "matching") ff.family = Family::matching;
    else throw ValidationError("validation error: unknown family '" + t + "'");
    if (form == "full") ff.form = Form::full;
    else if (form == "reduced") ff.form = Form::reduced;
    else throw ValidationError("validation error: unknown form in '" + t + "'");
    out.push_back(ff);
  }
  return out;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& family_tokens,
                double tol) {
  const auto families = parse_families(family_tokens);
  if (families.size() < 2)
    throw ValidationError("validation error: --families needs at least two entries");
  LoadedScenario loaded = load_with_overrides(o);
  if (!loaded.equivalent)
    throw ValidationError(
        "validation error: equivalent: section is required by the compare command");
  const EquivalentTarget& target = *loaded.equivalent;

  std::cout << "target: inertia=" << format_double(target.params.inertia)
            << " damping=" << format_double(target.params.damping)
            << " tau_f=" << format_double(target.params.tau_f)
            << " r_q=" << format_double(target.params.r_q) << "\n";

  std::vector<Trajectory> runs;
  for (const auto& ff : families) {
    NativeFixedParams fixed;
    if (ff.family == Family::matching) {
      fixed.c_dc = target.c_dc.value_or(target.params.inertia);
      fixed.v_dc_ref = target.v_dc_ref.value_or(1.0);
    }
    Scenario sc = loaded.scenario;
    ControllerConfig cfg;
    cfg.form = ff.form;
    cfg.params = invert_equivalent(target.params, ff.family, fixed);
    sc.controllers.assign(sc.graph.node_count, cfg);
    runs.push_back(run_scenario(sc));
  }

  bool all_pass = true;
  for (size_t i = 0; i < families.size(); ++i) {
    for (size_t j = i + 1; j < families.size(); ++j) {
      const DeviationReport rep = compare_trajectories(runs[i], runs[j]);
      const bool pass = rep.overall <= tol;
      all_pass = all_pass && pass;
      std::cout << families[i].label << " vs " << families[j].label << ":";
      for (const auto& e : rep.entries)
        std::cout << " max|" << e.component << "|=" << format_double(e.max_abs);
      std::cout << " -> " << (pass ? "PASS" : "FAIL") << " (tol " << format_double(tol) << ")\n";
    }
  }
  std::cout << (all_pass ? "all pairs within tolerance\n"
                         : "deviations above tolerance reported\n");
  return kExitOk;
}

AnalysisReport analyze_scenario(const Scenario& sc, double verify_tol) {
  const EquivalentParams eq = homogeneous_equivalent(sc.controllers);
  AnalysisReport r;
  r.equivalent = eq;
  const Eigen::MatrixXd lap = build_laplacian(sc.graph);
  r.lambdas = laplacian_spectrum(lap);
  r.modes = closed_form_modes(r.lambdas, eq.inertia, eq.damping);
  r.verification = verify_modes(assemble_larger_laplacian(lap, eq.inertia, eq.damping), r.modes,
                                verify_tol);
  r.tuning = tuning_report(lap, eq.inertia, eq.damping);
  r.voltage_modes = voltage_mode_spectrum(lap, eq.r_q, eq.tau_f);
  r.p_d = injected_disturbance(sc);
  r.steady_state = predict_disturbance_steady_state(lap, eq.inertia, eq.damping, r.p_d);
  return r;
}

int cmd_analyze(const CommonOptions& o, double verify_tol) {
  LoadedScenario loaded = load_with_overrides(o);
  const AnalysisReport report = analyze_scenario(loaded.scenario, verify_tol);
  const json doc =
      analysis_to_json(report, effective_config(loaded.scenario, o.scenario_path));
  const fs::path out_path = default_path(o, loaded.outputs.analysis_json, "_analysis.json");
  atomic_write_file(out_path, doc.dump(2) + "\n");
  std::cout << analysis_to_text(report);
  std::cout << "report: " << out_path.string() << "\n";
  if (!report.verification.all_ok) {
    std::cerr << "runtime error: closed-form modes failed the singularity check\n";
    return kExitNumeric;
  }
  return kExitOk;
}

std::vector<double> parse_range(const std::string& range, const std::string& values) {
  std::vector<double> out;
  if (!values.empty()) {
    std::stringstream ss(values);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      out.push_back(std::stod(tok));
    }
  } else if (!range.empty()) {
    double lo = 0, hi = 0;
    int count = 0;
    char c1 = 0, c2 = 0;
    std::stringstream ss(range);
    if (!(ss >> lo >> c1 >> hi >> c2 >> count) || c1 != ':' || c2 != ':' || count < 1)
      throw ValidationError("validation error: --range must be lo:hi:count");
    for (int i = 0; i < count; ++i)
      out.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
  }
  if (out.empty())
    throw ValidationError("validation error: sweep needs a nonempty --values or --range");
  return out;
}

void apply_sweep_param(ControllerConfig& cfg, const std::string& param, double value) {
  const std::string fam = to_string(cfg.family());
  auto reject = [&]() {
    throw ValidationError("validation error: parameter '" + param +
                          "' is not applicable to family '" + fam + "'");
  };
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if (param == "tau_f") {
          p.tau_f = value;
        } else if constexpr (std::is_same_v<P, VsmParams>) {
          if (param == "d") p.damping = value;
          else if (param == "m") p.inertia = value;
          else reject();
        } else if constexpr (std::is_same_v<P, DroopParams>) {
          if (param == "r_p") p.r_p = value;
          else reject();
        } else {
          if (param == "k_theta") p.k_theta = value;
          else if (param == "k_dc") p.k_dc = value;
          else reject();
        }
      },
      cfg.params);
}

int cmd_sweep(const CommonOptions& o, const std::string& param, const std::string& range,
              const std::string& values) {
  static const std::vector<std::string> allowed = {"d", "m", "k_theta", "k_dc", "r_p", "tau_f"};
  if (std::find(allowed.begin(), allowed.end(), param) == allowed.end())
    throw ValidationError("validation error: --param must be one of d|m|k_theta|k_dc|r_p|tau_f");
  const std::vector<double> points = parse_range(range, values);
  LoadedScenario loaded = load_with_overrides(o);
  homogeneous_equivalent(loaded.scenario.controllers);

  std::string csv = "param,value,inertia,damping,eta2,oscillatory,d_crit,rocof_max,settling_time\n";
  for (double v : points) {
    Scenario sc = loaded.scenario;
    for (auto& cfg : sc.controllers) apply_sweep_param(cfg, param, v);
    auto diags = validate_scenario(sc);
    if (!diags.empty())
      throw ValidationError("validation error: sweep point " + format_double(v) + ": " +
                            diags.front());
    const EquivalentParams eq = homogeneous_equivalent(sc.controllers);
    const Eigen::MatrixXd lap = build_laplacian(sc.graph);
    const TuningReport tuning = tuning_report(lap, eq.inertia, eq.damping);
    const Metrics metrics = compute_metrics(run_scenario(sc));
    std::string oscillatory = tuning.oscillatory ? "true" : "false";
    if (std::abs(eq.damping - tuning.d_crit) <= 1e-3 * tuning.d_crit)
      oscillatory = "near-critical";
    csv += param;
    csv += ',' + format_double(v);
    csv += ',' + format_double(eq.inertia);
    csv += ',' + format_double(eq.damping);
    csv += ',' + format_double(tuning.eta2);
    csv += ',' + oscillatory;
    csv += ',' + format_double(tuning.d_crit);
    csv += ',' + format_double(metrics.rocof_max.maxCoeff());
    csv += ',' + format_double(metrics.settling_time.maxCoeff());
    csv += '\n';
  }
  const fs::path out_path = default_path(o, loaded.outputs.sweep_csv, "_sweep.csv");
  atomic_write_file(out_path, csv);
  std::cout << csv;
  std::cout << "sweep table: " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_validate(const CommonOptions& o) {
  try {
    LoadedScenario loaded = load_with_overrides(o);
    std::cout << "scenario is valid: " << o.scenario_path << " (" << loaded.scenario.graph.node_count
              << " nodes, " << loaded.scenario.graph.edges.size() << " edges)\n";
    return kExitOk;
  } catch (const ValidationError& e) {
    std::cout << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-forming converter network simulator and spectral analyzer"};
  app.require_subcommand(1);

  CommonOptions sim_opts, cmp_opts, ana_opts, swp_opts, val_opts;
  std::vector<std::string> families;
  double compare_tol = 1e-10;
  double verify_tol = 1e-9;
  std::string sweep_param, sweep_range, sweep_values;

  CLI::App* sim = app.add_subcommand("simulate", "Integrate a scenario, write CSV + metrics");
  add_common(sim, sim_opts);

  CLI::App* cmp = app.add_subcommand(
      "compare", "Run the scenario once per controller family mapped to the shared target");
  add_common(cmp, cmp_opts);
  cmp->add_option("--families", families,
                  "Comma-separated family-form list, e.g. vsm-reduced,droop-full")
      ->required()
      ->delimiter(',');
  cmp->add_option("--tol", compare_tol, "Pairwise PASS/FAIL tolerance");

  CLI::App* ana = app.add_subcommand("analyze", "Spectral analysis of the linearized network");
  add_common(ana, ana_opts);
  ana->add_option("--tol", verify_tol, "Mode singularity residual tolerance");

  CLI::App* swp = app.add_subcommand("sweep", "Parameter sweep with spectral + transient metrics");
  add_common(swp, swp_opts);
  swp->add_option("--param", sweep_param, "One of d|m|k_theta|k_dc|r_p|tau_f")->required();
  swp->add_option("--range", sweep_range, "lo:hi:count (linear)");
  swp->add_option("--values", sweep_values, "Comma-separated explicit values");

  CLI::App* val = app.add_subcommand("validate", "Schema + semantic checks, no simulation");
  add_common(val, val_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts);
    if (cmp->parsed()) return cmd_compare(cmp_opts, families, compare_tol);
    if (ana->parsed()) return cmd_analyze(ana_opts, verify_tol);
    if (swp->parsed()) return cmd_sweep(swp_opts, sweep_param, sweep_range, sweep_values);
    if (val->parsed()) return cmd_validate(val_opts);
  } catch (const ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const SimulationError& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
