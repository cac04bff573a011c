#include "gridform/scenario_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gridform/errors.hpp"

namespace gridform {

namespace {

using nlohmann::json;

struct SchemaContext {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool strict = true;

  void fail(const std::string& msg) { errors.push_back(msg); }
  void unknown(const std::string& path, const std::string& key) {
    const std::string msg = path + ": unknown key '" + key + "'";
    if (strict)
      errors.push_back(msg);
    else
      warnings.push_back(msg + " (ignored)");
  }
};

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> known, SchemaContext& ctx) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool found = false;
    for (const char* k : known)
      if (it.key() == k) {
        found = true;
        break;
      }
    if (!found) ctx.unknown(path, it.key());
  }
}

const json* expect_object(const json& parent, const std::string& path, const char* key,
                          SchemaContext& ctx, bool required) {
  if (!parent.contains(key)) {
    if (required) ctx.fail(path.empty() ? std::string(key) + ": section is required"
                                        : path + "." + key + ": section is required");
    return nullptr;
  }
  const json& v = parent.at(key);
  if (!v.is_object()) {
    ctx.fail((path.empty() ? std::string(key) : path + "." + key) + ": must be an object");
    return nullptr;
  }
  return &v;
}

std::optional<double> get_number(const json& obj, const std::string& path, const char* key,
                                 SchemaContext& ctx, bool required) {
  if (!obj.contains(key)) {
    if (required) ctx.fail(path + "." + key + ": is required");
    return std::nullopt;
  }
  const json& v = obj.at(key);
  if (!v.is_number()) {
    ctx.fail(path + "." + key + ": must be a number");
    return std::nullopt;
  }
  return v.get<double>();
}

std::optional<int> get_int(const json& obj, const std::string& path, const char* key,
                           SchemaContext& ctx, bool required) {
  if (!obj.contains(key)) {
    if (required) ctx.fail(path + "." + key + ": is required");
    return std::nullopt;
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) {
    ctx.fail(path + "." + key + ": must be an integer");
    return std::nullopt;
  }
  return v.get<int>();
}

std::optional<std::string> get_string(const json& obj, const std::string& path, const char* key,
                                      SchemaContext& ctx, bool required) {
  if (!obj.contains(key)) {
    if (required) ctx.fail(path + "." + key + ": is required");
    return std::nullopt;
  }
  const json& v = obj.at(key);
  if (!v.is_string()) {
    ctx.fail(path + "." + key + ": must be a string");
    return std::nullopt;
  }
  return v.get<std::string>();
}

ControllerConfig parse_controller(const json& obj, const std::string& path, SchemaContext& ctx) {
  ControllerConfig cfg;
  const auto family = get_string(obj, path, "family", ctx, true);
  const auto form = get_string(obj, path, "form", ctx, true);
  if (form) {
    if (*form == "full")
      cfg.form = Form::full;
    else if (*form == "reduced")
      cfg.form = Form::reduced;
    else
      ctx.fail(path + ".form: must be 'full' or 'reduced'");
  }
  if (!family) return cfg;

  auto num = [&](const char* key, double fallback, bool required = false) {
    auto v = get_number(obj, path, key, ctx, required);
    return v.value_or(fallback);
  };
  if (*family == "vsm") {
    check_keys(obj, path, {"family", "form", "m", "d", "tau_f", "r_q", "p_ref", "q_ref", "vm_ref"},
               ctx);
    VsmParams p;
    p.inertia = num("m", p.inertia, true);
    p.damping = num("d", p.damping, true);
    p.tau_f = num("tau_f", p.tau_f, true);
    p.r_q = num("r_q", p.r_q, true);
    p.p_ref = num("p_ref", 0.0);
    p.q_ref = num("q_ref", 0.0);
    p.vm_ref = num("vm_ref", 1.0);
    cfg.params = p;
  } else if (*family == "droop") {
    check_keys(obj, path, {"family", "form", "r_p", "tau_f", "r_q", "p_ref", "q_ref", "vm_ref"},
               ctx);
    DroopParams p;
    p.r_p = num("r_p", p.r_p, true);
    p.tau_f = num("tau_f", p.tau_f, true);
    p.r_q = num("r_q", p.r_q, true);
    p.p_ref = num("p_ref", 0.0);
    p.q_ref = num("q_ref", 0.0);
    p.vm_ref = num("vm_ref", 1.0);
    cfg.params = p;
  } else if (*family == "matching") {
    check_keys(obj, path,
               {"family", "form", "c_dc", "v_dc_ref", "k_theta", "k_dc", "i_dc_ref", "tau_f",
                "r_q", "q_ref", "vm_ref"},
               ctx);
    MatchingParams p;
    p.c_dc = num("c_dc", p.c_dc, true);
    p.v_dc_ref = num("v_dc_ref", 1.0);
    p.k_theta = num("k_theta", p.k_theta, true);
    p.k_dc = num("k_dc", p.k_dc, true);
    p.i_dc_ref = num("i_dc_ref", 0.0);
    p.tau_f = num("tau_f", p.tau_f, true);
    p.r_q = num("r_q", p.r_q, true);
    p.q_ref = num("q_ref", 0.0);
    p.vm_ref = num("vm_ref", 1.0);
    cfg.params = p;
  } else {
    ctx.fail(path + ".family: must be 'vsm', 'droop' or 'matching'");
  }
  return cfg;
}

}  // namespace

LoadedScenario parse_scenario_json(const json& doc, const LoadOptions& opt) {
  SchemaContext ctx;
  ctx.strict = opt.strict;
  LoadedScenario out;
  Scenario& sc = out.scenario;

  if (!doc.is_object()) throw ValidationError("scenario: document must be a JSON object");
  check_keys(doc, "scenario",
             {"network", "controllers", "simulation", "disturbances", "initial_state",
              "equivalent", "outputs"},
             ctx);

  if (const json* net = expect_object(doc, "", "network", ctx, true)) {
    check_keys(*net, "network", {"nodes", "omega0", "edges"}, ctx);
    if (auto nodes = get_int(*net, "network", "nodes", ctx, true)) sc.graph.node_count = *nodes;
    if (auto w0 = get_number(*net, "network", "omega0", ctx, false)) sc.graph.omega0 = *w0;
    if (net->contains("edges")) {
      const json& edges = net->at("edges");
      if (!edges.is_array()) {
        ctx.fail("network.edges: must be an array");
      } else {
        for (size_t i = 0; i < edges.size(); ++i) {
          const std::string path = "network.edges[" + std::to_string(i) + "]";
          const json& e = edges[i];
          if (!e.is_object()) {
            ctx.fail(path + ": must be an object");
            continue;
          }
          check_keys(e, path, {"from", "to", "b", "g"}, ctx);
          Edge edge;
          if (auto v = get_int(e, path, "from", ctx, true)) edge.from = *v;
          if (auto v = get_int(e, path, "to", ctx, true)) edge.to = *v;
          if (auto v = get_number(e, path, "b", ctx, true)) edge.susceptance = *v;
          if (auto v = get_number(e, path, "g", ctx, false)) edge.conductance = *v;
          sc.graph.edges.push_back(edge);
        }
      }
    } else {
      ctx.fail("network.edges: is required");
    }
  }

  if (doc.contains("controllers")) {
    const json& ctrls = doc.at("controllers");
    if (ctrls.is_object()) {
      // Shorthand: one config replicated to every node.
      const ControllerConfig cfg = parse_controller(ctrls, "controllers", ctx);
      sc.controllers.assign(std::max(sc.graph.node_count, 0), cfg);
    } else if (ctrls.is_array()) {
      for (size_t i = 0; i < ctrls.size(); ++i)
        sc.controllers.push_back(
            parse_controller(ctrls[i], "controllers[" + std::to_string(i) + "]", ctx));
    } else {
      ctx.fail("controllers: must be an array (per node) or an object (all nodes)");
    }
  } else {
    ctx.fail("controllers: section is required");
  }

  if (const json* sim = expect_object(doc, "", "simulation", ctx, false)) {
    check_keys(*sim, "simulation", {"dt", "t_end", "flow_model", "decimation"}, ctx);
    if (auto v = get_number(*sim, "simulation", "dt", ctx, false)) sc.dt = *v;
    if (auto v = get_number(*sim, "simulation", "t_end", ctx, false)) sc.t_end = *v;
    if (auto v = get_int(*sim, "simulation", "decimation", ctx, false)) sc.decimate = *v;
    if (auto v = get_string(*sim, "simulation", "flow_model", ctx, false)) {
      if (*v == "ac-paper")
        sc.flow_model = FlowModel::ac_paper;
      else if (*v == "ac-standard")
        sc.flow_model = FlowModel::ac_standard;
      else if (*v == "dc-linear")
        sc.flow_model = FlowModel::dc_linear;
      else
        ctx.fail("simulation.flow_model: must be 'ac-paper', 'ac-standard' or 'dc-linear'");
    }
  }

  if (doc.contains("disturbances")) {
    const json& arr = doc.at("disturbances");
    if (!arr.is_array()) {
      ctx.fail("disturbances: must be an array");
    } else {
      for (size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "disturbances[" + std::to_string(i) + "]";
        const json& d = arr[i];
        if (!d.is_object()) {
          ctx.fail(path + ": must be an object");
          continue;
        }
        check_keys(d, path, {"t_start", "node", "delta_p"}, ctx);
        Disturbance dist;
        if (auto v = get_number(d, path, "t_start", ctx, false)) dist.t_start = *v;
        if (auto v = get_int(d, path, "node", ctx, true)) dist.node = *v;
        if (auto v = get_number(d, path, "delta_p", ctx, true)) dist.delta_p = *v;
        sc.disturbances.push_back(dist);
      }
    }
  }

  if (doc.contains("initial_state")) {
    const json& arr = doc.at("initial_state");
    if (!arr.is_array()) {
      ctx.fail("initial_state: must be an array");
    } else {
      for (size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "initial_state[" + std::to_string(i) + "]";
        const json& o = arr[i];
        if (!o.is_object()) {
          ctx.fail(path + ": must be an object");
          continue;
        }
        check_keys(o, path, {"node", "theta", "omega", "vm", "p_filt", "q_filt", "v_dc"}, ctx);
        InitialOverride ov;
        if (auto v = get_int(o, path, "node", ctx, true)) ov.node = *v;
        if (auto v = get_number(o, path, "theta", ctx, false)) ov.theta = *v;
        if (auto v = get_number(o, path, "omega", ctx, false)) ov.omega = *v;
        if (auto v = get_number(o, path, "vm", ctx, false)) ov.vm = *v;
        if (auto v = get_number(o, path, "p_filt", ctx, false)) ov.p_filt = *v;
        if (auto v = get_number(o, path, "q_filt", ctx, false)) ov.q_filt = *v;
        if (auto v = get_number(o, path, "v_dc", ctx, false)) ov.v_dc = *v;
        sc.initial_overrides.push_back(ov);
      }
    }
  }

  if (const json* eq = expect_object(doc, "", "equivalent", ctx, false)) {
    check_keys(*eq, "equivalent",
               {"m", "d", "tau_f", "r_q", "p_ref", "q_ref", "vm_ref", "c_dc", "v_dc_ref"}, ctx);
    EquivalentTarget target;
    if (auto v = get_number(*eq, "equivalent", "m", ctx, true)) target.params.inertia = *v;
    if (auto v = get_number(*eq, "equivalent", "d", ctx, true)) target.params.damping = *v;
    if (auto v = get_number(*eq, "equivalent", "tau_f", ctx, true)) target.params.tau_f = *v;
    if (auto v = get_number(*eq, "equivalent", "r_q", ctx, true)) target.params.r_q = *v;
    if (auto v = get_number(*eq, "equivalent", "p_ref", ctx, false)) target.params.p_ref = *v;
    if (auto v = get_number(*eq, "equivalent", "q_ref", ctx, false)) target.params.q_ref = *v;
    if (auto v = get_number(*eq, "equivalent", "vm_ref", ctx, false)) target.params.vm_ref = *v;
    if (auto v = get_number(*eq, "equivalent", "c_dc", ctx, false)) target.c_dc = *v;
    if (auto v = get_number(*eq, "equivalent", "v_dc_ref", ctx, false)) target.v_dc_ref = *v;
    out.equivalent = target;
  }

  if (const json* paths = expect_object(doc, "", "outputs", ctx, false)) {
    check_keys(*paths, "outputs", {"trajectory_csv", "metrics_json", "analysis_json", "sweep_csv"},
               ctx);
    out.outputs.trajectory_csv = get_string(*paths, "outputs", "trajectory_csv", ctx, false);
    out.outputs.metrics_json = get_string(*paths, "outputs", "metrics_json", ctx, false);
    out.outputs.analysis_json = get_string(*paths, "outputs", "analysis_json", ctx, false);
    out.outputs.sweep_csv = get_string(*paths, "outputs", "sweep_csv", ctx, false);
  }

  if (ctx.errors.empty()) {
    auto sem = validate_scenario(sc);
    ctx.errors.insert(ctx.errors.end(), sem.begin(), sem.end());
  }
  if (!ctx.errors.empty()) {
    std::string msg = "validation error:";
    for (const auto& e : ctx.errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  out.warnings = std::move(ctx.warnings);
  return out;
}

LoadedScenario load_scenario_file(const std::filesystem::path& path, const LoadOptions& opt) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("parse error: " + path.string() + ": " + e.what());
  }
  return parse_scenario_json(doc, opt);
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trajectory_to_csv(const Trajectory& traj) {
  std::string out = "t,node,theta,omega,vm,p,q,vdc\n";
  for (size_t i = 0; i < traj.times.size(); ++i) {
    for (size_t k = 0; k < traj.states[i].size(); ++k) {
      const NodeState& s = traj.states[i][k];
      out += format_double(traj.times[i]);
      out += ',';
      out += std::to_string(k);
      out += ',';
      out += format_double(s.theta);
      out += ',';
      out += format_double(s.omega);
      out += ',';
      out += format_double(s.vm);
      out += ',';
      out += format_double(traj.flows[i].p[static_cast<Eigen::Index>(k)]);
      out += ',';
      out += format_double(traj.flows[i].q[static_cast<Eigen::Index>(k)]);
      out += ',';
      if (s.v_dc) out += format_double(*s.v_dc);
      out += '\n';
    }
  }
  return out;
}

nlohmann::json metrics_to_json(const Metrics& m, const json& effective_config) {
  json nodes = json::array();
  for (Eigen::Index k = 0; k < m.rocof_max.size(); ++k) {
    nodes.push_back({{"node", k},
                     {"rocof_max", m.rocof_max[k]},
                     {"omega_overshoot", m.omega_overshoot[k]},
                     {"settling_time", m.settling_time[k]},
                     {"settled", static_cast<bool>(m.settled[k])}});
  }
  return json{{"band", m.band},
              {"nodes", nodes},
              {"omega_avg_final", m.omega_avg_final},
              {"theta_avg_ramp_rate", m.theta_avg_ramp_rate},
              {"effective_config", effective_config}};
}

std::string metrics_to_text(const Metrics& m) {
  std::ostringstream out;
  out << "band = " << format_double(m.band) << "\n";
  for (Eigen::Index k = 0; k < m.rocof_max.size(); ++k) {
    out << "rocof_max[" << k << "] = " << format_double(m.rocof_max[k]) << "\n";
    out << "omega_overshoot[" << k << "] = " << format_double(m.omega_overshoot[k]) << "\n";
    out << "settling_time[" << k << "] = " << format_double(m.settling_time[k])
        << (m.settled[k] ? "" : " (unsettled)") << "\n";
  }
  out << "omega_avg_final = " << format_double(m.omega_avg_final) << "\n";
  out << "theta_avg_ramp_rate = " << format_double(m.theta_avg_ramp_rate) << "\n";
  return out.str();
}

nlohmann::json analysis_to_json(const AnalysisReport& r, const json& effective_config) {
  json modes = json::array();
  for (size_t i = 0; i < r.modes.modes.size(); ++i) {
    const Mode& m = r.modes.modes[i];
    const ModeResidual& res = r.verification.entries[i];
    modes.push_back({{"re", m.eta.real()},
                     {"im", m.eta.imag()},
                     {"source_lambda", m.source_lambda},
                     {"class", to_string(m.cls)},
                     {"pivot_residual", res.pivot_ratio},
                     {"poly_residual", res.poly_residual}});
  }
  json lambdas = json::array();
  for (Eigen::Index i = 0; i < r.lambdas.size(); ++i) lambdas.push_back(r.lambdas[i]);
  json vmodes = json::array();
  for (Eigen::Index i = 0; i < r.voltage_modes.size(); ++i) vmodes.push_back(r.voltage_modes[i]);
  json theta_dev = json::array();
  for (Eigen::Index i = 0; i < r.steady_state.theta_deviation.size(); ++i)
    theta_dev.push_back(r.steady_state.theta_deviation[i]);
  json p_d = json::array();
  for (Eigen::Index i = 0; i < r.p_d.size(); ++i) p_d.push_back(r.p_d[i]);

  return json{{"equivalent",
               {{"inertia", r.equivalent.inertia},
                {"damping", r.equivalent.damping},
                {"tau_f", r.equivalent.tau_f},
                {"r_q", r.equivalent.r_q}}},
              {"lambdas", lambdas},
              {"modes", modes},
              {"eta2", r.modes.eta2},
              {"modes_verified", r.verification.all_ok},
              {"oscillatory", r.tuning.oscillatory},
              {"d_crit", r.tuning.d_crit},
              {"rocof_per_unit_step", r.tuning.rocof_per_unit_step},
              {"voltage_modes", vmodes},
              {"steady_state",
               {{"p_d", p_d},
                {"omega_avg", r.steady_state.omega_avg},
                {"theta_deviation", theta_dev},
                {"theta_avg_slope", r.steady_state.theta_avg_slope}}},
              {"effective_config", effective_config}};
}

std::string analysis_to_text(const AnalysisReport& r) {
  std::ostringstream out;
  out << "equivalent: inertia=" << format_double(r.equivalent.inertia)
      << " damping=" << format_double(r.equivalent.damping)
      << " tau_f=" << format_double(r.equivalent.tau_f)
      << " r_q=" << format_double(r.equivalent.r_q) << "\n";
  out << "laplacian eigenvalues:";
  for (Eigen::Index i = 0; i < r.lambdas.size(); ++i) out << " " << format_double(r.lambdas[i]);
  out << "\nmodes (eta | source lambda | class | pivot residual):\n";
  for (size_t i = 0; i < r.modes.modes.size(); ++i) {
    const Mode& m = r.modes.modes[i];
    out << "  " << format_double(m.eta.real());
    if (m.eta.imag() != 0.0) out << (m.eta.imag() > 0 ? "+" : "") << format_double(m.eta.imag()) << "i";
    out << " | " << format_double(m.source_lambda) << " | " << to_string(m.cls) << " | "
        << format_double(r.verification.entries[i].pivot_ratio) << "\n";
  }
  out << "eta2 = " << format_double(r.modes.eta2) << "\n";
  out << "oscillatory = " << (r.tuning.oscillatory ? "true" : "false")
      << " (d_crit = " << format_double(r.tuning.d_crit) << ")\n";
  out << "rocof_per_unit_step = " << format_double(r.tuning.rocof_per_unit_step) << "\n";
  out << "voltage modes:";
  for (Eigen::Index i = 0; i < r.voltage_modes.size(); ++i)
    out << " " << format_double(r.voltage_modes[i]);
  out << "\nsteady state: omega_avg = " << format_double(r.steady_state.omega_avg)
      << ", theta_avg_slope = " << format_double(r.steady_state.theta_avg_slope)
      << "\n  theta deviation:";
  for (Eigen::Index i = 0; i < r.steady_state.theta_deviation.size(); ++i)
    out << " " << format_double(r.steady_state.theta_deviation[i]);
  out << "\n";
  return out.str();
}

std::vector<std::string> validate_analysis_json(const json& doc) {
  std::vector<std::string> diags;
  auto need = [&](const json& obj, const char* key, const char* kind, auto pred,
                  const std::string& path) {
    if (!obj.contains(key)) {
      diags.push_back(path + key + ": missing");
      return false;
    }
    if (!pred(obj.at(key))) {
      diags.push_back(path + key + ": must be " + kind);
      return false;
    }
    return true;
  };
  auto is_num = [](const json& v) { return v.is_number(); };
  auto is_bool = [](const json& v) { return v.is_boolean(); };
  auto is_arr = [](const json& v) { return v.is_array(); };
  auto is_obj = [](const json& v) { return v.is_object(); };

  if (!doc.is_object()) return {"analysis report: must be an object"};
  need(doc, "lambdas", "an array", is_arr, "");
  need(doc, "eta2", "a number", is_num, "");
  need(doc, "modes_verified", "a boolean", is_bool, "");
  need(doc, "oscillatory", "a boolean", is_bool, "");
  need(doc, "d_crit", "a number", is_num, "");
  need(doc, "rocof_per_unit_step", "a number", is_num, "");
  need(doc, "voltage_modes", "an array", is_arr, "");
  need(doc, "effective_config", "an object", is_obj, "");
  if (need(doc, "equivalent", "an object", is_obj, "")) {
    for (const char* k : {"inertia", "damping", "tau_f", "r_q"})
      need(doc.at("equivalent"), k, "a number", is_num, "equivalent.");
  }
  if (need(doc, "modes", "an array", is_arr, "")) {
    const auto& modes = doc.at("modes");
    for (size_t i = 0; i < modes.size(); ++i) {
      const std::string path = "modes[" + std::to_string(i) + "].";
      if (!modes[i].is_object()) {
        diags.push_back("modes[" + std::to_string(i) + "]: must be an object");
        continue;
      }
      for (const char* k : {"re", "im", "source_lambda", "pivot_residual", "poly_residual"})
        need(modes[i], k, "a number", is_num, path);
      if (need(modes[i], "class", "a string", [](const json& v) { return v.is_string(); }, path)) {
        const std::string cls = modes[i].at("class").get<std::string>();
        if (cls != "zero-mode" && cls != "real-stable" && cls != "complex-stable")
          diags.push_back(path + "class: unknown classification '" + cls + "'");
      }
    }
  }
  if (need(doc, "steady_state", "an object", is_obj, "")) {
    const auto& ss = doc.at("steady_state");
    need(ss, "p_d", "an array", is_arr, "steady_state.");
    need(ss, "omega_avg", "a number", is_num, "steady_state.");
    need(ss, "theta_deviation", "an array", is_arr, "steady_state.");
    need(ss, "theta_avg_slope", "a number", is_num, "steady_state.");
  }
  return diags;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gridform
