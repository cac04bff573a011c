#include "gridform/simulator.hpp"

#include <cmath>
#include <sstream>

#include "gridform/errors.hpp"

namespace gridform {

namespace {

std::string join(const std::vector<std::string>& parts, const char* prefix) {
  std::string out(prefix);
  for (const auto& p : parts) out += "\n  " + p;
  return out;
}

int form_state_size(const ControllerConfig& c) {
  if (c.form == Form::reduced) return 3;
  return c.family() == Family::vsm ? 4 : 3;
}

}  // namespace

const char* to_string(FlowModel m) {
  switch (m) {
    case FlowModel::ac_paper: return "ac-paper";
    case FlowModel::ac_standard: return "ac-standard";
    case FlowModel::dc_linear: return "dc-linear";
  }
  return "?";
}

long scenario_step_count(const Scenario& sc) {
  if (!(sc.dt > 0.0)) throw ValidationError("simulation.dt: must be > 0");
  const long n = std::lround(sc.t_end / sc.dt);
  if (n < 1 || std::abs(static_cast<double>(n) * sc.dt - sc.t_end) > 1e-6 * sc.dt)
    throw ValidationError("simulation.t_end: must be a whole number of dt steps");
  return n;
}

std::vector<std::string> validate_scenario(const Scenario& sc) {
  std::vector<std::string> diags;
  for (const auto& d : validate_graph(sc.graph)) diags.push_back("network: " + d);
  const int n = sc.graph.node_count;
  if (static_cast<int>(sc.controllers.size()) != n)
    diags.push_back("controllers: expected " + std::to_string(n) + " entries, got " +
                    std::to_string(sc.controllers.size()));
  for (size_t k = 0; k < sc.controllers.size(); ++k) {
    auto pd = validate_params(sc.controllers[k], "controllers[" + std::to_string(k) + "]");
    diags.insert(diags.end(), pd.begin(), pd.end());
  }
  if (!(sc.dt > 0.0)) diags.push_back("simulation.dt: must be > 0");
  if (sc.t_end < sc.dt) diags.push_back("simulation.t_end: must be >= dt");
  if (sc.decimate < 1) diags.push_back("simulation.decimation: must be >= 1");
  if (sc.dt > 0.0 && sc.t_end >= sc.dt) {
    const long steps = std::lround(sc.t_end / sc.dt);
    if (steps < 1 || std::abs(static_cast<double>(steps) * sc.dt - sc.t_end) > 1e-6 * sc.dt)
      diags.push_back("simulation.t_end: must be a whole number of dt steps");
    else if (sc.decimate >= 1 && steps % sc.decimate != 0)
      diags.push_back("simulation.decimation: must divide the step count " +
                      std::to_string(steps));
  }
  for (size_t i = 0; i < sc.disturbances.size(); ++i) {
    const auto& d = sc.disturbances[i];
    const std::string ctx = "disturbances[" + std::to_string(i) + "]";
    if (d.t_start < 0.0) diags.push_back(ctx + ".t_start: must be >= 0");
    if (d.node < 0 || d.node >= n) diags.push_back(ctx + ".node: out of range [0," +
                                                   std::to_string(n) + ")");
  }
  for (size_t i = 0; i < sc.initial_overrides.size(); ++i) {
    const auto& o = sc.initial_overrides[i];
    const std::string ctx = "initial_state[" + std::to_string(i) + "]";
    if (o.node < 0 || o.node >= n) {
      diags.push_back(ctx + ".node: out of range [0," + std::to_string(n) + ")");
      continue;
    }
    if (o.vm && !(*o.vm > 0.0)) diags.push_back(ctx + ".vm: must be > 0");
    if (o.v_dc && !(*o.v_dc > 0.0)) diags.push_back(ctx + ".v_dc: must be > 0");
    const auto& cfg = sc.controllers.size() == static_cast<size_t>(n)
                          ? sc.controllers[o.node]
                          : ControllerConfig{};
    if (sc.controllers.size() == static_cast<size_t>(n)) {
      const bool full = cfg.form == Form::full;
      if (o.p_filt && !(full && cfg.family() != Family::matching))
        diags.push_back(ctx + ".p_filt: node " + std::to_string(o.node) +
                        " has no active power filter state");
      if (o.q_filt && !full)
        diags.push_back(ctx + ".q_filt: node " + std::to_string(o.node) +
                        " has no reactive power filter state");
      if (o.v_dc && !(full && cfg.family() == Family::matching))
        diags.push_back(ctx + ".v_dc: node " + std::to_string(o.node) +
                        " is not a full-form matching node");
    }
  }
  return diags;
}

SystemModel::SystemModel(const Scenario& sc)
    : graph_(sc.graph),
      configs_(sc.controllers),
      flow_model_(sc.flow_model),
      disturbances_(sc.disturbances),
      overrides_(sc.initial_overrides) {
  auto diags = validate_scenario(sc);
  if (!diags.empty()) throw ValidationError(join(diags, "invalid scenario:"));
  laplacian_ = build_laplacian(graph_);
  offset_.resize(configs_.size());
  for (size_t k = 0; k < configs_.size(); ++k) {
    offset_[k] = total_;
    total_ += form_state_size(configs_[k]);
  }
}

void SystemModel::bus_state(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& theta,
                            Eigen::VectorXd& omega, Eigen::VectorXd& vm) const {
  const int n = node_count();
  theta.resize(n);
  omega.resize(n);
  vm.resize(n);
  for (int k = 0; k < n; ++k) {
    const auto& cfg = configs_[k];
    const int off = offset_[k];
    theta[k] = x[off];
    if (cfg.form == Form::reduced) {
      omega[k] = x[off + 1];
      vm[k] = x[off + 2];
      continue;
    }
    switch (cfg.family()) {
      case Family::vsm: {
        const auto& p = std::get<VsmParams>(cfg.params);
        omega[k] = x[off + 1];
        vm[k] = reactive_droop_vm(x[off + 3], p.r_q, p.q_ref, p.vm_ref);
        break;
      }
      case Family::droop: {
        const auto& p = std::get<DroopParams>(cfg.params);
        omega[k] = p.r_p * (p.p_ref - x[off + 1]);
        vm[k] = reactive_droop_vm(x[off + 2], p.r_q, p.q_ref, p.vm_ref);
        break;
      }
      case Family::matching: {
        const auto& p = std::get<MatchingParams>(cfg.params);
        omega[k] = p.k_theta * (x[off + 1] - p.v_dc_ref);
        vm[k] = reactive_droop_vm(x[off + 2], p.r_q, p.q_ref, p.vm_ref);
        break;
      }
    }
  }
}

PowerFlows SystemModel::evaluate_flows(const Eigen::VectorXd& theta,
                                       const Eigen::VectorXd& vm) const {
  if (flow_model_ == FlowModel::dc_linear) return dc_power_flow(laplacian_, theta, vm);
  const auto conv = flow_model_ == FlowModel::ac_paper ? QSignConvention::paper_form
                                                       : QSignConvention::standard;
  return ac_power_flow(graph_, {theta, vm}, conv);
}

PowerFlows SystemModel::flows(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd theta, omega, vm;
  bus_state(x, theta, omega, vm);
  return evaluate_flows(theta, vm);
}

NodeState SystemModel::unpack_node(const Eigen::Ref<const Eigen::VectorXd>& x, int k) const {
  const auto& cfg = configs_[k];
  const int off = offset_[k];
  NodeState s;
  s.theta = x[off];
  if (cfg.form == Form::reduced) {
    s.omega = x[off + 1];
    s.vm = x[off + 2];
    return s;
  }
  switch (cfg.family()) {
    case Family::vsm: {
      const auto& p = std::get<VsmParams>(cfg.params);
      s.omega = x[off + 1];
      s.p_filt = x[off + 2];
      s.q_filt = x[off + 3];
      s.vm = reactive_droop_vm(*s.q_filt, p.r_q, p.q_ref, p.vm_ref);
      break;
    }
    case Family::droop: {
      const auto& p = std::get<DroopParams>(cfg.params);
      s.p_filt = x[off + 1];
      s.q_filt = x[off + 2];
      s.omega = p.r_p * (p.p_ref - *s.p_filt);
      s.vm = reactive_droop_vm(*s.q_filt, p.r_q, p.q_ref, p.vm_ref);
      break;
    }
    case Family::matching: {
      const auto& p = std::get<MatchingParams>(cfg.params);
      s.v_dc = x[off + 1];
      s.q_filt = x[off + 2];
      s.omega = p.k_theta * (*s.v_dc - p.v_dc_ref);
      s.vm = reactive_droop_vm(*s.q_filt, p.r_q, p.q_ref, p.vm_ref);
      break;
    }
  }
  return s;
}

Eigen::VectorXd SystemModel::derivative(double t, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd theta, omega, vm;
  bus_state(x, theta, omega, vm);
  PowerFlows f = evaluate_flows(theta, vm);
  for (const auto& d : disturbances_)
    if (t >= d.t_start) f.p[d.node] += d.delta_p;

  Eigen::VectorXd dx(total_);
  for (int k = 0; k < node_count(); ++k) {
    const auto& cfg = configs_[k];
    const int off = offset_[k];
    const NodeState s = unpack_node(x, k);
    if (cfg.form == Form::reduced) {
      const NodeRates r = reduced_derivative(s, map_to_equivalent(cfg), f.p[k], f.q[k]);
      dx[off] = r.theta;
      dx[off + 1] = r.omega;
      dx[off + 2] = r.vm;
      continue;
    }
    switch (cfg.family()) {
      case Family::vsm: {
        const NodeRates r = vsm_full_derivative(s, std::get<VsmParams>(cfg.params), f.p[k], f.q[k]);
        dx[off] = r.theta;
        dx[off + 1] = r.omega;
        dx[off + 2] = *r.p_filt;
        dx[off + 3] = *r.q_filt;
        break;
      }
      case Family::droop: {
        const NodeRates r =
            droop_full_derivative(s, std::get<DroopParams>(cfg.params), f.p[k], f.q[k]);
        dx[off] = r.theta;
        dx[off + 1] = *r.p_filt;
        dx[off + 2] = *r.q_filt;
        break;
      }
      case Family::matching: {
        const NodeRates r =
            matching_full_derivative(s, std::get<MatchingParams>(cfg.params), f.p[k], f.q[k]);
        dx[off] = r.theta;
        dx[off + 1] = *r.v_dc;
        dx[off + 2] = *r.q_filt;
        break;
      }
    }
  }
  return dx;
}

Eigen::VectorXd SystemModel::initial_state() const {
  const int n = node_count();
  std::vector<const InitialOverride*> ov(n, nullptr);
  for (const auto& o : overrides_) ov[o.node] = &o;

  // First pass: bus voltages used to seed the filter states.
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd vm0(n);
  for (int k = 0; k < n; ++k) {
    const EquivalentParams eq = map_to_equivalent(configs_[k]);
    theta0[k] = ov[k] && ov[k]->theta ? *ov[k]->theta : 0.0;
    vm0[k] = ov[k] && ov[k]->vm ? *ov[k]->vm : eq.vm_ref;
  }
  const PowerFlows f0 = evaluate_flows(theta0, vm0);

  Eigen::VectorXd x(total_);
  for (int k = 0; k < n; ++k) {
    const auto& cfg = configs_[k];
    const int off = offset_[k];
    const double omega0 = ov[k] && ov[k]->omega ? *ov[k]->omega : 0.0;
    x[off] = theta0[k];
    if (cfg.form == Form::reduced) {
      x[off + 1] = omega0;
      x[off + 2] = vm0[k];
      continue;
    }
    // Full forms: a vm override is realized through the reactive filter
    // state, an omega override through whichever state produces omega.
    auto q_filt_init = [&](double r_q, double q_ref, double vm_ref) {
      if (ov[k] && ov[k]->q_filt) return *ov[k]->q_filt;
      if (ov[k] && ov[k]->vm) {
        if (r_q == 0.0)
          throw ValidationError("initial_state: node " + std::to_string(k) +
                                ": cannot realize a vm override with r_q = 0");
        return q_ref - (*ov[k]->vm - vm_ref) / r_q;
      }
      return f0.q[k];
    };
    switch (cfg.family()) {
      case Family::vsm: {
        const auto& p = std::get<VsmParams>(cfg.params);
        x[off + 1] = omega0;
        x[off + 2] = ov[k] && ov[k]->p_filt ? *ov[k]->p_filt : f0.p[k];
        x[off + 3] = q_filt_init(p.r_q, p.q_ref, p.vm_ref);
        break;
      }
      case Family::droop: {
        const auto& p = std::get<DroopParams>(cfg.params);
        double p_filt = f0.p[k];
        if (ov[k] && ov[k]->p_filt) p_filt = *ov[k]->p_filt;
        else if (ov[k] && ov[k]->omega) p_filt = p.p_ref - omega0 / p.r_p;
        x[off + 1] = p_filt;
        x[off + 2] = q_filt_init(p.r_q, p.q_ref, p.vm_ref);
        break;
      }
      case Family::matching: {
        const auto& p = std::get<MatchingParams>(cfg.params);
        double v_dc = p.v_dc_ref;
        if (ov[k] && ov[k]->v_dc) v_dc = *ov[k]->v_dc;
        else if (ov[k] && ov[k]->omega) v_dc = p.v_dc_ref + omega0 / p.k_theta;
        x[off + 1] = v_dc;
        x[off + 2] = q_filt_init(p.r_q, p.q_ref, p.vm_ref);
        break;
      }
    }
  }
  return x;
}

Eigen::VectorXd rk4_step(const SystemModel& model, double t, double dt,
                         const Eigen::Ref<const Eigen::VectorXd>& x) {
  return rk4_step([&model](double tt, const Eigen::Ref<const Eigen::VectorXd>& xx) {
    return model.derivative(tt, xx);
  }, t, dt, x);
}

Trajectory run_scenario(const Scenario& sc) {
  const long steps = scenario_step_count(sc);
  SystemModel model(sc);
  Eigen::VectorXd x = model.initial_state();

  Trajectory traj;
  const long records = steps / sc.decimate + 1;
  traj.times.reserve(records);
  traj.states.reserve(records);
  traj.flows.reserve(records);
  auto record = [&](double t, const Eigen::VectorXd& state) {
    traj.times.push_back(t);
    std::vector<NodeState> row(model.node_count());
    for (int k = 0; k < model.node_count(); ++k) row[k] = model.unpack_node(state, k);
    traj.states.push_back(std::move(row));
    traj.flows.push_back(model.flows(state));
  };

  record(0.0, x);
  for (long i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * sc.dt;
    try {
      x = rk4_step(model, t, sc.dt, x);
    } catch (const SimulationError& e) {
      std::ostringstream msg;
      msg << e.what() << " at t=" << t << " (step " << i + 1 << ")";
      throw SimulationError(msg.str());
    }
    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite state at step " << i + 1 << " (t=" << (i + 1) * sc.dt << ")";
      throw SimulationError(msg.str());
    }
    if ((i + 1) % sc.decimate == 0) record(static_cast<double>(i + 1) * sc.dt, x);
  }
  return traj;
}

Metrics compute_metrics(const Trajectory& traj, double band) {
  const size_t nt = traj.times.size();
  if (nt < 3) throw ValidationError("compute_metrics: trajectory needs at least 3 samples");
  const int n = static_cast<int>(traj.states[0].size());

  Metrics m;
  m.band = band;
  m.rocof_max = Eigen::VectorXd::Zero(n);
  m.omega_overshoot = Eigen::VectorXd::Zero(n);
  m.settling_time = Eigen::VectorXd::Zero(n);
  m.settled.assign(n, true);

  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd w(nt);
    for (size_t i = 0; i < nt; ++i) w[i] = traj.states[i][k].omega;
    double rocof = 0.0;
    for (size_t i = 0; i < nt; ++i) {
      double d;
      if (i == 0)
        d = (w[1] - w[0]) / (traj.times[1] - traj.times[0]);
      else if (i == nt - 1)
        d = (w[nt - 1] - w[nt - 2]) / (traj.times[nt - 1] - traj.times[nt - 2]);
      else
        d = (w[i + 1] - w[i - 1]) / (traj.times[i + 1] - traj.times[i - 1]);
      rocof = std::max(rocof, std::abs(d));
    }
    m.rocof_max[k] = rocof;
    m.omega_overshoot[k] = w.cwiseAbs().maxCoeff();

    const double w_final = w[nt - 1];
    const double thresh = band * m.omega_overshoot[k];
    long last_violation = -1;
    for (size_t i = 0; i < nt; ++i)
      if (std::abs(w[i] - w_final) > thresh) last_violation = static_cast<long>(i);
    if (last_violation >= 0) {
      m.settling_time[k] = traj.times[last_violation];
      if (last_violation >= static_cast<long>(nt) - 2) m.settled[k] = false;
    }
  }

  double avg_final = 0.0;
  for (int k = 0; k < n; ++k) avg_final += traj.states[nt - 1][k].omega;
  m.omega_avg_final = avg_final / n;

  // Least-squares slope of the average angle over the final 20%.
  const size_t tail_start = nt - std::max<size_t>(2, nt / 5);
  double st = 0, sy = 0, stt = 0, sty = 0;
  const auto count = static_cast<double>(nt - tail_start);
  for (size_t i = tail_start; i < nt; ++i) {
    double avg_theta = 0.0;
    for (int k = 0; k < n; ++k) avg_theta += traj.states[i][k].theta;
    avg_theta /= n;
    st += traj.times[i];
    sy += avg_theta;
    stt += traj.times[i] * traj.times[i];
    sty += traj.times[i] * avg_theta;
  }
  const double denom = count * stt - st * st;
  m.theta_avg_ramp_rate = denom != 0.0 ? (count * sty - st * sy) / denom : 0.0;
  return m;
}

DeviationReport compare_trajectories(const Trajectory& a, const Trajectory& b,
                                     const ComponentSelection& sel) {
  if (a.times.size() != b.times.size())
    throw ValidationError("compare_trajectories: time grids differ in length");
  for (size_t i = 0; i < a.times.size(); ++i)
    if (std::abs(a.times[i] - b.times[i]) > 1e-12)
      throw ValidationError("compare_trajectories: time grids differ at index " +
                            std::to_string(i));
  if (a.states.empty() || a.states[0].size() != b.states[0].size())
    throw ValidationError("compare_trajectories: node counts differ");
  const int n = static_cast<int>(a.states[0].size());

  struct Component {
    const char* name;
    bool enabled;
    std::function<std::optional<double>(const NodeState&)> get;
  };
  const std::vector<Component> comps = {
      {"theta", sel.theta, [](const NodeState& s) { return std::optional<double>(s.theta); }},
      {"omega", sel.omega, [](const NodeState& s) { return std::optional<double>(s.omega); }},
      {"vm", sel.vm, [](const NodeState& s) { return std::optional<double>(s.vm); }},
      {"p_filt", sel.p_filt, [](const NodeState& s) { return s.p_filt; }},
      {"q_filt", sel.q_filt, [](const NodeState& s) { return s.q_filt; }},
      {"v_dc", sel.v_dc, [](const NodeState& s) { return s.v_dc; }},
  };

  DeviationReport report;
  for (const auto& c : comps) {
    if (!c.enabled) continue;
    DeviationReport::Entry e{c.name, 0.0, 0.0};
    for (size_t i = 0; i < a.times.size(); ++i) {
      for (int k = 0; k < n; ++k) {
        const auto va = c.get(a.states[i][k]);
        const auto vb = c.get(b.states[i][k]);
        if (!va || !vb)
          throw ValidationError(std::string("compare_trajectories: component ") + c.name +
                                " not present in both trajectories");
        const double dev = std::abs(*va - *vb);
        if (dev > e.max_abs) {
          e.max_abs = dev;
          e.at_time = a.times[i];
        }
      }
    }
    report.overall = std::max(report.overall, e.max_abs);
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace gridform
