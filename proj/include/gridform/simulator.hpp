#pragma once

#include <Eigen/Dense>
#include <concepts>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gridform/controllers.hpp"
#include "gridform/network.hpp"

namespace gridform {

enum class FlowModel { ac_paper, ac_standard, dc_linear };

const char* to_string(FlowModel m);

/// Constant load step: delta_p is ADDED to the node's net power extraction
/// for every t >= t_start, i.e. it enters the frequency dynamics exactly
/// where the electrical power does. A positive delta_p therefore sags the
/// frequency; the equivalent injected disturbance vector is -delta_p.
struct Disturbance {
  double t_start = 0.0;
  int node = 0;
  double delta_p = 0.0;
};

/// Optional per-node initial values. Fields left unset keep the defaults:
/// theta = 0, omega = 0, vm = vm_ref, filter states = the undisturbed power
/// flow at t = 0, v_dc = v_dc_ref. On full forms an omega (or vm) override
/// is realized through the state that algebraically produces it, unless
/// that state is itself overridden.
struct InitialOverride {
  int node = 0;
  std::optional<double> theta, omega, vm, p_filt, q_filt, v_dc;
};

struct Scenario {
  NetworkGraph graph;
  std::vector<ControllerConfig> controllers;  // one per node
  FlowModel flow_model = FlowModel::ac_standard;
  std::vector<Disturbance> disturbances;
  double t_end = 10.0;  // s
  double dt = 1e-3;     // s
  int decimate = 1;     // record every k-th step
  std::vector<InitialOverride> initial_overrides;
};

/// Empty when the scenario can run; otherwise one message per violation,
/// each naming the offending field.
std::vector<std::string> validate_scenario(const Scenario& sc);

/// Number of fixed steps implied by (t_end, dt); throws ValidationError if
/// t_end is not a whole number of steps.
long scenario_step_count(const Scenario& sc);

/// Coupled node + network dynamics as a flat ODE. State packing per node:
///   reduced (any family): [theta, omega, vm]
///   vsm full:             [theta, omega, p_filt, q_filt]
///   droop full:           [theta, p_filt, q_filt]
///   matching full:        [theta, v_dc, q_filt]
class SystemModel {
 public:
  explicit SystemModel(const Scenario& sc);  // throws ValidationError

  int state_size() const { return total_; }
  int node_count() const { return static_cast<int>(configs_.size()); }
  const Eigen::MatrixXd& laplacian() const { return laplacian_; }

  Eigen::VectorXd initial_state() const;
  Eigen::VectorXd derivative(double t, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// theta/omega/vm of every node, resolving the algebraic outputs of the
  /// full forms.
  void bus_state(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& theta,
                 Eigen::VectorXd& omega, Eigen::VectorXd& vm) const;

  /// Undisturbed network flows for the given packed state.
  PowerFlows flows(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  NodeState unpack_node(const Eigen::Ref<const Eigen::VectorXd>& x, int node) const;

 private:
  PowerFlows evaluate_flows(const Eigen::VectorXd& theta, const Eigen::VectorXd& vm) const;

  NetworkGraph graph_;
  Eigen::MatrixXd laplacian_;
  std::vector<ControllerConfig> configs_;
  FlowModel flow_model_;
  std::vector<Disturbance> disturbances_;
  std::vector<InitialOverride> overrides_;
  std::vector<int> offset_;
  int total_ = 0;
};

/// One classical 4th-order step of dx/dt = f(t, x).
template <typename F>
  requires std::invocable<F&, double, const Eigen::Ref<const Eigen::VectorXd>&>
Eigen::VectorXd rk4_step(F&& f, double t, double dt, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd k1 = f(t, x);
  const Eigen::VectorXd k2 = f(t + 0.5 * dt, Eigen::VectorXd(x + 0.5 * dt * k1));
  const Eigen::VectorXd k3 = f(t + 0.5 * dt, Eigen::VectorXd(x + 0.5 * dt * k2));
  const Eigen::VectorXd k4 = f(t + dt, Eigen::VectorXd(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::VectorXd rk4_step(const SystemModel& model, double t, double dt,
                         const Eigen::Ref<const Eigen::VectorXd>& x);

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<NodeState>> states;  // [time][node]
  std::vector<PowerFlows> flows;               // [time]
};

/// Fixed-step integration over [0, t_end], recording every `decimate`-th
/// step. Deterministic: identical scenarios produce identical bytes.
/// Throws SimulationError on DC link collapse or a non-finite state.
Trajectory run_scenario(const Scenario& sc);

struct Metrics {
  Eigen::VectorXd rocof_max;         // per node, max |d omega/dt|
  Eigen::VectorXd omega_overshoot;   // per node, max |omega|
  Eigen::VectorXd settling_time;     // per node, last time outside the band
  std::vector<bool> settled;
  double omega_avg_final = 0.0;
  double theta_avg_ramp_rate = 0.0;  // LS slope of mean theta, final 20%
  double band = 0.0;
};

/// Transient metrics on the recorded grid. ROCOF uses central differences
/// (one-sided at the ends); settling is the last time |omega - omega_final|
/// exceeds band * max|omega|.
Metrics compute_metrics(const Trajectory& traj, double band = 0.02);

struct ComponentSelection {
  bool theta = true, omega = true, vm = true;
  bool p_filt = false, q_filt = false, v_dc = false;
};

struct DeviationReport {
  struct Entry {
    std::string component;
    double max_abs = 0.0;
    double at_time = 0.0;
  };
  std::vector<Entry> entries;
  double overall = 0.0;
};

/// Componentwise max |a - b| over a shared time grid. Throws
/// ValidationError on grid mismatch or on a selected component that is not
/// present in both trajectories.
DeviationReport compare_trajectories(const Trajectory& a, const Trajectory& b,
                                     const ComponentSelection& sel = {});

}  // namespace gridform
