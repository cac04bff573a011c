#include "gridform/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gridform/errors.hpp"

namespace gridform {

namespace {

// Connected components over structurally valid edges (indices in range,
// no self-loop requirement here; weights ignored).
std::vector<std::vector<int>> components(const NetworkGraph& g) {
  std::vector<int> parent(g.node_count);
  for (int i = 0; i < g.node_count; ++i) parent[i] = i;
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& e : g.edges) {
    if (e.from < 0 || e.from >= g.node_count || e.to < 0 || e.to >= g.node_count) continue;
    parent[find(e.from)] = find(e.to);
  }
  std::vector<std::vector<int>> comps;
  std::vector<int> root_slot(g.node_count, -1);
  for (int i = 0; i < g.node_count; ++i) {
    int r = find(i);
    if (root_slot[r] < 0) {
      root_slot[r] = static_cast<int>(comps.size());
      comps.emplace_back();
    }
    comps[root_slot[r]].push_back(i);
  }
  return comps;
}

std::string component_list(const std::vector<std::vector<int>>& comps) {
  std::ostringstream out;
  for (size_t c = 0; c < comps.size(); ++c) {
    out << (c ? "," : "") << "{";
    for (size_t i = 0; i < comps[c].size(); ++i) out << (i ? "," : "") << comps[c][i];
    out << "}";
  }
  return out.str();
}

}  // namespace

std::vector<std::string> validate_graph(const NetworkGraph& g) {
  std::vector<std::string> diags;
  if (g.node_count < 1) {
    diags.push_back("node count must be >= 1");
    return diags;
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& e : g.edges) {
    std::ostringstream id;
    id << "(" << e.from << "," << e.to << ")";
    if (e.from < 0 || e.from >= g.node_count || e.to < 0 || e.to >= g.node_count) {
      diags.push_back("edge " + id.str() + ": node index out of range [0," +
                      std::to_string(g.node_count) + ")");
      continue;
    }
    if (e.from == e.to) {
      diags.push_back("self-loop at node " + std::to_string(e.from));
      continue;
    }
    auto key = std::minmax(e.from, e.to);
    if (!seen.insert(key).second) diags.push_back("duplicate edge " + id.str());
    if (!(e.susceptance > 0.0)) diags.push_back("nonpositive susceptance on " + id.str());
    if (e.conductance < 0.0) diags.push_back("negative conductance on " + id.str());
  }
  auto comps = components(g);
  if (comps.size() > 1) diags.push_back("disconnected: components " + component_list(comps));
  return diags;
}

Eigen::MatrixXd build_laplacian(const NetworkGraph& g) {
  auto diags = validate_graph(g);
  if (!diags.empty()) {
    std::string msg = "invalid network graph:";
    for (const auto& d : diags) msg += "\n  " + d;
    throw ValidationError(msg);
  }
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(g.node_count, g.node_count);
  for (const auto& e : g.edges) {
    lap(e.from, e.to) -= e.susceptance;
    lap(e.to, e.from) -= e.susceptance;
    lap(e.from, e.from) += e.susceptance;
    lap(e.to, e.to) += e.susceptance;
  }
  return lap;
}

PowerFlows ac_power_flow(const NetworkGraph& g, const BusVoltages& v,
                         QSignConvention convention) {
  const int n = g.node_count;
  if (v.theta.size() != n || v.vm.size() != n)
    throw ValidationError("ac_power_flow: voltage vectors must have length " + std::to_string(n));
  PowerFlows f;
  f.p = Eigen::VectorXd::Zero(n);
  f.q = Eigen::VectorXd::Zero(n);
  for (const auto& e : g.edges) {
    const int k = e.from, l = e.to;
    const double vk = v.vm[k], vl = v.vm[l];
    const double skl = std::sin(v.theta[k] - v.theta[l]);
    const double ckl = std::cos(v.theta[k] - v.theta[l]);
    if (convention == QSignConvention::standard) {
      // Bus injections from the branch admittance, no shunts. Both rows
      // vanish at theta=0, Vm=1, matching the linearization point.
      f.p[k] += e.conductance * vk * (vk - vl * ckl) + e.susceptance * vk * vl * skl;
      f.p[l] += e.conductance * vl * (vl - vk * ckl) - e.susceptance * vk * vl * skl;
      f.q[k] += e.susceptance * vk * (vk - vl * ckl) - e.conductance * vk * vl * skl;
      f.q[l] += e.susceptance * vl * (vl - vk * ckl) + e.conductance * vk * vl * skl;
    } else {
      // Literal pairwise form: P row agrees with `standard` when G = 0;
      // the +B cos reactive row does not vanish at the trivial point.
      f.p[k] += vk * vl * (e.conductance * ckl + e.susceptance * skl);
      f.p[l] += vk * vl * (e.conductance * ckl - e.susceptance * skl);
      f.q[k] += vk * vl * (e.conductance * skl + e.susceptance * ckl);
      f.q[l] += vk * vl * (-e.conductance * skl + e.susceptance * ckl);
    }
  }
  return f;
}

PowerFlows dc_power_flow(const Eigen::Ref<const Eigen::MatrixXd>& laplacian,
                         const Eigen::Ref<const Eigen::VectorXd>& theta,
                         const Eigen::Ref<const Eigen::VectorXd>& vm) {
  const auto n = laplacian.rows();
  if (laplacian.cols() != n)
    throw ValidationError("dc_power_flow: laplacian must be square");
  if (theta.size() != n || vm.size() != n)
    throw ValidationError("dc_power_flow: vector length " + std::to_string(theta.size()) +
                          "/" + std::to_string(vm.size()) + " does not match laplacian size " +
                          std::to_string(n));
  return {laplacian * theta, laplacian * vm};
}

}  // namespace gridform
