#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gridform {

/// Transmission line between two buses, per-unit series parameters.
/// `susceptance` is the magnitude of the line susceptance (> 0 for a valid
/// inductive line); `conductance` >= 0 models losses.
struct Edge {
  int from = 0;
  int to = 0;
  double conductance = 0.0;
  double susceptance = 0.0;
};

/// Weighted graph of the power network. Angles/frequencies live in a dq
/// frame rotating at `omega0`, so omega == 0 means nominal frequency.
struct NetworkGraph {
  int node_count = 0;
  std::vector<Edge> edges;
  double omega0 = 2.0 * 3.14159265358979323846 * 60.0;  // rad/s, metadata
};

/// Sign convention for the reactive row of the nonlinear power flow.
/// `standard` is the bus-injection form (G sin - B cos with self terms),
/// whose linearization around theta=0, Vm=1 is the susceptance Laplacian.
/// `paper_form` keeps the +B cos reactive row as sometimes written; it does
/// NOT vanish at the trivial operating point and is kept only for
/// side-by-side comparison.
enum class QSignConvention { paper_form, standard };

struct BusVoltages {
  Eigen::VectorXd theta;  // rad
  Eigen::VectorXd vm;     // pu, > 0
};

struct PowerFlows {
  Eigen::VectorXd p;  // pu injection into the network at each bus
  Eigen::VectorXd q;
};

/// Structural diagnostics: empty means the graph is usable.
/// Reported: bad node indices, self-loops, duplicate edges, nonpositive
/// susceptance, negative conductance, disconnection (with the components).
std::vector<std::string> validate_graph(const NetworkGraph& graph);

/// Weighted Laplacian of line susceptances: L(k,l) = -B_kl off-diagonal,
/// diagonal = sum of incident susceptances. Throws ValidationError listing
/// every diagnostic if the graph is invalid.
Eigen::MatrixXd build_laplacian(const NetworkGraph& graph);

/// Nonlinear AC bus power injections for the given voltages.
PowerFlows ac_power_flow(const NetworkGraph& graph, const BusVoltages& v,
                         QSignConvention convention = QSignConvention::standard);

/// Linearized (DC) power flow: P = L*theta, Q = L*vm.
PowerFlows dc_power_flow(const Eigen::Ref<const Eigen::MatrixXd>& laplacian,
                         const Eigen::Ref<const Eigen::VectorXd>& theta,
                         const Eigen::Ref<const Eigen::VectorXd>& vm);

}  // namespace gridform
