#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gridform {

/// Virtual synchronous machine gains. `inertia`/`damping` act on the
/// frequency deviation, `tau_f` is the shared low-pass time constant of the
/// power measurements, `r_q` the reactive voltage droop.
struct VsmParams {
  double inertia = 1.0;   // s^2 pu
  double damping = 1.0;   // s pu
  double tau_f = 0.1;     // s
  double r_q = 0.0;       // pu/pu
  double p_ref = 0.0;     // pu
  double q_ref = 0.0;     // pu
  double vm_ref = 1.0;    // pu
};

/// Frequency droop gains: omega = r_p * (p_ref - filtered P).
struct DroopParams {
  double r_p = 0.05;      // (rad/s)/pu
  double tau_f = 0.1;
  double r_q = 0.0;
  double p_ref = 0.0;
  double q_ref = 0.0;
  double vm_ref = 1.0;
};

/// Matching control: frequency is tied to the DC-link voltage deviation
/// through k_theta; k_dc is the proportional DC current controller.
/// The implied active setpoint is v_dc_ref * i_dc_ref.
struct MatchingParams {
  double c_dc = 0.1;      // pu s
  double v_dc_ref = 1.0;  // pu
  double k_theta = 1.0;   // (rad/s)/pu
  double k_dc = 1.0;      // pu/pu
  double i_dc_ref = 0.0;  // pu
  double tau_f = 0.1;
  double r_q = 0.0;
  double q_ref = 0.0;
  double vm_ref = 1.0;
};

/// Common (inertia, damping) parameterization every family reduces to.
struct EquivalentParams {
  double inertia = 1.0;
  double damping = 1.0;
  double tau_f = 0.1;
  double r_q = 0.0;
  double p_ref = 0.0;
  double q_ref = 0.0;
  double vm_ref = 1.0;
};

/// Per-node dynamic state. theta/omega/vm are always meaningful (for the
/// full forms omega and/or vm are algebraic outputs of the states); the
/// optionals are present only on the forms that integrate them.
struct NodeState {
  double theta = 0.0;              // rad
  double omega = 0.0;              // rad/s deviation from nominal
  double vm = 1.0;                 // pu
  std::optional<double> p_filt;    // filtered active power, pu
  std::optional<double> q_filt;    // filtered reactive power, pu
  std::optional<double> v_dc;      // DC-link voltage, pu
};

/// Derivatives use the same shape; algebraic entries carry their implied
/// (chain-rule) rates so full/reduced trajectories compare componentwise.
using NodeRates = NodeState;

enum class Family { vsm, droop, matching };
enum class Form { full, reduced };

struct ControllerConfig {
  Form form = Form::reduced;
  std::variant<VsmParams, DroopParams, MatchingParams> params = VsmParams{};

  Family family() const { return static_cast<Family>(params.index()); }
};

const char* to_string(Family f);
const char* to_string(Form f);

/// Equivalent inertia/damping of each family:
///   vsm: identity; droop: (tau_f/r_p, 1/r_p);
///   matching: (c_dc*v_dc_ref/k_theta, k_dc*v_dc_ref/k_theta), p_ref = v_dc_ref*i_dc_ref.
EquivalentParams map_to_equivalent(const VsmParams& p);
EquivalentParams map_to_equivalent(const DroopParams& p);
EquivalentParams map_to_equivalent(const MatchingParams& p);
EquivalentParams map_to_equivalent(const ControllerConfig& c);

/// Degrees of freedom the target does not determine. droop: optional tau_f
/// (must equal inertia/damping); matching: c_dc required, v_dc_ref
/// defaults to 1.
struct NativeFixedParams {
  std::optional<double> tau_f;
  std::optional<double> c_dc;
  std::optional<double> v_dc_ref;
};

/// Native gains realizing `target` for the family, such that
/// map_to_equivalent(result) == target to 1e-12 relative. Throws
/// ValidationError on an under- or overdetermined `fixed` set or an
/// unrealizable target (droop with tau_f != inertia/damping).
std::variant<VsmParams, DroopParams, MatchingParams> invert_equivalent(
    const EquivalentParams& target, Family family, const NativeFixedParams& fixed = {});

/// Voltage magnitude implied by the filtered reactive power.
inline double reactive_droop_vm(double q_filt, double r_q, double q_ref, double vm_ref) {
  return vm_ref + r_q * (q_ref - q_filt);
}

double droop_full_omega(const NodeState& s, const DroopParams& p);
double matching_full_omega(const NodeState& s, const MatchingParams& p);

// Per-node dynamics. p/q are the electrical powers the node currently
// extracts into the network (disturbances already folded in by the caller).

NodeRates vsm_full_derivative(const NodeState& s, const VsmParams& p, double p_elec,
                              double q_elec);
NodeRates reduced_derivative(const NodeState& s, const EquivalentParams& p, double p_elec,
                             double q_elec);
NodeRates vsm_reduced_derivative(const NodeState& s, const VsmParams& p, double p_elec,
                                 double q_elec);
NodeRates vsm_reduced_derivative(const NodeState& s, const EquivalentParams& p, double p_elec,
                                 double q_elec);
NodeRates droop_full_derivative(const NodeState& s, const DroopParams& p, double p_elec,
                                double q_elec);
NodeRates droop_reduced_derivative(const NodeState& s, const DroopParams& p, double p_elec,
                                   double q_elec);
NodeRates matching_full_derivative(const NodeState& s, const MatchingParams& p, double p_elec,
                                   double q_elec);
NodeRates matching_reduced_derivative(const NodeState& s, const MatchingParams& p, double p_elec,
                                      double q_elec);

/// Gain/setpoint range diagnostics; `context` prefixes each message.
std::vector<std::string> validate_params(const ControllerConfig& c, const std::string& context);

}  // namespace gridform
