#include "gridform/controllers.hpp"

#include <cmath>

#include "gridform/errors.hpp"

namespace gridform {

namespace {

bool close_rel(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1.0});
}

double require_state(const std::optional<double>& v, const char* what) {
  if (!v) throw ValidationError(std::string("node state is missing ") + what);
  return *v;
}

}  // namespace

const char* to_string(Family f) {
  switch (f) {
    case Family::vsm: return "vsm";
    case Family::droop: return "droop";
    case Family::matching: return "matching";
  }
  return "?";
}

const char* to_string(Form f) { return f == Form::full ? "full" : "reduced"; }

EquivalentParams map_to_equivalent(const VsmParams& p) {
  return {p.inertia, p.damping, p.tau_f, p.r_q, p.p_ref, p.q_ref, p.vm_ref};
}

EquivalentParams map_to_equivalent(const DroopParams& p) {
  return {p.tau_f / p.r_p, 1.0 / p.r_p, p.tau_f, p.r_q, p.p_ref, p.q_ref, p.vm_ref};
}

EquivalentParams map_to_equivalent(const MatchingParams& p) {
  return {p.c_dc * p.v_dc_ref / p.k_theta, p.k_dc * p.v_dc_ref / p.k_theta,
          p.tau_f, p.r_q, p.v_dc_ref * p.i_dc_ref, p.q_ref, p.vm_ref};
}

EquivalentParams map_to_equivalent(const ControllerConfig& c) {
  return std::visit([](const auto& p) { return map_to_equivalent(p); }, c.params);
}

std::variant<VsmParams, DroopParams, MatchingParams> invert_equivalent(
    const EquivalentParams& t, Family family, const NativeFixedParams& fixed) {
  if (!(t.inertia > 0.0) || !(t.damping > 0.0))
    throw ValidationError("invert_equivalent: target inertia and damping must be > 0");
  switch (family) {
    case Family::vsm: {
      if (fixed.tau_f || fixed.c_dc || fixed.v_dc_ref)
        throw ValidationError("invert_equivalent(vsm): overdetermined fixed set, vsm takes no fixed parameters");
      return VsmParams{t.inertia, t.damping, t.tau_f, t.r_q, t.p_ref, t.q_ref, t.vm_ref};
    }
    case Family::droop: {
      if (fixed.c_dc || fixed.v_dc_ref)
        throw ValidationError("invert_equivalent(droop): overdetermined fixed set, droop takes only tau_f");
      const double tau = fixed.tau_f.value_or(t.tau_f);
      if (!close_rel(tau, t.inertia / t.damping))
        throw ValidationError("invert_equivalent(droop): tau_f must equal inertia/damping for droop");
      if (!close_rel(tau, t.tau_f))
        throw ValidationError("invert_equivalent(droop): fixed tau_f conflicts with target tau_f");
      return DroopParams{1.0 / t.damping, tau, t.r_q, t.p_ref, t.q_ref, t.vm_ref};
    }
    case Family::matching: {
      if (fixed.tau_f)
        throw ValidationError("invert_equivalent(matching): overdetermined fixed set, tau_f comes from the target");
      if (!fixed.c_dc)
        throw ValidationError("invert_equivalent(matching): underdetermined fixed set, c_dc is required");
      const double c_dc = *fixed.c_dc;
      const double v_dc_ref = fixed.v_dc_ref.value_or(1.0);
      if (!(c_dc > 0.0) || !(v_dc_ref > 0.0))
        throw ValidationError("invert_equivalent(matching): c_dc and v_dc_ref must be > 0");
      MatchingParams p;
      p.c_dc = c_dc;
      p.v_dc_ref = v_dc_ref;
      p.k_theta = c_dc * v_dc_ref / t.inertia;
      p.k_dc = t.damping * p.k_theta / v_dc_ref;
      p.i_dc_ref = t.p_ref / v_dc_ref;
      p.tau_f = t.tau_f;
      p.r_q = t.r_q;
      p.q_ref = t.q_ref;
      p.vm_ref = t.vm_ref;
      return p;
    }
  }
  throw ValidationError("invert_equivalent: unknown family");
}

double droop_full_omega(const NodeState& s, const DroopParams& p) {
  return p.r_p * (p.p_ref - require_state(s.p_filt, "p_filt"));
}

double matching_full_omega(const NodeState& s, const MatchingParams& p) {
  return p.k_theta * (require_state(s.v_dc, "v_dc") - p.v_dc_ref);
}

NodeRates vsm_full_derivative(const NodeState& s, const VsmParams& p, double p_elec,
                              double q_elec) {
  const double p_f = require_state(s.p_filt, "p_filt");
  const double q_f = require_state(s.q_filt, "q_filt");
  NodeRates d;
  d.theta = s.omega;
  d.omega = (-p.damping * s.omega + p.p_ref - p_f) / p.inertia;
  d.p_filt = (p_elec - p_f) / p.tau_f;
  d.q_filt = (q_elec - q_f) / p.tau_f;
  d.vm = -p.r_q * *d.q_filt;  // vm = vm_ref + r_q (q_ref - q_filt)
  return d;
}

NodeRates reduced_derivative(const NodeState& s, const EquivalentParams& p, double p_elec,
                             double q_elec) {
  NodeRates d;
  d.theta = s.omega;
  d.omega = (-p.damping * s.omega + p.p_ref - p_elec) / p.inertia;
  d.vm = (p.r_q * (p.q_ref - q_elec) + (p.vm_ref - s.vm)) / p.tau_f;
  return d;
}

NodeRates vsm_reduced_derivative(const NodeState& s, const VsmParams& p, double p_elec,
                                 double q_elec) {
  return reduced_derivative(s, map_to_equivalent(p), p_elec, q_elec);
}

NodeRates vsm_reduced_derivative(const NodeState& s, const EquivalentParams& p, double p_elec,
                                 double q_elec) {
  return reduced_derivative(s, p, p_elec, q_elec);
}

NodeRates droop_full_derivative(const NodeState& s, const DroopParams& p, double p_elec,
                                double q_elec) {
  const double p_f = require_state(s.p_filt, "p_filt");
  const double q_f = require_state(s.q_filt, "q_filt");
  NodeRates d;
  d.theta = p.r_p * (p.p_ref - p_f);
  d.p_filt = (p_elec - p_f) / p.tau_f;
  d.q_filt = (q_elec - q_f) / p.tau_f;
  d.omega = -p.r_p * *d.p_filt;  // omega = r_p (p_ref - p_filt)
  d.vm = -p.r_q * *d.q_filt;
  return d;
}

NodeRates droop_reduced_derivative(const NodeState& s, const DroopParams& p, double p_elec,
                                   double q_elec) {
  return reduced_derivative(s, map_to_equivalent(p), p_elec, q_elec);
}

NodeRates matching_full_derivative(const NodeState& s, const MatchingParams& p, double p_elec,
                                   double q_elec) {
  const double v = require_state(s.v_dc, "v_dc");
  const double q_f = require_state(s.q_filt, "q_filt");
  if (v <= 0.0) throw SimulationError("DC link collapse");
  const double i_dc = p.i_dc_ref + p.k_dc * (p.v_dc_ref - v);
  NodeRates d;
  d.theta = p.k_theta * (v - p.v_dc_ref);
  d.v_dc = (i_dc - p_elec / v) / p.c_dc;
  d.q_filt = (q_elec - q_f) / p.tau_f;
  d.omega = p.k_theta * *d.v_dc;
  d.vm = -p.r_q * *d.q_filt;
  return d;
}

NodeRates matching_reduced_derivative(const NodeState& s, const MatchingParams& p, double p_elec,
                                      double q_elec) {
  return reduced_derivative(s, map_to_equivalent(p), p_elec, q_elec);
}

std::vector<std::string> validate_params(const ControllerConfig& c, const std::string& ctx) {
  std::vector<std::string> diags;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0)) diags.push_back(ctx + "." + name + ": must be > 0");
  };
  auto nonneg = [&](double v, const char* name) {
    if (v < 0.0) diags.push_back(ctx + "." + name + ": must be >= 0");
  };
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, VsmParams>) {
          positive(p.inertia, "m");
          positive(p.damping, "d");
        } else if constexpr (std::is_same_v<P, DroopParams>) {
          positive(p.r_p, "r_p");
        } else {
          positive(p.c_dc, "c_dc");
          positive(p.v_dc_ref, "v_dc_ref");
          positive(p.k_theta, "k_theta");
          positive(p.k_dc, "k_dc");
        }
        positive(p.tau_f, "tau_f");
        nonneg(p.r_q, "r_q");
        positive(p.vm_ref, "vm_ref");
      },
      c.params);
  return diags;
}

}  // namespace gridform
