#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gridform/controllers.hpp"
#include "gridform/errors.hpp"
#include "test_helpers.hpp"

using namespace gridform;
using namespace gridform::testing;

TEST_CASE("equivalent inertia and damping of each family") {
  SUBCASE("droop: tau_f/r_p and 1/r_p") {
    DroopParams p{0.05, 0.1, 0.2, 0.0, 0.0, 1.0};
    const EquivalentParams eq = map_to_equivalent(p);
    CHECK(eq.inertia == 2.0);
    CHECK(eq.damping == 20.0);
  }
  SUBCASE("matching: c_dc v_dc_ref / k_theta and k_dc v_dc_ref / k_theta") {
    MatchingParams p;
    p.c_dc = 0.08;
    p.v_dc_ref = 1.0;
    p.k_theta = 0.04;
    p.k_dc = 0.8;
    p.i_dc_ref = 0.25;
    const EquivalentParams eq = map_to_equivalent(p);
    CHECK(eq.inertia == 2.0);
    CHECK(eq.damping == 20.0);
    CHECK(eq.p_ref == doctest::Approx(0.25));  // v_dc_ref * i_dc_ref
  }
  SUBCASE("vsm maps to itself") {
    VsmParams p{2.0, 20.0, 0.1, 0.2, 0.3, 0.1, 1.02};
    const EquivalentParams eq = map_to_equivalent(p);
    CHECK(eq.inertia == 2.0);
    CHECK(eq.damping == 20.0);
    CHECK(eq.p_ref == 0.3);
    CHECK(eq.vm_ref == 1.02);
  }
}

TEST_CASE("invert_equivalent") {
  EquivalentParams target{2.0, 20.0, 0.1, 0.2, 0.0, 0.0, 1.0};
  SUBCASE("droop inversion with fixed tau_f") {
    NativeFixedParams fixed;
    fixed.tau_f = 0.1;
    const auto native = invert_equivalent(target, Family::droop, fixed);
    const auto& p = std::get<DroopParams>(native);
    CHECK(p.r_p == doctest::Approx(0.05).epsilon(1e-14));
    const EquivalentParams rt = map_to_equivalent(p);
    CHECK(rt.inertia == doctest::Approx(target.inertia).epsilon(1e-12));
    CHECK(rt.damping == doctest::Approx(target.damping).epsilon(1e-12));
  }
  SUBCASE("matching inversion with fixed c_dc, v_dc_ref") {
    NativeFixedParams fixed;
    fixed.c_dc = 0.08;
    fixed.v_dc_ref = 1.0;
    const auto native = invert_equivalent(target, Family::matching, fixed);
    const auto& p = std::get<MatchingParams>(native);
    CHECK(p.k_theta == doctest::Approx(0.04).epsilon(1e-14));
    CHECK(p.k_dc == doctest::Approx(0.8).epsilon(1e-14));
    const EquivalentParams rt = map_to_equivalent(p);
    CHECK(rt.inertia == doctest::Approx(target.inertia).epsilon(1e-12));
    CHECK(rt.damping == doctest::Approx(target.damping).epsilon(1e-12));
  }
  SUBCASE("droop target with wrong filter constant is rejected") {
    EquivalentParams bad = target;
    bad.tau_f = 0.2;  // inertia/damping = 0.1
    CHECK_THROWS_WITH_AS(invert_equivalent(bad, Family::droop),
                         doctest::Contains("tau_f must equal inertia/damping"), ValidationError);
  }
  SUBCASE("underdetermined matching") {
    CHECK_THROWS_WITH_AS(invert_equivalent(target, Family::matching),
                         doctest::Contains("underdetermined"), ValidationError);
  }
  SUBCASE("fixed tau_f conflicting with the target") {
    NativeFixedParams fixed;
    fixed.tau_f = 0.05;  // consistent with M/D only if the target says so too
    EquivalentParams t = target;
    t.inertia = 1.0;  // M/D = 0.05 matches the fixed value, target.tau_f does not
    CHECK_THROWS_WITH_AS(invert_equivalent(t, Family::droop, fixed),
                         doctest::Contains("conflicts"), ValidationError);
  }
  SUBCASE("matching rejects a fixed tau_f") {
    NativeFixedParams fixed;
    fixed.c_dc = 0.08;
    fixed.tau_f = 0.1;
    CHECK_THROWS_WITH_AS(invert_equivalent(target, Family::matching, fixed),
                         doctest::Contains("overdetermined"), ValidationError);
  }
  SUBCASE("overdetermined vsm") {
    NativeFixedParams fixed;
    fixed.c_dc = 1.0;
    CHECK_THROWS_WITH_AS(invert_equivalent(target, Family::vsm, fixed),
                         doctest::Contains("overdetermined"), ValidationError);
  }
  SUBCASE("random targets round-trip through every family") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.2, 5.0);
    for (int trial = 0; trial < 30; ++trial) {
      EquivalentParams t;
      t.inertia = u(rng);
      t.damping = u(rng);
      t.tau_f = t.inertia / t.damping;  // realizable by droop
      t.r_q = 0.1 * u(rng);
      t.p_ref = u(rng) - 2.5;
      const auto vsm = invert_equivalent(t, Family::vsm);
      NativeFixedParams mf;
      mf.c_dc = u(rng);
      mf.v_dc_ref = u(rng);
      const auto match = invert_equivalent(t, Family::matching, mf);
      const auto droop = invert_equivalent(t, Family::droop);
      for (const auto& eq :
           {map_to_equivalent(std::get<VsmParams>(vsm)),
            map_to_equivalent(std::get<MatchingParams>(match)),
            map_to_equivalent(std::get<DroopParams>(droop))}) {
        CHECK(eq.inertia == doctest::Approx(t.inertia).epsilon(1e-12));
        CHECK(eq.damping == doctest::Approx(t.damping).epsilon(1e-12));
        CHECK(eq.p_ref == doctest::Approx(t.p_ref).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("vsm dynamics") {
  VsmParams p{2.0, 20.0, 0.1, 0.2, 0.0, 0.0, 1.0};
  SUBCASE("full form at its fixed point") {
    p.p_ref = 0.4;
    NodeState s;
    s.omega = 0.0;
    s.p_filt = 0.4;  // settled measurement equal to the reference
    s.q_filt = 0.0;
    const NodeRates d = vsm_full_derivative(s, p, 0.4, 0.0);
    CHECK(d.omega == 0.0);
    CHECK(*d.p_filt == 0.0);
  }
  SUBCASE("full form initial acceleration (P* - P)/M") {
    p.p_ref = 1.0;
    NodeState s;
    s.omega = 0.0;
    s.p_filt = 0.0;
    s.q_filt = 0.0;
    const NodeRates d = vsm_full_derivative(s, p, 0.0, 0.0);
    CHECK(d.omega == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("reactive fixed point pins vm at the reference") {
    p.q_ref = 0.3;
    NodeState s;
    s.q_filt = 0.3;
    s.p_filt = 0.0;
    const NodeRates d = vsm_full_derivative(s, p, 0.0, 0.3);
    CHECK(*d.q_filt == 0.0);
    CHECK(reactive_droop_vm(*s.q_filt, p.r_q, p.q_ref, p.vm_ref) == p.vm_ref);
  }
  SUBCASE("reduced form equilibrium") {
    p.p_ref = 0.2;
    p.q_ref = 0.1;
    NodeState s;
    s.omega = 0.0;
    s.vm = p.vm_ref;
    const NodeRates d = vsm_reduced_derivative(s, p, 0.2, 0.1);
    CHECK(d.theta == 0.0);
    CHECK(d.omega == 0.0);
    CHECK(d.vm == 0.0);
  }
  SUBCASE("reduced form steady frequency under constant mismatch") {
    p.p_ref = 1.0;
    NodeState s;
    s.omega = 0.05;  // (P* - P)/D
    s.vm = 1.0;
    const NodeRates d = vsm_reduced_derivative(s, p, 0.0, 0.0);
    CHECK(std::abs(d.omega) < 1e-15);
  }
  SUBCASE("reduced voltage rate") {
    NodeState s;
    s.vm = 1.0;
    // tau_f 0.1, r_q 0.2, q_ref - q = 1, vm_ref - vm = 0 -> dvm = 2
    p.q_ref = 1.0;
    const NodeRates d = vsm_reduced_derivative(s, p, 0.0, 0.0);
    CHECK(d.vm == doctest::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("droop dynamics") {
  DroopParams p{0.05, 0.1, 0.2, 1.0, 0.0, 1.0};
  SUBCASE("settled filter means nominal frequency") {
    NodeState s;
    s.p_filt = p.p_ref;
    s.q_filt = 0.0;
    CHECK(droop_full_omega(s, p) == 0.0);
  }
  SUBCASE("frequency proportional to filtered mismatch") {
    NodeState s;
    s.p_filt = 0.0;
    s.q_filt = 0.0;
    CHECK(droop_full_omega(s, p) == doctest::Approx(0.05).epsilon(1e-15));
    const NodeRates d = droop_full_derivative(s, p, 1.0, 0.0);
    CHECK(d.theta == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(*d.p_filt == doctest::Approx(10.0).epsilon(1e-15));  // (P - Pf)/tau_f
  }
}

TEST_CASE("matching dynamics") {
  MatchingParams p;
  p.c_dc = 0.02;
  p.v_dc_ref = 1.0;
  p.k_theta = 4.0;
  p.k_dc = 0.5;
  p.i_dc_ref = 0.5;
  p.tau_f = 0.1;
  p.r_q = 0.2;
  SUBCASE("equilibrium when extracted power matches the DC source") {
    NodeState s;
    s.v_dc = 1.0;
    s.q_filt = 0.0;
    const NodeRates d = matching_full_derivative(s, p, 0.5, 0.0);  // P = v_dc_ref * i_dc_ref
    CHECK(std::abs(*d.v_dc) < 1e-15);
    CHECK(matching_full_omega(s, p) == 0.0);
  }
  SUBCASE("capacitor charging rate") {
    NodeState s;
    s.v_dc = 1.0;
    s.q_filt = 0.0;
    const NodeRates d = matching_full_derivative(s, p, 0.3, 0.0);
    CHECK(*d.v_dc == doctest::Approx(10.0).epsilon(1e-14));  // (0.5 - 0.3)/0.02
  }
  SUBCASE("frequency tracks the DC voltage deviation") {
    NodeState s;
    s.v_dc = 1.01;
    s.q_filt = 0.0;
    CHECK(matching_full_omega(s, p) == doctest::Approx(0.04).epsilon(1e-12));
  }
  SUBCASE("collapsed DC link aborts") {
    NodeState s;
    s.v_dc = -0.1;
    s.q_filt = 0.0;
    CHECK_THROWS_WITH_AS(matching_full_derivative(s, p, 0.0, 0.0),
                         doctest::Contains("DC link collapse"), SimulationError);
  }
}

TEST_CASE("reduced derivatives of all families coincide under the parameter map") {
  // droop (0.1, 0.05) and matching (0.08, 1, 0.04, 0.8) both map to (2, 20).
  const DroopParams droop{0.05, 0.1, 0.2, 0.0, 0.0, 1.0};
  MatchingParams matching;
  matching.c_dc = 0.08;
  matching.v_dc_ref = 1.0;
  matching.k_theta = 0.04;
  matching.k_dc = 0.8;
  matching.i_dc_ref = 0.0;
  matching.tau_f = 0.1;
  matching.r_q = 0.2;
  const VsmParams vsm{2.0, 20.0, 0.1, 0.2, 0.0, 0.0, 1.0};

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    NodeState s;
    s.theta = u(rng);
    s.omega = 0.1 * u(rng);
    s.vm = 1.0 + 0.1 * u(rng);
    const double pe = u(rng), qe = u(rng);
    const NodeRates a = vsm_reduced_derivative(s, vsm, pe, qe);
    const NodeRates b = droop_reduced_derivative(s, droop, pe, qe);
    const NodeRates c = matching_reduced_derivative(s, matching, pe, qe);
    // The canonical gains map to bit-identical (M, D), so the shared
    // reduced dynamics agree exactly.
    CHECK(a.theta == b.theta);
    CHECK(a.omega == b.omega);
    CHECK(a.vm == b.vm);
    CHECK(a.theta == c.theta);
    CHECK(a.omega == c.omega);
    CHECK(a.vm == c.vm);
  }
}

TEST_CASE("missing state fields are reported") {
  VsmParams p{2.0, 20.0, 0.1, 0.2, 0.0, 0.0, 1.0};
  NodeState s;  // no filter states
  CHECK_THROWS_AS(vsm_full_derivative(s, p, 0.0, 0.0), ValidationError);
}

TEST_CASE("parameter validation") {
  ControllerConfig bad = droop_config(Form::full, -0.05, 0.1);
  const auto diags = validate_params(bad, "controllers[2]");
  REQUIRE(!diags.empty());
  CHECK(diags.front().find("controllers[2].r_p") != std::string::npos);
}
