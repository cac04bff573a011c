#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gridform/errors.hpp"
#include "gridform/scenario_io.hpp"
#include "test_helpers.hpp"

using namespace gridform;
using namespace gridform::testing;
using nlohmann::json;

namespace {

json minimal_doc() {
  return json::parse(R"({
    "network": {"nodes": 2, "omega0": 314.159265, "edges": [{"from": 0, "to": 1, "b": 1.0}]},
    "controllers": {"family": "vsm", "form": "reduced",
                    "m": 2.0, "d": 20.0, "tau_f": 0.1, "r_q": 0.2},
    "simulation": {"dt": 0.001, "t_end": 1.0, "flow_model": "dc-linear"},
    "disturbances": [{"t_start": 0.0, "node": 0, "delta_p": -1.0}]
  })");
}

}  // namespace

TEST_CASE("scenario parsing") {
  SUBCASE("minimal document with controller shorthand") {
    const LoadedScenario loaded = parse_scenario_json(minimal_doc());
    const Scenario& sc = loaded.scenario;
    CHECK(sc.graph.node_count == 2);
    CHECK(sc.graph.omega0 == doctest::Approx(314.159265));
    REQUIRE(sc.controllers.size() == 2);
    CHECK(sc.controllers[0].family() == Family::vsm);
    CHECK(sc.controllers[0].form == Form::reduced);
    CHECK(std::get<VsmParams>(sc.controllers[1].params).damping == 20.0);
    CHECK(sc.flow_model == FlowModel::dc_linear);
    REQUIRE(sc.disturbances.size() == 1);
    CHECK(sc.disturbances[0].delta_p == -1.0);
    CHECK(loaded.warnings.empty());
  }
  SUBCASE("per-node controller array") {
    json doc = minimal_doc();
    doc["controllers"] = json::array(
        {{{"family", "droop"}, {"form", "full"}, {"r_p", 0.05}, {"tau_f", 0.1}, {"r_q", 0.2}},
         {{"family", "matching"}, {"form", "full"}, {"c_dc", 0.08}, {"k_theta", 0.04},
          {"k_dc", 0.8}, {"tau_f", 0.1}, {"r_q", 0.2}}});
    const LoadedScenario loaded = parse_scenario_json(doc);
    CHECK(loaded.scenario.controllers[0].family() == Family::droop);
    CHECK(loaded.scenario.controllers[1].family() == Family::matching);
    CHECK(std::get<MatchingParams>(loaded.scenario.controllers[1].params).v_dc_ref == 1.0);
  }
  SUBCASE("initial state overrides flow into the run") {
    json doc = minimal_doc();
    doc["initial_state"] = json::array({{{"node", 1}, {"vm", 1.05}}});
    doc.erase("disturbances");
    const LoadedScenario loaded = parse_scenario_json(doc);
    const Trajectory traj = run_scenario(loaded.scenario);
    CHECK(traj.states[0][1].vm == 1.05);
    CHECK(traj.states[0][0].vm == 1.0);
    // the perturbed voltage relaxes toward the reference
    CHECK(std::abs(traj.states.back()[1].vm - 1.0) < 0.05);
  }
  SUBCASE("equivalent and outputs sections") {
    json doc = minimal_doc();
    doc["equivalent"] = {{"m", 2.0}, {"d", 20.0}, {"tau_f", 0.1}, {"r_q", 0.2}, {"c_dc", 0.08}};
    doc["outputs"] = {{"trajectory_csv", "out/t.csv"}};
    const LoadedScenario loaded = parse_scenario_json(doc);
    REQUIRE(loaded.equivalent.has_value());
    CHECK(loaded.equivalent->params.inertia == 2.0);
    CHECK(loaded.equivalent->c_dc == 0.08);
    CHECK(loaded.outputs.trajectory_csv == "out/t.csv");
  }
}

TEST_CASE("schema violations name the field") {
  auto expect_error = [](json doc, const char* needle) {
    try {
      parse_scenario_json(doc);
      FAIL_CHECK("expected a ValidationError mentioning: " << needle);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  SUBCASE("nonpositive dt") {
    json doc = minimal_doc();
    doc["simulation"]["dt"] = -0.001;
    expect_error(doc, "simulation.dt");
  }
  SUBCASE("t_end below dt") {
    json doc = minimal_doc();
    doc["simulation"]["t_end"] = 0.0001;
    expect_error(doc, "simulation.t_end");
  }
  SUBCASE("unknown key in strict mode") {
    json doc = minimal_doc();
    doc["simulation"]["dtt"] = 0.001;
    expect_error(doc, "unknown key 'dtt'");
  }
  SUBCASE("bad family") {
    json doc = minimal_doc();
    doc["controllers"]["family"] = "pll";
    expect_error(doc, "family");
  }
  SUBCASE("bad flow model") {
    json doc = minimal_doc();
    doc["simulation"]["flow_model"] = "ac";
    expect_error(doc, "flow_model");
  }
  SUBCASE("negative susceptance") {
    json doc = minimal_doc();
    doc["network"]["edges"][0]["b"] = -2.0;
    expect_error(doc, "nonpositive susceptance");
  }
  SUBCASE("disconnected graph") {
    json doc = minimal_doc();
    doc["network"]["nodes"] = 3;
    doc["controllers"] = json::array(
        {{{"family", "vsm"}, {"form", "reduced"}, {"m", 2.0}, {"d", 20.0}, {"tau_f", 0.1}, {"r_q", 0.2}},
         {{"family", "vsm"}, {"form", "reduced"}, {"m", 2.0}, {"d", 20.0}, {"tau_f", 0.1}, {"r_q", 0.2}},
         {{"family", "vsm"}, {"form", "reduced"}, {"m", 2.0}, {"d", 20.0}, {"tau_f", 0.1}, {"r_q", 0.2}}});
    expect_error(doc, "disconnected");
  }
  SUBCASE("controller count mismatch") {
    json doc = minimal_doc();
    doc["controllers"] = json::array(
        {{{"family", "vsm"}, {"form", "reduced"}, {"m", 2.0}, {"d", 20.0}, {"tau_f", 0.1}, {"r_q", 0.2}}});
    expect_error(doc, "controllers: expected 2");
  }
  SUBCASE("disturbance node out of range") {
    json doc = minimal_doc();
    doc["disturbances"][0]["node"] = 9;
    expect_error(doc, "disturbances[0].node");
  }
  SUBCASE("missing required gain") {
    json doc = minimal_doc();
    doc["controllers"].erase("d");
    expect_error(doc, "controllers.d");
  }
}

TEST_CASE("lenient mode downgrades unknown keys to warnings") {
  json doc = minimal_doc();
  doc["simulation"]["extra"] = 1;
  const LoadedScenario loaded = parse_scenario_json(doc, LoadOptions{false});
  REQUIRE(loaded.warnings.size() == 1);
  CHECK(loaded.warnings[0].find("extra") != std::string::npos);
}

TEST_CASE("file loading distinguishes parse errors") {
  const auto dir = std::filesystem::temp_directory_path() / "gridform_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "broken.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  try {
    load_scenario_file(path);
    FAIL_CHECK("expected a parse error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("parse error") != std::string::npos);
  }
  CHECK_THROWS_AS(load_scenario_file(dir / "missing.json"), ValidationError);
}

TEST_CASE("trajectory CSV") {
  Scenario sc = homogeneous_scenario(path_graph(2), vsm_reduced(2.0, 20.0));
  sc.controllers[1] = matching_config(Form::full, 0.08, 1.0, 0.04, 0.8);
  sc.t_end = 0.01;
  sc.dt = 0.005;
  const Trajectory traj = run_scenario(sc);
  const std::string csv = trajectory_to_csv(traj);
  REQUIRE(csv.rfind("t,node,theta,omega,vm,p,q,vdc\n", 0) == 0);
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);  // header
  size_t rows = 0;
  while (std::getline(ss, line)) {
    ++rows;
    const auto first_comma = line.find(',');
    const std::string node = line.substr(first_comma + 1, line.find(',', first_comma + 1) -
                                                              first_comma - 1);
    if (node == "0")
      CHECK(line.back() == ',');  // vsm node: blank vdc column
    else
      CHECK(line.back() != ',');  // matching node carries its DC voltage
  }
  CHECK(rows == traj.times.size() * 2);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, -1.0 / 3.0, 2e-17, 12345.6789, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("metrics serialization") {
  Scenario sc = homogeneous_scenario(path_graph(2), vsm_reduced(2.0, 20.0));
  sc.t_end = 1.0;
  sc.disturbances.push_back({0.0, 0, 0.1});
  const Metrics m = compute_metrics(run_scenario(sc));
  const json doc = metrics_to_json(m, json{{"dt", 0.001}});
  CHECK(doc.at("nodes").size() == 2);
  CHECK(doc.at("effective_config").at("dt") == 0.001);
  const std::string text = metrics_to_text(m);
  CHECK(text.find("rocof_max[0]") != std::string::npos);
  CHECK(text.find("theta_avg_ramp_rate") != std::string::npos);
}

TEST_CASE("analysis report round-trips through the schema check") {
  const Eigen::MatrixXd lap = build_laplacian(path_graph(2));
  AnalysisReport r;
  r.equivalent = EquivalentParams{1.0, 3.0, 0.1, 0.2, 0.0, 0.0, 1.0};
  r.lambdas = laplacian_spectrum(lap);
  r.modes = closed_form_modes(r.lambdas, 1.0, 3.0);
  r.verification = verify_modes(assemble_larger_laplacian(lap, 1.0, 3.0), r.modes);
  r.tuning = tuning_report(lap, 1.0, 3.0);
  r.voltage_modes = voltage_mode_spectrum(lap, 0.2, 0.1);
  r.p_d = Eigen::Vector2d(1.0, 0.0);
  r.steady_state = predict_disturbance_steady_state(lap, 1.0, 3.0, r.p_d);

  const json doc = analysis_to_json(r, json{{"dt", 0.001}});
  CHECK(validate_analysis_json(doc).empty());
  const json reparsed = json::parse(doc.dump());
  CHECK(validate_analysis_json(reparsed).empty());

  json corrupted = doc;
  corrupted.erase("eta2");
  corrupted["modes"][0]["class"] = "banana";
  const auto diags = validate_analysis_json(corrupted);
  CHECK(diags.size() == 2);

  const std::string text = analysis_to_text(r);
  CHECK(text.find("eta2") != std::string::npos);
  CHECK(text.find("zero-mode") != std::string::npos);
}

TEST_CASE("atomic write leaves no temp file behind") {
  const auto dir = std::filesystem::temp_directory_path() / "gridform_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "report.json";
  atomic_write_file(path, "{}\n");
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content == "{}\n");
  CHECK(!std::filesystem::exists(path.string() + ".tmp"));
}
