#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fairgen/pipeline.hpp"

using namespace fairgen;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_json() {
  return nlohmann::json::parse(R"({
    "seed": 3,
    "samples": 2,
    "world": {"sbm": {"counts": [20, 20], "density": [[0.4, 0.05], [0.05, 0.4]], "features": [4, 4], "seed": 2}},
    "denoiser": {"epochs": 100},
    "switch": {"samples": 2},
    "eval": {"epochs": 40, "dim": 8}
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fairgen_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = run_config_from_json(small_json());
  CHECK(c.seed == 3);
  CHECK(c.samples == 2);
  REQUIRE(c.sbm.has_value());
  CHECK(c.sbm->counts == std::vector<std::size_t>{20, 20});
  CHECK(c.denoiser_hyper.epochs == 100);
  CHECK(c.eval.predictor.dim == 8);
  CHECK(c.scope == SwitchScope::kEdgesOnly);
  CHECK_FALSE(c.rho.has_value());

  const RunConfig back = run_config_from_json(run_config_to_json(c));
  CHECK(run_config_to_json(back) == run_config_to_json(c));

  auto bad = small_json();
  bad["typo"] = 1;
  CHECK_THROWS(run_config_from_json(bad));
  bad = small_json();
  bad["switch"]["rho"] = 1.5;
  CHECK_THROWS(run_config_from_json(bad));
  bad = small_json();
  bad["switch"]["tau"] = 3;  // T = 3
  CHECK_THROWS(run_config_from_json(bad));
  bad = small_json();
  bad["world"]["files"] = {{"edges", "a"}, {"attributes", "b"}};
  CHECK_THROWS(run_config_from_json(bad));
  bad = small_json();
  bad["schedule"] = {{"steps", 1}};
  CHECK_THROWS(run_config_from_json(bad));
  bad = small_json();
  bad["eval"]["train_fraction"] = 0.99;
  bad["eval"]["validation_fraction"] = 0.01;
  CHECK_THROWS(run_config_from_json(bad));
}

TEST_CASE("staged pieces") {
  const RunConfig c = run_config_from_json(small_json());
  const Graph g = load_world(c);
  CHECK(g.n_nodes() == 40);
  CHECK(load_world(c) == g);
  const auto split = make_split(g, c);
  const auto back = split_from_json(g, split_to_json(split));
  CHECK(back.train_graph == split.train_graph);
  CHECK(back.test.pairs == split.test.pairs);
  CHECK(back.validation.pairs == split.validation.pairs);

  const auto r = estimate_rho(split.train_graph, make_distribution(split.train_graph, SwitchKind::kUniform),
                              PairCounting::kExact);
  CHECK(r.rho >= 0.0);
  CHECK(r.rho <= 1.0);
  const auto j = rho_estimate_to_json(r);
  for (const char* key : {"rho", "R2", "R1", "R0", "warning", "counts", "density"}) CHECK(j.contains(key));
  CHECK(sample_seed(1, 0) != sample_seed(1, 1));
  CHECK(sample_seed(1, 0) != predictor_seed(1, 0));
}

TEST_CASE("pipeline outputs, recomputation and determinism") {
  const RunConfig c = run_config_from_json(small_json());
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const auto result = run_pipeline(c, a);
  run_pipeline(c, b);

  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  for (const char* f : {"graph.json", "split.json", "denoiser.json", "rho.json", "tau_table.csv", "pareto.svg"})
    CHECK(fs::exists(a / f));
  CHECK_FALSE(fs::exists(a / "partial_state.json"));

  REQUIRE(result.switched.size() == 2);
  REQUIRE(result.control.size() == 2);
  CHECK(result.tau_used >= 1);
  CHECK(result.tau_used <= 2);
  const std::string csv = slurp(a / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 + 2 + 2);
  CHECK(csv.rfind("run_id,rho,tau,dist,seed,auc,delta_sp,delta_eo,H,fgw,w1_degree,w1_clustering\n", 0) == 0);

  // Every row can be rebuilt from the persisted graphs and predictors.
  const Graph original = load_graph_json(a / "graph.json");
  const EdgeSplit split = split_from_json(original, read_json(a / "split.json"));
  const SampleSet set = read_samples(a);
  CHECK(set.tau == result.tau_used);
  CHECK(set.rho == result.rho_used);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto check_row = [&](const ReportRow& row, const Graph& sample) {
      const auto p = link_predictor_from_json(read_json(a / "predictors" / (row.run_id + ".json")));
      const auto m = score_sample(p, sample, split.train_graph, original, split, c);
      CHECK(m.auc == row.metrics.auc);
      CHECK(m.delta_sp == row.metrics.delta_sp);
      CHECK(m.delta_eo == row.metrics.delta_eo);
      CHECK(m.entropy == row.metrics.entropy);
      CHECK(m.fgw == row.metrics.fgw);
      CHECK(m.w1_degree == row.metrics.w1_degree);
      CHECK(m.w1_clustering == row.metrics.w1_clustering);
    };
    check_row(result.switched[k], set.switched[k]);
    check_row(result.control[k], set.control[k]);
    CHECK(result.control[k].rho == 0.0);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("rho override of zero makes the switched samples equal the controls") {
  auto j = small_json();
  j["switch"]["rho"] = 0.0;
  j["switch"]["tau"] = 1;
  const RunConfig c = run_config_from_json(j);
  const fs::path out = scratch("rho0");
  const auto result = run_pipeline(c, out);
  CHECK(result.rho_used == 0.0);
  CHECK_FALSE(fs::exists(out / "tau_table.csv"));
  const SampleSet set = read_samples(out);
  for (std::size_t k = 0; k < set.switched.size(); ++k) {
    CHECK(set.switched[k] == set.control[k]);
    CHECK(result.switched[k].metrics.auc == result.control[k].metrics.auc);
    CHECK(result.switched[k].metrics.delta_sp == result.control[k].metrics.delta_sp);
  }
  fs::remove_all(out);
}

TEST_CASE("a failing stage leaves partial state") {
  auto j = small_json();
  j["world"] = {{"files", {{"edges", "/nonexistent/edges.txt"}, {"attributes", "/nonexistent/attrs.txt"}}}};
  const RunConfig c = run_config_from_json(j);
  const fs::path out = scratch("broken");
  try {
    run_pipeline(c, out);
    FAIL("expected a PipelineError");
  } catch (const PipelineError& e) {
    CHECK(e.stage() == "load");
    CHECK(std::string(e.what()).rfind("load", 0) == 0);
  }
  REQUIRE(fs::exists(out / "partial_state.json"));
  const auto partial = read_json(out / "partial_state.json");
  CHECK(partial.at("stage") == "load");
  CHECK(partial.at("completed_stages").empty());
  CHECK_FALSE(partial.at("error").get<std::string>().empty());
  fs::remove_all(out);
}
