#include <doctest.h>

#include "fairgen/selector.hpp"
#include "support.hpp"

using namespace fairgen;

namespace {

struct World {
  Graph g;
  NoiseSchedule sched;
  Denoiser d;
};

World world(int steps, bool learned, std::uint64_t seed = 1) {
  std::vector<std::size_t> counts{20, 20};
  World w;
  w.g = sbm_generate(counts, {{0.4, 0.05}, {0.05, 0.3}}, std::vector<int>{3, 2}, seed);
  w.sched = NoiseSchedule::linear(steps, estimate_marginals(w.g));
  w.d = learned ? train_denoiser(w.g, w.sched, {60, 0.05}, seed) : Denoiser::oracle(w.g);
  return w;
}

SelectorConfig small_config(int samples, double gamma = 0.5) {
  SelectorConfig c;
  c.samples = samples;
  c.gamma = gamma;
  c.fgw = {1e-9, 100, FGWInit::kBest, 0, 0};
  return c;
}

}  // namespace

TEST_CASE("rho = 0 ties every row and picks T-1") {
  for (int steps : {3, 4, 5}) {
    const World w = world(steps, false);
    const auto t = select_tau(w.d, w.sched, w.g, 0.0, SwitchDistribution::uniform(2), small_config(2), 3);
    REQUIRE(t.rows.size() == static_cast<std::size_t>(steps - 1));
    for (const auto& row : t.rows) {
      CHECK(row.fgw == t.rows[0].fgw);
      CHECK(row.entropy == t.rows[0].entropy);
    }
    CHECK(t.tau_star == steps - 1);
  }
}

TEST_CASE("table matches an independent re-enumeration") {
  const World w = world(3, true);
  const auto dist = SwitchDistribution::uniform(2);
  const auto cfg = small_config(5);
  const std::uint64_t seed = 42;
  const auto t = select_tau(w.d, w.sched, w.g, 0.5, dist, cfg, seed);

  double best = 0;
  int best_tau = -1;
  for (int tau = 2; tau >= 1; --tau) {
    double f = 0, h = 0;
    for (int m = 0; m < 5; ++m) {
      const auto [s, plan] =
          generate_with_switching(w.d, w.sched, w.g.n_nodes(), {0.5, tau, dist, cfg.scope}, selector_sample_seed(seed, m));
      f += fgw_distance(FGWProblem::between(w.g, s, cfg.fgw_alpha), cfg.fgw).objective;
      h += edge_entropy(s).total;
    }
    const double obj = f / 5 - 0.5 * (h / 5);
    if (best_tau < 0 || obj < best) {
      best = obj;
      best_tau = tau;
    }
    const auto& row = t.rows[2 - tau];
    CHECK(row.tau == tau);
    CHECK(row.mean_fgw == doctest::Approx(f / 5).epsilon(1e-14));
    CHECK(row.mean_entropy == doctest::Approx(h / 5).epsilon(1e-14));
  }
  CHECK(t.tau_star == best_tau);
}

TEST_CASE("table invariants") {
  const World w = world(4, true, 2);
  const auto dist = SwitchDistribution::uniform(2);
  const auto t = select_tau(w.d, w.sched, w.g, 0.5, dist, small_config(3), 9);
  CHECK(t.tau_star >= 1);
  CHECK(t.tau_star <= 3);
  for (const auto& row : t.rows) {
    CHECK(std::abs(row.mean_objective - (row.mean_fgw - 0.5 * row.mean_entropy)) <= 1e-12);
    CHECK(row.samples == 3);
    CHECK(row.fgw.size() == 3);
  }
  double best = 1e300;
  for (const auto& row : t.rows) best = std::min(best, row.mean_objective);
  for (const auto& row : t.rows)
    if (row.tau == t.tau_star) CHECK(row.mean_objective == best);

  const auto again = select_tau(w.d, w.sched, w.g, 0.5, dist, small_config(3), 9);
  CHECK(tau_table_to_json(again) == tau_table_to_json(t));
  CHECK(tau_table_csv(again) == tau_table_csv(t));
}

TEST_CASE("larger gamma never selects a lower-entropy row") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const World w = world(4, true, seed);
    const auto t = select_tau(w.d, w.sched, w.g, 0.6, SwitchDistribution::uniform(2), small_config(2, 0.0), seed);
    const auto h_at = [&](const TauObjectiveTable& x) {
      for (const auto& row : x.rows)
        if (row.tau == x.tau_star) return row.mean_entropy;
      return -1.0;
    };
    double previous = h_at(t);
    for (double gamma : {0.25, 0.5, 0.75, 1.0}) {
      const double h = h_at(reweight(t, gamma));
      CHECK(h >= previous);
      previous = h;
    }
    const auto r = reweight(t, 0.7);
    for (const auto& row : r.rows) CHECK(std::abs(row.mean_objective - (row.mean_fgw - 0.7 * row.mean_entropy)) <= 1e-12);
  }
}

TEST_CASE("select_row ties and errors") {
  std::vector<TauRow> rows(3);
  rows[0].tau = 3;
  rows[1].tau = 2;
  rows[2].tau = 1;
  for (auto& r : rows) r.mean_fgw = 1.0;
  CHECK(rows[select_row(rows, 0.5)].tau == 3);
  rows[0].mean_fgw = 2.0;
  CHECK(rows[select_row(rows, 0.5)].tau == 2);
  rows[2].mean_entropy = 1.0;
  CHECK(rows[select_row(rows, 0.5)].tau == 1);
  CHECK_THROWS(select_row({}, 0.5));
  const World w = world(3, false);
  CHECK_THROWS(select_tau(w.d, w.sched, w.g, 0.5, SwitchDistribution::uniform(2), small_config(0), 1));
  CHECK_THROWS(select_tau(w.d, w.sched, w.g, 0.5, SwitchDistribution::uniform(2), small_config(1, 1.5), 1));
}

TEST_CASE("serialization") {
  const World w = world(3, false);
  const auto t = select_tau(w.d, w.sched, w.g, 0.5, SwitchDistribution::uniform(2), small_config(2), 4);
  const std::string csv = tau_table_csv(t);
  CHECK(csv.rfind("tau,mean_fgw,mean_H,mean_objective,stderr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  const auto back = tau_table_from_json(tau_table_to_json(t));
  CHECK(back.tau_star == t.tau_star);
  CHECK(back.gamma == t.gamma);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    CHECK(back.rows[r].fgw == t.rows[r].fgw);
    CHECK(back.rows[r].mean_objective == t.rows[r].mean_objective);
  }
}

TEST_CASE("desk-scale biased SBM selects tau in {1, 2}") {
  std::vector<std::size_t> counts{50, 50};
  const Graph g = sbm_generate(counts, {{0.3, 0.05}, {0.05, 0.3}}, std::vector<int>{4, 4}, 1);
  const auto sched = NoiseSchedule::linear(3, estimate_marginals(g));
  const auto d = train_denoiser(g, sched, {150, 0.05}, 1);
  const auto t = select_tau(d, sched, g, 0.5, SwitchDistribution::uniform(2), small_config(3), 7);
  CHECK((t.tau_star == 1 || t.tau_star == 2));
}
