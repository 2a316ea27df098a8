#include <doctest.h>

#include <set>

#include "fairgen/switching.hpp"
#include "support.hpp"

using namespace fairgen;

namespace {

DensityMatrix density_of(std::vector<std::size_t> counts, ClassMatrix d) {
  DensityMatrix m;
  m.counts_per_class = std::move(counts);
  m.density = std::move(d);
  return m;
}

// Expected interior / exterior edge counts after switching, summed pair by
// pair over the class layout (interior = same ORIGINAL class).
std::pair<double, double> pairwise_expectation(const std::vector<std::size_t>& counts, const ClassMatrix& d,
                                               const SwitchDistribution& dist, double rho) {
  const std::size_t k = counts.size();
  auto law = [&](std::size_t from, std::size_t to) {
    return (1 - rho) * (from == to) + rho * dist.conditional[from][to];
  };
  auto pair_mean = [&](std::size_t a, std::size_t b) {
    double e = 0;
    for (std::size_t x = 0; x < k; ++x)
      for (std::size_t y = 0; y < k; ++y) e += law(a, x) * law(b, y) * d[x][y];
    return e;
  };
  double interior = 0, exterior = 0;
  for (std::size_t a = 0; a < k; ++a) {
    const double n = static_cast<double>(counts[a]);
    interior += n * (n - 1) / 2 * pair_mean(a, a);
    for (std::size_t b = a + 1; b < k; ++b) exterior += n * static_cast<double>(counts[b]) * pair_mean(a, b);
  }
  return {interior, exterior};
}

// Monte Carlo of switching followed by Bernoulli regeneration on the new
// classes, counted against the original classes.
std::pair<fgtest::MeanSe, fgtest::MeanSe> simulate(const std::vector<std::size_t>& counts, const ClassMatrix& d,
                                                   const SwitchDistribution& dist, double rho, int trials,
                                                   std::uint64_t seed) {
  std::vector<int> s;
  for (std::size_t l = 0; l < counts.size(); ++l) s.insert(s.end(), counts[l], static_cast<int>(l));
  std::vector<double> in, ex;
  fairgen::Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const auto set = sample_switch_set(s.size(), rho, rng.next());
    const auto z = sample_new_attributes(s, set, dist, rng.next());
    double ni = 0, ne = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j)
        if (rng.bernoulli(d[z[i]][z[j]])) (s[i] == s[j] ? ni : ne) += 1;
    in.push_back(ni);
    ex.push_back(ne);
  }
  return {fgtest::mean_se(in), fgtest::mean_se(ex)};
}

}  // namespace

TEST_CASE("switch distributions") {
  const auto u = SwitchDistribution::uniform(4);
  for (int l = 0; l < 4; ++l) {
    double sum = 0;
    for (int k = 0; k < 4; ++k) {
      CHECK(u.conditional[l][k] == (l == k ? 0.0 : doctest::Approx(1.0 / 3.0)));
      sum += u.conditional[l][k];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  const std::vector<double> m{0.5, 0.3, 0.2};
  const auto p = SwitchDistribution::prior(m);
  CHECK(p.conditional[0][0] == 0.0);
  CHECK(p.conditional[0][1] == doctest::Approx(0.6));
  CHECK(p.conditional[0][2] == doctest::Approx(0.4));
  CHECK(p.conditional[2][0] == doctest::Approx(0.625));
  const std::vector<double> degenerate{1.0, 0.0, 0.0};
  const auto d = SwitchDistribution::prior(degenerate);
  CHECK(d.conditional[0][1] == doctest::Approx(0.5));
  CHECK_THROWS(SwitchDistribution::uniform(1));
  CHECK(switch_kind_from_string(to_string(SwitchKind::kPrior)) == SwitchKind::kPrior);
  CHECK(switch_scope_from_string(to_string(SwitchScope::kEdgesOnly)) == SwitchScope::kEdgesOnly);
  CHECK_THROWS(switch_kind_from_string("other"));
}

TEST_CASE("homogeneous densities make switching irrelevant") {
  std::vector<std::size_t> counts{30, 20, 10};
  const auto m = switch_coefficients(counts, density_of(counts, ClassMatrix(3, std::vector<double>(3, 0.2))),
                                     SwitchDistribution::uniform(3));
  CHECK(m.r2 == doctest::Approx(0.0));
  CHECK(m.r1 == doctest::Approx(0.0));
}

TEST_CASE("rho = 0 returns the base counts exactly") {
  const Graph g = fgtest::random_graph(40, 3, 0.2, {}, 4);
  const auto m = switch_coefficients(g, SwitchDistribution::uniform(3));
  const auto p = partition_edges(g);
  CHECK(m.expected_interior(0.0) == static_cast<double>(p.n_interior));
  CHECK(m.expected_exterior(0.0) == static_cast<double>(p.n_exterior));
  CHECK(m.r0 == static_cast<double>(p.n_exterior) - static_cast<double>(p.n_interior));
  CHECK_THROWS(switch_coefficients(fgtest::random_graph(10, 1, 0.5, {}, 1), SwitchDistribution::uniform(2)));
}

TEST_CASE("coefficients equal the pair-by-pair expectation") {
  fairgen::Rng rng(8);
  for (int inst = 0; inst < 40; ++inst) {
    const std::size_t k = 2 + rng.below(3);
    std::vector<std::size_t> counts(k);
    for (auto& c : counts) c = 5 + rng.below(40);
    ClassMatrix d(k, std::vector<double>(k));
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a; b < k; ++b) d[a][b] = d[b][a] = rng.uniform();
    std::vector<double> marg(k);
    for (auto& v : marg) v = rng.uniform() + 0.05;
    const auto dist = inst % 2 ? SwitchDistribution::uniform(static_cast<int>(k)) : SwitchDistribution::prior(marg);
    const auto m = switch_coefficients(counts, density_of(counts, d), dist);
    for (double rho : {0.0, 0.25, 0.5, 0.8, 1.0}) {
      const auto [in, ex] = pairwise_expectation(counts, d, dist, rho);
      CHECK(m.expected_interior(rho) == doctest::Approx(in).epsilon(1e-10));
      CHECK(m.expected_exterior(rho) == doctest::Approx(ex).epsilon(1e-10));
      CHECK(m.imbalance(rho) == doctest::Approx(ex - in).epsilon(1e-9));
    }
  }
}

TEST_CASE("squared pair counting gives the closed-form linear interior term") {
  // With N^2/2 interior pairs, the linear interior coefficient is
  // sum_l sum_{k != l} p(k|l) (N^l)^2 (D[l][k] - D[l][l]).
  std::vector<std::size_t> counts{30, 50, 20};
  const ClassMatrix d{{0.4, 0.1, 0.05}, {0.1, 0.3, 0.2}, {0.05, 0.2, 0.5}};
  const std::vector<double> marg{0.3, 0.5, 0.2};
  const auto dist = SwitchDistribution::prior(marg);
  const auto m = switch_coefficients(counts, density_of(counts, d), dist, PairCounting::kSquared);
  double a = 0;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t k = 0; k < 3; ++k)
      if (k != l) a += dist.conditional[l][k] * double(counts[l] * counts[l]) * (d[l][k] - d[l][l]);
  CHECK(m.r1_int == doctest::Approx(a));
}

TEST_CASE("coefficients agree with a switching Monte Carlo (K = 2, 50/50)") {
  std::vector<std::size_t> counts{50, 50};
  const ClassMatrix d{{0.3, 0.05}, {0.05, 0.3}};
  const auto dist = SwitchDistribution::uniform(2);
  const auto m = switch_coefficients(counts, density_of(counts, d), dist);
  for (int r = 1; r <= 9; ++r) {
    const double rho = r / 10.0;
    const auto [in, ex] = simulate(counts, d, dist, rho, 500, 100 + r);
    CHECK(std::abs(in.mean - m.expected_interior(rho)) < 3 * in.se);
    CHECK(std::abs(ex.mean - m.expected_exterior(rho)) < 3 * ex.se);
  }
}

TEST_CASE("optimal_rho examples") {
  ImbalanceModel m;
  CHECK(optimal_rho(m) == 0.0);
  m.r2 = 0;
  m.r1 = -1;
  m.r0 = 5;
  CHECK(optimal_rho(m) == 1.0);
  m.r2 = 2;
  m.r1 = -2;
  m.r0 = 3;
  CHECK(optimal_rho(m) == 0.5);
  m.r2 = 0;
  m.r1 = 0;
  m.r0 = -4;
  std::string warning;
  CHECK(optimal_rho(m, &warning) == 0.0);
  CHECK_FALSE(warning.empty());
  // A flat objective is a tie everywhere: least intervention.
  m.r0 = 0;
  CHECK(optimal_rho(m) == 0.0);
}

TEST_CASE("optimal_rho beats a grid and never worsens the signed imbalance") {
  fairgen::Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    ImbalanceModel m;
    m.r2 = rng.normal() * 10;
    m.r1 = rng.normal() * 10;
    m.r0 = rng.normal() * 10;
    const double rho = optimal_rho(m);
    REQUIRE(rho >= 0.0);
    REQUIRE(rho <= 1.0);
    for (int k = 0; k <= 200; ++k) REQUIRE(m.objective(rho) <= m.objective(k / 200.0) + 1e-12);
    CHECK(m.objective(rho) <= m.objective(0.0));
  }
}

TEST_CASE("sample_switch_set") {
  CHECK(sample_switch_set(50, 0.0, 1).empty());
  CHECK(sample_switch_set(50, 1.0, 1).size() == 50);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto n = static_cast<double>(sample_switch_set(1000, 0.3, seed).size());
    CHECK(std::abs(n - 300.0) <= 3 * std::sqrt(1000 * 0.3 * 0.7));
  }
  const auto small = sample_switch_set(200, 0.2, 9), big = sample_switch_set(200, 0.6, 9);
  CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
  CHECK(std::is_sorted(big.begin(), big.end()));
}

TEST_CASE("sample_new_attributes") {
  const std::vector<int> s{0, 1, 1, 0, 1};
  CHECK(sample_new_attributes(s, {}, SwitchDistribution::uniform(2), 1) == s);
  const std::vector<std::size_t> all{0, 1, 2, 3, 4};
  const auto flipped = sample_new_attributes(s, all, SwitchDistribution::uniform(2), 1);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(flipped[i] == 1 - s[i]);

  std::vector<int> zeros(3000, 0);
  zeros[0] = 2;  // K = 3 needs class 2 to exist
  std::vector<std::size_t> idx(2999);
  std::iota(idx.begin(), idx.end(), 1);
  const auto z = sample_new_attributes(zeros, idx, SwitchDistribution::uniform(3), 4);
  double ones = 0;
  for (std::size_t i : idx) {
    REQUIRE(z[i] != 0);
    ones += z[i] == 1;
  }
  const double frac = ones / 2999.0;
  CHECK(std::abs(frac - 0.5) < 3 * std::sqrt(0.25 / 2999.0));

  const std::vector<std::size_t> one{0};
  CHECK_THROWS(sample_new_attributes(std::vector<int>{0, 0}, one, SwitchDistribution{SwitchKind::kUniform, {{0.0}}}, 1));
}

TEST_CASE("new attributes differ from the original exactly on the switched set") {
  const std::vector<double> marg{0.2, 0.3, 0.5};
  const auto dist = SwitchDistribution::prior(marg);
  fairgen::Rng rng(2);
  std::vector<int> s(300);
  for (auto& v : s) v = static_cast<int>(rng.below(3));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto set = sample_switch_set(s.size(), 0.4, seed);
    const auto z = sample_new_attributes(s, set, dist, seed + 1);
    std::set<std::size_t> in(set.begin(), set.end());
    for (std::size_t i = 0; i < s.size(); ++i) REQUIRE((z[i] != s[i]) == (in.count(i) == 1));
  }
}

namespace {

struct World {
  Graph g;
  NoiseSchedule sched;
  Denoiser oracle;
};

World small_world() {
  std::vector<std::size_t> counts{20, 20};
  World w;
  w.g = sbm_generate(counts, {{0.4, 0.1}, {0.1, 0.2}}, std::vector<int>{3}, 2);
  w.sched = NoiseSchedule::linear(3, estimate_marginals(w.g));
  w.oracle = Denoiser::oracle(w.g);
  return w;
}

}  // namespace

TEST_CASE("generate_with_switching at rho = 0 equals generate") {
  const World w = small_world();
  for (int tau : {1, 2}) {
    const auto [g, plan] = generate_with_switching(w.oracle, w.sched, 40, {0.0, tau, SwitchDistribution::uniform(2)}, 17);
    CHECK(g == generate(w.oracle, w.sched, 40, 17));
    CHECK(plan.switched.empty());
  }
}

TEST_CASE("generate_with_switching rejects tau outside [1, T-1]") {
  const World w = small_world();
  CHECK_THROWS(generate_with_switching(w.oracle, w.sched, 40, {0.5, 3, SwitchDistribution::uniform(2)}, 1));
  CHECK_THROWS(generate_with_switching(w.oracle, w.sched, 40, {0.5, 0, SwitchDistribution::uniform(2)}, 1));
}

TEST_CASE("generate_with_switching is deterministic and reports a consistent plan") {
  const World w = small_world();
  const SwitchRequest req{0.4, 2, SwitchDistribution::uniform(2)};
  const auto a = generate_with_switching(w.oracle, w.sched, 40, req, 5);
  const auto b = generate_with_switching(w.oracle, w.sched, 40, req, 5);
  CHECK(a.first == b.first);
  CHECK(a.second.new_attrs == b.second.new_attrs);
  const auto& plan = a.second;
  std::size_t total = 0;
  for (const auto& row : plan.n_switched_by_pair)
    for (auto c : row) total += c;
  CHECK(total == plan.switched.size());
  std::set<std::size_t> in(plan.switched.begin(), plan.switched.end());
  for (std::size_t i = 0; i < 40; ++i) CHECK((plan.new_attrs[i] != a.first.sensitive(i)) == (in.count(i) == 1));
  const auto back = switch_plan_from_json(switch_plan_to_json(plan));
  CHECK(back.switched == plan.switched);
  CHECK(back.new_attrs == plan.new_attrs);
  CHECK(back.n_switched_by_pair == plan.n_switched_by_pair);
}

TEST_CASE("full switch with the oracle regenerates D on flipped attributes") {
  DensityMatrix d = density_of({30, 30}, {{0.4, 0.1}, {0.1, 0.2}});
  const Denoiser oracle = Denoiser::oracle(d, {{}, {}}, {0.5, 0.5});
  ChannelMarginals marg;
  marg.edge = 0.2;
  marg.sensitive = {0.5, 0.5};
  const auto sched = NoiseSchedule::linear(3, marg);
  std::vector<std::vector<double>> dens(3);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto [g, plan] = generate_with_switching(oracle, sched, 60, {1.0, 2, SwitchDistribution::uniform(2)}, seed);
    const auto e = edge_density_matrix(g);  // original attributes
    dens[0].push_back(e.density[0][0]);
    dens[1].push_back(e.density[0][1]);
    dens[2].push_back(e.density[1][1]);
  }
  // Flipping both classes swaps the two diagonal densities.
  const double want[3] = {0.2, 0.1, 0.4};
  for (int i = 0; i < 3; ++i) {
    const auto ms = fgtest::mean_se(dens[i]);
    CHECK(std::abs(ms.mean - want[i]) < 3 * ms.se);
  }
}

TEST_CASE("edges-only scope keeps features on the original attributes") {
  const World w = small_world();
  const SwitchRequest all{1.0, 2, SwitchDistribution::uniform(2), SwitchScope::kAllChannels};
  SwitchRequest edges = all;
  edges.scope = SwitchScope::kEdgesOnly;
  const auto a = generate_with_switching(w.oracle, w.sched, 40, all, 3);
  const auto b = generate_with_switching(w.oracle, w.sched, 40, edges, 3);
  CHECK(a.first.sensitive().size() == b.first.sensitive().size());
  CHECK(std::equal(a.first.sensitive().begin(), a.first.sensitive().end(), b.first.sensitive().begin()));
  CHECK_FALSE(a.first == b.first);
}
