#include <doctest.h>

#include <limits>

#include "fairgen/diffusion.hpp"
#include "support.hpp"

using namespace fairgen;

namespace {

ChannelMarginals marginals(double edge, std::vector<std::vector<double>> features, std::vector<double> sensitive) {
  ChannelMarginals m;
  m.edge = edge;
  m.features = std::move(features);
  m.sensitive = std::move(sensitive);
  return m;
}

// Bayes posterior of x_{t-1} written out from the three transition laws.
std::vector<double> posterior_oracle(int noisy, const std::vector<double>& x0, const std::vector<double>& m,
                                     double retain, double abar_prev) {
  const std::size_t k = m.size();
  const double abar = retain * abar_prev;
  auto step = [&](std::size_t to, std::size_t from) { return retain * (to == from) + (1 - retain) * m[to]; };
  auto cum = [&](double a, std::size_t to, std::size_t from) { return a * (to == from) + (1 - a) * m[to]; };
  std::vector<double> out(k, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double norm = cum(abar, static_cast<std::size_t>(noisy), c);
    if (x0[c] == 0.0 || norm == 0.0) continue;
    for (std::size_t prev = 0; prev < k; ++prev)
      out[prev] += x0[c] * step(static_cast<std::size_t>(noisy), prev) * cum(abar_prev, prev, c) / norm;
  }
  for (double v : out) total += v;
  if (total == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(noisy)] = 1.0;
    return out;
  }
  for (double& v : out) v /= total;
  return out;
}

Graph biased_sbm(std::size_t per_class, std::uint64_t seed) {
  std::vector<std::size_t> counts{per_class, per_class};
  return sbm_generate(counts, {{0.3, 0.05}, {0.05, 0.3}}, std::vector<int>{3}, seed);
}

}  // namespace

TEST_CASE("linear schedule") {
  const auto s = NoiseSchedule::linear(3, marginals(0.1, {}, {0.5, 0.5}));
  CHECK(s.steps() == 3);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(3) == doctest::Approx(0.02));
  for (int t = 1; t <= 3; ++t) {
    CHECK(s.alpha_bar(t) <= s.alpha_bar(t - 1));
    CHECK(s.retain(t) > 0.0);
    CHECK(s.retain(t) <= 1.0);
    CHECK(s.alpha_bar(t) == doctest::Approx(s.alpha_bar(t - 1) * s.retain(t)));
  }
  CHECK_THROWS_AS(NoiseSchedule({0.9, 0.9}, marginals(0.1, {}, {1.0})), std::invalid_argument);
  CHECK(schedule_from_json(schedule_to_json(s)).alpha_bar(2) == s.alpha_bar(2));
}

TEST_CASE("forward_noise at t = 0 is the identity") {
  const Graph g = biased_sbm(20, 1);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  CHECK(forward_noise(g, 0, s, 5) == g);
  CHECK_THROWS(forward_noise(g, 4, s, 5));
  CHECK_THROWS(forward_noise(g, -1, s, 5));
}

TEST_CASE("forward_noise with alpha_bar 0 samples the edge marginal") {
  const Graph g = biased_sbm(20, 2);
  const NoiseSchedule s({0.0}, marginals(0.3, {{0.2, 0.5, 0.3}}, {0.5, 0.5}));
  std::vector<double> rates;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Graph x = forward_noise(g, 1, s, seed);
    rates.push_back(static_cast<double>(x.n_edges()) / (40.0 * 39.0 / 2.0));
  }
  const auto ms = fgtest::mean_se(rates);
  CHECK(std::abs(ms.mean - 0.3) < 3 * ms.se);
}

TEST_CASE("forward_noise mixture probability of a binary feature") {
  // x0 = 1 everywhere, m(1) = 0.2, alpha_bar = 0.5 -> P(1) = 0.6.
  const std::size_t n = 500;
  Graph g(n, std::vector<int>(n, 0), 1, std::vector<int>(n, 1), {2});
  const NoiseSchedule s({0.5, 0.08}, marginals(0.0, {{0.8, 0.2}}, {1.0}));
  CHECK(s.alpha_bar(1) == 0.5);
  std::vector<double> hits;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Graph x = forward_noise(g, 1, s, seed);
    for (std::size_t i = 0; i < n; ++i) hits.push_back(x.feature(i, 0) == 1 ? 1.0 : 0.0);
  }
  const auto ms = fgtest::mean_se(hits);
  CHECK(std::abs(ms.mean - 0.6) < 3 * ms.se);
}

TEST_CASE("forward_noise preservation law on the edge channel") {
  const Graph g = biased_sbm(15, 3);
  const NoiseSchedule s({0.7, 0.6, 0.1}, marginals(0.25, {{0.2, 0.5, 0.3}}, {0.5, 0.5}));
  for (int t = 1; t <= 3; ++t) {
    std::vector<double> kept_on, kept_off;
    for (std::uint64_t seed = 0; seed < 150; ++seed) {
      const Graph x = forward_noise(g, t, s, seed);
      double on = 0, on_total = 0, off = 0, off_total = 0;
      for (std::size_t i = 0; i < g.n_nodes(); ++i)
        for (std::size_t j = i + 1; j < g.n_nodes(); ++j) {
          if (g.has_edge(i, j)) {
            on_total += 1;
            on += x.has_edge(i, j);
          } else {
            off_total += 1;
            off += !x.has_edge(i, j);
          }
        }
      kept_on.push_back(on / on_total);
      kept_off.push_back(off / off_total);
    }
    const double a = s.alpha_bar(t);
    const auto p_on = fgtest::mean_se(kept_on), p_off = fgtest::mean_se(kept_off);
    CHECK(std::abs(p_on.mean - (a + (1 - a) * 0.25)) < 3 * p_on.se);
    CHECK(std::abs(p_off.mean - (a + (1 - a) * 0.75)) < 3 * p_off.se);
  }
}

TEST_CASE("reverse_posterior matches Bayes' rule") {
  fairgen::Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + rng.below(4);
    std::vector<double> m(k), x0(k);
    double sm = 0, sx = 0;
    for (std::size_t c = 0; c < k; ++c) {
      m[c] = trial % 7 == 0 && c == 0 ? 0.0 : rng.uniform() + 0.01;
      x0[c] = trial % 5 == 0 && c == 1 ? 0.0 : rng.uniform();
      sm += m[c];
      sx += x0[c];
    }
    for (auto& v : m) v /= sm;
    for (auto& v : x0) v /= sx;
    const double retain = trial % 11 == 0 ? 0.0 : rng.uniform();
    const double abar_prev = trial % 13 == 0 ? 1.0 : rng.uniform();
    const int noisy = static_cast<int>(rng.below(k));
    const auto got = reverse_posterior(noisy, x0, m, retain, abar_prev);
    const auto want = posterior_oracle(noisy, x0, m, retain, abar_prev);
    REQUIRE(got.size() == k);
    for (std::size_t c = 0; c < k; ++c) CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
  }
}

TEST_CASE("oracle with density one on a single class yields the complete graph") {
  DensityMatrix d;
  d.counts_per_class = {6};
  d.density = {{1.0}};
  const Denoiser oracle = Denoiser::oracle(d, {{}}, {1.0});
  const auto s = NoiseSchedule::linear(3, marginals(0.4, {}, {1.0}));
  const Graph g = generate(oracle, s, 6, 3);
  CHECK(g.n_edges() == 15);
}

TEST_CASE("reverse_step checks its input and is deterministic") {
  const Graph g = biased_sbm(10, 4);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  const Denoiser d = Denoiser::oracle(g);
  GenerationState st = sample_prior(d, s, 20, 9);
  CHECK(st.step == 3);
  const auto a = reverse_step(d, st, s, 100);
  const auto b = reverse_step(d, st, s, 100);
  CHECK(a.graph == b.graph);
  CHECK(a.step == 2);
  st.step = 0;
  CHECK_THROWS(reverse_step(d, st, s, 1));
  st.step = 2;
  st.conditioning[0] = 5;
  CHECK_THROWS(reverse_step(d, st, s, 1));
}

TEST_CASE("generate: T = 3 yields a valid graph, a single node has no edges") {
  const Graph g = biased_sbm(20, 5);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  const Denoiser d = Denoiser::oracle(g);
  const Graph x = generate(d, s, 40, 1);
  CHECK_NOTHROW(x.validate());
  CHECK(x.n_nodes() == 40);
  CHECK(generate(d, s, 1, 1).n_edges() == 0);
}

TEST_CASE("oracle chain reproduces the density matrix") {
  DensityMatrix d;
  d.counts_per_class = {50, 50};
  d.density = {{0.3, 0.05}, {0.05, 0.3}};
  const Denoiser oracle = Denoiser::oracle(d, {{}, {}}, {0.5, 0.5});
  const auto s = NoiseSchedule::linear(3, marginals(0.175, {}, {0.5, 0.5}));
  std::vector<std::vector<double>> dens(3);
  std::vector<double> gaps;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Graph g = generate(oracle, s, 100, seed);
    const auto e = edge_density_matrix(g);
    dens[0].push_back(e.density[0][0]);
    dens[1].push_back(e.density[0][1]);
    dens[2].push_back(e.density[1][1]);
    const auto p = partition_edges(g);
    gaps.push_back(static_cast<double>(p.n_interior) - static_cast<double>(p.n_exterior));
  }
  const double want[3] = {0.3, 0.05, 0.3};
  for (int i = 0; i < 3; ++i) {
    const auto ms = fgtest::mean_se(dens[i]);
    CHECK(std::abs(ms.mean - want[i]) < 3 * ms.se);
  }
  // Classes are drawn from the prior: N0 ~ Bin(100, 1/2).
  // E[interior] = 2 * E[N0 (N0 - 1) / 2] * 0.3, E[exterior] = E[N0 (100 - N0)] * 0.05.
  const double e_pairs_within = (25.0 + 2500.0 - 50.0) / 2.0;
  const double e_pairs_across = 100.0 * 50.0 - (25.0 + 2500.0);
  const double want_gap = 2 * e_pairs_within * 0.3 - e_pairs_across * 0.05;
  const auto ms = fgtest::mean_se(gaps);
  CHECK(std::abs(ms.mean - want_gap) < 3 * ms.se);
}

TEST_CASE("oracle chain reproduces random density matrices for K = 2..4") {
  fairgen::Rng rng(21);
  for (int inst = 0; inst < 5; ++inst) {
    const int k = 2 + inst % 3;
    DensityMatrix d;
    d.counts_per_class.assign(static_cast<std::size_t>(k), 20);
    d.density.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k)));
    for (int a = 0; a < k; ++a)
      for (int b = a; b < k; ++b) d.density[a][b] = d.density[b][a] = 0.05 + 0.5 * rng.uniform();
    const Denoiser oracle = Denoiser::oracle(d, std::vector<std::vector<std::vector<double>>>(k),
                                             std::vector<double>(static_cast<std::size_t>(k), 1.0 / k));
    const auto s = NoiseSchedule::linear(3, marginals(0.2, {}, std::vector<double>(static_cast<std::size_t>(k), 1.0 / k)));
    std::vector<std::vector<std::vector<double>>> dens(k, std::vector<std::vector<double>>(k));
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const Graph g = generate(oracle, s, 20 * static_cast<std::size_t>(k), 500 * inst + seed);
      CHECK_NOTHROW(g.validate());
      const auto e = edge_density_matrix(g);
      for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) dens[a][b].push_back(e.density[a][b]);
    }
    for (int a = 0; a < k; ++a)
      for (int b = a; b < k; ++b) {
        const auto ms = fgtest::mean_se(dens[a][b]);
        CHECK(std::abs(ms.mean - d.density[a][b]) < 3 * ms.se);
      }
  }
}

TEST_CASE("oracle edge law is invariant under relabelling nodes") {
  const Graph g = biased_sbm(12, 6);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  const Denoiser d = Denoiser::oracle(g);
  const std::size_t n = g.n_nodes();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  fairgen::Rng rng(3);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

  GenerationState a;
  a.step = 1;
  a.graph = g;
  a.conditioning.assign(g.sensitive().begin(), g.sensitive().end());
  GenerationState b = a;
  for (std::size_t i = 0; i < n; ++i) b.conditioning[perm[i]] = a.conditioning[i];
  std::vector<int> sb(n);
  for (std::size_t i = 0; i < n; ++i) sb[perm[i]] = g.sensitive(i);
  b.graph.set_sensitive(sb);

  std::vector<std::vector<double>> ra(3), rb(3);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (auto [state, out] : {std::pair{&a, &ra}, std::pair{&b, &rb}}) {
      const auto e = edge_density_matrix(reverse_step(d, *state, s, seed).graph);
      (*out)[0].push_back(e.density[0][0]);
      (*out)[1].push_back(e.density[0][1]);
      (*out)[2].push_back(e.density[1][1]);
    }
  }
  for (int i = 0; i < 3; ++i) {
    const auto x = fgtest::mean_se(ra[i]), y = fgtest::mean_se(rb[i]);
    CHECK(std::abs(x.mean - y.mean) < 3 * std::sqrt(x.se * x.se + y.se * y.se));
  }
}

TEST_CASE("learned denoiser on an edgeless graph predicts almost no edges") {
  std::vector<std::size_t> counts{15, 15};
  const Graph g = sbm_generate(counts, {{0, 0}, {0, 0}}, std::vector<int>{2}, 1);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  const Denoiser d = train_denoiser(g, s, {}, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      CHECK(d.prior_edge_probability(a, b) <= 0.05);
      CHECK(d.edge_probability(a, b, 0, 1, s) <= 0.05);
    }
}

TEST_CASE("learned denoiser recovers SBM densities") {
  const Graph g = biased_sbm(100, 7);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  const Denoiser d = train_denoiser(g, s, {}, 8);
  const auto dm = edge_density_matrix(g);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) CHECK(std::abs(d.prior_edge_probability(a, b) - dm.density[a][b]) <= 0.05);
  CHECK(d.edge_evidence_weight() > 0.0);
}

TEST_CASE("learned denoiser training is deterministic and round-trips through JSON") {
  const Graph g = biased_sbm(20, 9);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  const DenoiserHyper h{50, 0.05};
  const Denoiser a = train_denoiser(g, s, h, 3);
  CHECK(a == train_denoiser(g, s, h, 3));
  CHECK(denoiser_from_json(denoiser_to_json(a)) == a);
  const Denoiser o = Denoiser::oracle(g);
  CHECK(denoiser_from_json(denoiser_to_json(o)) == o);
  CHECK_THROWS(train_denoiser(g, s, {0, 0.05}, 3));
  CHECK_THROWS_AS(train_denoiser(g, s, {10, std::numeric_limits<double>::quiet_NaN()}, 3), std::invalid_argument);
  // A divergent step size surfaces as a non-finite loss.
  CHECK_THROWS_AS(train_denoiser(g, s, {10, std::numeric_limits<double>::infinity()}, 3), std::runtime_error);
}

TEST_CASE("generation never produces self loops or asymmetric adjacency") {
  const Graph g = biased_sbm(15, 10);
  const auto s = NoiseSchedule::linear(3, estimate_marginals(g));
  const Denoiser learned = train_denoiser(g, s, {60, 0.05}, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK_NOTHROW(generate(learned, s, 30, seed).validate());
    CHECK_NOTHROW(generate(Denoiser::oracle(g), s, 30, seed).validate());
  }
}
