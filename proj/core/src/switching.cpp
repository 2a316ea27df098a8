#include "fairgen/switching.hpp"

#include <cmath>
#include <stdexcept>

#include "fairgen/random.hpp"

namespace fairgen {

namespace {

// Stream labels kept apart from the per-step labels 0..T used by generate().
constexpr std::uint64_t kSwitchSetStream = 0x5157'0001;
constexpr std::uint64_t kNewAttrStream = 0x5157'0002;

double dot_row(const ClassMatrix& d, std::size_t l, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) s += d[l][k] * q[k];
  return s;
}

double quad(const ClassMatrix& d, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) s += a[l] * dot_row(d, l, b);
  return s;
}

}  // namespace

SwitchDistribution SwitchDistribution::uniform(int n_classes) {
  if (n_classes < 2) throw std::invalid_argument("switch distribution: need K >= 2");
  const auto k = static_cast<std::size_t>(n_classes);
  SwitchDistribution d;
  d.kind = SwitchKind::kUniform;
  d.conditional.assign(k, std::vector<double>(k, 1.0 / static_cast<double>(k - 1)));
  for (std::size_t l = 0; l < k; ++l) d.conditional[l][l] = 0.0;
  return d;
}

SwitchDistribution SwitchDistribution::prior(std::span<const double> class_marginals) {
  const std::size_t k = class_marginals.size();
  if (k < 2) throw std::invalid_argument("switch distribution: need K >= 2");
  SwitchDistribution d = uniform(static_cast<int>(k));
  d.kind = SwitchKind::kPrior;
  for (std::size_t l = 0; l < k; ++l) {
    double rest = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != l) {
        if (!(class_marginals[j] >= 0.0)) throw std::invalid_argument("switch distribution: negative marginal");
        rest += class_marginals[j];
      }
    if (rest <= 0.0) continue;
    for (std::size_t j = 0; j < k; ++j) d.conditional[l][j] = j == l ? 0.0 : class_marginals[j] / rest;
  }
  return d;
}

std::string to_string(SwitchKind kind) { return kind == SwitchKind::kUniform ? "uniform" : "prior"; }

SwitchKind switch_kind_from_string(const std::string& name) {
  if (name == "uniform") return SwitchKind::kUniform;
  if (name == "prior") return SwitchKind::kPrior;
  throw std::invalid_argument("unknown switch distribution '" + name + "' (expected uniform|prior)");
}

std::string to_string(SwitchScope scope) { return scope == SwitchScope::kAllChannels ? "all" : "edges"; }

SwitchScope switch_scope_from_string(const std::string& name) {
  if (name == "all") return SwitchScope::kAllChannels;
  if (name == "edges") return SwitchScope::kEdgesOnly;
  throw std::invalid_argument("unknown switch scope '" + name + "' (expected all|edges)");
}

double ImbalanceModel::objective(double rho) const {
  const double s = r0 > 0.0 ? 1.0 : (r0 < 0.0 ? -1.0 : 0.0);
  return s * imbalance(rho);
}

ImbalanceModel switch_coefficients(std::span<const std::size_t> counts, const DensityMatrix& density,
                                   const SwitchDistribution& dist, PairCounting counting) {
  const std::size_t k = counts.size();
  if (k < 2) throw std::invalid_argument("switch_coefficients: K = 1 leaves no class to switch to");
  if (density.density.size() != k || static_cast<std::size_t>(dist.n_classes()) != k)
    throw std::invalid_argument("switch_coefficients: class dimension mismatch");
  const ClassMatrix& d = density.density;

  // q_l(rho) = (1 - rho) e_l + rho p_l is the law of the conditioning class
  // of a node of original class l; expected edges between two such nodes are
  // q_l^T D q_m, a quadratic in rho.
  ImbalanceModel m;
  m.counts.assign(counts.begin(), counts.end());
  m.density = d;
  for (std::size_t l = 0; l < k; ++l) {
    const double n = static_cast<double>(counts[l]);
    const double pairs = counting == PairCounting::kExact ? n * (n - 1.0) / 2.0 : n * n / 2.0;
    const auto& p = dist.conditional[l];
    const double a = dot_row(d, l, p);
    const double b = quad(d, p, p);
    m.base_int += pairs * d[l][l];
    m.r1_int += pairs * 2.0 * (a - d[l][l]);
    m.r2_int += pairs * (d[l][l] - 2.0 * a + b);
  }
  for (std::size_t l1 = 0; l1 < k; ++l1)
    for (std::size_t l2 = l1 + 1; l2 < k; ++l2) {
      const double pairs = static_cast<double>(counts[l1]) * static_cast<double>(counts[l2]);
      const auto& p1 = dist.conditional[l1];
      const auto& p2 = dist.conditional[l2];
      const double base = d[l1][l2];
      const double a = dot_row(d, l1, p2) + dot_row(d, l2, p1);
      const double b = quad(d, p1, p2);
      m.base_ext += pairs * base;
      m.r1_ext += pairs * (a - 2.0 * base);
      m.r2_ext += pairs * (base - a + b);
    }
  m.r2 = m.r2_ext - m.r2_int;
  m.r1 = m.r1_ext - m.r1_int;
  m.r0 = m.base_ext - m.base_int;
  return m;
}

ImbalanceModel switch_coefficients(const Graph& g, const SwitchDistribution& dist, PairCounting counting) {
  const auto density = edge_density_matrix(g);
  ImbalanceModel m = switch_coefficients(density.counts_per_class, density, dist, counting);
  if (counting == PairCounting::kExact) {
    const auto part = partition_edges(g);
    m.base_int = static_cast<double>(part.n_interior);
    m.base_ext = static_cast<double>(part.n_exterior);
    m.r0 = m.base_ext - m.base_int;
  }
  return m;
}

double optimal_rho(const ImbalanceModel& model, std::string* warning) {
  if (model.r0 == 0.0) return 0.0;
  if (model.r2 == 0.0 && model.r1 == 0.0) {
    if (warning) *warning = "switching cannot change the expected imbalance; using rho = 0";
    return 0.0;
  }
  double best = 0.0;
  double best_value = model.objective(0.0);
  auto consider = [&](double rho) {
    const double v = model.objective(rho);
    if (v < best_value || (v == best_value && rho < best)) {
      best = rho;
      best_value = v;
    }
  };
  if (model.r2 != 0.0) {
    const double vertex = -model.r1 / (2.0 * model.r2);
    if (vertex > 0.0 && vertex < 1.0) consider(vertex);
  }
  consider(1.0);
  return best;
}

std::vector<std::size_t> sample_switch_set(std::size_t n_nodes, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("sample_switch_set: rho must lie in [0,1]");
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_nodes; ++i)
    if (rng.uniform() < rho) out.push_back(i);
  return out;
}

std::vector<int> sample_new_attributes(std::span<const int> sensitive, std::span<const std::size_t> switched,
                                       const SwitchDistribution& dist, std::uint64_t seed) {
  std::vector<int> out(sensitive.begin(), sensitive.end());
  if (switched.empty()) return out;
  if (dist.n_classes() < 2) throw std::invalid_argument("sample_new_attributes: K = 1 leaves no class to switch to");
  Rng rng(seed);
  for (std::size_t i : switched) {
    if (i >= sensitive.size()) throw std::out_of_range("sample_new_attributes: node index out of range");
    const int s = sensitive[i];
    if (s < 0 || s >= dist.n_classes()) throw std::invalid_argument("sample_new_attributes: class out of range");
    out[i] = static_cast<int>(rng.categorical(dist.conditional[s]));
  }
  return out;
}

nlohmann::json switch_plan_to_json(const SwitchPlan& plan) {
  return {{"rho", plan.rho},
          {"tau", plan.tau},
          {"switched", plan.switched},
          {"new_attrs", plan.new_attrs},
          {"n_switched_by_pair", plan.n_switched_by_pair}};
}

SwitchPlan switch_plan_from_json(const nlohmann::json& j) {
  SwitchPlan p;
  p.rho = j.at("rho").get<double>();
  p.tau = j.at("tau").get<int>();
  p.switched = j.at("switched").get<std::vector<std::size_t>>();
  p.new_attrs = j.at("new_attrs").get<std::vector<int>>();
  if (j.contains("n_switched_by_pair"))
    p.n_switched_by_pair = j["n_switched_by_pair"].get<std::vector<std::vector<std::size_t>>>();
  return p;
}

std::pair<Graph, SwitchPlan> generate_with_switching(const Denoiser& d, const NoiseSchedule& sched,
                                                     std::size_t n_nodes, const SwitchRequest& request,
                                                     std::uint64_t seed) {
  const int steps = sched.steps();
  if (request.tau < 1 || request.tau > steps - 1)
    throw std::invalid_argument("generate_with_switching: tau must lie in [1, T-1], got " + std::to_string(request.tau));
  if (!(request.rho >= 0.0 && request.rho <= 1.0))
    throw std::invalid_argument("generate_with_switching: rho must lie in [0,1]");
  if (request.rho > 0.0 && request.dist.n_classes() != d.n_classes())
    throw std::invalid_argument("generate_with_switching: switch distribution has the wrong class count");

  GenerationState state = sample_prior(d, sched, n_nodes, derive_seed(seed, {0}));
  const std::vector<int> original = state.conditioning;
  while (state.step > request.tau)
    state = reverse_step(d, state, sched, derive_seed(seed, {static_cast<std::uint64_t>(state.step)}));

  SwitchPlan plan;
  plan.rho = request.rho;
  plan.tau = request.tau;
  plan.switched = sample_switch_set(n_nodes, request.rho, derive_seed(seed, {kSwitchSetStream}));
  plan.new_attrs = sample_new_attributes(original, plan.switched, request.dist, derive_seed(seed, {kNewAttrStream}));
  const auto k = static_cast<std::size_t>(d.n_classes());
  plan.n_switched_by_pair.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i : plan.switched) ++plan.n_switched_by_pair[original[i]][plan.new_attrs[i]];

  state.conditioning = plan.new_attrs;
  if (request.scope == SwitchScope::kEdgesOnly) state.node_conditioning = original;
  while (state.step > 0)
    state = reverse_step(d, state, sched, derive_seed(seed, {static_cast<std::uint64_t>(state.step)}));
  state.graph.set_sensitive(original);
  return {std::move(state.graph), std::move(plan)};
}

}  // namespace fairgen
