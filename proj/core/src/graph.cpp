#include "fairgen/graph.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "fairgen/random.hpp"

namespace fairgen {

Graph::Graph(std::size_t n_nodes, std::vector<int> sensitive, int n_classes,
             std::vector<int> features, std::vector<int> feature_classes)
    : n_(n_nodes),
      n_classes_(n_classes),
      adj_(n_nodes * n_nodes, 0),
      features_(std::move(features)),
      feature_classes_(std::move(feature_classes)),
      sensitive_(std::move(sensitive)) {
  if (n_classes_ < 1) throw std::invalid_argument("Graph: need at least one sensitive class");
  if (sensitive_.size() != n_) throw std::invalid_argument("Graph: sensitive length != n_nodes");
  if (features_.size() != n_ * feature_classes_.size())
    throw std::invalid_argument("Graph: feature matrix must be n_nodes x n_features");
  for (int c : feature_classes_)
    if (c < 1) throw std::invalid_argument("Graph: every feature column needs >= 1 class");
  for (int s : sensitive_)
    if (s < 0 || s >= n_classes_) throw std::invalid_argument("Graph: sensitive class out of range");
  const std::size_t f = feature_classes_.size();
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const int code = features_[i];
    if (code < 0 || code >= feature_classes_[i % f])
      throw std::invalid_argument("Graph: feature code out of range");
  }
}

void Graph::set_feature(std::size_t node, std::size_t column, int code) {
  if (code < 0 || code >= feature_classes_.at(column))
    throw std::invalid_argument("Graph::set_feature: code out of range");
  features_.at(node * feature_classes_.size() + column) = code;
}

void Graph::set_sensitive(std::size_t node, int cls) {
  if (cls < 0 || cls >= n_classes_) throw std::invalid_argument("Graph::set_sensitive: class out of range");
  sensitive_.at(node) = cls;
}

void Graph::set_sensitive(std::vector<int> classes) {
  if (classes.size() != n_) throw std::invalid_argument("Graph::set_sensitive: length mismatch");
  for (int s : classes)
    if (s < 0 || s >= n_classes_) throw std::invalid_argument("Graph::set_sensitive: class out of range");
  sensitive_ = std::move(classes);
}

void Graph::set_edge(std::size_t i, std::size_t j, bool present) {
  if (i >= n_ || j >= n_) throw std::out_of_range("Graph::set_edge: node out of range");
  if (i == j) throw std::invalid_argument("Graph::set_edge: self-loops are not allowed");
  const std::uint8_t v = present ? 1 : 0;
  if (adj_[i * n_ + j] == v) return;
  adj_[i * n_ + j] = v;
  adj_[j * n_ + i] = v;
  if (present)
    ++n_edges_;
  else
    --n_edges_;
}

std::size_t Graph::degree(std::size_t node) const {
  const auto* row = adj_.data() + node * n_;
  return static_cast<std::size_t>(std::count(row, row + n_, std::uint8_t{1}));
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(n_edges_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if (adj_[i * n_ + j]) out.emplace_back(i, j);
  return out;
}

std::vector<std::size_t> Graph::neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  const auto* row = adj_.data() + node * n_;
  for (std::size_t j = 0; j < n_; ++j)
    if (row[j]) out.push_back(j);
  return out;
}

void Graph::validate() const {
  if (adj_.size() != n_ * n_) throw std::logic_error("Graph: adjacency has wrong size");
  std::size_t upper = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    if (adj_[i * n_ + i] != 0) throw std::logic_error("Graph: nonzero diagonal at node " + std::to_string(i));
    for (std::size_t j = i + 1; j < n_; ++j) {
      const auto a = adj_[i * n_ + j];
      if (a != adj_[j * n_ + i])
        throw std::logic_error("Graph: asymmetric adjacency at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      if (a > 1) throw std::logic_error("Graph: adjacency is not binary");
      upper += a;
    }
  }
  if (upper != n_edges_) throw std::logic_error("Graph: cached edge count is stale");
  for (int s : sensitive_)
    if (s < 0 || s >= n_classes_) throw std::logic_error("Graph: sensitive class out of range");
  const std::size_t f = feature_classes_.size();
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i] < 0 || features_[i] >= feature_classes_[i % f])
      throw std::logic_error("Graph: feature code out of range");
}

double possible_pairs(std::size_t count_l, std::size_t count_k, bool same_class) {
  const double a = static_cast<double>(count_l);
  const double b = static_cast<double>(count_k);
  return same_class ? a * (a - 1.0) / 2.0 : a * b;
}

double DensityMatrix::possible_pairs(int l, int k) const {
  return fairgen::possible_pairs(counts_per_class.at(l), counts_per_class.at(k), l == k);
}

namespace {

// Per-class categorical profile of one feature column, Dirichlet(1/2)
// distributed (a Gamma(1/2) variate is half a squared standard normal; the
// factor cancels on normalization).
std::vector<double> dirichlet_half(Rng& rng, int n_codes) {
  std::vector<double> w(static_cast<std::size_t>(n_codes));
  double total = 0.0;
  for (auto& x : w) {
    const double z = rng.normal();
    x = z * z + 1e-12;
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

}  // namespace

Graph sbm_generate(std::span<const std::size_t> counts_per_class, const ClassMatrix& density,
                   std::span<const int> feature_spec, std::uint64_t seed) {
  const std::size_t k = counts_per_class.size();
  if (k == 0) throw std::invalid_argument("sbm_generate: no classes");
  const std::size_t n = std::accumulate(counts_per_class.begin(), counts_per_class.end(), std::size_t{0});
  if (n == 0) throw std::invalid_argument("sbm_generate: zero total nodes");
  if (density.size() != k) throw std::invalid_argument("sbm_generate: density must be K x K");
  for (std::size_t l = 0; l < k; ++l) {
    if (density[l].size() != k) throw std::invalid_argument("sbm_generate: density must be K x K");
    for (std::size_t m = 0; m < k; ++m) {
      const double p = density[l][m];
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sbm_generate: density out of [0,1]");
      if (p != density[m][l]) throw std::invalid_argument("sbm_generate: density must be symmetric");
    }
  }
  for (int c : feature_spec)
    if (c < 1) throw std::invalid_argument("sbm_generate: feature columns need >= 1 class");

  std::vector<int> sensitive;
  sensitive.reserve(n);
  for (std::size_t l = 0; l < k; ++l) sensitive.insert(sensitive.end(), counts_per_class[l], static_cast<int>(l));

  const std::size_t f = feature_spec.size();
  Rng profile_rng(derive_seed(seed, {1}));
  std::vector<std::vector<std::vector<double>>> profiles(k);  // [class][column][code]
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t c = 0; c < f; ++c) profiles[l].push_back(dirichlet_half(profile_rng, feature_spec[c]));

  Rng feature_rng(derive_seed(seed, {2}));
  std::vector<int> features(n * f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < f; ++c)
      features[i * f + c] = static_cast<int>(feature_rng.categorical(profiles[sensitive[i]][c]));

  Graph g(n, std::move(sensitive), static_cast<int>(k), std::move(features),
          std::vector<int>(feature_spec.begin(), feature_spec.end()));

  Rng edge_rng(derive_seed(seed, {3}));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = density[g.sensitive(i)];
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge_rng.bernoulli(row[g.sensitive(j)])) g.set_edge(i, j, true);
  }
  return g;
}

std::vector<std::size_t> class_counts(const Graph& g) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(g.n_classes()), 0);
  for (int s : g.sensitive()) ++counts[s];
  return counts;
}

DensityMatrix edge_density_matrix(const Graph& g) {
  const auto k = static_cast<std::size_t>(g.n_classes());
  DensityMatrix out;
  out.counts_per_class = class_counts(g);
  std::vector<std::vector<std::size_t>> edges(k, std::vector<std::size_t>(k, 0));
  for (const auto& [i, j] : g.edges()) {
    const auto a = static_cast<std::size_t>(g.sensitive(i));
    const auto b = static_cast<std::size_t>(g.sensitive(j));
    ++edges[a][b];
    if (a != b) ++edges[b][a];
  }
  out.density.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t m = 0; m < k; ++m) {
      const double pairs = out.possible_pairs(static_cast<int>(l), static_cast<int>(m));
      out.density[l][m] = pairs > 0.0 ? static_cast<double>(edges[l][m]) / pairs : 0.0;
    }
  return out;
}

EdgePartition partition_edges(const Graph& g) {
  EdgePartition p;
  for (const auto& [i, j] : g.edges()) {
    if (g.sensitive(i) == g.sensitive(j))
      ++p.n_interior;
    else
      ++p.n_exterior;
  }
  return p;
}

std::vector<double> clustering_coefficients(const Graph& g) {
  const std::size_t n = g.n_nodes();
  std::vector<double> out(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto nb = g.neighbors(v);
    const std::size_t d = nb.size();
    if (d < 2) continue;
    std::size_t closed = 0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a + 1; b < d; ++b)
        if (g.has_edge(nb[a], nb[b])) ++closed;
    out[v] = static_cast<double>(closed) / (static_cast<double>(d) * static_cast<double>(d - 1) / 2.0);
  }
  return out;
}

std::vector<double> degree_sequence(const Graph& g) {
  std::vector<double> out(g.n_nodes());
  for (std::size_t v = 0; v < g.n_nodes(); ++v) out[v] = static_cast<double>(g.degree(v));
  return out;
}

}  // namespace fairgen
