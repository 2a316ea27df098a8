#include "fairgen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fairgen/random.hpp"

namespace fairgen {

namespace {

constexpr double kLogFloor = 1e-12;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log q(x_t = noisy | x_0 = clean) under the marginal-transition family.
double log_transition(int noisy, int clean, double alpha_bar, double marginal_of_noisy) {
  const double q = (noisy == clean ? alpha_bar : 0.0) + (1.0 - alpha_bar) * marginal_of_noisy;
  return std::log(std::max(q, kLogFloor));
}

double edge_llr(int noisy, double alpha_bar, double edge_marginal) {
  const double m_noisy = noisy ? edge_marginal : 1.0 - edge_marginal;
  return log_transition(noisy, 1, alpha_bar, m_noisy) - log_transition(noisy, 0, alpha_bar, m_noisy);
}

void check_marginal(std::span<const double> m, const char* what) {
  double total = 0.0;
  for (double p : m) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("NoiseSchedule: bad marginal for ") + what);
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument(std::string("NoiseSchedule: marginal does not sum to 1 for ") + what);
}

std::vector<std::vector<std::vector<double>>> class_conditional_profiles(const Graph& g) {
  const auto k = static_cast<std::size_t>(g.n_classes());
  const std::size_t f = g.n_features();
  const auto counts = class_counts(g);
  const auto overall = estimate_marginals(g).features;
  std::vector<std::vector<std::vector<double>>> profiles(k);
  for (std::size_t l = 0; l < k; ++l) {
    profiles[l].resize(f);
    for (std::size_t c = 0; c < f; ++c) profiles[l][c].assign(static_cast<std::size_t>(g.feature_classes()[c]), 0.0);
  }
  for (std::size_t i = 0; i < g.n_nodes(); ++i)
    for (std::size_t c = 0; c < f; ++c) profiles[g.sensitive(i)][c][g.feature(i, c)] += 1.0;
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t c = 0; c < f; ++c) {
      if (counts[l] == 0) {
        profiles[l][c] = overall[c];
        continue;
      }
      for (auto& p : profiles[l][c]) p /= static_cast<double>(counts[l]);
    }
  return profiles;
}

}  // namespace

ChannelMarginals estimate_marginals(const Graph& g) {
  ChannelMarginals m;
  const double n = static_cast<double>(g.n_nodes());
  const double pairs = n * (n - 1.0) / 2.0;
  m.edge = pairs > 0.0 ? static_cast<double>(g.n_edges()) / pairs : 0.0;
  m.features.resize(g.n_features());
  for (std::size_t c = 0; c < g.n_features(); ++c) {
    m.features[c].assign(static_cast<std::size_t>(g.feature_classes()[c]), 0.0);
    for (std::size_t i = 0; i < g.n_nodes(); ++i) m.features[c][g.feature(i, c)] += 1.0;
    for (auto& p : m.features[c]) p /= n;
  }
  m.sensitive.assign(static_cast<std::size_t>(g.n_classes()), 0.0);
  for (int s : g.sensitive()) m.sensitive[s] += 1.0;
  for (auto& p : m.sensitive) p /= n;
  return m;
}

NoiseSchedule::NoiseSchedule(std::vector<double> retain, ChannelMarginals marginals)
    : retain_(std::move(retain)), marginals_(std::move(marginals)) {
  if (retain_.empty()) throw std::invalid_argument("NoiseSchedule: need at least one step");
  alpha_bar_.assign(retain_.size() + 1, 1.0);
  for (std::size_t t = 0; t < retain_.size(); ++t) {
    if (!(retain_[t] >= 0.0 && retain_[t] <= 1.0)) throw std::invalid_argument("NoiseSchedule: retain must lie in [0,1]");
    alpha_bar_[t + 1] = alpha_bar_[t] * retain_[t];
  }
  if (!(alpha_bar_.back() < 0.05)) throw std::invalid_argument("NoiseSchedule: alpha_bar(T) must be below 0.05");
  if (!(marginals_.edge >= 0.0 && marginals_.edge <= 1.0)) throw std::invalid_argument("NoiseSchedule: bad edge marginal");
  for (const auto& m : marginals_.features) check_marginal(m, "feature column");
  check_marginal(marginals_.sensitive, "sensitive class");
}

NoiseSchedule NoiseSchedule::linear(int steps, ChannelMarginals marginals, double final_alpha_bar) {
  if (steps < 1) throw std::invalid_argument("NoiseSchedule::linear: steps must be >= 1");
  if (!(final_alpha_bar >= 0.0 && final_alpha_bar < 0.05))
    throw std::invalid_argument("NoiseSchedule::linear: final alpha_bar must lie in [0, 0.05)");
  std::vector<double> retain(static_cast<std::size_t>(steps));
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double bar = 1.0 - (1.0 - final_alpha_bar) * static_cast<double>(t) / steps;
    retain[t - 1] = prev > 0.0 ? bar / prev : 0.0;
    prev = bar;
  }
  return NoiseSchedule(std::move(retain), std::move(marginals));
}

nlohmann::json schedule_to_json(const NoiseSchedule& s) {
  std::vector<double> retain;
  for (int t = 1; t <= s.steps(); ++t) retain.push_back(s.retain(t));
  return {{"steps", s.steps()},
          {"retain", retain},
          {"marginals",
           {{"edge", s.marginals().edge}, {"features", s.marginals().features}, {"sensitive", s.marginals().sensitive}}}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  ChannelMarginals m;
  const auto& jm = j.at("marginals");
  m.edge = jm.at("edge").get<double>();
  m.features = jm.at("features").get<std::vector<std::vector<double>>>();
  m.sensitive = jm.at("sensitive").get<std::vector<double>>();
  return NoiseSchedule(j.at("retain").get<std::vector<double>>(), std::move(m));
}

std::vector<double> reverse_posterior(int noisy, std::span<const double> clean_prediction,
                                      std::span<const double> marginal, double retain_t, double alpha_bar_prev) {
  const std::size_t c = marginal.size();
  std::vector<double> out(c, 0.0);
  std::vector<double> row(c);
  double used_weight = 0.0;
  for (std::size_t x0 = 0; x0 < c; ++x0) {
    const double w = clean_prediction[x0];
    if (w <= 0.0) continue;
    double total = 0.0;
    for (std::size_t e = 0; e < c; ++e) {
      const double from_clean = (e == x0 ? alpha_bar_prev : 0.0) + (1.0 - alpha_bar_prev) * marginal[e];
      const double to_noisy = (static_cast<std::size_t>(noisy) == e ? retain_t : 0.0) + (1.0 - retain_t) * marginal[noisy];
      row[e] = from_clean * to_noisy;
      total += row[e];
    }
    // x0 cannot have produced the noisy state; it carries no mass.
    if (total <= 0.0) continue;
    for (std::size_t e = 0; e < c; ++e) out[e] += w * row[e] / total;
    used_weight += w;
  }
  if (used_weight <= 0.0) {
    // Prediction incompatible with the observation: keep the noisy state.
    std::fill(out.begin(), out.end(), 0.0);
    out[noisy] = 1.0;
    return out;
  }
  for (auto& p : out) p /= used_weight;
  return out;
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser Denoiser::oracle(const Graph& g) {
  auto marginals = estimate_marginals(g).sensitive;
  return oracle(edge_density_matrix(g), class_conditional_profiles(g), std::move(marginals));
}

Denoiser Denoiser::oracle(DensityMatrix density, std::vector<std::vector<std::vector<double>>> feature_profiles,
                          std::vector<double> class_marginals) {
  const std::size_t k = class_marginals.size();
  if (k == 0) throw std::invalid_argument("Denoiser::oracle: no classes");
  if (density.density.size() != k || feature_profiles.size() != k)
    throw std::invalid_argument("Denoiser::oracle: class dimension mismatch");
  for (const auto& row : density.density) {
    if (row.size() != k) throw std::invalid_argument("Denoiser::oracle: density must be K x K");
    for (double p : row)
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("Denoiser::oracle: density out of [0,1]");
  }
  Denoiser d;
  d.kind_ = Kind::kOracle;
  d.class_marginals_ = std::move(class_marginals);
  d.density_ = std::move(density);
  for (const auto& column : feature_profiles.front()) d.feature_classes_.push_back(static_cast<int>(column.size()));
  for (const auto& per_class : feature_profiles)
    if (per_class.size() != d.feature_classes_.size())
      throw std::invalid_argument("Denoiser::oracle: ragged feature profiles");
  d.feature_profiles_ = std::move(feature_profiles);
  return d;
}

double Denoiser::edge_probability(int class_i, int class_j, int noisy_edge, int t, const NoiseSchedule& sched) const {
  if (kind_ == Kind::kOracle) return density_.density[class_i][class_j];
  const double z = pair_logits_[class_i][class_j] +
                   edge_evidence_weight_ * edge_llr(noisy_edge, sched.alpha_bar(t), sched.marginals().edge);
  return sigmoid(z);
}

void Denoiser::feature_distribution(int cls, std::size_t column, int noisy_code, int t, const NoiseSchedule& sched,
                                    std::span<double> out) const {
  if (kind_ == Kind::kOracle) {
    const auto& p = feature_profiles_[cls][column];
    std::copy(p.begin(), p.end(), out.begin());
    return;
  }
  const auto& logits = feature_logits_[column][cls];
  const auto& m = sched.marginals().features[column];
  const double bar = sched.alpha_bar(t);
  const double lambda = feature_evidence_weights_[column];
  double hi = -1e300;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = logits[c] + lambda * log_transition(noisy_code, static_cast<int>(c), bar, m[noisy_code]);
    hi = std::max(hi, out[c]);
  }
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(out[c] - hi);
    total += out[c];
  }
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] /= total;
}

double Denoiser::prior_edge_probability(int class_i, int class_j) const {
  if (kind_ == Kind::kOracle) return density_.density[class_i][class_j];
  return sigmoid(pair_logits_[class_i][class_j]);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Adam {
  std::vector<double> m, v;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grads, int iteration, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, iteration);
    const double c2 = 1.0 - std::pow(b2, iteration);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grads[i];
      v[i] = b2 * v[i] + (1 - b2) * grads[i] * grads[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace

Denoiser train_denoiser(const Graph& g, const NoiseSchedule& sched, const DenoiserHyper& hyper, std::uint64_t seed) {
  if (!(hyper.learning_rate > 0.0) || hyper.epochs < 1)
    throw std::invalid_argument("train_denoiser: learning rate and epochs must be positive");
  const std::size_t n = g.n_nodes();
  const auto k = static_cast<std::size_t>(g.n_classes());
  const std::size_t f = g.n_features();
  const int steps = sched.steps();
  if (sched.marginals().features.size() != f || sched.marginals().sensitive.size() != k)
    throw std::invalid_argument("train_denoiser: schedule marginals do not match the graph");

  // Parameters: pair logits (upper triangle used, mirrored on export), edge
  // evidence weight, per-column [class][code] logits and evidence weights.
  std::vector<double> pair(k * k, 0.0), pair_grad(k * k);
  std::vector<double> edge_w{1.0}, edge_w_grad(1);
  std::vector<std::vector<double>> feat(f), feat_grad(f);
  std::vector<double> feat_w(f, 1.0), feat_w_grad(f);
  for (std::size_t c = 0; c < f; ++c) {
    feat[c].assign(k * static_cast<std::size_t>(g.feature_classes()[c]), 0.0);
    feat_grad[c].resize(feat[c].size());
  }
  Adam adam_pair(pair.size()), adam_edge_w(1), adam_feat_w(f);
  std::vector<Adam> adam_feat;
  for (std::size_t c = 0; c < f; ++c) adam_feat.emplace_back(feat[c].size());

  const double n_pairs = static_cast<double>(n) * static_cast<double>(n - (n > 0 ? 1 : 0)) / 2.0;
  const double edge_norm = std::max(1.0, n_pairs * steps);
  const double feat_norm = std::max(1.0, static_cast<double>(n * f) * steps);

  // counts[(a*k+b)*4 + noisy*2 + clean]
  std::vector<double> edge_counts(k * k * 4);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::fill(pair_grad.begin(), pair_grad.end(), 0.0);
    edge_w_grad[0] = 0.0;
    for (std::size_t c = 0; c < f; ++c) std::fill(feat_grad[c].begin(), feat_grad[c].end(), 0.0);
    std::fill(feat_w_grad.begin(), feat_w_grad.end(), 0.0);
    double loss = 0.0;

    for (int t = 1; t <= steps; ++t) {
      const Graph noisy = forward_noise(g, t, sched, derive_seed(seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(t)}));
      const double bar = sched.alpha_bar(t);

      std::fill(edge_counts.begin(), edge_counts.end(), 0.0);
      const auto clean_adj = g.adjacency();
      const auto noisy_adj = noisy.adjacency();
      for (std::size_t i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(g.sensitive(i));
        for (std::size_t j = i + 1; j < n; ++j) {
          const auto sj = static_cast<std::size_t>(g.sensitive(j));
          const std::size_t a = std::min(si, sj), b = std::max(si, sj);
          edge_counts[(a * k + b) * 4 + noisy_adj[i * n + j] * 2 + clean_adj[i * n + j]] += 1.0;
        }
      }
      const double llr[2] = {edge_llr(0, bar, sched.marginals().edge), edge_llr(1, bar, sched.marginals().edge)};
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a; b < k; ++b)
          for (int e = 0; e < 2; ++e)
            for (int x0 = 0; x0 < 2; ++x0) {
              const double cnt = edge_counts[(a * k + b) * 4 + e * 2 + x0];
              if (cnt == 0.0) continue;
              const double z = pair[a * k + b] + edge_w[0] * llr[e];
              const double p = sigmoid(z);
              loss += -cnt * (x0 ? std::log(std::max(p, kLogFloor)) : std::log(std::max(1.0 - p, kLogFloor))) / edge_norm;
              const double gz = cnt * (p - x0) / edge_norm;
              pair_grad[a * k + b] += gz;
              edge_w_grad[0] += gz * llr[e];
            }

      for (std::size_t c = 0; c < f; ++c) {
        const auto codes = static_cast<std::size_t>(g.feature_classes()[c]);
        const auto& m = sched.marginals().features[c];
        // counts[(class*codes + noisy)*codes + clean]
        std::vector<double> counts(k * codes * codes, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          counts[(static_cast<std::size_t>(g.sensitive(i)) * codes + noisy.feature(i, c)) * codes + g.feature(i, c)] += 1.0;
        std::vector<double> logq(codes * codes);
        for (std::size_t x = 0; x < codes; ++x)
          for (std::size_t y = 0; y < codes; ++y)
            logq[x * codes + y] = log_transition(static_cast<int>(x), static_cast<int>(y), bar, m[x]);
        std::vector<double> prob(codes);
        for (std::size_t l = 0; l < k; ++l)
          for (std::size_t x = 0; x < codes; ++x) {
            double row_total = 0.0;
            for (std::size_t y = 0; y < codes; ++y) row_total += counts[(l * codes + x) * codes + y];
            if (row_total == 0.0) continue;
            double hi = -1e300;
            for (std::size_t y = 0; y < codes; ++y) {
              prob[y] = feat[c][l * codes + y] + feat_w[c] * logq[x * codes + y];
              hi = std::max(hi, prob[y]);
            }
            double z = 0.0;
            for (std::size_t y = 0; y < codes; ++y) {
              prob[y] = std::exp(prob[y] - hi);
              z += prob[y];
            }
            for (std::size_t y = 0; y < codes; ++y) prob[y] /= z;
            for (std::size_t y0 = 0; y0 < codes; ++y0) {
              const double cnt = counts[(l * codes + x) * codes + y0];
              if (cnt == 0.0) continue;
              loss += -cnt * std::log(std::max(prob[y0], kLogFloor)) / feat_norm;
              for (std::size_t y = 0; y < codes; ++y) {
                const double gz = cnt * (prob[y] - (y == y0 ? 1.0 : 0.0)) / feat_norm;
                feat_grad[c][l * codes + y] += gz;
                feat_w_grad[c] += gz * logq[x * codes + y];
              }
            }
          }
      }
    }
    if (!std::isfinite(loss))
      throw std::runtime_error("train_denoiser: non-finite loss at epoch " + std::to_string(epoch) +
                               " (learning rate too large?)");

    const double lr = hyper.learning_rate * (1.0 - 0.9 * static_cast<double>(epoch) / hyper.epochs);
    adam_pair.step(pair, pair_grad, epoch + 1, lr);
    adam_edge_w.step(edge_w, edge_w_grad, epoch + 1, lr);
    for (std::size_t c = 0; c < f; ++c) adam_feat[c].step(feat[c], feat_grad[c], epoch + 1, lr);
    adam_feat_w.step(feat_w, feat_w_grad, epoch + 1, lr);
  }

  Denoiser d;
  d.kind_ = Denoiser::Kind::kLearned;
  d.class_marginals_ = sched.marginals().sensitive;
  d.feature_classes_.assign(g.feature_classes().begin(), g.feature_classes().end());
  d.pair_logits_.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b) {
      d.pair_logits_[a][b] = pair[a * k + b];
      d.pair_logits_[b][a] = pair[a * k + b];
    }
  d.edge_evidence_weight_ = edge_w[0];
  d.feature_logits_.resize(f);
  for (std::size_t c = 0; c < f; ++c) {
    const auto codes = static_cast<std::size_t>(g.feature_classes()[c]);
    d.feature_logits_[c].assign(k, std::vector<double>(codes));
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t y = 0; y < codes; ++y) d.feature_logits_[c][l][y] = feat[c][l * codes + y];
  }
  d.feature_evidence_weights_ = feat_w;
  return d;
}

nlohmann::json denoiser_to_json(const Denoiser& d) {
  nlohmann::json j;
  j["marginals"] = d.class_marginals();
  j["feature_classes"] = std::vector<int>(d.feature_classes().begin(), d.feature_classes().end());
  if (d.kind() == Denoiser::Kind::kOracle) {
    j["kind"] = "oracle";
    j["density"] = {{"counts", d.density().counts_per_class}, {"matrix", d.density().density}};
    j["feature_profiles"] = d.feature_profiles();
  } else {
    j["kind"] = "learned";
    j["weights"] = {{"pair_logits", d.pair_logits()},
                    {"edge_evidence_weight", d.edge_evidence_weight()},
                    {"feature_logits", d.feature_logits()},
                    {"feature_evidence_weights", d.feature_evidence_weights()}};
  }
  return j;
}

Denoiser denoiser_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  auto marginals = j.at("marginals").get<std::vector<double>>();
  if (kind == "oracle") {
    DensityMatrix density;
    density.counts_per_class = j.at("density").at("counts").get<std::vector<std::size_t>>();
    density.density = j.at("density").at("matrix").get<ClassMatrix>();
    return Denoiser::oracle(std::move(density),
                            j.at("feature_profiles").get<std::vector<std::vector<std::vector<double>>>>(),
                            std::move(marginals));
  }
  if (kind != "learned") throw std::invalid_argument("denoiser JSON: unknown kind '" + kind + "'");
  Denoiser d;
  d.kind_ = Denoiser::Kind::kLearned;
  d.class_marginals_ = std::move(marginals);
  d.feature_classes_ = j.at("feature_classes").get<std::vector<int>>();
  const auto& w = j.at("weights");
  d.pair_logits_ = w.at("pair_logits").get<ClassMatrix>();
  d.edge_evidence_weight_ = w.at("edge_evidence_weight").get<double>();
  d.feature_logits_ = w.at("feature_logits").get<std::vector<ClassMatrix>>();
  d.feature_evidence_weights_ = w.at("feature_evidence_weights").get<std::vector<double>>();
  const std::size_t k = d.class_marginals_.size();
  if (d.pair_logits_.size() != k || d.feature_logits_.size() != d.feature_classes_.size() ||
      d.feature_evidence_weights_.size() != d.feature_classes_.size())
    throw std::invalid_argument("denoiser JSON: weight shapes do not match");
  for (const auto& row : d.pair_logits_)
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("denoiser JSON: non-finite weight");
  return d;
}

// ---------------------------------------------------------------------------
// Forward and reverse processes

Graph forward_noise(const Graph& g, int t, const NoiseSchedule& sched, std::uint64_t seed) {
  if (t < 0 || t > sched.steps()) throw std::out_of_range("forward_noise: step out of range");
  const double keep = sched.alpha_bar(t);
  const auto& m = sched.marginals();
  if (m.features.size() != g.n_features() || m.sensitive.size() != static_cast<std::size_t>(g.n_classes()))
    throw std::invalid_argument("forward_noise: schedule marginals do not match the graph");
  Graph out = g;
  Rng rng(seed);
  const std::size_t n = g.n_nodes();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!rng.bernoulli(keep)) out.set_edge(i, j, rng.bernoulli(m.edge));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < g.n_features(); ++c)
      if (!rng.bernoulli(keep)) out.set_feature(i, c, static_cast<int>(rng.categorical(m.features[c])));
    if (!rng.bernoulli(keep)) out.set_sensitive(i, static_cast<int>(rng.categorical(m.sensitive)));
  }
  return out;
}

GenerationState reverse_step(const Denoiser& d, const GenerationState& state, const NoiseSchedule& sched,
                             std::uint64_t seed) {
  const int t = state.step;
  if (t < 1 || t > sched.steps()) throw std::out_of_range("reverse_step: step must lie in [1, T]");
  const auto& g = state.graph;
  const std::size_t n = g.n_nodes();
  const auto k = static_cast<std::size_t>(d.n_classes());
  if (g.n_classes() != d.n_classes()) throw std::invalid_argument("reverse_step: class count differs from denoiser");
  if (state.conditioning.size() != n) throw std::invalid_argument("reverse_step: conditioning length != n_nodes");
  const auto& node_cond = state.node_conditioning.empty() ? state.conditioning : state.node_conditioning;
  if (node_cond.size() != n) throw std::invalid_argument("reverse_step: node conditioning length != n_nodes");
  for (const auto* seq : {&state.conditioning, &node_cond})
    for (int c : *seq)
      if (c < 0 || static_cast<std::size_t>(c) >= k) throw std::invalid_argument("reverse_step: conditioning class out of range");
  const auto& m = sched.marginals();
  const double retain = sched.retain(t);
  const double bar_prev = sched.alpha_bar(t - 1);

  // P(edge at t-1) for every (class pair, noisy bit).
  std::vector<double> edge_next(k * k * 2);
  const double edge_marginal[2] = {1.0 - m.edge, m.edge};
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      for (int e = 0; e < 2; ++e) {
        const double p = d.edge_probability(static_cast<int>(a), static_cast<int>(b), e, t, sched);
        const double pred[2] = {1.0 - p, p};
        edge_next[(a * k + b) * 2 + e] = reverse_posterior(e, pred, edge_marginal, retain, bar_prev)[1];
      }

  // Feature transitions: [column][(class*codes + noisy)] -> distribution.
  std::vector<std::vector<std::vector<double>>> feature_next(g.n_features());
  for (std::size_t c = 0; c < g.n_features(); ++c) {
    const auto codes = static_cast<std::size_t>(g.feature_classes()[c]);
    std::vector<double> pred(codes);
    feature_next[c].resize(k * codes);
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t x = 0; x < codes; ++x) {
        d.feature_distribution(static_cast<int>(l), c, static_cast<int>(x), t, sched, pred);
        feature_next[c][l * codes + x] = reverse_posterior(static_cast<int>(x), pred, m.features[c], retain, bar_prev);
      }
  }

  std::vector<std::vector<double>> sensitive_next(k * k);
  for (std::size_t cond = 0; cond < k; ++cond) {
    std::vector<double> pred(k, 0.0);
    pred[cond] = 1.0;
    for (std::size_t s = 0; s < k; ++s)
      sensitive_next[cond * k + s] = reverse_posterior(static_cast<int>(s), pred, m.sensitive, retain, bar_prev);
  }

  GenerationState out{t - 1, g, state.conditioning, state.node_conditioning};
  Graph& next = out.graph;
  Rng rng(seed);
  const auto adj = g.adjacency();
  const auto& cond = state.conditioning;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ci = static_cast<std::size_t>(cond[i]) * k;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = edge_next[(ci + cond[j]) * 2 + adj[i * n + j]];
      next.set_edge(i, j, rng.bernoulli(p));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < g.n_features(); ++c) {
      const auto codes = static_cast<std::size_t>(g.feature_classes()[c]);
      const auto& dist = feature_next[c][static_cast<std::size_t>(node_cond[i]) * codes + g.feature(i, c)];
      next.set_feature(i, c, static_cast<int>(rng.categorical(dist)));
    }
    const auto& dist = sensitive_next[static_cast<std::size_t>(node_cond[i]) * k + g.sensitive(i)];
    next.set_sensitive(i, static_cast<int>(rng.categorical(dist)));
  }
  return out;
}

GenerationState sample_prior(const Denoiser& d, const NoiseSchedule& sched, std::size_t n_nodes, std::uint64_t seed) {
  if (n_nodes == 0) throw std::invalid_argument("generate: n_nodes must be positive");
  const auto& m = sched.marginals();
  const auto fc = d.feature_classes();
  if (m.features.size() != fc.size() || m.sensitive.size() != static_cast<std::size_t>(d.n_classes()))
    throw std::invalid_argument("generate: schedule marginals do not match the denoiser");
  Rng rng(seed);
  std::vector<int> sensitive(n_nodes);
  std::vector<int> features(n_nodes * fc.size());
  for (std::size_t i = 0; i < n_nodes; ++i) {
    sensitive[i] = static_cast<int>(rng.categorical(m.sensitive));
    for (std::size_t c = 0; c < fc.size(); ++c)
      features[i * fc.size() + c] = static_cast<int>(rng.categorical(m.features[c]));
  }
  GenerationState state;
  state.step = sched.steps();
  state.conditioning = sensitive;
  state.graph = Graph(n_nodes, std::move(sensitive), d.n_classes(), std::move(features),
                      std::vector<int>(fc.begin(), fc.end()));
  for (std::size_t i = 0; i < n_nodes; ++i)
    for (std::size_t j = i + 1; j < n_nodes; ++j)
      if (rng.bernoulli(m.edge)) state.graph.set_edge(i, j, true);
  return state;
}

Graph generate(const Denoiser& d, const NoiseSchedule& sched, std::size_t n_nodes, std::uint64_t seed) {
  GenerationState state = sample_prior(d, sched, n_nodes, derive_seed(seed, {0}));
  while (state.step > 0)
    state = reverse_step(d, state, sched, derive_seed(seed, {static_cast<std::uint64_t>(state.step)}));
  return std::move(state.graph);
}

}  // namespace fairgen
