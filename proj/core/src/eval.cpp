#include "fairgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fairgen/random.hpp"
#include "fairgen/report.hpp"

namespace fairgen {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::uint64_t pair_key(std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
}

}  // namespace

LinkPredictor::LinkPredictor(Eigen::MatrixXd weights, LinkPredictorHyper hyper, std::vector<int> feature_classes,
                             int n_classes)
    : weights_(std::move(weights)),
      hyper_(hyper),
      feature_classes_(std::move(feature_classes)),
      n_classes_(n_classes) {
  if (hyper_.dim < 1) throw std::invalid_argument("LinkPredictor: dim must be >= 1");
  if (weights_.cols() != hyper_.dim) throw std::invalid_argument("LinkPredictor: weights must have dim columns");
  if (!weights_.allFinite()) throw std::invalid_argument("LinkPredictor: non-finite weights");
  Eigen::Index inputs = std::accumulate(feature_classes_.begin(), feature_classes_.end(), 0);
  if (hyper_.include_sensitive_feature) inputs += n_classes_;
  if (weights_.rows() != inputs) throw std::invalid_argument("LinkPredictor: weights have the wrong input size");
}

Eigen::MatrixXd one_hot_features(const Graph& g, bool include_sensitive) {
  const std::size_t n = g.n_nodes();
  Eigen::Index width = 0;
  std::vector<Eigen::Index> offset;
  for (int c : g.feature_classes()) {
    offset.push_back(width);
    width += c;
  }
  const Eigen::Index sens_offset = width;
  if (include_sensitive) width += g.n_classes();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), width);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < g.n_features(); ++c) x(i, offset[c] + g.feature(i, c)) = 1.0;
    if (include_sensitive) x(i, sens_offset + g.sensitive(i)) = 1.0;
  }
  return x;
}

Eigen::MatrixXd normalized_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  const auto adj = g.adjacency();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (adj[i * n + j]) a(i, j) = 1.0;
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

Eigen::MatrixXd LinkPredictor::embed(const Graph& g) const {
  if (std::vector<int>(g.feature_classes().begin(), g.feature_classes().end()) != feature_classes_ ||
      (hyper_.include_sensitive_feature && g.n_classes() != n_classes_))
    throw std::invalid_argument("LinkPredictor::embed: graph features do not match the model");
  return normalized_adjacency(g) * (one_hot_features(g, hyper_.include_sensitive_feature) * weights_);
}

double LinkPredictor::score(const Eigen::MatrixXd& z, std::size_t i, std::size_t j) {
  return sigmoid(z.row(static_cast<Eigen::Index>(i)).dot(z.row(static_cast<Eigen::Index>(j))));
}

LinkPredictor train_link_predictor(const Graph& train_graph, const LinkPredictorHyper& hyper, std::uint64_t seed,
                                   TrainingTrace* trace) {
  if (train_graph.n_edges() == 0) throw std::invalid_argument("train_link_predictor: training graph has no edges");
  if (hyper.dim < 1 || hyper.epochs < 1 || !(hyper.learning_rate > 0.0))
    throw std::invalid_argument("train_link_predictor: dim, epochs and learning rate must be positive");
  const std::size_t n = train_graph.n_nodes();
  const Eigen::MatrixXd h = normalized_adjacency(train_graph) * one_hot_features(train_graph, hyper.include_sensitive_feature);
  const auto inputs = h.cols();
  const auto edges = train_graph.edges();
  const double possible = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  if (static_cast<double>(edges.size()) >= possible)
    throw std::invalid_argument("train_link_predictor: complete graph leaves no negatives");

  Rng init_rng(derive_seed(seed, {1}));
  const double scale = std::sqrt(2.0 / static_cast<double>(inputs + hyper.dim));
  Eigen::MatrixXd w(inputs, hyper.dim);
  for (Eigen::Index r = 0; r < inputs; ++r)
    for (Eigen::Index c = 0; c < hyper.dim; ++c) w(r, c) = scale * init_rng.normal();

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(inputs, hyper.dim), v = m;
  Rng neg_rng(derive_seed(seed, {2}));
  const double count = 2.0 * static_cast<double>(edges.size());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const Eigen::MatrixXd z = h * w;
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(z.rows(), z.cols());
    double loss = 0.0;
    auto accumulate = [&](std::size_t i, std::size_t j, int label) {
      const double s = z.row(i).dot(z.row(j));
      const double p = sigmoid(s);
      // log(1 + e^-s) and log(1 + e^s) in stable form
      const double softplus_neg = std::max(-s, 0.0) + std::log1p(std::exp(-std::abs(s)));
      loss += (label ? softplus_neg : softplus_neg + s) / count;
      const double ds = (p - label) / count;
      dz.row(i) += ds * z.row(j);
      dz.row(j) += ds * z.row(i);
    };
    for (const auto& [i, j] : edges) accumulate(i, j, 1);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      std::size_t i, j;
      do {
        i = neg_rng.below(n);
        j = neg_rng.below(n);
      } while (i == j || train_graph.has_edge(i, j));
      accumulate(i, j, 0);
    }
    if (!std::isfinite(loss))
      throw std::runtime_error("train_link_predictor: non-finite loss at epoch " + std::to_string(epoch));
    if (trace) trace->loss.push_back(loss);

    const Eigen::MatrixXd grad = h.transpose() * dz;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, epoch + 1), c2 = 1.0 - std::pow(b2, epoch + 1);
    w.array() -= hyper.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
  return LinkPredictor(std::move(w), hyper, std::vector<int>(train_graph.feature_classes().begin(),
                                                             train_graph.feature_classes().end()),
                       train_graph.n_classes());
}

nlohmann::json link_predictor_to_json(const LinkPredictor& p) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(p.weights().rows()));
  for (Eigen::Index r = 0; r < p.weights().rows(); ++r)
    for (Eigen::Index c = 0; c < p.weights().cols(); ++c) rows[r].push_back(p.weights()(r, c));
  nlohmann::json j;
  j["dim"] = p.hyper().dim;
  j["epochs"] = p.hyper().epochs;
  j["learning_rate"] = p.hyper().learning_rate;
  j["include_sensitive_feature"] = p.hyper().include_sensitive_feature;
  j["feature_classes"] = p.feature_classes();
  j["n_classes"] = p.n_classes();
  j["weights"] = rows;
  return j;
}

LinkPredictor link_predictor_from_json(const nlohmann::json& j) {
  LinkPredictorHyper hyper;
  hyper.dim = j.at("dim").get<int>();
  hyper.epochs = j.at("epochs").get<int>();
  hyper.learning_rate = j.at("learning_rate").get<double>();
  hyper.include_sensitive_feature = j.at("include_sensitive_feature").get<bool>();
  const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()), hyper.dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != static_cast<std::size_t>(hyper.dim))
      throw std::invalid_argument("link predictor JSON: ragged weights");
    for (int c = 0; c < hyper.dim; ++c) w(static_cast<Eigen::Index>(r), c) = rows[r][c];
  }
  std::vector<int> feature_classes = j.at("feature_classes").get<std::vector<int>>();
  const int n_classes = j.at("n_classes").get<int>();
  return LinkPredictor(std::move(w), hyper, std::move(feature_classes), n_classes);
}

// ---------------------------------------------------------------------------

PairSet full_pair_universe(const Graph& g) {
  PairSet out;
  out.mode = PairMode::kFullUniverse;
  const std::size_t n = g.n_nodes();
  out.pairs.reserve(n * (n - (n > 0)) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.pairs.push_back({i, j, g.has_edge(i, j) ? 1 : 0});
  return out;
}

namespace {

// Draws `count` distinct non-edges of g that are not in `taken`.
std::vector<LabeledPair> sample_non_edges(const Graph& g, std::size_t count, std::set<std::uint64_t>& taken, Rng& rng) {
  const std::size_t n = g.n_nodes();
  const double available = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0 -
                           static_cast<double>(g.n_edges()) - static_cast<double>(taken.size());
  if (static_cast<double>(count) > available) throw std::invalid_argument("not enough non-edges to match positives");
  std::vector<LabeledPair> out;
  while (out.size() < count) {
    std::size_t i = rng.below(n), j = rng.below(n);
    if (i == j || g.has_edge(i, j)) continue;
    if (i > j) std::swap(i, j);
    if (!taken.insert(pair_key(i, j)).second) continue;
    out.push_back({i, j, 0});
  }
  return out;
}

}  // namespace

PairSet balanced_pairs(const Graph& g, std::span<const Edge> positives, std::uint64_t seed) {
  PairSet out;
  out.mode = PairMode::kBalancedNegative;
  std::set<std::uint64_t> taken;
  for (const auto& [i, j] : positives) {
    if (!taken.insert(pair_key(i, j)).second) throw std::invalid_argument("balanced_pairs: duplicate positive pair");
    out.pairs.push_back({std::min(i, j), std::max(i, j), 1});
  }
  Rng rng(seed);
  auto negatives = sample_non_edges(g, positives.size(), taken, rng);
  out.pairs.insert(out.pairs.end(), negatives.begin(), negatives.end());
  return out;
}

EdgeSplit split_edges(const Graph& g, double train_fraction, double validation_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(validation_fraction >= 0.0) || train_fraction + validation_fraction > 1.0)
    throw std::invalid_argument("split_edges: fractions must be positive and sum to at most 1");
  auto edges = g.edges();
  Rng rng(seed);
  for (std::size_t i = edges.size(); i > 1; --i) std::swap(edges[i - 1], edges[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(edges.size())));
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(edges.size())));
  if (n_train + n_val > edges.size()) throw std::invalid_argument("split_edges: rounding overflow");

  EdgeSplit split;
  split.train_graph = g;
  for (std::size_t k = n_train; k < edges.size(); ++k) split.train_graph.set_edge(edges[k].first, edges[k].second, false);
  std::set<std::uint64_t> taken;
  auto fill = [&](PairSet& set, std::size_t begin, std::size_t end) {
    set.mode = PairMode::kBalancedNegative;
    for (std::size_t k = begin; k < end; ++k) {
      set.pairs.push_back({edges[k].first, edges[k].second, 1});
      taken.insert(pair_key(edges[k].first, edges[k].second));
    }
  };
  fill(split.validation, n_train, n_train + n_val);
  fill(split.test, n_train + n_val, edges.size());
  auto val_neg = sample_non_edges(g, split.validation.pairs.size(), taken, rng);
  split.validation.pairs.insert(split.validation.pairs.end(), val_neg.begin(), val_neg.end());
  auto test_neg = sample_non_edges(g, split.test.pairs.size(), taken, rng);
  split.test.pairs.insert(split.test.pairs.end(), test_neg.begin(), test_neg.end());
  return split;
}

nlohmann::json pair_set_to_json(const PairSet& p) {
  auto pairs = nlohmann::json::array();
  for (const auto& q : p.pairs) pairs.push_back({q.i, q.j, q.label});
  return {{"mode", p.mode == PairMode::kFullUniverse ? "full" : "balanced"}, {"pairs", pairs}};
}

PairSet pair_set_from_json(const nlohmann::json& j) {
  PairSet p;
  p.mode = j.at("mode").get<std::string>() == "full" ? PairMode::kFullUniverse : PairMode::kBalancedNegative;
  for (const auto& q : j.at("pairs")) p.pairs.push_back({q.at(0).get<std::size_t>(), q.at(1).get<std::size_t>(), q.at(2).get<int>()});
  return p;
}

// ---------------------------------------------------------------------------

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum over positives of (#negatives strictly below + half the tied ones).
  double wins = 0.0;
  std::size_t negatives_below = 0, positives = 0, negatives = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    std::size_t pos = 0, neg = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      if (labels[order[end]] == 1)
        ++pos;
      else if (labels[order[end]] == 0)
        ++neg;
      else
        throw std::invalid_argument("auc: labels must be 0 or 1");
      ++end;
    }
    wins += static_cast<double>(pos) * (static_cast<double>(negatives_below) + 0.5 * static_cast<double>(neg));
    negatives_below += neg;
    positives += pos;
    negatives += neg;
    start = end;
  }
  if (positives == 0 || negatives == 0) throw std::invalid_argument("auc: need at least one positive and one negative");
  return wins / (static_cast<double>(positives) * static_cast<double>(negatives));
}

FairnessGaps fairness_metrics(const PairSet& pairs, std::span<const double> scores, std::span<const int> sensitive,
                              double threshold) {
  if (scores.size() != pairs.pairs.size()) throw std::invalid_argument("fairness_metrics: one score per pair required");
  // [same group?][all | label 1] counts of pairs and of positive predictions
  std::size_t total[2][2] = {}, predicted[2][2] = {};
  for (std::size_t k = 0; k < pairs.pairs.size(); ++k) {
    const auto& p = pairs.pairs[k];
    if (p.i >= sensitive.size() || p.j >= sensitive.size()) throw std::out_of_range("fairness_metrics: node out of range");
    const int same = sensitive[p.i] == sensitive[p.j] ? 1 : 0;
    const int pred = scores[k] >= threshold ? 1 : 0;
    ++total[same][0];
    predicted[same][0] += pred;
    if (p.label == 1) {
      ++total[same][1];
      predicted[same][1] += pred;
    }
  }
  if (total[1][0] == 0) throw std::invalid_argument("fairness_metrics: no same-group pairs");
  if (total[0][0] == 0) throw std::invalid_argument("fairness_metrics: no cross-group pairs");
  if (total[1][1] == 0) throw std::invalid_argument("fairness_metrics: no same-group pairs labelled 1");
  if (total[0][1] == 0) throw std::invalid_argument("fairness_metrics: no cross-group pairs labelled 1");
  auto rate = [&](int same, int cell) {
    return static_cast<double>(predicted[same][cell]) / static_cast<double>(total[same][cell]);
  };
  return {100.0 * std::abs(rate(1, 0) - rate(0, 0)), 100.0 * std::abs(rate(1, 1) - rate(0, 1))};
}

double wasserstein1_empirical(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_empirical: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  if (x.size() == y.size()) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
    return s / static_cast<double>(x.size());
  }
  // Integrate |F_x^-1(u) - F_y^-1(u)| over u in [0, 1]; both quantile
  // functions are constant between consecutive breakpoints k/n and l/m.
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < x.size() && j < y.size()) {
    const double next_x = static_cast<double>(i + 1) / n;
    const double next_y = static_cast<double>(j + 1) / m;
    const double next = std::min(next_x, next_y);
    total += (next - u) * std::abs(x[i] - y[j]);
    u = next;
    if (next_x <= next) ++i;
    if (next_y <= next) ++j;
  }
  return total;
}

std::vector<std::size_t> pareto_frontier(std::span<const ParetoPoint> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a].utility > points[b].utility;
  });
  std::vector<std::size_t> out;
  double best_above = -std::numeric_limits<double>::infinity();  // best fairness at strictly higher utility
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    double group_best = -std::numeric_limits<double>::infinity();
    while (end < order.size() && points[order[end]].utility == points[order[start]].utility) {
      group_best = std::max(group_best, points[order[end]].fairness);
      ++end;
    }
    for (std::size_t k = start; k < end; ++k) {
      const double f = points[order[k]].fairness;
      if (f > best_above && f == group_best) out.push_back(order[k]);
    }
    best_above = std::max(best_above, group_best);
    start = end;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string pareto_svg(std::span<const ParetoPoint> points, std::span<const std::string> labels,
                       const std::string& x_label, const std::string& y_label) {
  const double width = 480, height = 360, margin = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points[0].utility;
    y0 = y1 = points[0].fairness;
    for (const auto& p : points) {
      x0 = std::min(x0, p.utility), x1 = std::max(x1, p.utility);
      y0 = std::min(y0, p.fairness), y1 = std::max(y1, p.fairness);
    }
    const double px = std::max((x1 - x0) * 0.1, 1e-6), py = std::max((y1 - y0) * 0.1, 1e-6);
    x0 -= px, x1 += px, y0 -= py, y1 += py;
  }
  auto sx = [&](double x) { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); };
  auto sy = [&](double y) { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); };
  const auto frontier = pareto_frontier(points);
  std::vector<bool> on_front(points.size(), false);
  for (std::size_t k : frontier) on_front[k] = true;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  svg << "<text x=\"15\" y=\"" << height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << height / 2
      << ")\">" << y_label << "</text>\n";
  svg << "<text x=\"" << margin << "\" y=\"" << height - margin + 15 << "\" font-size=\"10\">" << format_double(x0)
      << "</text>\n";
  svg << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 15 << "\" font-size=\"10\" "
      << "text-anchor=\"end\">" << format_double(x1) << "</text>\n";
  svg << "<text x=\"" << margin - 5 << "\" y=\"" << height - margin << "\" font-size=\"10\" text-anchor=\"end\">"
      << format_double(y0) << "</text>\n";
  svg << "<text x=\"" << margin - 5 << "\" y=\"" << margin + 10 << "\" font-size=\"10\" text-anchor=\"end\">"
      << format_double(y1) << "</text>\n";
  if (frontier.size() > 1) {
    auto sorted = frontier;
    std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return points[a].utility < points[b].utility; });
    svg << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-dasharray=\"4 3\" points=\"";
    for (std::size_t k : sorted) svg << sx(points[k].utility) << ',' << sy(points[k].fairness) << ' ';
    svg << "\"/>\n";
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    svg << "<circle cx=\"" << sx(points[k].utility) << "\" cy=\"" << sy(points[k].fairness) << "\" r=\"4\" fill=\""
        << (on_front[k] ? "#c0392b" : "#7f8c8d") << "\"/>\n";
    if (k < labels.size())
      svg << "<text x=\"" << sx(points[k].utility) + 6 << "\" y=\"" << sy(points[k].fairness) - 6
          << "\" font-size=\"10\">" << labels[k] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

FairnessReport evaluate_predictor(const LinkPredictor& predictor, const Graph& original, const EdgeSplit& split,
                                  const EvalConfig& config) {
  const Eigen::MatrixXd z = predictor.embed(split.train_graph);
  FairnessReport r;
  r.threshold = config.threshold;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : split.test.pairs) {
    scores.push_back(LinkPredictor::score(z, p.i, p.j));
    labels.push_back(p.label);
  }
  r.auc = auc(scores, labels);
  const PairSet universe = original.n_nodes() <= config.full_universe_limit ? full_pair_universe(original) : split.test;
  scores.clear();
  for (const auto& p : universe.pairs) scores.push_back(LinkPredictor::score(z, p.i, p.j));
  const auto gaps = fairness_metrics(universe, scores, original.sensitive(), config.threshold);
  r.delta_sp = gaps.delta_sp;
  r.delta_eo = gaps.delta_eo;
  return r;
}

}  // namespace fairgen
