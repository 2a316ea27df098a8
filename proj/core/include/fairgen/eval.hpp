#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fairgen/graph.hpp"

namespace fairgen {

struct LinkPredictorHyper {
  int dim = 16;
  int epochs = 200;
  double learning_rate = 0.01;
  bool include_sensitive_feature = false;
  bool operator==(const LinkPredictorHyper&) const = default;
};

/// One-layer graph autoencoder: Z = A_hat X W with A_hat the symmetric
/// normalized adjacency with self-loops and X the one-hot encoding of the
/// categorical feature columns; the score of a pair is sigmoid(z_i . z_j).
class LinkPredictor {
 public:
  LinkPredictor() = default;
  LinkPredictor(Eigen::MatrixXd weights, LinkPredictorHyper hyper, std::vector<int> feature_classes, int n_classes);

  const Eigen::MatrixXd& weights() const { return weights_; }
  const LinkPredictorHyper& hyper() const { return hyper_; }
  const std::vector<int>& feature_classes() const { return feature_classes_; }
  int n_classes() const { return n_classes_; }

  /// Embeddings of every node of `g`, propagating over g's edges.
  Eigen::MatrixXd embed(const Graph& g) const;
  static double score(const Eigen::MatrixXd& z, std::size_t i, std::size_t j);

  bool operator==(const LinkPredictor&) const = default;

 private:
  Eigen::MatrixXd weights_;
  LinkPredictorHyper hyper_;
  std::vector<int> feature_classes_;
  int n_classes_ = 0;
};

/// One-hot encoder input for a graph (sensitive block appended last when
/// requested).
Eigen::MatrixXd one_hot_features(const Graph& g, bool include_sensitive);

/// D^-1/2 (A + I) D^-1/2.
Eigen::MatrixXd normalized_adjacency(const Graph& g);

struct TrainingTrace {
  std::vector<double> loss;  // per epoch
};

/// Full-batch Adam on binary cross-entropy: all edges as positives and as
/// many uniformly drawn non-edges per epoch. Throws std::invalid_argument for
/// an edgeless graph and std::runtime_error on a non-finite loss.
LinkPredictor train_link_predictor(const Graph& train_graph, const LinkPredictorHyper& hyper, std::uint64_t seed,
                                   TrainingTrace* trace = nullptr);

nlohmann::json link_predictor_to_json(const LinkPredictor& p);
LinkPredictor link_predictor_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Pairs and splits

struct LabeledPair {
  std::size_t i = 0, j = 0;
  int label = 0;
  bool operator==(const LabeledPair&) const = default;
};

enum class PairMode { kFullUniverse, kBalancedNegative };

struct PairSet {
  std::vector<LabeledPair> pairs;
  PairMode mode = PairMode::kFullUniverse;
};

/// Every unordered pair i < j of g, labelled by adjacency.
PairSet full_pair_universe(const Graph& g);

/// Positives plus the same number of sampled non-edges of g, without
/// repeating an unordered pair.
PairSet balanced_pairs(const Graph& g, std::span<const Edge> positives, std::uint64_t seed);

struct EdgeSplit {
  Graph train_graph;  // original nodes, training edges only
  PairSet validation;
  PairSet test;
};

/// Shuffles the edges of g into train/validation/test parts of the given
/// fractions; validation and test receive matched non-edges of g, disjoint
/// from each other.
EdgeSplit split_edges(const Graph& g, double train_fraction, double validation_fraction, std::uint64_t seed);

nlohmann::json pair_set_to_json(const PairSet& p);
PairSet pair_set_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Metrics

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws unless both labels are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct FairnessGaps {
  double delta_sp = 0.0;  // percent
  double delta_eo = 0.0;  // percent
};

/// Predictions are scores[k] >= threshold. delta_sp compares the predicted
/// link rate over same-group and cross-group pairs; delta_eo does the same
/// over pairs labelled 1. Throws std::invalid_argument naming any empty cell.
FairnessGaps fairness_metrics(const PairSet& pairs, std::span<const double> scores, std::span<const int> sensitive,
                              double threshold = 0.5);

/// 1-Wasserstein distance between two empirical distributions.
double wasserstein1_empirical(std::span<const double> a, std::span<const double> b);

struct ParetoPoint {
  double utility = 0.0;
  double fairness = 0.0;
};

/// Indices (ascending) of the points no other point dominates, where q
/// dominates p if it is >= on both axes and > on at least one.
std::vector<std::size_t> pareto_frontier(std::span<const ParetoPoint> points);

/// Scatter of the points with the frontier highlighted.
std::string pareto_svg(std::span<const ParetoPoint> points, std::span<const std::string> labels,
                       const std::string& x_label, const std::string& y_label);

struct FairnessReport {
  double auc = 0.0;
  double delta_sp = 0.0;
  double delta_eo = 0.0;
  double entropy = 0.0;
  double threshold = 0.5;
  double fgw = 0.0;
  double w1_degree = 0.0;
  double w1_clustering = 0.0;
};

struct EvalConfig {
  double threshold = 0.5;
  /// Graphs up to this size use the full pair universe for the fairness
  /// gaps; larger ones use the test positives with matched negatives.
  std::size_t full_universe_limit = 2000;
  LinkPredictorHyper predictor;
};

/// Link-prediction utility and fairness of `predictor` on the original
/// graph: AUC on split.test, fairness gaps on the pair universe of the
/// original graph. Embeddings propagate over split.train_graph.
FairnessReport evaluate_predictor(const LinkPredictor& predictor, const Graph& original, const EdgeSplit& split,
                                  const EvalConfig& config);

}  // namespace fairgen
