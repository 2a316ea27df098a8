#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairgen/graph.hpp"

namespace fairgen {

/// Target categorical marginal of every channel: the edge on/off bit, each
/// feature column and the sensitive class.
struct ChannelMarginals {
  double edge = 0.0;
  std::vector<std::vector<double>> features;
  std::vector<double> sensitive;
};

/// Empirical channel frequencies of a graph (edge rate over unordered pairs).
ChannelMarginals estimate_marginals(const Graph& g);

/// Marginal-transition corruption schedule. Step t keeps a state with
/// probability retain(t) and otherwise resamples it from the channel
/// marginal, so after t steps a state survives with probability
/// alpha_bar(t) = prod_{s<=t} retain(s) and is otherwise a fresh marginal
/// draw.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// `retain` holds alpha_1..alpha_T, each in [0, 1]; alpha_bar(T) must be
  /// below 0.05 so that step T is close to the prior.
  NoiseSchedule(std::vector<double> retain, ChannelMarginals marginals);

  /// alpha_bar decreasing linearly from 1 at t = 0 to `final_alpha_bar` at
  /// t = steps.
  static NoiseSchedule linear(int steps, ChannelMarginals marginals, double final_alpha_bar = 0.02);

  int steps() const { return static_cast<int>(retain_.size()); }
  double retain(int t) const { return retain_.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  const ChannelMarginals& marginals() const { return marginals_; }

 private:
  std::vector<double> retain_;
  std::vector<double> alpha_bar_;  // index 0..T, alpha_bar_[0] == 1
  ChannelMarginals marginals_;
};

nlohmann::json schedule_to_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

/// Training configuration for the learned denoiser.
struct DenoiserHyper {
  int epochs = 300;
  double learning_rate = 0.05;
};

/// Clean-state ("x0") predictor used by the reverse process.
///
/// The oracle kind predicts an edge between nodes of conditioning classes
/// (a, b) with probability density[a][b] regardless of the noisy state, and
/// feature codes from class-conditional frequencies. The learned kind is a
/// single logistic layer: the edge logit is pair_logit[a][b] plus a learned
/// multiple of the noisy edge bit's log-likelihood ratio at the current step;
/// each feature column has an analogous softmax head over codes.
///
/// The sensitive channel's clean-state prediction is always the conditioning
/// class itself.
class Denoiser {
 public:
  enum class Kind { kOracle, kLearned };

  /// Oracle built from a graph: realized class-pair densities,
  /// class-conditional feature frequencies and class marginals.
  static Denoiser oracle(const Graph& g);
  static Denoiser oracle(DensityMatrix density, std::vector<std::vector<std::vector<double>>> feature_profiles,
                         std::vector<double> class_marginals);

  Kind kind() const { return kind_; }
  int n_classes() const { return static_cast<int>(class_marginals_.size()); }
  std::span<const int> feature_classes() const { return feature_classes_; }
  const std::vector<double>& class_marginals() const { return class_marginals_; }

  /// P(clean edge | conditioning classes, noisy edge bit at step t).
  double edge_probability(int class_i, int class_j, int noisy_edge, int t, const NoiseSchedule& sched) const;

  /// Writes P(clean code | class, noisy code at step t) for one column.
  void feature_distribution(int cls, std::size_t column, int noisy_code, int t, const NoiseSchedule& sched,
                            std::span<double> out) const;

  /// Edge probability the model assigns a class pair with no evidence from
  /// the noisy state (the oracle density, or sigmoid(pair_logit) when
  /// learned).
  double prior_edge_probability(int class_i, int class_j) const;

  // Oracle parameters.
  const DensityMatrix& density() const { return density_; }
  /// [class][column][code]
  const std::vector<std::vector<std::vector<double>>>& feature_profiles() const { return feature_profiles_; }

  // Learned parameters.
  const ClassMatrix& pair_logits() const { return pair_logits_; }
  double edge_evidence_weight() const { return edge_evidence_weight_; }
  /// [column][class][code]
  const std::vector<ClassMatrix>& feature_logits() const { return feature_logits_; }
  const std::vector<double>& feature_evidence_weights() const { return feature_evidence_weights_; }

  bool operator==(const Denoiser&) const = default;

  friend Denoiser train_denoiser(const Graph&, const NoiseSchedule&, const DenoiserHyper&, std::uint64_t);
  friend Denoiser denoiser_from_json(const nlohmann::json&);

 private:
  Kind kind_ = Kind::kOracle;
  std::vector<double> class_marginals_;
  std::vector<int> feature_classes_;
  DensityMatrix density_;
  std::vector<std::vector<std::vector<double>>> feature_profiles_;
  ClassMatrix pair_logits_;
  double edge_evidence_weight_ = 1.0;
  std::vector<ClassMatrix> feature_logits_;
  std::vector<double> feature_evidence_weights_;
};

/// Fits a learned denoiser by per-channel cross-entropy between its clean
/// state predictions and the clean graph, over forward-noised copies at every
/// step in every epoch. Deterministic in `seed`. Throws std::runtime_error on
/// a non-finite loss.
Denoiser train_denoiser(const Graph& g, const NoiseSchedule& sched, const DenoiserHyper& hyper, std::uint64_t seed);

/// Checkpoint {kind, density?, feature_profiles?, marginals, weights?}.
nlohmann::json denoiser_to_json(const Denoiser& d);
Denoiser denoiser_from_json(const nlohmann::json& j);

struct GenerationState {
  int step = 0;
  Graph graph;
  /// Sensitive classes the reverse kernel is conditioned on.
  std::vector<int> conditioning;
  /// When non-empty, conditions the feature and sensitive channels instead
  /// of `conditioning` (which then drives the edges only).
  std::vector<int> node_conditioning;
};

/// Forward corruption of every channel to step t. One draw per unordered
/// node pair keeps the adjacency symmetric.
Graph forward_noise(const Graph& g, int t, const NoiseSchedule& sched, std::uint64_t seed);

/// One reverse transition from state.step to state.step - 1.
GenerationState reverse_step(const Denoiser& d, const GenerationState& state, const NoiseSchedule& sched,
                             std::uint64_t seed);

/// Draws G^(T) from the channel marginals; its sensitive channel doubles as
/// the initial conditioning.
GenerationState sample_prior(const Denoiser& d, const NoiseSchedule& sched, std::size_t n_nodes, std::uint64_t seed);

/// Full reverse chain from the prior. The random stream of step t is
/// derive_seed(seed, {t}) and the prior uses derive_seed(seed, {0}).
Graph generate(const Denoiser& d, const NoiseSchedule& sched, std::size_t n_nodes, std::uint64_t seed);

/// Distribution of x_{t-1} given x_t and a clean-state prediction under the
/// marginal-transition family. Exposed for testing.
std::vector<double> reverse_posterior(int noisy, std::span<const double> clean_prediction,
                                      std::span<const double> marginal, double retain_t, double alpha_bar_prev);

}  // namespace fairgen
