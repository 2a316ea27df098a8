#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairgen/graph.hpp"

namespace fairgen {

/// Fused Gromov-Wasserstein problem between two graphs of the same size.
struct FGWProblem {
  Eigen::MatrixXd feature_cost;  // M
  Eigen::MatrixXd internal_src;  // C1 (symmetric)
  Eigen::MatrixXd internal_dst;  // C2 (symmetric)
  double alpha = 0.5;
  Eigen::VectorXd h, g;

  /// Normalized-Hamming feature cost, adjacency internal costs and uniform
  /// marginals.
  static FGWProblem between(const Graph& src, const Graph& dst, double alpha = 0.5);

  /// Throws std::invalid_argument on shape mismatch, negative or non-finite
  /// costs, alpha outside [0,1] or marginals not summing to 1.
  void validate() const;
};

struct Coupling {
  Eigen::MatrixXd plan;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective after every accepted iterate of the returned start.
  std::vector<double> history;
};

enum class FGWInit {
  kBest,      // product and identity starts, best result returned
  kProduct,   // h g^T
  kIdentity,  // diag(h); requires h == g
};

/// M(i, j) = fraction of categorical channels on which node i of `a` and node
/// j of `b` disagree. Channels are the feature columns plus, when
/// `include_sensitive`, the sensitive attribute.
Eigen::MatrixXd feature_cost_matrix(const Graph& a, const Graph& b, bool include_sensitive = true);

/// Adjacency as a real 0/1 matrix.
Eigen::MatrixXd internal_cost_matrix(const Graph& g);

/// alpha <M, P> + (1 - alpha) sum_{ijkl} (C1_ik - C2_jl)^2 P_ij P_kl, for a
/// plan P with marginals (h, g).
double fgw_objective(const FGWProblem& prob, const Eigen::MatrixXd& plan);

struct FGWOptions {
  double tol = 1e-9;
  int max_iter = 100;
  FGWInit init = FGWInit::kBest;
  /// kBest with uniform marginals on equal sizes: minimum number of extra
  /// starts from seeded random permutations. Small problems get more, up to
  /// 512 / n.
  int restarts = 8;
  std::uint64_t seed = 0;
};

/// Frank-Wolfe with an exact linear OT oracle and exact line search. Each run
/// stops when the relative objective decrease falls below `tol`, when the
/// step length is zero, or after `max_iter` iterations.
///
/// With kBest the product and identity starts are always tried. When both
/// marginals are uniform over the same number of nodes, the feature-only
/// assignment and `restarts` random permutations are tried as well, each
/// polished by alternating pairwise-swap descent over permutation couplings
/// with Frank-Wolfe. The lowest objective wins.
Coupling fgw_distance(const FGWProblem& prob, const FGWOptions& options = {});

struct EntropyReport {
  /// (p_ss, p_ss') per class over edge-endpoint incidences; (0, 0) for a
  /// class with no incident edge.
  std::vector<std::pair<double, double>> per_class;
  double total = 0.0;
};

/// Binary entropy (natural log) of same-class vs cross-class incidence per
/// sensitive class, summed over classes.
EntropyReport edge_entropy(const Graph& g);

}  // namespace fairgen
