#include "fairgen/fgw.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fairgen/random.hpp"
#include "fairgen/transport.hpp"

namespace fairgen {

Eigen::MatrixXd feature_cost_matrix(const Graph& a, const Graph& b, bool include_sensitive) {
  if (a.n_nodes() != b.n_nodes()) throw std::invalid_argument("feature_cost_matrix: node counts differ");
  if (a.n_features() != b.n_features()) throw std::invalid_argument("feature_cost_matrix: feature column counts differ");
  const std::size_t n = a.n_nodes();
  const std::size_t f = a.n_features();
  const std::size_t channels = f + (include_sensitive ? 1 : 0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  if (channels == 0) return m;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = a.feature_row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto rj = b.feature_row(j);
      std::size_t diff = 0;
      for (std::size_t c = 0; c < f; ++c) diff += ri[c] != rj[c];
      if (include_sensitive) diff += a.sensitive(i) != b.sensitive(j);
      m(i, j) = static_cast<double>(diff) / static_cast<double>(channels);
    }
  }
  return m;
}

Eigen::MatrixXd internal_cost_matrix(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  Eigen::MatrixXd c(n, n);
  const auto adj = g.adjacency();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c(i, j) = adj[i * n + j];
  return c;
}

FGWProblem FGWProblem::between(const Graph& src, const Graph& dst, double alpha) {
  FGWProblem p;
  p.feature_cost = feature_cost_matrix(src, dst);
  p.internal_src = internal_cost_matrix(src);
  p.internal_dst = internal_cost_matrix(dst);
  p.alpha = alpha;
  p.h = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(src.n_nodes()), 1.0 / static_cast<double>(src.n_nodes()));
  p.g = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dst.n_nodes()), 1.0 / static_cast<double>(dst.n_nodes()));
  return p;
}

void FGWProblem::validate() const {
  const auto n = h.size(), m = g.size();
  if (n == 0 || m == 0) throw std::invalid_argument("FGW: empty marginals");
  if (feature_cost.rows() != n || feature_cost.cols() != m) throw std::invalid_argument("FGW: feature cost must be n x m");
  if (internal_src.rows() != n || internal_src.cols() != n) throw std::invalid_argument("FGW: source cost must be n x n");
  if (internal_dst.rows() != m || internal_dst.cols() != m) throw std::invalid_argument("FGW: target cost must be m x m");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("FGW: alpha must lie in [0,1]");
  for (const auto* c : {&feature_cost, &internal_src, &internal_dst}) {
    if (!c->allFinite()) throw std::invalid_argument("FGW: non-finite cost");
    if ((c->array() < 0).any()) throw std::invalid_argument("FGW: negative cost");
  }
  if ((h.array() < 0).any() || (g.array() < 0).any()) throw std::invalid_argument("FGW: negative marginal");
  if (std::abs(h.sum() - 1.0) > 1e-12 || std::abs(g.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("FGW: marginals must sum to 1");
}

namespace {

// (C1^2) h 1^T + 1 g^T (C2^2)^T; together with -2 C1 P C2^T it gives the
// tensor product L (x) P for any P with marginals (h, g).
Eigen::MatrixXd constant_term(const FGWProblem& p) {
  const Eigen::VectorXd a = p.internal_src.array().square().matrix() * p.h;
  const Eigen::VectorXd b = p.internal_dst.array().square().matrix() * p.g;
  return a.replicate(1, p.g.size()) + b.transpose().replicate(p.h.size(), 1);
}

double objective_with(const FGWProblem& p, const Eigen::MatrixXd& constc, const Eigen::MatrixXd& plan) {
  const double linear = (p.feature_cost.array() * plan.array()).sum();
  const Eigen::MatrixXd tens = constc - 2.0 * p.internal_src * plan * p.internal_dst.transpose();
  const double quadratic = (tens.array() * plan.array()).sum();
  return p.alpha * linear + (1.0 - p.alpha) * quadratic;
}

Coupling frank_wolfe(const FGWProblem& p, const Eigen::MatrixXd& constc, Eigen::MatrixXd plan, double tol,
                     int max_iter) {
  Coupling out;
  double f = objective_with(p, constc, plan);
  out.history.push_back(f);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd cpc = p.internal_src * plan * p.internal_dst.transpose();
    const Eigen::MatrixXd tens = constc - 2.0 * cpc;
    const Eigen::MatrixXd grad = p.alpha * p.feature_cost + 2.0 * (1.0 - p.alpha) * tens;
    const Eigen::MatrixXd vertex = solve_linear_ot(grad, p.h, p.g);
    const Eigen::MatrixXd dir = vertex - plan;
    ++out.iterations;

    // f(P + s D) = f(P) + s b + s^2 a on the segment.
    const Eigen::MatrixXd tens_dir = -2.0 * p.internal_src * dir * p.internal_dst.transpose();
    const double a = (1.0 - p.alpha) * (tens_dir.array() * dir.array()).sum();
    const double b = p.alpha * (p.feature_cost.array() * dir.array()).sum() +
                     2.0 * (1.0 - p.alpha) * (tens.array() * dir.array()).sum();
    double step;
    if (a > 0.0)
      step = std::clamp(-b / (2.0 * a), 0.0, 1.0);
    else
      step = (a + b < 0.0) ? 1.0 : 0.0;
    if (step <= 0.0) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd next = plan + step * dir;
    const double f_next = objective_with(p, constc, next);
    if (!(f_next <= f)) {
      // Rounding made the exact step non-improving; stay put.
      out.converged = true;
      break;
    }
    const double decrease = f - f_next;
    plan = std::move(next);
    f = f_next;
    out.history.push_back(f);
    if (decrease <= tol * std::max(std::abs(out.history[out.history.size() - 2]), 1e-300)) {
      out.converged = true;
      break;
    }
  }
  out.plan = std::move(plan);
  out.objective = f;
  return out;
}

// Change of the (unscaled) quadratic sum when perm[a] and perm[b] swap.
double swap_delta(const FGWProblem& p, const std::vector<int>& perm, int a, int b, double w) {
  const int pa = perm[a], pb = perm[b];
  const auto& c1 = p.internal_src;
  const auto& c2 = p.internal_dst;
  double quad = 0.0;
  for (int k = 0; k < static_cast<int>(perm.size()); ++k) {
    if (k == a || k == b) continue;
    const int pk = perm[k];
    const double old_a = c1(a, k) - c2(pa, pk), new_a = c1(a, k) - c2(pb, pk);
    const double old_b = c1(b, k) - c2(pb, pk), new_b = c1(b, k) - c2(pa, pk);
    quad += new_a * new_a - old_a * old_a + new_b * new_b - old_b * old_b;
  }
  quad *= 2.0;  // (i, k) and (k, i) terms
  const double old_ab = c1(a, b) - c2(pa, pb), new_ab = c1(a, b) - c2(pb, pa);
  quad += 2.0 * (new_ab * new_ab - old_ab * old_ab);
  const double old_aa = c1(a, a) - c2(pa, pa), new_aa = c1(a, a) - c2(pb, pb);
  const double old_bb = c1(b, b) - c2(pb, pb), new_bb = c1(b, b) - c2(pa, pa);
  quad += new_aa * new_aa - old_aa * old_aa + new_bb * new_bb - old_bb * old_bb;
  const double lin = p.feature_cost(a, pb) + p.feature_cost(b, pa) - p.feature_cost(a, pa) - p.feature_cost(b, pb);
  return p.alpha * lin * w + (1.0 - p.alpha) * quad * w * w;
}

// Pairwise-swap descent over permutation couplings.
std::vector<int> swap_descent(const FGWProblem& p, std::vector<int> perm) {
  const int n = static_cast<int>(perm.size());
  const double w = 1.0 / n;
  bool improved = true;
  for (int pass = 0; improved && pass < 4 * n + 10; ++pass) {
    improved = false;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (swap_delta(p, perm, a, b, w) < -1e-15) {
          std::swap(perm[a], perm[b]);
          improved = true;
        }
  }
  return perm;
}

Eigen::MatrixXd permutation_plan(const std::vector<int>& perm) {
  const auto n = static_cast<Eigen::Index>(perm.size());
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) plan(i, perm[i]) = 1.0 / static_cast<double>(n);
  return plan;
}

// Nearest permutation to a plan (largest total mass).
std::vector<int> round_to_permutation(const Eigen::MatrixXd& plan) {
  return solve_assignment(-plan).row_to_col;
}

bool is_uniform_square(const FGWProblem& p) {
  const auto n = p.h.size();
  if (p.g.size() != n) return false;
  const double w = 1.0 / static_cast<double>(n);
  return (p.h.array() - w).abs().maxCoeff() <= 1e-15 && (p.g.array() - w).abs().maxCoeff() <= 1e-15;
}

}  // namespace

double fgw_objective(const FGWProblem& prob, const Eigen::MatrixXd& plan) {
  return objective_with(prob, constant_term(prob), plan);
}

Coupling fgw_distance(const FGWProblem& prob, const FGWOptions& options) {
  prob.validate();
  const double tol = options.tol;
  const int max_iter = options.max_iter;
  if (!(tol > 0.0)) throw std::invalid_argument("fgw_distance: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("fgw_distance: max_iter must be >= 1");
  if (options.restarts < 0) throw std::invalid_argument("fgw_distance: restarts must be >= 0");
  const Eigen::MatrixXd constc = constant_term(prob);
  const bool same_marginals = prob.h.size() == prob.g.size() && (prob.h - prob.g).cwiseAbs().maxCoeff() <= 1e-15;
  if (options.init == FGWInit::kIdentity && !same_marginals)
    throw std::invalid_argument("fgw_distance: identity start needs identical marginals");

  auto run = [&](Eigen::MatrixXd start) { return frank_wolfe(prob, constc, std::move(start), tol, max_iter); };
  if (options.init == FGWInit::kProduct) return run(prob.h * prob.g.transpose());
  if (options.init == FGWInit::kIdentity) return run(prob.h.asDiagonal());

  Coupling best = run(prob.h * prob.g.transpose());
  auto keep_better = [&](Coupling c) {
    if (c.objective < best.objective) best = std::move(c);
  };
  if (same_marginals) keep_better(run(prob.h.asDiagonal()));
  if (!is_uniform_square(prob)) return best;

  auto polish = [&](std::vector<int> perm) {
    Coupling local = run(permutation_plan(swap_descent(prob, std::move(perm))));
    for (int round = 0; round < 20; ++round) {
      Eigen::MatrixXd plan = permutation_plan(swap_descent(prob, round_to_permutation(local.plan)));
      if (!(objective_with(prob, constc, plan) < local.objective)) break;
      local = run(std::move(plan));
    }
    keep_better(std::move(local));
  };
  polish(round_to_permutation(best.plan));
  polish(solve_assignment(prob.feature_cost).row_to_col);
  const auto n = static_cast<std::size_t>(prob.h.size());
  Rng rng(options.seed);
  const int restarts = std::max(options.restarts, static_cast<int>(512 / n));
  for (int r = 0; r < restarts; ++r) {
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    polish(std::move(perm));
  }
  return best;
}

EntropyReport edge_entropy(const Graph& g) {
  const auto k = static_cast<std::size_t>(g.n_classes());
  std::vector<double> same(k, 0.0), total(k, 0.0);
  for (const auto& [i, j] : g.edges()) {
    const int a = g.sensitive(i), b = g.sensitive(j);
    total[a] += 1.0;
    total[b] += 1.0;
    if (a == b) same[a] += 2.0;
  }
  EntropyReport r;
  r.per_class.resize(k, {0.0, 0.0});
  auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
  for (std::size_t s = 0; s < k; ++s) {
    if (total[s] == 0.0) continue;
    const double p = same[s] / total[s];
    const double q = (total[s] - same[s]) / total[s];
    r.per_class[s] = {p, q};
    r.total += -plogp(p) - plogp(q);
  }
  return r;
}

}  // namespace fairgen
