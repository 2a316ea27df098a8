#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairgen/diffusion.hpp"
#include "fairgen/graph.hpp"

namespace fairgen {

enum class SwitchKind { kUniform, kPrior };

/// Conditional law p(k | l) of the replacement class of a switched node whose
/// original class is l. The diagonal is zero.
struct SwitchDistribution {
  SwitchKind kind = SwitchKind::kUniform;
  ClassMatrix conditional;

  int n_classes() const { return static_cast<int>(conditional.size()); }

  /// 1/(K-1) off the diagonal. Throws for K < 2.
  static SwitchDistribution uniform(int n_classes);
  /// Row l proportional to the class marginals with class l removed. A row
  /// whose remaining mass is zero falls back to uniform.
  static SwitchDistribution prior(std::span<const double> class_marginals);
};

std::string to_string(SwitchKind kind);
SwitchKind switch_kind_from_string(const std::string& name);

/// How interior node pairs of a class of size N are counted: exactly as
/// N(N-1)/2, or with the large-N form N^2/2.
enum class PairCounting { kExact, kSquared };

/// Expected interior / exterior edge counts after switching a fraction rho
/// of nodes, as quadratics in rho:
///   E[int](rho) = r2_int rho^2 + r1_int rho + base_int
///   E[ext](rho) = r2_ext rho^2 + r1_ext rho + base_ext
/// The grouped imbalance R(rho) = r2 rho^2 + r1 rho + r0 is E[ext] - E[int].
struct ImbalanceModel {
  double r2 = 0.0, r1 = 0.0, r0 = 0.0;
  double r2_int = 0.0, r1_int = 0.0;
  double r2_ext = 0.0, r1_ext = 0.0;
  double base_int = 0.0, base_ext = 0.0;
  std::vector<std::size_t> counts;
  ClassMatrix density;

  double expected_interior(double rho) const { return (r2_int * rho + r1_int) * rho + base_int; }
  double expected_exterior(double rho) const { return (r2_ext * rho + r1_ext) * rho + base_ext; }
  double imbalance(double rho) const { return (r2 * rho + r1) * rho + r0; }
  /// sign(r0) * imbalance(rho), the quantity optimal_rho minimizes.
  double objective(double rho) const;
};

ImbalanceModel switch_coefficients(std::span<const std::size_t> counts, const DensityMatrix& density,
                                   const SwitchDistribution& dist, PairCounting counting = PairCounting::kExact);

/// Uses the graph's class counts and realized densities; the base counts are
/// the graph's exact interior and exterior edge counts.
ImbalanceModel switch_coefficients(const Graph& g, const SwitchDistribution& dist,
                                   PairCounting counting = PairCounting::kExact);

/// Closed-form minimizer of model.objective over [0, 1]; ties go to the
/// smaller rho. If switching cannot move the imbalance (r2 = r1 = 0, r0 != 0)
/// returns 0 and, when `warning` is given, stores a message in it.
double optimal_rho(const ImbalanceModel& model, std::string* warning = nullptr);

/// Each node is included independently with probability rho. Node i is
/// included iff its uniform draw is below rho, so for a fixed seed the set
/// grows monotonically with rho.
std::vector<std::size_t> sample_switch_set(std::size_t n_nodes, double rho, std::uint64_t seed);

std::vector<int> sample_new_attributes(std::span<const int> sensitive, std::span<const std::size_t> switched,
                                       const SwitchDistribution& dist, std::uint64_t seed);

/// Which reverse-kernel channels follow the switched attributes.
enum class SwitchScope { kAllChannels, kEdgesOnly };

std::string to_string(SwitchScope scope);
SwitchScope switch_scope_from_string(const std::string& name);

struct SwitchRequest {
  double rho = 0.0;
  int tau = 1;
  SwitchDistribution dist;
  SwitchScope scope = SwitchScope::kAllChannels;
};

struct SwitchPlan {
  double rho = 0.0;
  int tau = 1;
  std::vector<std::size_t> switched;
  std::vector<int> new_attrs;
  /// [original class][new class] counts over the switched set.
  std::vector<std::vector<std::size_t>> n_switched_by_pair;
};

nlohmann::json switch_plan_to_json(const SwitchPlan& plan);
SwitchPlan switch_plan_from_json(const nlohmann::json& j);

/// Reverse chain with an attribute switch at step tau. Steps T..tau+1 run on
/// the sampled attributes; the switch set and new attributes are drawn when
/// the chain reaches step tau; steps tau..1 run on the new attributes. The
/// per-step random streams are those of generate(), so rho = 0 reproduces it
/// exactly. The returned graph carries the original attributes.
std::pair<Graph, SwitchPlan> generate_with_switching(const Denoiser& d, const NoiseSchedule& sched,
                                                     std::size_t n_nodes, const SwitchRequest& request,
                                                     std::uint64_t seed);

}  // namespace fairgen
