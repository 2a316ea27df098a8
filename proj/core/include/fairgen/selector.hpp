#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairgen/diffusion.hpp"
#include "fairgen/fgw.hpp"
#include "fairgen/switching.hpp"

namespace fairgen {

struct TauRow {
  int tau = 0;
  int samples = 0;
  double mean_fgw = 0.0;
  double mean_entropy = 0.0;
  /// mean_fgw - gamma * mean_entropy
  double mean_objective = 0.0;
  double stderr_fgw = 0.0;
  double stderr_entropy = 0.0;
  double stderr_objective = 0.0;
  /// Per-sample values in sample order.
  std::vector<double> fgw;
  std::vector<double> entropy;
};

struct TauObjectiveTable {
  double gamma = 0.5;
  /// One row per tau = T-1, ..., 1.
  std::vector<TauRow> rows;
  int tau_star = 0;
};

struct SelectorConfig {
  double gamma = 0.5;
  int samples = 5;
  double fgw_alpha = 0.5;
  FGWOptions fgw{1e-9, 100, FGWInit::kBest, 0, 0};
  SwitchScope scope = SwitchScope::kEdgesOnly;
};

/// Generation seed of sample m. It does not depend on tau, so every row is
/// evaluated on the same random streams.
std::uint64_t selector_sample_seed(std::uint64_t master, int sample_index);

/// Grid search of tau over {T-1, ..., 1}: M switched graphs per candidate,
/// each scored by FGW(original, sample) and the edge entropy of the sample.
/// The lowest mean FGW - gamma * H wins; ties go to the larger tau.
TauObjectiveTable select_tau(const Denoiser& d, const NoiseSchedule& sched, const Graph& original, double rho,
                             const SwitchDistribution& dist, const SelectorConfig& config, std::uint64_t seed);

/// Index into `rows` of the selected row under `gamma`.
std::size_t select_row(const std::vector<TauRow>& rows, double gamma);

/// Same samples, objective recomputed under another gamma.
TauObjectiveTable reweight(const TauObjectiveTable& table, double gamma);

/// CSV with columns tau, mean_fgw, mean_H, mean_objective, stderr.
std::string tau_table_csv(const TauObjectiveTable& table);
nlohmann::json tau_table_to_json(const TauObjectiveTable& table);
TauObjectiveTable tau_table_from_json(const nlohmann::json& j);

}  // namespace fairgen
