#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairgen/diffusion.hpp"
#include "fairgen/eval.hpp"
#include "fairgen/fgw.hpp"
#include "fairgen/graph.hpp"
#include "fairgen/report.hpp"
#include "fairgen/selector.hpp"
#include "fairgen/switching.hpp"

namespace fairgen {

struct SbmWorld {
  std::vector<std::size_t> counts;
  ClassMatrix density;
  std::vector<int> features;
  std::uint64_t seed = 1;
};

struct FileWorld {
  std::string edges;
  std::string attributes;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  int samples = 10;
  bool pareto_svg = true;

  std::optional<SbmWorld> sbm;
  std::optional<FileWorld> files;

  int steps = 3;
  double final_alpha_bar = 0.02;

  std::string denoiser = "learned";  // learned | oracle
  DenoiserHyper denoiser_hyper;

  SwitchKind dist = SwitchKind::kUniform;
  double gamma = 0.5;
  int tau_samples = 5;
  std::optional<double> rho;
  std::optional<int> tau;
  SwitchScope scope = SwitchScope::kEdgesOnly;
  PairCounting pair_counting = PairCounting::kExact;

  double fgw_alpha = 0.5;
  FGWOptions fgw{1e-9, 100, FGWInit::kBest, 0, 0};

  std::uint64_t split_seed = 1;
  double train_fraction = 0.85;
  double validation_fraction = 0.05;
  EvalConfig eval;

  /// Throws std::invalid_argument describing the first problem found.
  void validate() const;
};

/// Sections: world.{sbm|files}, schedule, denoiser, switch, fgw, eval, plus
/// top-level seed, out, samples and pareto_svg. Unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);

/// A stage failure; the message starts with the stage name.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Stages, usable on their own.
Graph load_world(const RunConfig& c);
EdgeSplit make_split(const Graph& g, const RunConfig& c);
nlohmann::json split_to_json(const EdgeSplit& s);
EdgeSplit split_from_json(const Graph& original, const nlohmann::json& j);
NoiseSchedule make_schedule(const Graph& g, const RunConfig& c);
Denoiser make_denoiser(const Graph& g, const NoiseSchedule& sched, const RunConfig& c);
SwitchDistribution make_distribution(const Graph& g, SwitchKind kind);

struct RhoEstimate {
  ImbalanceModel model;
  double rho = 0.0;
  std::string warning;
};
RhoEstimate estimate_rho(const Graph& g, const SwitchDistribution& dist, PairCounting counting);
nlohmann::json rho_estimate_to_json(const RhoEstimate& r);

/// Trains a link predictor on `sample` and scores it on the original split;
/// FGW, entropy and topology distances compare `sample` with `reference`.
FairnessReport evaluate_sample(const Graph& sample, const Graph& reference, const Graph& original,
                               const EdgeSplit& split, const RunConfig& c, std::uint64_t seed,
                               LinkPredictor* predictor_out = nullptr);

/// Metrics of an already trained predictor; identical to what
/// evaluate_sample reports for the same inputs.
FairnessReport score_sample(const LinkPredictor& predictor, const Graph& sample, const Graph& reference,
                            const Graph& original, const EdgeSplit& split, const RunConfig& c);

struct PipelineResult {
  RhoEstimate rho;
  double rho_used = 0.0;
  TauObjectiveTable tau_table;
  int tau_used = 0;
  std::vector<ReportRow> switched;
  std::vector<ReportRow> control;
  nlohmann::json report;
};

std::uint64_t sample_seed(std::uint64_t master, int k);
std::uint64_t predictor_seed(std::uint64_t master, int k);
std::uint64_t tau_seed(std::uint64_t master);

SelectorConfig selector_config(const RunConfig& c);

/// Switched graphs with their plans, and the paired rho = 0 control for
/// each (same generation seed, same tau).
struct SampleSet {
  double rho = 0.0;
  int tau = 1;
  std::vector<Graph> switched;
  std::vector<SwitchPlan> plans;
  std::vector<Graph> control;
};

SampleSet generate_samples(const Denoiser& d, const NoiseSchedule& sched, std::size_t n_nodes, const RunConfig& c,
                           double rho, int tau, const SwitchDistribution& dist);
/// samples/sample_<k>.json, samples/plan_<k>.json, samples/control_<k>.json
void write_samples(const SampleSet& set, const std::filesystem::path& out_dir);
SampleSet read_samples(const std::filesystem::path& out_dir);

struct EvaluatedSamples {
  std::vector<ReportRow> switched;
  std::vector<ReportRow> control;
};

/// Also writes predictors/<run_id>.json for every row.
EvaluatedSamples evaluate_samples(const SampleSet& set, const Graph& reference, const Graph& original,
                                  const EdgeSplit& split, const RunConfig& c, const std::filesystem::path& out_dir);

std::string pareto_plot(const std::vector<ReportRow>& rows);

/// report.csv, report.json and (if enabled) pareto.svg. Returns the JSON report.
nlohmann::json write_report(const RunConfig& c, const std::filesystem::path& out_dir, const RhoEstimate* rho,
                            const TauObjectiveTable* table, const SampleSet& set, const EvaluatedSamples& rows);

/// Full run: split, backbone, rho*, tau*, `samples` switched graphs with a
/// paired rho = 0 control each, evaluation and reports. Everything is
/// written under `out_dir`. A failing stage writes partial_state.json and
/// throws PipelineError.
PipelineResult run_pipeline(const RunConfig& c, const std::filesystem::path& out_dir);

}  // namespace fairgen
