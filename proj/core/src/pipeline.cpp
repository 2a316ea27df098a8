#include "fairgen/pipeline.hpp"

#include <set>

#include "fairgen/random.hpp"

namespace fairgen {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTauStream = 2;
constexpr std::uint64_t kGenerateStream = 3;
constexpr std::uint64_t kPredictStream = 4;

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + where + "." + key + "'");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key) && !j[key].is_null()) into = j[key].get<T>();
}

}  // namespace

PipelineError::PipelineError(std::string stage, const std::string& what)
    : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

void RunConfig::validate() const {
  if (sbm.has_value() == files.has_value())
    throw std::invalid_argument("config: exactly one of world.sbm and world.files must be given");
  if (samples < 1) throw std::invalid_argument("config: samples must be >= 1");
  if (steps < 2) throw std::invalid_argument("config: schedule.steps must be >= 2");
  if (!(final_alpha_bar >= 0.0 && final_alpha_bar < 0.05))
    throw std::invalid_argument("config: schedule.final_alpha_bar must lie in [0, 0.05)");
  if (denoiser != "learned" && denoiser != "oracle")
    throw std::invalid_argument("config: denoiser.kind must be learned or oracle");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("config: switch.gamma must lie in [0,1]");
  if (tau_samples < 1) throw std::invalid_argument("config: switch.samples must be >= 1");
  if (rho && !(*rho >= 0.0 && *rho <= 1.0)) throw std::invalid_argument("config: switch.rho must lie in [0,1]");
  if (tau && (*tau < 1 || *tau > steps - 1)) throw std::invalid_argument("config: switch.tau must lie in [1, T-1]");
  if (!(fgw_alpha >= 0.0 && fgw_alpha <= 1.0)) throw std::invalid_argument("config: fgw.alpha must lie in [0,1]");
  if (!(train_fraction > 0.0) || !(validation_fraction >= 0.0) || train_fraction + validation_fraction >= 1.0)
    throw std::invalid_argument("config: eval fractions must leave a non-empty test split");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"seed", "out", "samples", "pareto_svg", "world", "schedule", "denoiser", "switch", "fgw", "eval"}, "");
  RunConfig c;
  read(j, "seed", c.seed);
  read(j, "out", c.out);
  read(j, "samples", c.samples);
  read(j, "pareto_svg", c.pareto_svg);
  if (!j.contains("world")) throw std::invalid_argument("config: missing world section");
  const auto& w = j.at("world");
  reject_unknown(w, {"sbm", "files"}, "world");
  if (w.contains("sbm")) {
    const auto& s = w["sbm"];
    reject_unknown(s, {"counts", "density", "features", "seed"}, "world.sbm");
    SbmWorld sbm;
    sbm.counts = s.at("counts").get<std::vector<std::size_t>>();
    sbm.density = s.at("density").get<ClassMatrix>();
    read(s, "features", sbm.features);
    read(s, "seed", sbm.seed);
    c.sbm = std::move(sbm);
  }
  if (w.contains("files")) {
    const auto& f = w["files"];
    reject_unknown(f, {"edges", "attributes"}, "world.files");
    c.files = FileWorld{f.at("edges").get<std::string>(), f.at("attributes").get<std::string>()};
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    reject_unknown(s, {"steps", "final_alpha_bar"}, "schedule");
    read(s, "steps", c.steps);
    read(s, "final_alpha_bar", c.final_alpha_bar);
  }
  if (j.contains("denoiser")) {
    const auto& d = j["denoiser"];
    reject_unknown(d, {"kind", "epochs", "learning_rate"}, "denoiser");
    read(d, "kind", c.denoiser);
    read(d, "epochs", c.denoiser_hyper.epochs);
    read(d, "learning_rate", c.denoiser_hyper.learning_rate);
  }
  if (j.contains("switch")) {
    const auto& s = j["switch"];
    reject_unknown(s, {"dist", "gamma", "samples", "rho", "tau", "scope", "pair_counting"}, "switch");
    if (s.contains("dist")) c.dist = switch_kind_from_string(s["dist"].get<std::string>());
    read(s, "gamma", c.gamma);
    read(s, "samples", c.tau_samples);
    if (s.contains("rho") && !s["rho"].is_null()) c.rho = s["rho"].get<double>();
    if (s.contains("tau") && !s["tau"].is_null()) c.tau = s["tau"].get<int>();
    if (s.contains("scope")) c.scope = switch_scope_from_string(s["scope"].get<std::string>());
    if (s.contains("pair_counting")) {
      const auto name = s["pair_counting"].get<std::string>();
      if (name == "exact")
        c.pair_counting = PairCounting::kExact;
      else if (name == "squared")
        c.pair_counting = PairCounting::kSquared;
      else
        throw std::invalid_argument("config: switch.pair_counting must be exact or squared");
    }
  }
  if (j.contains("fgw")) {
    const auto& f = j["fgw"];
    reject_unknown(f, {"alpha", "tol", "max_iter", "restarts", "init"}, "fgw");
    read(f, "alpha", c.fgw_alpha);
    read(f, "tol", c.fgw.tol);
    read(f, "max_iter", c.fgw.max_iter);
    read(f, "restarts", c.fgw.restarts);
    if (f.contains("init")) {
      const auto name = f["init"].get<std::string>();
      if (name == "best")
        c.fgw.init = FGWInit::kBest;
      else if (name == "product")
        c.fgw.init = FGWInit::kProduct;
      else if (name == "identity")
        c.fgw.init = FGWInit::kIdentity;
      else
        throw std::invalid_argument("config: fgw.init must be best, product or identity");
    }
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    reject_unknown(e, {"split_seed", "threshold", "pair_universe", "full_universe_limit", "train_fraction",
                       "validation_fraction", "dim", "epochs", "learning_rate", "include_sensitive_feature"},
                   "eval");
    read(e, "split_seed", c.split_seed);
    read(e, "threshold", c.eval.threshold);
    read(e, "full_universe_limit", c.eval.full_universe_limit);
    if (e.contains("pair_universe")) {
      const auto mode = e["pair_universe"].get<std::string>();
      if (mode == "balanced")
        c.eval.full_universe_limit = 0;
      else if (mode != "full")
        throw std::invalid_argument("config: eval.pair_universe must be full or balanced");
    }
    read(e, "train_fraction", c.train_fraction);
    read(e, "validation_fraction", c.validation_fraction);
    read(e, "dim", c.eval.predictor.dim);
    read(e, "epochs", c.eval.predictor.epochs);
    read(e, "learning_rate", c.eval.predictor.learning_rate);
    read(e, "include_sensitive_feature", c.eval.predictor.include_sensitive_feature);
  }
  c.validate();
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json world;
  if (c.sbm)
    world["sbm"] = {{"counts", c.sbm->counts}, {"density", c.sbm->density}, {"features", c.sbm->features}, {"seed", c.sbm->seed}};
  if (c.files) world["files"] = {{"edges", c.files->edges}, {"attributes", c.files->attributes}};
  const char* init = c.fgw.init == FGWInit::kBest ? "best" : (c.fgw.init == FGWInit::kProduct ? "product" : "identity");
  return {{"seed", c.seed},
          {"out", c.out},
          {"samples", c.samples},
          {"pareto_svg", c.pareto_svg},
          {"world", world},
          {"schedule", {{"steps", c.steps}, {"final_alpha_bar", c.final_alpha_bar}}},
          {"denoiser",
           {{"kind", c.denoiser}, {"epochs", c.denoiser_hyper.epochs}, {"learning_rate", c.denoiser_hyper.learning_rate}}},
          {"switch",
           {{"dist", to_string(c.dist)},
            {"gamma", c.gamma},
            {"samples", c.tau_samples},
            {"rho", c.rho ? nlohmann::json(*c.rho) : nlohmann::json(nullptr)},
            {"tau", c.tau ? nlohmann::json(*c.tau) : nlohmann::json(nullptr)},
            {"scope", to_string(c.scope)},
            {"pair_counting", c.pair_counting == PairCounting::kExact ? "exact" : "squared"}}},
          {"fgw",
           {{"alpha", c.fgw_alpha},
            {"tol", c.fgw.tol},
            {"max_iter", c.fgw.max_iter},
            {"restarts", c.fgw.restarts},
            {"init", init}}},
          {"eval",
           {{"split_seed", c.split_seed},
            {"threshold", c.eval.threshold},
            {"full_universe_limit", c.eval.full_universe_limit},
            {"train_fraction", c.train_fraction},
            {"validation_fraction", c.validation_fraction},
            {"dim", c.eval.predictor.dim},
            {"epochs", c.eval.predictor.epochs},
            {"learning_rate", c.eval.predictor.learning_rate},
            {"include_sensitive_feature", c.eval.predictor.include_sensitive_feature}}}};
}

// ---------------------------------------------------------------------------

Graph load_world(const RunConfig& c) {
  if (c.sbm) return sbm_generate(c.sbm->counts, c.sbm->density, c.sbm->features, c.sbm->seed);
  if (c.files) return load_graph(c.files->edges, c.files->attributes);
  throw std::invalid_argument("config: no world given");
}

EdgeSplit make_split(const Graph& g, const RunConfig& c) {
  return split_edges(g, c.train_fraction, c.validation_fraction, c.split_seed);
}

nlohmann::json split_to_json(const EdgeSplit& s) {
  auto edges = nlohmann::json::array();
  for (const auto& [u, v] : s.train_graph.edges()) edges.push_back({u, v});
  return {{"train_edges", edges}, {"validation", pair_set_to_json(s.validation)}, {"test", pair_set_to_json(s.test)}};
}

EdgeSplit split_from_json(const Graph& original, const nlohmann::json& j) {
  EdgeSplit s;
  s.train_graph = original;
  for (const auto& [u, v] : original.edges()) s.train_graph.set_edge(u, v, false);
  for (const auto& e : j.at("train_edges")) s.train_graph.set_edge(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), true);
  s.validation = pair_set_from_json(j.at("validation"));
  s.test = pair_set_from_json(j.at("test"));
  return s;
}

NoiseSchedule make_schedule(const Graph& g, const RunConfig& c) {
  return NoiseSchedule::linear(c.steps, estimate_marginals(g), c.final_alpha_bar);
}

Denoiser make_denoiser(const Graph& g, const NoiseSchedule& sched, const RunConfig& c) {
  if (c.denoiser == "oracle") return Denoiser::oracle(g);
  return train_denoiser(g, sched, c.denoiser_hyper, derive_seed(c.seed, {kTrainStream}));
}

SwitchDistribution make_distribution(const Graph& g, SwitchKind kind) {
  if (kind == SwitchKind::kUniform) return SwitchDistribution::uniform(g.n_classes());
  return SwitchDistribution::prior(estimate_marginals(g).sensitive);
}

RhoEstimate estimate_rho(const Graph& g, const SwitchDistribution& dist, PairCounting counting) {
  RhoEstimate r;
  r.model = switch_coefficients(g, dist, counting);
  r.rho = optimal_rho(r.model, &r.warning);
  return r;
}

nlohmann::json rho_estimate_to_json(const RhoEstimate& r) {
  const auto& m = r.model;
  return {{"rho", r.rho},
          {"warning", r.warning},
          {"R2", m.r2},
          {"R1", m.r1},
          {"R0", m.r0},
          {"R2_int", m.r2_int},
          {"R1_int", m.r1_int},
          {"R2_ext", m.r2_ext},
          {"R1_ext", m.r1_ext},
          {"E_int", m.base_int},
          {"E_ext", m.base_ext},
          {"counts", m.counts},
          {"density", m.density}};
}

FairnessReport score_sample(const LinkPredictor& predictor, const Graph& sample, const Graph& reference,
                            const Graph& original, const EdgeSplit& split, const RunConfig& c) {
  FairnessReport r = evaluate_predictor(predictor, original, split, c.eval);
  r.entropy = edge_entropy(sample).total;
  r.fgw = fgw_distance(FGWProblem::between(reference, sample, c.fgw_alpha), c.fgw).objective;
  r.w1_degree = wasserstein1_empirical(degree_sequence(reference), degree_sequence(sample));
  r.w1_clustering = wasserstein1_empirical(clustering_coefficients(reference), clustering_coefficients(sample));
  return r;
}

FairnessReport evaluate_sample(const Graph& sample, const Graph& reference, const Graph& original,
                               const EdgeSplit& split, const RunConfig& c, std::uint64_t seed,
                               LinkPredictor* predictor_out) {
  const LinkPredictor predictor = train_link_predictor(sample, c.eval.predictor, seed);
  if (predictor_out) *predictor_out = predictor;
  return score_sample(predictor, sample, reference, original, split, c);
}

std::uint64_t sample_seed(std::uint64_t master, int k) {
  return derive_seed(master, {kGenerateStream, static_cast<std::uint64_t>(k)});
}

std::uint64_t predictor_seed(std::uint64_t master, int k) {
  return derive_seed(master, {kPredictStream, static_cast<std::uint64_t>(k)});
}

std::uint64_t tau_seed(std::uint64_t master) { return derive_seed(master, {kTauStream}); }

SelectorConfig selector_config(const RunConfig& c) {
  SelectorConfig sel;
  sel.gamma = c.gamma;
  sel.samples = c.tau_samples;
  sel.fgw_alpha = c.fgw_alpha;
  sel.fgw = c.fgw;
  sel.scope = c.scope;
  return sel;
}

SampleSet generate_samples(const Denoiser& d, const NoiseSchedule& sched, std::size_t n_nodes, const RunConfig& c,
                           double rho, int tau, const SwitchDistribution& dist) {
  SampleSet set;
  set.rho = rho;
  set.tau = tau;
  for (int k = 0; k < c.samples; ++k) {
    const auto seed = sample_seed(c.seed, k);
    auto [g, plan] = generate_with_switching(d, sched, n_nodes, {rho, tau, dist, c.scope}, seed);
    auto [g0, plan0] = generate_with_switching(d, sched, n_nodes, {0.0, tau, dist, c.scope}, seed);
    set.switched.push_back(std::move(g));
    set.plans.push_back(std::move(plan));
    set.control.push_back(std::move(g0));
  }
  return set;
}

namespace {

std::filesystem::path sample_path(const std::filesystem::path& out, const std::string& kind, std::size_t k) {
  return out / "samples" / (kind + "_" + std::to_string(k) + ".json");
}

}  // namespace

void write_samples(const SampleSet& set, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "samples");
  for (std::size_t k = 0; k < set.switched.size(); ++k) {
    save_graph_json(set.switched[k], sample_path(out_dir, "sample", k));
    write_json(sample_path(out_dir, "plan", k), switch_plan_to_json(set.plans[k]));
    save_graph_json(set.control[k], sample_path(out_dir, "control", k));
  }
}

SampleSet read_samples(const std::filesystem::path& out_dir) {
  SampleSet set;
  for (std::size_t k = 0; std::filesystem::exists(sample_path(out_dir, "sample", k)); ++k) {
    set.switched.push_back(load_graph_json(sample_path(out_dir, "sample", k)));
    set.plans.push_back(switch_plan_from_json(read_json(sample_path(out_dir, "plan", k))));
    set.control.push_back(load_graph_json(sample_path(out_dir, "control", k)));
  }
  if (set.switched.empty()) throw std::runtime_error("no samples under " + (out_dir / "samples").string());
  set.rho = set.plans.front().rho;
  set.tau = set.plans.front().tau;
  return set;
}

EvaluatedSamples evaluate_samples(const SampleSet& set, const Graph& reference, const Graph& original,
                                  const EdgeSplit& split, const RunConfig& c, const std::filesystem::path& out_dir) {
  EvaluatedSamples result;
  const std::string dist_name = to_string(c.dist);
  for (std::size_t k = 0; k < set.switched.size(); ++k) {
    const int ki = static_cast<int>(k);
    const auto pseed = predictor_seed(c.seed, ki);
    LinkPredictor predictor;
    ReportRow row{"sample_" + std::to_string(k), set.rho, set.tau, dist_name, sample_seed(c.seed, ki), {}};
    row.metrics = evaluate_sample(set.switched[k], reference, original, split, c, pseed, &predictor);
    write_json(out_dir / "predictors" / (row.run_id + ".json"), link_predictor_to_json(predictor));
    result.switched.push_back(row);

    ReportRow ctl{"control_" + std::to_string(k), 0.0, set.tau, dist_name, sample_seed(c.seed, ki), {}};
    ctl.metrics = evaluate_sample(set.control[k], reference, original, split, c, pseed, &predictor);
    write_json(out_dir / "predictors" / (ctl.run_id + ".json"), link_predictor_to_json(predictor));
    result.control.push_back(ctl);
  }
  return result;
}

namespace {

ReportRow mean_row(const std::vector<ReportRow>& group, const std::string& id, double rho, int tau,
                   const RunConfig& c) {
  ReportRow r{id, rho, tau, to_string(c.dist), c.seed, {}};
  auto mean_of = [&](double FairnessReport::*field) {
    std::vector<double> v;
    for (const auto& g : group) v.push_back(g.metrics.*field);
    return summarize(v).mean;
  };
  r.metrics.auc = mean_of(&FairnessReport::auc);
  r.metrics.delta_sp = mean_of(&FairnessReport::delta_sp);
  r.metrics.delta_eo = mean_of(&FairnessReport::delta_eo);
  r.metrics.entropy = mean_of(&FairnessReport::entropy);
  r.metrics.fgw = mean_of(&FairnessReport::fgw);
  r.metrics.w1_degree = mean_of(&FairnessReport::w1_degree);
  r.metrics.w1_clustering = mean_of(&FairnessReport::w1_clustering);
  r.metrics.threshold = c.eval.threshold;
  return r;
}

}  // namespace

std::string pareto_plot(const std::vector<ReportRow>& rows) {
  std::vector<ParetoPoint> points;
  std::vector<std::string> labels;
  for (const auto& r : rows) {
    points.push_back({100.0 * r.metrics.auc, 100.0 - r.metrics.delta_sp});
    labels.push_back(r.run_id);
  }
  return pareto_svg(points, labels, "AUC (%)", "100 - delta SP (%)");
}

nlohmann::json write_report(const RunConfig& c, const std::filesystem::path& out_dir, const RhoEstimate* rho,
                            const TauObjectiveTable* table, const SampleSet& set, const EvaluatedSamples& rows) {
  std::vector<ReportRow> all = rows.switched;
  all.insert(all.end(), rows.control.begin(), rows.control.end());
  all.push_back(mean_row(rows.switched, "switched_mean", set.rho, set.tau, c));
  all.push_back(mean_row(rows.control, "control_mean", 0.0, set.tau, c));
  write_text(out_dir / "report.csv", report_csv(all));

  auto json_rows = nlohmann::json::array();
  for (const auto& r : all) json_rows.push_back(report_row_to_json(r));
  nlohmann::json report = {{"config", run_config_to_json(c)},
                           {"rho", rho ? rho_estimate_to_json(*rho) : nlohmann::json(nullptr)},
                           {"rho_used", set.rho},
                           {"tau_used", set.tau},
                           {"tau_table", table ? tau_table_to_json(*table) : nlohmann::json(nullptr)},
                           {"rows", json_rows},
                           {"aggregate", {{"switched", summarize(rows.switched)}, {"control", summarize(rows.control)}}}};
  write_json(out_dir / "report.json", report);

  if (c.pareto_svg) {
    std::vector<ReportRow> points = rows.switched;
    points.insert(points.end(), rows.control.begin(), rows.control.end());
    write_text(out_dir / "pareto.svg", pareto_plot(points));
  }
  return report;
}

PipelineResult run_pipeline(const RunConfig& c, const std::filesystem::path& out_dir) {
  c.validate();
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "config.json", run_config_to_json(c));

  std::string stage;
  std::vector<std::string> completed;
  nlohmann::json partial;
  auto enter = [&](const std::string& name) {
    if (!stage.empty()) completed.push_back(stage);
    stage = name;
  };

  PipelineResult result;
  try {
    enter("load");
    const Graph original = load_world(c);
    save_graph_json(original, out_dir / "graph.json");

    enter("split");
    const EdgeSplit split = make_split(original, c);
    write_json(out_dir / "split.json", split_to_json(split));
    const Graph& reference = split.train_graph;

    enter("train");
    const NoiseSchedule sched = make_schedule(reference, c);
    const Denoiser denoiser = make_denoiser(reference, sched, c);
    write_json(out_dir / "schedule.json", schedule_to_json(sched));
    write_json(out_dir / "denoiser.json", denoiser_to_json(denoiser));

    enter("rho");
    const SwitchDistribution dist = make_distribution(reference, c.dist);
    result.rho = estimate_rho(reference, dist, c.pair_counting);
    result.rho_used = c.rho.value_or(result.rho.rho);
    partial["rho"] = rho_estimate_to_json(result.rho);
    write_json(out_dir / "rho.json", partial["rho"]);

    enter("tau");
    if (c.tau) {
      result.tau_used = *c.tau;
    } else {
      result.tau_table =
          select_tau(denoiser, sched, reference, result.rho_used, dist, selector_config(c), tau_seed(c.seed));
      result.tau_used = result.tau_table.tau_star;
      write_text(out_dir / "tau_table.csv", tau_table_csv(result.tau_table));
      write_json(out_dir / "tau_table.json", tau_table_to_json(result.tau_table));
      partial["tau_table"] = tau_table_to_json(result.tau_table);
    }
    partial["tau"] = result.tau_used;

    enter("generate");
    const SampleSet set =
        generate_samples(denoiser, sched, original.n_nodes(), c, result.rho_used, result.tau_used, dist);
    write_samples(set, out_dir);

    enter("eval");
    const EvaluatedSamples rows = evaluate_samples(set, reference, original, split, c, out_dir);
    result.switched = rows.switched;
    result.control = rows.control;

    enter("report");
    result.report = write_report(c, out_dir, &result.rho, c.tau ? nullptr : &result.tau_table, set, rows);
  } catch (const std::exception& e) {
    partial["stage"] = stage;
    partial["error"] = e.what();
    partial["completed_stages"] = completed;
    try {
      write_json(out_dir / "partial_state.json", partial);
    } catch (...) {
    }
    throw PipelineError(stage, e.what());
  }
  return result;
}

}  // namespace fairgen
