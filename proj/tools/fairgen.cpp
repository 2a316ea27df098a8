#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairgen/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fairgen;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  std::optional<double> rho;
  std::optional<int> tau;
  std::optional<std::string> dist;
  std::optional<double> gamma;
  bool include_sensitive = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", o.config, "run configuration (JSON)");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory (defaults to the config's \"out\")");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--samples", o.samples, "number of generated samples")->check(CLI::PositiveNumber);
  cmd->add_option("--rho", o.rho, "switch fraction override")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--tau", o.tau, "switch step override")->check(CLI::PositiveNumber);
  cmd->add_option("--dist", o.dist, "switch distribution")->check(CLI::IsMember({"uniform", "prior"}));
  cmd->add_option("--gamma", o.gamma, "entropy weight of the step objective")->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--include-sensitive-feature", o.include_sensitive,
                "feed the sensitive attribute to the link predictor encoder");
}

RunConfig load_config(const Overrides& o) {
  RunConfig c = run_config_from_json(read_json(o.config));
  if (!o.out.empty()) c.out = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.samples) c.samples = *o.samples;
  if (o.rho) c.rho = *o.rho;
  if (o.tau) c.tau = *o.tau;
  if (o.dist) c.dist = switch_kind_from_string(*o.dist);
  if (o.gamma) c.gamma = *o.gamma;
  if (o.include_sensitive) c.eval.predictor.include_sensitive_feature = true;
  c.validate();
  return c;
}

struct World {
  Graph original;
  EdgeSplit split;
};

World synth(const RunConfig& c, const fs::path& out) {
  World w{load_world(c), {}};
  w.split = make_split(w.original, c);
  fs::create_directories(out);
  write_json(out / "config.json", run_config_to_json(c));
  save_graph_json(w.original, out / "graph.json");
  write_json(out / "split.json", split_to_json(w.split));
  return w;
}

World load_or_synth(const RunConfig& c, const fs::path& out) {
  if (!fs::exists(out / "graph.json") || !fs::exists(out / "split.json")) return synth(c, out);
  World w{load_graph_json(out / "graph.json"), {}};
  w.split = split_from_json(w.original, read_json(out / "split.json"));
  return w;
}

struct Backbone {
  NoiseSchedule sched;
  Denoiser denoiser;
};

Backbone load_backbone(const fs::path& out) {
  for (const char* f : {"schedule.json", "denoiser.json"})
    if (!fs::exists(out / f)) throw std::runtime_error("missing " + (out / f).string() + "; run `fairgen train` first");
  return {schedule_from_json(read_json(out / "schedule.json")), denoiser_from_json(read_json(out / "denoiser.json"))};
}

double resolve_rho(const RunConfig& c, const fs::path& out, const Graph& reference) {
  if (c.rho) return *c.rho;
  if (fs::exists(out / "rho.json")) return read_json(out / "rho.json").at("rho").get<double>();
  return estimate_rho(reference, make_distribution(reference, c.dist), c.pair_counting).rho;
}

int resolve_tau(const RunConfig& c, const fs::path& out) {
  if (c.tau) return *c.tau;
  if (fs::exists(out / "tau_table.json")) return tau_table_from_json(read_json(out / "tau_table.json")).tau_star;
  throw std::runtime_error("no tau: pass --tau or run `fairgen tau` first");
}

int cmd_synth(const RunConfig& c) {
  const World w = synth(c, c.out);
  std::cout << "graph: " << w.original.n_nodes() << " nodes, " << w.original.n_edges() << " edges; train split "
            << w.split.train_graph.n_edges() << " edges\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  const World w = load_or_synth(c, c.out);
  const NoiseSchedule sched = make_schedule(w.split.train_graph, c);
  const Denoiser d = make_denoiser(w.split.train_graph, sched, c);
  write_json(fs::path(c.out) / "schedule.json", schedule_to_json(sched));
  write_json(fs::path(c.out) / "denoiser.json", denoiser_to_json(d));
  std::cout << "denoiser (" << c.denoiser << ") written to " << c.out << "\n";
  return 0;
}

int cmd_rho(const RunConfig& c) {
  const World w = load_or_synth(c, c.out);
  const auto& g = w.split.train_graph;
  const RhoEstimate r = estimate_rho(g, make_distribution(g, c.dist), c.pair_counting);
  write_json(fs::path(c.out) / "rho.json", rho_estimate_to_json(r));
  if (!r.warning.empty()) std::cerr << "warning: " << r.warning << "\n";
  std::cout << "rho* = " << format_double(r.rho) << "\n";
  return 0;
}

int cmd_tau(const RunConfig& c) {
  const World w = load_or_synth(c, c.out);
  const Backbone b = load_backbone(c.out);
  const auto& g = w.split.train_graph;
  const double rho = resolve_rho(c, c.out, g);
  const TauObjectiveTable table =
      select_tau(b.denoiser, b.sched, g, rho, make_distribution(g, c.dist), selector_config(c), tau_seed(c.seed));
  write_text(fs::path(c.out) / "tau_table.csv", tau_table_csv(table));
  write_json(fs::path(c.out) / "tau_table.json", tau_table_to_json(table));
  std::cout << tau_table_csv(table) << "tau* = " << table.tau_star << "\n";
  return 0;
}

int cmd_generate(const RunConfig& c) {
  const World w = load_or_synth(c, c.out);
  const Backbone b = load_backbone(c.out);
  const auto& g = w.split.train_graph;
  const double rho = resolve_rho(c, c.out, g);
  const int tau = resolve_tau(c, c.out);
  const SampleSet set = generate_samples(b.denoiser, b.sched, w.original.n_nodes(), c, rho, tau, make_distribution(g, c.dist));
  write_samples(set, c.out);
  std::cout << set.switched.size() << " samples (rho = " << format_double(rho) << ", tau = " << tau << ") written to "
            << (fs::path(c.out) / "samples").string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& c) {
  const World w = load_or_synth(c, c.out);
  const SampleSet set = read_samples(c.out);
  const EvaluatedSamples rows = evaluate_samples(set, w.split.train_graph, w.original, w.split, c, c.out);
  std::optional<RhoEstimate> rho;
  if (fs::exists(fs::path(c.out) / "rho.json")) {
    const auto& g = w.split.train_graph;
    rho = estimate_rho(g, make_distribution(g, c.dist), c.pair_counting);
  }
  std::optional<TauObjectiveTable> table;
  if (fs::exists(fs::path(c.out) / "tau_table.json")) table = tau_table_from_json(read_json(fs::path(c.out) / "tau_table.json"));
  write_report(c, c.out, rho ? &*rho : nullptr, table ? &*table : nullptr, set, rows);
  std::cout << read_json(fs::path(c.out) / "report.json")["aggregate"].dump(2) << "\n";
  return 0;
}

int cmd_pipeline(const RunConfig& c) {
  const PipelineResult r = run_pipeline(c, c.out);
  std::cout << "rho = " << format_double(r.rho_used) << ", tau = " << r.tau_used << "\n"
            << r.report["aggregate"].dump(2) << "\n";
  return 0;
}

int cmd_pareto(const std::vector<std::string>& reports, const std::string& out) {
  std::vector<ReportRow> rows;
  for (const auto& path : reports) {
    const auto j = read_json(path);
    for (const auto& r : j.at("rows")) {
      const auto id = r.at("run_id").get<std::string>();
      if (id.size() > 5 && id.substr(id.size() - 5) == "_mean") continue;
      ReportRow row;
      row.run_id = reports.size() > 1 ? path + ":" + id : id;
      row.metrics.auc = r.at("auc").get<double>();
      row.metrics.delta_sp = r.at("delta_sp").get<double>();
      rows.push_back(row);
    }
  }
  std::vector<ParetoPoint> points;
  for (const auto& r : rows) points.push_back({100.0 * r.metrics.auc, 100.0 - r.metrics.delta_sp});
  for (std::size_t i : pareto_frontier(points))
    std::cout << rows[i].run_id << " auc=" << format_double(points[i].utility)
              << " fairness=" << format_double(points[i].fairness) << "\n";
  write_text(out, pareto_plot(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fair graph generation by attribute switching"};
  app.require_subcommand(1);

  Overrides o;
  std::vector<std::pair<CLI::App*, int (*)(const RunConfig&)>> commands = {
      {app.add_subcommand("synth", "build the world graph and its edge split"), cmd_synth},
      {app.add_subcommand("train", "fit the diffusion backbone"), cmd_train},
      {app.add_subcommand("rho", "estimate the optimal switch fraction"), cmd_rho},
      {app.add_subcommand("tau", "tabulate the step objective and pick the switch step"), cmd_tau},
      {app.add_subcommand("generate", "sample switched graphs with paired controls"), cmd_generate},
      {app.add_subcommand("eval", "train link predictors on samples and score them"), cmd_eval},
      {app.add_subcommand("pipeline", "run every stage end to end"), cmd_pipeline},
  };
  for (auto& [cmd, fn] : commands) add_common(cmd, o);

  std::vector<std::string> reports;
  std::string svg = "pareto.svg";
  auto* pareto = app.add_subcommand("pareto", "Pareto frontier of one or more report.json files");
  pareto->add_option("reports", reports, "report.json files")->required()->check(CLI::ExistingFile);
  pareto->add_option("--out", svg, "SVG output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pareto->parsed()) return cmd_pareto(reports, svg);
    for (auto& [cmd, fn] : commands)
      if (cmd->parsed()) return fn(load_config(o));
  } catch (const PipelineError& e) {
    std::cerr << "fairgen: stage " << e.stage() << " failed: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "fairgen: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
