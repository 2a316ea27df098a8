#include "fairgen/selector.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fairgen/random.hpp"
#include "fairgen/report.hpp"

namespace fairgen {

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

void fill_objective(TauRow& row, double gamma) {
  row.mean_objective = row.mean_fgw - gamma * row.mean_entropy;
  std::vector<double> obj(row.fgw.size());
  for (std::size_t m = 0; m < obj.size(); ++m) obj[m] = row.fgw[m] - gamma * row.entropy[m];
  row.stderr_objective = standard_error(obj);
}

}  // namespace

std::uint64_t selector_sample_seed(std::uint64_t master, int sample_index) {
  return derive_seed(master, {0x7a75, static_cast<std::uint64_t>(sample_index)});
}

std::size_t select_row(const std::vector<TauRow>& rows, double gamma) {
  if (rows.empty()) throw std::invalid_argument("select_row: empty table");
  std::size_t best = 0;
  double best_value = rows[0].mean_fgw - gamma * rows[0].mean_entropy;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double v = rows[r].mean_fgw - gamma * rows[r].mean_entropy;
    if (v < best_value || (v == best_value && rows[r].tau > rows[best].tau)) {
      best = r;
      best_value = v;
    }
  }
  return best;
}

TauObjectiveTable select_tau(const Denoiser& d, const NoiseSchedule& sched, const Graph& original, double rho,
                             const SwitchDistribution& dist, const SelectorConfig& config, std::uint64_t seed) {
  if (config.samples < 1) throw std::invalid_argument("select_tau: need at least one sample per row");
  if (sched.steps() < 2) throw std::invalid_argument("select_tau: need T >= 2 to have a legal switch step");
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw std::invalid_argument("select_tau: gamma must lie in [0,1]");
  TauObjectiveTable table;
  table.gamma = config.gamma;
  for (int tau = sched.steps() - 1; tau >= 1; --tau) {
    TauRow row;
    row.tau = tau;
    row.samples = config.samples;
    const SwitchRequest request{rho, tau, dist, config.scope};
    for (int m = 0; m < config.samples; ++m) {
      const auto [sample, plan] = generate_with_switching(d, sched, original.n_nodes(), request,
                                                          selector_sample_seed(seed, m));
      row.fgw.push_back(fgw_distance(FGWProblem::between(original, sample, config.fgw_alpha), config.fgw).objective);
      row.entropy.push_back(edge_entropy(sample).total);
    }
    row.mean_fgw = mean(row.fgw);
    row.mean_entropy = mean(row.entropy);
    row.stderr_fgw = standard_error(row.fgw);
    row.stderr_entropy = standard_error(row.entropy);
    fill_objective(row, config.gamma);
    table.rows.push_back(std::move(row));
  }
  table.tau_star = table.rows[select_row(table.rows, config.gamma)].tau;
  return table;
}

TauObjectiveTable reweight(const TauObjectiveTable& table, double gamma) {
  TauObjectiveTable out = table;
  out.gamma = gamma;
  for (auto& row : out.rows) fill_objective(row, gamma);
  out.tau_star = out.rows[select_row(out.rows, gamma)].tau;
  return out;
}

std::string tau_table_csv(const TauObjectiveTable& table) {
  std::ostringstream out;
  out << "tau,mean_fgw,mean_H,mean_objective,stderr\n";
  for (const auto& row : table.rows)
    out << row.tau << ',' << format_double(row.mean_fgw) << ',' << format_double(row.mean_entropy) << ','
        << format_double(row.mean_objective) << ',' << format_double(row.stderr_objective) << '\n';
  return out.str();
}

nlohmann::json tau_table_to_json(const TauObjectiveTable& table) {
  auto rows = nlohmann::json::array();
  for (const auto& r : table.rows)
    rows.push_back({{"tau", r.tau},
                    {"samples", r.samples},
                    {"mean_fgw", r.mean_fgw},
                    {"mean_H", r.mean_entropy},
                    {"mean_objective", r.mean_objective},
                    {"stderr_fgw", r.stderr_fgw},
                    {"stderr_H", r.stderr_entropy},
                    {"stderr_objective", r.stderr_objective},
                    {"fgw", r.fgw},
                    {"H", r.entropy}});
  return {{"gamma", table.gamma}, {"tau_star", table.tau_star}, {"rows", rows}};
}

TauObjectiveTable tau_table_from_json(const nlohmann::json& j) {
  TauObjectiveTable t;
  t.gamma = j.at("gamma").get<double>();
  t.tau_star = j.at("tau_star").get<int>();
  for (const auto& r : j.at("rows")) {
    TauRow row;
    row.tau = r.at("tau").get<int>();
    row.samples = r.at("samples").get<int>();
    row.fgw = r.at("fgw").get<std::vector<double>>();
    row.entropy = r.at("H").get<std::vector<double>>();
    row.mean_fgw = r.at("mean_fgw").get<double>();
    row.mean_entropy = r.at("mean_H").get<double>();
    row.mean_objective = r.at("mean_objective").get<double>();
    row.stderr_fgw = r.at("stderr_fgw").get<double>();
    row.stderr_entropy = r.at("stderr_H").get<double>();
    row.stderr_objective = r.at("stderr_objective").get<double>();
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace fairgen
