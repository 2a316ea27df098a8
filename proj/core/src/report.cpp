#include "fairgen/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fairgen {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

const char* const kReportColumns =
    "run_id,rho,tau,dist,seed,auc,delta_sp,delta_eo,H,fgw,w1_degree,w1_clustering";

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << kReportColumns << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.run_id << ',' << format_double(r.rho) << ',' << r.tau << ',' << r.dist << ',' << r.seed << ','
        << format_double(m.auc) << ',' << format_double(m.delta_sp) << ',' << format_double(m.delta_eo) << ','
        << format_double(m.entropy) << ',' << format_double(m.fgw) << ',' << format_double(m.w1_degree) << ','
        << format_double(m.w1_clustering) << '\n';
  }
  return out.str();
}

nlohmann::json report_row_to_json(const ReportRow& r) {
  const auto& m = r.metrics;
  return {{"run_id", r.run_id},   {"rho", r.rho},           {"tau", r.tau},
          {"dist", r.dist},       {"seed", r.seed},         {"auc", m.auc},
          {"delta_sp", m.delta_sp}, {"delta_eo", m.delta_eo}, {"H", m.entropy},
          {"fgw", m.fgw},         {"w1_degree", m.w1_degree}, {"w1_clustering", m.w1_clustering},
          {"threshold", m.threshold}};
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

nlohmann::json summarize(const std::vector<ReportRow>& rows) {
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(get(r.metrics));
    const auto s = summarize(v);
    return nlohmann::json{{"mean", s.mean}, {"std", s.std}};
  };
  return {{"n", rows.size()},
          {"auc", column([](const FairnessReport& m) { return m.auc; })},
          {"delta_sp", column([](const FairnessReport& m) { return m.delta_sp; })},
          {"delta_eo", column([](const FairnessReport& m) { return m.delta_eo; })},
          {"H", column([](const FairnessReport& m) { return m.entropy; })},
          {"fgw", column([](const FairnessReport& m) { return m.fgw; })},
          {"w1_degree", column([](const FairnessReport& m) { return m.w1_degree; })},
          {"w1_clustering", column([](const FairnessReport& m) { return m.w1_clustering; })}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace fairgen
