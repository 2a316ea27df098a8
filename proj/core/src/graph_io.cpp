#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "fairgen/graph.hpp"

namespace fairgen {

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool parse_int(std::string_view token, long long& out) {
  token = trim(token);
  if (token.empty()) return false;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& attr_path,
                 LoadStats* stats) {
  const std::string attr_name = attr_path.string();
  std::ifstream attr(attr_path);
  if (!attr) throw std::runtime_error("cannot open attribute file " + attr_name);

  std::string line;
  if (!std::getline(attr, line)) throw ParseError(attr_name, 1, "missing header");
  const auto header = split(trim(line), ',');
  if (header.size() < 2 || trim(header[0]) != "node_id" || trim(header[1]) != "sensitive")
    throw ParseError(attr_name, 1, "header must start with node_id,sensitive");
  const std::size_t n_features = header.size() - 2;
  for (std::size_t c = 0; c < n_features; ++c)
    if (trim(header[c + 2]) != "f" + std::to_string(c))
      throw ParseError(attr_name, 1, "expected feature column f" + std::to_string(c));

  struct Row {
    long long id;
    long long sensitive;
    std::vector<int> codes;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(attr, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto cells = split(body, ',');
    if (cells.size() != header.size())
      throw ParseError(attr_name, line_no, "expected " + std::to_string(header.size()) + " columns");
    Row r{};
    if (!parse_int(cells[0], r.id) || r.id < 0) throw ParseError(attr_name, line_no, "node_id is not a non-negative integer");
    if (!parse_int(cells[1], r.sensitive) || r.sensitive < 0)
      throw ParseError(attr_name, line_no, "sensitive is not a non-negative integer");
    r.codes.resize(n_features);
    for (std::size_t c = 0; c < n_features; ++c) {
      long long v = 0;
      if (!parse_int(cells[c + 2], v) || v < 0 || v > 1'000'000)
        throw ParseError(attr_name, line_no, "feature f" + std::to_string(c) + " is not a non-negative integer code");
      r.codes[c] = static_cast<int>(v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError(attr_name, line_no, "no nodes");

  const std::size_t n = rows.size();
  std::vector<int> sensitive(n, -1);
  std::vector<int> features(n * n_features, 0);
  std::vector<int> feature_classes(n_features, 1);
  int k = 1;
  std::vector<bool> seen(n, false);
  for (const auto& r : rows) {
    if (static_cast<std::size_t>(r.id) >= n)
      throw std::runtime_error(attr_name + ": node ids must be contiguous 0..N-1 (found " + std::to_string(r.id) + ")");
    if (seen[r.id]) throw std::runtime_error(attr_name + ": duplicate node_id " + std::to_string(r.id));
    seen[r.id] = true;
    sensitive[r.id] = static_cast<int>(r.sensitive);
    k = std::max(k, static_cast<int>(r.sensitive) + 1);
    for (std::size_t c = 0; c < n_features; ++c) {
      features[r.id * n_features + c] = r.codes[c];
      feature_classes[c] = std::max(feature_classes[c], r.codes[c] + 1);
    }
  }
  Graph g(n, std::move(sensitive), k, std::move(features), std::move(feature_classes));

  const std::string edge_name = edge_path.string();
  std::ifstream edges(edge_path);
  if (!edges) throw std::runtime_error("cannot open edge file " + edge_name);
  LoadStats local;
  line_no = 0;
  while (std::getline(edges, line)) {
    ++line_no;
    auto body = std::string_view(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto tokens = split_whitespace(body);
    long long u = 0, v = 0;
    if (tokens.size() != 2 || !parse_int(tokens[0], u) || !parse_int(tokens[1], v) || u < 0 || v < 0)
      throw ParseError(edge_name, line_no, "expected two non-negative integer node ids");
    if (static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
      throw ParseError(edge_name, line_no, "node id outside attribute file");
    ++local.edge_lines;
    if (u == v) {
      ++local.self_loops_dropped;
      continue;
    }
    if (g.has_edge(u, v)) {
      ++local.duplicates_dropped;
      continue;
    }
    g.set_edge(u, v, true);
  }
  if (stats) *stats = local;
  return g;
}

nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json j;
  j["n_nodes"] = g.n_nodes();
  auto edges = nlohmann::json::array();
  for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  j["sensitive"] = std::vector<int>(g.sensitive().begin(), g.sensitive().end());
  auto features = nlohmann::json::array();
  for (std::size_t i = 0; i < g.n_nodes(); ++i) {
    const auto row = g.feature_row(i);
    features.push_back(std::vector<int>(row.begin(), row.end()));
  }
  j["features"] = std::move(features);
  j["n_classes"] = g.n_classes();
  j["feature_classes"] = std::vector<int>(g.feature_classes().begin(), g.feature_classes().end());
  return j;
}

Graph graph_from_json(const nlohmann::json& j) {
  const auto n = j.at("n_nodes").get<std::size_t>();
  auto sensitive = j.at("sensitive").get<std::vector<int>>();
  const auto rows = j.at("features").get<std::vector<std::vector<int>>>();
  if (rows.size() != n) throw std::invalid_argument("graph JSON: features must have n_nodes rows");
  const std::size_t f = rows.empty() ? 0 : rows.front().size();
  std::vector<int> features;
  features.reserve(n * f);
  std::vector<int> inferred(f, 1);
  for (const auto& r : rows) {
    if (r.size() != f) throw std::invalid_argument("graph JSON: ragged feature matrix");
    for (std::size_t c = 0; c < f; ++c) inferred[c] = std::max(inferred[c], r[c] + 1);
    features.insert(features.end(), r.begin(), r.end());
  }
  int k = 1;
  for (int s : sensitive) k = std::max(k, s + 1);
  if (j.contains("n_classes")) k = j["n_classes"].get<int>();
  auto feature_classes = j.contains("feature_classes") ? j["feature_classes"].get<std::vector<int>>() : inferred;

  Graph g(n, std::move(sensitive), k, std::move(features), std::move(feature_classes));
  for (const auto& e : j.at("edges")) {
    const auto u = e.at(0).get<std::size_t>();
    const auto v = e.at(1).get<std::size_t>();
    if (u == v) continue;
    g.set_edge(u, v, true);
  }
  return g;
}

void save_graph_json(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << graph_to_json(g).dump() << '\n';
}

Graph load_graph_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return graph_from_json(nlohmann::json::parse(in));
}

}  // namespace fairgen
