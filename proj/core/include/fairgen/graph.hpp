#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace fairgen {

/// Dense K×K table indexed by sensitive classes.
using ClassMatrix = std::vector<std::vector<double>>;

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected, loop-free attributed graph. Node features are categorical
/// codes; column f takes values in [0, feature_classes()[f]). Every node
/// carries one sensitive class in [0, n_classes()).
///
/// Adjacency is stored densely (N×N bytes). The graphs handled here are at
/// most a few thousand nodes.
class Graph {
 public:
  Graph() = default;

  /// Edgeless graph. `features` is row-major N×F where F =
  /// feature_classes.size(). Throws std::invalid_argument if any code is out
  /// of range.
  Graph(std::size_t n_nodes, std::vector<int> sensitive, int n_classes,
        std::vector<int> features, std::vector<int> feature_classes);

  std::size_t n_nodes() const { return n_; }
  int n_classes() const { return n_classes_; }
  std::size_t n_features() const { return feature_classes_.size(); }
  std::span<const int> feature_classes() const { return feature_classes_; }

  int feature(std::size_t node, std::size_t column) const {
    return features_[node * feature_classes_.size() + column];
  }
  std::span<const int> feature_row(std::size_t node) const {
    return {features_.data() + node * feature_classes_.size(), feature_classes_.size()};
  }
  std::span<const int> features() const { return features_; }
  void set_feature(std::size_t node, std::size_t column, int code);

  int sensitive(std::size_t node) const { return sensitive_[node]; }
  std::span<const int> sensitive() const { return sensitive_; }
  void set_sensitive(std::size_t node, int cls);
  void set_sensitive(std::vector<int> classes);

  bool has_edge(std::size_t i, std::size_t j) const { return adj_[i * n_ + j] != 0; }
  /// Adds or removes the undirected edge {i, j}. Self-loops are rejected.
  void set_edge(std::size_t i, std::size_t j, bool present);
  std::size_t n_edges() const { return n_edges_; }
  std::size_t degree(std::size_t node) const;
  /// Edges as (i, j) with i < j in lexicographic order.
  std::vector<Edge> edges() const;
  std::vector<std::size_t> neighbors(std::size_t node) const;
  /// Row-major N×N 0/1 matrix.
  std::span<const std::uint8_t> adjacency() const { return adj_; }

  /// Re-checks every structural invariant; throws std::logic_error on the
  /// first violation found.
  void validate() const;

  bool operator==(const Graph&) const = default;

 private:
  std::size_t n_ = 0;
  int n_classes_ = 0;
  std::vector<std::uint8_t> adj_;
  std::vector<int> features_;
  std::vector<int> feature_classes_;
  std::vector<int> sensitive_;
  std::size_t n_edges_ = 0;
};

/// Per-class node counts and the realized edge density between every pair of
/// classes. For l != k the denominator is N^l N^k; for l == k it is
/// N^l (N^l - 1) / 2. A class pair with no possible pairs has density 0.
struct DensityMatrix {
  std::vector<std::size_t> counts_per_class;
  ClassMatrix density;

  int n_classes() const { return static_cast<int>(counts_per_class.size()); }
  double possible_pairs(int l, int k) const;
  bool operator==(const DensityMatrix&) const = default;
};

/// Interior edges join nodes of the same sensitive class; exterior edges
/// join different classes.
struct EdgePartition {
  std::size_t n_interior = 0;
  std::size_t n_exterior = 0;
};

/// Number of unordered node pairs available between classes l and k.
double possible_pairs(std::size_t count_l, std::size_t count_k, bool same_class);

/// Samples a stochastic-block-model graph. Nodes are laid out class by class
/// (the first counts[0] nodes are class 0, and so on). Each unordered pair is
/// an edge independently with probability density[S_i][S_j]. Feature column f
/// is drawn from a per-class categorical distribution over feature_spec[f]
/// codes; those distributions are themselves derived from `seed`.
Graph sbm_generate(std::span<const std::size_t> counts_per_class, const ClassMatrix& density,
                   std::span<const int> feature_spec, std::uint64_t seed);

DensityMatrix edge_density_matrix(const Graph& g);

EdgePartition partition_edges(const Graph& g);

/// Local clustering coefficient per node; nodes of degree < 2 get 0.
std::vector<double> clustering_coefficients(const Graph& g);

std::vector<double> degree_sequence(const Graph& g);

/// Class counts N^l for the graph's sensitive attribute.
std::vector<std::size_t> class_counts(const Graph& g);

// ---------------------------------------------------------------------------
// Ingestion and serialization

/// Thrown for malformed input files; carries the offending 1-based line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadStats {
  std::size_t edge_lines = 0;
  std::size_t self_loops_dropped = 0;
  std::size_t duplicates_dropped = 0;
};

/// Reads an edge list (`u<TAB>v` per line, 0-based ids; any whitespace is
/// accepted as separator, `#` starts a comment) and an attribute CSV with
/// header `node_id,sensitive,f0,...,f{F-1}`. Edges are symmetrized; self
/// loops and duplicates are dropped and counted in `stats`.
Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& attr_path,
                 LoadStats* stats = nullptr);

/// JSON bundle {n_nodes, edges, sensitive, features, n_classes,
/// feature_classes}. The last two keys are optional on input and inferred
/// from the data when missing.
nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);

void save_graph_json(const Graph& g, const std::filesystem::path& path);
Graph load_graph_json(const std::filesystem::path& path);

}  // namespace fairgen
