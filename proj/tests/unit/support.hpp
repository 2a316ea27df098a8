#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fairgen/graph.hpp"
#include "fairgen/random.hpp"

namespace fgtest {

using fairgen::Graph;

inline Graph make_graph(std::size_t n, std::vector<int> sensitive, const std::vector<fairgen::Edge>& edges,
                        int n_classes = 0) {
  if (n_classes == 0) n_classes = 1 + *std::max_element(sensitive.begin(), sensitive.end());
  Graph g(n, std::move(sensitive), n_classes, {}, {});
  for (const auto& [u, v] : edges) g.set_edge(u, v, true);
  return g;
}

/// Erdos-Renyi graph with uniformly random classes and feature codes.
inline Graph random_graph(std::size_t n, int k, double p, std::vector<int> feature_classes, std::uint64_t seed) {
  fairgen::Rng rng(seed);
  std::vector<int> s(n);
  for (auto& v : s) v = static_cast<int>(rng.below(static_cast<std::size_t>(k)));
  std::vector<int> f;
  for (std::size_t i = 0; i < n; ++i)
    for (int c : feature_classes) f.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(c))));
  Graph g(n, std::move(s), k, std::move(f), std::move(feature_classes));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) g.set_edge(i, j, true);
  return g;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

}  // namespace fgtest
