#pragma once

#include "mulch/search_space.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mulch {

struct EvaluationRecord {
  Configuration config;
  double metric = 0.0;
};

struct ForestConfig {
  int n_trees = 64;
  int max_depth = 64;
  int min_leaf = 3;
  double bootstrap_fraction = 0.8;
};

struct ImportanceReport {
  std::vector<std::string> parameters; // space order
  std::vector<double> scores;          // individual variance fractions
  double residual = 0.0;               // unattributed higher-order fraction
  bool degenerate = false;             // constant metric input
};

// Fits a regression forest to (encoded config, metric) pairs and computes
// each dimension's exact individual variance contribution by marginalizing
// the piecewise-constant trees over the uniform measure on the encoded
// domain. Scores are per-tree variance ratios averaged over the forest.
ImportanceReport compute_importances(const std::vector<EvaluationRecord>& records,
                                     const SearchSpace& space,
                                     const ForestConfig& forest,
                                     std::uint64_t seed);

// descending by score; ties broken by the space's declared order
std::vector<std::string> rank_parameters(const ImportanceReport& report);

} // namespace mulch
