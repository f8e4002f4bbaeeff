#pragma once

#include "mulch/dataset.hpp"
#include "mulch/search_space.hpp"

#include <cstdint>
#include <vector>

namespace mulch {

struct GbtHyperparams {
  double eta = 0.3;
  int max_depth = 6;
  int num_boost_round = 100;
  double gamma = 0.0;             // minimum split gain
  double min_child_weight = 1.0;  // minimum hessian sum per child
  double lambda = 1.0;            // leaf L2 regularization
  double subsample = 1.0;         // row fraction per round

  void validate() const;

  // builds from a tuning configuration; parameters outside this trainer's
  // scope (tree_method, max_bin, grow_policy, max_delta_step, alpha) are
  // accepted and ignored with a one-time notice
  static GbtHyperparams from_config(const Configuration& config);
};

struct EarlyStopConfig {
  int patience = 10; // n_s
  bool enabled = false;
};

struct GbtTreeNode {
  int feature = -1; // -1: leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct GbtModel {
  std::vector<std::vector<GbtTreeNode>> trees;
  double base_margin = 0.0;

  double predict_margin(const std::vector<double>& row) const;
  int predict_label(const std::vector<double>& row) const {
    return predict_margin(row) > 0.0 ? 1 : 0;
  }
};

struct TrainResult {
  GbtModel model;
  std::vector<double> curve; // per-round validation accuracy
  int rounds_used = 0;
  double wall_time = 0.0;    // deterministic work-model seconds
  double best_accuracy = 0.0;
};

// logistic-loss second-order boosting with exact greedy splits
TrainResult train(const Dataset& dataset, const GbtHyperparams& hp,
                  const EarlyStopConfig& early_stop, std::uint64_t seed);

struct ObjectiveResult {
  double accuracy = 0.0;
  double wall_time = 0.0;
  int rounds_used = 0;
};

// subsample_fidelity -> train -> validation accuracy
ObjectiveResult gbt_objective(const Dataset& task, const GbtHyperparams& hp,
                              double fidelity_r, const EarlyStopConfig& early_stop,
                              std::uint64_t seed);

} // namespace mulch
