#include "mulch/gbt.hpp"

#include "mulch/errors.hpp"
#include "mulch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <set>

namespace mulch {

namespace {

// cost of one elementary row-visit in the deterministic work model,
// calibrated so reported values look like seconds on a desktop core
constexpr double kWorkUnitSeconds = 4e-9;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void notice_ignored(const std::string& name) {
  static std::mutex mutex;
  static std::set<std::string> seen;
  std::lock_guard<std::mutex> lock(mutex);
  if (seen.insert(name).second) {
    std::cerr << "notice: hyperparameter '" << name
              << "' is accepted but ignored by the built-in trainer\n";
  }
}

} // namespace

void GbtHyperparams::validate() const {
  if (!(eta >= 0.0) || eta > 10.0) throw ValidationError("gbt: eta out of range");
  if (max_depth < 1) throw ValidationError("gbt: max_depth must be >= 1");
  if (num_boost_round < 1) throw ValidationError("gbt: num_boost_round must be >= 1");
  if (gamma < 0.0) throw ValidationError("gbt: gamma must be >= 0");
  if (min_child_weight < 0.0) throw ValidationError("gbt: min_child_weight must be >= 0");
  if (lambda < 0.0) throw ValidationError("gbt: lambda must be >= 0");
  if (!(subsample > 0.0 && subsample <= 1.0)) {
    throw ValidationError("gbt: subsample must be in (0, 1]");
  }
}

GbtHyperparams GbtHyperparams::from_config(const Configuration& config) {
  GbtHyperparams hp;
  for (const auto& [name, value] : config.values) {
    if (name == "eta") {
      hp.eta = std::get<double>(value);
    } else if (name == "max_depth") {
      hp.max_depth = static_cast<int>(std::get<double>(value));
    } else if (name == "num_boost_round") {
      hp.num_boost_round = static_cast<int>(std::get<double>(value));
    } else if (name == "gamma") {
      hp.gamma = std::get<double>(value);
    } else if (name == "min_child_weight") {
      hp.min_child_weight = std::get<double>(value);
    } else if (name == "lambda") {
      hp.lambda = std::get<double>(value);
    } else if (name == "subsample") {
      hp.subsample = std::get<double>(value);
    } else if (name == "tree_method" || name == "max_bin" || name == "grow_policy" ||
               name == "max_delta_step" || name == "alpha") {
      notice_ignored(name);
    } else {
      throw ValidationError("gbt: unknown hyperparameter '" + name + "'");
    }
  }
  hp.validate();
  return hp;
}

double GbtModel::predict_margin(const std::vector<double>& row) const {
  double margin = base_margin;
  for (const auto& tree : trees) {
    int node = 0;
    while (tree[static_cast<std::size_t>(node)].feature >= 0) {
      const auto& t = tree[static_cast<std::size_t>(node)];
      node = row[static_cast<std::size_t>(t.feature)] <= t.threshold ? t.left : t.right;
    }
    margin += tree[static_cast<std::size_t>(node)].value;
  }
  return margin;
}

namespace {

// node rows kept as per-feature sorted index lists; splits partition the
// lists in order, so nothing is re-sorted below the root
using FeatureLists = std::vector<std::vector<std::uint32_t>>;

struct TreeJob {
  const Dataset& ds;
  const GbtHyperparams& hp;
  const std::vector<double>& gradient; // indexed by dataset row
  const std::vector<double>& hessian;
  std::vector<GbtTreeNode> nodes;
  double work = 0.0; // row visits, deterministic

  int build(FeatureLists lists, int depth) {
    const std::size_t n = lists.front().size();
    double g_sum = 0.0, h_sum = 0.0;
    for (std::uint32_t r : lists.front()) {
      g_sum += gradient[r];
      h_sum += hessian[r];
    }

    GbtTreeNode node;
    node.value = -hp.eta * g_sum / (h_sum + hp.lambda);
    const int node_id = static_cast<int>(nodes.size());
    nodes.push_back(node);

    if (depth >= hp.max_depth || n < 2) return node_id;

    const double parent_term = (g_sum * g_sum) / (h_sum + hp.lambda);
    const std::size_t p = ds.num_features();
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    work += static_cast<double>(n) * static_cast<double>(p) * 3.0;

    for (std::size_t f = 0; f < p; ++f) {
      const auto& order = lists[f];
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        gl += gradient[order[i]];
        hl += hessian[order[i]];
        const double xv = ds.features[order[i]][f];
        const double xn = ds.features[order[i + 1]][f];
        if (xv == xn) continue;
        const double hr = h_sum - hl;
        if (hl < hp.min_child_weight || hr < hp.min_child_weight) continue;
        const double gr = g_sum - gl;
        const double gain = 0.5 * ((gl * gl) / (hl + hp.lambda) +
                                   (gr * gr) / (hr + hp.lambda) - parent_term) -
                            hp.gamma;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (xv + xn);
        }
      }
    }

    if (best_feature < 0) return node_id;

    FeatureLists left(p), right(p);
    for (std::size_t f = 0; f < p; ++f) {
      left[f].reserve(n / 2);
      right[f].reserve(n / 2);
      for (std::uint32_t r : lists[f]) {
        (ds.features[r][static_cast<std::size_t>(best_feature)] <= best_threshold
             ? left[f]
             : right[f])
            .push_back(r);
      }
      lists[f].clear();
      lists[f].shrink_to_fit();
    }

    const int left_id = build(std::move(left), depth + 1);
    const int right_id = build(std::move(right), depth + 1);
    nodes[node_id].feature = best_feature;
    nodes[node_id].threshold = best_threshold;
    nodes[node_id].left = left_id;
    nodes[node_id].right = right_id;
    return node_id;
  }
};

double tree_leaf_value(const std::vector<GbtTreeNode>& tree,
                       const std::vector<double>& row, double* depth_visits) {
  int node = 0;
  double visits = 1.0;
  while (tree[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& t = tree[static_cast<std::size_t>(node)];
    node = row[static_cast<std::size_t>(t.feature)] <= t.threshold ? t.left : t.right;
    visits += 1.0;
  }
  *depth_visits += visits;
  return tree[static_cast<std::size_t>(node)].value;
}

} // namespace

TrainResult train(const Dataset& dataset, const GbtHyperparams& hp,
                  const EarlyStopConfig& early_stop, std::uint64_t seed) {
  hp.validate();
  if (early_stop.enabled && early_stop.patience < 1) {
    throw ValidationError("gbt: patience must be >= 1");
  }
  if (dataset.train_idx.empty() || dataset.val_idx.empty()) {
    throw ValidationError("gbt: dataset has an empty split");
  }
  {
    bool has0 = false, has1 = false;
    for (std::size_t idx : dataset.train_idx) {
      (dataset.labels[idx] ? has1 : has0) = true;
    }
    if (!has0 || !has1) {
      throw ValidationError("gbt: training split must contain both classes");
    }
  }

  const auto& train_rows = dataset.train_idx;
  const auto& val_rows = dataset.val_idx;

  // base margin: train-set log-odds
  double positives = 0.0;
  for (std::size_t idx : train_rows) positives += dataset.labels[idx];
  const double p0 = std::clamp(positives / static_cast<double>(train_rows.size()),
                               1e-6, 1.0 - 1e-6);

  TrainResult result;
  result.model.base_margin = std::log(p0 / (1.0 - p0));

  std::vector<double> train_margin(dataset.num_rows(), 0.0);
  std::vector<double> val_margin(dataset.num_rows(), 0.0);
  for (std::size_t idx : train_rows) train_margin[idx] = result.model.base_margin;
  for (std::size_t idx : val_rows) val_margin[idx] = result.model.base_margin;

  std::vector<double> gradient(dataset.num_rows(), 0.0);
  std::vector<double> hessian(dataset.num_rows(), 0.0);

  Rng rng(derive_seed(seed, 0x67627472ULL));
  double work = 0.0;
  double best_accuracy = -1.0;
  int rounds_since_improve = 0;

  // feature orders over the training split, sorted once
  const std::size_t p = dataset.num_features();
  FeatureLists train_order(p);
  for (std::size_t f = 0; f < p; ++f) {
    train_order[f].assign(train_rows.begin(), train_rows.end());
    std::sort(train_order[f].begin(), train_order[f].end(),
              [&](std::uint32_t a, std::uint32_t b) {
                return dataset.features[a][f] < dataset.features[b][f];
              });
  }
  work += static_cast<double>(train_rows.size()) * static_cast<double>(p) *
          (2.0 + std::log2(static_cast<double>(train_rows.size()) + 1.0));

  std::vector<char> in_sample(dataset.num_rows(), 1);

  for (int round = 0; round < hp.num_boost_round; ++round) {
    for (std::size_t idx : train_rows) {
      const double prob = sigmoid(train_margin[idx]);
      gradient[idx] = prob - dataset.labels[idx];
      hessian[idx] = std::max(prob * (1.0 - prob), 1e-16);
    }
    work += 2.0 * static_cast<double>(train_rows.size());

    FeatureLists root(p);
    if (hp.subsample < 1.0) {
      std::size_t count = 0;
      for (std::size_t idx : train_rows) {
        in_sample[idx] = rng.next_double() < hp.subsample ? 1 : 0;
        count += in_sample[idx];
      }
      if (count == 0) {
        for (std::size_t idx : train_rows) in_sample[idx] = 1;
      }
      for (std::size_t f = 0; f < p; ++f) {
        root[f].reserve(count);
        for (std::uint32_t r : train_order[f]) {
          if (in_sample[r]) root[f].push_back(r);
        }
      }
      work += static_cast<double>(train_rows.size()) * static_cast<double>(p);
    } else {
      root = train_order;
    }

    TreeJob job{dataset, hp, gradient, hessian, {}, 0.0};
    job.build(std::move(root), 0);
    work += job.work;

    for (std::size_t idx : train_rows) {
      train_margin[idx] += tree_leaf_value(job.nodes, dataset.features[idx], &work);
    }
    double correct = 0.0;
    for (std::size_t idx : val_rows) {
      val_margin[idx] += tree_leaf_value(job.nodes, dataset.features[idx], &work);
      const int predicted = val_margin[idx] > 0.0 ? 1 : 0;
      correct += predicted == dataset.labels[idx] ? 1.0 : 0.0;
    }
    const double accuracy = correct / static_cast<double>(val_rows.size());

    result.model.trees.push_back(std::move(job.nodes));
    result.curve.push_back(accuracy);
    result.rounds_used = round + 1;

    if (accuracy > best_accuracy) {
      best_accuracy = accuracy;
      rounds_since_improve = 0;
    } else {
      ++rounds_since_improve;
    }
    if (early_stop.enabled && rounds_since_improve >= early_stop.patience) break;
  }

  result.best_accuracy = best_accuracy;
  result.wall_time = work * kWorkUnitSeconds;
  return result;
}

ObjectiveResult gbt_objective(const Dataset& task, const GbtHyperparams& hp,
                              double fidelity_r, const EarlyStopConfig& early_stop,
                              std::uint64_t seed) {
  const Dataset scoped =
      subsample_fidelity(task, fidelity_r, derive_seed(seed, 0x666964ULL));
  const auto result = train(scoped, hp, early_stop, derive_seed(seed, 0x7472ULL));
  ObjectiveResult out;
  out.accuracy = result.best_accuracy;
  out.wall_time = result.wall_time;
  out.rounds_used = result.rounds_used;
  return out;
}

} // namespace mulch
