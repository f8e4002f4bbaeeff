#include "mulch/fanova.hpp"

#include "mulch/errors.hpp"
#include "mulch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mulch {

namespace {

// feature matrix: numeric dims carry the encoded [0,1] coordinate,
// categorical dims carry the choice index
struct FeatureTable {
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  std::vector<bool> is_categorical;
  std::vector<int> category_count;
};

FeatureTable build_features(const std::vector<EvaluationRecord>& records,
                            const SearchSpace& space) {
  FeatureTable table;
  const auto& params = space.parameters();
  table.is_categorical.resize(params.size());
  table.category_count.resize(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    table.is_categorical[j] = params[j].kind == ParamKind::Categorical;
    table.category_count[j] =
        table.is_categorical[j] ? static_cast<int>(params[j].choices.size()) : 0;
  }
  table.rows.reserve(records.size());
  table.y.reserve(records.size());
  for (const auto& record : records) {
    if (!std::isfinite(record.metric)) {
      throw ValidationError("fanova: metrics must be finite");
    }
    std::vector<double> row(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
      const Parameter& p = params[j];
      if (table.is_categorical[j]) {
        const auto& label = record.config.label(p.name);
        const auto it = std::find(p.choices.begin(), p.choices.end(), label);
        if (it == p.choices.end()) {
          throw ValidationError("fanova: unknown choice for '" + p.name + "'");
        }
        row[j] = static_cast<double>(it - p.choices.begin());
      } else {
        const double t = p.to_transformed(record.config.number(p.name));
        const double span = p.upper - p.lower;
        row[j] = span > 0.0 ? (t - p.lower) / span : 0.0;
      }
    }
    table.rows.push_back(std::move(row));
    table.y.push_back(record.metric);
  }
  return table;
}

struct TreeNode {
  int dim = -1;           // -1 for leaves
  bool categorical_split = false;
  double threshold = 0.0; // numeric: x <= threshold goes left
  int category = -1;      // categorical: x == category goes left
  int left = -1;
  int right = -1;
  double value = 0.0;     // leaf mean
};

struct Tree {
  std::vector<TreeNode> nodes;
};

struct TreeBuilder {
  const FeatureTable& table;
  const ForestConfig& config;
  const std::vector<std::size_t>& sample;
  Tree tree;

  int build(std::vector<std::size_t> rows, int depth) {
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t r : rows) {
      sum += table.y[r];
      sumsq += table.y[r] * table.y[r];
    }
    const auto n = static_cast<double>(rows.size());
    const double node_ss = sumsq - sum * sum / n;

    TreeNode node;
    node.value = sum / n;
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);

    if (depth >= config.max_depth ||
        rows.size() < 2 * static_cast<std::size_t>(config.min_leaf)) {
      return node_id;
    }

    const std::size_t d = table.is_categorical.size();
    double best_gain = 0.0;
    int best_dim = -1;
    double best_threshold = 0.0;
    int best_category = -1;

    for (std::size_t j = 0; j < d; ++j) {
      if (table.is_categorical[j]) {
        // subset-of-one splits: {c} versus the rest
        for (int c = 0; c < table.category_count[j]; ++c) {
          double lsum = 0.0, lsq = 0.0;
          std::size_t lcount = 0;
          for (std::size_t r : rows) {
            if (static_cast<int>(table.rows[r][j]) == c) {
              lsum += table.y[r];
              lsq += table.y[r] * table.y[r];
              ++lcount;
            }
          }
          const std::size_t rcount = rows.size() - lcount;
          if (lcount < static_cast<std::size_t>(config.min_leaf) ||
              rcount < static_cast<std::size_t>(config.min_leaf)) {
            continue;
          }
          const double rsum = sum - lsum;
          const double rsq = sumsq - lsq;
          const double child_ss =
              (lsq - lsum * lsum / static_cast<double>(lcount)) +
              (rsq - rsum * rsum / static_cast<double>(rcount));
          const double gain = node_ss - child_ss;
          if (gain > best_gain) {
            best_gain = gain;
            best_dim = static_cast<int>(j);
            best_category = c;
          }
        }
      } else {
        std::vector<std::size_t> order = rows;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return table.rows[a][j] < table.rows[b][j];
        });
        double lsum = 0.0, lsq = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          const double yi = table.y[order[i]];
          lsum += yi;
          lsq += yi * yi;
          const double xv = table.rows[order[i]][j];
          const double xn = table.rows[order[i + 1]][j];
          if (xv == xn) continue;
          const auto lcount = i + 1;
          const auto rcount = order.size() - lcount;
          if (lcount < static_cast<std::size_t>(config.min_leaf) ||
              rcount < static_cast<std::size_t>(config.min_leaf)) {
            continue;
          }
          const double rsum = sum - lsum;
          const double rsq = sumsq - lsq;
          const double child_ss =
              (lsq - lsum * lsum / static_cast<double>(lcount)) +
              (rsq - rsum * rsum / static_cast<double>(rcount));
          const double gain = node_ss - child_ss;
          if (gain > best_gain) {
            best_gain = gain;
            best_dim = static_cast<int>(j);
            best_threshold = 0.5 * (xv + xn);
            best_category = -1;
          }
        }
      }
    }

    if (best_dim < 0) return node_id;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      bool go_left;
      if (best_category >= 0) {
        go_left = static_cast<int>(table.rows[r][best_dim]) == best_category;
      } else {
        go_left = table.rows[r][best_dim] <= best_threshold;
      }
      (go_left ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int left_id = build(std::move(left_rows), depth + 1);
    const int right_id = build(std::move(right_rows), depth + 1);
    tree.nodes[node_id].dim = best_dim;
    tree.nodes[node_id].categorical_split = best_category >= 0;
    tree.nodes[node_id].threshold = best_threshold;
    tree.nodes[node_id].category = best_category;
    tree.nodes[node_id].left = left_id;
    tree.nodes[node_id].right = right_id;
    return node_id;
  }
};

// leaf cell under the uniform measure: numeric dims carry an interval in
// [0,1], categorical dims a membership mask
struct LeafCell {
  std::vector<double> lo, hi;
  std::vector<std::vector<bool>> member;
  double value = 0.0;
  double volume = 0.0;
};

void collect_leaves(const Tree& tree, const FeatureTable& table, int node_id,
                    LeafCell cell, std::vector<LeafCell>* out) {
  const TreeNode& node = tree.nodes[node_id];
  if (node.dim < 0) {
    cell.value = node.value;
    double vol = 1.0;
    for (std::size_t j = 0; j < cell.lo.size(); ++j) {
      if (table.is_categorical[j]) {
        int count = 0;
        for (bool b : cell.member[j]) count += b ? 1 : 0;
        vol *= static_cast<double>(count) / table.category_count[j];
      } else {
        vol *= cell.hi[j] - cell.lo[j];
      }
    }
    cell.volume = vol;
    out->push_back(std::move(cell));
    return;
  }
  const auto j = static_cast<std::size_t>(node.dim);
  if (node.categorical_split) {
    LeafCell left = cell;
    for (std::size_t c = 0; c < left.member[j].size(); ++c) {
      left.member[j][c] = left.member[j][c] && static_cast<int>(c) == node.category;
    }
    LeafCell right = std::move(cell);
    right.member[j][static_cast<std::size_t>(node.category)] = false;
    collect_leaves(tree, table, node.left, std::move(left), out);
    collect_leaves(tree, table, node.right, std::move(right), out);
  } else {
    LeafCell left = cell;
    left.hi[j] = std::min(left.hi[j], node.threshold);
    LeafCell right = std::move(cell);
    right.lo[j] = std::max(right.lo[j], node.threshold);
    collect_leaves(tree, table, node.left, std::move(left), out);
    collect_leaves(tree, table, node.right, std::move(right), out);
  }
}

// per-dimension individual variance fractions of one tree
std::vector<double> tree_variance_fractions(const Tree& tree,
                                            const FeatureTable& table,
                                            bool* valid) {
  const std::size_t d = table.is_categorical.size();
  LeafCell root;
  root.lo.assign(d, 0.0);
  root.hi.assign(d, 1.0);
  root.member.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    if (table.is_categorical[j]) {
      root.member[j].assign(static_cast<std::size_t>(table.category_count[j]), true);
    }
  }
  std::vector<LeafCell> leaves;
  collect_leaves(tree, table, 0, std::move(root), &leaves);

  double mu = 0.0, second = 0.0;
  for (const auto& leaf : leaves) {
    mu += leaf.volume * leaf.value;
    second += leaf.volume * leaf.value * leaf.value;
  }
  const double total_var = second - mu * mu;
  if (!(total_var > 0.0)) {
    *valid = false;
    return std::vector<double>(d, 0.0);
  }
  *valid = true;

  std::vector<double> fractions(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double var_j = 0.0;
    if (table.is_categorical[j]) {
      const auto n_cat = static_cast<double>(table.category_count[j]);
      for (int c = 0; c < table.category_count[j]; ++c) {
        // a = E[f | x_j = c], integrating the other dimensions out
        double a = 0.0;
        for (const auto& leaf : leaves) {
          if (!leaf.member[j][static_cast<std::size_t>(c)]) continue;
          int count = 0;
          for (bool b : leaf.member[j]) count += b ? 1 : 0;
          const double measure_j = static_cast<double>(count) / n_cat;
          a += leaf.volume / measure_j * leaf.value;
        }
        var_j += a * a / n_cat;
      }
      var_j -= mu * mu;
    } else {
      std::vector<double> cuts{0.0, 1.0};
      for (const auto& leaf : leaves) {
        cuts.push_back(leaf.lo[j]);
        cuts.push_back(leaf.hi[j]);
      }
      std::sort(cuts.begin(), cuts.end());
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double len = cuts[i + 1] - cuts[i];
        if (len <= 0.0) continue;
        const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        double a = 0.0;
        for (const auto& leaf : leaves) {
          if (mid < leaf.lo[j] || mid >= leaf.hi[j]) continue;
          const double measure_j = leaf.hi[j] - leaf.lo[j];
          a += leaf.volume / measure_j * leaf.value;
        }
        var_j += len * a * a;
      }
      var_j -= mu * mu;
    }
    fractions[j] = std::max(var_j, 0.0) / total_var;
  }
  return fractions;
}

} // namespace

ImportanceReport compute_importances(const std::vector<EvaluationRecord>& records,
                                     const SearchSpace& space,
                                     const ForestConfig& forest,
                                     std::uint64_t seed) {
  if (records.size() < 32) {
    throw ValidationError("fanova: need at least 32 records");
  }
  if (forest.n_trees < 1 || forest.min_leaf < 1 || forest.max_depth < 1) {
    throw ValidationError("fanova: invalid forest configuration");
  }

  const auto table = build_features(records, space);

  ImportanceReport report;
  for (const auto& p : space.parameters()) report.parameters.push_back(p.name);
  report.scores.assign(space.dimension(), 0.0);

  bool constant = true;
  for (double v : table.y) {
    if (v != table.y.front()) {
      constant = false;
      break;
    }
  }
  if (constant) {
    report.degenerate = true;
    report.residual = 0.0;
    return report;
  }

  const auto n = records.size();
  const auto bootstrap_size = static_cast<std::size_t>(std::max(
      2.0 * forest.min_leaf, std::round(forest.bootstrap_fraction * static_cast<double>(n))));

  std::vector<std::vector<double>> per_tree;
  for (int t = 0; t < forest.n_trees; ++t) {
    Rng rng(derive_seed(seed, 0x74726565ULL, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> sample(bootstrap_size);
    for (auto& s : sample) {
      s = static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(n) - 1));
    }
    TreeBuilder builder{table, forest, sample, {}};
    builder.build(sample, 0);

    bool valid = false;
    auto fractions = tree_variance_fractions(builder.tree, table, &valid);
    if (valid) per_tree.push_back(std::move(fractions));
  }

  if (per_tree.empty()) {
    report.degenerate = true;
    report.residual = 0.0;
    return report;
  }

  for (std::size_t j = 0; j < report.scores.size(); ++j) {
    double acc = 0.0;
    for (const auto& fractions : per_tree) acc += fractions[j];
    report.scores[j] = acc / static_cast<double>(per_tree.size());
  }
  report.residual =
      1.0 - std::accumulate(report.scores.begin(), report.scores.end(), 0.0);
  return report;
}

std::vector<std::string> rank_parameters(const ImportanceReport& report) {
  std::vector<std::size_t> order(report.parameters.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.scores[a] > report.scores[b];
  });
  std::vector<std::string> ranked;
  ranked.reserve(order.size());
  for (std::size_t i : order) ranked.push_back(report.parameters[i]);
  return ranked;
}

} // namespace mulch
