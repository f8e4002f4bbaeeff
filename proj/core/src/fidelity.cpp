#include "mulch/fidelity.hpp"

#include "mulch/errors.hpp"
#include "mulch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mulch {

std::vector<double> normalize(const std::vector<double>& y) {
  if (y.empty()) throw ValidationError("normalize: empty list");
  const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(y.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 1.0);
    return out;
  }
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - lo) / (hi - lo);
  return out;
}

double correlation_score(const std::vector<double>& y_low,
                         const std::vector<double>& y_full) {
  return pearson(y_low, y_full);
}

namespace {

// indices of the top ceil(m/10) values, ties broken by lower index
std::vector<std::size_t> top_decile(const std::vector<double>& y) {
  const std::size_t m = y.size();
  const std::size_t k = (m + 9) / 10;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  order.resize(k);
  return order;
}

} // namespace

double precision_score(const std::vector<double>& y_low,
                       const std::vector<double>& y_full) {
  if (y_low.size() != y_full.size() || y_low.empty()) {
    throw ValidationError("precision_score: lists must have equal length >= 1");
  }
  const auto top = top_decile(y_low);
  const auto normalized = normalize(y_full);
  double acc = 0.0;
  for (std::size_t i : top) acc += normalized[i];
  return acc / static_cast<double>(top.size());
}

double recall_score(const std::vector<double>& y_low,
                    const std::vector<double>& y_full) {
  if (y_low.size() != y_full.size() || y_low.empty()) {
    throw ValidationError("recall_score: lists must have equal length >= 1");
  }
  const auto top = top_decile(y_full);
  const auto normalized = normalize(y_low);
  double acc = 0.0;
  for (std::size_t i : top) acc += normalized[i];
  return acc / static_cast<double>(top.size());
}

std::vector<ScoreRow> score_table(const FidelitySweep& sweep) {
  if (sweep.fidelities.size() != sweep.metrics.size()) {
    throw ValidationError("score_table: fidelities and metric lists must align");
  }
  const std::vector<double>* full = nullptr;
  for (std::size_t i = 0; i < sweep.fidelities.size(); ++i) {
    if (sweep.fidelities[i] == 1.0) full = &sweep.metrics[i];
  }
  if (!full) throw ValidationError("score_table: full-fidelity list (r = 1) missing");

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < sweep.fidelities.size(); ++i) {
    if (sweep.fidelities[i] != 1.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sweep.fidelities[a] < sweep.fidelities[b];
  });

  std::vector<ScoreRow> rows;
  for (std::size_t i : order) {
    const auto& y = sweep.metrics[i];
    if (y.size() != full->size()) {
      throw ValidationError("score_table: metric lists must share one config set");
    }
    ScoreRow row;
    row.fidelity = sweep.fidelities[i];
    row.correlation = correlation_score(y, *full);
    row.precision = precision_score(y, *full);
    row.recall = recall_score(y, *full);
    rows.push_back(row);
  }
  return rows;
}

} // namespace mulch
