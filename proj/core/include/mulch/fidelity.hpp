#pragma once

#include "mulch/search_space.hpp"

#include <vector>

namespace mulch {

// metric lists for the same configurations evaluated at several fidelities
struct FidelitySweep {
  std::vector<Configuration> configs;          // may be empty (ids only)
  std::vector<double> fidelities;              // one entry per metric list
  std::vector<std::vector<double>> metrics;    // metrics[i] aligned with configs

  std::size_t size() const { return metrics.empty() ? 0 : metrics.front().size(); }
};

struct ScoreRow {
  double fidelity = 0.0;
  double correlation = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// min-max normalization per list; a constant list maps to all ones (every
// point is simultaneously best)
std::vector<double> normalize(const std::vector<double>& y);

// sample Pearson correlation; throws NumericError when a list is constant
double correlation_score(const std::vector<double>& y_low,
                         const std::vector<double>& y_full);

// mean normalized full-fidelity value over the top-decile indices of the
// low-fidelity list (set size ceil(m/10), ties broken by lower index)
double precision_score(const std::vector<double>& y_low,
                       const std::vector<double>& y_full);

// the converse: mean normalized low-fidelity value over the full-fidelity
// top decile
double recall_score(const std::vector<double>& y_low,
                    const std::vector<double>& y_full);

// one row per fidelity != 1.0, each compared against the full-fidelity list
std::vector<ScoreRow> score_table(const FidelitySweep& sweep);

} // namespace mulch
