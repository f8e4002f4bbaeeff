#pragma once

#include "mulch/errors.hpp"
#include "mulch/lengthscale_box.hpp"
#include "mulch/search_space.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mulch {

enum class DensityFamily {
  QuantileUniform,
  Beta,
  Gamma,
  HalfCauchy,
  CategoricalEmpirical,
};

std::string family_name(DensityFamily family);
DensityFamily family_from_name(const std::string& name);

// One-dimensional density over a parameter's transformed domain. Unbounded
// families (Gamma, Half-Cauchy) are truncated to the support and
// renormalized when evaluated.
//
// params by family:
//   quantile-uniform: {L, U}
//   beta:             {alpha, beta}, mapped affinely onto the support
//   gamma:            {shape, scale, location}
//   half-cauchy:      {location, scale}
//   categorical:      per-choice probabilities (labels in `labels`)
struct ParamDensity {
  DensityFamily family = DensityFamily::QuantileUniform;
  std::vector<double> params;
  double support_lo = 0.0;
  double support_hi = 1.0;
  std::vector<std::string> labels;

  // renormalized density at a transformed coordinate (pmf for categorical,
  // where t is the choice index)
  double pdf(double t) const;

  // inverse-CDF draw from the *untruncated* family; callers reject draws
  // outside the support
  double draw(double u) const;

  double cdf(double t) const;
};

class FitError : public NumericError {
public:
  FitError(const std::string& message, std::optional<ParamDensity> partial = {})
      : NumericError(message), partial_fit(std::move(partial)) {}

  std::optional<ParamDensity> partial_fit;
};

struct ParamPrior {
  std::string parameter;
  std::vector<ParamDensity> components;
  std::vector<double> weights;

  double density_at(double t) const;
};

// product of independent per-parameter mixtures
struct PriorEnsemble {
  SearchSpace space;
  std::vector<ParamPrior> parameters; // aligned with space order

  std::size_t dimension() const { return parameters.size(); }
};

struct TaskHistory {
  std::string task;
  std::vector<Configuration> configs;
  std::vector<double> metrics;
};

struct TopConfigPool {
  std::vector<Configuration> configs;
  std::vector<std::string> source_tasks;
  std::vector<double> metrics;

  std::size_t size() const { return configs.size(); }
};

// the per_task_count best-metric configurations of each history
// (maximization); entries with non-finite metrics are dropped first
TopConfigPool aggregate_top_configs(const std::vector<TaskHistory>& histories,
                                    std::size_t per_task_count);

// uniform on [quantile(q_lo), quantile(q_hi)] of the samples (linear
// interpolation); a degenerate interval is widened by
// max(1e-6, 1e-3 * domain width) and clamped to the domain
ParamDensity fit_quantile_uniform(const std::vector<double>& samples,
                                  double q_lo, double q_hi, double support_lo,
                                  double support_hi);

// multi-start MLE fit of one family over the samples (transformed
// coordinates); throws FitError when no start converges
ParamDensity fit_family_mle(const std::vector<double>& samples,
                            DensityFamily family, double support_lo,
                            double support_hi);

using QuantilePairs = std::map<std::string, std::pair<double, double>>;

PriorEnsemble build_ensemble(const TopConfigPool& pool, const SearchSpace& space,
                             const QuantilePairs& quantile_pairs = {});

// full-domain uniform per parameter (the uninformed fallback)
PriorEnsemble uniform_ensemble(const SearchSpace& space);

std::vector<Configuration> sample_prior(const PriorEnsemble& ensemble,
                                        std::size_t n, std::uint64_t seed);

double density_at(const PriorEnsemble& ensemble, const Configuration& config);

LengthscaleBox learn_lengthscale_box(
    const std::vector<std::vector<double>>& best_lengthscales, double q_lo,
    double q_hi);

} // namespace mulch
