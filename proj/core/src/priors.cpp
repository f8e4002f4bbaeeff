#include "mulch/priors.hpp"

#include "mulch/rng.hpp"
#include "mulch/sobol.hpp"
#include "mulch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace mulch {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr int kMleStarts = 5;
} // namespace

std::string family_name(DensityFamily family) {
  switch (family) {
    case DensityFamily::QuantileUniform: return "quantile-uniform";
    case DensityFamily::Beta: return "beta";
    case DensityFamily::Gamma: return "gamma";
    case DensityFamily::HalfCauchy: return "half-cauchy";
    case DensityFamily::CategoricalEmpirical: return "categorical";
  }
  return "unknown";
}

DensityFamily family_from_name(const std::string& name) {
  if (name == "quantile-uniform") return DensityFamily::QuantileUniform;
  if (name == "beta") return DensityFamily::Beta;
  if (name == "gamma") return DensityFamily::Gamma;
  if (name == "half-cauchy") return DensityFamily::HalfCauchy;
  if (name == "categorical") return DensityFamily::CategoricalEmpirical;
  throw ValidationError("unknown density family '" + name + "'");
}

namespace {

double gamma_pdf(double y, double shape, double scale) {
  if (y <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(y) - y / scale -
                  std::lgamma(shape) - shape * std::log(scale));
}

double beta_pdf(double z, double a, double b) {
  if (z <= 0.0 || z >= 1.0) return 0.0;
  const double ln = (a - 1.0) * std::log(z) + (b - 1.0) * std::log1p(-z) +
                    std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(ln);
}

double half_cauchy_pdf(double y, double scale) {
  if (y < 0.0) return 0.0;
  return 2.0 / (kPi * scale * (1.0 + (y / scale) * (y / scale)));
}

double half_cauchy_cdf(double y, double scale) {
  if (y <= 0.0) return 0.0;
  return 2.0 / kPi * std::atan(y / scale);
}

} // namespace

double ParamDensity::cdf(double t) const {
  switch (family) {
    case DensityFamily::QuantileUniform: {
      const double lo = params[0], hi = params[1];
      if (t <= lo) return 0.0;
      if (t >= hi) return 1.0;
      return (t - lo) / (hi - lo);
    }
    case DensityFamily::Beta: {
      const double w = support_hi - support_lo;
      const double z = (t - support_lo) / w;
      if (z <= 0.0) return 0.0;
      if (z >= 1.0) return 1.0;
      return beta_inc(params[0], params[1], z);
    }
    case DensityFamily::Gamma: {
      const double y = t - params[2];
      if (y <= 0.0) return 0.0;
      return gamma_p(params[0], y / params[1]);
    }
    case DensityFamily::HalfCauchy:
      return half_cauchy_cdf(t - params[0], params[1]);
    case DensityFamily::CategoricalEmpirical: {
      double acc = 0.0;
      const auto idx = static_cast<std::size_t>(std::max(0.0, std::floor(t)));
      for (std::size_t i = 0; i <= idx && i < params.size(); ++i) acc += params[i];
      return std::min(acc, 1.0);
    }
  }
  return 0.0;
}

double ParamDensity::pdf(double t) const {
  if (family == DensityFamily::CategoricalEmpirical) {
    const auto idx = static_cast<std::size_t>(t);
    if (t < 0.0 || idx >= params.size()) return 0.0;
    return params[idx];
  }
  if (t < support_lo || t > support_hi) return 0.0;
  switch (family) {
    case DensityFamily::QuantileUniform: {
      const double lo = params[0], hi = params[1];
      if (t < lo || t > hi) return 0.0;
      return 1.0 / (hi - lo);
    }
    case DensityFamily::Beta: {
      const double w = support_hi - support_lo;
      return beta_pdf((t - support_lo) / w, params[0], params[1]) / w;
    }
    case DensityFamily::Gamma: {
      const double mass = cdf(support_hi) - cdf(support_lo);
      if (mass <= 0.0) return 0.0;
      return gamma_pdf(t - params[2], params[0], params[1]) / mass;
    }
    case DensityFamily::HalfCauchy: {
      const double mass = cdf(support_hi) - cdf(support_lo);
      if (mass <= 0.0) return 0.0;
      return half_cauchy_pdf(t - params[0], params[1]) / mass;
    }
    default:
      return 0.0;
  }
}

double ParamDensity::draw(double u) const {
  switch (family) {
    case DensityFamily::QuantileUniform:
      return params[0] + u * (params[1] - params[0]);
    case DensityFamily::Beta: {
      const double a = params[0], b = params[1];
      const double z =
          invert_cdf([&](double x) { return beta_inc(a, b, x); }, u, 0.0, 1.0);
      return support_lo + z * (support_hi - support_lo);
    }
    case DensityFamily::Gamma: {
      const double shape = params[0], scale = params[1], loc = params[2];
      double hi = scale * std::max(1.0, shape);
      while (gamma_p(shape, hi / scale) < u && hi < 1e12) hi *= 2.0;
      const double y = invert_cdf(
          [&](double x) { return gamma_p(shape, x / scale); }, u, 0.0, hi);
      return loc + y;
    }
    case DensityFamily::HalfCauchy:
      return params[0] + params[1] * std::tan(0.5 * kPi * std::min(u, 1.0 - 1e-16));
    case DensityFamily::CategoricalEmpirical: {
      double acc = 0.0;
      for (std::size_t i = 0; i < params.size(); ++i) {
        acc += params[i];
        if (u < acc) return static_cast<double>(i);
      }
      return static_cast<double>(params.size() - 1);
    }
  }
  return 0.0;
}

double ParamPrior::density_at(double t) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    acc += weights[i] * components[i].pdf(t);
  }
  return acc;
}

TopConfigPool aggregate_top_configs(const std::vector<TaskHistory>& histories,
                                    std::size_t per_task_count) {
  if (per_task_count == 0) throw ValidationError("per_task_count must be >= 1");
  TopConfigPool pool;
  for (const auto& history : histories) {
    if (history.configs.size() != history.metrics.size()) {
      throw ValidationError("history '" + history.task +
                            "': configs and metrics must align");
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < history.metrics.size(); ++i) {
      if (std::isfinite(history.metrics[i])) order.push_back(i);
    }
    if (order.size() < per_task_count) {
      throw ValidationError("history '" + history.task + "' has only " +
                            std::to_string(order.size()) +
                            " finite evaluations, need " +
                            std::to_string(per_task_count));
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return history.metrics[a] > history.metrics[b];
    });
    for (std::size_t k = 0; k < per_task_count; ++k) {
      pool.configs.push_back(history.configs[order[k]]);
      pool.source_tasks.push_back(history.task);
      pool.metrics.push_back(history.metrics[order[k]]);
    }
  }
  return pool;
}

ParamDensity fit_quantile_uniform(const std::vector<double>& samples,
                                  double q_lo, double q_hi, double support_lo,
                                  double support_hi) {
  if (samples.size() < 2) {
    throw ValidationError("fit_quantile_uniform: need at least 2 samples");
  }
  if (!(0.0 <= q_lo && q_lo < q_hi && q_hi <= 1.0)) {
    throw ValidationError("fit_quantile_uniform: need 0 <= q_lo < q_hi <= 1");
  }
  double lo = quantile(samples, q_lo);
  double hi = quantile(samples, q_hi);
  if (lo >= hi) {
    const double width = std::max(1e-6, 1e-3 * (support_hi - support_lo));
    lo -= 0.5 * width;
    hi += 0.5 * width;
    lo = std::max(lo, support_lo);
    hi = std::min(hi, support_hi);
    if (lo >= hi) { // domain itself is tiny
      lo = support_lo;
      hi = support_hi;
    }
  }
  ParamDensity density;
  density.family = DensityFamily::QuantileUniform;
  density.params = {lo, hi};
  density.support_lo = support_lo;
  density.support_hi = support_hi;
  return density;
}

namespace {

struct MleProblem {
  std::function<double(const std::vector<double>&)> negative_loglik;
  std::vector<std::vector<double>> starts; // in optimizer coordinates
  std::vector<double> lower, upper;
  std::function<ParamDensity(const std::vector<double>&)> to_density;
};

ParamDensity run_mle(const MleProblem& problem, const std::string& what) {
  double best_value = std::numeric_limits<double>::infinity();
  std::optional<ParamDensity> best;
  for (const auto& start : problem.starts) {
    auto result = nelder_mead(problem.negative_loglik, start, problem.lower,
                              problem.upper, 0, 1e-12);
    if (std::isfinite(result.value) && result.value < best_value) {
      best_value = result.value;
      best = problem.to_density(result.x);
    }
  }
  if (!best.has_value()) {
    throw FitError("MLE fit failed for " + what + ": no start converged");
  }
  return *best;
}

} // namespace

ParamDensity fit_family_mle(const std::vector<double>& samples,
                            DensityFamily family, double support_lo,
                            double support_hi) {
  if (samples.size() < 8) {
    throw ValidationError("fit_family_mle: need at least 8 samples");
  }
  for (double s : samples) {
    if (s < support_lo - 1e-9 || s > support_hi + 1e-9) {
      throw ValidationError("fit_family_mle: sample outside the domain");
    }
  }
  const double m = mean(samples);
  const double var = variance(samples);
  const auto [min_it, max_it] = std::minmax_element(samples.begin(), samples.end());
  if (*min_it == *max_it) {
    throw FitError("fit_family_mle: samples are constant, no family fits a point mass");
  }
  const double width = support_hi - support_lo;
  const auto n = static_cast<double>(samples.size());

  MleProblem problem;
  switch (family) {
    case DensityFamily::Beta: {
      std::vector<double> z(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) {
        z[i] = std::clamp((samples[i] - support_lo) / width, 1e-12, 1.0 - 1e-12);
      }
      problem.negative_loglik = [z, n, width](const std::vector<double>& p) {
        const double a = std::exp(p[0]);
        const double b = std::exp(p[1]);
        double ll = n * (std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b)) -
                    n * std::log(width);
        for (double zi : z) ll += (a - 1.0) * std::log(zi) + (b - 1.0) * std::log1p(-zi);
        return -ll;
      };
      const double zm = std::clamp((m - support_lo) / width, 1e-6, 1.0 - 1e-6);
      const double zv = std::max(var / (width * width), 1e-12);
      double common = zm * (1.0 - zm) / zv - 1.0;
      if (common <= 0.0) common = 1.0;
      const double a0 = std::max(zm * common, 1e-2);
      const double b0 = std::max((1.0 - zm) * common, 1e-2);
      problem.starts = {{std::log(a0), std::log(b0)},
                        {0.0, 0.0},
                        {std::log(0.5), std::log(0.5)},
                        {std::log(2.0), std::log(5.0)},
                        {std::log(5.0), std::log(2.0)}};
      problem.lower = {std::log(1e-2), std::log(1e-2)};
      problem.upper = {std::log(1e4), std::log(1e4)};
      problem.to_density = [support_lo, support_hi](const std::vector<double>& p) {
        ParamDensity d;
        d.family = DensityFamily::Beta;
        d.params = {std::exp(p[0]), std::exp(p[1])};
        d.support_lo = support_lo;
        d.support_hi = support_hi;
        return d;
      };
      break;
    }
    case DensityFamily::Gamma: {
      const double loc = support_lo;
      std::vector<double> y(samples.size());
      const double floor_y = std::max(1e-12, 1e-9 * width);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        y[i] = std::max(samples[i] - loc, floor_y);
      }
      problem.negative_loglik = [y, n](const std::vector<double>& p) {
        const double shape = std::exp(p[0]);
        const double scale = std::exp(p[1]);
        double ll = -n * (std::lgamma(shape) + shape * std::log(scale));
        for (double yi : y) ll += (shape - 1.0) * std::log(yi) - yi / scale;
        return -ll;
      };
      const double ym = std::max(mean(y), floor_y);
      const double yv = std::max(variance(y), 1e-18);
      const double k0 = std::clamp(ym * ym / yv, 1e-2, 1e4);
      const double t0 = std::clamp(yv / ym, 1e-9, 1e9);
      problem.starts = {{std::log(k0), std::log(t0)},
                        {std::log(k0 * 2.0), std::log(t0 * 0.5)},
                        {std::log(k0 * 0.5), std::log(t0 * 2.0)},
                        {0.0, std::log(std::max(ym, floor_y))},
                        {std::log(2.0), std::log(std::max(ym / 2.0, floor_y))}};
      problem.lower = {std::log(1e-2), std::log(1e-9)};
      problem.upper = {std::log(1e4), std::log(1e9)};
      problem.to_density = [loc, support_lo, support_hi](const std::vector<double>& p) {
        ParamDensity d;
        d.family = DensityFamily::Gamma;
        d.params = {std::exp(p[0]), std::exp(p[1]), loc};
        d.support_lo = support_lo;
        d.support_hi = support_hi;
        return d;
      };
      break;
    }
    case DensityFamily::HalfCauchy: {
      const double loc = support_lo;
      std::vector<double> y(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) {
        y[i] = std::max(samples[i] - loc, 0.0);
      }
      problem.negative_loglik = [y, n](const std::vector<double>& p) {
        const double scale = std::exp(p[0]);
        double ll = n * std::log(2.0 / (kPi * scale));
        for (double yi : y) ll -= std::log1p((yi / scale) * (yi / scale));
        return -ll;
      };
      std::vector<double> sorted = y;
      std::sort(sorted.begin(), sorted.end());
      const double med = std::max(sorted[sorted.size() / 2], 1e-9 * width);
      problem.starts = {{std::log(med)},
                        {std::log(med * 4.0)},
                        {std::log(med * 0.25)},
                        {std::log(std::max(width * 0.1, 1e-9))},
                        {std::log(std::max(width, 1e-9))}};
      problem.lower = {std::log(std::max(1e-12, 1e-9 * width))};
      problem.upper = {std::log(std::max(1e3 * width, 1.0))};
      problem.to_density = [loc, support_lo, support_hi](const std::vector<double>& p) {
        ParamDensity d;
        d.family = DensityFamily::HalfCauchy;
        d.params = {loc, std::exp(p[0])};
        d.support_lo = support_lo;
        d.support_hi = support_hi;
        return d;
      };
      break;
    }
    default:
      throw ValidationError("fit_family_mle: family has no MLE fit");
  }

  auto density = run_mle(problem, family_name(family));
  // reject fits whose truncated mass over the domain vanishes
  const double mass = density.cdf(support_hi) - density.cdf(support_lo);
  if (!(mass > 1e-9)) {
    throw FitError("fit_family_mle: fitted " + family_name(family) +
                       " has no mass inside the domain",
                   density);
  }
  return density;
}

namespace {

std::vector<double> transformed_samples(const TopConfigPool& pool,
                                        const Parameter& p) {
  std::vector<double> out;
  out.reserve(pool.configs.size());
  for (const auto& config : pool.configs) {
    out.push_back(p.to_transformed(config.number(p.name)));
  }
  return out;
}

ParamPrior full_domain_uniform(const Parameter& p) {
  ParamPrior prior;
  prior.parameter = p.name;
  ParamDensity d;
  if (p.kind == ParamKind::Categorical) {
    d.family = DensityFamily::CategoricalEmpirical;
    d.labels = p.choices;
    d.params.assign(p.choices.size(), 1.0 / static_cast<double>(p.choices.size()));
  } else {
    d.family = DensityFamily::QuantileUniform;
    d.params = {p.transformed_lower(), p.transformed_upper()};
    d.support_lo = p.transformed_lower();
    d.support_hi = p.transformed_upper();
  }
  prior.components = {std::move(d)};
  prior.weights = {1.0};
  return prior;
}

} // namespace

PriorEnsemble uniform_ensemble(const SearchSpace& space) {
  PriorEnsemble ensemble;
  ensemble.space = space;
  for (const auto& p : space.parameters()) {
    ensemble.parameters.push_back(full_domain_uniform(p));
  }
  return ensemble;
}

PriorEnsemble build_ensemble(const TopConfigPool& pool, const SearchSpace& space,
                             const QuantilePairs& quantile_pairs) {
  if (pool.size() == 0) throw ValidationError("build_ensemble: empty pool");
  PriorEnsemble ensemble;
  ensemble.space = space;

  for (const auto& p : space.parameters()) {
    auto pair_it = quantile_pairs.find(p.name);
    const double q_lo = pair_it == quantile_pairs.end() ? 0.05 : pair_it->second.first;
    const double q_hi = pair_it == quantile_pairs.end() ? 0.95 : pair_it->second.second;

    ParamPrior prior;
    prior.parameter = p.name;

    if (p.kind == ParamKind::Categorical) {
      // empirical frequencies with add-one smoothing
      std::vector<double> counts(p.choices.size(), 1.0);
      double total = static_cast<double>(p.choices.size());
      for (const auto& config : pool.configs) {
        const auto& label = config.label(p.name);
        const auto it = std::find(p.choices.begin(), p.choices.end(), label);
        if (it == p.choices.end()) {
          throw ValidationError("pool config uses unknown choice for '" + p.name + "'");
        }
        counts[static_cast<std::size_t>(it - p.choices.begin())] += 1.0;
        total += 1.0;
      }
      ParamDensity d;
      d.family = DensityFamily::CategoricalEmpirical;
      d.labels = p.choices;
      for (double c : counts) d.params.push_back(c / total);
      prior.components = {std::move(d)};
      prior.weights = {1.0};
      ensemble.parameters.push_back(std::move(prior));
      continue;
    }

    const auto samples = transformed_samples(pool, p);
    const double lo = p.transformed_lower();
    const double hi = p.transformed_upper();

    try {
      prior.components.push_back(fit_quantile_uniform(samples, q_lo, q_hi, lo, hi));
    } catch (const Error&) {
      // fall through; MLE families may still fit
    }
    for (DensityFamily family :
         {DensityFamily::Beta, DensityFamily::Gamma, DensityFamily::HalfCauchy}) {
      try {
        prior.components.push_back(fit_family_mle(samples, family, lo, hi));
      } catch (const Error&) {
        // this family did not converge; ensemble the rest
      }
    }

    if (prior.components.empty()) {
      std::cerr << "warning: no density fit converged for parameter '" << p.name
                << "', falling back to the full-domain uniform\n";
      ensemble.parameters.push_back(full_domain_uniform(p));
      continue;
    }
    prior.weights.assign(prior.components.size(),
                         1.0 / static_cast<double>(prior.components.size()));
    ensemble.parameters.push_back(std::move(prior));
  }
  return ensemble;
}

std::vector<Configuration> sample_prior(const PriorEnsemble& ensemble,
                                        std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample_prior: n must be >= 1");
  const auto& params = ensemble.space.parameters();
  const std::size_t d = params.size();
  if (ensemble.parameters.size() != d) {
    throw ValidationError("sample_prior: ensemble does not match its space");
  }

  // 2 stratified coordinates per parameter: component pick and CDF draw;
  // rejection redraws come from a separate pseudo stream so the base stream
  // stays aligned across ensembles
  SobolSequence sobol(2 * d, seed);
  Rng reject_rng(derive_seed(seed, 0x72656a6563ULL));
  std::vector<double> point(2 * d);
  std::vector<Configuration> out;
  out.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    sobol.next_into(point.data());
    Configuration config;
    for (std::size_t j = 0; j < d; ++j) {
      const Parameter& p = params[j];
      const ParamPrior& prior = ensemble.parameters[j];

      double u_pick = point[2 * j];
      double u_draw = point[2 * j + 1];
      double value = 0.0;
      for (int attempt = 0;; ++attempt) {
        // pick a mixture component by weight
        std::size_t c = 0;
        double acc = 0.0;
        for (; c + 1 < prior.components.size(); ++c) {
          acc += prior.weights[c];
          if (u_pick < acc) break;
        }
        value = prior.components[c].draw(u_draw);
        if (p.kind == ParamKind::Categorical) break;
        if (value >= p.transformed_lower() && value <= p.transformed_upper()) break;
        if (attempt >= 100) {
          value = std::clamp(value, p.transformed_lower(), p.transformed_upper());
          break;
        }
        u_pick = reject_rng.next_double();
        u_draw = reject_rng.next_double();
      }

      switch (p.kind) {
        case ParamKind::Continuous:
          config.values[p.name] = p.from_transformed(value);
          break;
        case ParamKind::Integer: {
          double v = std::nearbyint(value);
          v = std::clamp(v, p.lower, p.upper);
          config.values[p.name] = v;
          break;
        }
        case ParamKind::Categorical: {
          auto idx = static_cast<std::size_t>(value);
          idx = std::min(idx, p.choices.size() - 1);
          config.values[p.name] = p.choices[idx];
          break;
        }
      }
    }
    out.push_back(std::move(config));
  }
  return out;
}

double density_at(const PriorEnsemble& ensemble, const Configuration& config) {
  try {
    ensemble.space.validate(config);
  } catch (const ValidationError&) {
    return 0.0;
  }
  double product = 1.0;
  const auto& params = ensemble.space.parameters();
  for (std::size_t j = 0; j < params.size(); ++j) {
    const Parameter& p = params[j];
    double t = 0.0;
    if (p.kind == ParamKind::Categorical) {
      const auto& label = config.label(p.name);
      const auto it = std::find(p.choices.begin(), p.choices.end(), label);
      t = static_cast<double>(it - p.choices.begin());
    } else {
      t = p.to_transformed(config.number(p.name));
    }
    product *= ensemble.parameters[j].density_at(t);
  }
  return product;
}

LengthscaleBox learn_lengthscale_box(
    const std::vector<std::vector<double>>& best_lengthscales, double q_lo,
    double q_hi) {
  if (best_lengthscales.size() < 2) {
    throw ValidationError("learn_lengthscale_box: need at least 2 vectors");
  }
  const std::size_t d = best_lengthscales.front().size();
  LengthscaleBox box;
  box.log_lower.resize(d);
  box.log_upper.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> logs;
    logs.reserve(best_lengthscales.size());
    for (const auto& v : best_lengthscales) {
      if (v.size() != d) {
        throw ValidationError("learn_lengthscale_box: inconsistent dimensions");
      }
      if (!(v[j] > 0.0)) {
        throw ValidationError("learn_lengthscale_box: lengthscales must be positive");
      }
      logs.push_back(std::log(v[j]));
    }
    double lo = quantile(logs, q_lo);
    double hi = quantile(logs, q_hi);
    if (lo >= hi) {
      const double width = std::max(1e-6, 1e-3 * std::max(1.0, std::fabs(lo)));
      lo -= 0.5 * width;
      hi += 0.5 * width;
    }
    box.log_lower[j] = lo;
    box.log_upper[j] = hi;
  }
  box.validate();
  return box;
}

void LengthscaleBox::validate() const {
  if (log_lower.size() != log_upper.size()) {
    throw ValidationError("lengthscale box: bound dimensions differ");
  }
  for (std::size_t i = 0; i < log_lower.size(); ++i) {
    if (!(log_lower[i] < log_upper[i])) {
      throw ValidationError("lengthscale box: lower must be < upper elementwise");
    }
  }
}

} // namespace mulch
