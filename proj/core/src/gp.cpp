#include "mulch/gp.hpp"

#include "mulch/errors.hpp"
#include "mulch/rng.hpp"
#include "mulch/sobol.hpp"
#include "mulch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mulch {

namespace {

constexpr double kSqrt5 = 2.2360679774997896964;
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kDefaultLogLsLo = -4.605170185988091368; // log 1e-2
constexpr double kDefaultLogLsHi = 4.605170185988091368;  // log 1e2
constexpr double kLogSignalLo = -6.907755278982137043;    // log 1e-3
constexpr double kLogSignalHi = 4.605170185988091368;     // log 1e2
constexpr double kLogNoiseLo = -18.420680743952367477;    // log 1e-8
constexpr double kLogNoiseHi = -2.302585092994045684;     // log 1e-1

// per-dimension squared-difference matrices cached across kernel evaluations
// of one fit; the covariance then assembles with vectorized elementwise ops
struct KernelWorkspace {
  std::vector<Eigen::MatrixXd> sq_diff;

  explicit KernelWorkspace(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    sq_diff.reserve(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const Eigen::VectorXd col = X.col(j);
      Eigen::MatrixXd d = col.replicate(1, n) - col.transpose().replicate(n, 1);
      sq_diff.push_back(d.array().square().matrix());
    }
  }

  Eigen::MatrixXd covariance(const KernelParams& k) const {
    const Eigen::Index n = sq_diff.front().rows();
    Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t j = 0; j < sq_diff.size(); ++j) {
      const double ls = k.lengthscales(static_cast<Eigen::Index>(j));
      t2 += sq_diff[j] / (ls * ls);
    }
    const Eigen::ArrayXXd r = t2.array().max(0.0).sqrt() * kSqrt5;
    return (k.signal_variance * (1.0 + r + r.square() / 3.0) * (-r).exp()).matrix();
  }
};

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const KernelParams& k) {
  return KernelWorkspace(X).covariance(k);
}

// escalate diagonal jitter x10 until the factorization succeeds
Eigen::LLT<Eigen::MatrixXd> factorize_spd(const Eigen::MatrixXd& K,
                                          double noise, double* jitter_out) {
  Eigen::MatrixXd A = K;
  A.diagonal().array() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  double jitter = 0.0;
  if (llt.info() != Eigen::Success) {
    jitter = 1e-10;
    while (jitter <= 1e-4) {
      Eigen::MatrixXd B = A;
      B.diagonal().array() += jitter;
      llt.compute(B);
      if (llt.info() == Eigen::Success) break;
      jitter *= 10.0;
    }
    if (llt.info() != Eigen::Success) {
      throw NumericError("covariance is not SPD after jitter escalation to 1e-4");
    }
  }
  if (jitter_out) *jitter_out = jitter;
  return llt;
}

double lml_of_standardized(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_std,
                           const KernelParams& kernel,
                           const KernelWorkspace* workspace = nullptr) {
  const Eigen::MatrixXd K =
      workspace ? workspace->covariance(kernel) : kernel_matrix(X, kernel);
  double jitter = 0.0;
  auto llt = factorize_spd(K, kernel.noise_variance, &jitter);
  const Eigen::VectorXd alpha = llt.solve(y_std);
  const auto n = static_cast<double>(X.rows());
  double log_det = 0.0;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < L.rows(); ++i) log_det += std::log(L(i, i));
  return -0.5 * y_std.dot(alpha) - log_det - 0.5 * n * kLog2Pi;
}

void standardize(const Eigen::VectorXd& y, Eigen::VectorXd* y_std, double* mean,
                 double* scale) {
  *mean = y.mean();
  const auto n = static_cast<double>(y.size());
  const double var = (y.array() - *mean).square().sum() / n;
  *scale = var > 0.0 ? std::sqrt(var) : 1.0;
  *y_std = (y.array() - *mean) / *scale;
}

} // namespace

void KernelParams::validate() const {
  if (!(signal_variance > 0.0) || !(noise_variance > 0.0)) {
    throw ValidationError("kernel variances must be strictly positive");
  }
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
    if (!(lengthscales(i) > 0.0)) {
      throw ValidationError("kernel lengthscales must be strictly positive");
    }
  }
}

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                const KernelParams& kernel) {
  const double r2 =
      ((a - b).array() / kernel.lengthscales.array()).square().sum();
  const double r = std::sqrt(r2);
  const double s = kSqrt5 * r;
  return kernel.signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const KernelParams& kernel) {
  if (X.rows() != y.size() || X.rows() < 1) {
    throw ValidationError("log_marginal_likelihood: X and y must align");
  }
  kernel.validate();
  Eigen::VectorXd y_std;
  double mean = 0.0, scale = 1.0;
  standardize(y, &y_std, &mean, &scale);
  return lml_of_standardized(X, y_std, kernel);
}

GpModel GpModel::from_parts(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const KernelParams& kernel) {
  if (X.rows() != y.size() || X.rows() < 1) {
    throw ValidationError("GpModel: X and y must align, n >= 1");
  }
  kernel.validate();
  GpModel model;
  model.X_ = X;
  model.y_raw_ = y;
  model.kernel_ = kernel;
  standardize(y, &model.y_std_, &model.y_mean_, &model.y_scale_);
  model.factorize();
  return model;
}

void GpModel::factorize() {
  const Eigen::MatrixXd K = kernel_matrix(X_, kernel_);
  llt_ = factorize_spd(K, kernel_.noise_variance, &applied_jitter_);
  alpha_ = llt_.solve(y_std_);
}

GpModel GpModel::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const LengthscaleBox* box, int n_starts,
                     std::uint64_t seed) {
  if (X.rows() != y.size() || X.rows() < 1) {
    throw ValidationError("GpModel::fit: X and y must align, n >= 1");
  }
  if (!y.allFinite()) throw ValidationError("GpModel::fit: y must be finite");
  const auto d = static_cast<std::size_t>(X.cols());

  std::vector<double> lo(d + 2), hi(d + 2);
  if (box) {
    box->validate();
    if (box->dimension() == d) {
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = box->log_lower[j];
        hi[j] = box->log_upper[j];
      }
    } else if (box->dimension() == 1) {
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = box->log_lower[0];
        hi[j] = box->log_upper[0];
      }
    } else {
      throw ValidationError("lengthscale box dimension does not match inputs");
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      lo[j] = kDefaultLogLsLo;
      hi[j] = kDefaultLogLsHi;
    }
  }
  lo[d] = kLogSignalLo;
  hi[d] = kLogSignalHi;
  lo[d + 1] = kLogNoiseLo;
  hi[d + 1] = kLogNoiseHi;

  auto params_from = [&](const std::vector<double>& theta) {
    KernelParams k;
    k.lengthscales.resize(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) k.lengthscales(static_cast<Eigen::Index>(j)) = std::exp(theta[j]);
    k.signal_variance = std::exp(theta[d]);
    k.noise_variance = std::exp(theta[d + 1]);
    return k;
  };

  std::vector<double> mid(d + 2);
  for (std::size_t j = 0; j < d + 2; ++j) mid[j] = 0.5 * (lo[j] + hi[j]);

  GpModel model;
  model.X_ = X;
  model.y_raw_ = y;
  standardize(y, &model.y_std_, &model.y_mean_, &model.y_scale_);

  if (X.rows() == 1) {
    model.kernel_ = params_from(mid);
    model.factorize();
    return model;
  }

  const KernelWorkspace workspace(X);
  auto objective = [&](const std::vector<double>& theta) {
    try {
      return -lml_of_standardized(X, model.y_std_, params_from(theta), &workspace);
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<std::vector<double>> starts;
  starts.push_back(mid);
  if (n_starts > 1) {
    SobolSequence sobol(d + 2, derive_seed(seed, 0x67707374ULL));
    std::vector<double> u(d + 2);
    for (int s = 1; s < n_starts; ++s) {
      sobol.next_into(u.data());
      std::vector<double> theta(d + 2);
      for (std::size_t j = 0; j < d + 2; ++j) theta[j] = lo[j] + u[j] * (hi[j] - lo[j]);
      starts.push_back(std::move(theta));
    }
  }

  double best_value = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta = mid;
  const std::size_t evals_per_start = 150 * (d + 2);
  for (const auto& start : starts) {
    auto result = nelder_mead(objective, start, lo, hi, evals_per_start, 1e-9);
    if (result.value < best_value) {
      best_value = result.value;
      best_theta = result.x;
    }
  }
  if (!std::isfinite(best_value)) {
    throw NumericError("GpModel::fit: no kernel in the box yields an SPD covariance");
  }

  model.kernel_ = params_from(best_theta);
  model.factorize();
  return model;
}

GpPrediction GpModel::predict(const Eigen::VectorXd& x) const {
  if (x.size() != X_.cols()) {
    throw ValidationError("predict: input dimension mismatch");
  }
  const Eigen::Index n = X_.rows();
  Eigen::VectorXd kstar(n);
  for (Eigen::Index i = 0; i < n; ++i) kstar(i) = matern52(X_.row(i), x, kernel_);

  const double mean_std = kstar.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(kstar);
  double var_std = kernel_.signal_variance - v.squaredNorm();
  if (var_std < 0.0) {
    if (var_std < -1e-10) {
      throw NumericError("predict: posterior variance below tolerance");
    }
    var_std = 0.0;
  }

  GpPrediction out;
  out.mean = y_mean_ + y_scale_ * mean_std;
  out.variance = var_std * y_scale_ * y_scale_;
  return out;
}

double expected_improvement_value(double mean, double stddev, double best_y,
                                  Direction direction) {
  const double improvement =
      direction == Direction::Maximize ? mean - best_y : best_y - mean;
  if (stddev < 1e-12) return std::max(0.0, improvement);
  const double z = improvement / stddev;
  return stddev * (z * normal_cdf(z) + normal_pdf(z));
}

double GpModel::expected_improvement(const Eigen::VectorXd& x, double best_y,
                                     Direction direction) const {
  const auto pred = predict(x);
  return expected_improvement_value(pred.mean, std::sqrt(pred.variance), best_y,
                                    direction);
}

Configuration suggest(const GpModel& gp, const SearchSpace& space, double best_y,
                      std::size_t n_candidates, std::uint64_t seed,
                      CandidateSource source, const PriorEnsemble* priors,
                      Direction direction) {
  if (n_candidates < 1) throw ValidationError("suggest: n_candidates must be >= 1");
  const std::size_t d = space.dimension();
  if (gp.input_dimension() != static_cast<Eigen::Index>(d)) {
    throw ValidationError("suggest: space dimension does not match the model");
  }

  auto ei_at = [&](const Eigen::VectorXd& x) {
    return gp.expected_improvement(x, best_y, direction);
  };

  std::vector<Eigen::VectorXd> candidates;
  candidates.reserve(n_candidates);
  if (source == CandidateSource::PriorEnsemble) {
    if (!priors) throw ValidationError("suggest: prior candidate source needs an ensemble");
    for (const auto& config : sample_prior(*priors, n_candidates, seed)) {
      const auto enc = encode(space, config);
      candidates.push_back(Eigen::Map<const Eigen::VectorXd>(
          enc.data(), static_cast<Eigen::Index>(enc.size())));
    }
  } else {
    SobolSequence sobol(d, seed);
    std::vector<double> u(d);
    for (std::size_t i = 0; i < n_candidates; ++i) {
      sobol.next_into(u.data());
      candidates.push_back(Eigen::Map<const Eigen::VectorXd>(
          u.data(), static_cast<Eigen::Index>(d)));
    }
  }

  std::size_t best_idx = 0;
  double best_ei = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double ei = ei_at(candidates[i]);
    if (ei > best_ei) {
      best_ei = ei;
      best_idx = i;
    }
  }

  // one refinement sweep: golden-section along each coordinate, accepting
  // strict improvements only
  Eigen::VectorXd current = candidates[best_idx];
  double current_ei = best_ei;
  for (std::size_t j = 0; j < d; ++j) {
    Eigen::VectorXd probe = current;
    auto line = [&](double t) {
      probe(static_cast<Eigen::Index>(j)) = t;
      return ei_at(probe);
    };
    const double t_star = golden_section_max(line, 0.0, 1.0, 20);
    probe(static_cast<Eigen::Index>(j)) = t_star;
    const double ei = ei_at(probe);
    if (ei > current_ei) {
      current_ei = ei;
      current = probe;
    }
  }

  std::vector<double> point(current.data(), current.data() + current.size());
  return decode(space, point);
}

} // namespace mulch
