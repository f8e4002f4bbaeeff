#pragma once

#include "mulch/lengthscale_box.hpp"
#include "mulch/priors.hpp"
#include "mulch/search_space.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

namespace mulch {

struct KernelParams {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;

  void validate() const;
};

// Matern-5/2 ARD covariance
double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                const KernelParams& kernel);

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

enum class Direction { Maximize, Minimize };

// GP regression model over encoded configurations in [0,1]^d. Targets are
// standardized internally; predictions are reported on the original scale.
class GpModel {
public:
  static constexpr int kDefaultStarts = 4;

  // multi-start bounded MLE of the kernel parameters (MAP under a uniform
  // box prior); box = nullptr uses the default [1e-2, 1e2] lengthscale box
  static GpModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const LengthscaleBox* box = nullptr,
                     int n_starts = kDefaultStarts, std::uint64_t seed = 0);

  GpPrediction predict(const Eigen::VectorXd& x) const;
  double expected_improvement(const Eigen::VectorXd& x, double best_y,
                              Direction direction = Direction::Maximize) const;

  const Eigen::MatrixXd& inputs() const { return X_; }
  const Eigen::VectorXd& targets() const { return y_raw_; }
  const KernelParams& kernel() const { return kernel_; }
  double target_mean() const { return y_mean_; }
  double target_scale() const { return y_scale_; }
  Eigen::Index size() const { return X_.rows(); }
  Eigen::Index input_dimension() const { return X_.cols(); }

  // rebuild a model from serialized pieces (kernel already fitted)
  static GpModel from_parts(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const KernelParams& kernel);

private:
  GpModel() = default;
  void factorize();

  Eigen::MatrixXd X_;
  Eigen::VectorXd y_raw_;
  Eigen::VectorXd y_std_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  KernelParams kernel_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double applied_jitter_ = 0.0;
};

// log marginal likelihood of the standardized targets under the kernel;
// throws NumericError if the covariance is not SPD after jitter escalation
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const KernelParams& kernel);

// closed-form expected improvement for a Gaussian posterior
double expected_improvement_value(double mean, double stddev, double best_y,
                                  Direction direction);

enum class CandidateSource { Uniform, PriorEnsemble };

// EI maximization over seeded low-discrepancy (or prior-sampled) candidates
// followed by one golden-section sweep across coordinates
Configuration suggest(const GpModel& gp, const SearchSpace& space, double best_y,
                      std::size_t n_candidates, std::uint64_t seed,
                      CandidateSource source = CandidateSource::Uniform,
                      const PriorEnsemble* priors = nullptr,
                      Direction direction = Direction::Maximize);

} // namespace mulch
