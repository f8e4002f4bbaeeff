#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace mulch {

double normal_pdf(double z);
double normal_cdf(double z);

// regularized incomplete gamma P(a, x)
double gamma_p(double a, double x);

// regularized incomplete beta I_x(a, b)
double beta_inc(double a, double b, double x);

// linear-interpolation sample quantile over an unsorted sample
double quantile(std::vector<double> values, double q);

double mean(const std::vector<double>& values);
double variance(const std::vector<double>& values); // population variance
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// monotone-CDF inversion by bisection on [lo, hi]
double invert_cdf(const std::function<double(double)>& cdf, double target,
                  double lo, double hi);

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
};

// Minimizes fn inside the box [lower, upper] (points are clamped before
// evaluation). Deterministic for a fixed start.
NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& fn,
    std::vector<double> start, const std::vector<double>& lower,
    const std::vector<double>& upper, std::size_t max_evaluations = 0,
    double tolerance = 1e-12);

// golden-section maximization of fn on [lo, hi]
double golden_section_max(const std::function<double(double)>& fn, double lo,
                          double hi, int iterations);

} // namespace mulch
