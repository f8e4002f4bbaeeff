#include "mulch/stats.hpp"

#include "mulch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mulch {

namespace {
constexpr double kSqrt2Pi = 2.5066282746310005024;
constexpr int kMaxSeriesIter = 500;
constexpr double kSeriesEps = 1e-15;
} // namespace

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / kSqrt2Pi; }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// series expansion of P(a,x), valid for x < a + 1
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < kMaxSeriesIter; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kSeriesEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a,x), valid for x >= a + 1
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxSeriesIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kSeriesEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

} // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0) throw ValidationError("gamma_p: a must be positive");
  if (x < 0.0) return 0.0;
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

namespace {

double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxSeriesIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kSeriesEps) break;
  }
  return h;
}

} // namespace

double beta_inc(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw ValidationError("beta_inc: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile: empty sample");
  if (q < 0.0 || q > 1.0) throw ValidationError("quantile: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("mean: empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double variance(const std::vector<double>& values) {
  const double mu = mean(values);
  double sum = 0.0;
  for (double v : values) sum += (v - mu) * (v - mu);
  return sum / static_cast<double>(values.size());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValidationError("pearson: lists must have equal length >= 2");
  }
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw NumericError("pearson: correlation undefined for a constant list");
  }
  return sab / std::sqrt(saa * sbb);
}

double invert_cdf(const std::function<double(double)>& cdf, double target,
                  double lo, double hi) {
  double flo = cdf(lo);
  double fhi = cdf(hi);
  if (target <= flo) return lo;
  if (target >= fhi) return hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (cdf(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& fn,
    std::vector<double> start, const std::vector<double>& lower,
    const std::vector<double>& upper, std::size_t max_evaluations,
    double tolerance) {
  const std::size_t n = start.size();
  if (n == 0 || lower.size() != n || upper.size() != n) {
    throw ValidationError("nelder_mead: inconsistent dimensions");
  }
  if (max_evaluations == 0) max_evaluations = 400 * n;

  std::size_t evals = 0;
  auto clamp_point = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  };
  auto eval = [&](std::vector<double> x) {
    clamp_point(x);
    ++evals;
    const double v = fn(x);
    return std::pair<std::vector<double>, double>(std::move(x), v);
  };

  clamp_point(start);
  std::vector<std::pair<std::vector<double>, double>> simplex;
  simplex.reserve(n + 1);
  simplex.push_back(eval(start));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v = start;
    const double width = upper[i] - lower[i];
    double step = width > 0.0 ? 0.1 * width : 0.05;
    if (v[i] + step > upper[i]) step = -step;
    v[i] += step;
    simplex.push_back(eval(v));
  }

  const double alpha = 1.0, gamma_ = 2.0, rho = 0.5, sigma = 0.5;
  auto by_value = [](const auto& a, const auto& b) { return a.second < b.second; };

  while (evals < max_evaluations) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    if (std::fabs(simplex.back().second - simplex.front().second) <
        tolerance * (1.0 + std::fabs(simplex.front().second))) {
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i].first[j];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    const auto& worst = simplex.back();
    std::vector<double> reflected(n);
    for (std::size_t j = 0; j < n; ++j) {
      reflected[j] = centroid[j] + alpha * (centroid[j] - worst.first[j]);
    }
    auto r = eval(reflected);

    if (r.second < simplex.front().second) {
      std::vector<double> expanded(n);
      for (std::size_t j = 0; j < n; ++j) {
        expanded[j] = centroid[j] + gamma_ * (r.first[j] - centroid[j]);
      }
      auto e = eval(expanded);
      simplex.back() = e.second < r.second ? std::move(e) : std::move(r);
    } else if (r.second < simplex[n - 1].second) {
      simplex.back() = std::move(r);
    } else {
      std::vector<double> contracted(n);
      for (std::size_t j = 0; j < n; ++j) {
        contracted[j] = centroid[j] + rho * (worst.first[j] - centroid[j]);
      }
      auto c = eval(contracted);
      if (c.second < worst.second) {
        simplex.back() = std::move(c);
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          std::vector<double> shrunk(n);
          for (std::size_t j = 0; j < n; ++j) {
            shrunk[j] = simplex[0].first[j] +
                        sigma * (simplex[i].first[j] - simplex[0].first[j]);
          }
          simplex[i] = eval(shrunk);
        }
      }
    }
  }

  std::sort(simplex.begin(), simplex.end(), by_value);
  NelderMeadResult result;
  result.x = simplex.front().first;
  result.value = simplex.front().second;
  result.evaluations = evals;
  return result;
}

double golden_section_max(const std::function<double(double)>& fn, double lo,
                          double hi, int iterations) {
  const double inv_phi = 0.6180339887498948482;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = fn(c);
  double fd = fn(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = fn(d);
    }
  }
  return fc > fd ? c : d;
}

} // namespace mulch
