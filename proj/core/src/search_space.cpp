#include "mulch/search_space.hpp"

#include "mulch/errors.hpp"
#include "mulch/rng.hpp"
#include "mulch/sobol.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mulch {

namespace {
constexpr double kDomainTol = 1e-12;

double round_ties_even(double x) {
  // default FP environment rounds to nearest, ties to even
  return std::nearbyint(x);
}
} // namespace

void Parameter::validate() const {
  if (name.empty()) throw ValidationError("parameter name must be non-empty");
  switch (kind) {
    case ParamKind::Continuous:
      if (!(lower < upper)) {
        throw ValidationError("parameter '" + name + "': lower must be < upper");
      }
      break;
    case ParamKind::Integer:
      if (transform != Transform::None) {
        throw ValidationError("parameter '" + name +
                              "': transform only allowed for continuous kind");
      }
      if (!(lower <= upper)) {
        throw ValidationError("parameter '" + name + "': lower must be <= upper");
      }
      if (lower != std::floor(lower) || upper != std::floor(upper)) {
        throw ValidationError("parameter '" + name + "': integer bounds must be integral");
      }
      break;
    case ParamKind::Categorical: {
      if (transform != Transform::None) {
        throw ValidationError("parameter '" + name +
                              "': transform only allowed for continuous kind");
      }
      if (choices.empty()) {
        throw ValidationError("parameter '" + name + "': choices must be non-empty");
      }
      std::set<std::string> distinct(choices.begin(), choices.end());
      if (distinct.size() != choices.size()) {
        throw ValidationError("parameter '" + name + "': choices must be distinct");
      }
      break;
    }
  }
}

double Parameter::to_transformed(double native) const {
  if (transform == Transform::Log10Exponent) {
    if (native <= 0.0) {
      throw ValidationError("parameter '" + name +
                            "': log-scaled value must be positive");
    }
    return std::log10(native);
  }
  return native;
}

double Parameter::from_transformed(double transformed) const {
  if (transform == Transform::Log10Exponent) return std::pow(10.0, transformed);
  return transformed;
}

double Configuration::number(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw ValidationError("configuration has no value for '" + name + "'");
  if (!std::holds_alternative<double>(it->second)) {
    throw ValidationError("configuration value for '" + name + "' is not numeric");
  }
  return std::get<double>(it->second);
}

const std::string& Configuration::label(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw ValidationError("configuration has no value for '" + name + "'");
  if (!std::holds_alternative<std::string>(it->second)) {
    throw ValidationError("configuration value for '" + name + "' is not categorical");
  }
  return std::get<std::string>(it->second);
}

SearchSpace::SearchSpace(std::vector<Parameter> parameters)
    : parameters_(std::move(parameters)) {
  std::set<std::string> names;
  for (const auto& p : parameters_) {
    p.validate();
    if (!names.insert(p.name).second) {
      throw ValidationError("duplicate parameter name '" + p.name + "'");
    }
  }
}

const Parameter& SearchSpace::parameter(const std::string& name) const {
  for (const auto& p : parameters_) {
    if (p.name == name) return p;
  }
  throw ValidationError("unknown parameter '" + name + "'");
}

bool SearchSpace::contains(const std::string& name) const {
  return std::any_of(parameters_.begin(), parameters_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

void SearchSpace::validate(const Configuration& config) const {
  if (config.values.size() != parameters_.size()) {
    throw ValidationError("configuration must hold exactly one value per parameter");
  }
  for (const auto& p : parameters_) {
    auto it = config.values.find(p.name);
    if (it == config.values.end()) {
      throw ValidationError("configuration missing value for '" + p.name + "'");
    }
    switch (p.kind) {
      case ParamKind::Continuous: {
        const double t = p.to_transformed(std::get<double>(it->second));
        if (t < p.lower - kDomainTol || t > p.upper + kDomainTol) {
          throw ValidationError("value for '" + p.name + "' outside domain");
        }
        break;
      }
      case ParamKind::Integer: {
        const double v = std::get<double>(it->second);
        if (v != std::floor(v) || v < p.lower || v > p.upper) {
          throw ValidationError("value for '" + p.name + "' outside integer domain");
        }
        break;
      }
      case ParamKind::Categorical: {
        const auto& label = std::get<std::string>(it->second);
        if (std::find(p.choices.begin(), p.choices.end(), label) == p.choices.end()) {
          throw ValidationError("value for '" + p.name + "' is not a declared choice");
        }
        break;
      }
    }
  }
}

namespace {

Parameter make_continuous(std::string name, double lo, double hi,
                          Transform t = Transform::None) {
  Parameter p;
  p.name = std::move(name);
  p.kind = ParamKind::Continuous;
  p.lower = lo;
  p.upper = hi;
  p.transform = t;
  return p;
}

Parameter make_integer(std::string name, double lo, double hi) {
  Parameter p;
  p.name = std::move(name);
  p.kind = ParamKind::Integer;
  p.lower = lo;
  p.upper = hi;
  return p;
}

Parameter make_categorical(std::string name, std::vector<std::string> choices) {
  Parameter p;
  p.name = std::move(name);
  p.kind = ParamKind::Categorical;
  p.choices = std::move(choices);
  return p;
}

// the full 12-parameter XGBoost space, in importance-rank order
std::vector<Parameter> xgb12_rows() {
  return {
      make_continuous("eta", -5.0, 1.0, Transform::Log10Exponent),
      make_integer("max_depth", 1, 32),
      make_continuous("max_delta_step", 0.0, 10.0),
      make_continuous("alpha", 0.0, 10.0),
      make_integer("num_boost_round", 1, 500),
      make_continuous("gamma", 0.0, 5.0),
      make_continuous("lambda", 0.0, 10.0),
      make_continuous("subsample", 0.5, 1.0),
      make_continuous("min_child_weight", 1.0, 5.0),
      make_categorical("tree_method", {"approx", "hist"}),
      make_integer("max_bin", 128, 512),
      make_categorical("grow_policy", {"depthwise", "lossguide"}),
  };
}

} // namespace

SearchSpace top_k_space(int k) {
  if (k < 1 || k > 12) throw ValidationError("top(k) requires k in [1,12]");
  auto rows = xgb12_rows();
  rows.resize(static_cast<std::size_t>(k));
  return SearchSpace(std::move(rows));
}

SearchSpace default_space(const std::string& preset) {
  if (preset == "xgb12") return SearchSpace(xgb12_rows());
  if (preset == "mulch5") {
    const auto rows = xgb12_rows();
    auto pick = [&](const std::string& name) {
      for (const auto& r : rows) {
        if (r.name == name) return r;
      }
      throw ValidationError("missing row '" + name + "'");
    };
    return SearchSpace({pick("eta"), pick("gamma"), pick("max_depth"),
                        pick("min_child_weight"), pick("num_boost_round")});
  }
  if (preset.rfind("top", 0) == 0 && preset.size() > 3) {
    try {
      return top_k_space(std::stoi(preset.substr(3)));
    } catch (const std::invalid_argument&) {
      throw ValidationError("unknown space preset '" + preset + "'");
    }
  }
  throw ValidationError("unknown space preset '" + preset + "'");
}

namespace {

Configuration config_from_unit(const SearchSpace& space,
                               const double* unit) {
  Configuration config;
  const auto& params = space.parameters();
  for (std::size_t j = 0; j < params.size(); ++j) {
    const Parameter& p = params[j];
    const double u = unit[j];
    switch (p.kind) {
      case ParamKind::Continuous: {
        const double t = p.lower + u * (p.upper - p.lower);
        config.values[p.name] = p.from_transformed(t);
        break;
      }
      case ParamKind::Integer: {
        const double span = p.upper - p.lower + 1.0;
        double v = std::floor(p.lower + u * span);
        v = std::clamp(v, p.lower, p.upper);
        config.values[p.name] = v;
        break;
      }
      case ParamKind::Categorical: {
        const auto count = static_cast<double>(p.choices.size());
        auto idx = static_cast<std::size_t>(std::floor(u * count));
        idx = std::min(idx, p.choices.size() - 1);
        config.values[p.name] = p.choices[idx];
        break;
      }
    }
  }
  return config;
}

} // namespace

std::vector<Configuration> sample(const SearchSpace& space, std::size_t n,
                                  SampleMode mode, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample: n must be >= 1");
  const std::size_t d = space.dimension();
  std::vector<Configuration> out;
  out.reserve(n);

  if (mode == SampleMode::Quasi) {
    SobolSequence sobol(d, seed);
    std::vector<double> point(d);
    for (std::size_t i = 0; i < n; ++i) {
      sobol.next_into(point.data());
      out.push_back(config_from_unit(space, point.data()));
    }
  } else {
    Rng rng(mix_seed(seed));
    std::vector<double> point(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) point[j] = rng.next_double();
      out.push_back(config_from_unit(space, point.data()));
    }
  }
  return out;
}

std::vector<double> encode(const SearchSpace& space, const Configuration& config) {
  space.validate(config);
  std::vector<double> out(space.dimension());
  const auto& params = space.parameters();
  for (std::size_t j = 0; j < params.size(); ++j) {
    const Parameter& p = params[j];
    switch (p.kind) {
      case ParamKind::Continuous: {
        const double t = p.to_transformed(config.number(p.name));
        out[j] = (t - p.lower) / (p.upper - p.lower);
        break;
      }
      case ParamKind::Integer: {
        const double span = p.upper - p.lower;
        out[j] = span > 0.0 ? (config.number(p.name) - p.lower) / span : 0.0;
        break;
      }
      case ParamKind::Categorical: {
        const auto& label = config.label(p.name);
        const auto it = std::find(p.choices.begin(), p.choices.end(), label);
        const auto idx = static_cast<double>(it - p.choices.begin());
        const double denom = static_cast<double>(p.choices.size()) - 1.0;
        out[j] = denom > 0.0 ? idx / denom : 0.0;
        break;
      }
    }
    out[j] = std::clamp(out[j], 0.0, 1.0);
  }
  return out;
}

Configuration decode(const SearchSpace& space, const std::vector<double>& point) {
  if (point.size() != space.dimension()) {
    throw ValidationError("decode: point dimension mismatch");
  }
  Configuration config;
  const auto& params = space.parameters();
  for (std::size_t j = 0; j < params.size(); ++j) {
    const Parameter& p = params[j];
    const double u = point[j];
    if (u < -kDomainTol || u > 1.0 + kDomainTol) {
      throw ValidationError("decode: coordinate for '" + p.name + "' outside [0,1]");
    }
    switch (p.kind) {
      case ParamKind::Continuous: {
        const double t = p.lower + std::clamp(u, 0.0, 1.0) * (p.upper - p.lower);
        config.values[p.name] = p.from_transformed(t);
        break;
      }
      case ParamKind::Integer: {
        double v = round_ties_even(p.lower + u * (p.upper - p.lower));
        v = std::clamp(v, p.lower, p.upper);
        config.values[p.name] = v;
        break;
      }
      case ParamKind::Categorical: {
        const double denom = static_cast<double>(p.choices.size()) - 1.0;
        auto idx = static_cast<std::size_t>(round_ties_even(u * denom));
        idx = std::min(idx, p.choices.size() - 1);
        config.values[p.name] = p.choices[idx];
        break;
      }
    }
  }
  return config;
}

} // namespace mulch
