#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace mulch {

enum class ParamKind { Continuous, Integer, Categorical };

// log10-exponent means the stored bounds are base-10 exponents of the
// native value, e.g. eta with bounds [-5, 1] spans native [1e-5, 10].
enum class Transform { None, Log10Exponent };

struct Parameter {
  std::string name;
  ParamKind kind = ParamKind::Continuous;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::string> choices;
  Transform transform = Transform::None;

  void validate() const;

  // native <-> transformed coordinates (identity unless log-scaled)
  double to_transformed(double native) const;
  double from_transformed(double transformed) const;

  // bounds in transformed coordinates (== stored bounds)
  double transformed_lower() const { return lower; }
  double transformed_upper() const { return upper; }
};

using ParamValue = std::variant<double, std::string>;

struct Configuration {
  std::map<std::string, ParamValue> values;

  double number(const std::string& name) const;
  const std::string& label(const std::string& name) const;
  bool has(const std::string& name) const { return values.count(name) > 0; }

  bool operator==(const Configuration& other) const = default;
};

class SearchSpace {
public:
  SearchSpace() = default;
  explicit SearchSpace(std::vector<Parameter> parameters);

  std::size_t dimension() const { return parameters_.size(); }
  const std::vector<Parameter>& parameters() const { return parameters_; }
  const Parameter& parameter(std::size_t i) const { return parameters_.at(i); }
  const Parameter& parameter(const std::string& name) const;
  bool contains(const std::string& name) const;

  // throws ValidationError unless config has exactly one in-domain value
  // per parameter
  void validate(const Configuration& config) const;

private:
  std::vector<Parameter> parameters_;
};

enum class SampleMode { Pseudo, Quasi };

// presets: "xgb12", "mulch5", "top1".."top12"
SearchSpace default_space(const std::string& preset);
SearchSpace top_k_space(int k);

std::vector<Configuration> sample(const SearchSpace& space, std::size_t n,
                                  SampleMode mode, std::uint64_t seed);

// affine map onto [0,1]^d in transformed coordinates; categorical dims map
// to index/(|choices|-1)
std::vector<double> encode(const SearchSpace& space, const Configuration& config);
Configuration decode(const SearchSpace& space, const std::vector<double>& point);

} // namespace mulch
