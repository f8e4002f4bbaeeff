#include "mulch/serialization.hpp"

#include "mulch/errors.hpp"

#include <fstream>

namespace mulch {

namespace {

std::string kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::Continuous: return "continuous";
    case ParamKind::Integer: return "integer";
    case ParamKind::Categorical: return "categorical";
  }
  return "unknown";
}

ParamKind kind_from_name(const std::string& name) {
  if (name == "continuous") return ParamKind::Continuous;
  if (name == "integer") return ParamKind::Integer;
  if (name == "categorical") return ParamKind::Categorical;
  throw ValidationError("unknown parameter kind '" + name + "'");
}

} // namespace

Json space_to_json(const SearchSpace& space) {
  Json params = Json::array();
  for (const auto& p : space.parameters()) {
    Json item;
    item["name"] = p.name;
    item["kind"] = kind_name(p.kind);
    if (p.kind == ParamKind::Categorical) {
      item["choices"] = p.choices;
    } else {
      item["lower"] = p.lower;
      item["upper"] = p.upper;
    }
    item["transform"] =
        p.transform == Transform::Log10Exponent ? "log10-exponent" : "none";
    params.push_back(std::move(item));
  }
  return Json{{"parameters", std::move(params)}};
}

SearchSpace space_from_json(const Json& j) {
  if (!j.contains("parameters") || !j["parameters"].is_array()) {
    throw ValidationError("space JSON must contain a 'parameters' array");
  }
  std::vector<Parameter> params;
  for (const auto& item : j["parameters"]) {
    Parameter p;
    p.name = item.at("name").get<std::string>();
    p.kind = kind_from_name(item.at("kind").get<std::string>());
    if (p.kind == ParamKind::Categorical) {
      p.choices = item.at("choices").get<std::vector<std::string>>();
    } else {
      p.lower = item.at("lower").get<double>();
      p.upper = item.at("upper").get<double>();
    }
    if (item.contains("transform") && item["transform"] == "log10-exponent") {
      p.transform = Transform::Log10Exponent;
    }
    params.push_back(std::move(p));
  }
  return SearchSpace(std::move(params));
}

SearchSpace load_space_arg(const std::string& preset_or_path) {
  if (std::filesystem::exists(preset_or_path)) {
    std::ifstream in(preset_or_path);
    Json j;
    in >> j;
    return space_from_json(j);
  }
  return default_space(preset_or_path);
}

Json config_to_json(const Configuration& config) {
  Json j = Json::object();
  for (const auto& [name, value] : config.values) {
    if (std::holds_alternative<double>(value)) {
      j[name] = std::get<double>(value);
    } else {
      j[name] = std::get<std::string>(value);
    }
  }
  return j;
}

Configuration config_from_json(const Json& j) {
  Configuration config;
  for (const auto& [name, value] : j.items()) {
    if (value.is_string()) {
      config.values[name] = value.get<std::string>();
    } else {
      config.values[name] = value.get<double>();
    }
  }
  return config;
}

namespace {

Json density_to_json(const ParamDensity& d) {
  Json j;
  j["family"] = family_name(d.family);
  j["params"] = d.params;
  j["support"] = {d.support_lo, d.support_hi};
  if (!d.labels.empty()) j["labels"] = d.labels;
  return j;
}

ParamDensity density_from_json(const Json& j) {
  ParamDensity d;
  d.family = family_from_name(j.at("family").get<std::string>());
  d.params = j.at("params").get<std::vector<double>>();
  const auto support = j.at("support").get<std::vector<double>>();
  if (support.size() != 2) throw ValidationError("density support must have 2 entries");
  d.support_lo = support[0];
  d.support_hi = support[1];
  if (j.contains("labels")) d.labels = j["labels"].get<std::vector<std::string>>();
  return d;
}

} // namespace

Json priors_to_json(const PriorsFile& priors) {
  Json j;
  j["space"] = space_to_json(priors.ensemble.space);
  Json params = Json::array();
  for (const auto& prior : priors.ensemble.parameters) {
    Json item;
    item["parameter"] = prior.parameter;
    Json components = Json::array();
    for (std::size_t i = 0; i < prior.components.size(); ++i) {
      Json c = density_to_json(prior.components[i]);
      c["weight"] = prior.weights[i];
      components.push_back(std::move(c));
    }
    item["components"] = std::move(components);
    params.push_back(std::move(item));
  }
  j["parameters"] = std::move(params);
  if (priors.lengthscale_box) {
    j["lengthscale_box"] = {{"log_lower", priors.lengthscale_box->log_lower},
                            {"log_upper", priors.lengthscale_box->log_upper}};
  }
  return j;
}

PriorsFile priors_from_json(const Json& j) {
  PriorsFile out;
  out.ensemble.space = space_from_json(j.at("space"));
  for (const auto& item : j.at("parameters")) {
    ParamPrior prior;
    prior.parameter = item.at("parameter").get<std::string>();
    for (const auto& c : item.at("components")) {
      prior.components.push_back(density_from_json(c));
      prior.weights.push_back(c.at("weight").get<double>());
    }
    out.ensemble.parameters.push_back(std::move(prior));
  }
  if (out.ensemble.parameters.size() != out.ensemble.space.dimension()) {
    throw ValidationError("priors file: parameters do not match the space");
  }
  if (j.contains("lengthscale_box")) {
    LengthscaleBox box;
    box.log_lower = j["lengthscale_box"].at("log_lower").get<std::vector<double>>();
    box.log_upper = j["lengthscale_box"].at("log_upper").get<std::vector<double>>();
    box.validate();
    out.lengthscale_box = std::move(box);
  }
  return out;
}

void save_priors(const PriorsFile& priors, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << priors_to_json(priors).dump(2) << "\n";
}

PriorsFile load_priors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open priors file '" + path.string() + "'");
  Json j;
  in >> j;
  return priors_from_json(j);
}

Json observation_to_json(const Observation& obs) {
  Json j;
  j["iteration"] = obs.iteration;
  j["config"] = config_to_json(obs.config);
  j["fidelity"] = obs.fidelity;
  if (obs.failed) {
    j["metric"] = nullptr;
    j["failed"] = true;
  } else {
    j["metric"] = obs.metric;
  }
  j["wall_time"] = obs.wall_time;
  j["budget_after"] = obs.budget_after;
  return j;
}

Observation observation_from_json(const Json& j) {
  Observation obs;
  obs.iteration = j.at("iteration").get<int>();
  obs.config = config_from_json(j.at("config"));
  obs.fidelity = j.at("fidelity").get<double>();
  if (j.at("metric").is_null()) {
    obs.failed = true;
  } else {
    obs.metric = j.at("metric").get<double>();
  }
  if (j.contains("failed")) obs.failed = j["failed"].get<bool>();
  obs.wall_time = j.at("wall_time").get<double>();
  obs.budget_after = j.at("budget_after").get<double>();
  return obs;
}

void append_observation_jsonl(std::ostream& out, const Observation& obs) {
  out << observation_to_json(obs).dump() << "\n";
}

void write_history_jsonl(const std::filesystem::path& path,
                         const std::vector<Observation>& observations) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  for (const auto& obs : observations) append_observation_jsonl(out, obs);
}

std::vector<Observation> read_history_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open history file '" + path.string() + "'");
  std::vector<Observation> out;
  std::string line;
  std::int64_t sequence = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto obs = observation_from_json(Json::parse(line));
    obs.timestamp = sequence++;
    out.push_back(std::move(obs));
  }
  return out;
}

Json kernel_to_json(const KernelParams& kernel) {
  std::vector<double> ls(kernel.lengthscales.data(),
                         kernel.lengthscales.data() + kernel.lengthscales.size());
  return Json{{"lengthscales", ls},
              {"signal_variance", kernel.signal_variance},
              {"noise_variance", kernel.noise_variance}};
}

KernelParams kernel_from_json(const Json& j) {
  KernelParams kernel;
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  kernel.lengthscales =
      Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  kernel.signal_variance = j.at("signal_variance").get<double>();
  kernel.noise_variance = j.at("noise_variance").get<double>();
  return kernel;
}

Json gp_to_json(const GpModel& gp) {
  Json j;
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < gp.inputs().rows(); ++i) {
    std::vector<double> row(gp.inputs().cols());
    for (Eigen::Index c = 0; c < gp.inputs().cols(); ++c) {
      row[static_cast<std::size_t>(c)] = gp.inputs()(i, c);
    }
    rows.push_back(row);
  }
  j["X"] = std::move(rows);
  std::vector<double> y(gp.targets().data(), gp.targets().data() + gp.targets().size());
  j["y"] = y;
  j["kernel"] = kernel_to_json(gp.kernel());
  return j;
}

GpModel gp_from_json(const Json& j) {
  const auto rows = j.at("X").get<std::vector<std::vector<double>>>();
  const auto y = j.at("y").get<std::vector<double>>();
  if (rows.empty() || rows.size() != y.size()) {
    throw ValidationError("gp JSON: X and y must align");
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows.front().size(); ++c) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  const Eigen::VectorXd yv =
      Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return GpModel::from_parts(X, yv, kernel_from_json(j.at("kernel")));
}

Json importance_report_to_json(const ImportanceReport& report) {
  Json scores = Json::object();
  for (std::size_t i = 0; i < report.parameters.size(); ++i) {
    scores[report.parameters[i]] = report.scores[i];
  }
  return Json{{"scores", std::move(scores)},
              {"residual", report.residual},
              {"ranking", rank_parameters(report)},
              {"degenerate", report.degenerate}};
}

} // namespace mulch
