#pragma once

#include "mulch/engine.hpp"
#include "mulch/fanova.hpp"
#include "mulch/gp.hpp"
#include "mulch/priors.hpp"
#include "mulch/search_space.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mulch {

using Json = nlohmann::json;

Json space_to_json(const SearchSpace& space);
SearchSpace space_from_json(const Json& j);

// --space accepts a preset name or a JSON file path
SearchSpace load_space_arg(const std::string& preset_or_path);

Json config_to_json(const Configuration& config);
Configuration config_from_json(const Json& j);

// metalearned artifact: prior ensemble plus the optional lengthscale box
struct PriorsFile {
  PriorEnsemble ensemble;
  std::optional<LengthscaleBox> lengthscale_box;
};

Json priors_to_json(const PriorsFile& priors);
PriorsFile priors_from_json(const Json& j);
void save_priors(const PriorsFile& priors, const std::filesystem::path& path);
PriorsFile load_priors(const std::filesystem::path& path);

Json observation_to_json(const Observation& obs);
Observation observation_from_json(const Json& j);

void append_observation_jsonl(std::ostream& out, const Observation& obs);
void write_history_jsonl(const std::filesystem::path& path,
                         const std::vector<Observation>& observations);
std::vector<Observation> read_history_jsonl(const std::filesystem::path& path);

Json kernel_to_json(const KernelParams& kernel);
KernelParams kernel_from_json(const Json& j);

Json gp_to_json(const GpModel& gp);
GpModel gp_from_json(const Json& j);

Json importance_report_to_json(const ImportanceReport& report);

} // namespace mulch
