#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mulch {

// dense binary-classification dataset with a stratified train/validation
// split; both classes must be present on each side and neither class may
// exceed 80% of the rows
struct Dataset {
  std::string name;
  std::vector<std::vector<double>> features; // row-major
  std::vector<int> labels;                   // 0/1
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;

  std::size_t num_rows() const { return labels.size(); }
  std::size_t num_features() const {
    return features.empty() ? 0 : features.front().size();
  }
};

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column, std::uint64_t seed,
                 double val_fraction = 0.3);

void save_csv(const Dataset& dataset, const std::filesystem::path& path,
              const std::string& label_column = "label");

struct SyntheticSpec {
  std::size_t rows = 1000;
  std::size_t features = 6;
  double noise = 0.05; // label flip probability
  std::uint64_t seed = 0;
};

// Gaussian-cluster mixture with a nonlinear decision boundary and label-flip
// noise; classes balanced by construction (threshold at the score median)
Dataset make_synthetic(const SyntheticSpec& spec);

// keeps ceil(r * |train|) training rows by stratified sampling; the
// validation split is untouched
Dataset subsample_fidelity(const Dataset& dataset, double r, std::uint64_t seed);

// named bundled tasks ("synthetic:<name>") or a CSV path
Dataset resolve_task(const std::string& task_spec, std::uint64_t split_seed = 17,
                     const std::string& label_column = "label");
std::vector<std::string> bundled_task_names();

} // namespace mulch
