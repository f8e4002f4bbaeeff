#include "mulch/dataset.hpp"

#include "mulch/errors.hpp"
#include "mulch/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mulch {

namespace {

void check_balance(const Dataset& ds) {
  std::size_t ones = 0;
  for (int label : ds.labels) ones += static_cast<std::size_t>(label);
  const auto n = ds.labels.size();
  if (ones == 0 || ones == n) {
    throw ValidationError("dataset '" + ds.name + "': both classes must be present");
  }
  const double frac = static_cast<double>(ones) / static_cast<double>(n);
  if (frac > 0.8 || frac < 0.2) {
    throw ValidationError("dataset '" + ds.name +
                          "' is too imbalanced (one class exceeds 80% of rows)");
  }
}

// deterministic stratified split; guarantees each class appears on both sides
void stratified_split(Dataset* ds, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < ds->labels.size(); ++i) {
    by_class[ds->labels[i]].push_back(i);
  }
  Rng rng(derive_seed(seed, 0x73706c6974ULL));
  ds->train_idx.clear();
  ds->val_idx.clear();
  for (auto& idx : by_class) {
    if (idx.size() < 2) {
      throw ValidationError("dataset '" + ds->name +
                            "': each class needs at least 2 rows to split");
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          rng.next_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(idx[i - 1], idx[j]);
    }
    auto n_train = static_cast<std::size_t>(
        std::llround((1.0 - val_fraction) * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    ds->train_idx.insert(ds->train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds->val_idx.insert(ds->val_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(ds->train_idx.begin(), ds->train_idx.end());
  std::sort(ds->val_idx.begin(), ds->val_idx.end());
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& cell, double* out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  if (begin == end) return false;
  const auto result = std::from_chars(begin, end, *out);
  return result.ec == std::errc() && result.ptr == end;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

} // namespace

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column, std::uint64_t seed,
                 double val_fraction) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_csv: cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("load_csv: empty file");

  const auto header = split_line(line);
  std::size_t label_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == label_column) label_col = i;
  }
  if (label_col == header.size()) {
    throw ValidationError("load_csv: label column '" + label_column + "' not found");
  }

  std::vector<std::vector<std::string>> raw_rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("load_csv: row with " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
    }
    raw_rows.push_back(std::move(cells));
  }
  if (raw_rows.empty()) throw ValidationError("load_csv: no data rows");

  // label mapping: the two distinct values sorted lexicographically -> {0,1}
  std::map<std::string, int> label_values;
  for (const auto& row : raw_rows) label_values[trim(row[label_col])] = 0;
  if (label_values.size() != 2) {
    throw ValidationError("load_csv: label column must have exactly 2 distinct values, found " +
                          std::to_string(label_values.size()));
  }
  int next_label = 0;
  for (auto& [value, code] : label_values) code = next_label++;

  // feature columns: numeric as-is; non-numeric integer-encoded by sorted
  // distinct value
  const std::size_t p = header.size() - 1;
  std::vector<bool> numeric(header.size(), true);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_col) continue;
    for (const auto& row : raw_rows) {
      double v = 0.0;
      if (!parse_number(row[c], &v)) {
        numeric[c] = false;
        break;
      }
    }
  }
  std::vector<std::map<std::string, double>> encodings(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_col || numeric[c]) continue;
    std::map<std::string, double> values;
    for (const auto& row : raw_rows) {
      const auto cell = trim(row[c]);
      if (cell.empty()) {
        throw ValidationError("load_csv: missing value in column '" + header[c] + "'");
      }
      values[cell] = 0.0;
    }
    double code = 0.0;
    for (auto& [value, enc] : values) enc = code++;
    encodings[c] = std::move(values);
  }

  Dataset ds;
  ds.name = path.stem().string();
  ds.features.reserve(raw_rows.size());
  ds.labels.reserve(raw_rows.size());
  for (const auto& row : raw_rows) {
    std::vector<double> feats;
    feats.reserve(p);
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == label_col) continue;
      if (numeric[c]) {
        double v = 0.0;
        if (!parse_number(row[c], &v)) {
          throw ValidationError("load_csv: unparseable cell in column '" + header[c] + "'");
        }
        feats.push_back(v);
      } else {
        feats.push_back(encodings[c].at(trim(row[c])));
      }
    }
    ds.features.push_back(std::move(feats));
    ds.labels.push_back(label_values.at(trim(row[label_col])));
  }

  check_balance(ds);
  stratified_split(&ds, val_fraction, seed);
  return ds;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path,
              const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw ValidationError("save_csv: cannot open '" + path.string() + "'");
  const std::size_t p = dataset.num_features();
  for (std::size_t c = 0; c < p; ++c) out << "f" << c << ",";
  out << label_column << "\n";
  char buf[64];
  for (std::size_t i = 0; i < dataset.num_rows(); ++i) {
    for (std::size_t c = 0; c < p; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", dataset.features[i][c]);
      out << buf << ",";
    }
    out << dataset.labels[i] << "\n";
  }
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.rows < 50) throw ValidationError("make_synthetic: need at least 50 rows");
  if (spec.features < 2) throw ValidationError("make_synthetic: need at least 2 features");

  Rng rng(derive_seed(spec.seed, 0x73796e7468ULL));
  const std::size_t n_clusters = 6;
  std::vector<std::vector<double>> centers(n_clusters,
                                           std::vector<double>(spec.features));
  for (auto& center : centers) {
    for (auto& c : center) c = -2.0 + 4.0 * rng.next_double();
  }

  Dataset ds;
  ds.name = "synthetic";
  ds.features.resize(spec.rows, std::vector<double>(spec.features));
  ds.labels.resize(spec.rows);

  std::vector<double> score(spec.rows);
  for (std::size_t i = 0; i < spec.rows; ++i) {
    const auto k = static_cast<std::size_t>(
        rng.next_int(0, static_cast<std::int64_t>(n_clusters) - 1));
    auto& x = ds.features[i];
    for (std::size_t c = 0; c < spec.features; ++c) {
      x[c] = centers[k][c] + 0.7 * rng.next_gaussian();
    }
    double s = std::sin(0.8 * x[0]) + 0.9 * std::cos(0.6 * x[1]) +
               0.7 * std::sin(0.5 * x[1] + 0.4 * x[0]);
    if (spec.features > 2) s += 0.5 * std::sin(0.6 * x[2]) * std::cos(0.5 * x[0]);
    if (spec.features > 3) s += 0.4 * std::tanh(x[3]);
    score[i] = s;
  }

  // threshold at the median so classes land at one half each
  std::vector<double> sorted = score;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(spec.rows / 2),
                   sorted.end());
  const double threshold = sorted[spec.rows / 2];
  for (std::size_t i = 0; i < spec.rows; ++i) {
    int label = score[i] > threshold ? 1 : 0;
    if (rng.next_double() < spec.noise) label = 1 - label;
    ds.labels[i] = label;
  }

  check_balance(ds);
  stratified_split(&ds, 0.3, derive_seed(spec.seed, 0x646174ULL));
  return ds;
}

Dataset subsample_fidelity(const Dataset& dataset, double r, std::uint64_t seed) {
  if (!(r > 0.0 && r <= 1.0)) {
    throw ValidationError("subsample_fidelity: r must be in (0, 1]");
  }
  if (r == 1.0) return dataset;

  Dataset out = dataset;
  std::vector<std::size_t> by_class[2];
  for (std::size_t idx : dataset.train_idx) by_class[dataset.labels[idx]].push_back(idx);
  if (by_class[0].empty() || by_class[1].empty()) {
    throw ValidationError("subsample_fidelity: train split is missing a class");
  }

  const auto train_size = dataset.train_idx.size();
  const auto target = static_cast<std::size_t>(
      std::ceil(r * static_cast<double>(train_size)));

  // proportional allocation, largest remainder; at least one row per class
  double exact0 = r * static_cast<double>(by_class[0].size());
  std::size_t take0 = std::max<std::size_t>(1, static_cast<std::size_t>(exact0));
  std::size_t take1 = target > take0 ? target - take0 : 1;
  take0 = std::min(take0, by_class[0].size());
  take1 = std::min(std::max<std::size_t>(take1, 1), by_class[1].size());

  Rng rng(derive_seed(seed, 0x66696465ULL));
  out.train_idx.clear();
  const std::size_t takes[2] = {take0, take1};
  for (int cls = 0; cls < 2; ++cls) {
    auto& idx = by_class[cls];
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          rng.next_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(idx[i - 1], idx[j]);
    }
    out.train_idx.insert(out.train_idx.end(), idx.begin(),
                         idx.begin() + static_cast<std::ptrdiff_t>(takes[cls]));
  }
  std::sort(out.train_idx.begin(), out.train_idx.end());
  return out;
}

namespace {

struct BundledTask {
  const char* name;
  SyntheticSpec spec;
};

// bundled tasks: the train-* group feeds prior metalearning, the rest are
// evaluation tasks of varying size and noise
const BundledTask kBundledTasks[] = {
    {"moons", {1200, 6, 0.05, 9101}},
    {"rings", {1600, 6, 0.08, 9202}},
    {"blobs", {900, 5, 0.02, 9303}},
    {"spiral", {1400, 7, 0.10, 9404}},
    {"checker", {2600, 6, 0.06, 9505}},
    {"waves", {3000, 8, 0.08, 9606}},
    {"dunes", {2400, 6, 0.12, 9707}},
    {"train-1", {800, 5, 0.03, 8101}},
    {"train-2", {1000, 6, 0.06, 8202}},
    {"train-3", {1200, 7, 0.09, 8303}},
    {"train-4", {900, 5, 0.05, 8404}},
    {"train-5", {1500, 6, 0.07, 8505}},
    {"train-6", {1100, 8, 0.04, 8606}},
};

} // namespace

std::vector<std::string> bundled_task_names() {
  std::vector<std::string> names;
  for (const auto& task : kBundledTasks) names.emplace_back(task.name);
  return names;
}

Dataset resolve_task(const std::string& task_spec, std::uint64_t split_seed,
                     const std::string& label_column) {
  if (task_spec.rfind("synthetic:", 0) == 0) {
    const std::string name = task_spec.substr(10);
    for (const auto& task : kBundledTasks) {
      if (name == task.name) {
        Dataset ds = make_synthetic(task.spec);
        ds.name = name;
        return ds;
      }
    }
    throw ValidationError("unknown bundled task '" + name + "'");
  }
  return load_csv(task_spec, label_column, split_seed);
}

} // namespace mulch
