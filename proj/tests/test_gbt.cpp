#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mulch/dataset.hpp"
#include "mulch/errors.hpp"
#include "mulch/gbt.hpp"
#include "mulch/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mulch;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mulch-gbt-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

double logistic_loss(double label, double margin) {
  // -[y log p + (1-y) log(1-p)] in a numerically stable form
  const double a = std::max(margin, 0.0);
  return a - margin * label + std::log1p(std::exp(-std::fabs(margin)));
}

} // namespace

TEST_CASE("load_csv maps two label values in sorted order") {
  TempDir dir;
  const auto csv = dir.path / "toy.csv";
  std::ofstream(csv) << "f0,f1,label\n"
                        "0.1,1.0,a\n"
                        "0.2,2.0,a\n"
                        "0.3,3.0,b\n"
                        "0.4,4.0,b\n";
  const auto ds = load_csv(csv, "label", 1);
  CHECK(ds.labels == std::vector<int>{0, 0, 1, 1});
  CHECK(ds.num_features() == 2);
  CHECK(ds.train_idx.size() == 2);
  CHECK(ds.val_idx.size() == 2);
}

TEST_CASE("load_csv rejects three classes and missing cells") {
  TempDir dir;
  const auto three = dir.path / "three.csv";
  std::ofstream(three) << "f0,label\n0.1,a\n0.2,b\n0.3,c\n0.4,a\n";
  CHECK_THROWS_AS(load_csv(three, "label", 1), ValidationError);

  const auto empty = dir.path / "empty.csv";
  std::ofstream(empty) << "";
  CHECK_THROWS_AS(load_csv(empty, "label", 1), ValidationError);

  const auto missing = dir.path / "missing.csv";
  std::ofstream(missing) << "f0,f1,label\n0.1,,a\n0.2,2.0,b\n0.1,1.0,a\n0.4,2.0,b\n";
  CHECK_THROWS_AS(load_csv(missing, "label", 1), ValidationError);
}

TEST_CASE("load_csv integer-encodes non-numeric feature columns") {
  TempDir dir;
  const auto csv = dir.path / "cats.csv";
  std::ofstream(csv) << "color,f,label\nred,1.0,a\nblue,2.0,a\nred,3.0,b\nblue,4.0,b\n";
  const auto ds = load_csv(csv, "label", 1);
  // sorted distinct: blue -> 0, red -> 1
  CHECK(ds.features[0][0] == 1.0);
  CHECK(ds.features[1][0] == 0.0);
}

TEST_CASE("imbalanced ingestion is rejected") {
  TempDir dir;
  const auto csv = dir.path / "imbalanced.csv";
  std::ofstream out(csv);
  out << "f0,label\n";
  for (int i = 0; i < 95; ++i) out << i << ",a\n";
  for (int i = 0; i < 5; ++i) out << i << ",b\n";
  out.close();
  CHECK_THROWS_AS(load_csv(csv, "label", 1), ValidationError);
}

TEST_CASE("synthetic task round-trips through CSV identically") {
  TempDir dir;
  const auto ds = make_synthetic({200, 4, 0.1, 7});
  const auto csv = dir.path / "task.csv";
  save_csv(ds, csv);
  const auto back = load_csv(csv, "label", 7);
  CHECK(back.labels == ds.labels);
  REQUIRE(back.features.size() == ds.features.size());
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    CHECK(back.features[i] == ds.features[i]); // exact doubles via %.17g
  }
}

TEST_CASE("make_synthetic determinism and balance") {
  const auto a = make_synthetic({500, 5, 0.1, 42});
  const auto b = make_synthetic({500, 5, 0.1, 42});
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.train_idx == b.train_idx);

  double ones = 0;
  for (int label : a.labels) ones += label;
  const double ratio = ones / 500.0;
  CHECK(ratio >= 0.4);
  CHECK(ratio <= 0.6);

  CHECK_THROWS_AS(make_synthetic({10, 4, 0.0, 1}), ValidationError);
  CHECK_THROWS_AS(make_synthetic({100, 1, 0.0, 1}), ValidationError);
}

TEST_CASE("noise-free synthetic tasks are learnable") {
  const auto ds = make_synthetic({2000, 6, 0.0, 11});
  GbtHyperparams hp;
  hp.eta = 0.25;
  hp.max_depth = 8;
  hp.num_boost_round = 200;
  const auto result = train(ds, hp, {}, 1);
  CHECK(result.best_accuracy >= 0.95);
}

TEST_CASE("pure label noise caps accuracy at chance") {
  GbtHyperparams hp;
  hp.eta = 0.1;
  hp.max_depth = 6;
  hp.num_boost_round = 120;
  std::vector<double> accs;
  for (int seed = 0; seed < 10; ++seed) {
    const auto ds = make_synthetic({600, 5, 0.5, 100 + static_cast<std::uint64_t>(seed)});
    accs.push_back(train(ds, hp, {}, seed).best_accuracy);
  }
  std::sort(accs.begin(), accs.end());
  CHECK(accs[5] <= 0.6); // median at or below the chance band
}

TEST_CASE("subsample_fidelity keeps strata and determinism") {
  const auto ds = make_synthetic({1500, 5, 0.05, 13});
  const auto full = subsample_fidelity(ds, 1.0, 99);
  CHECK(full.train_idx == ds.train_idx); // identity at r=1

  const auto tenth = subsample_fidelity(ds, 0.1, 99);
  const auto expected = static_cast<std::size_t>(
      std::ceil(0.1 * static_cast<double>(ds.train_idx.size())));
  CHECK(tenth.train_idx.size() == expected);
  CHECK(tenth.val_idx == ds.val_idx); // validation untouched

  auto ratio_of = [&](const Dataset& d) {
    double ones = 0;
    for (auto idx : d.train_idx) ones += d.labels[idx];
    return ones / static_cast<double>(d.train_idx.size());
  };
  CHECK(std::fabs(ratio_of(tenth) - ratio_of(ds)) <= 0.05);

  CHECK(subsample_fidelity(ds, 0.5, 7).train_idx ==
        subsample_fidelity(ds, 0.5, 7).train_idx);
  CHECK_THROWS_AS(subsample_fidelity(ds, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(subsample_fidelity(ds, 1.5, 1), ValidationError);
}

TEST_CASE("a single stump beats the majority rate on separable data") {
  // linearly separable in f0
  Dataset ds;
  ds.name = "sep";
  Rng rng(3);
  for (int i = 0; i < 400; ++i) {
    const double x = rng.next_double();
    ds.features.push_back({x, rng.next_double()});
    ds.labels.push_back(x > 0.55 ? 1 : 0); // slightly imbalanced
  }
  for (int i = 0; i < 400; ++i) {
    (i % 3 == 0 ? ds.val_idx : ds.train_idx).push_back(i);
  }
  GbtHyperparams hp;
  hp.eta = 0.5;
  hp.max_depth = 1;
  hp.num_boost_round = 1;
  const auto result = train(ds, hp, {}, 1);
  CHECK(result.model.trees.size() == 1);
  double majority = 0;
  for (auto idx : ds.val_idx) majority += ds.labels[idx] == 0 ? 1.0 : 0.0;
  majority = std::max(majority, static_cast<double>(ds.val_idx.size()) - majority) /
             static_cast<double>(ds.val_idx.size());
  CHECK(result.best_accuracy >= majority);
}

TEST_CASE("eta zero yields the majority-class rate") {
  const auto base = make_synthetic({400, 4, 0.1, 5});
  // skew labels toward class 1 without breaking the 80% balance gate
  Dataset ds = base;
  Rng rng(9);
  for (auto& label : ds.labels) {
    if (label == 0 && rng.next_double() < 0.4) label = 1;
  }
  GbtHyperparams hp;
  hp.eta = 0.0;
  hp.max_depth = 4;
  hp.num_boost_round = 10;
  const auto result = train(ds, hp, {}, 1);
  double val_majority = 0.0;
  for (auto idx : ds.val_idx) val_majority += ds.labels[idx];
  val_majority = std::max(val_majority,
                          static_cast<double>(ds.val_idx.size()) - val_majority) /
                 static_cast<double>(ds.val_idx.size());
  CHECK(result.best_accuracy == doctest::Approx(val_majority));
}

TEST_CASE("patience at or above the round count reproduces disabled runs") {
  const auto ds = make_synthetic({600, 5, 0.1, 21});
  GbtHyperparams hp;
  hp.eta = 0.3;
  hp.max_depth = 5;
  hp.num_boost_round = 40;

  const auto off = train(ds, hp, {false ? EarlyStopConfig{} : EarlyStopConfig{10, false}}, 3);
  const auto loose = train(ds, hp, {40, true}, 3);
  CHECK(off.rounds_used == 40);
  CHECK(loose.rounds_used == 40);
  CHECK(off.curve == loose.curve);           // bit-identical
  CHECK(off.best_accuracy == loose.best_accuracy);
  CHECK(off.wall_time == loose.wall_time);
}

TEST_CASE("early stopping respects the patience bound") {
  const auto ds = make_synthetic({800, 5, 0.15, 23});
  GbtHyperparams hp;
  hp.eta = 0.4;
  hp.max_depth = 6;
  hp.num_boost_round = 300;
  const auto result = train(ds, hp, {10, true}, 4);
  CHECK(result.rounds_used <= 300);
  // rounds_used <= best round index (1-based) + patience
  int best_round = 0;
  for (int r = 0; r < result.rounds_used; ++r) {
    if (result.curve[r] > result.curve[best_round]) best_round = r;
  }
  CHECK(result.rounds_used <= best_round + 1 + 10);
}

TEST_CASE("training loss is nonincreasing without row sampling") {
  const auto ds = make_synthetic({400, 4, 0.05, 31});
  GbtHyperparams hp;
  hp.eta = 1.0;
  hp.max_depth = 4;
  hp.num_boost_round = 15;
  hp.gamma = 0.0;
  hp.subsample = 1.0;
  const auto result = train(ds, hp, {}, 6);

  // replay the ensemble round by round on the training split
  std::vector<double> margins(ds.num_rows(), result.model.base_margin);
  double previous = std::numeric_limits<double>::infinity();
  for (const auto& tree : result.model.trees) {
    for (auto idx : ds.train_idx) {
      int node = 0;
      while (tree[node].feature >= 0) {
        node = ds.features[idx][tree[node].feature] <= tree[node].threshold
                   ? tree[node].left
                   : tree[node].right;
      }
      margins[idx] += tree[node].value;
    }
    double loss = 0.0;
    for (auto idx : ds.train_idx) loss += logistic_loss(ds.labels[idx], margins[idx]);
    CHECK(loss <= previous + 1e-9);
    previous = loss;
  }
}

TEST_CASE("logistic gradients match finite differences") {
  // g = p - y and h = p(1-p) against central differences of the loss
  Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const double margin = 4.0 * rng.next_gaussian();
    const double label = rng.next_double() < 0.5 ? 0.0 : 1.0;
    const double h = 1e-5;
    const double up = logistic_loss(label, margin + h);
    const double down = logistic_loss(label, margin - h);
    const double mid = logistic_loss(label, margin);
    const double g_fd = (up - down) / (2.0 * h);
    const double h_fd = (up - 2.0 * mid + down) / (h * h);
    const double p = 1.0 / (1.0 + std::exp(-margin));
    CHECK(std::fabs((p - label) - g_fd) < 1e-6);
    CHECK(std::fabs(p * (1.0 - p) - h_fd) < 1e-4);
  }
}

TEST_CASE("objective is deterministic and costs scale with fidelity") {
  const auto ds = make_synthetic({800, 5, 0.08, 43});
  GbtHyperparams hp;
  hp.eta = 0.2;
  hp.max_depth = 5;
  hp.num_boost_round = 60;

  const auto a = gbt_objective(ds, hp, 0.5, {}, 77);
  const auto b = gbt_objective(ds, hp, 0.5, {}, 77);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.wall_time == b.wall_time);
  CHECK(a.accuracy >= 0.0);
  CHECK(a.accuracy <= 1.0);

  const auto low = gbt_objective(ds, hp, 0.1, {}, 77);
  const auto full = gbt_objective(ds, hp, 1.0, {}, 77);
  CHECK(low.wall_time < full.wall_time);
}

TEST_CASE("low fidelity is cheaper across a quasi-random sweep") {
  const auto ds = resolve_task("synthetic:train-1");
  const auto space = default_space("mulch5");
  int cheaper = 0;
  const auto configs = sample(space, 64, SampleMode::Quasi, 3);
  for (const auto& config : configs) {
    const auto hp = GbtHyperparams::from_config(config);
    const auto low = gbt_objective(ds, hp, 0.1, {}, 5);
    const auto full = gbt_objective(ds, hp, 1.0, {}, 5);
    if (low.wall_time < full.wall_time) ++cheaper;
  }
  CHECK(cheaper >= 58); // >= 90% of 64
}

TEST_CASE("hyperparameters outside this trainer's scope are ignored") {
  Configuration config;
  config.values["eta"] = 0.1;
  config.values["max_depth"] = 4.0;
  config.values["num_boost_round"] = 20.0;
  config.values["tree_method"] = std::string("hist");
  config.values["max_bin"] = 256.0;
  config.values["grow_policy"] = std::string("lossguide");
  config.values["max_delta_step"] = 3.0;
  config.values["alpha"] = 1.0;
  const auto hp = GbtHyperparams::from_config(config);
  CHECK(hp.eta == 0.1);
  CHECK(hp.max_depth == 4);
  CHECK(hp.num_boost_round == 20);

  Configuration bad;
  bad.values["not_a_param"] = 1.0;
  CHECK_THROWS_AS(GbtHyperparams::from_config(bad), ValidationError);
}

TEST_CASE("single-class training data is rejected") {
  Dataset ds;
  ds.name = "mono";
  for (int i = 0; i < 40; ++i) {
    ds.features.push_back({static_cast<double>(i)});
    ds.labels.push_back(i < 20 ? 0 : 1);
    (i % 4 == 0 ? ds.val_idx : ds.train_idx).push_back(i);
  }
  // overwrite train labels to a single class
  Dataset broken = ds;
  for (auto idx : broken.train_idx) broken.labels[idx] = 0;
  GbtHyperparams hp;
  CHECK_THROWS_AS(train(broken, hp, {}, 1), ValidationError);
}
