#pragma once

#include "mulch/lengthscale_box.hpp"
#include "mulch/objective.hpp"
#include "mulch/priors.hpp"
#include "mulch/search_space.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace mulch {

struct MulchMfConfig {
  double total_budget = 50.0; // B, in full-fidelity evaluation units
  double r_low = 0.1;         // low-fidelity training-data fraction
  int n_init_low = 4;
  int n_init_high = 4;
  std::string cost_key = "num_boost_round";
  std::uint64_t seed = 0;
  int gp_starts = 4;
  int n_candidates = 256;

  void validate() const;
};

struct FidelityObservation {
  Configuration config;
  double fidelity = 1.0;
  double metric = 0.0;
  double wall_time = 0.0;
  bool failed = false;
};

// fractional budget accounting; the consumed amount is recomputed from
// counts so it equals n_l*r_l + n_h + k*(r_l + 1) exactly
class BudgetLedger {
public:
  BudgetLedger(double total, double r_low) : total_(total), r_low_(r_low) {}

  void charge_init(int n_low, int n_high) {
    init_low_ += n_low;
    init_high_ += n_high;
  }
  void charge_iteration() { ++iterations_; }

  double total() const { return total_; }
  double consumed() const {
    return static_cast<double>(init_low_) * r_low_ +
           static_cast<double>(init_high_) +
           static_cast<double>(iterations_) * (r_low_ + 1.0);
  }
  int iterations() const { return iterations_; }

private:
  double total_;
  double r_low_;
  int init_low_ = 0;
  int init_high_ = 0;
  int iterations_ = 0;
};

// probability mass pairs over a two-candidate pool: the low-fidelity pair is
// proportional to the cost-key values, the high-fidelity pair inversely
// proportional; each pair sums to 1
struct CostProbs {
  std::array<double, 2> low;
  std::array<double, 2> high;
};

CostProbs cost_probs(const Configuration& theta1, const Configuration& theta2,
                     const std::string& cost_key);

// pool index picked for the mass function (p, 1-p) given a uniform draw;
// this is the selection rule the step uses
inline int select_from_pair(double p_first, double u) { return u < p_first ? 0 : 1; }

// per-iteration details recorded for inspection
struct MulchMfTrace {
  CostProbs probs;
  int pick_low = 0;  // pool index evaluated at r_low
  int pick_high = 0; // pool index evaluated at full fidelity
  double budget_after = 0.0;
};

struct MulchMfState {
  MulchMfConfig config;
  SearchSpace space;
  const PriorEnsemble* priors = nullptr;        // nullable
  const LengthscaleBox* lengthscale_box = nullptr; // nullable
  BudgetLedger ledger{0.0, 0.1};
  std::vector<FidelityObservation> history;
  std::vector<MulchMfTrace> trace;
  std::uint64_t eval_counter = 0;
};

MulchMfState mulch_mf_init(const MulchMfConfig& config, const SearchSpace& space,
                           const Objective& objective,
                           const PriorEnsemble* priors,
                           const LengthscaleBox* lengthscale_box);

// one Algorithm-1 iteration: refit both GPs, draw the pool, select by cost
// probabilities, evaluate both fidelities, charge r_l + 1
void mulch_mf_step(MulchMfState& state, const Objective& objective);

struct MulchMfResult {
  std::vector<FidelityObservation> history;
  std::vector<MulchMfTrace> trace;
  double final_budget = 0.0;
  int iterations = 0;
};

MulchMfResult run_mulch_mf(const MulchMfConfig& config, const SearchSpace& space,
                           const Objective& objective,
                           const PriorEnsemble* priors = nullptr,
                           const LengthscaleBox* lengthscale_box = nullptr);

} // namespace mulch
