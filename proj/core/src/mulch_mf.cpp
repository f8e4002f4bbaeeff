#include "mulch/mulch_mf.hpp"

#include "mulch/errors.hpp"
#include "mulch/gp.hpp"
#include "mulch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mulch {

void MulchMfConfig::validate() const {
  if (!(r_low > 0.0 && r_low < 1.0)) {
    throw ValidationError("mulch-mf: r_low must be in (0, 1)");
  }
  if (n_init_low < 1 || n_init_high < 1) {
    throw ValidationError("mulch-mf: initial sample counts must be >= 1");
  }
  const double init_cost =
      static_cast<double>(n_init_low) * r_low + static_cast<double>(n_init_high);
  if (!(total_budget > init_cost)) {
    throw ValidationError("mulch-mf: budget must exceed the initialization cost");
  }
}

CostProbs cost_probs(const Configuration& theta1, const Configuration& theta2,
                     const std::string& cost_key) {
  CostProbs probs{{0.5, 0.5}, {0.5, 0.5}};
  if (!theta1.has(cost_key) || !theta2.has(cost_key)) {
    return probs; // no cost signal: uniform selection
  }
  const double v1 = theta1.number(cost_key);
  const double v2 = theta2.number(cost_key);
  if (!(v1 > 0.0) || !(v2 > 0.0)) {
    throw ValidationError("mulch-mf: cost key '" + cost_key +
                          "' must be strictly positive");
  }
  probs.low = {v1 / (v1 + v2), v2 / (v1 + v2)};
  const double i1 = 1.0 / v1, i2 = 1.0 / v2;
  probs.high = {i1 / (i1 + i2), i2 / (i1 + i2)};
  return probs;
}

namespace {

// encode the non-failed observations at one fidelity into GP training data
bool gather(const std::vector<FidelityObservation>& history, double fidelity,
            const SearchSpace& space, Eigen::MatrixXd* X, Eigen::VectorXd* y,
            double* best) {
  std::vector<const FidelityObservation*> rows;
  for (const auto& obs : history) {
    if (!obs.failed && obs.fidelity == fidelity) rows.push_back(&obs);
  }
  if (rows.empty()) return false;
  X->resize(static_cast<Eigen::Index>(rows.size()),
            static_cast<Eigen::Index>(space.dimension()));
  y->resize(static_cast<Eigen::Index>(rows.size()));
  *best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto enc = encode(space, rows[i]->config);
    for (std::size_t j = 0; j < enc.size(); ++j) {
      (*X)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = enc[j];
    }
    (*y)(static_cast<Eigen::Index>(i)) = rows[i]->metric;
    *best = std::max(*best, rows[i]->metric);
  }
  return true;
}

FidelityObservation evaluate(const Objective& objective, const Configuration& config,
                             double fidelity, std::uint64_t seed) {
  FidelityObservation obs;
  obs.config = config;
  obs.fidelity = fidelity;
  try {
    const auto outcome = objective(config, fidelity, seed);
    obs.metric = outcome.metric;
    obs.wall_time = outcome.wall_time;
    obs.failed = outcome.failed;
  } catch (const std::exception&) {
    obs.failed = true; // budget is still charged
  }
  return obs;
}

} // namespace

MulchMfState mulch_mf_init(const MulchMfConfig& config, const SearchSpace& space,
                           const Objective& objective,
                           const PriorEnsemble* priors,
                           const LengthscaleBox* lengthscale_box) {
  config.validate();
  MulchMfState state;
  state.config = config;
  state.space = space;
  state.priors = priors;
  state.lengthscale_box = lengthscale_box;
  state.ledger = BudgetLedger(config.total_budget, config.r_low);

  const PriorEnsemble fallback =
      priors ? PriorEnsemble{} : uniform_ensemble(space);
  const PriorEnsemble& source = priors ? *priors : fallback;

  const auto n_init =
      static_cast<std::size_t>(config.n_init_low + config.n_init_high);
  const auto init_configs =
      sample_prior(source, n_init, derive_seed(config.seed, 0x696e6974ULL));

  for (int i = 0; i < config.n_init_low; ++i) {
    state.history.push_back(evaluate(objective,
                                     init_configs[static_cast<std::size_t>(i)],
                                     config.r_low,
                                     derive_seed(config.seed, 1, state.eval_counter++)));
  }
  for (int i = 0; i < config.n_init_high; ++i) {
    state.history.push_back(evaluate(
        objective,
        init_configs[static_cast<std::size_t>(config.n_init_low + i)], 1.0,
        derive_seed(config.seed, 1, state.eval_counter++)));
  }
  state.ledger.charge_init(config.n_init_low, config.n_init_high);
  return state;
}

void mulch_mf_step(MulchMfState& state, const Objective& objective) {
  const auto& config = state.config;
  const auto iteration = static_cast<std::uint64_t>(state.ledger.iterations());

  // low- and high-fidelity observations never share a model
  auto suggest_for = [&](double fidelity, std::uint64_t stream) {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    double best = 0.0;
    if (!gather(state.history, fidelity, state.space, &X, &y, &best)) {
      const PriorEnsemble fallback =
          state.priors ? PriorEnsemble{} : uniform_ensemble(state.space);
      const PriorEnsemble& source = state.priors ? *state.priors : fallback;
      return sample_prior(source, 1, derive_seed(config.seed, stream, iteration))
          .front();
    }
    const auto gp = GpModel::fit(X, y, state.lengthscale_box, config.gp_starts,
                                 derive_seed(config.seed, stream + 10, iteration));
    return suggest(gp, state.space, best,
                   static_cast<std::size_t>(config.n_candidates),
                   derive_seed(config.seed, stream + 20, iteration));
  };

  const Configuration theta1 = suggest_for(config.r_low, 100);
  const Configuration theta2 = suggest_for(1.0, 200);

  MulchMfTrace trace;
  trace.probs = cost_probs(theta1, theta2, config.cost_key);

  Rng rng(derive_seed(config.seed, 0x73656cULL, iteration));
  trace.pick_low = select_from_pair(trace.probs.low[0], rng.next_double());
  trace.pick_high = select_from_pair(trace.probs.high[0], rng.next_double());

  const Configuration& theta_low = trace.pick_low == 0 ? theta1 : theta2;
  const Configuration& theta_high = trace.pick_high == 0 ? theta1 : theta2;

  // committed in fidelity order: low first
  state.history.push_back(evaluate(objective, theta_low, config.r_low,
                                   derive_seed(config.seed, 1, state.eval_counter++)));
  state.history.push_back(evaluate(objective, theta_high, 1.0,
                                   derive_seed(config.seed, 1, state.eval_counter++)));

  state.ledger.charge_iteration();
  trace.budget_after = state.ledger.consumed();
  state.trace.push_back(trace);
}

MulchMfResult run_mulch_mf(const MulchMfConfig& config, const SearchSpace& space,
                           const Objective& objective,
                           const PriorEnsemble* priors,
                           const LengthscaleBox* lengthscale_box) {
  auto state = mulch_mf_init(config, space, objective, priors, lengthscale_box);
  while (state.ledger.consumed() < state.ledger.total()) {
    mulch_mf_step(state, objective);
  }
  MulchMfResult result;
  result.history = std::move(state.history);
  result.trace = std::move(state.trace);
  result.final_budget = state.ledger.consumed();
  result.iterations = state.ledger.iterations();
  return result;
}

} // namespace mulch
