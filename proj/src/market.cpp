#include "descore/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace descore {

namespace {

// Shewchuk-style exact accumulator (the algorithm behind Python's fsum):
// keeps the running sum as a list of non-overlapping partials.
class ExactSum {
 public:
  void add(double x) {
    std::size_t used = 0;
    for (std::size_t i = 0; i < partials_.size(); ++i) {
      double p = partials_[i];
      if (std::abs(x) < std::abs(p)) std::swap(x, p);
      const double hi = x + p;
      const double lo = p - (hi - x);
      if (lo != 0.0) partials_[used++] = lo;
      x = hi;
    }
    partials_.resize(used);
    partials_.push_back(x);
  }

  double value() const {
    double total = 0.0;
    for (double p : partials_) total += p;
    return total;
  }

 private:
  std::vector<double> partials_;
};

}  // namespace

std::string to_string(SubsidyScheme scheme) {
  switch (scheme) {
    case SubsidyScheme::none: return "none";
    case SubsidyScheme::full_net_utility: return "full_net_utility";
    case SubsidyScheme::inherent_only: return "inherent_only";
  }
  throw std::logic_error("unreachable subsidy scheme");
}

SubsidyScheme subsidy_scheme_from(const std::string& name) {
  if (name == "none") return SubsidyScheme::none;
  if (name == "full_net_utility") return SubsidyScheme::full_net_utility;
  if (name == "inherent_only") return SubsidyScheme::inherent_only;
  throw std::invalid_argument("unknown subsidy scheme: " + name);
}

MarketState::MarketState(CostPtr cost, DecisionPolicy policy, Distribution initial,
                         SubsidyScheme scheme, int grid_resolution)
    : cost_(std::move(cost)),
      policy_(std::move(policy)),
      incumbent_(std::move(initial)),
      owner_("house"),
      owner_bias_(UtilityMatrix::unlabeled(std::vector<std::vector<double>>(
          policy_.utility().decisions(), std::vector<double>(policy_.utility().outcomes(), 0.0)))),
      scheme_(scheme),
      grid_resolution_(grid_resolution) {
  if (!cost_) throw std::invalid_argument("MarketState: null cost");
  if (incumbent_.size() != policy_.utility().outcomes())
    throw std::invalid_argument("MarketState: forecast size does not match the decision problem");
  if (grid_resolution_ < 1) throw std::invalid_argument("MarketState: grid resolution must be positive");
}

std::vector<double> MarketState::hyperplane(std::span<const double> p) const {
  std::vector<double> h(p.size());
  cost_->subgradient(p, h);
  const double base = cost_->value(p) - dot(h, p);
  for (double& v : h) v += base;
  return h;
}

double MarketState::expected_payment(const Distribution& beliefs) const {
  return dot(hyperplane(incumbent_.span()), beliefs.span());
}

MarketStep MarketState::msr_step(const ExpertAgent& entrant) {
  if (settled_) throw std::logic_error("msr_step: market already settled");
  if (entrant.beliefs.size() != incumbent_.size())
    throw std::invalid_argument("msr_step: belief size does not match the market");
  if (entrant.bias.outcomes() != incumbent_.size() ||
      entrant.bias.decisions() != policy_.utility().decisions())
    throw std::invalid_argument("msr_step: bias shape does not match the market");

  Distribution report = entrant.beliefs;
  if (!entrant.truthful) {
    // Myopic best response: the entrant's position is worth H_r per outcome
    // (compensation plus own inherent utility), so maximize H_r . beliefs
    // over the grid.  Propriety makes this the snapped truth for strictly
    // convex costs; the sweep keeps non-strict costs honest too.
    const SimplexGrid grid(incumbent_.size(), grid_resolution_);
    Index best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    std::vector<double> r(incumbent_.size());
    for (Index i = 0; i < grid.size(); ++i) {
      grid.point(i, r);
      const double v = dot(hyperplane(r), entrant.beliefs.span());
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    report = grid.distribution(best);
  }

  MarketStep rec;
  rec.step = static_cast<int>(steps_.size()) + 1;
  rec.expert = entrant.id;
  rec.incumbent = incumbent_.probs();
  rec.report = report.probs();
  rec.incumbent_decision = policy_.decide(incumbent_);
  rec.induced_decision = policy_.decide(report);

  const std::vector<double> h_prev = hyperplane(incumbent_.span());
  const std::vector<double> h_new = hyperplane(report.span());
  rec.expected_payment = dot(h_prev, entrant.beliefs.span());
  rec.inherent_incumbent = dot(entrant.bias.row(rec.incumbent_decision), entrant.beliefs.span());

  const bool paid_entry = owner_ != "house";
  const double recv = dot(h_new, entrant.beliefs.span());
  double paid = 0.0;
  if (paid_entry) {
    switch (scheme_) {
      case SubsidyScheme::none: {
        ledger_.push_back({rec.step, entrant.id, owner_, h_prev, "net-score"});
        paid = rec.expected_payment;
        break;
      }
      case SubsidyScheme::full_net_utility: {
        ledger_.push_back({rec.step, entrant.id, owner_, h_prev, "net-score"});
        ledger_.push_back({rec.step, "house", entrant.id, h_prev, "reimbursement"});
        paid = 0.0;
        break;
      }
      case SubsidyScheme::inherent_only: {
        std::vector<double> comp_part = h_prev;
        std::vector<double> inherent_part(comp_part.size());
        for (Index i = 0; i < comp_part.size(); ++i) {
          inherent_part[i] = owner_bias_.value(rec.incumbent_decision, i);
          comp_part[i] -= inherent_part[i];
        }
        ledger_.push_back({rec.step, entrant.id, owner_, std::move(comp_part), "compensation-part"});
        ledger_.push_back({rec.step, "house", owner_, std::move(inherent_part), "inherent-subsidy"});
        paid = rec.expected_payment -
               dot(owner_bias_.row(rec.incumbent_decision), entrant.beliefs.span());
        break;
      }
    }
  }
  rec.expected_net_gain = recv - paid;
  rec.participation_violation = rec.expected_net_gain + 1e-12 < rec.inherent_incumbent;

  incumbent_ = std::move(report);
  owner_ = entrant.id;
  owner_bias_ = entrant.bias;
  steps_.push_back(rec);
  return rec;
}

void MarketState::settle() {
  if (settled_) throw std::logic_error("settle: market already settled");
  settled_ = true;
  if (owner_ == "house") return;  // nobody traded
  const Index taken = policy_.decide(incumbent_);
  std::vector<double> comp = hyperplane(incumbent_.span());
  for (Index i = 0; i < comp.size(); ++i) comp[i] -= owner_bias_.value(taken, i);
  ledger_.push_back({0, "house", owner_, std::move(comp), "settlement"});
}

MarketRun run_market(const std::vector<ExpertAgent>& experts, const Distribution& initial,
                     CostPtr cost, const DecisionPolicy& policy, SubsidyScheme scheme,
                     Index realized_outcome, int grid_resolution) {
  if (realized_outcome >= initial.size())
    throw std::invalid_argument("run_market: realized outcome out of range");
  MarketState state(std::move(cost), policy, initial, scheme, grid_resolution);
  for (const auto& expert : experts) state.msr_step(expert);
  state.settle();

  MarketRun run;
  run.steps = state.steps();
  run.ledger = state.ledger();
  run.summary.final_forecast = state.incumbent().probs();
  run.summary.final_owner = state.incumbent_owner();
  run.summary.final_decision = policy.decide(state.incumbent());
  run.summary.realized_outcome = realized_outcome;

  // Realized balances from the ledger. The conservation residual sums the
  // whole +/- flow multiset with a Shewchuk expansion: the true sum is exactly
  // zero (every credit has a matching debit), so the rounded result is 0.0
  // bit-for-bit whenever the ledger is internally consistent.
  double house = 0.0;
  std::vector<double> cash(experts.size(), 0.0);
  ExactSum residual;
  auto slot = [&](const std::string& id) -> double* {
    if (id == "house") return &house;
    for (std::size_t i = 0; i < experts.size(); ++i)
      if (experts[i].id == id) return &cash[i];
    throw std::logic_error("run_market: ledger names unknown party " + id);
  };
  for (const auto& row : run.ledger) {
    const double a = row.amounts[realized_outcome];
    *slot(row.payer) -= a;
    *slot(row.payee) += a;
    residual.add(-a);
    residual.add(a);
  }
  run.summary.house_outlay = -house;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    ExpertOutcome out;
    out.id = experts[i].id;
    out.cash = cash[i];
    out.inherent = experts[i].bias.value(run.summary.final_decision, realized_outcome);
    out.net = out.cash + out.inherent;
    run.summary.experts.push_back(std::move(out));
  }
  run.summary.conservation_residual = residual.value();
  for (const auto& step : run.steps)
    if (step.participation_violation) ++run.summary.participation_violations;
  return run;
}

std::vector<ExpertAgent> order_by_bias(std::vector<ExpertAgent> experts) {
  auto strength = [](const ExpertAgent& e) {
    // Best row utility against the uniform distribution.
    double best = -std::numeric_limits<double>::infinity();
    for (Index d = 0; d < e.bias.decisions(); ++d) {
      double mean = 0.0;
      for (Index i = 0; i < e.bias.outcomes(); ++i) mean += e.bias.value(d, i);
      best = std::max(best, mean / static_cast<double>(e.bias.outcomes()));
    }
    return best;
  };
  std::stable_sort(experts.begin(), experts.end(),
                   [&](const ExpertAgent& a, const ExpertAgent& b) { return strength(a) > strength(b); });
  return experts;
}

}  // namespace descore
