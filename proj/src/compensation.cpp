#include "descore/compensation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace descore {

ExpertOptimum expert_optimal_utility(const ExpertBias& b, std::span<const double> p) {
  if (p.size() != b.outcomes()) throw std::invalid_argument("expert_optimal_utility: arity mismatch");
  ExpertOptimum best{dot(b.row(0), p), 0};
  for (Index i = 1; i < b.decisions(); ++i) {
    const double v = dot(b.row(i), p);
    if (v > best.value) best = {v, i};
  }
  return best;
}

double inherent_utility(const ExpertBias& b, const DecisionPolicy& policy, const Distribution& report,
                        const Distribution& p) {
  if (b.decisions() != policy.utility().decisions() || b.outcomes() != policy.utility().outcomes())
    throw std::invalid_argument("inherent_utility: bias shape does not match the decision set");
  return dot(b.row(policy.decide(report)), p.span());
}

CompensationRule CompensationRule::gap_rule(ExpertBias bias, DecisionPolicy policy) {
  if (bias.decisions() != policy.utility().decisions() || bias.outcomes() != policy.utility().outcomes())
    throw std::invalid_argument("gap_rule: bias shape does not match the decision set");
  CompensationRule r(std::move(policy));
  r.gap_bias_ = std::move(bias);
  return r;
}

CompensationRule CompensationRule::from_cost(CostPtr cost, ExpertBias estimate, DecisionPolicy policy) {
  if (!cost) throw std::invalid_argument("rule_from_cost: null cost");
  if (estimate.decisions() != policy.utility().decisions() ||
      estimate.outcomes() != policy.utility().outcomes())
    throw std::invalid_argument("rule_from_cost: estimate shape does not match the decision set");
  CompensationRule r(std::move(policy));
  r.cost_ = std::move(cost);
  r.estimate_ = std::move(estimate);
  return r;
}

double CompensationRule::pay(std::span<const double> report, Index outcome) const {
  if (outcome >= outcomes()) throw std::out_of_range("CompensationRule: outcome out of range");
  const Index taken = policy_.decide_weights(report);
  if (gap_bias_) {
    const auto opt = expert_optimal_utility(*gap_bias_, report);
    return gap_bias_->value(opt.decision, outcome) - gap_bias_->value(taken, outcome);
  }
  return score_from_cost(*cost_, report, outcome) - estimate_->value(taken, outcome);
}

double CompensationRule::expected_pay(const Distribution& p) const {
  double acc = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) acc += p[i] * pay(p.span(), i);
  return acc;
}

CompensationRule gap_rule(ExpertBias bias, DecisionPolicy policy) {
  return CompensationRule::gap_rule(std::move(bias), std::move(policy));
}

CompensationRule rule_from_cost(CostPtr cost, ExpertBias estimate, DecisionPolicy policy) {
  return CompensationRule::from_cost(std::move(cost), std::move(estimate), std::move(policy));
}

ScoringRule net_score(const CompensationRule& rule, const ExpertBias& true_bias) {
  if (true_bias.decisions() != rule.policy().utility().decisions() ||
      true_bias.outcomes() != rule.policy().utility().outcomes())
    throw std::invalid_argument("net_score: bias shape does not match the decision set");
  // Copy the rule and bias into the closure so the schedule owns its state.
  auto r = std::make_shared<CompensationRule>(rule);
  auto b = std::make_shared<ExpertBias>(true_bias);
  return ScoringRule("net(" + (rule.cost() ? rule.cost()->name() : std::string("gap")) + ")",
                     rule.outcomes(), [r, b](std::span<const double> p, Index i) {
                       const Index taken = r->policy().decide_weights(p);
                       return r->pay(p, i) + b->value(taken, i);
                     });
}

ProprietyVerdict check_proper_compensation(const CompensationRule& rule, const ExpertBias& true_bias,
                                           const SimplexGrid& grid, bool strict, double tol) {
  return check_proper(net_score(rule, true_bias), grid, strict, tol);
}

namespace {

ParticipationVerdict participation_sweep(const CompensationRule& rule, const ExpertBias& true_bias,
                                         const SimplexGrid& grid, bool strong, double tol) {
  ParticipationVerdict v;
  v.worst = std::numeric_limits<double>::infinity();
  v.max_expected_pay = -std::numeric_limits<double>::infinity();
  double sum_pay = 0.0;
  const std::size_t n = grid.size();
  for (Index i = 0; i < n; ++i) {
    const auto p = grid.distribution(i);
    const double comp = rule.expected_pay(p);
    sum_pay += comp;
    v.max_expected_pay = std::max(v.max_expected_pay, comp);
    double margin, value;
    if (strong) {
      const Index taken = rule.policy().decide(p);
      const double self = comp + dot(true_bias.row(taken), p.span());
      const double opt = expert_optimal_utility(true_bias, p.span()).value;
      margin = self - opt;
      value = self;
    } else {
      margin = comp;
      value = comp;
    }
    if (margin < v.worst) {
      v.worst = margin;
      v.witness = p.probs();
      v.worst_value = value;
    }
  }
  v.mean_expected_pay = sum_pay / static_cast<double>(n);
  v.ok = v.worst >= -tol;
  v.advisory = !check_proper_compensation(rule, true_bias, grid, false, tol).proper;
  return v;
}

}  // namespace

ParticipationVerdict check_weak_participation(const CompensationRule& rule,
                                              const ExpertBias& true_bias, const SimplexGrid& grid,
                                              double tol) {
  return participation_sweep(rule, true_bias, grid, false, tol);
}

ParticipationVerdict check_strong_participation(const CompensationRule& rule,
                                                const ExpertBias& true_bias, const SimplexGrid& grid,
                                                double tol) {
  return participation_sweep(rule, true_bias, grid, true, tol);
}

double utility_gap(const ExpertBias& b) {
  double gap = 0.0;
  for (Index i = 0; i < b.outcomes(); ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Index j = 0; j < b.decisions(); ++j) {
      lo = std::min(lo, b.value(j, i));
      hi = std::max(hi, b.value(j, i));
    }
    gap = std::max(gap, hi - lo);
  }
  return gap;
}

double ex_post_settlement(const Cost& cost, const ExpertBias& estimate, const Distribution& report,
                          Index taken, Index realized) {
  if (taken >= estimate.decisions()) throw std::out_of_range("ex_post_settlement: unknown decision");
  if (realized >= estimate.outcomes()) throw std::out_of_range("ex_post_settlement: unknown outcome");
  return score_from_cost(cost, report.span(), realized) - estimate.value(taken, realized);
}

}  // namespace descore
