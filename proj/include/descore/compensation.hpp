#pragma once

#include <optional>
#include <span>
#include <vector>

#include "descore/scoring.hpp"
#include "descore/simplex.hpp"

namespace descore {

struct ExpertOptimum {
  double value = 0.0;  // max over decisions of bias row . p
  Index decision = 0;  // lowest maximizing index
};

/// Best utility the expert could get if she picked the decision herself.
ExpertOptimum expert_optimal_utility(const ExpertBias& b, std::span<const double> p);

/// Expected utility the expert derives from the decision her report induces:
/// bias row of policy(report), in expectation under p.
double inherent_utility(const ExpertBias& b, const DecisionPolicy& policy, const Distribution& report,
                        const Distribution& p);

/// Per-outcome transfer schedule paid to the expert on top of the utility
/// she already derives from the induced decision.
class CompensationRule {
 public:
  /// Gap rule: pay the difference between the expert-optimal decision's
  /// utility and the induced decision's utility, per outcome.
  static CompensationRule gap_rule(ExpertBias bias, DecisionPolicy policy);
  /// Cost-based rule: subtangent-hyperplane score of `cost` minus the
  /// estimated bias entry for the induced decision.
  static CompensationRule from_cost(CostPtr cost, ExpertBias estimate, DecisionPolicy policy);

  double pay(std::span<const double> report, Index outcome) const;
  double pay(const Distribution& report, Index outcome) const { return pay(report.span(), outcome); }
  /// Expected compensation when the report matches the truth: C(p, p).
  double expected_pay(const Distribution& p) const;

  const DecisionPolicy& policy() const { return policy_; }
  const CostPtr& cost() const { return cost_; }                    // null for the gap rule
  const std::optional<ExpertBias>& estimate() const { return estimate_; }
  const std::optional<ExpertBias>& gap_bias() const { return gap_bias_; }
  std::size_t outcomes() const { return policy_.utility().outcomes(); }

 private:
  CompensationRule(DecisionPolicy policy) : policy_(std::move(policy)) {}
  DecisionPolicy policy_;
  std::optional<ExpertBias> gap_bias_;  // gap rule
  CostPtr cost_;                        // cost-based rule
  std::optional<ExpertBias> estimate_;
};

CompensationRule gap_rule(ExpertBias bias, DecisionPolicy policy);
CompensationRule rule_from_cost(CostPtr cost, ExpertBias estimate, DecisionPolicy policy);

/// Net score the expert actually maximizes: compensation plus the inherent
/// utility of the induced decision under her true bias.
ScoringRule net_score(const CompensationRule& rule, const ExpertBias& true_bias);

/// Propriety of the net score (compensation + true inherent utility) over
/// all grid pairs.
ProprietyVerdict check_proper_compensation(const CompensationRule& rule, const ExpertBias& true_bias,
                                           const SimplexGrid& grid, bool strict,
                                           double tol = kProprietyTol);

struct ParticipationVerdict {
  bool ok = false;
  bool advisory = false;   // set when the rule failed the propriety sweep, so
                           // the participation reading is informational only
  double worst = 0.0;      // min over grid of the checked margin
  std::vector<double> witness;  // belief attaining the worst margin
  double worst_value = 0.0;     // value of the checked quantity at the witness
  double max_expected_pay = 0.0;
  double mean_expected_pay = 0.0;
};

/// Weak participation: expected compensation C(p, p) >= 0 at every grid p.
ParticipationVerdict check_weak_participation(const CompensationRule& rule,
                                              const ExpertBias& true_bias, const SimplexGrid& grid,
                                              double tol = kProprietyTol);

/// Strong participation: truthful net score covers the expert-optimal
/// utility, S(p, p) >= max_i bias_i . p, at every grid p.
ParticipationVerdict check_strong_participation(const CompensationRule& rule,
                                                const ExpertBias& true_bias, const SimplexGrid& grid,
                                                double tol = kProprietyTol);

/// Worst per-outcome spread of the bias across decisions:
/// max over outcomes of (max_j b(j, i) - min_j b(j, i)).
double utility_gap(const ExpertBias& b);

/// Cash settlement once the outcome is realized: score of the recorded
/// report minus the estimated bias entry for the decision actually taken.
double ex_post_settlement(const Cost& cost, const ExpertBias& estimate, const Distribution& report,
                          Index taken, Index realized);

}  // namespace descore
