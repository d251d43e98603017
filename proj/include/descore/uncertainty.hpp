#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "descore/compensation.hpp"
#include "descore/scoring.hpp"
#include "descore/simplex.hpp"

namespace descore {

inline constexpr double kIncentiveTol = 1e-6;

/// Entrywise interval constraint on the expert's bias: lower <= b <= upper.
class UncertaintyBox {
 public:
  UncertaintyBox(UtilityMatrix lower, UtilityMatrix upper);

  const UtilityMatrix& lower() const { return lower_; }
  const UtilityMatrix& upper() const { return upper_; }
  /// Largest interval width across entries.
  double delta() const;
  bool contains(const ExpertBias& b, double tol = 0.0) const;
  std::size_t decisions() const { return lower_.decisions(); }
  std::size_t outcomes() const { return lower_.outcomes(); }

 private:
  UtilityMatrix lower_, upper_;
};

/// Entrywise mix lambda*lower + (1-lambda)*upper; lambda in [0, 1].
ExpertBias uniform_estimate(const UncertaintyBox& box, double lambda);

/// Either an explicit estimate inside the box, or the uniform mix at a
/// given lambda.
using EstimatePolicy = std::variant<ExpertBias, double>;

/// One incentive experiment: a decision problem, the expert's true bias,
/// what the decision maker knows about it, and the compensation cost.
struct Scenario {
  UtilityMatrix dm;
  ExpertBias true_bias;
  UncertaintyBox box;
  CostPtr cost;
  EstimatePolicy estimate;
  int grid_k2 = 1000;  // sweep resolution for two outcomes
  int grid_k3 = 120;   // sweep resolution for three or more outcomes
  double incentive_tol = kIncentiveTol;
  std::string name;

  Scenario(UtilityMatrix dm, ExpertBias true_bias, UncertaintyBox box, CostPtr cost,
           EstimatePolicy estimate);

  bool uniform_rule() const { return std::holds_alternative<double>(estimate); }
  double lambda() const { return std::get<double>(estimate); }
  ExpertBias resolved_estimate() const;
  int default_resolution() const { return dm.outcomes() == 2 ? grid_k2 : grid_k3; }
  DecisionPolicy policy() const { return make_policy(dm); }
  /// Incentive ceiling from the estimate error: 2*delta for an arbitrary
  /// in-box estimate, delta for the uniform mix.
  double gain_bound() const;
};

struct BestResponseResult {
  std::vector<double> report;
  Index report_index = 0;
  double net_gain = 0.0;   // vs. reporting the (snapped) truth
  double deviation = 0.0;  // L2 distance from the snapped truth
  Index truthful_decision = 0;
  Index induced_decision = 0;
  double dm_loss = 0.0;    // decision maker's expected-utility loss under the truth
};

/// Exhaustive best-response search over a grid, with scores precomputed per
/// grid report.  Built before any bound checker so the checkers can only
/// ever see what the oracle sees.
class BestResponseSweep {
 public:
  BestResponseSweep(const Scenario& scenario, SimplexGrid grid);

  const SimplexGrid& grid() const { return grid_; }
  const Scenario& scenario() const { return *scenario_; }

  /// Highest-scoring grid report against the true belief; ties prefer the
  /// smallest deviation from the truth, then the lowest lexicographic report.
  BestResponseResult best_response(const Distribution& p_true) const;
  /// Same, with the truth given as a grid point.
  BestResponseResult best_response_at(Index truth_index) const;

  /// Expected net score of a grid report under belief p.
  double report_value(Index report_index, std::span<const double> p) const;
  Index report_decision(Index report_index) const { return decision_[report_index]; }

  struct PointResult {
    Index report = 0;
    double net_gain = 0.0, deviation = 0.0, dm_loss = 0.0;
  };
  /// Best response for every grid point as the truth (computed once, cached).
  const std::vector<PointResult>& all_results() const;

 private:
  std::shared_ptr<const Scenario> scenario_;
  SimplexGrid grid_;
  std::vector<double> value_rows_;  // per report: hyperplane + estimate-error row of its decision
  std::vector<Index> decision_;
  DecisionPolicy policy_;
  mutable std::vector<PointResult> cache_;  // lazily filled by all_results()
};

BestResponseResult best_response(const Scenario& scenario, const Distribution& p_true,
                                 const SimplexGrid& grid);

struct SweepCheck {
  bool ok = false;
  std::string status;            // "pass", "violation", or "inapplicable"
  double bound = 0.0;
  double observed = 0.0;         // worst value over the sweep
  std::vector<double> witness;   // true belief attaining the worst value
  BestResponseResult witness_response;
};

/// Sweeps every grid point as the true belief and bounds the best-response
/// net gain by the estimate-error ceiling (2*delta or delta) plus tolerance.
SweepCheck incentive_bound_check(const BestResponseSweep& sweep);

enum class ConvexityForm {
  robust,           // linear growth: Bregman gap >= m * distance
  strongly_convex,  // quadratic growth: Hessian >= m * I
};

/// Bounds the best-response deviation: 2*delta/m (robust) or sqrt(4*delta/m)
/// (strongly convex); the uniform rule halves delta.  One grid step of slack.
/// Robust form requires the sweep-measured robustness factor to reach
/// m_factor, otherwise the check is inapplicable.
SweepCheck deviation_bound_check(const BestResponseSweep& sweep, double m_factor,
                                 ConvexityForm form);

/// Decision maker's expected-utility loss when acting on `report` instead of
/// the truthful decision, both evaluated under p_true.
double dm_loss(const Scenario& scenario, const Distribution& p_true, const Distribution& report);

/// Largest per-outcome utility swing between any ordered decision pair:
/// max over decisions i, j and outcomes k of u(i, k) - u(j, k).
double max_pair_gradient(const UtilityMatrix& u);

/// Bounds the decision maker's loss by gradient * sqrt(outcomes) * deviation
/// bound, and sweeps for the worst observed loss.
SweepCheck global_loss_bound(const BestResponseSweep& sweep, double m_factor, ConvexityForm form);

struct LocalLossReport {
  bool ok = false;
  std::string status;  // "pass", "violation", or "inapplicable"
  std::string reason;
  double sigma = 0.0;
  double slack = 0.0;
  double worst_loss = 0.0;
  std::vector<double> witness;
  BestResponseResult witness_response;
  /// True beliefs farther than eps from every boundary whose best response
  /// still crossed a boundary (the local argument says there are none).
  std::size_t far_crossings = 0;
};

struct BoundaryRequirement;  // design module

/// Verifies the boundary-local loss guarantee: with a cost that is locally
/// robust around each decision boundary per `requirements`, every best
/// response loses the decision maker at most sigma (plus grid slack).
/// Preconditions (disjoint neighborhoods, local robustness) are re-checked;
/// if they fail the verdict is "inapplicable" unless the sweep also finds a
/// loss above sigma, which is reported as a violation.
LocalLossReport local_loss_bound_check(const BestResponseSweep& sweep, double sigma,
                                       const std::vector<BoundaryRequirement>& requirements);

}  // namespace descore
