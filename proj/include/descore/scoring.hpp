#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "descore/simplex.hpp"

namespace descore {

inline constexpr double kProprietyTol = 1e-9;
inline constexpr double kLogClamp = 1e-12;

/// Convex cost function over the simplex together with a chosen subgradient
/// selector.  value/subgradient must satisfy
///   value(q) >= value(p) + subgradient(p) . (q - p)
/// for all p, q on the simplex; the induced payoff for reporting p when
/// outcome i occurs is value(p) - subgradient(p).p + subgradient(p)_i.
class Cost {
 public:
  virtual ~Cost() = default;
  virtual double value(std::span<const double> p) const = 0;
  virtual void subgradient(std::span<const double> p, std::span<double> out) const = 0;
  virtual std::string name() const = 0;
  /// Lower bound m with Hessian >= m*I on the simplex interior, when known.
  virtual std::optional<double> curvature_factor() const { return std::nullopt; }
  virtual nlohmann::json spec() const = 0;

  std::vector<double> subgradient(std::span<const double> p) const;
};

using CostPtr = std::shared_ptr<const Cost>;

CostPtr quadratic_cost();
CostPtr log_cost();
CostPtr linear_cost(std::vector<double> weights);
CostPtr shifted_cost(CostPtr base, double offset);
CostPtr scaled_cost(CostPtr base, double factor);
CostPtr sum_cost(std::vector<CostPtr> terms);
/// Max over affine pieces a_h . p; at ties the lowest-index piece supplies
/// the subgradient.
CostPtr pwlc_cost(std::vector<std::vector<double>> planes);

/// Payoff schedule (report, realized outcome) -> score.
class ScoringRule {
 public:
  using Fn = std::function<double(std::span<const double>, Index)>;
  ScoringRule(std::string name, std::size_t outcomes, Fn fn);

  double score(std::span<const double> report, Index outcome) const;
  double score(const Distribution& report, Index outcome) const { return score(report.span(), outcome); }
  std::size_t outcomes() const { return m_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::size_t m_;
  Fn fn_;
};

/// Subtangent-hyperplane score of a cost function:
///   S(p, x_i) = G(p) - G*(p).p + G*(p)_i.
double score_from_cost(const Cost& g, std::span<const double> p, Index outcome);
ScoringRule rule_from(CostPtr g, std::size_t outcomes);

/// Expected payoff of reporting r when outcomes follow p.
double expected_score(const ScoringRule& s, const Distribution& r, const Distribution& p);

struct ProprietyWitness {
  std::vector<double> belief;  // p
  std::vector<double> report;  // r
  double gap = 0.0;            // S(p,p) - S(r,p); negative means a violation
};

struct ProprietyVerdict {
  bool ok = false;       // proper (and strictly so, if requested)
  bool proper = false;   // S(p,p) >= S(r,p) - tol for all grid pairs
  bool strict = false;   // additionally S(p,p) > S(r,p) for all r != p
  double min_gap = 0.0;  // min over r != p of S(p,p) - S(r,p)
  double min_gap_two_steps = 0.0;  // same, restricted to pairs >= 2 grid steps apart
  std::optional<ProprietyWitness> witness;  // binding violation, if any
};

/// Exhaustive sweep over all ordered grid pairs (belief, report).
ProprietyVerdict check_proper(const ScoringRule& s, const SimplexGrid& grid, bool strict,
                              double tol = kProprietyTol);

/// Convexity witness for a cost/subgradient pair over all grid pairs.
struct ConvexityVerdict {
  bool ok = false;
  double worst = 0.0;  // min over pairs of G(q) - G(p) - G*(p).(q-p)
  std::vector<double> worst_p, worst_q;
};
ConvexityVerdict check_convexity(const Cost& g, const SimplexGrid& grid, double tol = kProprietyTol);

using RegionPredicate = std::function<bool(std::span<const double>)>;

/// Largest m such that G(q) >= G(p) + G*(p).(q-p) + m*|q-p|_2 over all
/// sampled p in the region and q on the grid, i.e. the sweep minimum of the
/// Bregman gap divided by the L2 distance (clamped at zero).
double robustness_factor(const Cost& g, const RegionPredicate& region, const SimplexGrid& grid);

struct LocalRobustnessVerdict {
  bool ok = false;
  double measured_factor = 0.0;  // min ratio over the ball
  double worst_margin = 0.0;     // min of gap - m_target*dist over the ball
  std::vector<double> worst_q;
};

/// Checks G(q) >= G(p) + G*(p).(q-p) + m_target*|q-p|_2 for every grid q
/// within eps of p (p itself need not be a grid point).
LocalRobustnessVerdict local_robustness_check(const Cost& g, const Distribution& p, double eps,
                                              double m_target, const SimplexGrid& grid,
                                              double tol = kProprietyTol);

}  // namespace descore
