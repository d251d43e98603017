#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "descore/compensation.hpp"
#include "descore/scoring.hpp"
#include "descore/simplex.hpp"
#include "descore/uncertainty.hpp"

namespace descore {

inline constexpr double kDefaultAmbientCurvature = 1e-3;

enum class RuleKind { consistent, uniform };

/// Robustness requirement around one decision boundary (two outcomes: the
/// boundary is the single tie point at first coordinate tau).
struct BoundaryRequirement {
  Index lo = 0, hi = 0;       // decision pair
  double tau = 0.0;           // tie point, first-coordinate parameter
  double pair_gradient = 0.0; // max per-outcome utility swing between the pair
  double m_factor = 0.0;      // required local robustness factor (L2 units)
  double eps_l2 = 0.0;        // neighborhood radius (L2 units)
  double eps_param = 0.0;     // same radius in first-coordinate units
};

struct CurvatureProfile {
  std::vector<BoundaryRequirement> boundaries;  // sorted by tau
  double eta = kDefaultAmbientCurvature;        // ambient curvature (per unit
                                                // squared first coordinate)
  RuleKind kind = RuleKind::consistent;
  double sigma = 0.0;
  double delta = 0.0;
};

struct InfeasibleSigma : std::runtime_error {
  InfeasibleSigma(std::string msg, double feasible)
      : std::runtime_error(std::move(msg)), feasible_sigma(feasible) {}
  double feasible_sigma;  // largest sigma with disjoint neighborhoods
};

/// Per-boundary robustness factors and radii that make every profitable
/// misreport cost the decision maker at most sigma:
///   m = gradient * sqrt(outcomes) * 2*delta / sigma,
///   eps = sigma / (gradient * sqrt(outcomes)),
/// both halved for the uniform rule.  Throws InfeasibleSigma when the
/// neighborhoods would overlap or swallow another boundary (which happens
/// once sigma exceeds the reported feasibility threshold).
CurvatureProfile required_profile(const UtilityMatrix& dm, const UncertaintyBox& box, double sigma,
                                  RuleKind kind, double eta = kDefaultAmbientCurvature);

/// Convex piecewise-quadratic function of the first coordinate, stored as a
/// knot sequence plus per-piece coefficients (a, b, q) with
///   g(t) = a + b*(t - knot) + q*(t - knot)^2.
/// Value is continuous; upward slope jumps at knots are allowed and the
/// subgradient at a knot is the mean of the one-sided slopes, so a kink of
/// jump J certifies linear growth J/2 on both sides.
class PiecewiseQuadraticCost final : public Cost {
 public:
  PiecewiseQuadraticCost(std::vector<double> knots, std::vector<std::array<double, 3>> pieces);

  double value(std::span<const double> p) const override;
  void subgradient(std::span<const double> p, std::span<double> out) const override;
  std::string name() const override { return "designed"; }
  std::optional<double> curvature_factor() const override;
  nlohmann::json spec() const override;

  double value_at(double t) const;
  /// Mean of one-sided slopes at t (equal to the derivative inside a piece).
  double slope_at(double t) const;
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<std::array<double, 3>>& pieces() const { return pieces_; }

 private:
  std::vector<double> knots_;                    // ascending, first 0, last 1
  std::vector<std::array<double, 3>> pieces_;    // one per knot interval
  std::size_t piece_index(double t) const;
  double left_slope(std::size_t knot) const;
  double right_slope(std::size_t knot) const;
};

enum class BaseKind {
  strong,  // start from the expert-optimal utility envelope (strong participation)
  weak,    // start from a supporting line of that envelope at the uniform belief
};

struct DesignedCost {
  std::shared_ptr<const PiecewiseQuadraticCost> cost;
  CurvatureProfile profile;
  BaseKind base = BaseKind::strong;
};

/// Builds the compensation cost for a two-outcome problem: the base envelope
/// plus a convex add-on h with
///   - curvature matching the profile inside each boundary neighborhood and
///     eta elsewhere (integrated twice from h(0) = h'(0) = 0), and
///   - a slope kink at each boundary sized so the mean-slope subgradient
///     certifies the required factor at every radius.
DesignedCost construct_cost(const CurvatureProfile& profile, BaseKind base, const ExpertBias& bias);

struct CompensationStats {
  double max = 0.0;
  double mean = 0.0;
};

/// Distribution of truthful expected compensation G(p) - inherent utility
/// over the grid.
CompensationStats compensation_stats(const Cost& cost, const ExpertBias& bias,
                                     const DecisionPolicy& policy, const SimplexGrid& grid);

struct DesignCheck {
  std::string scenario;
  LocalLossReport report;
};

struct DesignVerdict {
  bool ok = false;
  std::string status;  // "pass", "violation", or "inapplicable"
  double worst_loss = 0.0;
  double sigma = 0.0;
  std::vector<DesignCheck> checks;
};

/// Replays the loss guarantee against a family of true biases drawn from the
/// box (corners, midpoint, seeded interior points) with adversarial in-box
/// estimates for the consistent rule and mix estimates for the uniform rule.
DesignVerdict verify_design(const DesignedCost& designed, const UtilityMatrix& dm,
                            const UncertaintyBox& box, double sigma, int grid_resolution,
                            unsigned seed = 2023);

}  // namespace descore
