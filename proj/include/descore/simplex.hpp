#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace descore {

using Index = std::size_t;

inline constexpr double kDistributionTol = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double l2_distance(std::span<const double> a, std::span<const double> b);

/// A point on the probability simplex: nonnegative entries summing to one
/// within kDistributionTol.  At least two outcomes; a single-outcome space
/// has no forecasting content and is rejected.
class Distribution {
 public:
  explicit Distribution(std::vector<double> probs);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  const std::vector<double>& probs() const { return p_; }
  std::span<const double> span() const { return {p_.data(), p_.size()}; }

  static Distribution uniform(std::size_t m);

 private:
  std::vector<double> p_;
};

/// Row-per-decision utility table.  Rows carry labels so reports can point
/// at decisions by name; values are addressed as value(decision, outcome).
class UtilityMatrix {
 public:
  UtilityMatrix(std::vector<std::string> labels, std::vector<std::vector<double>> rows);
  static UtilityMatrix unlabeled(std::vector<std::vector<double>> rows);

  std::size_t decisions() const { return n_; }
  std::size_t outcomes() const { return m_; }
  double value(Index decision, Index outcome) const { return values_[decision * m_ + outcome]; }
  std::span<const double> row(Index decision) const { return {values_.data() + decision * m_, m_}; }
  const std::string& label(Index decision) const { return labels_[decision]; }
  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const UtilityMatrix& other) const = default;

 private:
  std::size_t n_ = 0, m_ = 0;
  std::vector<std::string> labels_;
  std::vector<double> values_;  // row-major
};

/// Expert utility over (decision taken, realized outcome); same shape as the
/// decision maker's table.
using ExpertBias = UtilityMatrix;

double expected_utility(const UtilityMatrix& u, Index decision, const Distribution& p);

/// Deterministic argmax-of-expected-utility policy.  Ties are broken by a
/// fixed total order over decisions (default: lowest index wins), so every
/// forecast maps to exactly one decision and regions are well defined.
class DecisionPolicy {
 public:
  DecisionPolicy(UtilityMatrix u, std::vector<Index> tie_order);

  /// Argmax over decisions of u_i . w.  `w` may be unnormalized (e.g. grid
  /// counts); the argmax is invariant under positive scaling, and integer
  /// weights against integer utilities compare exactly.
  Index decide_weights(std::span<const double> w) const;
  Index decide(const Distribution& p) const { return decide_weights(p.span()); }

  const UtilityMatrix& utility() const { return u_; }
  const std::vector<Index>& tie_order() const { return tie_order_; }

 private:
  UtilityMatrix u_;
  std::vector<Index> tie_order_;
};

DecisionPolicy make_policy(UtilityMatrix u, std::vector<Index> tie_order = {});

/// All forecasts with denominator k: integer compositions of k into one part
/// per outcome, enumerated in lexicographic order of the count vectors.
/// Size is C(k+m-1, m-1); grid points are exact rationals c/k.
class SimplexGrid {
 public:
  SimplexGrid(std::size_t outcomes, int resolution);

  std::size_t outcomes() const { return m_; }
  int resolution() const { return k_; }
  std::size_t size() const { return counts_.size() / m_; }
  std::span<const int> counts(Index i) const { return {counts_.data() + i * m_, m_}; }
  /// Probability vector of grid point i (counts / k).
  void point(Index i, std::span<double> out) const;
  std::vector<double> point(Index i) const;
  Distribution distribution(Index i) const;

  /// Index of an exact count vector; throws if it does not sum to k.
  Index index_of(std::span<const int> counts) const;
  /// Nearest grid point to an arbitrary distribution (largest-remainder
  /// rounding of k*p; deterministic).
  Index snap(std::span<const double> p) const;

  /// L2 length of one elementary move (transfer one unit of mass): sqrt(2)/k.
  double step_l2() const;

  /// Neighbors reachable by moving one unit from coordinate a to b, a < b,
  /// as (this_index, neighbor_index) pairs; each lattice edge appears once.
  void for_each_edge(const std::function<void(Index, Index)>& fn) const;

 private:
  std::size_t m_;
  int k_;
  std::vector<int> counts_;  // size * m_, lexicographic
  Index rank(std::span<const int> counts) const;
};

struct BoundaryInfo {
  Index lo = 0, hi = 0;                          // decision pair, lo < hi
  std::vector<std::vector<double>> midpoints;    // grid-edge midpoints where the flip occurs
  std::optional<double> exact_t;                 // m == 2 only: exact first coordinate of the tie point
};

/// Partition of a grid into decision regions plus the observed boundaries.
struct RegionMap {
  SimplexGrid grid;
  std::vector<Index> assignment;          // policy decision per grid point
  std::vector<bool> region_nonempty;      // per decision
  std::vector<BoundaryInfo> boundaries;   // sorted by (lo, hi)

  const BoundaryInfo* boundary(Index lo, Index hi) const;
};

RegionMap decision_regions(const DecisionPolicy& policy, SimplexGrid grid);

/// Exact decision-boundary locations for two-outcome problems: for each
/// decision pair whose expected utilities cross inside (0, 1), the first
/// coordinate t of the tie point.  Pairs that tie everywhere are skipped.
std::vector<std::pair<std::pair<Index, Index>, double>> exact_boundaries_1d(const UtilityMatrix& u);

/// Drops decisions whose region is empty on the given grid; label order of
/// the survivors is preserved.
UtilityMatrix prune_decisions(const UtilityMatrix& u, const SimplexGrid& grid,
                              std::vector<Index> tie_order = {});

/// Smoothed policy: decision probabilities proportional to
/// exp(lambda * expected utility), with max subtraction for overflow safety.
std::vector<double> softmax_policy(const UtilityMatrix& u, double lambda, const Distribution& p);

}  // namespace descore
