#include "descore/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace descore {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Distribution::Distribution(std::vector<double> probs) : p_(std::move(probs)) {
  if (p_.size() < 2) throw std::invalid_argument("Distribution: need at least two outcomes");
  double sum = 0.0;
  for (std::size_t i = 0; i < p_.size(); ++i) {
    if (!std::isfinite(p_[i]) || p_[i] < -kDistributionTol)
      throw std::invalid_argument("Distribution: entry " + std::to_string(i) + " is negative or non-finite");
    if (p_[i] < 0.0) p_[i] = 0.0;
    sum += p_[i];
  }
  if (std::abs(sum - 1.0) > kDistributionTol)
    throw std::invalid_argument("Distribution: entries sum to " + std::to_string(sum) + ", not 1");
}

Distribution Distribution::uniform(std::size_t m) {
  return Distribution(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

UtilityMatrix::UtilityMatrix(std::vector<std::string> labels, std::vector<std::vector<double>> rows)
    : labels_(std::move(labels)) {
  if (rows.empty()) throw std::invalid_argument("UtilityMatrix: no decisions");
  n_ = rows.size();
  m_ = rows.front().size();
  if (m_ < 2) throw std::invalid_argument("UtilityMatrix: need at least two outcomes");
  if (labels_.size() != n_) throw std::invalid_argument("UtilityMatrix: label count does not match row count");
  values_.reserve(n_ * m_);
  for (std::size_t i = 0; i < n_; ++i) {
    if (rows[i].size() != m_)
      throw std::invalid_argument("UtilityMatrix: row " + std::to_string(i) + " has " +
                                  std::to_string(rows[i].size()) + " entries, expected " + std::to_string(m_));
    for (double v : rows[i]) {
      if (!std::isfinite(v))
        throw std::invalid_argument("UtilityMatrix: row " + std::to_string(i) + " contains a non-finite entry");
      values_.push_back(v);
    }
  }
}

UtilityMatrix UtilityMatrix::unlabeled(std::vector<std::vector<double>> rows) {
  std::vector<std::string> labels;
  labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) labels.push_back("d" + std::to_string(i));
  return UtilityMatrix(std::move(labels), std::move(rows));
}

double expected_utility(const UtilityMatrix& u, Index decision, const Distribution& p) {
  if (decision >= u.decisions()) throw std::out_of_range("expected_utility: decision index out of range");
  if (p.size() != u.outcomes()) throw std::invalid_argument("expected_utility: outcome count mismatch");
  return dot(u.row(decision), p.span());
}

DecisionPolicy::DecisionPolicy(UtilityMatrix u, std::vector<Index> tie_order)
    : u_(std::move(u)), tie_order_(std::move(tie_order)) {
  if (tie_order_.empty()) {
    tie_order_.resize(u_.decisions());
    std::iota(tie_order_.begin(), tie_order_.end(), Index{0});
  }
  if (tie_order_.size() != u_.decisions())
    throw std::invalid_argument("DecisionPolicy: tie order must list every decision exactly once");
  std::vector<bool> seen(u_.decisions(), false);
  for (Index i : tie_order_) {
    if (i >= u_.decisions() || seen[i])
      throw std::invalid_argument("DecisionPolicy: tie order must list every decision exactly once");
    seen[i] = true;
  }
}

Index DecisionPolicy::decide_weights(std::span<const double> w) const {
  if (w.size() != u_.outcomes()) throw std::invalid_argument("decide: weight length mismatch");
  Index best = tie_order_.front();
  double best_v = dot(u_.row(best), w);
  for (std::size_t r = 1; r < tie_order_.size(); ++r) {
    const Index i = tie_order_[r];
    const double v = dot(u_.row(i), w);
    if (v > best_v) {  // strictly better only: earlier tie-order entries keep ties
      best_v = v;
      best = i;
    }
  }
  return best;
}

DecisionPolicy make_policy(UtilityMatrix u, std::vector<Index> tie_order) {
  return DecisionPolicy(std::move(u), std::move(tie_order));
}

namespace {

std::size_t binomial(std::size_t n, std::size_t r) {
  if (r > n) return 0;
  r = std::min(r, n - r);
  std::size_t acc = 1;
  for (std::size_t i = 1; i <= r; ++i) acc = acc * (n - r + i) / i;
  return acc;
}

void enumerate_compositions(int k, std::size_t m, std::vector<int>& prefix, std::vector<int>& out) {
  if (prefix.size() + 1 == m) {
    out.insert(out.end(), prefix.begin(), prefix.end());
    out.push_back(k);
    return;
  }
  for (int c = 0; c <= k; ++c) {
    prefix.push_back(c);
    enumerate_compositions(k - c, m, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

SimplexGrid::SimplexGrid(std::size_t outcomes, int resolution) : m_(outcomes), k_(resolution) {
  if (m_ < 2) throw std::invalid_argument("SimplexGrid: need at least two outcomes");
  if (k_ < 1) throw std::invalid_argument("SimplexGrid: resolution must be positive");
  counts_.reserve(binomial(static_cast<std::size_t>(k_) + m_ - 1, m_ - 1) * m_);
  std::vector<int> prefix;
  enumerate_compositions(k_, m_, prefix, counts_);
}

void SimplexGrid::point(Index i, std::span<double> out) const {
  const auto c = counts(i);
  for (std::size_t j = 0; j < m_; ++j) out[j] = static_cast<double>(c[j]) / static_cast<double>(k_);
}

std::vector<double> SimplexGrid::point(Index i) const {
  std::vector<double> p(m_);
  point(i, p);
  return p;
}

Distribution SimplexGrid::distribution(Index i) const { return Distribution(point(i)); }

Index SimplexGrid::rank(std::span<const int> c) const {
  // Lexicographic rank: count compositions that precede c.
  Index r = 0;
  int rem = k_;
  for (std::size_t j = 0; j + 1 < m_; ++j) {
    for (int v = 0; v < c[j]; ++v)
      r += binomial(static_cast<std::size_t>(rem - v) + (m_ - j - 2), m_ - j - 2);
    rem -= c[j];
  }
  return r;
}

Index SimplexGrid::index_of(std::span<const int> c) const {
  if (c.size() != m_) throw std::invalid_argument("index_of: wrong arity");
  int sum = 0;
  for (int v : c) {
    if (v < 0) throw std::invalid_argument("index_of: negative count");
    sum += v;
  }
  if (sum != k_) throw std::invalid_argument("index_of: counts do not sum to the resolution");
  return rank(c);
}

Index SimplexGrid::snap(std::span<const double> p) const {
  if (p.size() != m_) throw std::invalid_argument("snap: wrong arity");
  std::vector<int> c(m_);
  std::vector<std::pair<double, std::size_t>> rema(m_);
  int total = 0;
  for (std::size_t j = 0; j < m_; ++j) {
    const double scaled = p[j] * k_;
    c[j] = static_cast<int>(std::floor(scaled));
    rema[j] = {scaled - std::floor(scaled), j};
    total += c[j];
  }
  // Hand remaining units to the largest remainders (ties: lowest coordinate).
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int u = 0; u < k_ - total; ++u) c[rema[static_cast<std::size_t>(u) % m_].second] += 1;
  return rank(c);
}

double SimplexGrid::step_l2() const { return std::sqrt(2.0) / static_cast<double>(k_); }

void SimplexGrid::for_each_edge(const std::function<void(Index, Index)>& fn) const {
  const std::size_t n = size();
  std::vector<int> nb(m_);
  for (Index i = 0; i < n; ++i) {
    const auto c = counts(i);
    for (std::size_t a = 0; a < m_; ++a) {
      if (c[a] == 0) continue;
      for (std::size_t b = a + 1; b < m_; ++b) {
        std::copy(c.begin(), c.end(), nb.begin());
        nb[a] -= 1;
        nb[b] += 1;
        fn(i, rank(nb));
      }
    }
  }
}

const BoundaryInfo* RegionMap::boundary(Index lo, Index hi) const {
  for (const auto& b : boundaries)
    if (b.lo == lo && b.hi == hi) return &b;
  return nullptr;
}

RegionMap decision_regions(const DecisionPolicy& policy, SimplexGrid grid) {
  if (policy.utility().outcomes() != grid.outcomes())
    throw std::invalid_argument("decision_regions: outcome count mismatch");
  RegionMap map{std::move(grid), {}, {}, {}};
  const std::size_t n = map.grid.size();
  map.assignment.resize(n);
  map.region_nonempty.assign(policy.utility().decisions(), false);
  std::vector<double> w(map.grid.outcomes());
  for (Index i = 0; i < n; ++i) {
    const auto c = map.grid.counts(i);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<double>(c[j]);
    map.assignment[i] = policy.decide_weights(w);
    map.region_nonempty[map.assignment[i]] = true;
  }

  std::vector<BoundaryInfo> found;
  map.grid.for_each_edge([&](Index i, Index j) {
    const Index di = map.assignment[i], dj = map.assignment[j];
    if (di == dj) return;
    const Index lo = std::min(di, dj), hi = std::max(di, dj);
    auto it = std::find_if(found.begin(), found.end(),
                           [&](const BoundaryInfo& b) { return b.lo == lo && b.hi == hi; });
    if (it == found.end()) {
      found.push_back(BoundaryInfo{lo, hi, {}, std::nullopt});
      it = std::prev(found.end());
    }
    const auto pi = map.grid.point(i);
    const auto pj = map.grid.point(j);
    std::vector<double> mid(pi.size());
    for (std::size_t a = 0; a < mid.size(); ++a) mid[a] = 0.5 * (pi[a] + pj[a]);
    it->midpoints.push_back(std::move(mid));
  });
  std::sort(found.begin(), found.end(), [](const BoundaryInfo& a, const BoundaryInfo& b) {
    return std::tie(a.lo, a.hi) < std::tie(b.lo, b.hi);
  });

  if (map.grid.outcomes() == 2) {
    const auto exact = exact_boundaries_1d(policy.utility());
    for (auto& b : found)
      for (const auto& [pair, t] : exact)
        if (pair.first == b.lo && pair.second == b.hi) b.exact_t = t;
  }
  map.boundaries = std::move(found);
  return map;
}

std::vector<std::pair<std::pair<Index, Index>, double>> exact_boundaries_1d(const UtilityMatrix& u) {
  if (u.outcomes() != 2)
    throw std::invalid_argument("exact_boundaries_1d: only defined for two outcomes");
  std::vector<std::pair<std::pair<Index, Index>, double>> out;
  for (Index i = 0; i < u.decisions(); ++i) {
    for (Index j = i + 1; j < u.decisions(); ++j) {
      // U_i(t) - U_j(t) = a*t + c*(1-t) with a, c the per-outcome gaps.
      const double a = u.value(i, 0) - u.value(j, 0);
      const double c = u.value(i, 1) - u.value(j, 1);
      if (a == c) continue;  // parallel: no crossing (or identical rows)
      const double t = c / (c - a);
      if (t >= 0.0 && t <= 1.0) out.push_back({{i, j}, t});
    }
  }
  return out;
}

UtilityMatrix prune_decisions(const UtilityMatrix& u, const SimplexGrid& grid,
                              std::vector<Index> tie_order) {
  const auto map = decision_regions(make_policy(u, std::move(tie_order)), grid);
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
  for (Index i = 0; i < u.decisions(); ++i) {
    if (!map.region_nonempty[i]) continue;
    labels.push_back(u.label(i));
    rows.emplace_back(u.row(i).begin(), u.row(i).end());
  }
  return UtilityMatrix(std::move(labels), std::move(rows));
}

std::vector<double> softmax_policy(const UtilityMatrix& u, double lambda, const Distribution& p) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("softmax_policy: lambda must be finite and positive");
  std::vector<double> z(u.decisions());
  double zmax = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < u.decisions(); ++i) {
    z[i] = lambda * expected_utility(u, i, p);
    zmax = std::max(zmax, z[i]);
  }
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

}  // namespace descore
