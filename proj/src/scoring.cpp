#include "descore/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <nlohmann/json.hpp>

namespace descore {

using nlohmann::json;

std::vector<double> Cost::subgradient(std::span<const double> p) const {
  std::vector<double> g(p.size());
  subgradient(p, g);
  return g;
}

namespace {

class QuadraticCost final : public Cost {
 public:
  double value(std::span<const double> p) const override {
    double s = 0.0;
    for (double v : p) s += v * v;
    return s;
  }
  void subgradient(std::span<const double> p, std::span<double> out) const override {
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = 2.0 * p[i];
  }
  std::string name() const override { return "quadratic"; }
  std::optional<double> curvature_factor() const override { return 2.0; }
  json spec() const override { return json{{"kind", "quadratic"}}; }
};

class LogCost final : public Cost {
 public:
  double value(std::span<const double> p) const override {
    double s = 0.0;
    for (double v : p)
      if (v > 0.0) s += v * std::log(v);
    return s;
  }
  void subgradient(std::span<const double> p, std::span<double> out) const override {
    // Probabilities below kLogClamp are clamped so scores stay finite at the
    // boundary; the clamped vector is still a valid subgradient at any grid
    // coarser than the clamp.
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = 1.0 + std::log(std::max(p[i], kLogClamp));
  }
  std::string name() const override { return "log"; }
  // Hessian diag(1/p_i) dominates the identity everywhere on the simplex.
  std::optional<double> curvature_factor() const override { return 1.0; }
  json spec() const override { return json{{"kind", "log"}}; }
};

class LinearCost final : public Cost {
 public:
  explicit LinearCost(std::vector<double> w) : w_(std::move(w)) {}
  double value(std::span<const double> p) const override { return dot(w_, p); }
  void subgradient(std::span<const double>, std::span<double> out) const override {
    std::copy(w_.begin(), w_.end(), out.begin());
  }
  std::string name() const override { return "linear"; }
  std::optional<double> curvature_factor() const override { return 0.0; }
  json spec() const override { return json{{"kind", "linear"}, {"weights", w_}}; }

 private:
  std::vector<double> w_;
};

class ShiftedCost final : public Cost {
 public:
  ShiftedCost(CostPtr base, double offset) : base_(std::move(base)), offset_(offset) {}
  double value(std::span<const double> p) const override { return base_->value(p) + offset_; }
  void subgradient(std::span<const double> p, std::span<double> out) const override {
    base_->subgradient(p, out);
  }
  std::string name() const override { return "shifted(" + base_->name() + ")"; }
  std::optional<double> curvature_factor() const override { return base_->curvature_factor(); }
  json spec() const override {
    return json{{"kind", "shifted"}, {"base", base_->spec()}, {"offset", offset_}};
  }

 private:
  CostPtr base_;
  double offset_;
};

class ScaledCost final : public Cost {
 public:
  ScaledCost(CostPtr base, double factor) : base_(std::move(base)), factor_(factor) {}
  double value(std::span<const double> p) const override { return factor_ * base_->value(p); }
  void subgradient(std::span<const double> p, std::span<double> out) const override {
    base_->subgradient(p, out);
    for (double& v : out) v *= factor_;
  }
  std::string name() const override { return "scaled(" + base_->name() + ")"; }
  std::optional<double> curvature_factor() const override {
    if (auto c = base_->curvature_factor()) return factor_ * *c;
    return std::nullopt;
  }
  json spec() const override {
    return json{{"kind", "scaled"}, {"base", base_->spec()}, {"factor", factor_}};
  }

 private:
  CostPtr base_;
  double factor_;
};

class SumCost final : public Cost {
 public:
  explicit SumCost(std::vector<CostPtr> terms) : terms_(std::move(terms)) {}
  double value(std::span<const double> p) const override {
    double s = 0.0;
    for (const auto& t : terms_) s += t->value(p);
    return s;
  }
  void subgradient(std::span<const double> p, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> g(p.size());
    for (const auto& t : terms_) {
      t->subgradient(p, g);
      for (std::size_t i = 0; i < p.size(); ++i) out[i] += g[i];
    }
  }
  std::string name() const override { return "sum"; }
  std::optional<double> curvature_factor() const override {
    double s = 0.0;
    for (const auto& t : terms_) {
      auto c = t->curvature_factor();
      if (!c) return std::nullopt;
      s += *c;
    }
    return s;
  }
  json spec() const override {
    json terms = json::array();
    for (const auto& t : terms_) terms.push_back(t->spec());
    return json{{"kind", "sum"}, {"terms", terms}};
  }

 private:
  std::vector<CostPtr> terms_;
};

class PwlcCost final : public Cost {
 public:
  explicit PwlcCost(std::vector<std::vector<double>> planes) : planes_(std::move(planes)) {
    if (planes_.empty()) throw std::invalid_argument("pwlc_cost: need at least one piece");
    for (const auto& a : planes_)
      if (a.size() != planes_.front().size())
        throw std::invalid_argument("pwlc_cost: piece arity mismatch");
  }
  Index active(std::span<const double> p) const {
    Index best = 0;
    double best_v = dot(planes_[0], p);
    for (Index h = 1; h < planes_.size(); ++h) {
      const double v = dot(planes_[h], p);
      if (v > best_v) {
        best_v = v;
        best = h;
      }
    }
    return best;
  }
  double value(std::span<const double> p) const override {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& a : planes_) best = std::max(best, dot(a, p));
    return best;
  }
  void subgradient(std::span<const double> p, std::span<double> out) const override {
    const auto& a = planes_[active(p)];
    std::copy(a.begin(), a.end(), out.begin());
  }
  std::string name() const override { return "pwlc"; }
  std::optional<double> curvature_factor() const override { return 0.0; }
  json spec() const override { return json{{"kind", "pwlc"}, {"planes", planes_}}; }

 private:
  std::vector<std::vector<double>> planes_;
};

}  // namespace

CostPtr quadratic_cost() { return std::make_shared<QuadraticCost>(); }
CostPtr log_cost() { return std::make_shared<LogCost>(); }
CostPtr linear_cost(std::vector<double> weights) {
  return std::make_shared<LinearCost>(std::move(weights));
}
CostPtr shifted_cost(CostPtr base, double offset) {
  return std::make_shared<ShiftedCost>(std::move(base), offset);
}
CostPtr scaled_cost(CostPtr base, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scaled_cost: factor must be positive");
  return std::make_shared<ScaledCost>(std::move(base), factor);
}
CostPtr sum_cost(std::vector<CostPtr> terms) {
  if (terms.empty()) throw std::invalid_argument("sum_cost: need at least one term");
  return std::make_shared<SumCost>(std::move(terms));
}
CostPtr pwlc_cost(std::vector<std::vector<double>> planes) {
  return std::make_shared<PwlcCost>(std::move(planes));
}

ScoringRule::ScoringRule(std::string name, std::size_t outcomes, Fn fn)
    : name_(std::move(name)), m_(outcomes), fn_(std::move(fn)) {
  if (m_ < 2) throw std::invalid_argument("ScoringRule: need at least two outcomes");
}

double ScoringRule::score(std::span<const double> report, Index outcome) const {
  if (outcome >= m_) throw std::out_of_range("ScoringRule: outcome index out of range");
  if (report.size() != m_) throw std::invalid_argument("ScoringRule: report arity mismatch");
  return fn_(report, outcome);
}

double score_from_cost(const Cost& g, std::span<const double> p, Index outcome) {
  std::vector<double> sub(p.size());
  g.subgradient(p, sub);
  return g.value(p) - dot(sub, p) + sub[outcome];
}

ScoringRule rule_from(CostPtr g, std::size_t outcomes) {
  std::string name = g->name();  // read before the capture moves g away
  return ScoringRule(std::move(name), outcomes,
                     [g = std::move(g)](std::span<const double> p, Index i) {
                       return score_from_cost(*g, p, i);
                     });
}

double expected_score(const ScoringRule& s, const Distribution& r, const Distribution& p) {
  if (r.size() != p.size() || r.size() != s.outcomes())
    throw std::invalid_argument("expected_score: arity mismatch");
  double acc = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) acc += p[i] * s.score(r, i);
  return acc;
}

namespace {

// Score table: row per grid point, column per outcome.
std::vector<double> score_table(const ScoringRule& s, const SimplexGrid& grid) {
  const std::size_t n = grid.size(), m = grid.outcomes();
  std::vector<double> table(n * m);
  std::vector<double> p(m);
  for (Index i = 0; i < n; ++i) {
    grid.point(i, p);
    for (Index j = 0; j < m; ++j) table[i * m + j] = s.score(p, j);
  }
  return table;
}

int grid_steps(std::span<const int> a, std::span<const int> b) {
  int diff = 0;
  for (std::size_t j = 0; j < a.size(); ++j) diff += std::abs(a[j] - b[j]);
  return diff / 2;  // each elementary move changes two coordinates by one
}

}  // namespace

ProprietyVerdict check_proper(const ScoringRule& s, const SimplexGrid& grid, bool strict,
                              double tol) {
  const std::size_t n = grid.size(), m = grid.outcomes();
  const auto table = score_table(s, grid);
  ProprietyVerdict v;
  v.min_gap = std::numeric_limits<double>::infinity();
  v.min_gap_two_steps = std::numeric_limits<double>::infinity();
  std::vector<double> p(m);
  Index worst_p = 0, worst_r = 0;
  for (Index ip = 0; ip < n; ++ip) {
    grid.point(ip, p);
    const double self = dot({table.data() + ip * m, m}, p);
    for (Index ir = 0; ir < n; ++ir) {
      if (ir == ip) continue;
      const double gap = self - dot({table.data() + ir * m, m}, p);
      if (gap < v.min_gap) {
        v.min_gap = gap;
        worst_p = ip;
        worst_r = ir;
      }
      if (v.min_gap_two_steps > gap && grid_steps(grid.counts(ip), grid.counts(ir)) >= 2)
        v.min_gap_two_steps = gap;
    }
  }
  v.proper = v.min_gap >= -tol;
  v.strict = v.proper && v.min_gap > 0.0;
  v.ok = strict ? v.strict : v.proper;
  if (!v.ok) {
    v.witness = ProprietyWitness{grid.point(worst_p), grid.point(worst_r), v.min_gap};
  }
  return v;
}

ConvexityVerdict check_convexity(const Cost& g, const SimplexGrid& grid, double tol) {
  const std::size_t n = grid.size(), m = grid.outcomes();
  ConvexityVerdict v;
  v.worst = std::numeric_limits<double>::infinity();
  std::vector<double> p(m), q(m), sub(m), values(n);
  for (Index i = 0; i < n; ++i) {
    grid.point(i, p);
    values[i] = g.value(p);
  }
  Index wp = 0, wq = 0;
  for (Index ip = 0; ip < n; ++ip) {
    grid.point(ip, p);
    g.subgradient(p, sub);
    const double base = values[ip] - dot(sub, p);
    for (Index iq = 0; iq < n; ++iq) {
      if (iq == ip) continue;
      grid.point(iq, q);
      const double gap = values[iq] - (base + dot(sub, q));
      if (gap < v.worst) {
        v.worst = gap;
        wp = ip;
        wq = iq;
      }
    }
  }
  v.ok = v.worst >= -tol;
  v.worst_p = grid.point(wp);
  v.worst_q = grid.point(wq);
  return v;
}

double robustness_factor(const Cost& g, const RegionPredicate& region, const SimplexGrid& grid) {
  const std::size_t n = grid.size(), m = grid.outcomes();
  std::vector<double> p(m), q(m), sub(m), values(n);
  for (Index i = 0; i < n; ++i) {
    grid.point(i, p);
    values[i] = g.value(p);
  }
  double factor = std::numeric_limits<double>::infinity();
  for (Index ip = 0; ip < n; ++ip) {
    grid.point(ip, p);
    if (region && !region(p)) continue;
    g.subgradient(p, sub);
    const double base = values[ip] - dot(sub, p);
    for (Index iq = 0; iq < n; ++iq) {
      if (iq == ip) continue;
      grid.point(iq, q);
      const double gap = values[iq] - (base + dot(sub, q));
      factor = std::min(factor, gap / l2_distance(p, q));
    }
  }
  if (!std::isfinite(factor)) return 0.0;  // empty region
  return std::max(factor, 0.0);
}

LocalRobustnessVerdict local_robustness_check(const Cost& g, const Distribution& p, double eps,
                                              double m_target, const SimplexGrid& grid,
                                              double tol) {
  if (p.size() != grid.outcomes())
    throw std::invalid_argument("local_robustness_check: arity mismatch");
  LocalRobustnessVerdict v;
  v.measured_factor = std::numeric_limits<double>::infinity();
  v.worst_margin = std::numeric_limits<double>::infinity();
  const std::size_t n = grid.size(), m = grid.outcomes();
  std::vector<double> q(m), sub(m);
  g.subgradient(p.span(), sub);
  const double base = g.value(p.span()) - dot(sub, p.span());
  bool any = false;
  for (Index iq = 0; iq < n; ++iq) {
    grid.point(iq, q);
    const double dist = l2_distance(p.span(), q);
    if (dist > eps || dist == 0.0) continue;
    any = true;
    const double gap = g.value(q) - (base + dot(sub, q));
    const double margin = gap - m_target * dist;
    if (margin < v.worst_margin) {
      v.worst_margin = margin;
      v.worst_q.assign(q.begin(), q.end());
    }
    v.measured_factor = std::min(v.measured_factor, gap / dist);
  }
  if (!any) {
    v.measured_factor = 0.0;
    v.worst_margin = 0.0;
    v.ok = true;  // vacuous: no grid point inside the ball
    return v;
  }
  v.ok = v.worst_margin >= -tol;
  return v;
}

}  // namespace descore
