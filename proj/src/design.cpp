#include "descore/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

namespace descore {

using nlohmann::json;

namespace {

constexpr double kRoot2 = 1.4142135623730951;

struct Line {
  double c = 0.0, s = 0.0;  // value c + s * t
  Index idx = 0;
};

Index winner_at(const std::vector<Line>& lines, double t) {
  Index best = 0;
  double best_v = lines[0].c + lines[0].s * t;
  for (Index i = 1; i < lines.size(); ++i) {
    const double v = lines[i].c + lines[i].s * t;
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

std::vector<double> interior_crossings(const std::vector<Line>& lines) {
  std::vector<double> ts;
  for (Index i = 0; i < lines.size(); ++i)
    for (Index j = i + 1; j < lines.size(); ++j) {
      if (lines[i].s == lines[j].s) continue;
      const double t = (lines[j].c - lines[i].c) / (lines[i].s - lines[j].s);
      if (t > 0.0 && t < 1.0) ts.push_back(t);
    }
  return ts;
}

}  // namespace

CurvatureProfile required_profile(const UtilityMatrix& dm, const UncertaintyBox& box, double sigma,
                                  RuleKind kind, double eta) {
  if (dm.outcomes() != 2)
    throw std::invalid_argument("required_profile: construction is limited to two outcomes");
  if (!(sigma > 0.0)) throw std::invalid_argument("required_profile: sigma must be positive");
  if (eta < 0.0) throw std::invalid_argument("required_profile: eta must be nonnegative");
  if (box.decisions() != dm.decisions() || box.outcomes() != dm.outcomes())
    throw std::invalid_argument("required_profile: box shape does not match the decision problem");

  const double delta = box.delta();
  const double root_m = std::sqrt(2.0);

  // Exact region structure along the parameter: winners between consecutive
  // pairwise crossings; boundaries are the points where the winner changes.
  std::vector<Line> lines(dm.decisions());
  for (Index i = 0; i < dm.decisions(); ++i)
    lines[i] = {dm.value(i, 1), dm.value(i, 0) - dm.value(i, 1), i};
  std::vector<double> cuts = interior_crossings(lines);
  cuts.push_back(0.0);
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  CurvatureProfile profile;
  profile.kind = kind;
  profile.sigma = sigma;
  profile.delta = delta;
  profile.eta = eta;
  Index prev = winner_at(lines, 0.5 * (cuts[0] + cuts[1]));
  for (std::size_t c = 1; c + 1 < cuts.size(); ++c) {
    const Index next = winner_at(lines, 0.5 * (cuts[c] + cuts[c + 1]));
    if (next == prev) continue;
    BoundaryRequirement req;
    req.lo = std::min(prev, next);
    req.hi = std::max(prev, next);
    req.tau = cuts[c];
    double grad = 0.0;
    for (Index k = 0; k < 2; ++k)
      grad = std::max(grad, std::abs(dm.value(req.lo, k) - dm.value(req.hi, k)));
    req.pair_gradient = grad;
    req.m_factor = grad * root_m * 2.0 * delta / sigma;
    req.eps_l2 = sigma / (grad * root_m);
    if (kind == RuleKind::uniform) {
      req.m_factor *= 0.5;
      req.eps_l2 *= 0.5;
    }
    req.eps_param = req.eps_l2 / root_m;
    profile.boundaries.push_back(req);
    prev = next;
  }
  std::sort(profile.boundaries.begin(), profile.boundaries.end(),
            [](const BoundaryRequirement& a, const BoundaryRequirement& b) { return a.tau < b.tau; });

  // Neighborhoods must stay disjoint; eps grows linearly in sigma, so report
  // the largest sigma that still fits.
  double sigma_max = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a + 1 < profile.boundaries.size(); ++a) {
    const auto& ra = profile.boundaries[a];
    const auto& rb = profile.boundaries[a + 1];
    const double gap = rb.tau - ra.tau;
    const double per_sigma = ra.eps_param / sigma + rb.eps_param / sigma;
    sigma_max = std::min(sigma_max, gap / per_sigma);
    if (ra.eps_param + rb.eps_param >= gap) {
      throw InfeasibleSigma("required_profile: neighborhoods of boundaries at t=" +
                                std::to_string(ra.tau) + " and t=" + std::to_string(rb.tau) +
                                " overlap; largest feasible sigma is " + std::to_string(sigma_max),
                            sigma_max);
    }
  }
  return profile;
}

PiecewiseQuadraticCost::PiecewiseQuadraticCost(std::vector<double> knots,
                                               std::vector<std::array<double, 3>> pieces)
    : knots_(std::move(knots)), pieces_(std::move(pieces)) {
  if (knots_.size() < 2 || pieces_.size() + 1 != knots_.size())
    throw std::invalid_argument("PiecewiseQuadraticCost: need one piece per knot interval");
  if (knots_.front() != 0.0 || knots_.back() != 1.0)
    throw std::invalid_argument("PiecewiseQuadraticCost: knots must span [0, 1]");
  for (std::size_t j = 0; j + 1 < knots_.size(); ++j)
    if (!(knots_[j] < knots_[j + 1]))
      throw std::invalid_argument("PiecewiseQuadraticCost: knots must be strictly increasing");
  for (std::size_t j = 0; j < pieces_.size(); ++j) {
    if (pieces_[j][2] < 0.0)
      throw std::invalid_argument("PiecewiseQuadraticCost: concave piece " + std::to_string(j));
    if (j + 1 < pieces_.size()) {
      const double len = knots_[j + 1] - knots_[j];
      const double end_value = pieces_[j][0] + pieces_[j][1] * len + pieces_[j][2] * len * len;
      if (std::abs(end_value - pieces_[j + 1][0]) > 1e-9)
        throw std::invalid_argument("PiecewiseQuadraticCost: value jump at knot " + std::to_string(j + 1));
      const double end_slope = pieces_[j][1] + 2.0 * pieces_[j][2] * len;
      if (pieces_[j + 1][1] < end_slope - 1e-9)
        throw std::invalid_argument("PiecewiseQuadraticCost: slope drop at knot " + std::to_string(j + 1));
    }
  }
}

std::size_t PiecewiseQuadraticCost::piece_index(double t) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - knots_.begin() - 1, 0));
  return std::min(j, pieces_.size() - 1);
}

double PiecewiseQuadraticCost::value_at(double t) const {
  const std::size_t j = piece_index(t);
  const double x = t - knots_[j];
  return pieces_[j][0] + x * (pieces_[j][1] + x * pieces_[j][2]);
}

double PiecewiseQuadraticCost::left_slope(std::size_t knot) const {
  const std::size_t j = knot - 1;
  const double len = knots_[knot] - knots_[j];
  return pieces_[j][1] + 2.0 * pieces_[j][2] * len;
}

double PiecewiseQuadraticCost::right_slope(std::size_t knot) const { return pieces_[knot][1]; }

double PiecewiseQuadraticCost::slope_at(double t) const {
  // Exact knot hits use the mean of one-sided slopes, so a slope jump J
  // certifies symmetric linear growth J/2 around the knot.
  for (std::size_t j = 0; j < knots_.size(); ++j) {
    if (knots_[j] == t) {
      if (j == 0) return right_slope(0);
      if (j + 1 == knots_.size()) return left_slope(j);
      return 0.5 * (left_slope(j) + right_slope(j));
    }
  }
  const std::size_t j = piece_index(t);
  return pieces_[j][1] + 2.0 * pieces_[j][2] * (t - knots_[j]);
}

double PiecewiseQuadraticCost::value(std::span<const double> p) const {
  if (p.size() != 2)
    throw std::invalid_argument("PiecewiseQuadraticCost: defined for two outcomes only");
  return value_at(p[0]);
}

void PiecewiseQuadraticCost::subgradient(std::span<const double> p, std::span<double> out) const {
  if (p.size() != 2)
    throw std::invalid_argument("PiecewiseQuadraticCost: defined for two outcomes only");
  const double t = p[0];
  const double g = value_at(t);
  const double s = slope_at(t);
  // Representative with subgradient . p = value, so the score hyperplane is
  // the subgradient itself.
  out[0] = g + (1.0 - t) * s;
  out[1] = g - t * s;
}

std::optional<double> PiecewiseQuadraticCost::curvature_factor() const {
  double q = std::numeric_limits<double>::infinity();
  for (const auto& piece : pieces_) q = std::min(q, piece[2]);
  return q;  // L2 Hessian lower bound: d^2/ds^2 along the simplex equals the
             // quadratic coefficient
}

json PiecewiseQuadraticCost::spec() const {
  json pieces = json::array();
  for (const auto& p : pieces_) pieces.push_back(json::array({p[0], p[1], p[2]}));
  return json{{"kind", "designed"}, {"knots", knots_}, {"pieces", pieces}};
}

DesignedCost construct_cost(const CurvatureProfile& profile, BaseKind base, const ExpertBias& bias) {
  if (bias.outcomes() != 2)
    throw std::invalid_argument("construct_cost: construction is limited to two outcomes");

  std::vector<Line> lines(bias.decisions());
  for (Index i = 0; i < bias.decisions(); ++i)
    lines[i] = {bias.value(i, 1), bias.value(i, 0) - bias.value(i, 1), i};

  // Knots: envelope kinks (strong base), each boundary tau and its
  // neighborhood edges, and the domain ends.
  std::vector<double> knots{0.0, 1.0};
  if (base == BaseKind::strong) {
    std::vector<double> cuts = interior_crossings(lines);
    cuts.push_back(0.0);
    cuts.push_back(1.0);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    Index prev = winner_at(lines, 0.5 * (cuts[0] + cuts[1]));
    for (std::size_t c = 1; c + 1 < cuts.size(); ++c) {
      const Index next = winner_at(lines, 0.5 * (cuts[c] + cuts[c + 1]));
      if (next != prev) knots.push_back(cuts[c]);
      prev = next;
    }
  }
  for (const auto& req : profile.boundaries) {
    if (!(req.tau > 0.0 && req.tau < 1.0))
      throw std::invalid_argument("construct_cost: boundary tau must lie strictly inside (0, 1)");
    for (double x : {req.tau - req.eps_param, req.tau, req.tau + req.eps_param})
      if (x > 0.0 && x < 1.0) knots.push_back(x);
  }
  std::sort(knots.begin(), knots.end());
  std::vector<double> merged;
  for (double x : knots)
    if (merged.empty() || x - merged.back() > 1e-12) merged.push_back(x);
  // Keep boundary knots bit-exact even if they collided with a nearby knot.
  for (const auto& req : profile.boundaries)
    for (double& x : merged)
      if (std::abs(x - req.tau) <= 1e-12) x = req.tau;
  knots = std::move(merged);
  if (knots.back() != 1.0) knots.push_back(1.0);

  const Line base_line = lines[winner_at(lines, 0.5)];
  auto base_value = [&](double t) {
    if (base == BaseKind::weak) return base_line.c + base_line.s * t;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& l : lines) best = std::max(best, l.c + l.s * t);
    return best;
  };
  auto base_slope_in = [&](double mid) {
    if (base == BaseKind::weak) return base_line.s;
    return lines[winner_at(lines, mid)].s;
  };

  std::vector<std::array<double, 3>> pieces(knots.size() - 1);
  double h_val = 0.0, h_slope = 0.0;  // running h(t), h'(t) with h(0) = h'(0) = 0
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    const double lo = knots[j], hi = knots[j + 1];
    const double mid = 0.5 * (lo + hi);
    double q = 0.5 * profile.eta;  // ambient curvature eta per unit squared parameter
    for (const auto& req : profile.boundaries) {
      if (std::abs(mid - req.tau) < req.eps_param)
        q = std::max(req.m_factor, q);  // honor the L2 factor: d^2/ds^2 = q along the simplex
      if (knots[j] == req.tau)
        h_slope += 2.0 * kRoot2 * req.m_factor;  // kink certifying factor m at every radius
    }
    pieces[j] = {base_value(lo) + h_val, base_slope_in(mid) + h_slope, q};
    const double len = hi - lo;
    h_val += h_slope * len + q * len * len;
    h_slope += 2.0 * q * len;
  }

  DesignedCost out;
  out.cost = std::make_shared<PiecewiseQuadraticCost>(std::move(knots), std::move(pieces));
  out.profile = profile;
  out.base = base;
  return out;
}

CompensationStats compensation_stats(const Cost& cost, const ExpertBias& bias,
                                     const DecisionPolicy& policy, const SimplexGrid& grid) {
  CompensationStats stats;
  stats.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  const std::size_t n = grid.size();
  std::vector<double> p(grid.outcomes()), w(grid.outcomes());
  for (Index i = 0; i < n; ++i) {
    const auto c = grid.counts(i);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<double>(c[j]);
    grid.point(i, p);
    const double comp = cost.value(p) - dot(bias.row(policy.decide_weights(w)), p);
    stats.max = std::max(stats.max, comp);
    sum += comp;
  }
  stats.mean = sum / static_cast<double>(n);
  return stats;
}

DesignVerdict verify_design(const DesignedCost& designed, const UtilityMatrix& dm,
                            const UncertaintyBox& box, double sigma, int grid_resolution,
                            unsigned seed) {
  DesignVerdict verdict;
  verdict.sigma = sigma;

  // True-bias family: box corners stress the estimate error, the midpoint and
  // seeded interior draws cover the bulk.
  std::vector<std::pair<std::string, ExpertBias>> truths;
  truths.emplace_back("corner-low", box.lower());
  truths.emplace_back("corner-high", box.upper());
  auto mixed_corner = [&](Index row, bool row_high) {
    std::vector<std::vector<double>> rows(box.decisions());
    for (Index i = 0; i < box.decisions(); ++i) {
      rows[i].resize(box.outcomes());
      for (Index j = 0; j < box.outcomes(); ++j) {
        const bool high = (i == row) ? row_high : !row_high;
        rows[i][j] = high ? box.upper().value(i, j) : box.lower().value(i, j);
      }
    }
    return UtilityMatrix(box.lower().labels(), std::move(rows));
  };
  for (Index i = 0; i < box.decisions(); ++i) {
    truths.emplace_back("corner-row" + std::to_string(i) + "-high", mixed_corner(i, true));
    truths.emplace_back("corner-row" + std::to_string(i) + "-low", mixed_corner(i, false));
  }
  truths.emplace_back("midpoint", uniform_estimate(box, 0.5));
  std::mt19937 rng(seed);
  for (int r = 0; r < 3; ++r) {
    std::vector<std::vector<double>> rows(box.decisions());
    for (Index i = 0; i < box.decisions(); ++i) {
      rows[i].resize(box.outcomes());
      for (Index j = 0; j < box.outcomes(); ++j) {
        std::uniform_real_distribution<double> entry(box.lower().value(i, j), box.upper().value(i, j));
        rows[i][j] = entry(rng);
      }
    }
    truths.emplace_back("interior-" + std::to_string(r),
                        UtilityMatrix(box.lower().labels(), std::move(rows)));
  }

  auto adversarial_estimate = [&](const ExpertBias& truth) {
    std::vector<std::vector<double>> rows(box.decisions());
    for (Index i = 0; i < box.decisions(); ++i) {
      rows[i].resize(box.outcomes());
      for (Index j = 0; j < box.outcomes(); ++j) {
        const double lo = box.lower().value(i, j), hi = box.upper().value(i, j);
        rows[i][j] = (truth.value(i, j) - lo <= hi - truth.value(i, j)) ? hi : lo;
      }
    }
    return UtilityMatrix(box.lower().labels(), std::move(rows));
  };

  const SimplexGrid grid(2, grid_resolution);
  verdict.status = "pass";
  verdict.ok = true;
  for (const auto& [truth_name, truth] : truths) {
    std::vector<std::pair<std::string, EstimatePolicy>> estimates;
    if (designed.profile.kind == RuleKind::uniform) {
      estimates.emplace_back("lambda0", 0.0);
      estimates.emplace_back("lambda05", 0.5);
      estimates.emplace_back("lambda1", 1.0);
    } else {
      estimates.emplace_back("adversarial", adversarial_estimate(truth));
      estimates.emplace_back("midpoint-estimate", uniform_estimate(box, 0.5));
    }
    for (auto& [est_name, est] : estimates) {
      Scenario scenario(dm, truth, box, designed.cost, std::move(est));
      scenario.name = truth_name + "/" + est_name;
      BestResponseSweep sweep(scenario, grid);
      DesignCheck check{scenario.name, local_loss_bound_check(sweep, sigma, designed.profile.boundaries)};
      verdict.worst_loss = std::max(verdict.worst_loss, check.report.worst_loss);
      if (check.report.status == "violation") {
        verdict.status = "violation";
        verdict.ok = false;
      } else if (check.report.status == "inapplicable" && verdict.status != "violation") {
        verdict.status = "inapplicable";
        verdict.ok = false;
      }
      verdict.checks.push_back(std::move(check));
    }
  }
  return verdict;
}

}  // namespace descore
