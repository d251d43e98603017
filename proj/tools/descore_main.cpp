#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "descore/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace descore;

namespace {

struct Options {
  std::string file;
  std::string out_dir;
  int grid = 0;        // 0: keep the scenario's resolutions
  double tol = -1.0;   // <0: keep the scenario's tolerance
  unsigned seed = 2023;
};

fs::path resolve_out_dir(const Options& opt) {
  fs::path dir;
  if (!opt.out_dir.empty()) {
    dir = opt.out_dir;
  } else if (const char* env = std::getenv("DESCORE_OUT_DIR"); env && *env) {
    dir = env;
  } else {
    dir = ".";
  }
  fs::create_directories(dir);
  return dir;
}

ScenarioFile load(const Options& opt) {
  ScenarioFile sc = load_scenario(opt.file);
  if (sc.name.empty()) sc.name = fs::path(opt.file).stem().string();
  if (opt.grid > 0) sc.grid_k2 = sc.grid_k3 = opt.grid;
  if (opt.tol >= 0.0) sc.incentive_tol = opt.tol;
  return sc;
}

void require_section(bool present, const std::string& key) {
  if (!present) throw SchemaError(key + ": required by this command but missing");
}

int finish(const Report& report, const fs::path& out_dir, const std::string& stem) {
  const fs::path path = out_dir / (stem + "_report.json");
  report.write(path.string());
  const json j = report.to_json(false);
  for (const auto& check : j["checks"]) {
    std::cout << (check["pass"].get<bool>() ? "PASS " : "FAIL ") << check["name"].get<std::string>();
    if (check.contains("status")) std::cout << " [" << check["status"].get<std::string>() << "]";
    std::cout << "\n";
  }
  std::cout << (report.all_pass() ? "OK" : "FAILED") << ": " << report.size() - report.failures()
            << "/" << report.size() << " checks passed; report " << path.string() << "\n";
  return report.all_pass() ? 0 : 1;
}

json verdict_details(const ProprietyVerdict& v) {
  json d{{"min_gap", v.min_gap}, {"min_gap_two_steps", v.min_gap_two_steps},
         {"proper", v.proper},   {"strict", v.strict}};
  if (v.witness) {
    d["witness"] = json{{"belief", v.witness->belief}, {"report", v.witness->report},
                        {"gap", v.witness->gap}};
  }
  return d;
}

json participation_details(const ParticipationVerdict& v) {
  return json{{"worst_margin", v.worst},
              {"witness", v.witness},
              {"worst_value", v.worst_value},
              {"max_expected_pay", v.max_expected_pay},
              {"mean_expected_pay", v.mean_expected_pay},
              {"advisory", v.advisory}};
}

json sweep_details(const SweepCheck& c) {
  json d{{"status", c.status}, {"bound", c.bound}, {"observed", c.observed}};
  if (!c.witness.empty()) {
    d["witness"] = c.witness;
    d["witness_report"] = c.witness_response.report;
    d["witness_net_gain"] = c.witness_response.net_gain;
  }
  return d;
}

int cmd_analyze(const Options& opt) {
  const ScenarioFile sc = load(opt);
  require_section(sc.dm.has_value(), "dm");
  require_section(sc.bias.has_value(), "bias");
  require_section(sc.cost != nullptr, "cost");
  const std::size_t m = sc.dm->outcomes();
  const SimplexGrid grid(m, m == 2 ? sc.grid_k2 : sc.grid_k3);
  const DecisionPolicy policy = make_policy(*sc.dm);
  const ExpertBias estimate =
      sc.estimate ? (std::holds_alternative<ExpertBias>(*sc.estimate)
                         ? std::get<ExpertBias>(*sc.estimate)
                         : [&] {
                             require_section(sc.box.has_value(), "box");
                             return uniform_estimate(*sc.box, std::get<double>(*sc.estimate));
                           }())
                  : *sc.bias;

  Report report("analyze", sc.name);
  report.echo_inputs(sc.raw);

  const RegionMap regions = decision_regions(policy, grid);
  json region_note = json::array();
  for (Index d = 0; d < sc.dm->decisions(); ++d)
    if (regions.region_nonempty[d]) region_note.push_back(sc.dm->label(d));
  report.note("nonempty_regions", region_note);
  json boundary_note = json::array();
  for (const auto& b : regions.boundaries) {
    json jb{{"pair", {sc.dm->label(b.lo), sc.dm->label(b.hi)}}};
    if (b.exact_t) jb["tau"] = *b.exact_t;
    boundary_note.push_back(std::move(jb));
  }
  report.note("boundaries", boundary_note);

  const ScoringRule rule = rule_from(sc.cost, m);
  const auto propriety = check_proper(rule, grid, false, kProprietyTol);
  report.add("score-proper", propriety.proper, verdict_details(propriety));

  const CompensationRule comp = rule_from_cost(sc.cost, estimate, policy);
  const auto comp_proper = check_proper_compensation(comp, *sc.bias, grid, false);
  report.add("compensation-proper", comp_proper.proper, verdict_details(comp_proper));
  const auto weak = check_weak_participation(comp, *sc.bias, grid);
  report.add("weak-participation", weak.ok, participation_details(weak));
  const auto strong = check_strong_participation(comp, *sc.bias, grid);
  report.add("strong-participation", strong.ok, participation_details(strong));

  const CompensationRule gap = gap_rule(*sc.bias, policy);
  const auto gap_proper = check_proper_compensation(gap, *sc.bias, grid, false);
  report.add("gap-rule-proper", gap_proper.proper, verdict_details(gap_proper));
  const auto gap_strong = check_strong_participation(gap, *sc.bias, grid);
  report.add("gap-rule-strong-participation", gap_strong.ok, participation_details(gap_strong));

  double gap_pay_peak = 0.0;
  std::vector<double> p(m);
  for (Index i = 0; i < grid.size(); ++i) {
    grid.point(i, p);
    for (Index x = 0; x < m; ++x) gap_pay_peak = std::max(gap_pay_peak, std::abs(gap.pay(p, x)));
  }
  report.note("gap_rule_identically_zero", gap_pay_peak == 0.0);
  report.note("utility_gap", utility_gap(*sc.bias));

  // Plot data: cost, expert envelope, inherent utility of the induced
  // decision, and truthful expected compensation per grid point.
  std::vector<std::string> header;
  for (Index j = 0; j < m; ++j) header.push_back("p" + std::to_string(j));
  header.insert(header.end(), {"decision", "cost_value", "expert_optimal", "inherent", "compensation"});
  std::vector<std::vector<std::string>> rows;
  rows.reserve(grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    grid.point(i, p);
    const Distribution dist = grid.distribution(i);
    const Index taken = policy.decide(dist);
    std::vector<std::string> row;
    for (Index j = 0; j < m; ++j) row.push_back(format_double(p[j]));
    row.push_back(sc.dm->label(taken));
    row.push_back(format_double(sc.cost->value(p)));
    row.push_back(format_double(expert_optimal_utility(*sc.bias, p).value));
    row.push_back(format_double(dot(sc.bias->row(taken), p)));
    row.push_back(format_double(comp.expected_pay(dist)));
    rows.push_back(std::move(row));
  }
  const fs::path out_dir = resolve_out_dir(opt);
  write_csv((out_dir / (sc.name + "_analyze.csv")).string(), header, rows);
  return finish(report, out_dir, sc.name + "_analyze");
}

int cmd_bounds(const Options& opt) {
  const ScenarioFile sc = load(opt);
  require_section(sc.dm.has_value(), "dm");
  require_section(sc.bias.has_value(), "bias");
  require_section(sc.box.has_value(), "box");
  require_section(sc.cost != nullptr, "cost");

  EstimatePolicy estimate = sc.estimate.value_or(EstimatePolicy{0.5});
  Scenario scenario(*sc.dm, *sc.bias, *sc.box, sc.cost, std::move(estimate));
  scenario.grid_k2 = sc.grid_k2;
  scenario.grid_k3 = sc.grid_k3;
  scenario.incentive_tol = sc.incentive_tol;
  scenario.name = sc.name;
  const std::size_t m = scenario.dm.outcomes();
  const SimplexGrid grid(m, scenario.default_resolution());
  const BestResponseSweep sweep(scenario, grid);

  Report report("bounds", sc.name);
  report.echo_inputs(sc.raw);
  if (!sc.estimate) report.note("estimate_default", "uniform_lambda=0.5");
  report.note("delta", scenario.box.delta());

  const auto incentive = incentive_bound_check(sweep);
  report.add("incentive-bound", incentive.ok, sweep_details(incentive));

  const double measured = robustness_factor(*scenario.cost, nullptr, grid);
  report.note("measured_robustness_factor", measured);
  if (measured > 0.0) {
    const auto dev = deviation_bound_check(sweep, measured, ConvexityForm::robust);
    report.add("deviation-bound-robust", dev.ok, sweep_details(dev));
    const auto loss = global_loss_bound(sweep, measured, ConvexityForm::robust);
    report.add("loss-bound-robust", loss.ok, sweep_details(loss));
  }
  if (const auto hessian = scenario.cost->curvature_factor(); hessian && *hessian > 0.0) {
    const auto dev = deviation_bound_check(sweep, *hessian, ConvexityForm::strongly_convex);
    report.add("deviation-bound-strong", dev.ok, sweep_details(dev));
    const auto loss = global_loss_bound(sweep, *hessian, ConvexityForm::strongly_convex);
    report.add("loss-bound-strong", loss.ok, sweep_details(loss));
  }
  // The local loss bound presumes a cost built for sigma; for any other kind
  // the check would report a meaningless violation.
  if (sc.sigma && m == 2 && sc.cost->name() == "designed") {
    const CurvatureProfile profile =
        required_profile(*sc.dm, *sc.box, *sc.sigma, sc.rule_kind, sc.eta);
    const auto local = local_loss_bound_check(sweep, *sc.sigma, profile.boundaries);
    report.add("loss-bound-local", local.ok,
               json{{"status", local.status},
                    {"reason", local.reason},
                    {"sigma", local.sigma},
                    {"worst_loss", local.worst_loss},
                    {"witness", local.witness},
                    {"far_crossings", local.far_crossings}});
  }

  std::vector<std::string> header;
  for (Index j = 0; j < m; ++j) header.push_back("p" + std::to_string(j));
  for (Index j = 0; j < m; ++j) header.push_back("r" + std::to_string(j));
  header.insert(header.end(), {"gain", "deviation", "loss"});
  const auto& results = sweep.all_results();
  std::vector<std::vector<std::string>> rows;
  rows.reserve(results.size());
  std::vector<double> p(m), r(m);
  for (Index i = 0; i < results.size(); ++i) {
    grid.point(i, p);
    grid.point(results[i].report, r);
    std::vector<std::string> row;
    for (Index j = 0; j < m; ++j) row.push_back(format_double(p[j]));
    for (Index j = 0; j < m; ++j) row.push_back(format_double(r[j]));
    row.push_back(format_double(results[i].net_gain));
    row.push_back(format_double(results[i].deviation));
    row.push_back(format_double(results[i].dm_loss));
    rows.push_back(std::move(row));
  }
  const fs::path out_dir = resolve_out_dir(opt);
  write_csv((out_dir / (sc.name + "_bounds.csv")).string(), header, rows);
  return finish(report, out_dir, sc.name + "_bounds");
}

int cmd_design(const Options& opt) {
  const ScenarioFile sc = load(opt);
  require_section(sc.dm.has_value(), "dm");
  require_section(sc.bias.has_value(), "bias");
  require_section(sc.box.has_value(), "box");
  require_section(sc.sigma.has_value(), "sigma");
  if (sc.dm->outcomes() != 2)
    throw SchemaError("dm: cost design supports exactly two outcomes, got " +
                      std::to_string(sc.dm->outcomes()));

  Report report("design", sc.name);
  report.echo_inputs(sc.raw);
  const fs::path out_dir = resolve_out_dir(opt);

  CurvatureProfile profile;
  try {
    profile = required_profile(*sc.dm, *sc.box, *sc.sigma, sc.rule_kind, sc.eta);
  } catch (const InfeasibleSigma& e) {
    report.add("sigma-feasible", false,
               json{{"reason", e.what()}, {"feasible_sigma", e.feasible_sigma}});
    return finish(report, out_dir, sc.name + "_design");
  }
  report.add("sigma-feasible", true, json{{"boundaries", profile.boundaries.size()}});

  const DesignedCost designed = construct_cost(profile, sc.base_kind, *sc.bias);
  const SimplexGrid grid(2, sc.grid_k2);
  for (const auto& b : profile.boundaries) {
    const Distribution at_tau({b.tau, 1.0 - b.tau});
    const auto local = local_robustness_check(*designed.cost, at_tau, b.eps_l2, b.m_factor, grid);
    report.add("local-robustness-" + std::to_string(b.lo) + "-" + std::to_string(b.hi), local.ok,
               json{{"tau", b.tau},
                    {"eps_l2", b.eps_l2},
                    {"m_factor", b.m_factor},
                    {"measured_factor", local.measured_factor},
                    {"worst_margin", local.worst_margin}});
  }

  const auto convexity = check_convexity(*designed.cost, SimplexGrid(2, 400));
  report.add("convexity", convexity.ok, json{{"worst_gap", convexity.worst}});

  const DecisionPolicy policy = make_policy(*sc.dm);
  const CompensationRule rule = rule_from_cost(designed.cost, *sc.bias, policy);
  if (sc.base_kind == BaseKind::strong) {
    const auto strong = check_strong_participation(rule, *sc.bias, grid);
    report.add("strong-participation", strong.ok, participation_details(strong));
  } else {
    const auto weak = check_weak_participation(rule, *sc.bias, grid);
    report.add("weak-participation", weak.ok, participation_details(weak));
  }
  const auto stats = compensation_stats(*designed.cost, *sc.bias, policy, grid);
  report.note("compensation", json{{"max", stats.max}, {"mean", stats.mean}});

  const DesignVerdict verdict = verify_design(designed, *sc.dm, *sc.box, *sc.sigma, sc.grid_k2, opt.seed);
  json scenarios = json::array();
  for (const auto& check : verdict.checks)
    scenarios.push_back(json{{"scenario", check.scenario},
                             {"status", check.report.status},
                             {"worst_loss", check.report.worst_loss}});
  report.add("verify-design", verdict.ok,
             json{{"status", verdict.status},
                  {"worst_loss", verdict.worst_loss},
                  {"sigma", verdict.sigma},
                  {"scenarios", scenarios}});

  json boundaries = json::array();
  for (const auto& b : profile.boundaries)
    boundaries.push_back(json{{"lo", b.lo},
                              {"hi", b.hi},
                              {"tau", b.tau},
                              {"pair_gradient", b.pair_gradient},
                              {"m_factor", b.m_factor},
                              {"eps_l2", b.eps_l2},
                              {"eps_param", b.eps_param}});
  const json cost_file{{"cost", designed.cost->spec()},
                       {"profile", json{{"kind", profile.kind == RuleKind::uniform ? "uniform" : "consistent"},
                                        {"sigma", profile.sigma},
                                        {"delta", profile.delta},
                                        {"eta", profile.eta},
                                        {"boundaries", boundaries}}},
                       {"base", sc.base_kind == BaseKind::strong ? "strong" : "weak"}};
  std::ofstream cost_out(out_dir / (sc.name + "_cost.json"));
  cost_out << cost_file.dump(2) << "\n";
  return finish(report, out_dir, sc.name + "_design");
}

int cmd_market(const Options& opt) {
  const ScenarioFile sc = load(opt);
  require_section(sc.dm.has_value(), "dm");
  require_section(sc.cost != nullptr, "cost");
  require_section(sc.initial.has_value(), "initial");
  require_section(!sc.experts.empty(), "experts");
  const DecisionPolicy policy = make_policy(*sc.dm);
  std::vector<ExpertAgent> experts = sc.experts;
  if (sc.order_experts_by_bias) experts = order_by_bias(std::move(experts));
  const int grid_k = sc.dm->outcomes() == 2 ? sc.grid_k2 : sc.grid_k3;

  Index realized;
  if (sc.realized_outcome) {
    realized = *sc.realized_outcome;
  } else {
    // Sample the realized outcome from the final forecast, deterministically
    // in the seed: replay the steps once to learn the final forecast.
    MarketState preview(sc.cost, policy, *sc.initial, sc.scheme, grid_k);
    for (const auto& e : experts) preview.msr_step(e);
    std::mt19937 rng(opt.seed);
    std::discrete_distribution<int> pick(preview.incumbent().probs().begin(),
                                         preview.incumbent().probs().end());
    realized = static_cast<Index>(pick(rng));
  }

  const MarketRun run = run_market(experts, *sc.initial, sc.cost, policy, sc.scheme, realized, grid_k);

  Report report("market", sc.name);
  report.echo_inputs(sc.raw);
  report.add("ledger-conservation", run.summary.conservation_residual == 0.0,
             json{{"residual", run.summary.conservation_residual},
                  {"house_outlay", run.summary.house_outlay}});

  // Expected-payment chain: every step's rho <= G at the entrant's beliefs.
  bool payment_ok = true;
  json payment_rows = json::array();
  for (std::size_t k = 0; k < run.steps.size(); ++k) {
    const double ceiling = sc.cost->value(experts[k].beliefs.span());
    const bool ok = run.steps[k].expected_payment <= ceiling + 1e-9;
    payment_ok = payment_ok && ok;
    payment_rows.push_back(json{{"step", run.steps[k].step},
                                {"expected_payment", run.steps[k].expected_payment},
                                {"cost_at_beliefs", ceiling},
                                {"ok", ok}});
  }
  report.add("payment-identity", payment_ok, json{{"steps", payment_rows}});

  // Truthful movers never lose on the score exchange.
  bool mover_ok = true;
  double worst_mover = 0.0;
  for (std::size_t k = 0; k < run.steps.size(); ++k) {
    if (!experts[k].truthful) continue;
    MarketState probe(sc.cost, policy, *sc.initial, sc.scheme, grid_k);
    const auto h_prev = probe.hyperplane(run.steps[k].incumbent);
    const auto h_new = probe.hyperplane(run.steps[k].report);
    double gain = 0.0;
    for (Index i = 0; i < h_prev.size(); ++i)
      gain += (h_new[i] - h_prev[i]) * experts[k].beliefs[i];
    worst_mover = std::min(worst_mover, gain);
    mover_ok = mover_ok && gain >= -1e-9;
  }
  report.add("honest-mover-gain", mover_ok, json{{"worst", worst_mover}});
  report.note("summary", market_summary_json(run.summary));
  report.note("participation_violations", run.summary.participation_violations);

  const fs::path out_dir = resolve_out_dir(opt);
  std::ofstream events(out_dir / (sc.name + "_events.jsonl"));
  for (const auto& line : market_event_log(run)) events << line.dump() << "\n";
  return finish(report, out_dir, sc.name + "_market");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compensation rules, robustness bounds, cost design, and market runs"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("file", opt.file, "scenario JSON file")->required();
    cmd->add_option("--grid", opt.grid, "override grid resolution");
    cmd->add_option("--tol", opt.tol, "override incentive tolerance");
    cmd->add_option("--seed", opt.seed, "seed for sampled draws");
    cmd->add_option("--out", opt.out_dir, "output directory (default: $DESCORE_OUT_DIR or .)");
  };
  CLI::App* analyze = app.add_subcommand("analyze", "regions, propriety, participation");
  CLI::App* bounds = app.add_subcommand("bounds", "incentive, deviation, and loss bounds");
  CLI::App* design = app.add_subcommand("design", "construct and verify a curvature-matched cost");
  CLI::App* market = app.add_subcommand("market", "sequential market run with ledger");
  for (CLI::App* cmd : {analyze, bounds, design, market}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return cmd_analyze(opt);
    if (bounds->parsed()) return cmd_bounds(opt);
    if (design->parsed()) return cmd_design(opt);
    return cmd_market(opt);
  } catch (const SchemaError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
