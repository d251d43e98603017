#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "descore/design.hpp"
#include "descore/market.hpp"
#include "descore/uncertainty.hpp"

namespace descore {

/// Input file fails validation; message names the offending field.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_double(double x);  // %.17g

nlohmann::json matrix_to_json(const UtilityMatrix& u);
UtilityMatrix matrix_from_json(const nlohmann::json& j, const std::string& field);
Distribution distribution_from_json(const nlohmann::json& j, const std::string& field);

/// Inverse of Cost::spec(): kinds quadratic, log, linear, shifted, scaled,
/// sum, pwlc, designed.
CostPtr cost_from_spec(const nlohmann::json& spec, const std::string& field = "cost");

/// Parsed experiment input.  One schema serves all subcommands; each command
/// validates the presence of the sections it needs.
struct ScenarioFile {
  int version = 1;
  std::string name;
  std::string experiment;  // optional selector hint: analyze|bounds|design|market
  std::optional<UtilityMatrix> dm;
  std::optional<ExpertBias> bias;
  std::optional<UncertaintyBox> box;
  std::optional<EstimatePolicy> estimate;
  CostPtr cost;  // may be null for design inputs
  int grid_k2 = 1000;
  int grid_k3 = 120;
  double incentive_tol = kIncentiveTol;
  // design section
  std::optional<double> sigma;
  RuleKind rule_kind = RuleKind::consistent;
  BaseKind base_kind = BaseKind::strong;
  double eta = kDefaultAmbientCurvature;
  // market section
  std::optional<Distribution> initial;
  SubsidyScheme scheme = SubsidyScheme::none;
  std::vector<ExpertAgent> experts;
  std::optional<Index> realized_outcome;
  bool order_experts_by_bias = false;
  nlohmann::json raw;  // verbatim input, echoed into reports
};

ScenarioFile parse_scenario(const nlohmann::json& j);
ScenarioFile load_scenario(const std::string& path);

/// Check-by-check result sheet.  Serialized deterministically; the timestamp
/// is the only run-varying field and can be omitted for comparisons.
class Report {
 public:
  Report(std::string experiment, std::string scenario_name);

  void echo_inputs(nlohmann::json inputs) { inputs_ = std::move(inputs); }
  void add(const std::string& check, bool pass, nlohmann::json details = nlohmann::json::object());
  void note(const std::string& key, nlohmann::json value);  // free-form summary extras

  bool all_pass() const { return failures_ == 0; }
  std::size_t failures() const { return failures_; }
  std::size_t size() const { return checks_.size(); }

  nlohmann::json to_json(bool with_timestamp = true) const;
  void write(const std::string& path, bool with_timestamp = true) const;

 private:
  std::string experiment_, scenario_;
  nlohmann::json inputs_;
  nlohmann::json checks_ = nlohmann::json::array();
  nlohmann::json notes_ = nlohmann::json::object();
  std::size_t failures_ = 0;
};

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Event-log lines for a market run: one object per step with its recorded
/// obligations, then one settlement line.
std::vector<nlohmann::json> market_event_log(const MarketRun& run);
nlohmann::json market_summary_json(const MarketSummary& summary);

}  // namespace descore
