#pragma once

#include <string>
#include <vector>

#include "descore/compensation.hpp"
#include "descore/scoring.hpp"
#include "descore/simplex.hpp"

namespace descore {

/// One trader: may move the shared forecast exactly once.
struct ExpertAgent {
  std::string id;
  Distribution beliefs;
  ExpertBias bias;
  bool truthful = true;
};

/// House subsidy added to the entrant-pays-predecessor flow:
///   none             entrant pays the full per-outcome net score H
///   full_net_utility entrant pays H and the house reimburses the entrant
///   inherent_only    entrant pays the compensation part H - b, the house
///                    covers the displaced expert's inherent utility b
enum class SubsidyScheme { none, full_net_utility, inherent_only };

std::string to_string(SubsidyScheme scheme);
SubsidyScheme subsidy_scheme_from(const std::string& name);

/// Outcome-contingent obligation between two parties ("house" or expert id).
struct PaymentRecord {
  int step = 0;  // 1-based entry step; 0 marks the final settlement
  std::string payer;
  std::string payee;
  std::vector<double> amounts;  // one entry per outcome
  std::string kind;  // net-score | compensation-part | inherent-subsidy | reimbursement | settlement
};

struct MarketStep {
  int step = 0;
  std::string expert;
  std::vector<double> incumbent;  // forecast displaced by this entry
  std::vector<double> report;
  Index incumbent_decision = 0;
  Index induced_decision = 0;
  double expected_payment = 0.0;     // H_{incumbent} . beliefs
  double expected_net_gain = 0.0;    // expected receipts minus payment under own beliefs
  double inherent_incumbent = 0.0;   // entrant's utility if the incumbent decision stood
  bool participation_violation = false;  // net gain below inherent_incumbent
};

/// Sequential market over one shared cost function.  Entrants displace the
/// incumbent forecast, paying per the subsidy scheme; the house seeds the
/// initial forecast for free and settles the final position.
class MarketState {
 public:
  MarketState(CostPtr cost, DecisionPolicy policy, Distribution initial, SubsidyScheme scheme,
              int grid_resolution = 1000);

  const Distribution& incumbent() const { return incumbent_; }
  const std::string& incumbent_owner() const { return owner_; }
  SubsidyScheme scheme() const { return scheme_; }
  const DecisionPolicy& policy() const { return policy_; }
  const Cost& cost() const { return *cost_; }
  const std::vector<PaymentRecord>& ledger() const { return ledger_; }
  const std::vector<MarketStep>& steps() const { return steps_; }

  /// Score hyperplane of the shared cost at p: H_i = G(p) - G*(p).p + G*_i(p).
  std::vector<double> hyperplane(std::span<const double> p) const;
  /// Expected payment of an entrant holding `beliefs` to the incumbent owner
  /// under the entrant-pays-net-score flow: H_{incumbent} . beliefs.
  double expected_payment(const Distribution& beliefs) const;

  /// One entry: records obligations, replaces the incumbent forecast with the
  /// entrant's report (beliefs when truthful, else the grid best response).
  MarketStep msr_step(const ExpertAgent& entrant);

  /// House pays the final owner the compensation part of her net score; the
  /// inherent part arrives through the decision itself.
  void settle();

 private:
  CostPtr cost_;
  DecisionPolicy policy_;
  Distribution incumbent_;
  std::string owner_;  // "house" until the first entry
  ExpertBias owner_bias_;
  SubsidyScheme scheme_;
  int grid_resolution_;
  bool settled_ = false;
  std::vector<PaymentRecord> ledger_;
  std::vector<MarketStep> steps_;
};

struct ExpertOutcome {
  std::string id;
  double cash = 0.0;      // signed realized transfers
  double inherent = 0.0;  // bias utility from the final decision at the realized outcome
  double net = 0.0;       // cash + inherent
};

struct MarketSummary {
  std::vector<double> final_forecast;
  std::string final_owner;
  Index final_decision = 0;
  Index realized_outcome = 0;
  double house_outlay = 0.0;              // house's net realized cash out
  double conservation_residual = 0.0;     // sum of every party's balance; zero when flows pair up
  std::size_t participation_violations = 0;
  std::vector<ExpertOutcome> experts;
};

struct MarketRun {
  std::vector<MarketStep> steps;
  std::vector<PaymentRecord> ledger;
  MarketSummary summary;
};

/// Runs every expert through the market in order, settles at the realized
/// outcome, and accounts all flows.
MarketRun run_market(const std::vector<ExpertAgent>& experts, const Distribution& initial,
                     CostPtr cost, const DecisionPolicy& policy, SubsidyScheme scheme,
                     Index realized_outcome, int grid_resolution = 1000);

/// Stable descending order by scalar bias strength (best row utility against
/// the uniform distribution); eliciting the strongest stakes first.
std::vector<ExpertAgent> order_by_bias(std::vector<ExpertAgent> experts);

}  // namespace descore
