#include "doctest.h"

#include <cmath>

#include "descore/market.hpp"

using namespace descore;

namespace {

UtilityMatrix rain_dm() {
  return UtilityMatrix({"park", "banquet"}, {{0.0, 10.0}, {6.0, 6.0}});
}

ExpertBias rain_bias() {
  return UtilityMatrix({"park", "banquet"}, {{0.0, 0.0}, {2.0, 2.0}});
}

CostPtr market_cost() { return shifted_cost(quadratic_cost(), 2.0); }

// e1 moves the seed to 0.30, e2 overshoots to 0.45, e3 lands on 0.38
std::vector<ExpertAgent> rain_experts() {
  return {{"e1", Distribution({0.30, 0.70}), rain_bias(), true},
          {"e2", Distribution({0.45, 0.55}), rain_bias(), true},
          {"e3", Distribution({0.38, 0.62}), rain_bias(), true}};
}

MarketRun rain_run(SubsidyScheme scheme) {
  return run_market(rain_experts(), Distribution({0.5, 0.5}), market_cost(),
                    make_policy(rain_dm()), scheme, 0);
}

}  // namespace

TEST_CASE("scheme names round trip") {
  for (auto scheme :
       {SubsidyScheme::none, SubsidyScheme::full_net_utility, SubsidyScheme::inherent_only})
    CHECK(subsidy_scheme_from(to_string(scheme)) == scheme);
  CHECK_THROWS_AS(subsidy_scheme_from("half"), std::invalid_argument);
}

TEST_CASE("hyperplane matches the per-outcome score") {
  MarketState state(market_cost(), make_policy(rain_dm()), Distribution({0.5, 0.5}),
                    SubsidyScheme::none);
  for (double t : {0.0, 0.3, 0.5, 0.81}) {
    const std::vector<double> p{t, 1 - t};
    const auto h = state.hyperplane(p);
    for (Index i = 0; i < 2; ++i)
      CHECK(h[i] == doctest::Approx(score_from_cost(state.cost(), p, i)).epsilon(1e-12));
  }
}

TEST_CASE("expected payment to the incumbent") {
  // staying put pays the self-score, which is the cost itself
  MarketState self(market_cost(), make_policy(rain_dm()), Distribution({0.3, 0.7}),
                   SubsidyScheme::none);
  CHECK(self.expected_payment(Distribution({0.3, 0.7})) == doctest::Approx(2.58).epsilon(1e-12));

  // the quadratic hyperplane at the uniform forecast is flat
  MarketState uni(market_cost(), make_policy(rain_dm()), Distribution({0.5, 0.5}),
                  SubsidyScheme::none);
  CHECK(uni.expected_payment(Distribution({0.3, 0.7})) == doctest::Approx(2.5).epsilon(1e-12));

  // the payment never exceeds the entrant's own self-score (propriety), with
  // equality only when the forecasts agree
  const SimplexGrid grid(2, 60);
  std::vector<double> p(2), q(2);
  for (Index i = 0; i < grid.size(); ++i) {
    grid.point(i, p);
    MarketState state(market_cost(), make_policy(rain_dm()), grid.distribution(i),
                      SubsidyScheme::none);
    for (Index j = 0; j < grid.size(); ++j) {
      grid.point(j, q);
      const double rho = state.expected_payment(grid.distribution(j));
      const double self_score = state.cost().value(q);
      CHECK(rho <= self_score + 1e-12);
      if (i != j) CHECK(self_score - rho > 0.0);  // strictly convex cost
    }
  }
}

TEST_CASE("three identical-bias experts, subsidized inherent utility") {
  const auto run = rain_run(SubsidyScheme::inherent_only);
  REQUIRE(run.steps.size() == 3);

  // step 1 displaces the free house seed
  CHECK(run.steps[0].incumbent_decision == 1);  // banquet at the uniform seed
  CHECK(run.steps[0].expected_net_gain == doctest::Approx(2.58).epsilon(1e-12));
  CHECK(run.steps[0].inherent_incumbent == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(!run.steps[0].participation_violation);

  // step 2 pays e1; the displaced decision is park, so no inherent subsidy
  CHECK(run.steps[1].incumbent_decision == 0);
  CHECK(run.steps[1].expected_payment == doctest::Approx(2.46).epsilon(1e-12));
  CHECK(run.steps[1].expected_net_gain == doctest::Approx(0.045).epsilon(1e-12));
  CHECK(run.steps[1].inherent_incumbent == 0.0);
  CHECK(!run.steps[1].participation_violation);

  // step 3 displaces a banquet incumbent: gain covers the inherent utility
  // plus the Bregman edge from correcting 0.45 to 0.38
  CHECK(run.steps[2].incumbent_decision == 1);
  CHECK(run.steps[2].expected_payment == doctest::Approx(2.519).epsilon(1e-12));
  CHECK(run.steps[2].expected_net_gain == doctest::Approx(2.0098).epsilon(1e-12));
  CHECK(run.steps[2].inherent_incumbent == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(run.steps[2].expected_net_gain > run.steps[2].inherent_incumbent);
  CHECK(!run.steps[2].participation_violation);
  CHECK(run.summary.participation_violations == 0);

  // realized flows at outcome 0
  CHECK(run.summary.final_owner == "e3");
  CHECK(run.summary.final_decision == 0);  // park at 0.38
  CHECK(run.summary.experts[0].cash == doctest::Approx(2.02).epsilon(1e-12));
  CHECK(run.summary.experts[1].cash == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(run.summary.experts[2].cash == doctest::Approx(1.8362).epsilon(1e-12));
  for (const auto& e : run.summary.experts) CHECK(e.inherent == 0.0);  // park pays no bias

  // outlay = final settlement + the inherent subsidies the house covered
  CHECK(run.summary.house_outlay == doctest::Approx(4.2312).epsilon(1e-12));
  CHECK(run.summary.house_outlay ==
        doctest::Approx(2.2312 + 2.0).epsilon(1e-12));
  CHECK(run.summary.conservation_residual == 0.0);

  // ledger shape: two rows per paid entry plus the settlement
  REQUIRE(run.ledger.size() == 5);
  CHECK(run.ledger[0].kind == "compensation-part");
  CHECK(run.ledger[1].kind == "inherent-subsidy");
  CHECK(run.ledger[4].kind == "settlement");
  CHECK(run.ledger[4].step == 0);
  CHECK(run.ledger[4].payer == "house");
  CHECK(run.ledger[4].payee == "e3");
  CHECK(run.ledger[4].amounts[0] == doctest::Approx(2.2312).epsilon(1e-12));
}

TEST_CASE("unsubsidized run flags the blocked expert") {
  const auto run = rain_run(SubsidyScheme::none);
  // e3 would hand e2 the full net score, including the banquet utility e2
  // only gets because e3's report is about to remove it
  CHECK(run.summary.participation_violations == 1);
  CHECK(run.steps[2].participation_violation);
  CHECK(run.steps[2].expected_net_gain == doctest::Approx(0.0098).epsilon(1e-9));
  CHECK(run.steps[2].expected_net_gain < run.steps[2].inherent_incumbent);
  CHECK(run.summary.house_outlay == doctest::Approx(2.2312).epsilon(1e-12));
  CHECK(run.summary.conservation_residual == 0.0);
  REQUIRE(run.ledger.size() == 3);  // two net-score rows plus the settlement
  CHECK(run.ledger[0].kind == "net-score");
  CHECK(run.ledger[0].payer == "e2");
  CHECK(run.ledger[0].payee == "e1");
}

TEST_CASE("full reimbursement grows the outlay with every entry") {
  const auto run = rain_run(SubsidyScheme::full_net_utility);
  CHECK(run.summary.participation_violations == 0);
  CHECK(run.summary.house_outlay == doctest::Approx(2.02 + 2.395 + 2.2312).epsilon(1e-12));
  CHECK(run.summary.conservation_residual == 0.0);
  // every entrant keeps her full position value
  CHECK(run.steps[1].expected_net_gain == doctest::Approx(2.505).epsilon(1e-12));
  CHECK(run.steps[2].expected_net_gain == doctest::Approx(2.5288).epsilon(1e-12));
}

TEST_CASE("single expert reduces to the one-shot settlement") {
  const std::vector<ExpertAgent> one{{"e1", Distribution({0.30, 0.70}), rain_bias(), true}};
  const auto run = run_market(one, Distribution({0.5, 0.5}), market_cost(),
                              make_policy(rain_dm()), SubsidyScheme::none, 0);
  REQUIRE(run.ledger.size() == 1);  // just the settlement
  const double one_shot = ex_post_settlement(*market_cost(), rain_bias(),
                                             Distribution({0.30, 0.70}), 0, 0);
  CHECK(run.summary.house_outlay == doctest::Approx(one_shot).epsilon(1e-12));
  CHECK(run.summary.house_outlay == doctest::Approx(2.02).epsilon(1e-12));
  CHECK(run.summary.experts[0].cash == doctest::Approx(2.02).epsilon(1e-12));
  CHECK(run.summary.conservation_residual == 0.0);
}

TEST_CASE("matching the incumbent earns nothing") {
  std::vector<ExpertAgent> experts{
      {"e1", Distribution({0.30, 0.70}), rain_bias(), true},
      {"e2", Distribution({0.30, 0.70}), rain_bias(), true}};
  const auto run = run_market(experts, Distribution({0.5, 0.5}), market_cost(),
                              make_policy(rain_dm()), SubsidyScheme::none, 0);
  CHECK(run.steps[1].expected_net_gain == 0.0);
}

TEST_CASE("honest movers gain the Bregman edge") {
  MarketState state(market_cost(), make_policy(rain_dm()), Distribution({0.5, 0.5}),
                    SubsidyScheme::none);
  const ExpertAgent a{"a", Distribution({0.3, 0.7}), rain_bias(), true};
  state.msr_step(a);
  const SimplexGrid grid(2, 80);
  for (Index j = 0; j < grid.size(); ++j) {
    const auto q = grid.distribution(j);
    const double edge =
        dot(state.hyperplane(q.span()), q.span()) - state.expected_payment(q);
    CHECK(edge >= -1e-12);
    const double dist = std::abs(q[0] - 0.3);
    if (dist > 1e-9) CHECK(edge == doctest::Approx(2 * dist * dist).epsilon(1e-9));
  }
}

TEST_CASE("self-interested entrant still reports the snapped truth") {
  // the position is worth the full per-outcome score, so propriety keeps the
  // grid best response at the entrant's own beliefs
  MarketState state(market_cost(), make_policy(rain_dm()), Distribution({0.5, 0.5}),
                    SubsidyScheme::none, 1000);
  const ExpertAgent shrewd{"s", Distribution({0.381, 0.619}), rain_bias(), false};
  const auto step = state.msr_step(shrewd);
  CHECK(step.report[0] == doctest::Approx(0.381).epsilon(1e-12));
  CHECK(state.incumbent_owner() == "s");
}

TEST_CASE("market guards") {
  MarketState state(market_cost(), make_policy(rain_dm()), Distribution({0.5, 0.5}),
                    SubsidyScheme::none);
  const ExpertAgent bad_beliefs{"x", Distribution({0.2, 0.3, 0.5}), rain_bias(), true};
  CHECK_THROWS_AS(state.msr_step(bad_beliefs), std::invalid_argument);
  const ExpertAgent bad_bias{"x", Distribution({0.5, 0.5}),
                             UtilityMatrix::unlabeled({{0.0, 0.0}}), true};
  CHECK_THROWS_AS(state.msr_step(bad_bias), std::invalid_argument);
  state.settle();
  CHECK_THROWS_AS(state.settle(), std::logic_error);
  const ExpertAgent late{"x", Distribution({0.5, 0.5}), rain_bias(), true};
  CHECK_THROWS_AS(state.msr_step(late), std::logic_error);
  CHECK_THROWS_AS(run_market(rain_experts(), Distribution({0.5, 0.5}), market_cost(),
                             make_policy(rain_dm()), SubsidyScheme::none, 2),
                  std::invalid_argument);
}

TEST_CASE("empty market settles without flows") {
  const auto run = run_market({}, Distribution({0.5, 0.5}), market_cost(),
                              make_policy(rain_dm()), SubsidyScheme::inherent_only, 1);
  CHECK(run.ledger.empty());
  CHECK(run.summary.house_outlay == 0.0);
  CHECK(run.summary.final_owner == "house");
}

TEST_CASE("ordering by bias strength") {
  const ExpertBias strong = UtilityMatrix::unlabeled({{3.0, 3.0}, {5.0, 5.0}});
  const ExpertBias mid = UtilityMatrix::unlabeled({{2.0, 2.0}, {2.5, 2.5}});
  const ExpertBias weak = UtilityMatrix::unlabeled({{0.0, 0.0}, {1.0, 1.0}});
  std::vector<ExpertAgent> chain{{"w", Distribution({0.5, 0.5}), weak, true},
                                 {"m", Distribution({0.5, 0.5}), mid, true},
                                 {"s", Distribution({0.5, 0.5}), strong, true}};
  const auto ordered = order_by_bias(chain);
  REQUIRE(ordered.size() == 3);
  CHECK(ordered[0].id == "s");
  CHECK(ordered[1].id == "m");
  CHECK(ordered[2].id == "w");

  // ties keep input order
  std::vector<ExpertAgent> tied{{"a", Distribution({0.5, 0.5}), mid, true},
                                {"b", Distribution({0.5, 0.5}), mid, true}};
  const auto kept = order_by_bias(tied);
  CHECK(kept[0].id == "a");
  CHECK(kept[1].id == "b");
}

TEST_CASE("strong stakes first avoids participation violations") {
  const ExpertBias strong = UtilityMatrix::unlabeled({{3.0, 3.0}, {5.0, 5.0}});
  const ExpertBias weak = UtilityMatrix::unlabeled({{0.0, 0.0}, {1.0, 1.0}});
  // lift the cost so even the strong expert's first move beats her stake
  const CostPtr cost = shifted_cost(quadratic_cost(), 6.0);
  std::vector<ExpertAgent> experts{{"strong", Distribution({0.30, 0.70}), strong, true},
                                   {"weak", Distribution({0.45, 0.55}), weak, true}};

  const auto good = run_market(order_by_bias(experts), Distribution({0.5, 0.5}), cost,
                               make_policy(rain_dm()), SubsidyScheme::inherent_only, 0);
  CHECK(good.summary.participation_violations == 0);

  std::vector<ExpertAgent> reversed{{"weak", Distribution({0.30, 0.70}), weak, true},
                                    {"strong", Distribution({0.45, 0.55}), strong, true}};
  const auto bad = run_market(reversed, Distribution({0.5, 0.5}), cost,
                              make_policy(rain_dm()), SubsidyScheme::none, 0);
  CHECK(bad.summary.participation_violations >= 1);
  CHECK(bad.steps[1].participation_violation);
  CHECK(good.summary.conservation_residual == 0.0);
  CHECK(bad.summary.conservation_residual == 0.0);
}

TEST_CASE("full subsidy outlay grows linearly in the expert count") {
  // constant bias so every settlement and subsidy is worth the same
  const ExpertBias flat = UtilityMatrix::unlabeled({{2.0, 2.0}, {2.0, 2.0}});
  auto family = [&](int n) {
    std::vector<ExpertAgent> experts;
    for (int i = 0; i < n; ++i) {
      const bool even = i % 2 == 0;
      experts.push_back({"e" + std::to_string(i),
                         Distribution(even ? std::vector<double>{0.30, 0.70}
                                           : std::vector<double>{0.45, 0.55}),
                         flat, true});
    }
    return run_market(experts, Distribution({0.5, 0.5}), market_cost(),
                      make_policy(rain_dm()), SubsidyScheme::full_net_utility, 0);
  };
  const auto two = family(2);
  const auto four = family(4);
  // one reimbursement per paid entry plus the settlement 2.395 - 2.0
  CHECK(two.summary.house_outlay == doctest::Approx(2.02 + 0.395).epsilon(1e-12));
  CHECK(four.summary.house_outlay ==
        doctest::Approx(2.02 + 2.395 + 2.02 + 0.395).epsilon(1e-12));
  const double min_inherent = 2.0;
  CHECK(four.summary.house_outlay >= two.summary.house_outlay + 2 * min_inherent);
  CHECK(four.summary.conservation_residual == 0.0);
}
