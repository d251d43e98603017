#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "descore/serialize.hpp"

namespace py = pybind11;
using namespace descore;
using nlohmann::json;

namespace {

// pybind11 holders can't be shared_ptr<const T>, so the module hands out a
// thin wrapper around the shared cost pointer instead.
struct CostHandle {
  CostPtr ptr;
};

py::dict propriety_dict(const ProprietyVerdict& v) {
  py::dict d;
  d["ok"] = v.ok;
  d["proper"] = v.proper;
  d["strict"] = v.strict;
  d["min_gap"] = v.min_gap;
  d["min_gap_two_steps"] = v.min_gap_two_steps;
  if (v.witness) {
    py::dict w;
    w["belief"] = v.witness->belief;
    w["report"] = v.witness->report;
    w["gap"] = v.witness->gap;
    d["witness"] = w;
  }
  return d;
}

py::dict participation_dict(const ParticipationVerdict& v) {
  py::dict d;
  d["ok"] = v.ok;
  d["advisory"] = v.advisory;
  d["worst_margin"] = v.worst;
  d["witness"] = v.witness;
  d["max_expected_pay"] = v.max_expected_pay;
  d["mean_expected_pay"] = v.mean_expected_pay;
  return d;
}

py::dict sweep_dict(const SweepCheck& c) {
  py::dict d;
  d["ok"] = c.ok;
  d["status"] = c.status;
  d["bound"] = c.bound;
  d["observed"] = c.observed;
  d["witness"] = c.witness;
  return d;
}

EstimatePolicy estimate_from(const py::object& est) {
  if (py::isinstance<py::float_>(est) || py::isinstance<py::int_>(est))
    return est.cast<double>();
  return est.cast<UtilityMatrix>();
}

RuleKind rule_kind_from(const std::string& s) {
  if (s == "consistent") return RuleKind::consistent;
  if (s == "uniform") return RuleKind::uniform;
  throw std::invalid_argument("rule kind must be 'consistent' or 'uniform'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "compensation rules for self-interested experts";

  py::class_<Distribution>(m, "Distribution")
      .def(py::init<std::vector<double>>())
      .def("__len__", &Distribution::size)
      .def("__getitem__", [](const Distribution& d, Index i) {
        if (i >= d.size()) throw py::index_error();
        return d[i];
      })
      .def_property_readonly("probs", &Distribution::probs);
  py::implicitly_convertible<py::sequence, Distribution>();

  py::class_<UtilityMatrix>(m, "UtilityMatrix")
      .def(py::init([](std::vector<std::vector<double>> rows) {
        return UtilityMatrix::unlabeled(std::move(rows));
      }))
      .def(py::init<std::vector<std::string>, std::vector<std::vector<double>>>())
      .def_property_readonly("decisions", &UtilityMatrix::decisions)
      .def_property_readonly("outcomes", &UtilityMatrix::outcomes)
      .def_property_readonly("labels", &UtilityMatrix::labels)
      .def("value", &UtilityMatrix::value)
      .def("row", [](const UtilityMatrix& u, Index d) {
        if (d >= u.decisions()) throw py::index_error();
        const auto r = u.row(d);
        return std::vector<double>(r.begin(), r.end());
      });

  py::class_<DecisionPolicy>(m, "DecisionPolicy")
      .def("decide", [](const DecisionPolicy& p, const Distribution& d) { return p.decide(d); })
      .def_property_readonly("utility", &DecisionPolicy::utility);
  m.def("make_policy", [](const UtilityMatrix& u) { return make_policy(u); });

  py::class_<CostHandle>(m, "Cost")
      .def("value",
           [](const CostHandle& c, const std::vector<double>& p) { return c.ptr->value(p); })
      .def("subgradient",
           [](const CostHandle& c, const std::vector<double>& p) { return c.ptr->subgradient(p); })
      .def("score", [](const CostHandle& c, const std::vector<double>& p, Index i) {
        return score_from_cost(*c.ptr, p, i);
      })
      .def("spec_json", [](const CostHandle& c) { return c.ptr->spec().dump(); })
      .def_property_readonly("name", [](const CostHandle& c) { return c.ptr->name(); })
      .def_property_readonly("curvature_factor", [](const CostHandle& c) -> py::object {
        if (auto f = c.ptr->curvature_factor()) return py::float_(*f);
        return py::none();
      });
  m.def("quadratic_cost", [] { return CostHandle{quadratic_cost()}; });
  m.def("log_cost", [] { return CostHandle{log_cost()}; });
  m.def("linear_cost", [](std::vector<double> w) { return CostHandle{linear_cost(std::move(w))}; });
  m.def("shifted_cost", [](const CostHandle& base, double offset) {
    return CostHandle{shifted_cost(base.ptr, offset)};
  });
  m.def("scaled_cost", [](const CostHandle& base, double factor) {
    return CostHandle{scaled_cost(base.ptr, factor)};
  });
  m.def("pwlc_cost", [](std::vector<std::vector<double>> lines) {
    return CostHandle{pwlc_cost(std::move(lines))};
  });
  m.def("cost_from_spec", [](const std::string& spec) {
    return CostHandle{cost_from_spec(json::parse(spec))};
  });

  m.def(
      "check_proper",
      [](const CostHandle& g, std::size_t outcomes, int resolution, bool strict) {
        return propriety_dict(
            check_proper(rule_from(g.ptr, outcomes), SimplexGrid(outcomes, resolution), strict));
      },
      py::arg("cost"), py::arg("outcomes"), py::arg("resolution"), py::arg("strict") = false);

  py::class_<CompensationRule>(m, "CompensationRule")
      .def("pay", [](const CompensationRule& r, const std::vector<double>& report, Index outcome) {
        return r.pay(report, outcome);
      })
      .def("expected_pay",
           [](const CompensationRule& r, const Distribution& p) { return r.expected_pay(p); });
  m.def("gap_rule", [](const UtilityMatrix& bias, const UtilityMatrix& dm) {
    return gap_rule(bias, make_policy(dm));
  });
  m.def("rule_from_cost",
        [](const CostHandle& cost, const UtilityMatrix& estimate, const UtilityMatrix& dm) {
          return rule_from_cost(cost.ptr, estimate, make_policy(dm));
        });
  m.def(
      "check_proper_compensation",
      [](const CompensationRule& rule, const UtilityMatrix& bias, int resolution, bool strict) {
        return propriety_dict(
            check_proper_compensation(rule, bias, SimplexGrid(bias.outcomes(), resolution), strict));
      },
      py::arg("rule"), py::arg("true_bias"), py::arg("resolution"), py::arg("strict") = false);
  m.def("check_weak_participation",
        [](const CompensationRule& rule, const UtilityMatrix& bias, int resolution) {
          return participation_dict(
              check_weak_participation(rule, bias, SimplexGrid(bias.outcomes(), resolution)));
        });
  m.def("check_strong_participation",
        [](const CompensationRule& rule, const UtilityMatrix& bias, int resolution) {
          return participation_dict(
              check_strong_participation(rule, bias, SimplexGrid(bias.outcomes(), resolution)));
        });
  m.def("utility_gap", &utility_gap);

  py::class_<UncertaintyBox>(m, "UncertaintyBox")
      .def(py::init<UtilityMatrix, UtilityMatrix>())
      .def_property_readonly("delta", &UncertaintyBox::delta)
      .def_property_readonly("lower", &UncertaintyBox::lower)
      .def_property_readonly("upper", &UncertaintyBox::upper);
  m.def("uniform_estimate", &uniform_estimate);

  m.def(
      "incentive_bound",
      [](const UtilityMatrix& dm, const UtilityMatrix& bias, const UncertaintyBox& box,
         const CostHandle& cost, const py::object& estimate, int resolution) {
        Scenario sc(dm, bias, box, cost.ptr, estimate_from(estimate));
        const BestResponseSweep sweep(sc, SimplexGrid(dm.outcomes(), resolution));
        return sweep_dict(incentive_bound_check(sweep));
      },
      py::arg("dm"), py::arg("true_bias"), py::arg("box"), py::arg("cost"), py::arg("estimate"),
      py::arg("resolution"));

  py::class_<CurvatureProfile>(m, "CurvatureProfile")
      .def_property_readonly("sigma", [](const CurvatureProfile& p) { return p.sigma; })
      .def_property_readonly("delta", [](const CurvatureProfile& p) { return p.delta; })
      .def_property_readonly("boundaries", [](const CurvatureProfile& p) {
        py::list out;
        for (const auto& b : p.boundaries) {
          py::dict d;
          d["lo"] = b.lo;
          d["hi"] = b.hi;
          d["tau"] = b.tau;
          d["pair_gradient"] = b.pair_gradient;
          d["m_factor"] = b.m_factor;
          d["eps_l2"] = b.eps_l2;
          d["eps_param"] = b.eps_param;
          out.append(d);
        }
        return out;
      });
  m.def(
      "required_profile",
      [](const UtilityMatrix& dm, const UncertaintyBox& box, double sigma, const std::string& kind,
         double eta) { return required_profile(dm, box, sigma, rule_kind_from(kind), eta); },
      py::arg("dm"), py::arg("box"), py::arg("sigma"), py::arg("kind") = "consistent",
      py::arg("eta") = kDefaultAmbientCurvature);

  py::class_<DesignedCost>(m, "DesignedCost")
      .def_property_readonly("cost", [](const DesignedCost& d) { return CostHandle{d.cost}; })
      .def_property_readonly("profile", [](const DesignedCost& d) { return d.profile; });
  m.def(
      "construct_cost",
      [](const CurvatureProfile& profile, const std::string& base, const UtilityMatrix& bias) {
        if (base != "strong" && base != "weak")
          throw std::invalid_argument("base must be 'strong' or 'weak'");
        return construct_cost(profile, base == "strong" ? BaseKind::strong : BaseKind::weak, bias);
      },
      py::arg("profile"), py::arg("base"), py::arg("bias"));
  m.def(
      "verify_design",
      [](const DesignedCost& designed, const UtilityMatrix& dm, const UncertaintyBox& box,
         double sigma, int resolution, unsigned seed) {
        const DesignVerdict v = verify_design(designed, dm, box, sigma, resolution, seed);
        py::dict d;
        d["ok"] = v.ok;
        d["status"] = v.status;
        d["worst_loss"] = v.worst_loss;
        d["sigma"] = v.sigma;
        py::list checks;
        for (const auto& c : v.checks) {
          py::dict cd;
          cd["scenario"] = c.scenario;
          cd["status"] = c.report.status;
          cd["worst_loss"] = c.report.worst_loss;
          checks.append(cd);
        }
        d["checks"] = checks;
        return d;
      },
      py::arg("designed"), py::arg("dm"), py::arg("box"), py::arg("sigma"),
      py::arg("resolution") = 1000, py::arg("seed") = 2023);

  m.def(
      "run_market",
      [](const py::list& experts, const std::vector<double>& initial, const CostHandle& cost,
         const UtilityMatrix& dm, const std::string& scheme, Index realized_outcome,
         int resolution) {
        std::vector<ExpertAgent> agents;
        for (const auto& e : experts) {
          py::dict d = e.cast<py::dict>();
          ExpertAgent agent{d["id"].cast<std::string>(),
                            Distribution(d["beliefs"].cast<std::vector<double>>()),
                            d["bias"].cast<UtilityMatrix>(),
                            d.contains("truthful") ? d["truthful"].cast<bool>() : true};
          agents.push_back(std::move(agent));
        }
        const MarketRun run =
            run_market(agents, Distribution(initial), cost.ptr, make_policy(dm),
                       subsidy_scheme_from(scheme), realized_outcome, resolution);
        py::dict out;
        out["final_forecast"] = run.summary.final_forecast;
        out["final_decision"] = run.summary.final_decision;
        out["house_outlay"] = run.summary.house_outlay;
        out["conservation_residual"] = run.summary.conservation_residual;
        out["participation_violations"] = run.summary.participation_violations;
        py::list steps;
        for (const auto& s : run.steps) {
          py::dict sd;
          sd["expert"] = s.expert;
          sd["report"] = s.report;
          sd["expected_payment"] = s.expected_payment;
          sd["expected_net_gain"] = s.expected_net_gain;
          sd["inherent_incumbent"] = s.inherent_incumbent;
          sd["participation_violation"] = s.participation_violation;
          steps.append(sd);
        }
        out["steps"] = steps;
        py::list cash;
        for (const auto& e : run.summary.experts) {
          py::dict ed;
          ed["id"] = e.id;
          ed["cash"] = e.cash;
          ed["inherent"] = e.inherent;
          ed["net"] = e.net;
          cash.append(ed);
        }
        out["experts"] = cash;
        return out;
      },
      py::arg("experts"), py::arg("initial"), py::arg("cost"), py::arg("dm"), py::arg("scheme"),
      py::arg("realized_outcome"), py::arg("resolution") = 1000);
}
