#include "descore/serialize.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

namespace descore {

using nlohmann::json;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

const json& require(const json& j, const std::string& key, const std::string& field) {
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(field + ": missing required key '" + key + "'");
  return *it;
}

double number_at(const json& j, const std::string& field) {
  if (!j.is_number()) throw SchemaError(field + ": expected a number");
  return j.get<double>();
}

std::vector<double> vector_at(const json& j, const std::string& field) {
  if (!j.is_array()) throw SchemaError(field + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(number_at(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

json matrix_to_json(const UtilityMatrix& u) {
  json rows = json::array();
  for (Index d = 0; d < u.decisions(); ++d) {
    json row = json::array();
    for (Index i = 0; i < u.outcomes(); ++i) row.push_back(u.value(d, i));
    rows.push_back(std::move(row));
  }
  return json{{"labels", u.labels()}, {"rows", rows}};
}

UtilityMatrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_object()) throw SchemaError(field + ": expected an object with 'rows'");
  const json& jrows = require(j, "rows", field);
  if (!jrows.is_array() || jrows.empty())
    throw SchemaError(field + ".rows: expected a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < jrows.size(); ++r) {
    rows.push_back(vector_at(jrows[r], field + ".rows[" + std::to_string(r) + "]"));
    if (rows.back().size() != rows.front().size())
      throw SchemaError(field + ".rows[" + std::to_string(r) + "]: expected " +
                        std::to_string(rows.front().size()) + " entries, got " +
                        std::to_string(rows.back().size()));
  }
  std::vector<std::string> labels;
  if (const auto it = j.find("labels"); it != j.end()) {
    if (!it->is_array() || it->size() != rows.size())
      throw SchemaError(field + ".labels: expected one label per row");
    for (std::size_t r = 0; r < it->size(); ++r) {
      if (!(*it)[r].is_string())
        throw SchemaError(field + ".labels[" + std::to_string(r) + "]: expected a string");
      labels.push_back((*it)[r].get<std::string>());
    }
    try {
      return UtilityMatrix(std::move(labels), std::move(rows));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(field + ": " + e.what());
    }
  }
  try {
    return UtilityMatrix::unlabeled(std::move(rows));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(field + ": " + e.what());
  }
}

Distribution distribution_from_json(const json& j, const std::string& field) {
  try {
    return Distribution(vector_at(j, field));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(field + ": " + e.what());
  }
}

CostPtr cost_from_spec(const json& spec, const std::string& field) {
  if (!spec.is_object()) throw SchemaError(field + ": expected an object with 'kind'");
  const json& jk = require(spec, "kind", field);
  if (!jk.is_string()) throw SchemaError(field + ".kind: expected a string");
  const std::string kind = jk.get<std::string>();
  try {
    if (kind == "quadratic") return quadratic_cost();
    if (kind == "log") return log_cost();
    if (kind == "linear") return linear_cost(vector_at(require(spec, "weights", field), field + ".weights"));
    if (kind == "shifted")
      return shifted_cost(cost_from_spec(require(spec, "base", field), field + ".base"),
                          number_at(require(spec, "offset", field), field + ".offset"));
    if (kind == "scaled")
      return scaled_cost(cost_from_spec(require(spec, "base", field), field + ".base"),
                         number_at(require(spec, "factor", field), field + ".factor"));
    if (kind == "sum") {
      const json& jt = require(spec, "terms", field);
      if (!jt.is_array() || jt.empty()) throw SchemaError(field + ".terms: expected a non-empty array");
      std::vector<CostPtr> terms;
      for (std::size_t i = 0; i < jt.size(); ++i)
        terms.push_back(cost_from_spec(jt[i], field + ".terms[" + std::to_string(i) + "]"));
      return sum_cost(std::move(terms));
    }
    if (kind == "pwlc") {
      const json& jp = require(spec, "planes", field);
      if (!jp.is_array() || jp.empty()) throw SchemaError(field + ".planes: expected a non-empty array");
      std::vector<std::vector<double>> planes;
      for (std::size_t i = 0; i < jp.size(); ++i)
        planes.push_back(vector_at(jp[i], field + ".planes[" + std::to_string(i) + "]"));
      return pwlc_cost(std::move(planes));
    }
    if (kind == "designed") {
      std::vector<double> knots = vector_at(require(spec, "knots", field), field + ".knots");
      const json& jp = require(spec, "pieces", field);
      if (!jp.is_array()) throw SchemaError(field + ".pieces: expected an array");
      std::vector<std::array<double, 3>> pieces;
      for (std::size_t i = 0; i < jp.size(); ++i) {
        const auto v = vector_at(jp[i], field + ".pieces[" + std::to_string(i) + "]");
        if (v.size() != 3)
          throw SchemaError(field + ".pieces[" + std::to_string(i) + "]: expected [a, b, q]");
        pieces.push_back({v[0], v[1], v[2]});
      }
      return std::make_shared<PiecewiseQuadraticCost>(std::move(knots), std::move(pieces));
    }
  } catch (const std::invalid_argument& e) {
    throw SchemaError(field + ": " + e.what());
  }
  throw SchemaError(field + ".kind: unknown cost kind '" + kind + "'");
}

ScenarioFile parse_scenario(const json& j) {
  if (!j.is_object()) throw SchemaError("scenario: expected a JSON object");
  ScenarioFile sc;
  sc.raw = j;
  if (const auto it = j.find("version"); it != j.end()) {
    if (!it->is_number_integer()) throw SchemaError("version: expected an integer");
    sc.version = it->get<int>();
    if (sc.version != 1) throw SchemaError("version: unsupported version " + std::to_string(sc.version));
  }
  if (const auto it = j.find("name"); it != j.end()) {
    if (!it->is_string()) throw SchemaError("name: expected a string");
    sc.name = it->get<std::string>();
  }
  if (const auto it = j.find("experiment"); it != j.end()) {
    if (!it->is_string()) throw SchemaError("experiment: expected a string");
    sc.experiment = it->get<std::string>();
  }
  if (const auto it = j.find("dm"); it != j.end()) sc.dm = matrix_from_json(*it, "dm");
  if (const auto it = j.find("bias"); it != j.end()) sc.bias = matrix_from_json(*it, "bias");
  if (const auto it = j.find("box"); it != j.end()) {
    try {
      sc.box = UncertaintyBox(matrix_from_json(require(*it, "lower", "box"), "box.lower"),
                              matrix_from_json(require(*it, "upper", "box"), "box.upper"));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(std::string("box: ") + e.what());
    }
  }
  if (const auto it = j.find("estimate"); it != j.end()) {
    if (it->is_object() && it->contains("uniform_lambda"))
      sc.estimate = number_at((*it)["uniform_lambda"], "estimate.uniform_lambda");
    else if (it->is_object() && it->contains("matrix"))
      sc.estimate = matrix_from_json((*it)["matrix"], "estimate.matrix");
    else
      throw SchemaError("estimate: expected {\"uniform_lambda\": x} or {\"matrix\": {...}}");
  }
  if (const auto it = j.find("cost"); it != j.end()) sc.cost = cost_from_spec(*it, "cost");
  if (const auto it = j.find("grid"); it != j.end()) {
    if (!it->is_object()) throw SchemaError("grid: expected an object");
    if (it->contains("k2")) {
      sc.grid_k2 = static_cast<int>(number_at((*it)["k2"], "grid.k2"));
      if (sc.grid_k2 < 1) throw SchemaError("grid.k2: must be positive");
    }
    if (it->contains("k3")) {
      sc.grid_k3 = static_cast<int>(number_at((*it)["k3"], "grid.k3"));
      if (sc.grid_k3 < 1) throw SchemaError("grid.k3: must be positive");
    }
  }
  if (const auto it = j.find("tolerances"); it != j.end()) {
    if (!it->is_object()) throw SchemaError("tolerances: expected an object");
    if (it->contains("incentive"))
      sc.incentive_tol = number_at((*it)["incentive"], "tolerances.incentive");
  }
  if (const auto it = j.find("sigma"); it != j.end()) sc.sigma = number_at(*it, "sigma");
  if (const auto it = j.find("rule_kind"); it != j.end()) {
    const std::string v = it->is_string() ? it->get<std::string>() : "";
    if (v == "consistent") sc.rule_kind = RuleKind::consistent;
    else if (v == "uniform") sc.rule_kind = RuleKind::uniform;
    else throw SchemaError("rule_kind: expected 'consistent' or 'uniform'");
  }
  if (const auto it = j.find("base_kind"); it != j.end()) {
    const std::string v = it->is_string() ? it->get<std::string>() : "";
    if (v == "strong") sc.base_kind = BaseKind::strong;
    else if (v == "weak") sc.base_kind = BaseKind::weak;
    else throw SchemaError("base_kind: expected 'strong' or 'weak'");
  }
  if (const auto it = j.find("eta"); it != j.end()) {
    sc.eta = number_at(*it, "eta");
    if (sc.eta < 0.0) throw SchemaError("eta: must be nonnegative");
  }
  if (const auto it = j.find("initial"); it != j.end())
    sc.initial = distribution_from_json(*it, "initial");
  if (const auto it = j.find("scheme"); it != j.end()) {
    if (!it->is_string()) throw SchemaError("scheme: expected a string");
    try {
      sc.scheme = subsidy_scheme_from(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw SchemaError(std::string("scheme: ") + e.what());
    }
  }
  if (const auto it = j.find("realized_outcome"); it != j.end()) {
    if (!it->is_number_integer() || it->get<long long>() < 0)
      throw SchemaError("realized_outcome: expected a nonnegative integer");
    sc.realized_outcome = it->get<Index>();
  }
  if (const auto it = j.find("order_by_bias"); it != j.end()) {
    if (!it->is_boolean()) throw SchemaError("order_by_bias: expected a boolean");
    sc.order_experts_by_bias = it->get<bool>();
  }
  if (const auto it = j.find("experts"); it != j.end()) {
    if (!it->is_array()) throw SchemaError("experts: expected an array");
    for (std::size_t e = 0; e < it->size(); ++e) {
      const std::string field = "experts[" + std::to_string(e) + "]";
      const json& je = (*it)[e];
      if (!je.is_object()) throw SchemaError(field + ": expected an object");
      ExpertAgent agent{require(je, "id", field).get<std::string>(),
                        distribution_from_json(require(je, "beliefs", field), field + ".beliefs"),
                        matrix_from_json(require(je, "bias", field), field + ".bias"), true};
      if (je.contains("truthful")) {
        if (!je["truthful"].is_boolean()) throw SchemaError(field + ".truthful: expected a boolean");
        agent.truthful = je["truthful"].get<bool>();
      }
      sc.experts.push_back(std::move(agent));
    }
  }

  // Cross-field shape checks, named after the offending field.
  const std::size_t m = sc.dm       ? sc.dm->outcomes()
                        : sc.initial ? sc.initial->size()
                                     : 0;
  if (m != 0) {
    if (sc.bias && sc.bias->outcomes() != m)
      throw SchemaError("bias: outcome count " + std::to_string(sc.bias->outcomes()) +
                        " does not match dm's " + std::to_string(m));
    if (sc.dm && sc.bias && sc.bias->decisions() != sc.dm->decisions())
      throw SchemaError("bias: decision count " + std::to_string(sc.bias->decisions()) +
                        " does not match dm's " + std::to_string(sc.dm->decisions()));
    if (sc.box && (sc.box->outcomes() != m || (sc.dm && sc.box->decisions() != sc.dm->decisions())))
      throw SchemaError("box: shape does not match dm");
    if (sc.initial && sc.initial->size() != m)
      throw SchemaError("initial: size does not match dm outcomes");
    for (std::size_t e = 0; e < sc.experts.size(); ++e) {
      if (sc.experts[e].beliefs.size() != m)
        throw SchemaError("experts[" + std::to_string(e) + "].beliefs: size does not match dm outcomes");
      if (sc.experts[e].bias.outcomes() != m ||
          (sc.dm && sc.experts[e].bias.decisions() != sc.dm->decisions()))
        throw SchemaError("experts[" + std::to_string(e) + "].bias: shape does not match dm");
    }
    if (sc.realized_outcome && *sc.realized_outcome >= m)
      throw SchemaError("realized_outcome: index out of range");
  }
  return sc;
}

ScenarioFile load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw SchemaError("invalid JSON in " + path + ": " + e.what());
  }
  return parse_scenario(j);
}

Report::Report(std::string experiment, std::string scenario_name)
    : experiment_(std::move(experiment)), scenario_(std::move(scenario_name)) {}

void Report::add(const std::string& check, bool pass, json details) {
  details["name"] = check;
  details["pass"] = pass;
  checks_.push_back(std::move(details));
  if (!pass) ++failures_;
}

void Report::note(const std::string& key, json value) { notes_[key] = std::move(value); }

json Report::to_json(bool with_timestamp) const {
  json out{{"experiment", experiment_},
           {"scenario", scenario_},
           {"checks", checks_},
           {"summary", json{{"pass", all_pass()}, {"checks", checks_.size()}, {"failed", failures_}}}};
  if (!notes_.empty()) out["notes"] = notes_;
  if (!inputs_.is_null()) out["inputs"] = inputs_;
  if (with_timestamp) {
    const auto now = std::chrono::system_clock::now();
    out["timestamp"] =
        static_cast<long long>(std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count());
  }
  return out;
}

void Report::write(const std::string& path, bool with_timestamp) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << to_json(with_timestamp).dump(2) << "\n";
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << "\n";
  }
}

std::vector<json> market_event_log(const MarketRun& run) {
  std::vector<json> lines;
  auto obligations_at = [&](int step) {
    json rows = json::array();
    for (const auto& rec : run.ledger)
      if (rec.step == step)
        rows.push_back(json{{"payer", rec.payer},
                            {"payee", rec.payee},
                            {"amounts", rec.amounts},
                            {"kind", rec.kind}});
    return rows;
  };
  for (const auto& step : run.steps) {
    lines.push_back(json{{"event", "step"},
                         {"step", step.step},
                         {"expert", step.expert},
                         {"incumbent", step.incumbent},
                         {"report", step.report},
                         {"incumbent_decision", step.incumbent_decision},
                         {"induced_decision", step.induced_decision},
                         {"expected_payment", step.expected_payment},
                         {"expected_net_gain", step.expected_net_gain},
                         {"inherent_incumbent", step.inherent_incumbent},
                         {"participation_violation", step.participation_violation},
                         {"obligations", obligations_at(step.step)}});
  }
  lines.push_back(json{{"event", "settlement"}, {"obligations", obligations_at(0)}});
  return lines;
}

json market_summary_json(const MarketSummary& s) {
  json experts = json::array();
  for (const auto& e : s.experts)
    experts.push_back(json{{"id", e.id}, {"cash", e.cash}, {"inherent", e.inherent}, {"net", e.net}});
  return json{{"final_forecast", s.final_forecast},
              {"final_owner", s.final_owner},
              {"final_decision", s.final_decision},
              {"realized_outcome", s.realized_outcome},
              {"house_outlay", s.house_outlay},
              {"conservation_residual", s.conservation_residual},
              {"participation_violations", s.participation_violations},
              {"experts", experts}};
}

}  // namespace descore
