#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mech/centralized.hpp"
#include "mech/error.hpp"
#include "mech/game.hpp"
#include "mech/instance.hpp"
#include "mech/validate.hpp"

namespace mech {

using json = nlohmann::json;

// --- instance ---------------------------------------------------------------

inline json to_json(const Valuation& v) {
  json j{{"family", std::string(to_string(v.family))}, {"a", v.a}};
  j[v.family == ValuationFamily::QuadCap ? "m" : "b"] = v.b;
  return j;
}

inline Valuation valuation_from_json(const json& j) {
  const std::string fam = j.at("family").get<std::string>();
  const double a = j.at("a").get<double>();
  if (fam == "log_shift") return Valuation::log_shift(a, j.at("b").get<double>());
  if (fam == "power") return Valuation::power(a, j.at("b").get<double>());
  if (fam == "quad_cap") return Valuation::quad_cap(a, j.contains("m") ? j.at("m").get<double>() : j.at("b").get<double>());
  throw InvalidInstance("unknown valuation family '" + fam + "'");
}

inline json to_json(const Instance& inst) {
  json agents = json::array();
  for (const Valuation& v : inst.valuations()) agents.push_back({{"valuation", to_json(v)}});
  json constraints = json::array();
  for (const Constraint& c : inst.constraints()) {
    json coeffs = json::object();
    for (const Term& t : c.terms) coeffs[std::to_string(t.agent)] = t.coeff;
    constraints.push_back({{"coeffs", coeffs}, {"cap", c.cap}});
  }
  json j{{"agents", agents},
         {"constraints", constraints},
         {"equality_groups", inst.equality_groups()},
         {"d", inst.d()},
         {"D", inst.D()},
         {"eta", inst.eta()}};
  if (inst.theta()) j["theta"] = *inst.theta();
  return j;
}

inline Instance instance_from_json(const json& j) {
  try {
    std::vector<Valuation> vals;
    for (const json& a : j.at("agents")) vals.push_back(valuation_from_json(a.at("valuation")));
    std::vector<Constraint> cons;
    for (const json& c : j.at("constraints")) {
      Constraint con;
      con.cap = c.at("cap").get<double>();
      for (const auto& [key, val] : c.at("coeffs").items()) {
        std::size_t pos = 0;
        const unsigned long idx = std::stoul(key, &pos);
        if (pos != key.size()) throw InvalidInstance("coefficient key '" + key + "' is not an agent index");
        con.terms.push_back({idx, val.get<double>()});
      }
      cons.push_back(std::move(con));
    }
    std::vector<std::vector<std::size_t>> groups;
    if (j.contains("equality_groups")) groups = j.at("equality_groups").get<std::vector<std::vector<std::size_t>>>();
    std::optional<std::vector<double>> theta;
    if (j.contains("theta") && !j.at("theta").is_null()) theta = j.at("theta").get<std::vector<double>>();
    return Instance(std::move(vals), std::move(cons), std::move(groups), j.at("d").get<std::vector<double>>(),
                    j.at("D").get<double>(), j.value("eta", 1.0), std::move(theta));
  } catch (const json::exception& e) {
    throw InvalidInstance(std::string("malformed instance JSON: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw InvalidInstance("coefficient key is not an agent index");
  }
}

/// 64-bit FNV-1a of the canonical instance JSON, as 16 hex digits.
inline std::string instance_digest(const Instance& inst) {
  const std::string text = to_json(inst).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- results ----------------------------------------------------------------

inline json to_json(const KktResiduals& r) {
  return {{"primal", r.primal}, {"dual", r.dual}, {"slack", r.slack}, {"stationarity", r.stationarity}};
}

inline json to_json(const AssumptionCheck& c) {
  return {{"id", c.id}, {"status", to_string(c.status)}, {"detail", c.detail}};
}

inline json to_json(const ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  return {{"passed", r.passed()}, {"checks", checks}};
}

inline json to_json(const CentralizedSolution& s) {
  return {{"x_star", s.x_star},
          {"lambda_star", s.lambda_star},
          {"residuals", to_json(s.residuals)},
          {"iterations", s.iterations},
          {"multiplier_unique", s.multiplier_unique},
          {"a2", to_json(s.a2)}};
}

inline json to_json(const Instance& inst, const MessageProfile& prof) {
  json p = json::array();
  for (std::size_t i = 0; i < inst.n_agents(); ++i) {
    json row = json::object();
    for (std::size_t l : inst.index().constraints_of_agent[i]) row[std::to_string(l)] = prof.price(i, l);
    p.push_back(row);
  }
  return {{"y", prof.y}, {"p", p}};
}

inline MessageProfile profile_from_json(const Instance& inst, const json& j) {
  try {
    MessageProfile prof(j.at("y").get<std::vector<double>>(), inst.n_constraints());
    if (prof.y.size() != inst.n_agents()) throw DimensionMismatch("profile demand size differs from agent count");
    const json& p = j.at("p");
    if (p.size() != inst.n_agents()) throw DimensionMismatch("profile price list size differs from agent count");
    for (std::size_t i = 0; i < p.size(); ++i)
      for (const auto& [key, val] : p[i].items()) {
        const std::size_t l = std::stoul(key);
        if (l >= inst.n_constraints()) throw DimensionMismatch("price for unknown constraint " + key);
        if (inst.coeff(l, i) == 0.0) throw AgentNotOnConstraint("agent " + std::to_string(i) + " priced constraint " + key);
        prof.price(i, l) = val.get<double>();
      }
    return prof;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed profile JSON: ") + e.what());
  }
}

inline json to_json(const TaxBreakdown& b) {
  json terms = json::array();
  for (const TaxTerm& t : b.terms)
    terms.push_back({{"agent", t.agent},
                     {"constraint", t.constraint},
                     {"payment", t.payment},
                     {"disagreement", t.disagreement},
                     {"slackness", t.slackness},
                     {"rebate", t.rebate}});
  return {{"terms", terms}, {"totals", b.totals}, {"gross", b.gross}, {"rebates", b.rebates}, {"total", total_tax(b)}};
}

inline json to_json(const NEReport& r) {
  json best = json::array();
  for (const Deviation& d : r.best) {
    json dj{{"kind", d.kind}, {"gain", d.gain}, {"y", d.y}, {"prices", d.prices}};
    dj["constraint"] = d.constraint ? json(*d.constraint) : json(nullptr);
    best.push_back(dj);
  }
  return {{"passed", r.passed},
          {"eps", r.eps},
          {"max_gain", r.max_gain},
          {"best_deviation", best},
          {"utilities", r.utilities},
          {"price_spread", r.price_spread},
          {"max_price_spread", r.max_price_spread},
          {"cs_residual", r.cs_residual},
          {"stationarity", r.stationarity},
          {"ir_margin", r.ir_margin},
          {"min_ir_margin", r.min_ir_margin}};
}

inline json to_json(const Instance& inst, const Snapshot& s) {
  return {{"round", s.round},
          {"profile", to_json(inst, s.profile)},
          {"x", s.x},
          {"taxes", s.taxes},
          {"utilities", s.utilities},
          {"slacks", s.slacks},
          {"max_violation", s.max_violation},
          {"budget_imbalance", s.budget_imbalance},
          {"max_change", s.max_change}};
}

/// One row per recorded round: round, x_0..x_{N-1}, budget imbalance,
/// max slack violation.
inline std::string trace_csv(const Instance& inst, const RunTrace& trace) {
  std::ostringstream out;
  out << std::setprecision(17) << "round";
  for (std::size_t i = 0; i < inst.n_agents(); ++i) out << ",x" << i;
  out << ",budget_imbalance,max_slack_violation\n";
  for (const Snapshot& s : trace.snapshots) {
    out << s.round;
    for (double v : s.x) out << ',' << v;
    out << ',' << s.budget_imbalance << ',' << s.max_violation << '\n';
  }
  return out.str();
}

// --- files ------------------------------------------------------------------

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline Instance load_instance(const std::string& path) { return instance_from_json(read_json(path)); }

}  // namespace mech
