#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mech/centralized.hpp"
#include "mech/game.hpp"
#include "mech/io.hpp"
#include "mech/properties.hpp"
#include "mech/scenario.hpp"
#include "mech/validate.hpp"

namespace mech {

struct OptimumMatch {
  double x_error = 0.0;      // ||x - x*||_inf / (1 + ||x*||_inf)
  double price_error = 0.0;  // max |p_i^l - lambda*_l| over active rows with unique multipliers
  std::size_t rows_compared = 0;

  bool within(double tol) const { return x_error <= tol && price_error <= tol; }
};

inline OptimumMatch match_optimum(const Instance& inst, const CentralizedSolution& sol, const MessageProfile& prof,
                                  std::span<const double> x) {
  OptimumMatch m;
  double scale = 0.0, err = 0.0;
  for (std::size_t i = 0; i < inst.n_agents(); ++i) {
    scale = std::max(scale, std::abs(sol.x_star[i]));
    err = std::max(err, std::abs(x[i] - sol.x_star[i]));
  }
  m.x_error = err / (1.0 + scale);
  for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
    const double slack = inst.cap(l) - inst.row_dot(l, sol.x_star);
    if (!sol.multiplier_unique[l] || slack > 1e-7 * (1.0 + std::abs(inst.cap(l)))) continue;
    ++m.rows_compared;
    for (std::size_t i : inst.index().agents_on_constraint[l])
      m.price_error = std::max(m.price_error, std::abs(prof.price(i, l) - sol.lambda_star[l]));
  }
  return m;
}

inline json to_json(const OptimumMatch& m) {
  return {{"x_error", m.x_error}, {"price_error", m.price_error}, {"rows_compared", m.rows_compared}};
}

inline json to_json(const SuiteReport& r) {
  return {{"suite", r.name},         {"samples", r.samples},     {"seed", r.seed},
          {"max_violation", r.max_violation}, {"tolerance", r.tolerance}, {"failures", r.failures},
          {"failing_seeds", r.failing_seeds}, {"passed", r.passed()}};
}

struct RunSpec {
  std::string name;
  Instance instance;
  GameVariant variant = GameVariant::Base;
  std::optional<MessageProfile> init;  // default: y = d + 0.1, p = 0
  Schedule schedule;
  StopRule stop;
  VerifyOptions verify;
  double match_tol = 1e-3;
  bool include_trace = false;
  bool assert_converged = true;
  bool assert_ne = true;
  bool assert_match = true;
};

struct RunResult {
  json report;
  bool passed = false;
};

struct ReportBundle {
  std::vector<json> reports;
  json summary;
  json metadata;  // wall-clock data, kept apart so reports stay byte-identical
  bool passed = false;
};

/// Solve, certify the candidate equilibrium, run the dynamics and verify the
/// end point. Module errors are caught and reported as a failed run.
inline RunResult run_one(const RunSpec& spec) {
  const Instance& inst = spec.instance;
  RunResult res;
  json& r = res.report;
  r["name"] = spec.name;
  r["instance_digest"] = instance_digest(inst);
  r["instance"] = to_json(inst);
  r["variant"] = to_string(spec.variant);
  try {
    const ValidationReport val = validate(inst, spec.variant == GameVariant::SbbOffEq);
    r["validation"] = to_json(val);
    const Mechanism mech(inst);
    r["theta"] = mech.theta();
    const CentralizedSolution sol = solve(inst);
    r["solution"] = to_json(sol);

    const MessageProfile candidate = construct_candidate_ne(inst, sol);
    const NEReport cand_rep = verify_epsilon_ne(mech, spec.variant, candidate, spec.verify);
    r["candidate_ne"] = {{"profile", to_json(inst, candidate)}, {"verification", to_json(cand_rep)}};

    const MessageProfile init = spec.init.value_or(default_init(inst));
    r["init"] = to_json(inst, init);
    const RunTrace trace = run_dynamics(mech, spec.variant, init, spec.schedule, spec.stop);
    const NEReport final_rep = verify_epsilon_ne(mech, spec.variant, trace.final_profile, spec.verify);
    const OptimumMatch match = match_optimum(inst, sol, trace.final_profile, trace.final_x);
    json dyn{{"converged", trace.converged},
             {"rounds", trace.rounds},
             {"final_profile", to_json(inst, trace.final_profile)},
             {"final_x", trace.final_x},
             {"verification", to_json(final_rep)},
             {"match", to_json(match)}};
    if (!trace.snapshots.empty()) {
      dyn["budget_imbalance"] = trace.snapshots.back().budget_imbalance;
      dyn["max_violation"] = trace.snapshots.back().max_violation;
    }
    if (spec.include_trace) {
      json snaps = json::array();
      for (const Snapshot& s : trace.snapshots) snaps.push_back(to_json(inst, s));
      dyn["trace"] = snaps;
    }
    r["dynamics"] = dyn;

    json checks = json::object();
    checks["validation"] = val.passed();
    checks["candidate_ne"] = cand_rep.passed;
    if (spec.assert_converged) checks["converged"] = trace.converged;
    if (spec.assert_ne) checks["final_ne"] = final_rep.passed;
    if (spec.assert_match) checks["match"] = match.within(spec.match_tol);
    res.passed = true;
    for (const auto& [k, v] : checks.items()) res.passed = res.passed && v.get<bool>();
    r["assertions"] = checks;
  } catch (const Error& e) {
    r["error"] = e.what();
    res.passed = false;
  }
  r["passed"] = res.passed;
  return res;
}

inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MECH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Runs are fanned out over MECH_THREADS workers; results land in input
/// order so the bundle never depends on scheduling.
inline ReportBundle run_experiment(const std::vector<RunSpec>& runs) {
  ReportBundle bundle;
  const auto start = std::chrono::steady_clock::now();
  bundle.metadata["started"] = utc_now();
  std::vector<RunResult> results(runs.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t k = next++; k < runs.size(); k = next++) results[k] = run_one(runs[k]);
  };
  const std::size_t workers = worker_count(runs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::size_t passed = 0, converged = 0;
  double worst_x = 0.0;
  for (const RunResult& r : results) {
    passed += r.passed;
    if (r.report.contains("dynamics")) {
      converged += r.report["dynamics"]["converged"].get<bool>();
      worst_x = std::max(worst_x, r.report["dynamics"]["match"]["x_error"].get<double>());
    }
    bundle.reports.push_back(r.report);
  }
  bundle.passed = passed == results.size();
  bundle.summary = {{"runs", results.size()},
                    {"passed", passed},
                    {"failed", results.size() - passed},
                    {"converged", converged},
                    {"max_x_error", worst_x}};
  bundle.metadata["finished"] = utc_now();
  bundle.metadata["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bundle.metadata["workers"] = workers;
  return bundle;
}

// --- configuration ------------------------------------------------------------

inline ScenarioParams scenario_from_json(const json& g) {
  ScenarioParams sp;
  const std::string kind = g.at("kind").get<std::string>();
  if (kind == "unicast")
    sp.kind = ScenarioKind::Unicast;
  else if (kind == "public-good" || kind == "public_good")
    sp.kind = ScenarioKind::PublicGood;
  else if (kind == "local-public-goods" || kind == "local_public_goods")
    sp.kind = ScenarioKind::LocalPublicGoods;
  else
    throw InfeasibleParams("unknown scenario kind '" + kind + "'");
  sp.n_agents = g.value("agents", sp.n_agents);
  sp.n_links = g.value("links", sp.n_links);
  if (g.contains("groups")) sp.group_sizes = g.at("groups").get<std::vector<std::size_t>>();
  sp.coupling = g.value("coupling", sp.coupling);
  sp.offeq = g.value("offeq", sp.offeq);
  sp.families = g.value("families", std::string("log")) == "mixed" ? FamilyMix::Mixed : FamilyMix::Log;
  sp.unit_weights = g.value("unit_weights", sp.unit_weights);
  if (g.contains("cap")) sp.cap = g.at("cap").get<double>();
  if (g.contains("eta")) sp.eta = g.at("eta").get<double>();
  sp.d = g.value("d", sp.d);
  sp.D = g.value("D", sp.D);
  return sp;
}

/// Config: {"runs": [{"name", "instance": path|object | "generator": {...},
/// "seed" | "seeds": [...], "variant", "max_rounds", "tol", "eps",
/// "deviations", "verify_seed", "trace", "assert": {...}}]}. Paths resolve
/// against `base_dir`; a "seeds" list expands into one run per seed.
inline std::vector<RunSpec> runs_from_config(const json& cfg, const std::filesystem::path& base_dir) {
  std::vector<RunSpec> out;
  try {
    for (const json& r : cfg.at("runs")) {
      RunSpec base;
      base.variant = parse_variant(r.value("variant", std::string("base")));
      base.stop.max_rounds = r.value("max_rounds", base.stop.max_rounds);
      base.stop.tol = r.value("tol", base.stop.tol);
      base.stop.record_every = r.value("record_every", std::size_t{0});
      base.verify.eps = r.value("eps", base.verify.eps);
      base.verify.deviations = r.value("deviations", base.verify.deviations);
      base.verify.seed = r.value("verify_seed", base.verify.seed);
      base.include_trace = r.value("trace", false);
      if (base.include_trace && base.stop.record_every == 0) base.stop.record_every = 1;
      if (r.value("price_rule", std::string("tatonnement")) == "best-response")
        base.schedule.price_rule = PriceRule::BestResponse;
      if (r.contains("assert")) {
        const json& a = r.at("assert");
        base.assert_converged = a.value("converged", base.assert_converged);
        base.assert_ne = a.value("ne", base.assert_ne);
        base.assert_match = a.value("match", base.assert_match);
      }
      const std::string name = r.value("name", std::string("run") + std::to_string(out.size()));
      if (r.contains("instance")) {
        const json& ij = r.at("instance");
        base.instance = ij.is_string() ? load_instance((base_dir / ij.get<std::string>()).string()) : instance_from_json(ij);
        base.name = name;
        out.push_back(std::move(base));
      } else {
        const ScenarioParams sp = scenario_from_json(r.at("generator"));
        std::vector<std::uint64_t> seeds;
        if (r.contains("seeds"))
          seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
        else
          seeds.push_back(r.value("seed", std::uint64_t{0}));
        for (std::uint64_t s : seeds) {
          RunSpec spec = base;
          spec.instance = generate(sp, s).instance;
          spec.name = name + (seeds.size() > 1 ? "/seed" + std::to_string(s) : "");
          out.push_back(std::move(spec));
        }
      }
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed experiment config: ") + e.what());
  }
  return out;
}

}  // namespace mech
