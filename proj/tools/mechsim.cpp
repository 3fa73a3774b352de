// mechsim: command-line front end for the mechanism library.
//
// Exit codes: 0 pass, 1 assertion failure, 2 usage or IO error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mech/mech.hpp"

namespace {

using mech::json;

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

void emit(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    mech::write_text(out, text);
}

bool is_usage_error(const mech::Error& e) {
  return dynamic_cast<const mech::IoError*>(&e) || dynamic_cast<const mech::InvalidInstance*>(&e) ||
         dynamic_cast<const mech::DimensionMismatch*>(&e) || dynamic_cast<const mech::AgentNotOnConstraint*>(&e) ||
         dynamic_cast<const mech::InfeasibleParams*>(&e) || dynamic_cast<const mech::UnknownSuite*>(&e) ||
         dynamic_cast<const mech::DemandOutOfBox*>(&e) || dynamic_cast<const mech::BracketInvalid*>(&e);
}

struct SolveArgs {
  std::string instance, out;
  double tol = 1e-8;
};

int cmd_solve(const SolveArgs& a) {
  const mech::Instance inst = mech::load_instance(a.instance);
  mech::SolveOptions opt;
  opt.tol = a.tol;
  const mech::CentralizedSolution sol = mech::solve(inst, opt);
  json j = mech::to_json(sol);
  j["objective"] = mech::objective(inst, sol.x_star);
  j["instance_digest"] = mech::instance_digest(inst);
  const bool ok = sol.residuals.max() <= a.tol;
  j["passed"] = ok;
  emit(j, a.out);
  return ok ? kPass : kFail;
}

struct SimulateArgs {
  std::string instance, variant = "base", init = "default", trace, out, price_rule = "tatonnement";
  std::size_t max_rounds = 100000;
  double tol = 1e-8;
  double eps = 1e-6;
  bool full_trace = false;
};

int cmd_simulate(const SimulateArgs& a) {
  const mech::Instance inst = mech::load_instance(a.instance);
  const mech::Mechanism mech(inst);
  const mech::GameVariant variant = mech::parse_variant(a.variant);
  const mech::MessageProfile init =
      a.init == "default" ? mech::default_init(inst) : mech::profile_from_json(inst, mech::read_json(a.init));
  mech::Schedule schedule;
  if (a.price_rule == "best-response") schedule.price_rule = mech::PriceRule::BestResponse;
  mech::StopRule stop;
  stop.max_rounds = a.max_rounds;
  stop.tol = a.tol;
  stop.record_every = (a.full_trace || !a.trace.empty()) ? 1 : 0;
  const mech::RunTrace trace = mech::run_dynamics(mech, variant, init, schedule, stop);
  mech::VerifyOptions vopt;
  vopt.eps = a.eps;
  const mech::NEReport rep = mech::verify_epsilon_ne(mech, variant, trace.final_profile, vopt);

  json j{{"instance_digest", mech::instance_digest(inst)},
         {"variant", mech::to_string(variant)},
         {"converged", trace.converged},
         {"rounds", trace.rounds},
         {"final_profile", mech::to_json(inst, trace.final_profile)},
         {"final_x", trace.final_x},
         {"verification", mech::to_json(rep)}};
  if (a.full_trace) {
    json snaps = json::array();
    for (const auto& s : trace.snapshots) snaps.push_back(mech::to_json(inst, s));
    j["trace"] = snaps;
  }
  if (!a.trace.empty()) mech::write_text(a.trace, mech::trace_csv(inst, trace));
  const bool ok = trace.converged && rep.passed;
  j["passed"] = ok;
  emit(j, a.out);
  return ok ? kPass : kFail;
}

struct VerifyArgs {
  std::string instance, profile, variant = "base", out;
  double eps = 1e-6;
  std::size_t deviations = 200;
  std::uint64_t seed = 0;
};

int cmd_verify(const VerifyArgs& a) {
  const mech::Instance inst = mech::load_instance(a.instance);
  const mech::Mechanism mech(inst);
  const mech::MessageProfile prof = mech::profile_from_json(inst, mech::read_json(a.profile));
  mech::VerifyOptions opt{a.eps, a.deviations, a.seed};
  const mech::NEReport rep = mech::verify_epsilon_ne(mech, mech::parse_variant(a.variant), prof, opt);
  emit(mech::to_json(rep), a.out);
  return rep.passed ? kPass : kFail;
}

struct GenArgs {
  std::string kind, out, families = "log";
  std::size_t agents = 2, links = 1;
  std::vector<std::size_t> groups;
  bool no_coupling = false, offeq = false, unit_weights = false;
  std::optional<double> cap, eta;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& a) {
  json g{{"kind", a.kind},     {"agents", a.agents},         {"links", a.links},  {"coupling", !a.no_coupling},
         {"offeq", a.offeq},   {"families", a.families},     {"unit_weights", a.unit_weights}};
  if (!a.groups.empty()) g["groups"] = a.groups;
  if (a.cap) g["cap"] = *a.cap;
  if (a.eta) g["eta"] = *a.eta;
  const mech::GeneratedInstance gen = mech::generate(mech::scenario_from_json(g), a.seed);
  if (!a.out.empty()) std::cerr << "resamples: " << gen.resamples << "\n";
  emit(mech::to_json(gen.instance), a.out);
  return kPass;
}

struct PropArgs {
  std::string suite, out;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

int cmd_prop(const PropArgs& a) {
  const mech::SuiteReport r = mech::property_suite(a.suite, a.samples, a.seed);
  emit(mech::to_json(r), a.out);
  return r.passed() ? kPass : kFail;
}

struct RunArgs {
  std::string config, out, metadata;
};

int cmd_run(const RunArgs& a) {
  const json cfg = mech::read_json(a.config);
  const auto base = std::filesystem::path(a.config).parent_path();
  const mech::ReportBundle bundle = mech::run_experiment(mech::runs_from_config(cfg, base));
  json j{{"reports", bundle.reports}, {"summary", bundle.summary}, {"passed", bundle.passed}};
  emit(j, a.out);
  if (!a.metadata.empty()) mech::write_text(a.metadata, bundle.metadata.dump(2) + "\n");
  std::cerr << bundle.summary.dump() << "\n";
  return bundle.passed ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mechanism simulator: centralized solve, equilibrium dynamics and verification"};
  app.require_subcommand(1);
  const CLI::IsMember kVariants({"base", "sbb-ne", "sbb-offeq"});

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Solve the centralized problem and report KKT residuals");
  solve->add_option("instance", sa.instance, "Instance JSON")->required();
  solve->add_option("--tol", sa.tol, "KKT residual tolerance");
  solve->add_option("-o,--out", sa.out, "Write the report here instead of stdout");

  SimulateArgs si;
  auto* sim = app.add_subcommand("simulate", "Run round-robin dynamics and verify the end point");
  sim->add_option("instance", si.instance, "Instance JSON")->required();
  sim->add_option("--variant", si.variant, "base | sbb-ne | sbb-offeq")->check(kVariants);
  sim->add_option("--init", si.init, "'default' or a profile JSON file");
  sim->add_option("--max-rounds", si.max_rounds, "Round limit");
  sim->add_option("--tol", si.tol, "Stop when no message moves more than this in a round");
  sim->add_option("--eps", si.eps, "Equilibrium tolerance for the end-point check");
  sim->add_option("--price-rule", si.price_rule, "tatonnement | best-response")
      ->check(CLI::IsMember({"tatonnement", "best-response"}));
  sim->add_option("--trace", si.trace, "Write a per-round CSV trace");
  sim->add_flag("--full-trace", si.full_trace, "Embed every round in the JSON report");
  sim->add_option("-o,--out", si.out, "Write the report here instead of stdout");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Check a message profile for profitable deviations");
  verify->add_option("instance", va.instance, "Instance JSON")->required();
  verify->add_option("profile", va.profile, "Profile JSON {\"y\": [...], \"p\": [{\"l\": price}, ...]}")->required();
  verify->add_option("--variant", va.variant, "base | sbb-ne | sbb-offeq")->check(kVariants);
  verify->add_option("--eps", va.eps, "Largest tolerated gain");
  verify->add_option("--deviations", va.deviations, "Sampled joint deviations per agent");
  verify->add_option("--seed", va.seed, "Seed for sampled deviations");
  verify->add_option("-o,--out", va.out, "Write the report here instead of stdout");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate a scenario instance");
  gen->add_option("kind", ga.kind, "unicast | public-good | local-public-goods")
      ->required()
      ->check(CLI::IsMember({"unicast", "public-good", "local-public-goods"}));
  gen->add_option("--agents", ga.agents, "Agent count (unicast, public-good)");
  gen->add_option("--links", ga.links, "Link count (unicast)");
  gen->add_option("--groups", ga.groups, "Group sizes (local-public-goods)")->delimiter(',');
  gen->add_flag("--no-coupling", ga.no_coupling, "Omit the row shared by all groups");
  gen->add_flag("--offeq", ga.offeq, "Target the off-equilibrium budget variant (>= 5 agents per row)");
  gen->add_option("--families", ga.families, "log | mixed")->check(CLI::IsMember({"log", "mixed"}));
  gen->add_flag("--unit-weights", ga.unit_weights, "All row coefficients 1");
  gen->add_option("--cap", ga.cap, "Fixed capacity instead of a random draw");
  gen->add_option("--eta", ga.eta, "Slackness penalty weight");
  gen->add_option("--seed", ga.seed, "Generator seed");
  gen->add_option("-o,--out", ga.out, "Write the instance here instead of stdout");

  PropArgs pa;
  auto* prop = app.add_subcommand("prop", "Run a property suite");
  prop->add_option("suite", pa.suite, "Suite name")->required();
  prop->add_option("--samples", pa.samples, "Number of cases");
  prop->add_option("--seed", pa.seed, "Seed");
  prop->add_option("-o,--out", pa.out, "Write the report here instead of stdout");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run an experiment config and write a report bundle");
  run->add_option("config", ra.config, "Experiment config JSON")->required();
  run->add_option("-o,--out", ra.out, "Write the bundle here instead of stdout");
  run->add_option("--metadata", ra.metadata, "Write wall-clock metadata here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*solve) return cmd_solve(sa);
    if (*sim) return cmd_simulate(si);
    if (*verify) return cmd_verify(va);
    if (*gen) return cmd_gen(ga);
    if (*prop) return cmd_prop(pa);
    if (*run) return cmd_run(ra);
  } catch (const mech::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_usage_error(e) ? kUsage : kFail;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
