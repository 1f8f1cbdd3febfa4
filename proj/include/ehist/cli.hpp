#pragma once

// Command-line front end. run_cli is the whole program; tools/ehist.cpp only
// forwards argv.
//
// Exit codes: 0 success, 2 input error, 3 optimizer did not converge,
// 4 impossible post-selection.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ehist/bell.hpp"
#include "ehist/io.hpp"
#include "ehist/scenarios.hpp"
#include "ehist/twostate.hpp"

namespace ehist::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kNotConverged = 3, kImpossiblePostselection = 4 };

struct RunConfig {
  std::string command;
  std::optional<std::string> input_path;
  std::string format = "pretty";
  double tol = kDefaultTol;
  std::uint64_t seed = 1;
  std::string out;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json load(const RunConfig& cfg) {
  if (!cfg.input_path) throw InputError(cfg.command + ": an input file is required");
  try {
    return parse_document(read_file(*cfg.input_path));
  } catch (const InputError& e) {
    throw InputError(*cfg.input_path + ": " + e.what());
  }
}

inline std::string num(double v) { return format_number(v); }

inline std::string pretty(const BellReport& r) {
  std::ostringstream os;
  os << "mode: " << to_string(r.mode) << "\n";
  if (!r.settings_used.empty()) {
    os << "settings:";
    for (const auto& s : r.settings_used) os << ' ' << s;
    os << "\n";
  }
  os << "c11 " << num(r.c[0][0]) << "  c12 " << num(r.c[0][1]) << "\n";
  os << "c21 " << num(r.c[1][0]) << "  c22 " << num(r.c[1][1]) << "\n";
  os << "S_LGI = " << num(r.value) << "  (classical " << num(r.classical_bound) << ", quantum " << num(r.quantum_bound)
     << ")\n";
  return os.str();
}

inline std::string pretty(const OutcomeDistribution& d) {
  std::ostringstream os;
  os << "settings:";
  for (const auto& s : d.settings) os << ' ' << s;
  os << "\n";
  for (const auto& k : outcome_strings(d.settings.size())) os << "  " << d.render_outcome(k) << "  " << num(d.probability(k)) << "\n";
  return os.str();
}

inline std::string pretty(const ScenarioResult& r) {
  std::ostringstream os;
  os << "scenario " << r.name << "\n";
  for (const auto& [k, a] : r.artifacts) {
    if (const auto* v = std::get_if<double>(&a)) os << "  " << k << " = " << num(*v) << "\n";
    if (const auto* v = std::get_if<std::string>(&a)) os << "  " << k << " = " << *v << "\n";
    if (const auto* v = std::get_if<HistoryState>(&a)) os << "  " << k << ": " << render(*v) << "\n";
    if (const auto* v = std::get_if<MixedHistory>(&a)) {
      os << "  " << k << ": mixture, purity " << num(purity(*v)) << "\n";
      for (const auto& e : v->ensemble()) os << "      " << num(e.probability) << "  " << render(e.history) << "\n";
    }
    if (const auto* v = std::get_if<HistoryFamily>(&a)) {
      os << "  " << k << ": " << v->members.size() << " histories, " << (v->report.consistent ? "consistent" : "inconsistent")
         << " (max |D_ij| " << num(v->report.max_off_diagonal) << ")\n";
    }
    if (const auto* v = std::get_if<OutcomeDistribution>(&a)) {
      os << "  " << k << ":\n";
      for (const auto& key : outcome_strings(v->settings.size()))
        os << "      " << v->render_outcome(key) << "  " << num(v->probability(key)) << "\n";
    }
  }
  for (const auto& n : r.notes) os << "note: " << n << "\n";
  return os.str();
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline BellInput bell_input(const RunConfig& cfg, const std::string& preset_name, const std::optional<std::string>& mode) {
  BellInput in = cfg.input_path ? bell_from_json(load(cfg)) : BellInput{};
  const auto p = preset(preset_name);
  if (!in.alice) in.alice = p.alice;
  if (!in.bob) in.bob = p.bob;
  if (!in.charlie) in.charlie = p.charlie;
  if (mode) in.mode = parse_mode(*mode);
  return in;
}

}  // namespace detail

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entangled histories, two-time experiments and temporal Bell functionals"};
  app.require_subcommand(1);
  RunConfig cfg;
  app.add_option("--format", cfg.format, "output format")->check(CLI::IsMember({"json", "csv", "pretty"}));
  app.add_option("--tol", cfg.tol, "comparison tolerance")->check(CLI::PositiveNumber);
  app.add_option("--seed", cfg.seed, "optimizer seed");
  app.add_option("--out", cfg.out, "write output to this file instead of stdout");

  std::string scenario_name;
  std::size_t slots = 3;
  auto* scenario = app.add_subcommand("scenario", "run a built-in scenario");
  scenario->add_option("name", scenario_name, "scenario name")->required();
  scenario->add_option("--slots", slots, "slot count (temporal-ghz)");

  std::string preset_name = "tsirelson";
  std::optional<std::string> mode;
  std::string input;
  std::size_t n = 0;
  auto bell_opts = [&](CLI::App* sub) {
    sub->add_option("spec", input, "bell spec file (JSON)");
    sub->add_option("--preset", preset_name, "settings preset")->check(CLI::IsMember(preset_names()));
    sub->add_option("--mode", mode, "independent or chained");
  };
  auto* lgi = app.add_subcommand("lgi", "evaluate S_LGI");
  bell_opts(lgi);
  auto* chained = app.add_subcommand("chained", "evaluate the chained sum over n blocks");
  bell_opts(chained);
  chained->add_option("-n", n, "number of blocks")->check(CLI::Range(1, 11));
  auto* monogamy = app.add_subcommand("monogamy", "evaluate S_AB + S_BC");
  bell_opts(monogamy);

  std::string objective = "s_lgi";
  std::size_t starts = 4;
  std::string trace_path;
  std::size_t max_evals = 10000;
  auto* optimize = app.add_subcommand("optimize", "search qubit settings maximizing a functional");
  optimize->add_option("spec", input, "optional bell spec; settings given there are held fixed");
  optimize->add_option("--objective", objective, "s_lgi, monogamy_sum or chained_bell");
  optimize->add_option("-n", n, "blocks for chained_bell")->check(CLI::Range(1, 11));
  optimize->add_option("--mode", mode, "independent or chained");
  optimize->add_option("--starts", starts, "seeded starts")->check(CLI::Range(1, 64));
  optimize->add_option("--trace", trace_path, "write the optimizer trace as CSV");
  optimize->add_option("--max-evals", max_evals, "local search budget per start")->check(CLI::PositiveNumber);

  auto* weight_cmd = app.add_subcommand("weight", "weight, chain operator and consistency of histories");
  weight_cmd->add_option("file", input, "history file (JSON)")->required();

  auto* abl = app.add_subcommand("abl", "outcome distribution of a pre/post-selected experiment");
  abl->add_option("file", input, "experiment file (JSON)")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  const CLI::App* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  if (!input.empty()) cfg.input_path = input;

  std::string text;
  int code = kOk;
  try {
    if (sub == scenario) {
      const auto r = run_scenario(scenario_name, {slots});
      text = cfg.format == "json" ? detail::dump(to_json(r)) : cfg.format == "csv" ? to_csv(r) : detail::pretty(r);
    } else if (sub == lgi) {
      const auto in = detail::bell_input(cfg, preset_name, mode);
      const auto r = s_lgi({in.initial, in.unitaries, *in.alice, *in.bob, in.mode});
      text = cfg.format == "json" ? detail::dump(to_json(r)) : cfg.format == "csv" ? to_csv(r) : detail::pretty(r);
    } else if (sub == chained) {
      const auto in = detail::bell_input(cfg, preset_name, mode);
      const std::size_t blocks = n ? n : in.n.value_or(1);
      const auto r = chained_bell(blocks, {in.initial, in.unitaries, *in.alice, *in.bob, in.mode});
      const double classical = classical_bound_bruteforce(LinearFunctional::chained_path(blocks));
      if (cfg.format == "json") {
        json j = to_json(r);
        j["classical_bruteforce"] = classical;
        text = detail::dump(j);
      } else if (cfg.format == "csv") {
        text = "quantity,value\r\n";
        for (std::size_t i = 0; i < r.values.size(); ++i) text += "block" + std::to_string(i + 1) + "," + detail::num(r.values[i]) + "\r\n";
        text += "sum," + detail::num(r.sum) + "\r\nbound," + detail::num(r.bound) + "\r\nclassical_bruteforce," +
                detail::num(classical) + "\r\n";
      } else {
        text = "n = " + std::to_string(blocks) + "\nsum = " + detail::num(r.sum) + "  (quantum bound " + detail::num(r.bound) +
               ", classical " + detail::num(classical) + ")\n";
      }
    } else if (sub == monogamy) {
      const auto in = detail::bell_input(cfg, preset_name, mode);
      const auto r = monogamy_sum({in.initial, in.unitaries, *in.alice, *in.bob, *in.charlie, in.mode});
      if (cfg.format == "json") {
        text = detail::dump(to_json(r));
      } else if (cfg.format == "csv") {
        text = "quantity,value\r\nS_AB," + detail::num(r.ab.value) + "\r\nS_BC," + detail::num(r.bc.value) + "\r\nsum," +
               detail::num(r.sum) + "\r\nquantum_reference," + detail::num(r.quantum_reference) + "\r\nspatial_reference," +
               detail::num(r.spatial_reference) + "\r\nmode," + to_string(r.mode) + "\r\n";
      } else {
        text = "mode: " + to_string(r.mode) + "\nS_AB = " + detail::num(r.ab.value) + "\nS_BC = " + detail::num(r.bc.value) +
               "\nsum = " + detail::num(r.sum) + "  (spatial bound " + detail::num(r.spatial_reference) + ", reference " +
               detail::num(r.quantum_reference) + ")\n";
      }
    } else if (sub == optimize) {
      OptimizeConfig oc;
      oc.objective = parse_objective(objective);
      oc.seed = cfg.seed;
      oc.starts = starts;
      oc.local.max_evals = max_evals;
      if (cfg.input_path) {
        const auto in = bell_from_json(detail::load(cfg));
        oc.initial = in.initial;
        oc.mode = in.mode;
        if (in.n) oc.n = *in.n;
        oc.fixed.assign(setting_count(oc.objective), std::nullopt);
        auto pin = [&](const auto& pair, std::size_t at) {
          if (pair && at + 1 < oc.fixed.size()) {
            oc.fixed[at] = (*pair)[0];
            oc.fixed[at + 1] = (*pair)[1];
          }
        };
        pin(in.alice, 0);
        pin(in.bob, 2);
        pin(in.charlie, 4);
      }
      if (n) oc.n = n;
      if (mode) oc.mode = parse_mode(*mode);
      const auto r = optimize_settings(oc);
      if (!trace_path.empty()) {
        std::ofstream t(trace_path, std::ios::binary);
        if (!t) throw InputError("cannot write '" + trace_path + "'");
        t << to_csv(r.trace);
      }
      if (cfg.format == "json") {
        json j = to_json(r);
        j["objective"] = to_string(oc.objective);
        text = detail::dump(j);
      } else if (cfg.format == "csv") {
        text = "setting,label,theta,phi\r\n";
        for (std::size_t k = 0; k < r.settings.size(); ++k)
          text += std::to_string(k) + "," + csv_field(r.settings[k].label()) + "," + detail::num(r.angles[k].theta) + "," +
                  detail::num(r.angles[k].phi) + "\r\n";
        text += "value,," + detail::num(r.value) + ",\r\n";
      } else {
        text = "objective: " + to_string(oc.objective) + "\nbest value = " + detail::num(r.value) +
               (r.converged ? "" : "  (not converged)") + "\nevaluations = " + std::to_string(r.evaluations) + "\n";
        for (const auto& s : r.settings) text += "  " + s.label() + "\n";
      }
      if (!r.converged) {
        err << "warning: optimizer budget exhausted before tolerance\n";
        code = kNotConverged;
      }
    } else if (sub == weight_cmd) {
      const json doc = detail::load(cfg);
      std::vector<HistoryState> family;
      if (doc.contains("family")) {
        if (!doc["family"].is_array() || doc["family"].empty()) throw InputError("$.family: expected a nonempty array");
        for (std::size_t i = 0; i < doc["family"].size(); ++i)
          family.push_back(history_from_json(doc["family"][i], "$.family[" + std::to_string(i) + "]"));
      } else if (doc.contains("history")) {
        family.push_back(history_from_json(doc["history"], "$.history"));
      } else {
        throw InputError("$: expected 'history' or 'family'");
      }
      const BridgingSet b = bridging_from_json(doc.value("bridging", json(nullptr)), family.front().grid(), "$.bridging");
      json j = json::object();
      json ws = json::array();
      for (const auto& h : family) ws.push_back({{"history", render(h)}, {"weight", weight(h, b)}, {"chain_operator", to_json(chain_operator_sum(h, b))}});
      j["histories"] = ws;
      if (family.size() > 1) j["consistency"] = to_json(is_consistent_family(family, b, cfg.tol));
      if (cfg.format == "json") {
        text = detail::dump(j);
      } else if (cfg.format == "csv") {
        text = "history,weight\r\n";
        for (const auto& w : ws) text += csv_field(w["history"].get<std::string>()) + "," + detail::num(w["weight"].get<double>()) + "\r\n";
      } else {
        for (const auto& w : ws) text += w["history"].get<std::string>() + "  weight " + detail::num(w["weight"].get<double>()) + "\n";
        if (j.contains("consistency")) {
          text += std::string("family ") + (j["consistency"]["consistent"].get<bool>() ? "consistent" : "inconsistent") +
                  " (max |D_ij| " + detail::num(j["consistency"]["max_off_diagonal"].get<double>()) + ")\n";
        }
      }
    } else if (sub == abl) {
      const auto in = experiment_from_json(detail::load(cfg));
      OutcomeDistribution d;
      if (in.pre) {
        d = sequence_distribution(TwoTimeExperiment(*in.pre, in.post, in.slots, in.unitaries));
      } else {
        d = mixed_sequence_distribution(*in.rho0, in.slots, in.unitaries, in.post);
      }
      text = cfg.format == "json" ? detail::dump(to_json(d)) : cfg.format == "csv" ? to_csv(d) : detail::pretty(d);
    }
  } catch (const ImpossiblePostselectionError& e) {
    err << "error: impossible post-selection: " << e.what() << "\n";
    return kImpossiblePostselection;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  if (cfg.out.empty()) {
    out << text;
  } else {
    std::ofstream f(cfg.out, std::ios::binary);
    if (!f) {
      err << "error: cannot write '" << cfg.out << "'\n";
      return kInputError;
    }
    f << text;
  }
  return code;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(std::move(args), out, err);
}

}  // namespace ehist::cli
