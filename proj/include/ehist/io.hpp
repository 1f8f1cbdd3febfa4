#pragma once

// JSON documents and CSV tables for histories, experiments, distributions and
// Bell reports, plus the parsers for the CLI input files.
//
// Complex numbers are [re, im] pairs; matrices are arrays of rows; kets are
// arrays of amplitudes. Inputs also accept names ("X", "z+", "phi+", ...).

#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ehist/bell.hpp"
#include "ehist/errors.hpp"
#include "ehist/histories.hpp"
#include "ehist/linalg.hpp"
#include "ehist/scenarios.hpp"
#include "ehist/twostate.hpp"

namespace ehist {

using json = nlohmann::ordered_json;

// Malformed input document; the message carries a line number or a JSON path.
class InputError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

//------------------------------------------------------------------------------
// Writers
//------------------------------------------------------------------------------

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(to_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Ket& k) {
  json a = json::array();
  for (std::size_t i = 0; i < k.dim(); ++i) a.push_back(to_json(k[i]));
  return a;
}

inline json to_json(const TimeGrid& g) { return {{"labels", g.labels()}, {"dims", g.dims()}}; }

inline json to_json(const HistoryState& h) {
  json terms = json::array();
  for (const auto& t : h.terms()) {
    json slots = json::array();
    for (const auto& m : t.history.slots()) slots.push_back(to_json(m));
    terms.push_back({{"coefficient", to_json(t.coefficient)}, {"slots", std::move(slots)}});
  }
  return {{"grid", to_json(h.grid())}, {"rendered", render(h)}, {"terms", std::move(terms)}};
}

inline json to_json(const BridgingSet& b) {
  json u = json::array();
  for (const auto& m : b.unitaries()) u.push_back(to_json(m));
  return {{"grid", to_json(b.grid())}, {"unitaries", std::move(u)}};
}

inline json to_json(const MixedHistory& m) {
  json members = json::array();
  for (const auto& e : m.ensemble()) members.push_back({{"probability", e.probability}, {"history", to_json(e.history)}});
  return {{"members", std::move(members)}, {"purity", purity(m)}};
}

inline json to_json(const OutcomeDistribution& d) {
  json rows = json::array();
  for (const auto& key : outcome_strings(d.settings.size())) {
    rows.push_back({{"outcome", d.render_outcome(key)}, {"probability", d.probability(key)}});
  }
  return {{"settings", d.settings}, {"table", std::move(rows)}};
}

inline json to_json(const BellReport& r) {
  return {{"correlators", {{r.c[0][0], r.c[0][1]}, {r.c[1][0], r.c[1][1]}}},
          {"value", r.value},
          {"classical_bound", r.classical_bound},
          {"quantum_bound", r.quantum_bound},
          {"exceeds_classical", r.exceeds_classical()},
          {"saturates_quantum", r.saturates_quantum()},
          {"settings", r.settings_used},
          {"mode", to_string(r.mode)}};
}

inline json to_json(const ConsistencyReport& r) {
  return {{"consistent", r.consistent}, {"tol", r.tol}, {"max_off_diagonal", r.max_off_diagonal},
          {"decoherence", to_json(r.decoherence)}};
}

inline json to_json(const HistoryFamily& f) {
  json members = json::array();
  for (const auto& h : f.members) members.push_back(to_json(h));
  return {{"members", std::move(members)}, {"bridging", to_json(f.bridging)}, {"consistency", to_json(f.report)}};
}

inline json to_json(const MeasurementSetting& s) { return {{"label", s.label()}, {"observable", to_json(s.observable())}}; }

inline json to_json(const TwoTimeExperiment& e) {
  json slots = json::array();
  for (const auto& s : e.slots()) slots.push_back(s ? to_json(*s) : json(nullptr));
  json u = json::array();
  for (const auto& m : e.unitaries()) u.push_back(to_json(m));
  return {{"pre", to_json(e.pre())},
          {"post", e.post() ? to_json(*e.post()) : json(nullptr)},
          {"slots", std::move(slots)},
          {"unitaries", std::move(u)}};
}

inline json to_json(const MonogamyReport& r) {
  return {{"mode", to_string(r.mode)},
          {"S_AB", to_json(r.ab)},
          {"S_BC", to_json(r.bc)},
          {"sum", r.sum},
          {"quantum_reference", r.quantum_reference},
          {"spatial_reference", r.spatial_reference},
          {"exceeds_spatial", r.sum > r.spatial_reference + kDefaultTol}};
}

inline json to_json(const ChainedReport& r) {
  return {{"n", r.n}, {"values", r.values}, {"sum", r.sum}, {"bound", r.bound}, {"classical_bound", r.classical_bound}};
}

inline json to_json(const OptimizeResult& r) {
  json settings = json::array();
  for (std::size_t k = 0; k < r.settings.size(); ++k) {
    json s = to_json(r.settings[k]);
    s["theta"] = r.angles[k].theta;
    s["phi"] = r.angles[k].phi;
    settings.push_back(std::move(s));
  }
  return {{"value", r.value}, {"converged", r.converged}, {"evaluations", r.evaluations}, {"settings", std::move(settings)}};
}

inline json to_json(const Artifact& a) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double> || std::is_same_v<T, std::string>) {
          return json(v);
        } else {
          return to_json(v);
        }
      },
      a);
}

inline json to_json(const ScenarioResult& r) {
  json artifacts = json::object();
  for (const auto& [k, a] : r.artifacts) artifacts[k] = to_json(a);
  return {{"name", r.name}, {"artifacts", std::move(artifacts)}, {"notes", r.notes}};
}

//------------------------------------------------------------------------------
// CSV
//------------------------------------------------------------------------------

inline std::string format_number(double v, int digits = 12) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

// RFC 4180 quoting when needed.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string to_csv(const OutcomeDistribution& d) {
  std::string out = "outcome,probability\r\n";
  for (const auto& key : outcome_strings(d.settings.size()))
    out += csv_field(d.render_outcome(key)) + "," + format_number(d.probability(key)) + "\r\n";
  return out;
}

inline std::string to_csv(const BellReport& r) {
  std::string out = "quantity,value\r\n";
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      out += "c" + std::to_string(i + 1) + std::to_string(j + 1) + "," + format_number(r.c[i][j]) + "\r\n";
  out += "value," + format_number(r.value) + "\r\n";
  out += "classical_bound," + format_number(r.classical_bound) + "\r\n";
  out += "quantum_bound," + format_number(r.quantum_bound) + "\r\n";
  out += "mode," + to_string(r.mode) + "\r\n";
  return out;
}

inline std::string to_csv(const std::vector<TraceRow>& trace) {
  std::string out = "iteration,stage,angles,value\r\n";
  for (const auto& row : trace) {
    std::string angles;
    for (std::size_t i = 0; i < row.angles.size(); ++i) angles += (i ? " " : "") + format_number(row.angles[i]);
    out += std::to_string(row.iteration) + "," + row.stage + "," + csv_field(angles) + "," + format_number(row.value) + "\r\n";
  }
  return out;
}

// artifact,key,value rows; structured artifacts are flattened one level.
inline std::string to_csv(const ScenarioResult& r) {
  std::string out = "artifact,key,value\r\n";
  auto row = [&](const std::string& a, const std::string& k, const std::string& v) {
    out += csv_field(a) + "," + csv_field(k) + "," + csv_field(v) + "\r\n";
  };
  for (const auto& [name, a] : r.artifacts) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, double>) {
            row(name, "value", format_number(v));
          } else if constexpr (std::is_same_v<T, std::string>) {
            row(name, "value", v);
          } else if constexpr (std::is_same_v<T, HistoryState>) {
            row(name, "history", render(v));
          } else if constexpr (std::is_same_v<T, MixedHistory>) {
            for (const auto& e : v.ensemble()) row(name, render(e.history), format_number(e.probability));
            row(name, "purity", format_number(purity(v)));
          } else if constexpr (std::is_same_v<T, OutcomeDistribution>) {
            for (const auto& key : outcome_strings(v.settings.size())) row(name, v.render_outcome(key), format_number(v.probability(key)));
          } else if constexpr (std::is_same_v<T, BellReport>) {
            row(name, "value", format_number(v.value));
          } else if constexpr (std::is_same_v<T, ConsistencyReport>) {
            row(name, "consistent", v.consistent ? "true" : "false");
            row(name, "max_off_diagonal", format_number(v.max_off_diagonal));
          } else if constexpr (std::is_same_v<T, HistoryFamily>) {
            for (std::size_t i = 0; i < v.members.size(); ++i) row(name, "member" + std::to_string(i), render(v.members[i]));
            row(name, "consistent", v.report.consistent ? "true" : "false");
            row(name, "max_off_diagonal", format_number(v.report.max_off_diagonal));
          } else if constexpr (std::is_same_v<T, Matrix>) {
            row(name, "matrix", to_json(v).dump());
          } else if constexpr (std::is_same_v<T, TwoTimeExperiment>) {
            row(name, "experiment", to_json(v).dump());
          }
        },
        a);
  }
  for (const auto& n : r.notes) row("notes", "note", n);
  return out;
}

//------------------------------------------------------------------------------
// Parsing
//------------------------------------------------------------------------------

inline json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    std::string what = e.what();
    if (auto p = what.find("syntax error"); p != std::string::npos) what = what.substr(p);
    throw InputError("line " + std::to_string(line) + ": " + what);
  }
}

namespace detail {

[[noreturn]] inline void bad(const std::string& path, const std::string& msg) { throw InputError(path + ": " + msg); }

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

}  // namespace detail

inline cplx complex_from_json(const json& j, const std::string& path = "$") {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2) return {detail::number(j[0], path + "[0]"), detail::number(j[1], path + "[1]")};
  detail::bad(path, "expected a number or [re, im]");
}

inline std::optional<Matrix> named_matrix(const std::string& n) {
  static const std::map<std::string, Matrix (*)()> table = {
      {"I", pauli::I},         {"X", pauli::X},          {"Y", pauli::Y},          {"Z", pauli::Z},
      {"H", hadamard},         {"z+", proj::z_plus},     {"z-", proj::z_minus},    {"x+", proj::x_plus},
      {"x-", proj::x_minus},   {"y+", proj::y_plus},     {"y-", proj::y_minus},
  };
  if (auto it = table.find(n); it != table.end()) return it->second();
  if (n == "I4") return Matrix::identity(4);
  if (n == "phi+") return kets::phi_plus().projector();
  return std::nullopt;
}

inline std::optional<Ket> named_ket(const std::string& n) {
  if (n == "0") return kets::zero();
  if (n == "1") return kets::one();
  if (n == "+") return kets::plus();
  if (n == "-") return kets::minus();
  if (n == "+i") return kets::plus_i();
  if (n == "-i") return kets::minus_i();
  if (n == "phi+") return kets::phi_plus();
  return std::nullopt;
}

inline Matrix matrix_from_json(const json& j, const std::string& path = "$") {
  if (j.is_string()) {
    if (auto m = named_matrix(j.get<std::string>())) return *m;
    detail::bad(path, "unknown operator name '" + j.get<std::string>() + "'");
  }
  if (j.is_object() && j.contains("theta")) {
    return pauli::bloch(detail::number(j["theta"], path + ".theta"), detail::number(j.value("phi", json(0.0)), path + ".phi"));
  }
  if (!j.is_array() || j.empty()) detail::bad(path, "expected an operator name or an array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  std::vector<cplx> entries;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array()) detail::bad(rp, "expected a row array");
    if (i == 0) cols = j[i].size();
    if (j[i].size() != cols || cols == 0) detail::bad(rp, "ragged or empty row");
    for (std::size_t c = 0; c < cols; ++c) entries.push_back(complex_from_json(j[i][c], rp + "[" + std::to_string(c) + "]"));
  }
  try {
    return Matrix(rows, cols, std::move(entries));
  } catch (const Error& e) {
    detail::bad(path, e.what());
  }
}

inline Ket ket_from_json(const json& j, const std::string& path = "$") {
  if (j.is_string()) {
    if (auto k = named_ket(j.get<std::string>())) return *k;
    detail::bad(path, "unknown state name '" + j.get<std::string>() + "'");
  }
  if (!j.is_array() || j.empty()) detail::bad(path, "expected a state name or an array of amplitudes");
  std::vector<cplx> a;
  for (std::size_t i = 0; i < j.size(); ++i) a.push_back(complex_from_json(j[i], path + "[" + std::to_string(i) + "]"));
  return Ket(std::move(a));
}

inline MeasurementSetting setting_from_json(const json& j, const std::string& path = "$") {
  try {
    if (j.is_string()) {
      const auto n = j.get<std::string>();
      if (n == "X" || n == "Y" || n == "Z") return {n, *named_matrix(n)};
      detail::bad(path, "unknown setting '" + n + "' (use X, Y, Z, {theta, phi} or {label, observable})");
    }
    if (j.is_object() && j.contains("theta")) {
      const double th = detail::number(j["theta"], path + ".theta");
      const double ph = j.contains("phi") ? detail::number(j["phi"], path + ".phi") : 0.0;
      return MeasurementSetting::bloch(th, ph, j.value("label", std::string{}));
    }
    if (j.is_object() && j.contains("observable")) {
      return {j.value("label", std::string{"A"}), matrix_from_json(j["observable"], path + ".observable")};
    }
  } catch (const InputError&) {
    throw;
  } catch (const Error& e) {
    detail::bad(path, e.what());
  }
  detail::bad(path, "expected a setting name, {theta, phi} or {label, observable}");
}

inline Matrix density_from_json(const json& j, const std::string& path = "$") {
  if (j.is_string() && j.get<std::string>() == "maximally-mixed") return maximally_mixed(2);
  if (j.is_object() && j.contains("maximally-mixed")) {
    return maximally_mixed(static_cast<std::size_t>(detail::number(j["maximally-mixed"], path + ".maximally-mixed")));
  }
  if (j.is_object() && j.contains("ket")) return ket_from_json(j["ket"], path + ".ket").normalized().projector();
  if (j.is_string()) {
    if (auto k = named_ket(j.get<std::string>())) return k->projector();
  }
  return matrix_from_json(j, path);
}

inline HistoryState history_from_json(const json& j, const std::string& path = "$") {
  if (!j.is_object() || !j.contains("terms") || !j["terms"].is_array() || j["terms"].empty()) {
    detail::bad(path, "history needs a nonempty 'terms' array");
  }
  std::vector<std::vector<Matrix>> slots;
  std::vector<cplx> coef;
  for (std::size_t t = 0; t < j["terms"].size(); ++t) {
    const auto& term = j["terms"][t];
    const std::string tp = path + ".terms[" + std::to_string(t) + "]";
    if (!term.is_object() || !term.contains("slots") || !term["slots"].is_array()) detail::bad(tp, "term needs a 'slots' array");
    coef.push_back(term.contains("coefficient") ? complex_from_json(term["coefficient"], tp + ".coefficient") : cplx(1.0));
    std::vector<Matrix> ops;
    for (std::size_t s = 0; s < term["slots"].size(); ++s)
      ops.push_back(matrix_from_json(term["slots"][s], tp + ".slots[" + std::to_string(s) + "]"));
    slots.push_back(std::move(ops));
  }
  try {
    std::vector<double> labels;
    std::vector<std::size_t> dims;
    if (j.contains("grid") && j["grid"].contains("labels")) {
      labels = j["grid"]["labels"].get<std::vector<double>>();
    } else {
      for (std::size_t s = 0; s < slots.front().size(); ++s) labels.push_back(static_cast<double>(s));
    }
    for (const auto& m : slots.front()) dims.push_back(m.rows());
    const TimeGrid g(labels, dims);
    HistoryState h(g);
    for (std::size_t t = 0; t < slots.size(); ++t) h += coef[t] * HistoryState(ElementaryHistory(g, slots[t]));
    return h;
  } catch (const json::exception& e) {
    detail::bad(path + ".grid", e.what());
  } catch (const Error& e) {
    detail::bad(path, e.what());
  }
}

inline BridgingSet bridging_from_json(const json& j, const TimeGrid& g, const std::string& path = "$") {
  if (j.is_null()) return BridgingSet::trivial(g);
  if (!j.is_array()) detail::bad(path, "bridging must be an array of unitaries");
  std::vector<Matrix> u;
  for (std::size_t k = 0; k < j.size(); ++k) u.push_back(matrix_from_json(j[k], path + "[" + std::to_string(k) + "]"));
  try {
    return BridgingSet(g, std::move(u));
  } catch (const Error& e) {
    detail::bad(path, e.what());
  }
}

// Experiment file: {"pre": ket | "rho0": density, "post": ket | null,
// "slots": [setting | null, ...], "unitaries": [matrix, ...]}
struct ExperimentInput {
  std::optional<Ket> pre;
  std::optional<Matrix> rho0;
  std::optional<Ket> post;
  std::vector<std::optional<MeasurementSetting>> slots;
  std::vector<Matrix> unitaries;
};

inline ExperimentInput experiment_from_json(const json& j) {
  if (!j.is_object()) detail::bad("$", "experiment must be an object");
  ExperimentInput in;
  if (j.contains("pre") && j.contains("rho0")) detail::bad("$", "give either 'pre' or 'rho0', not both");
  if (j.contains("pre")) {
    in.pre = ket_from_json(j["pre"], "$.pre");
  } else if (j.contains("rho0")) {
    in.rho0 = density_from_json(j["rho0"], "$.rho0");
  } else {
    detail::bad("$", "missing 'pre' or 'rho0'");
  }
  if (j.contains("post") && !j["post"].is_null()) in.post = ket_from_json(j["post"], "$.post");
  if (!j.contains("slots") || !j["slots"].is_array()) detail::bad("$", "missing 'slots' array");
  for (std::size_t k = 0; k < j["slots"].size(); ++k) {
    const auto& s = j["slots"][k];
    in.slots.push_back(s.is_null() ? std::nullopt
                                   : std::optional<MeasurementSetting>(setting_from_json(s, "$.slots[" + std::to_string(k) + "]")));
  }
  if (j.contains("unitaries")) {
    if (!j["unitaries"].is_array()) detail::bad("$.unitaries", "expected an array");
    for (std::size_t k = 0; k < j["unitaries"].size(); ++k)
      in.unitaries.push_back(matrix_from_json(j["unitaries"][k], "$.unitaries[" + std::to_string(k) + "]"));
  }
  return in;
}

// Bell spec file: {"initial": density, "mode": "independent" | "chained",
// "alice": [s, s], "bob": [s, s], "charlie": [s, s], "n": int, "unitaries": [...]}
struct BellInput {
  Matrix initial = maximally_mixed(2);
  EvalMode mode = EvalMode::independent;
  std::optional<std::array<MeasurementSetting, 2>> alice, bob, charlie;
  std::optional<std::size_t> n;
  std::vector<Matrix> unitaries;
};

inline BellInput bell_from_json(const json& j) {
  if (!j.is_object()) detail::bad("$", "bell spec must be an object");
  BellInput in;
  if (j.contains("initial")) {
    in.initial = density_from_json(j["initial"], "$.initial");
    try {
      validate_density(in.initial);
    } catch (const Error& e) {
      detail::bad("$.initial", e.what());
    }
  }
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) detail::bad("$.mode", "expected a string");
    try {
      in.mode = parse_mode(j["mode"].get<std::string>());
    } catch (const Error& e) {
      detail::bad("$.mode", e.what());
    }
  }
  auto pair = [&](const char* key) -> std::optional<std::array<MeasurementSetting, 2>> {
    if (!j.contains(key)) return std::nullopt;
    const std::string p = std::string("$.") + key;
    if (!j[key].is_array() || j[key].size() != 2) detail::bad(p, "expected two settings");
    return std::array<MeasurementSetting, 2>{setting_from_json(j[key][0], p + "[0]"), setting_from_json(j[key][1], p + "[1]")};
  };
  in.alice = pair("alice");
  in.bob = pair("bob");
  in.charlie = pair("charlie");
  if (j.contains("n")) {
    if (!j["n"].is_number_integer() || j["n"].get<long long>() < 1) detail::bad("$.n", "expected a positive integer");
    in.n = j["n"].get<std::size_t>();
  }
  if (j.contains("unitaries")) {
    if (!j["unitaries"].is_array()) detail::bad("$.unitaries", "expected an array");
    for (std::size_t k = 0; k < j["unitaries"].size(); ++k)
      in.unitaries.push_back(matrix_from_json(j["unitaries"][k], "$.unitaries[" + std::to_string(k) + "]"));
  }
  return in;
}

}  // namespace ehist
