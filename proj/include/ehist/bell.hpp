#pragma once

// Temporal correlators and CHSH-type functionals: S_LGI, monogamy sums,
// chained sums, deterministic (macrorealist) bounds and a settings optimizer.

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ehist/errors.hpp"
#include "ehist/linalg.hpp"
#include "ehist/optimize.hpp"
#include "ehist/twostate.hpp"

namespace ehist {

inline const double kTsirelson = 2.0 * std::sqrt(2.0);

enum class EvalMode { independent, chained };

inline std::string to_string(EvalMode m) { return m == EvalMode::independent ? "independent" : "chained"; }

inline EvalMode parse_mode(const std::string& s) {
  if (s == "independent" || s == "independent_ensembles") return EvalMode::independent;
  if (s == "chained" || s == "chained_single_system") return EvalMode::chained;
  throw ArgumentError("unknown evaluation mode '" + s + "' (expected independent or chained)");
}

inline Matrix maximally_mixed(std::size_t d) { return (1.0 / static_cast<double>(d)) * Matrix::identity(d); }

inline void validate_density(const Matrix& rho, double tol = kDefaultTol) {
  if (!rho.is_square()) throw ShapeError("density matrix must be square");
  if (!is_hermitian(rho, tol)) throw ArgumentError("density matrix is not Hermitian");
  if (std::abs(trace(rho) - 1.0) > tol) throw ArgumentError("density matrix must have unit trace");
  for (const auto& p : eigh(rho))
    if (p.value < -tol) throw ArgumentError("density matrix is not positive semidefinite");
}

//------------------------------------------------------------------------------
// Correlators
//------------------------------------------------------------------------------

// Joint distribution of A then B (Lüders collapse), rho evolved by U between them.
inline OutcomeDistribution pair_distribution(const Matrix& rho, const MeasurementSetting& a, const Matrix& u,
                                             const MeasurementSetting& b) {
  OutcomeDistribution d;
  d.settings = {a.label(), b.label()};
  d.time_labels = {"t1", "t2"};
  for (const auto& key : outcome_strings(2)) {
    const Matrix c = matmul(b.projector(outcome_sign(key[1])), matmul(u, a.projector(outcome_sign(key[0]))));
    d.table[key] = std::max(0.0, trace(matmul(c, matmul(rho, dagger(c)))).real());
  }
  return d;
}

inline double correlator_from(const OutcomeDistribution& d) {
  double e = 0;
  for (const auto& [k, p] : d.table) {
    if (k.size() != 2) throw ArgumentError("correlator needs two-slot outcome strings");
    e += outcome_sign(k[0]) * outcome_sign(k[1]) * p;
  }
  return e;
}

// E = sum_ab a b Tr(P_b U P_a rho P_a U^dagger P_b)
inline double temporal_correlator(const Matrix& rho, const MeasurementSetting& a, const Matrix& u,
                                  const MeasurementSetting& b) {
  return correlator_from(pair_distribution(rho, a, u, b));
}

//------------------------------------------------------------------------------
// Reports
//------------------------------------------------------------------------------

struct BellReport {
  std::array<std::array<double, 2>, 2> c{};  // c[i][j] = <A_{i+1} B_{j+1}>
  double value = 0;
  double classical_bound = 2;
  double quantum_bound = kTsirelson;
  std::vector<std::string> settings_used;
  EvalMode mode = EvalMode::independent;

  bool exceeds_classical(double tol = kDefaultTol) const { return value > classical_bound + tol; }
  bool saturates_quantum(double tol = 1e-6) const { return std::abs(value - quantum_bound) <= tol; }
};

inline double chsh_value(const std::array<std::array<double, 2>, 2>& c) {
  return c[0][0] + c[0][1] + c[1][0] - c[1][1];
}

struct CorrelatorSpec {
  Matrix initial = maximally_mixed(2);
  // empty, or {t0 -> t1, t1 -> t2}
  std::vector<Matrix> interval_unitaries;
  std::array<MeasurementSetting, 2> alice;
  std::array<MeasurementSetting, 2> bob;
  EvalMode mode = EvalMode::independent;
};

namespace detail {

inline std::pair<Matrix, Matrix> two_gaps(const std::vector<Matrix>& u, std::size_t d) {
  if (u.empty()) return {Matrix::identity(d), Matrix::identity(d)};
  if (u.size() != 2) throw ArgumentError("CorrelatorSpec needs 0 or 2 interval unitaries");
  for (const auto& m : u)
    if (m.rows() != d || !is_unitary(m)) throw ArgumentError("interval operator is not a unitary of the right size");
  return {u[0], u[1]};
}

}  // namespace detail

// Each correlator is a fresh run from `initial`. Both modes evaluate identically
// for a single pair; the mode only matters once a third time is involved.
inline BellReport s_lgi(const CorrelatorSpec& spec) {
  validate_density(spec.initial);
  const std::size_t d = spec.initial.rows();
  const auto [u0, u1] = detail::two_gaps(spec.interval_unitaries, d);
  const Matrix rho1 = matmul(u0, matmul(spec.initial, dagger(u0)));
  BellReport r;
  r.mode = spec.mode;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) r.c[i][j] = temporal_correlator(rho1, spec.alice[i], u1, spec.bob[j]);
  r.value = chsh_value(r.c);
  r.settings_used = {spec.alice[0].label(), spec.alice[1].label(), spec.bob[0].label(), spec.bob[1].label()};
  return r;
}

// c_ij = sum_ab a b p(ab|ij); keys are (i, j) with i, j in {1, 2}.
inline BellReport lgi_from_distributions(const std::map<std::pair<int, int>, OutcomeDistribution>& dists) {
  BellReport r;
  for (int i = 1; i <= 2; ++i) {
    for (int j = 1; j <= 2; ++j) {
      auto it = dists.find({i, j});
      if (it == dists.end()) {
        throw ArgumentError("missing distribution for setting pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
      r.c[i - 1][j - 1] = correlator_from(it->second);
    }
  }
  r.value = chsh_value(r.c);
  return r;
}

//------------------------------------------------------------------------------
// Deterministic strategies
//------------------------------------------------------------------------------

// sum of coef * <x_{party_a, setting_a} x_{party_b, setting_b}> over +-1 variables.
struct LinearFunctional {
  struct Term {
    double coef;
    std::size_t party_a, setting_a;
    std::size_t party_b, setting_b;
  };
  std::size_t parties = 2;
  std::vector<Term> terms;

  static LinearFunctional from_coefficients(const std::array<std::array<double, 2>, 2>& k) {
    LinearFunctional f;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) f.terms.push_back({k[i][j], 0, i, 1, j});
    return f;
  }
  static LinearFunctional chsh() { return from_coefficients({{{1, 1}, {1, -1}}}); }
  static LinearFunctional all_plus() { return from_coefficients({{{1, 1}, {1, 1}}}); }

  // Pair functional between party p and p+1, CHSH signs.
  static void add_chsh(LinearFunctional& f, std::size_t p, std::size_t q) {
    const double s[2][2] = {{1, 1}, {1, -1}};
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) f.terms.push_back({s[i][j], p, i, q, j});
  }
  // S_AB + S_BC over three parties.
  static LinearFunctional monogamy() {
    LinearFunctional f;
    f.parties = 3;
    add_chsh(f, 0, 1);
    add_chsh(f, 1, 2);
    return f;
  }
  // n CHSH blocks along a path A_0 - A_1 - ... - A_n.
  static LinearFunctional chained_path(std::size_t n) {
    if (n == 0) throw ArgumentError("chained functional needs n >= 1");
    LinearFunctional f;
    f.parties = n + 1;
    for (std::size_t k = 0; k < n; ++k) add_chsh(f, k, k + 1);
    return f;
  }
  // n CHSH blocks sharing A_0: sum_i B(A_0, A_i).
  static LinearFunctional chained_star(std::size_t n) {
    if (n == 0) throw ArgumentError("chained functional needs n >= 1");
    LinearFunctional f;
    f.parties = n + 1;
    for (std::size_t k = 1; k <= n; ++k) add_chsh(f, 0, k);
    return f;
  }
};

// Max over all 2^(2*parties) deterministic +-1 assignments.
inline double classical_bound_bruteforce(const LinearFunctional& f) {
  const std::size_t bits = 2 * f.parties;
  if (bits > 24) throw ArgumentError("too many parties for exhaustive enumeration");
  for (const auto& t : f.terms)
    if (t.party_a >= f.parties || t.party_b >= f.parties || t.setting_a > 1 || t.setting_b > 1)
      throw ArgumentError("functional term refers to an unknown party or setting");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < (std::size_t{1} << bits); ++s) {
    auto val = [&](std::size_t party, std::size_t setting) { return ((s >> (2 * party + setting)) & 1U) ? -1.0 : 1.0; };
    double v = 0;
    for (const auto& t : f.terms) v += t.coef * val(t.party_a, t.setting_a) * val(t.party_b, t.setting_b);
    best = std::max(best, v);
  }
  return best;
}

inline double classical_bound_bruteforce(const std::array<std::array<double, 2>, 2>& coefficients) {
  return classical_bound_bruteforce(LinearFunctional::from_coefficients(coefficients));
}

//------------------------------------------------------------------------------
// Monogamy
//------------------------------------------------------------------------------

struct MonogamySpec {
  Matrix initial = maximally_mixed(2);
  // empty, or {t0 -> t1, t1 -> t2, t2 -> t3}
  std::vector<Matrix> interval_unitaries;
  std::array<MeasurementSetting, 2> alice;
  std::array<MeasurementSetting, 2> bob;
  std::array<MeasurementSetting, 2> charlie;
  EvalMode mode = EvalMode::independent;
};

struct MonogamyReport {
  BellReport ab;
  BellReport bc;
  double sum = 0;
  double quantum_reference = 2 * kTsirelson;
  double spatial_reference = 4;
  double classical_bound = 4;
  EvalMode mode = EvalMode::independent;
};

namespace detail {

inline std::array<Matrix, 3> three_gaps(const std::vector<Matrix>& u, std::size_t d) {
  if (u.empty()) return {Matrix::identity(d), Matrix::identity(d), Matrix::identity(d)};
  if (u.size() != 3) throw ArgumentError("MonogamySpec needs 0 or 3 interval unitaries");
  for (const auto& m : u)
    if (m.rows() != d || !is_unitary(m)) throw ArgumentError("interval operator is not a unitary of the right size");
  return {u[0], u[1], u[2]};
}

// p(abc|xyz) for one run A(t1), B(t2), C(t3).
inline OutcomeDistribution triple_distribution(const Matrix& rho, const std::array<Matrix, 3>& u,
                                               const MeasurementSetting& a, const MeasurementSetting& b,
                                               const MeasurementSetting& c) {
  OutcomeDistribution d;
  d.settings = {a.label(), b.label(), c.label()};
  d.time_labels = {"t1", "t2", "t3"};
  for (const auto& key : outcome_strings(3)) {
    Matrix k = u[0];
    k = matmul(a.projector(outcome_sign(key[0])), k);
    k = matmul(u[1], k);
    k = matmul(b.projector(outcome_sign(key[1])), k);
    k = matmul(u[2], k);
    k = matmul(c.projector(outcome_sign(key[2])), k);
    d.table[key] = std::max(0.0, trace(matmul(k, matmul(rho, dagger(k)))).real());
  }
  return d;
}

}  // namespace detail

// independent: S_AB and S_BC each from fresh runs of `initial`.
// chained: one run through t1, t2, t3; the AB statistics marginalize C, the BC
// statistics marginalize A with A's setting chosen uniformly.
inline MonogamyReport monogamy_sum(const MonogamySpec& spec) {
  validate_density(spec.initial);
  const std::size_t d = spec.initial.rows();
  const auto u = detail::three_gaps(spec.interval_unitaries, d);
  MonogamyReport r;
  r.mode = spec.mode;
  if (spec.mode == EvalMode::independent) {
    CorrelatorSpec ab{spec.initial, {u[0], u[1]}, spec.alice, spec.bob, spec.mode};
    const Matrix rho1 = matmul(u[1], matmul(matmul(u[0], matmul(spec.initial, dagger(u[0]))), dagger(u[1])));
    CorrelatorSpec bc{rho1, {Matrix::identity(d), u[2]}, spec.bob, spec.charlie, spec.mode};
    r.ab = s_lgi(ab);
    r.bc = s_lgi(bc);
  } else {
    r.ab.mode = r.bc.mode = EvalMode::chained;
    for (std::size_t x = 0; x < 2; ++x) {
      for (std::size_t y = 0; y < 2; ++y) {
        // C's setting does not influence the earlier pair; z = 0 is used
        const auto t = detail::triple_distribution(spec.initial, u, spec.alice[x], spec.bob[y], spec.charlie[0]);
        double e = 0;
        for (const auto& [k, p] : t.table) e += outcome_sign(k[0]) * outcome_sign(k[1]) * p;
        r.ab.c[x][y] = e;
      }
    }
    for (std::size_t y = 0; y < 2; ++y) {
      for (std::size_t z = 0; z < 2; ++z) {
        double e = 0;
        for (std::size_t x = 0; x < 2; ++x) {
          const auto t = detail::triple_distribution(spec.initial, u, spec.alice[x], spec.bob[y], spec.charlie[z]);
          for (const auto& [k, p] : t.table) e += 0.5 * outcome_sign(k[1]) * outcome_sign(k[2]) * p;
        }
        r.bc.c[y][z] = e;
      }
    }
    r.ab.value = chsh_value(r.ab.c);
    r.bc.value = chsh_value(r.bc.c);
    r.ab.settings_used = {spec.alice[0].label(), spec.alice[1].label(), spec.bob[0].label(), spec.bob[1].label()};
    r.bc.settings_used = {spec.bob[0].label(), spec.bob[1].label(), spec.charlie[0].label(), spec.charlie[1].label()};
  }
  r.sum = r.ab.value + r.bc.value;
  return r;
}

//------------------------------------------------------------------------------
// Chained sums
//------------------------------------------------------------------------------

struct ChainedReport {
  std::size_t n = 0;
  std::vector<double> values;
  double sum = 0;
  double bound = 0;            // 2 sqrt(2) n
  double classical_bound = 0;  // 2 n
};

// n copies of the same two-time block, each on a fresh ensemble.
inline ChainedReport chained_bell(std::size_t n, const CorrelatorSpec& block) {
  if (n == 0) throw ArgumentError("chained_bell needs n >= 1");
  ChainedReport r;
  r.n = n;
  const double v = s_lgi(block).value;
  r.values.assign(n, v);
  for (double x : r.values) r.sum += x;
  r.bound = kTsirelson * static_cast<double>(n);
  r.classical_bound = 2.0 * static_cast<double>(n);
  return r;
}

//------------------------------------------------------------------------------
// Presets
//------------------------------------------------------------------------------

struct BlochAngles {
  double theta = 0;
  double phi = 0;
};

struct SettingsPreset {
  std::string name;
  std::array<MeasurementSetting, 2> alice;
  std::array<MeasurementSetting, 2> bob;
  std::array<MeasurementSetting, 2> charlie;
  std::string note;
};

inline std::vector<std::string> preset_names() { return {"tsirelson", "shared-z", "classical"}; }

inline SettingsPreset preset(const std::string& name) {
  const double q = std::numbers::pi / 4;
  const MeasurementSetting z = MeasurementSetting::Z(), x = MeasurementSetting::X();
  const MeasurementSetting zpx("(Z+X)/sqrt2", pauli::bloch(q, 0));
  const MeasurementSetting zmx("(Z-X)/sqrt2", pauli::bloch(q, std::numbers::pi));
  if (name == "tsirelson") {
    return {name, {z, x}, {zpx, zmx}, {z, x}, "A=(Z,X), B=((Z+X)/sqrt2,(Z-X)/sqrt2), C=(Z,X)"};
  }
  if (name == "shared-z") {
    return {name, {z, zpx}, {z, zmx}, {z, zpx},
            "A=(Z,(Z+X)/sqrt2), B=(Z,(Z-X)/sqrt2); evaluates to 1+sqrt2 under sequential collapse, not 2sqrt2"};
  }
  if (name == "classical") return {name, {z, z}, {z, z}, {z, z}, "all settings Z"};
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ArgumentError("unknown preset '" + name + "' (valid: " + valid + ")");
}

//------------------------------------------------------------------------------
// Optimizer
//------------------------------------------------------------------------------

enum class Objective { s_lgi, monogamy_sum, chained_bell };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::s_lgi: return "s_lgi";
    case Objective::monogamy_sum: return "monogamy_sum";
    case Objective::chained_bell: return "chained_bell";
  }
  return "?";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "s_lgi" || s == "lgi") return Objective::s_lgi;
  if (s == "monogamy_sum" || s == "monogamy") return Objective::monogamy_sum;
  if (s == "chained_bell" || s == "chained") return Objective::chained_bell;
  throw ArgumentError("unknown objective '" + s + "' (expected s_lgi, monogamy_sum or chained_bell)");
}

struct OptimizeConfig {
  Objective objective = Objective::s_lgi;
  std::size_t n = 1;  // chained_bell blocks
  Matrix initial = maximally_mixed(2);
  EvalMode mode = EvalMode::independent;
  std::uint64_t seed = 1;
  std::size_t starts = 4;
  std::size_t polar_points = 12;
  std::size_t azimuth_points = 24;
  std::size_t sweeps = 2;
  NelderMeadConfig local{};
  // Per-setting pins, in the order A1 A2 B1 B2 [C1 C2]; pinned settings are not searched.
  std::vector<std::optional<MeasurementSetting>> fixed;
};

struct TraceRow {
  std::size_t iteration;
  std::string stage;
  std::vector<double> angles;  // theta, phi per setting
  double value;
};

struct OptimizeResult {
  std::vector<MeasurementSetting> settings;
  std::vector<BlochAngles> angles;  // zero for pinned settings
  double value = 0;
  bool converged = false;
  std::size_t evaluations = 0;
  std::vector<TraceRow> trace;
};

inline std::size_t setting_count(Objective o) { return o == Objective::monogamy_sum ? 6 : 4; }

// Value of the objective for a full list of settings (A1 A2 B1 B2 [C1 C2]).
inline double objective_value(const OptimizeConfig& cfg, const std::vector<MeasurementSetting>& s) {
  if (s.size() != setting_count(cfg.objective)) throw ArgumentError("wrong number of settings for the objective");
  switch (cfg.objective) {
    case Objective::s_lgi: return s_lgi({cfg.initial, {}, {s[0], s[1]}, {s[2], s[3]}, cfg.mode}).value;
    case Objective::chained_bell:
      return chained_bell(cfg.n, {cfg.initial, {}, {s[0], s[1]}, {s[2], s[3]}, cfg.mode}).sum;
    case Objective::monogamy_sum:
      return monogamy_sum({cfg.initial, {}, {s[0], s[1]}, {s[2], s[3]}, {s[4], s[5]}, cfg.mode}).sum;
  }
  return 0;
}

// Cyclic coarse grid per free setting, then Nelder-Mead on all free angles,
// from several seeded starts. Maximizes.
inline OptimizeResult optimize_settings(const OptimizeConfig& cfg) {
  if (cfg.initial.rows() != 2) throw ArgumentError("optimizer parameterizes qubit observables only");
  validate_density(cfg.initial);
  const std::size_t ns = setting_count(cfg.objective);
  if (!cfg.fixed.empty() && cfg.fixed.size() != ns) throw ArgumentError("fixed-settings list has the wrong length");
  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < ns; ++k)
    if (cfg.fixed.empty() || !cfg.fixed[k]) free.push_back(k);
  if (cfg.starts == 0 || cfg.polar_points < 2 || cfg.azimuth_points < 1) throw ArgumentError("bad optimizer grid/start configuration");

  OptimizeResult out;
  std::size_t evals = 0;
  auto build = [&](const std::vector<double>& x) {
    std::vector<MeasurementSetting> s(ns);
    for (std::size_t k = 0; k < ns; ++k)
      if (!cfg.fixed.empty() && cfg.fixed[k]) s[k] = *cfg.fixed[k];
    for (std::size_t f = 0; f < free.size(); ++f) s[free[f]] = MeasurementSetting::bloch(x[2 * f], x[2 * f + 1]);
    return s;
  };
  auto value = [&](const std::vector<double>& x) {
    ++evals;
    return objective_value(cfg, build(x));
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> best_x;
  double best_v = -std::numeric_limits<double>::infinity();
  bool best_conv = false;
  std::size_t iteration = 0;

  for (std::size_t start = 0; start < cfg.starts; ++start) {
    std::vector<double> x(2 * free.size());
    for (std::size_t f = 0; f < free.size(); ++f) {
      x[2 * f] = std::acos(1.0 - 2.0 * unit(rng));
      x[2 * f + 1] = 2.0 * std::numbers::pi * unit(rng);
    }
    double v = value(x);
    for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
      for (std::size_t f = 0; f < free.size(); ++f) {
        for (std::size_t i = 0; i < cfg.polar_points; ++i) {
          for (std::size_t j = 0; j < cfg.azimuth_points; ++j) {
            auto y = x;
            y[2 * f] = std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg.polar_points - 1);
            y[2 * f + 1] = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(cfg.azimuth_points);
            const double w = value(y);
            if (w > v) {
              v = w;
              x = std::move(y);
            }
          }
        }
      }
      out.trace.push_back({iteration++, "grid", x, v});
    }
    const auto nm = nelder_mead([&](const std::vector<double>& y) { return -value(y); }, x, cfg.local);
    if (-nm.value >= v) {
      x = nm.x;
      v = -nm.value;
    }
    out.trace.push_back({iteration++, nm.converged ? "local" : "local-unconverged", x, v});
    if (v > best_v) {
      best_v = v;
      best_x = x;
      best_conv = nm.converged;
    }
  }

  out.settings = build(best_x);
  out.angles.assign(ns, BlochAngles{});
  for (std::size_t f = 0; f < free.size(); ++f) out.angles[free[f]] = {best_x[2 * f], best_x[2 * f + 1]};
  out.value = best_v;
  out.converged = best_conv;
  out.evaluations = evals;
  return out;
}

}  // namespace ehist
