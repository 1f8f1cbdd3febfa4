#pragma once

// Pre- and post-selected sequential measurements: the ABL rule, outcome
// distributions over measurement sequences, history bundles and the
// coherent-amplitude reading of inserted projectors.

#include <cmath>
#include <iomanip>
#include <sstream>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ehist/errors.hpp"
#include "ehist/histories.hpp"
#include "ehist/linalg.hpp"

namespace ehist {

inline constexpr double kImpossibleNormalizer = 1e-15;

//------------------------------------------------------------------------------
// MeasurementSetting
//------------------------------------------------------------------------------

// Dichotomic observable A (A = A^dagger, A^2 = I) with its +1/-1 eigenprojectors.
class MeasurementSetting {
 public:
  MeasurementSetting() : MeasurementSetting("Z", pauli::Z()) {}

  MeasurementSetting(std::string label, Matrix observable, double tol = kDefaultTol)
      : label_(std::move(label)), observable_(std::move(observable)) {
    if (!observable_.is_square()) throw ShapeError("observable must be square");
    if (!is_hermitian(observable_, tol)) throw ArgumentError("observable '" + label_ + "' is not Hermitian");
    const Matrix id = Matrix::identity(observable_.rows());
    if (max_abs_diff(matmul(observable_, observable_), id) > tol) {
      throw ArgumentError("observable '" + label_ + "' is not dichotomic (A^2 != I)");
    }
    plus_ = 0.5 * (id + observable_);
    minus_ = 0.5 * (id - observable_);
  }

  static MeasurementSetting X() { return {"X", pauli::X()}; }
  static MeasurementSetting Y() { return {"Y", pauli::Y()}; }
  static MeasurementSetting Z() { return {"Z", pauli::Z()}; }
  static MeasurementSetting bloch(double theta, double phi, std::string label = {}) {
    if (label.empty()) {
      std::ostringstream os;
      os << std::setprecision(6) << "n(" << theta << ',' << phi << ')';
      label = os.str();
    }
    return {std::move(label), pauli::bloch(theta, phi)};
  }

  const std::string& label() const { return label_; }
  const Matrix& observable() const { return observable_; }
  std::size_t dim() const { return observable_.rows(); }

  // outcome is +1 or -1
  const Matrix& projector(int outcome) const {
    if (outcome == 1) return plus_;
    if (outcome == -1) return minus_;
    throw ArgumentError("measurement outcome must be +1 or -1");
  }

 private:
  std::string label_;
  Matrix observable_;
  Matrix plus_;
  Matrix minus_;
};

//------------------------------------------------------------------------------
// TwoTimeExperiment
//------------------------------------------------------------------------------

// Pre-selected state, optional post-selection, and one optional measurement
// per intermediate time. unitaries[k] evolves from time k to time k+1, where
// time 0 is the preparation and time slots.size()+1 the post-selection.
class TwoTimeExperiment {
 public:
  TwoTimeExperiment() = default;

  TwoTimeExperiment(Ket pre, std::optional<Ket> post, std::vector<std::optional<MeasurementSetting>> slots,
                    std::vector<Matrix> unitaries = {}, double tol = kDefaultTol)
      : pre_(std::move(pre)), post_(std::move(post)), slots_(std::move(slots)), unitaries_(std::move(unitaries)) {
    const std::size_t d = pre_.dim();
    if (!pre_.is_normalized(tol)) throw ArgumentError("pre-selected state must be normalized");
    if (post_) {
      if (post_->dim() != d) throw ShapeError("post-selected state dimension differs from pre-selected state");
      if (!post_->is_normalized(tol)) throw ArgumentError("post-selected state must be normalized");
    }
    for (const auto& s : slots_)
      if (s && s->dim() != d) throw ShapeError("measurement setting dimension differs from the state");
    if (unitaries_.empty()) unitaries_.assign(slots_.size() + 1, Matrix::identity(d));
    if (unitaries_.size() != slots_.size() + 1) {
      throw ArgumentError("experiment needs slots+1 interval unitaries (got " + std::to_string(unitaries_.size()) + ")");
    }
    for (const auto& u : unitaries_) {
      if (u.rows() != d || u.cols() != d) throw ShapeError("interval unitary has the wrong dimension");
      if (!is_unitary(u, tol)) throw ArgumentError("interval operator is not unitary");
    }
  }

  const Ket& pre() const { return pre_; }
  const std::optional<Ket>& post() const { return post_; }
  const std::vector<std::optional<MeasurementSetting>>& slots() const { return slots_; }
  const std::vector<Matrix>& unitaries() const { return unitaries_; }
  std::size_t dim() const { return pre_.dim(); }

  std::vector<std::size_t> measured_slots() const {
    std::vector<std::size_t> m;
    for (std::size_t k = 0; k < slots_.size(); ++k)
      if (slots_[k]) m.push_back(k);
    return m;
  }

 private:
  Ket pre_;
  std::optional<Ket> post_;
  std::vector<std::optional<MeasurementSetting>> slots_;
  std::vector<Matrix> unitaries_;
};

//------------------------------------------------------------------------------
// OutcomeDistribution
//------------------------------------------------------------------------------

// Outcome keys hold one '+' or '-' per measured slot, earliest first.
struct OutcomeDistribution {
  std::vector<std::string> settings;       // labels of the measured settings, earliest first
  std::vector<std::string> time_labels;    // e.g. "t1", one per measured setting
  std::map<std::string, double> table;

  double probability(const std::string& outcome) const {
    auto it = table.find(outcome);
    return it == table.end() ? 0.0 : it->second;
  }

  double total() const {
    double s = 0;
    for (const auto& [k, p] : table) s += p;
    return s;
  }

  // "t1:+ t2:-"
  std::string render_outcome(const std::string& outcome) const {
    std::string out;
    for (std::size_t i = 0; i < outcome.size(); ++i) {
      if (i) out += ' ';
      out += (i < time_labels.size() ? time_labels[i] : "s" + std::to_string(i)) + ':' + outcome[i];
    }
    return out;
  }
};

// All outcome strings of length m in '+' < '-' lexicographic order.
inline std::vector<std::string> outcome_strings(std::size_t m) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < (std::size_t{1} << m); ++k) {
    std::string s(m, '+');
    for (std::size_t i = 0; i < m; ++i)
      if ((k >> (m - 1 - i)) & 1U) s[i] = '-';
    out.push_back(std::move(s));
  }
  return out;
}

inline int outcome_sign(char c) { return c == '+' ? 1 : -1; }

namespace detail {

// U_n P_n ... U_1 P_1 U_0 for the measured outcomes (identity at unmeasured slots).
// The last unitary is included only when include_final is set.
inline Matrix sequence_operator(const std::vector<std::optional<MeasurementSetting>>& slots,
                                const std::vector<Matrix>& unitaries, const std::string& outcome, bool include_final) {
  const std::size_t d = unitaries.front().rows();
  Matrix op = unitaries.front();
  std::size_t m = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k]) op = matmul(slots[k]->projector(outcome_sign(outcome[m++])), op);
    if (k + 1 < slots.size() || include_final) op = matmul(unitaries[k + 1], op);
  }
  (void)d;
  return op;
}

inline OutcomeDistribution make_distribution(const std::vector<std::optional<MeasurementSetting>>& slots) {
  OutcomeDistribution d;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (!slots[k]) continue;
    d.settings.push_back(slots[k]->label());
    d.time_labels.push_back("t" + std::to_string(k + 1));
  }
  return d;
}

inline void normalize_table(OutcomeDistribution& d, double total) {
  if (!(total > kImpossibleNormalizer)) {
    throw ImpossiblePostselectionError("post-selection has zero total weight over all outcome strings");
  }
  for (auto& [k, p] : d.table) p /= total;
}

}  // namespace detail

//------------------------------------------------------------------------------
// ABL rule and sequential distributions
//------------------------------------------------------------------------------

// p(A = outcome) = |<Phi|U_2 P U_1|Psi>|^2 / sum_k |<Phi|U_2 P_k U_1|Psi>|^2
// for the single measured slot of a post-selected experiment.
inline double abl_probability(const TwoTimeExperiment& exp, std::size_t slot, int outcome) {
  if (!exp.post()) throw ArgumentError("abl_probability requires a post-selected state");
  const auto measured = exp.measured_slots();
  if (measured.size() != 1) throw ArgumentError("abl_probability requires exactly one measured slot");
  if (measured.front() != slot) throw ArgumentError("requested slot is not the measured slot");
  if (outcome != 1 && outcome != -1) throw ArgumentError("outcome must be +1 or -1");
  double amp2[2];
  for (int k = 0; k < 2; ++k) {
    const std::string key(1, k == 0 ? '+' : '-');
    const Matrix op = detail::sequence_operator(exp.slots(), exp.unitaries(), key, true);
    amp2[k] = std::norm(inner(*exp.post(), apply(op, exp.pre())));
  }
  const double n = amp2[0] + amp2[1];
  if (!(n > kImpossibleNormalizer)) {
    throw ImpossiblePostselectionError("ABL normalizer vanishes: pre- and post-selection are incompatible");
  }
  return (outcome == 1 ? amp2[0] : amp2[1]) / n;
}

// Joint distribution of the measured slots. With post-selection the weight of
// an outcome string is |<Phi| chain |Psi>|^2; without it, ||chain |Psi>||^2.
inline OutcomeDistribution sequence_distribution(const TwoTimeExperiment& exp) {
  const auto measured = exp.measured_slots();
  if (measured.empty()) throw ArgumentError("sequence_distribution needs at least one measured slot");
  auto dist = detail::make_distribution(exp.slots());
  double total = 0;
  for (const auto& key : outcome_strings(measured.size())) {
    const Matrix op = detail::sequence_operator(exp.slots(), exp.unitaries(), key, true);
    const Ket out = apply(op, exp.pre());
    const double w = exp.post() ? std::norm(inner(*exp.post(), out)) : out.norm2();
    dist.table[key] = w;
    total += w;
  }
  detail::normalize_table(dist, total);
  return dist;
}

// Same as sequence_distribution for a density-matrix preparation:
// w = Tr(Pi_post C rho0 C^dagger) with C the time-ordered chain.
inline OutcomeDistribution mixed_sequence_distribution(const Matrix& rho0,
                                                       const std::vector<std::optional<MeasurementSetting>>& slots,
                                                       std::vector<Matrix> unitaries = {},
                                                       const std::optional<Ket>& post = std::nullopt,
                                                       double tol = kDefaultTol) {
  if (!rho0.is_square()) throw ShapeError("initial density matrix must be square");
  const std::size_t d = rho0.rows();
  if (!is_hermitian(rho0, tol)) throw ArgumentError("initial density matrix is not Hermitian");
  if (std::abs(trace(rho0) - 1.0) > tol) throw ArgumentError("initial density matrix must have unit trace");
  for (const auto& p : eigh(rho0))
    if (p.value < -tol) throw ArgumentError("initial density matrix is not positive semidefinite");
  if (unitaries.empty()) unitaries.assign(slots.size() + 1, Matrix::identity(d));
  if (unitaries.size() != slots.size() + 1) throw ArgumentError("need slots+1 interval unitaries");
  for (const auto& u : unitaries)
    if (u.rows() != d || !is_unitary(u, tol)) throw ArgumentError("interval operator is not a unitary of the right size");
  std::size_t m = 0;
  for (const auto& s : slots) {
    if (!s) continue;
    if (s->dim() != d) throw ShapeError("measurement setting dimension differs from the state");
    ++m;
  }
  if (m == 0) throw ArgumentError("mixed_sequence_distribution needs at least one measured slot");
  if (post && post->dim() != d) throw ShapeError("post-selected state has the wrong dimension");

  auto dist = detail::make_distribution(slots);
  const Matrix post_proj = post ? post->normalized().projector() : Matrix::identity(d);
  double total = 0;
  for (const auto& key : outcome_strings(m)) {
    const Matrix c = detail::sequence_operator(slots, unitaries, key, true);
    const double w = trace(matmul(post_proj, matmul(c, matmul(rho0, dagger(c))))).real();
    dist.table[key] = std::max(0.0, w);
    total += std::max(0.0, w);
  }
  detail::normalize_table(dist, total);
  return dist;
}

//------------------------------------------------------------------------------
// History bundles
//------------------------------------------------------------------------------

struct BundleEntry {
  std::string outcome;
  HistoryState history;
  double probability;
};

struct HistoryBundle {
  BridgingSet bridging;
  std::vector<BundleEntry> entries;
};

// Grid of an experiment seen as a history: preparation, each intermediate
// time, then the final time.
inline TimeGrid experiment_grid(const TwoTimeExperiment& exp) {
  return TimeGrid::uniform(exp.slots().size() + 2, exp.dim());
}

inline BridgingSet experiment_bridging(const TwoTimeExperiment& exp) {
  return BridgingSet(experiment_grid(exp), exp.unitaries());
}

// History [post] (.) P_n (.) ... (.) P_1 (.) [pre] for one outcome string.
// Unmeasured intermediate slots and a missing post-selection carry the identity.
inline ElementaryHistory outcome_history(const TwoTimeExperiment& exp, const std::string& outcome) {
  const std::size_t d = exp.dim();
  std::vector<Matrix> ops{exp.pre().projector()};
  std::size_t m = 0;
  for (const auto& s : exp.slots()) ops.push_back(s ? s->projector(outcome_sign(outcome.at(m++))) : Matrix::identity(d));
  ops.push_back(exp.post() ? exp.post()->projector() : Matrix::identity(d));
  return ElementaryHistory(experiment_grid(exp), std::move(ops));
}

// One elementary history per outcome string with nonzero probability.
inline HistoryBundle history_bundle(const TwoTimeExperiment& exp) {
  const auto dist = sequence_distribution(exp);
  HistoryBundle bundle{experiment_bridging(exp), {}};
  for (const auto& [key, p] : dist.table) {
    if (p <= 1e-15) continue;
    bundle.entries.push_back({key, HistoryState(outcome_history(exp, key)), p});
  }
  return bundle;
}

//------------------------------------------------------------------------------
// Coherent insertion of outcome projectors
//------------------------------------------------------------------------------

struct SlotOutcome {
  MeasurementSetting setting;
  int outcome;
};

struct CoherentBundleResult {
  double unnormalized = 0;  // |A|^2 with A = Tr K(h with projectors inserted)
  double total = 0;         // sum of |A|^2 over all outcome strings of the measured slots
  double normalized = 0;    // unnormalized / total
};

// Replaces the measured slots of every branch of h by the outcome projectors,
// sums the closed branch amplitudes Tr K coherently and squares. Slots are
// taken at Hilbert-Schmidt norm 1 before replacement. The normalizer runs
// over every outcome string of the same settings.
inline CoherentBundleResult coherent_bundle_probability(const HistoryState& h, const BridgingSet& b,
                                                        const std::map<std::size_t, SlotOutcome>& measured,
                                                        double tol = kDefaultTol) {
  if (std::abs(hs_norm2(h) - 1.0) > tol) throw ArgumentError("coherent_bundle_probability requires a normalized history");
  if (measured.empty()) throw ArgumentError("coherent_bundle_probability needs at least one measured slot");
  std::vector<std::size_t> slots;
  std::string target;
  for (const auto& [s, so] : measured) {
    if (s >= h.grid().size()) throw ArgumentError("measured slot outside the grid");
    if (so.setting.dim() != h.grid().dim(s)) throw ShapeError("setting dimension does not match slot");
    slots.push_back(s);
    target += so.outcome == 1 ? '+' : '-';
  }
  CoherentBundleResult r;
  for (const auto& key : outcome_strings(slots.size())) {
    std::vector<std::pair<std::size_t, Matrix>> repl;
    std::size_t i = 0;
    for (const auto& [s, so] : measured) repl.emplace_back(s, so.setting.projector(outcome_sign(key[i++])));
    const cplx amp = trace(chain_operator_sum(replace_slots(unit_slots(h), repl), b));
    const double w = std::norm(amp);
    r.total += w;
    if (key == target) r.unnormalized = w;
  }
  if (!(r.total > kImpossibleNormalizer)) {
    throw ImpossiblePostselectionError("coherent bundle normalizer vanishes");
  }
  r.normalized = r.unnormalized / r.total;
  return r;
}

//------------------------------------------------------------------------------
// Marginal (arrow-of-time) checks
//------------------------------------------------------------------------------

using SettingPair = std::pair<std::string, std::string>;

struct MarginalReport {
  double earlier_deviation = 0;  // max |p(a|x,y) - p(a|x,y')|
  double later_deviation = 0;    // max |p(b|x,y) - p(b|x',y)|
  bool earlier_violation = false;
  double tol = kDefaultTol;
};

// Compares the marginals of two-slot distributions keyed by (earlier setting,
// later setting). Dependence of the later marginal on the earlier setting is
// reported but never flagged.
inline MarginalReport marginal_independence_check(const std::map<SettingPair, OutcomeDistribution>& family,
                                                  double tol = kDefaultTol) {
  MarginalReport r;
  r.tol = tol;
  auto marginal = [](const OutcomeDistribution& d, std::size_t pos, char v) {
    double s = 0;
    for (const auto& [k, p] : d.table) {
      if (k.size() != 2) throw ArgumentError("marginal check expects two-slot outcome strings");
      if (k[pos] == v) s += p;
    }
    return s;
  };
  for (const auto& [xy1, d1] : family) {
    for (const auto& [xy2, d2] : family) {
      for (char v : {'+', '-'}) {
        if (xy1.first == xy2.first)
          r.earlier_deviation = std::max(r.earlier_deviation, std::abs(marginal(d1, 0, v) - marginal(d2, 0, v)));
        if (xy1.second == xy2.second)
          r.later_deviation = std::max(r.later_deviation, std::abs(marginal(d1, 1, v) - marginal(d2, 1, v)));
      }
    }
  }
  r.earlier_violation = r.earlier_deviation > tol;
  return r;
}

}  // namespace ehist
