#pragma once

// History states over a discrete time grid: elementary operator strings,
// their complex superpositions, bridging evolution, chain operators, weights,
// the decoherence functional and temporal reductions.
//
// Slots are stored earliest-first. Rendering reverses the order so that the
// latest time is printed leftmost, as in [P_n] (.) ... (.) [P_0].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ehist/errors.hpp"
#include "ehist/linalg.hpp"

namespace ehist {

//------------------------------------------------------------------------------
// TimeGrid
//------------------------------------------------------------------------------

class TimeGrid {
 public:
  TimeGrid() = default;

  TimeGrid(std::vector<double> labels, std::vector<std::size_t> dims)
      : labels_(std::move(labels)), dims_(std::move(dims)) {
    if (labels_.empty()) throw ArgumentError("time grid needs at least one slot");
    if (labels_.size() != dims_.size()) throw ArgumentError("time grid: labels/dims length mismatch");
    for (std::size_t s = 1; s < labels_.size(); ++s)
      if (!(labels_[s] > labels_[s - 1])) throw ArgumentError("time grid labels must increase strictly");
    for (auto d : dims_)
      if (d < 2) throw ArgumentError("slot dimension must be at least 2");
  }

  // Slots labelled t0, t1, ... with a common dimension.
  static TimeGrid uniform(std::size_t slots, std::size_t dim) {
    std::vector<double> labels(slots);
    std::iota(labels.begin(), labels.end(), 0.0);
    return TimeGrid(std::move(labels), std::vector<std::size_t>(slots, dim));
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim(std::size_t s) const { return dims_.at(s); }
  const std::vector<double>& labels() const { return labels_; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::string label(std::size_t s) const {
    std::ostringstream os;
    os << 't' << labels_.at(s);
    return os.str();
  }

  TimeGrid restrict_to(const std::vector<std::size_t>& slots) const {
    std::vector<double> l;
    std::vector<std::size_t> d;
    for (auto s : slots) {
      l.push_back(labels_.at(s));
      d.push_back(dims_.at(s));
    }
    return TimeGrid(std::move(l), std::move(d));
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  std::vector<double> labels_;
  std::vector<std::size_t> dims_;
};

//------------------------------------------------------------------------------
// ElementaryHistory
//------------------------------------------------------------------------------

// One operator per time slot, earliest first.
class ElementaryHistory {
 public:
  ElementaryHistory() = default;

  ElementaryHistory(TimeGrid grid, std::vector<Matrix> slots)
      : grid_(std::move(grid)), slots_(std::move(slots)) {
    if (slots_.size() != grid_.size()) throw GridError("history slot count does not match grid");
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      if (slots_[s].rows() != grid_.dim(s) || slots_[s].cols() != grid_.dim(s)) {
        throw ShapeError("slot " + std::to_string(s) + " operator does not match grid dimension");
      }
    }
  }

  // Uniform grid t0..t(n-1) sized from the operators.
  explicit ElementaryHistory(const std::vector<Matrix>& slots) : ElementaryHistory(grid_for(slots), slots) {}

  // Every slot must be an orthogonal projector.
  static ElementaryHistory projectors(TimeGrid grid, std::vector<Matrix> slots, double tol = kDefaultTol) {
    ElementaryHistory h(std::move(grid), std::move(slots));
    if (!h.is_projector_string(tol)) throw ArgumentError("projector string contains a non-projector slot");
    return h;
  }

  const TimeGrid& grid() const { return grid_; }
  const std::vector<Matrix>& slots() const { return slots_; }
  const Matrix& slot(std::size_t s) const { return slots_.at(s); }
  std::size_t size() const { return slots_.size(); }

  bool is_projector_string(double tol = kDefaultTol) const {
    return std::all_of(slots_.begin(), slots_.end(), [&](const Matrix& m) { return is_projector(m, tol); });
  }

  bool same_slots(const ElementaryHistory& o, double tol) const {
    if (!(grid_ == o.grid_)) return false;
    for (std::size_t s = 0; s < slots_.size(); ++s)
      if (max_abs_diff(slots_[s], o.slots_[s]) > tol) return false;
    return true;
  }

 private:
  static TimeGrid grid_for(const std::vector<Matrix>& slots) {
    std::vector<double> labels(slots.size());
    std::iota(labels.begin(), labels.end(), 0.0);
    std::vector<std::size_t> dims;
    for (const auto& m : slots) dims.push_back(m.rows());
    return TimeGrid(std::move(labels), std::move(dims));
  }

  TimeGrid grid_;
  std::vector<Matrix> slots_;
};

//------------------------------------------------------------------------------
// HistoryState
//------------------------------------------------------------------------------

struct HistoryTerm {
  cplx coefficient;
  ElementaryHistory history;
};

// Complex superposition of elementary histories on one grid. Terms with
// equal slot strings (entrywise within 1e-12) are merged on construction.
class HistoryState {
 public:
  static constexpr double kMergeTol = 1e-12;

  HistoryState() = default;

  explicit HistoryState(TimeGrid grid) : grid_(std::move(grid)) {}

  HistoryState(const ElementaryHistory& h, cplx coefficient = 1.0) : grid_(h.grid()) {
    add_term(coefficient, h);
    prune();
  }

  HistoryState(TimeGrid grid, std::vector<HistoryTerm> terms) : grid_(std::move(grid)) {
    for (auto& t : terms) add_term(t.coefficient, std::move(t.history));
    prune();
  }

  const TimeGrid& grid() const { return grid_; }
  const std::vector<HistoryTerm>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  HistoryState& operator+=(const HistoryState& o) {
    if (!(grid_ == o.grid_)) throw GridError("cannot add histories on different grids");
    for (const auto& t : o.terms_) add_term(t.coefficient, t.history);
    prune();
    return *this;
  }
  HistoryState& operator*=(cplx s) {
    for (auto& t : terms_) t.coefficient *= s;
    prune();
    return *this;
  }

  friend HistoryState operator+(HistoryState a, const HistoryState& b) { return a += b; }
  friend HistoryState operator-(HistoryState a, const HistoryState& b) { return a += (-1.0 * b); }
  friend HistoryState operator*(cplx s, HistoryState a) { return a *= s; }
  friend HistoryState operator*(HistoryState a, cplx s) { return a *= s; }

 private:
  void add_term(cplx c, ElementaryHistory h) {
    if (!(h.grid() == grid_)) throw GridError("history term lives on a different grid");
    for (auto& t : terms_) {
      if (t.history.same_slots(h, kMergeTol)) {
        t.coefficient += c;
        return;
      }
    }
    terms_.push_back({c, std::move(h)});
  }

  void prune() {
    std::erase_if(terms_, [](const HistoryTerm& t) {
      double scale = std::abs(t.coefficient);
      for (const auto& m : t.history.slots()) scale *= max_abs(m);
      return scale < 1e-14;
    });
  }

  TimeGrid grid_;
  std::vector<HistoryTerm> terms_;
};

//------------------------------------------------------------------------------
// BridgingSet
//------------------------------------------------------------------------------

// unitaries[j] = T(t_{j+1}, t_j), evolving slot j into slot j+1.
class BridgingSet {
 public:
  BridgingSet() = default;

  BridgingSet(TimeGrid grid, std::vector<Matrix> unitaries, double tol = kDefaultTol)
      : grid_(std::move(grid)), unitaries_(std::move(unitaries)) {
    if (unitaries_.size() + 1 != grid_.size()) {
      throw GridError("bridging set needs one unitary per grid interval");
    }
    for (std::size_t j = 0; j < unitaries_.size(); ++j) {
      const auto& u = unitaries_[j];
      if (u.rows() != grid_.dim(j + 1) || u.cols() != grid_.dim(j)) {
        throw ShapeError("bridging operator " + std::to_string(j) + " does not map slot dimensions");
      }
      if (!is_unitary(u, tol)) throw ArgumentError("bridging operator " + std::to_string(j) + " is not unitary");
    }
  }

  static BridgingSet trivial(const TimeGrid& grid) {
    std::vector<Matrix> u;
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) u.push_back(Matrix::identity(grid.dim(j)));
    return BridgingSet(grid, std::move(u));
  }

  const TimeGrid& grid() const { return grid_; }
  const std::vector<Matrix>& unitaries() const { return unitaries_; }
  const Matrix& unitary(std::size_t j) const { return unitaries_.at(j); }

  // T(t_to, t_from) = T(t_to, t_to-1) ... T(t_from+1, t_from), for from <= to.
  Matrix propagator(std::size_t from, std::size_t to) const {
    if (from > to || to >= grid_.size()) throw ArgumentError("propagator: need from <= to < slots");
    Matrix p = Matrix::identity(grid_.dim(from));
    for (std::size_t j = from; j < to; ++j) p = matmul(unitaries_[j], p);
    return p;
  }

 private:
  TimeGrid grid_;
  std::vector<Matrix> unitaries_;
};

//------------------------------------------------------------------------------
// MixedHistory
//------------------------------------------------------------------------------

struct MixedMember {
  double probability;
  HistoryState history;
};

cplx hs_inner(const HistoryState& a, const HistoryState& b);

// Probability-weighted ensemble of normalized history states,
// rho = sum_i p_i |H_i)(H_i|.
class MixedHistory {
 public:
  MixedHistory() = default;

  explicit MixedHistory(std::vector<MixedMember> ensemble, double tol = kDefaultTol)
      : ensemble_(std::move(ensemble)) {
    if (ensemble_.empty()) throw ArgumentError("mixed history needs at least one member");
    double total = 0;
    for (const auto& m : ensemble_) {
      if (!(m.probability > 0.0) || m.probability > 1.0 + tol) {
        throw ArgumentError("mixed history probabilities must lie in (0, 1]");
      }
      if (!(m.history.grid() == ensemble_.front().history.grid())) {
        throw GridError("mixed history members live on different grids");
      }
      if (std::abs(hs_inner(m.history, m.history).real() - 1.0) > tol) {
        throw ArgumentError("mixed history members must be normalized");
      }
      total += m.probability;
    }
    if (std::abs(total - 1.0) > tol) throw ArgumentError("mixed history probabilities must sum to 1");
  }

  const std::vector<MixedMember>& ensemble() const { return ensemble_; }
  const TimeGrid& grid() const { return ensemble_.front().history.grid(); }
  std::size_t size() const { return ensemble_.size(); }

 private:
  std::vector<MixedMember> ensemble_;
};

//------------------------------------------------------------------------------
// Inner products and normalization
//------------------------------------------------------------------------------

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
  if (!(a == b)) throw GridError(std::string(what) + ": time grids differ");
}

// Slot-wise Hilbert-Schmidt inner product, antilinear in the first argument.
inline cplx hs_inner(const HistoryState& a, const HistoryState& b) {
  require_same_grid(a.grid(), b.grid(), "hs_inner");
  cplx total = 0;
  for (const auto& ta : a.terms()) {
    for (const auto& tb : b.terms()) {
      cplx prod = std::conj(ta.coefficient) * tb.coefficient;
      for (std::size_t s = 0; s < a.grid().size() && prod != cplx{}; ++s)
        prod *= hs_inner(ta.history.slot(s), tb.history.slot(s));
      total += prod;
    }
  }
  return total;
}

inline double hs_norm2(const HistoryState& h) { return hs_inner(h, h).real(); }

inline HistoryState normalize(const HistoryState& h) {
  const double n2 = hs_norm2(h);
  if (!(n2 > 1e-28)) throw DegenerateStateError("cannot normalize a zero-norm history");
  return (1.0 / std::sqrt(n2)) * h;
}

// Rescales every slot operator to Hilbert-Schmidt norm 1, moving the scale
// into the term coefficient. The state itself is unchanged.
inline HistoryState unit_slots(const HistoryState& h) {
  std::vector<HistoryTerm> terms;
  for (const auto& t : h.terms()) {
    cplx c = t.coefficient;
    std::vector<Matrix> ops;
    for (const auto& m : t.history.slots()) {
      const double n = std::sqrt(hs_norm2(m));
      if (!(n > 0)) {
        c = 0;
        ops.push_back(m);
        continue;
      }
      c *= n;
      ops.push_back((1.0 / n) * m);
    }
    terms.push_back({c, ElementaryHistory(h.grid(), std::move(ops))});
  }
  return HistoryState(h.grid(), std::move(terms));
}

//------------------------------------------------------------------------------
// Chain operator, weight, decoherence functional
//------------------------------------------------------------------------------

// K = P_n T(t_n,t_n-1) P_n-1 ... P_1 T(t_1,t_0) P_0
inline Matrix chain_operator(const ElementaryHistory& h, const BridgingSet& b) {
  require_same_grid(h.grid(), b.grid(), "chain_operator");
  Matrix k = h.slot(0);
  for (std::size_t s = 1; s < h.size(); ++s) k = matmul(h.slot(s), matmul(b.unitary(s - 1), k));
  return k;
}

// Linear extension of the chain operator to superpositions.
inline Matrix chain_operator_sum(const HistoryState& h, const BridgingSet& b) {
  require_same_grid(h.grid(), b.grid(), "chain_operator_sum");
  const std::size_t last = h.grid().size() - 1;
  Matrix k(h.grid().dim(last), h.grid().dim(0));
  for (const auto& t : h.terms()) k += t.coefficient * chain_operator(t.history, b);
  return k;
}

// D(h1, h2) = Tr(K(h1)^dagger K(h2))
inline cplx decoherence_functional(const HistoryState& h1, const HistoryState& h2, const BridgingSet& b) {
  return hs_inner(chain_operator_sum(h1, b), chain_operator_sum(h2, b));
}

// W = Tr(K^dagger K)
inline double weight(const HistoryState& h, const BridgingSet& b) {
  return std::max(0.0, hs_norm2(chain_operator_sum(h, b)));
}

struct ConsistencyReport {
  bool consistent = true;
  double tol = kDefaultTol;
  double max_off_diagonal = 0.0;
  Matrix decoherence;  // D(h_i, h_j)
};

// Medium-decoherence check: |D(h_i, h_j)| <= tol for every i != j.
inline ConsistencyReport is_consistent_family(const std::vector<HistoryState>& family, const BridgingSet& b,
                                              double tol = kDefaultTol) {
  ConsistencyReport r;
  r.tol = tol;
  const std::size_t n = family.size();
  if (n == 0) return r;
  std::vector<Matrix> chains;
  chains.reserve(n);
  for (const auto& h : family) chains.push_back(chain_operator_sum(h, b));
  r.decoherence = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      r.decoherence(i, j) = hs_inner(chains[i], chains[j]);
      if (i != j) r.max_off_diagonal = std::max(r.max_off_diagonal, std::abs(r.decoherence(i, j)));
    }
  r.consistent = r.max_off_diagonal <= tol;
  return r;
}

//------------------------------------------------------------------------------
// Slot-level manipulation
//------------------------------------------------------------------------------

// Replace the operator in the given slots of every term.
inline HistoryState replace_slots(const HistoryState& h, const std::vector<std::pair<std::size_t, Matrix>>& slots) {
  std::vector<HistoryTerm> terms;
  for (const auto& t : h.terms()) {
    auto ops = t.history.slots();
    for (const auto& [s, m] : slots) ops.at(s) = m;
    terms.push_back({t.coefficient, ElementaryHistory(h.grid(), std::move(ops))});
  }
  return HistoryState(h.grid(), std::move(terms));
}

// Orthogonal (Hilbert-Schmidt) projection of one slot onto the direction of `op`.
inline HistoryState project_slot(const HistoryState& h, std::size_t slot, const Matrix& op) {
  const double n2 = hs_norm2(op);
  if (!(n2 > 0)) throw ArgumentError("project_slot: zero operator");
  std::vector<HistoryTerm> terms;
  for (const auto& t : h.terms()) {
    auto ops = t.history.slots();
    const cplx overlap = hs_inner(op, ops.at(slot)) / n2;
    ops[slot] = op;
    terms.push_back({t.coefficient * overlap, ElementaryHistory(h.grid(), std::move(ops))});
  }
  return HistoryState(h.grid(), std::move(terms));
}

// Contract one slot against (op| and drop it from the grid.
inline HistoryState contract_slot(const HistoryState& h, std::size_t slot, const Matrix& op) {
  if (h.grid().size() < 2) throw ArgumentError("contract_slot: cannot remove the only slot");
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < h.grid().size(); ++s)
    if (s != slot) keep.push_back(s);
  const TimeGrid g = h.grid().restrict_to(keep);
  std::vector<HistoryTerm> terms;
  for (const auto& t : h.terms()) {
    std::vector<Matrix> ops;
    for (auto s : keep) ops.push_back(t.history.slot(s));
    terms.push_back({t.coefficient * hs_inner(op, t.history.slot(slot)), ElementaryHistory(g, std::move(ops))});
  }
  return HistoryState(g, std::move(terms));
}

// Rewrites a history with bridging T into one with trivial bridging by
// conjugating slot s with the accumulated propagator V_s = T(t_s, t_0):
// P_s -> V_s^dagger P_s V_s. The chain operator changes only by the unitary
// V_n on the left, so weights and the decoherence functional are preserved.
inline std::pair<HistoryState, BridgingSet> to_trivial_bridging(const HistoryState& h, const BridgingSet& b) {
  require_same_grid(h.grid(), b.grid(), "to_trivial_bridging");
  std::vector<Matrix> v;
  for (std::size_t s = 0; s < h.grid().size(); ++s) v.push_back(b.propagator(0, s));
  std::vector<HistoryTerm> terms;
  for (const auto& t : h.terms()) {
    std::vector<Matrix> ops;
    for (std::size_t s = 0; s < h.grid().size(); ++s) ops.push_back(matmul(dagger(v[s]), matmul(t.history.slot(s), v[s])));
    terms.push_back({t.coefficient, ElementaryHistory(h.grid(), std::move(ops))});
  }
  return {HistoryState(h.grid(), std::move(terms)), BridgingSet::trivial(h.grid())};
}

//------------------------------------------------------------------------------
// Vectorized (Hilbert-Schmidt) representation
//------------------------------------------------------------------------------

// Largest vectorized history space handled by the temporal reductions.
inline constexpr std::size_t kMaxHistoryVectorDim = std::size_t{1} << 20;

inline std::size_t history_vector_dim(const TimeGrid& g) {
  std::size_t n = 1;
  for (auto d : g.dims()) {
    n *= d * d;
    if (n > kMaxHistoryVectorDim) throw ShapeError("history space too large for vectorization");
  }
  return n;
}

// Coordinates of h in the product basis of matrix units E_ij per slot; slot 0
// is the most significant index, each slot vectorized row-major.
inline std::vector<cplx> vectorize(const HistoryState& h) {
  const auto& g = h.grid();
  std::vector<cplx> v(history_vector_dim(g));
  std::vector<cplx> acc, next;
  for (const auto& t : h.terms()) {
    acc.assign(1, t.coefficient);
    for (std::size_t s = 0; s < g.size(); ++s) {
      const auto e = t.history.slot(s).entries();
      next.assign(acc.size() * e.size(), cplx{});
      for (std::size_t i = 0; i < acc.size(); ++i)
        for (std::size_t k = 0; k < e.size(); ++k) next[i * e.size() + k] = acc[i] * e[k];
      acc.swap(next);
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += acc[i];
  }
  return v;
}

namespace detail {

inline Matrix unvec(std::span<const cplx> v, std::size_t d) {
  return Matrix(d, d, std::vector<cplx>(v.begin(), v.end()));
}

// Remove an arbitrary global phase: trace real-positive when the trace is
// non-negligible, otherwise a Hermitian representative if one exists,
// otherwise the largest entry real-positive.
inline Matrix canonical_phase(const Matrix& m) {
  const cplx tr = trace(m);
  const double scale = max_abs(m);
  if (scale == 0) return m;
  if (std::abs(tr) > 1e-9 * scale) return (std::conj(tr) / std::abs(tr)) * m;
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (std::abs(m(i, j)) > std::abs(m(bi, bj)) + 1e-12) {
        bi = i;
        bj = j;
      }
  if (bi != bj) {
    // e^{-2i theta} = conj(m(bj,bi)) / m(bi,bj) makes e^{-i theta} m Hermitian
    const cplx r = std::conj(m(bj, bi)) / m(bi, bj);
    if (std::abs(std::abs(r) - 1.0) < 1e-9) {
      const cplx phase = std::sqrt(r);
      const Matrix cand = phase * m;
      if (is_hermitian(cand, 1e-9 * scale)) return cand;
    }
  }
  return (std::conj(m(bi, bj)) / std::abs(m(bi, bj))) * m;
}

}  // namespace detail

// Inverse of vectorize. A vector that factorizes over slots becomes a single
// elementary term; anything else is expanded on matrix units.
inline HistoryState from_vector(const TimeGrid& g, std::span<const cplx> v, double tol = 1e-12) {
  if (v.size() != history_vector_dim(g)) throw ShapeError("from_vector: length does not match grid");
  const std::size_t n = g.size();
  std::vector<std::size_t> sdim(n), stride(n);
  for (std::size_t s = 0; s < n; ++s) sdim[s] = g.dim(s) * g.dim(s);
  {
    std::size_t st = 1;
    for (std::size_t s = n; s-- > 0;) {
      stride[s] = st;
      st *= sdim[s];
    }
  }
  std::size_t pivot = 0;
  double vmax = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > vmax + 1e-15) {
      vmax = std::abs(v[i]);
      pivot = i;
    }
  HistoryState out(g);
  if (vmax == 0) return out;

  // rank-1 attempt through the pivot
  std::vector<std::vector<cplx>> factors(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t base = pivot - ((pivot / stride[s]) % sdim[s]) * stride[s];
    factors[s].resize(sdim[s]);
    for (std::size_t k = 0; k < sdim[s]; ++k) factors[s][k] = v[base + k * stride[s]];
  }
  const cplx vp = v[pivot];
  bool product = true;
  for (std::size_t i = 0; i < v.size() && product; ++i) {
    cplx p = vp;
    for (std::size_t s = 0; s < n; ++s) p *= factors[s][(i / stride[s]) % sdim[s]] / vp;
    if (std::abs(p - v[i]) > tol * std::max(1.0, vmax)) product = false;
  }
  if (product) {
    std::vector<Matrix> ops;
    cplx coefficient = vp;
    for (std::size_t s = 0; s < n; ++s) {
      Matrix m = detail::unvec(factors[s], g.dim(s)) * (1.0 / vp);
      m = detail::canonical_phase(m);
      const double nm = std::sqrt(hs_norm2(m));
      m *= 1.0 / nm;
      ops.push_back(std::move(m));
    }
    // coefficient from the overlap with the unit product vector
    HistoryState unit(ElementaryHistory(g, ops));
    const auto uv = vectorize(unit);
    coefficient = 0;
    for (std::size_t i = 0; i < v.size(); ++i) coefficient += std::conj(uv[i]) * v[i];
    return HistoryState(ElementaryHistory(g, std::move(ops)), coefficient);
  }

  std::vector<HistoryTerm> terms;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) <= tol * vmax) continue;
    std::vector<Matrix> ops;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t k = (i / stride[s]) % sdim[s];
      Matrix e(g.dim(s), g.dim(s));
      e(k / g.dim(s), k % g.dim(s)) = 1.0;
      ops.push_back(std::move(e));
    }
    terms.push_back({v[i], ElementaryHistory(g, std::move(ops))});
  }
  return HistoryState(g, std::move(terms));
}

// Reduced operator Tr_{traced slots} |h)(h| on the vectorized space of the
// kept slots (kept slots in ascending order). h is used as given, without
// normalization.
inline Matrix reduced_operator(const HistoryState& h, const std::vector<std::size_t>& keep_slots) {
  const auto& g = h.grid();
  const std::size_t n = g.size();
  std::vector<bool> kept(n, false);
  for (auto s : keep_slots) {
    if (s >= n || kept[s]) throw ArgumentError("reduced_operator: bad slot index");
    kept[s] = true;
  }
  std::vector<std::size_t> sdim(n), stride(n);
  for (std::size_t s = 0; s < n; ++s) sdim[s] = g.dim(s) * g.dim(s);
  {
    std::size_t st = 1;
    for (std::size_t s = n; s-- > 0;) {
      stride[s] = st;
      st *= sdim[s];
    }
  }
  std::vector<std::size_t> ks, ts;
  for (std::size_t s = 0; s < n; ++s) (kept[s] ? ks : ts).push_back(s);
  auto offsets = [&](const std::vector<std::size_t>& idx) {
    std::size_t count = 1;
    for (auto s : idx) count *= sdim[s];
    std::vector<std::size_t> off(count);
    for (std::size_t f = 0; f < count; ++f) {
      std::size_t rem = f, o = 0;
      for (std::size_t p = idx.size(); p-- > 0;) {
        o += (rem % sdim[idx[p]]) * stride[idx[p]];
        rem /= sdim[idx[p]];
      }
      off[f] = o;
    }
    return off;
  };
  const auto koff = offsets(ks);
  const auto toff = offsets(ts);
  if (koff.size() > kMaxDim) throw ShapeError("reduced_operator: kept space exceeds dimension cap");
  const auto v = vectorize(h);
  Matrix rho(koff.size(), koff.size());
  for (std::size_t i = 0; i < koff.size(); ++i)
    for (std::size_t j = i; j < koff.size(); ++j) {
      cplx s = 0;
      for (auto t : toff) s += v[koff[i] + t] * std::conj(v[koff[j] + t]);
      rho(i, j) = s;
      rho(j, i) = std::conj(s);
    }
  return rho;
}

// Temporal partial trace: contracts the slots not in keep_slots out of
// |h)(h| (h normalized first) and returns the spectral ensemble of the
// resulting positive operator over the kept slots.
inline MixedHistory temporal_partial_trace(const HistoryState& h, std::vector<std::size_t> keep_slots) {
  std::sort(keep_slots.begin(), keep_slots.end());
  if (keep_slots.empty() || keep_slots.size() >= h.grid().size()) {
    throw ArgumentError("temporal_partial_trace: keep set must be a nonempty proper subset of slots");
  }
  if (std::adjacent_find(keep_slots.begin(), keep_slots.end()) != keep_slots.end()) {
    throw ArgumentError("temporal_partial_trace: duplicate slot in keep set");
  }
  const HistoryState hn = normalize(h);
  const Matrix rho = reduced_operator(hn, keep_slots);
  const TimeGrid kg = h.grid().restrict_to(keep_slots);
  const auto pairs = eigh(rho);
  double total = 0;
  for (const auto& p : pairs)
    if (p.value > 1e-12) total += p.value;
  std::vector<MixedMember> members;
  for (const auto& p : pairs) {
    if (p.value <= 1e-12) continue;
    members.push_back({p.value / total, normalize(from_vector(kg, p.vector))});
  }
  return MixedHistory(std::move(members));
}

//------------------------------------------------------------------------------
// Mixtures
//------------------------------------------------------------------------------

// Builds a MixedHistory, normalizing each member.
inline MixedHistory mix(const std::vector<MixedMember>& ensemble) {
  std::vector<MixedMember> m;
  for (const auto& e : ensemble) {
    if (!(e.probability > 0.0)) throw ArgumentError("mix: probabilities must be positive");
    m.push_back({e.probability, normalize(e.history)});
  }
  return MixedHistory(std::move(m));
}

// (a| rho |b) for rho = sum_i p_i |H_i)(H_i|
inline cplx mixed_element(const MixedHistory& m, const HistoryState& a, const HistoryState& b) {
  cplx s = 0;
  for (const auto& e : m.ensemble()) s += e.probability * hs_inner(a, e.history) * hs_inner(e.history, b);
  return s;
}

// Tr(rho^2) = sum_ij p_i p_j |(H_i|H_j)|^2
inline double purity(const MixedHistory& m) {
  double s = 0;
  for (const auto& a : m.ensemble())
    for (const auto& b : m.ensemble()) s += a.probability * b.probability * std::norm(hs_inner(a.history, b.history));
  return s;
}

//------------------------------------------------------------------------------
// Subsystem reduction
//------------------------------------------------------------------------------

struct SubsystemSplit {
  std::size_t dim_a;
  std::size_t dim_b;
};

// Factor u = u_a (x) u_b if possible (within tol). u_a is returned with a
// canonical global phase and u_b absorbs the remainder.
inline std::optional<std::pair<Matrix, Matrix>> factor_kron(const Matrix& u, SubsystemSplit split, double tol = kDefaultTol) {
  const std::size_t da = split.dim_a, db = split.dim_b;
  if (u.rows() != da * db || u.cols() != da * db) throw ShapeError("factor_kron: dimension mismatch");
  // realignment R[(a a'), (b b')] = u[(a b), (a' b')]
  auto r = [&](std::size_t a, std::size_t ap, std::size_t b, std::size_t bp) { return u(a * db + b, ap * db + bp); };
  std::size_t pa = 0, pap = 0, pb = 0, pbp = 0;
  double best = -1;
  for (std::size_t a = 0; a < da; ++a)
    for (std::size_t ap = 0; ap < da; ++ap)
      for (std::size_t b = 0; b < db; ++b)
        for (std::size_t bp = 0; bp < db; ++bp)
          if (std::abs(r(a, ap, b, bp)) > best + 1e-15) {
            best = std::abs(r(a, ap, b, bp));
            pa = a, pap = ap, pb = b, pbp = bp;
          }
  if (best <= 0) return std::nullopt;
  Matrix ua(da, da);
  for (std::size_t a = 0; a < da; ++a)
    for (std::size_t ap = 0; ap < da; ++ap) ua(a, ap) = r(a, ap, pb, pbp);
  const double c = hs_norm2(ua) / static_cast<double>(da);
  ua *= 1.0 / std::sqrt(c);
  ua = detail::canonical_phase(ua);
  Matrix ub(db, db);
  for (std::size_t b = 0; b < db; ++b)
    for (std::size_t bp = 0; bp < db; ++bp) {
      cplx s = 0;
      for (std::size_t a = 0; a < da; ++a)
        for (std::size_t ap = 0; ap < da; ++ap) s += std::conj(ua(a, ap)) * r(a, ap, b, bp);
      ub(b, bp) = s / static_cast<double>(da);
    }
  (void)pa;
  (void)pap;
  if (max_abs_diff(kron(ua, ub), u) > tol) return std::nullopt;
  return std::make_pair(std::move(ua), std::move(ub));
}

// <r|_X m |r>_X for the factor X in {0 = A, 1 = B} of an operator on A (x) B.
inline Matrix partial_matrix_element(const Matrix& m, SubsystemSplit split, std::size_t factor, const Ket& r) {
  const std::size_t da = split.dim_a, db = split.dim_b;
  if (factor == 1) {
    Matrix out(da, da);
    for (std::size_t a = 0; a < da; ++a)
      for (std::size_t ap = 0; ap < da; ++ap) {
        cplx s = 0;
        for (std::size_t b = 0; b < db; ++b)
          for (std::size_t bp = 0; bp < db; ++bp) s += std::conj(r[b]) * m(a * db + b, ap * db + bp) * r[bp];
        out(a, ap) = s;
      }
    return out;
  }
  Matrix out(db, db);
  for (std::size_t b = 0; b < db; ++b)
    for (std::size_t bp = 0; bp < db; ++bp) {
      cplx s = 0;
      for (std::size_t a = 0; a < da; ++a)
        for (std::size_t ap = 0; ap < da; ++ap) s += std::conj(r[a]) * m(a * db + b, ap * db + bp) * r[ap];
      out(b, bp) = s;
    }
  return out;
}

struct ReducedHistory {
  HistoryState history;               // normalized reduced history
  BridgingSet bridging;               // induced bridging on the kept factor
  std::vector<HistoryState> branches;  // one per record of the discarded factor (unnormalized)
  ConsistencyReport consistency;      // consistency of the branch family under the induced bridging
};

// Traces the factor `discard` (0 = A, 1 = B) out of every slot while keeping
// the time structure. The discarded factor is read along a fixed record: its
// computational basis state |j> at t0, carried forward by its own bridging
// unitaries. Branch j collects the kept-factor matrix elements
// <r_j(t_s)| P_s |r_j(t_s)> slot by slot, and the reduced history is the
// coherent sum over branches. Bridging must factor as U_A (x) U_B.
inline ReducedHistory subsystem_trace_out(const HistoryState& h, const BridgingSet& b, SubsystemSplit split,
                                          std::size_t discard) {
  require_same_grid(h.grid(), b.grid(), "subsystem_trace_out");
  if (discard > 1) throw ArgumentError("subsystem_trace_out: factor index must be 0 or 1");
  const auto& g = h.grid();
  const std::size_t full = split.dim_a * split.dim_b;
  for (std::size_t s = 0; s < g.size(); ++s)
    if (g.dim(s) != full) throw ShapeError("subsystem_trace_out: slot dimension does not factor as dim_a * dim_b");

  const std::size_t keep_dim = discard == 1 ? split.dim_a : split.dim_b;
  const std::size_t drop_dim = discard == 1 ? split.dim_b : split.dim_a;

  std::vector<Matrix> kept_u, drop_u;
  for (std::size_t j = 0; j < b.unitaries().size(); ++j) {
    auto f = factor_kron(b.unitary(j), split);
    if (!f) {
      throw UnsupportedEvolutionError("bridging operator " + std::to_string(j) + " is not a product U_A (x) U_B");
    }
    kept_u.push_back(discard == 1 ? f->first : f->second);
    drop_u.push_back(discard == 1 ? f->second : f->first);
  }

  const TimeGrid kg(g.labels(), std::vector<std::size_t>(g.size(), keep_dim));
  BridgingSet kb(kg, kept_u);

  std::vector<HistoryState> branches;
  HistoryState total(kg);
  for (std::size_t j = 0; j < drop_dim; ++j) {
    std::vector<Ket> record{Ket::basis(drop_dim, j)};
    for (std::size_t s = 1; s < g.size(); ++s) record.push_back(apply(drop_u[s - 1], record.back()));
    std::vector<HistoryTerm> terms;
    for (const auto& t : h.terms()) {
      std::vector<Matrix> ops;
      for (std::size_t s = 0; s < g.size(); ++s)
        ops.push_back(partial_matrix_element(t.history.slot(s), split, discard, record[s]));
      terms.push_back({t.coefficient, ElementaryHistory(kg, std::move(ops))});
    }
    HistoryState branch = unit_slots(HistoryState(kg, std::move(terms)));
    total += branch;
    branches.push_back(std::move(branch));
  }
  ReducedHistory out{normalize(total), kb, branches, {}};
  out.consistency = is_consistent_family(out.branches, kb);
  return out;
}

//------------------------------------------------------------------------------
// Rendering
//------------------------------------------------------------------------------

inline std::string format_complex(cplx z, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision);
  const double re = std::abs(z.real()) < 1e-15 ? 0.0 : z.real();
  const double im = std::abs(z.imag()) < 1e-15 ? 0.0 : z.imag();
  if (im == 0) {
    os << re;
  } else if (re == 0) {
    os << im << 'i';
  } else {
    os << '(' << re << (im < 0 ? "-" : "+") << std::abs(im) << "i)";
  }
  return os.str();
}

// Latest slot leftmost, e.g. "0.707107*[z+](.)[z+] + 0.707107*[z-](.)[z-]".
inline std::string render(const HistoryState& h) {
  if (h.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& t : h.terms()) {
    if (!first) os << " + ";
    first = false;
    os << format_complex(t.coefficient) << '*';
    for (std::size_t s = h.grid().size(); s-- > 0;) {
      const auto name = operator_name(t.history.slot(s));
      os << '[' << (name.empty() ? "M" + std::to_string(h.grid().dim(s)) : name) << ']';
      if (s != 0) os << "(.)";
    }
  }
  return os.str();
}

}  // namespace ehist
