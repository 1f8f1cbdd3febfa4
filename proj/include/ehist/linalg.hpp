#pragma once

// Dense complex linear algebra for small operators: qubit and two-qubit
// states, projectors, unitaries and chain operators.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ehist/errors.hpp"

namespace ehist {

using cplx = std::complex<double>;

inline constexpr double kDefaultTol = 1e-9;
// Largest row/column count a Matrix may have.
inline constexpr std::size_t kMaxDim = 1024;

inline const double kSqrt2 = std::sqrt(2.0);
inline const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

//------------------------------------------------------------------------------
// Matrix
//------------------------------------------------------------------------------

// Row-major dense complex matrix. Entries are always finite.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {
    check_dims();
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<cplx> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    check_dims();
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix entry count " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    for (const auto& z : data_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        throw ArgumentError("matrix entries must be finite");
      }
    }
  }

  Matrix(std::initializer_list<std::initializer_list<cplx>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    check_dims();
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix zero(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool is_square() const { return rows_ == cols_; }
  bool empty() const { return data_.empty(); }

  cplx& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const cplx> entries() const { return data_; }
  std::span<cplx> entries() { return data_; }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "+");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "-");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Matrix& operator*=(cplx s) {
    for (auto& z : data_) z *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, cplx s) { return a *= s; }
  friend Matrix operator*(cplx s, Matrix a) { return a *= s; }
  friend Matrix operator-(Matrix a) { return a *= -1.0; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    if (rows_ > kMaxDim || cols_ > kMaxDim) {
      throw ShapeError("matrix dimension exceeds " + std::to_string(kMaxDim));
    }
  }
  void require_same_shape(const Matrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw ShapeError(std::string("shape mismatch in '") + op + "'");
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

//------------------------------------------------------------------------------
// Ket
//------------------------------------------------------------------------------

class Ket {
 public:
  Ket() = default;
  explicit Ket(std::vector<cplx> amplitudes) : amp_(std::move(amplitudes)) {
    if (amp_.empty()) throw ArgumentError("ket must have positive dimension");
    for (const auto& z : amp_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        throw ArgumentError("ket amplitudes must be finite");
      }
    }
  }
  Ket(std::initializer_list<cplx> amplitudes) : Ket(std::vector<cplx>(amplitudes)) {}

  static Ket basis(std::size_t dim, std::size_t index) {
    std::vector<cplx> a(dim);
    a.at(index) = 1.0;
    return Ket(std::move(a));
  }

  std::size_t dim() const { return amp_.size(); }
  const cplx& operator[](std::size_t i) const { return amp_[i]; }
  std::span<const cplx> amplitudes() const { return amp_; }

  double norm2() const {
    double s = 0;
    for (const auto& z : amp_) s += std::norm(z);
    return s;
  }

  bool is_normalized(double tol = 1e-12) const { return std::abs(norm2() - 1.0) <= tol; }

  Ket normalized() const {
    const double n = std::sqrt(norm2());
    if (n == 0.0) throw DegenerateStateError("cannot normalize the zero ket");
    std::vector<cplx> a = amp_;
    for (auto& z : a) z /= n;
    return Ket(std::move(a));
  }

  // |this><this|
  Matrix projector() const {
    Matrix m(dim(), dim());
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t j = 0; j < dim(); ++j) m(i, j) = amp_[i] * std::conj(amp_[j]);
    return m;
  }

  friend Ket operator*(cplx s, Ket k) {
    for (auto& z : k.amp_) z *= s;
    return k;
  }
  friend Ket operator+(Ket a, const Ket& b) {
    if (a.dim() != b.dim()) throw ShapeError("ket dimension mismatch in '+'");
    for (std::size_t i = 0; i < a.dim(); ++i) a.amp_[i] += b.amp_[i];
    return a;
  }

 private:
  std::vector<cplx> amp_;
};

//------------------------------------------------------------------------------
// Core operations
//------------------------------------------------------------------------------

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      if (aik == cplx{}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }

// (a (x) b)[(i*rb + k), (j*cb + l)] = a[i,j] * b[k,l]
inline Matrix kron(const Matrix& a, const Matrix& b) {
  const std::size_t rb = b.rows(), cb = b.cols();
  if (a.rows() * rb > kMaxDim || a.cols() * cb > kMaxDim) {
    throw ShapeError("kron: result exceeds dimension cap");
  }
  Matrix c(a.rows() * rb, a.cols() * cb);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t k = 0; k < rb; ++k)
        for (std::size_t l = 0; l < cb; ++l) c(i * rb + k, j * cb + l) = a(i, j) * b(k, l);
  return c;
}

inline Ket kron(const Ket& a, const Ket& b) {
  std::vector<cplx> v;
  v.reserve(a.dim() * b.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t k = 0; k < b.dim(); ++k) v.push_back(a[i] * b[k]);
  return Ket(std::move(v));
}

inline Matrix dagger(const Matrix& a) {
  Matrix d(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) d(j, i) = std::conj(a(i, j));
  return d;
}

inline cplx trace(const Matrix& a) {
  if (!a.is_square()) throw ShapeError("trace of a non-square matrix");
  cplx t = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

// Tr(a^dagger b)
inline cplx hs_inner(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("hs_inner: shape mismatch");
  cplx s = 0;
  const auto ea = a.entries();
  const auto eb = b.entries();
  for (std::size_t k = 0; k < ea.size(); ++k) s += std::conj(ea[k]) * eb[k];
  return s;
}

inline double hs_norm2(const Matrix& a) { return hs_inner(a, a).real(); }

inline double max_abs(const Matrix& a) {
  double m = 0;
  for (const auto& z : a.entries()) m = std::max(m, std::abs(z));
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0;
  const auto ea = a.entries();
  const auto eb = b.entries();
  for (std::size_t k = 0; k < ea.size(); ++k) m = std::max(m, std::abs(ea[k] - eb[k]));
  return m;
}

inline bool approx_equal(const Matrix& a, const Matrix& b, double tol = kDefaultTol) {
  return a.rows() == b.rows() && a.cols() == b.cols() && max_abs_diff(a, b) <= tol;
}

inline Ket apply(const Matrix& m, const Ket& k) {
  if (m.cols() != k.dim()) throw ShapeError("apply: operator/ket dimension mismatch");
  std::vector<cplx> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i] += m(i, j) * k[j];
  return Ket(std::move(out));
}

// <a|b>
inline cplx inner(const Ket& a, const Ket& b) {
  if (a.dim() != b.dim()) throw ShapeError("inner: ket dimension mismatch");
  cplx s = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

// |a><b|
inline Matrix outer(const Ket& a, const Ket& b) {
  Matrix m(a.dim(), b.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < b.dim(); ++j) m(i, j) = a[i] * std::conj(b[j]);
  return m;
}

inline bool is_hermitian(const Matrix& a, double tol = kDefaultTol) {
  return a.is_square() && max_abs_diff(a, dagger(a)) <= tol;
}

inline bool is_projector(const Matrix& a, double tol = kDefaultTol) {
  if (!a.is_square()) throw ShapeError("is_projector: non-square matrix");
  return is_hermitian(a, tol) && max_abs_diff(matmul(a, a), a) <= tol;
}

inline bool is_unitary(const Matrix& a, double tol = kDefaultTol) {
  return a.is_square() && max_abs_diff(matmul(dagger(a), a), Matrix::identity(a.rows())) <= tol;
}

// Partial trace of a square operator on a tensor product of factors with the
// given dimensions. Kept factors appear in ascending slot order.
inline Matrix partial_trace(const Matrix& a, std::span<const std::size_t> dims,
                            std::span<const std::size_t> keep) {
  if (!a.is_square()) throw ShapeError("partial_trace: non-square matrix");
  const std::size_t n = dims.size();
  std::size_t total = 1;
  for (auto d : dims) {
    if (d == 0) throw ShapeError("partial_trace: zero factor dimension");
    total *= d;
  }
  if (total != a.rows()) {
    throw ShapeError("partial_trace: factor dimensions multiply to " + std::to_string(total) +
                     ", matrix is " + std::to_string(a.rows()));
  }
  std::vector<bool> kept(n, false);
  for (auto k : keep) {
    if (k >= n || kept[k]) throw ShapeError("partial_trace: bad keep index");
    kept[k] = true;
  }

  std::vector<std::size_t> keep_idx, trace_idx;
  for (std::size_t s = 0; s < n; ++s) (kept[s] ? keep_idx : trace_idx).push_back(s);

  // stride of each factor in the full row index
  std::vector<std::size_t> stride(n);
  {
    std::size_t st = 1;
    for (std::size_t s = n; s-- > 0;) {
      stride[s] = st;
      st *= dims[s];
    }
  }
  auto count = [&](const std::vector<std::size_t>& idx) {
    std::size_t c = 1;
    for (auto s : idx) c *= dims[s];
    return c;
  };
  // offset in the full index of a multi-index over the listed factors
  auto offset = [&](const std::vector<std::size_t>& idx, std::size_t flat) {
    std::size_t off = 0;
    for (std::size_t p = idx.size(); p-- > 0;) {
      const std::size_t s = idx[p];
      off += (flat % dims[s]) * stride[s];
      flat /= dims[s];
    }
    return off;
  };

  const std::size_t dk = count(keep_idx), dt = count(trace_idx);
  std::vector<std::size_t> koff(dk), toff(dt);
  for (std::size_t i = 0; i < dk; ++i) koff[i] = offset(keep_idx, i);
  for (std::size_t t = 0; t < dt; ++t) toff[t] = offset(trace_idx, t);

  Matrix out(dk, dk);
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dk; ++j) {
      cplx s = 0;
      for (std::size_t t = 0; t < dt; ++t) s += a(koff[i] + toff[t], koff[j] + toff[t]);
      out(i, j) = s;
    }
  return out;
}

inline Matrix partial_trace(const Matrix& a, std::initializer_list<std::size_t> dims,
                            std::initializer_list<std::size_t> keep) {
  return partial_trace(a, std::span<const std::size_t>(dims.begin(), dims.size()),
                       std::span<const std::size_t>(keep.begin(), keep.size()));
}

//------------------------------------------------------------------------------
// Hermitian eigendecomposition
//------------------------------------------------------------------------------

struct EigenPair {
  double value;
  std::vector<cplx> vector;
};

// Eigenpairs of a Hermitian matrix in descending eigenvalue order. Each
// eigenvector's largest-magnitude component is made real and positive so the
// output does not depend on solver phase conventions.
inline std::vector<EigenPair> eigh(const Matrix& a) {
  if (!a.is_square()) throw ShapeError("eigh: non-square matrix");
  const auto n = static_cast<Eigen::Index>(a.rows());
  Eigen::MatrixXcd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  // symmetrize against rounding
  m = (0.5 * (m + m.adjoint())).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
  if (solver.info() != Eigen::Success) throw ArgumentError("eigh: decomposition failed");

  std::vector<EigenPair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index c = n; c-- > 0;) {
    EigenPair p{solver.eigenvalues()(c), std::vector<cplx>(static_cast<std::size_t>(n))};
    Eigen::Index best = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(solver.eigenvectors()(i, c)) > std::abs(solver.eigenvectors()(best, c)) + 1e-12)
        best = i;
    const cplx pivot = solver.eigenvectors()(best, c);
    const cplx phase = std::abs(pivot) > 0 ? std::conj(pivot) / std::abs(pivot) : cplx{1.0};
    for (Eigen::Index i = 0; i < n; ++i)
      p.vector[static_cast<std::size_t>(i)] = solver.eigenvectors()(i, c) * phase;
    out.push_back(std::move(p));
  }
  return out;
}

//------------------------------------------------------------------------------
// Named qubit operators and states
//------------------------------------------------------------------------------

namespace pauli {
inline Matrix I() { return Matrix::identity(2); }
inline Matrix X() { return Matrix{{0, 1}, {1, 0}}; }
inline Matrix Y() { return Matrix{{0, cplx(0, -1)}, {cplx(0, 1), 0}}; }
inline Matrix Z() { return Matrix{{1, 0}, {0, -1}}; }
// Unit Bloch vector observable n . sigma, with polar angle theta and azimuth phi.
inline Matrix bloch(double theta, double phi) {
  return std::sin(theta) * std::cos(phi) * X() + std::sin(theta) * std::sin(phi) * Y() +
         std::cos(theta) * Z();
}
}  // namespace pauli

inline Matrix hadamard() { return kInvSqrt2 * Matrix{{1, 1}, {1, -1}}; }

namespace kets {
inline Ket zero() { return Ket{1, 0}; }
inline Ket one() { return Ket{0, 1}; }
inline Ket plus() { return Ket{kInvSqrt2, kInvSqrt2}; }
inline Ket minus() { return Ket{kInvSqrt2, -kInvSqrt2}; }
inline Ket plus_i() { return Ket{kInvSqrt2, cplx(0, kInvSqrt2)}; }
inline Ket minus_i() { return Ket{kInvSqrt2, cplx(0, -kInvSqrt2)}; }
// (|00> + |11>)/sqrt2
inline Ket phi_plus() { return Ket{kInvSqrt2, 0, 0, kInvSqrt2}; }
}  // namespace kets

// Spin projectors [z+], [z-], [x+], ...
namespace proj {
inline Matrix z_plus() { return kets::zero().projector(); }
inline Matrix z_minus() { return kets::one().projector(); }
inline Matrix x_plus() { return kets::plus().projector(); }
inline Matrix x_minus() { return kets::minus().projector(); }
inline Matrix y_plus() { return kets::plus_i().projector(); }
inline Matrix y_minus() { return kets::minus_i().projector(); }
}  // namespace proj

// Short name of a recognised operator ("z+", "X", "I", "phi+", ...), or an
// empty string.
inline std::string operator_name(const Matrix& a, double tol = 1e-12) {
  if (a.rows() != 2 || a.cols() != 2) {
    if (a.is_square() && approx_equal(a, Matrix::identity(a.rows()), tol)) return "I";
    if (a.rows() == 4 && a.cols() == 4 && approx_equal(a, kets::phi_plus().projector(), tol)) return "phi+";
    return {};
  }
  static const std::vector<std::pair<std::string, Matrix>> named = {
      {"z+", proj::z_plus()},  {"z-", proj::z_minus()}, {"x+", proj::x_plus()},
      {"x-", proj::x_minus()}, {"y+", proj::y_plus()},  {"y-", proj::y_minus()},
      {"I", pauli::I()},       {"X", pauli::X()},       {"Y", pauli::Y()},
      {"Z", pauli::Z()},
  };
  for (const auto& [name, m] : named)
    if (approx_equal(a, m, tol)) return name;
  return {};
}

}  // namespace ehist
