#include "sdelab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "sdelab/errors.hpp"

namespace sdelab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ArgumentError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::diagonal(std::initializer_list<double> d) {
  return diagonal(std::span<const double>(d.begin(), d.size()));
}

Matrix& Matrix::operator+=(const Matrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ArgumentError("matrix shape mismatch in +");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ArgumentError("matrix shape mismatch in -");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ArgumentError("matrix shape mismatch in *");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double trace(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) s += a(i, i);
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

std::vector<double> singular_values_sq(const Matrix& a, double tol) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (m == 0 || n == 0) return {};

  // Work on columns; transpose wide inputs so there are at most m columns.
  Matrix w = (n > m) ? transpose(a) : a;
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();

  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += w(i, p) * w(i, p);
          beta += w(i, q) * w(i, q);
          gamma += w(i, p) * w(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sq(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += w(i, j) * w(i, j);
    sq[j] = acc;
  }
  std::sort(sq.begin(), sq.end(), std::greater<>());
  return sq;
}

std::vector<double> singular_values(const Matrix& a, double tol) {
  auto sv = singular_values_sq(a, tol);
  for (double& v : sv) v = std::sqrt(v);
  return sv;
}

double op_norm_sq(const Matrix& a) {
  const auto sq = singular_values_sq(a);
  return sq.empty() ? 0.0 : sq.front();
}

double op_norm(const Matrix& a) { return std::sqrt(op_norm_sq(a)); }

double condition_number(const Matrix& a) {
  const auto sv = singular_values(a);
  if (sv.empty()) return 1.0;
  if (!(sv.back() > 0.0)) return std::numeric_limits<double>::infinity();
  return sv.front() / sv.back();
}

std::size_t numerical_rank(const Matrix& a, double rel_tol) {
  const auto sv = singular_values(a);
  if (sv.empty() || sv.front() == 0.0) return 0;
  const double cut = rel_tol * sv.front();
  return static_cast<std::size_t>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > cut; }));
}

bool invert_into(std::size_t n, const double* a, double* out, double* work) {
  double* lhs = work;
  std::copy(a, a + n * n, lhs);
  std::fill(out, out + n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lhs[r * n + col]) > std::abs(lhs[pivot * n + col])) pivot = r;
    const double pv = lhs[pivot * n + col];
    if (pv == 0.0 || !std::isfinite(pv)) return false;
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(lhs[pivot * n + j], lhs[col * n + j]);
        std::swap(out[pivot * n + j], out[col * n + j]);
      }
    }
    const double inv_p = 1.0 / lhs[col * n + col];
    for (std::size_t j = 0; j < n; ++j) {
      lhs[col * n + j] *= inv_p;
      out[col * n + j] *= inv_p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = lhs[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        lhs[r * n + j] -= f * lhs[col * n + j];
        out[r * n + j] -= f * out[col * n + j];
      }
    }
  }
  return true;
}

std::optional<Matrix> inverse(const Matrix& a) {
  if (!a.square()) throw ArgumentError("inverse of non-square matrix");
  const std::size_t n = a.rows();
  Matrix out(n, n);
  std::vector<double> work(n * n);
  if (!invert_into(n, a.data().data(), out.data().data(), work.data())) return std::nullopt;
  return out;
}

}  // namespace sdelab
