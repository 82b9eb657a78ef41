#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace sdelab {

/// Small dense row-major matrix. Sized for state dimensions of a handful;
/// nothing here is blocked or cache-tuned.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix zeros(std::size_t n) { return Matrix(n, n); }
  static Matrix diagonal(std::span<const double> d);
  static Matrix diagonal(std::initializer_list<double> d);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator*(Matrix a, double s);

Matrix transpose(const Matrix& a);
double trace(const Matrix& a);
double max_abs(const Matrix& a);
double frobenius_norm(const Matrix& a);

/// Squared singular values in descending order, by one-sided Jacobi
/// orthogonalisation of the columns. Converged when every column pair has
/// |<a_p, a_q>| <= tol * |a_p| |a_q|.
std::vector<double> singular_values_sq(const Matrix& a, double tol = 1e-12);
std::vector<double> singular_values(const Matrix& a, double tol = 1e-12);

/// Spectral norm and its square. The square is taken from the Jacobi column
/// norms directly, so diagonal inputs give x*x with no sqrt round trip.
double op_norm(const Matrix& a);
double op_norm_sq(const Matrix& a);

/// sigma_max / sigma_min; +inf when sigma_min is zero.
double condition_number(const Matrix& a);

/// Number of singular values above rel_tol * sigma_max.
std::size_t numerical_rank(const Matrix& a, double rel_tol = 1e-8);

/// Gauss-Jordan with partial pivoting. Empty when a pivot is exactly zero.
std::optional<Matrix> inverse(const Matrix& a);

/// Same algorithm on raw n x n row-major storage; work holds n*n doubles.
/// Returns false (out unspecified) on a zero or non-finite pivot.
bool invert_into(std::size_t n, const double* a, double* out, double* work);

}  // namespace sdelab
