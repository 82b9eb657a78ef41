#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "sdelab/linalg.hpp"

using namespace sdelab;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (double& x : m.data()) x = nd(rng);
  return m;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

}  // namespace

TEST_CASE("basic arithmetic") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0, 1}, {1, 0}};
  CHECK(a * b == Matrix{{2, 1}, {4, 3}});
  CHECK(a + b == Matrix{{1, 3}, {4, 4}});
  CHECK(a - b == Matrix{{1, 1}, {2, 4}});
  CHECK(2.0 * a == Matrix{{2, 4}, {6, 8}});
  CHECK(transpose(a) == Matrix{{1, 3}, {2, 4}});
  CHECK(trace(a) == 5.0);
  CHECK(max_abs(a) == 4.0);
  CHECK(Matrix::identity(3) * Matrix::identity(3) == Matrix::identity(3));
  CHECK_FALSE(Matrix{{1, std::nan("")}}.all_finite());
}

TEST_CASE("singular values agree with Eigen's JacobiSVD") {
  std::mt19937_64 rng(11);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix m = random_matrix(rng, n, n, std::pow(10.0, rep % 5 - 2));
      const auto sv = singular_values(m);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
      const auto ref = svd.singularValues();
      REQUIRE(sv.size() == n);
      for (std::size_t i = 0; i < n; ++i) CHECK(sv[i] == doctest::Approx(ref(i)).epsilon(1e-10));
      CHECK(op_norm(m) == doctest::Approx(ref(0)).epsilon(1e-10));
      const double cond = ref(n - 1) > 0 ? ref(0) / ref(n - 1) : INFINITY;
      CHECK(condition_number(m) == doctest::Approx(cond).epsilon(1e-8));
    }
  }
}

TEST_CASE("op_norm_sq is exact on diagonal matrices") {
  const Matrix d = Matrix::diagonal({0.3, -1.7, 0.01});
  CHECK(op_norm_sq(d) == -1.7 * -1.7);
  CHECK(op_norm_sq(Matrix::zeros(3)) == 0.0);
  CHECK(op_norm_sq(Matrix::diagonal({1.0, 0.0})) == 1.0);
}

TEST_CASE("inverse agrees with Eigen") {
  std::mt19937_64 rng(5);
  for (std::size_t n = 1; n <= 5; ++n) {
    for (int rep = 0; rep < 10; ++rep) {
      const Matrix m = random_matrix(rng, n, n) + 3.0 * Matrix::identity(n);
      const auto inv = inverse(m);
      REQUIRE(inv);
      const Eigen::MatrixXd ref = to_eigen(m).inverse();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) CHECK((*inv)(i, j) == doctest::Approx(ref(i, j)).epsilon(1e-11));

      std::vector<double> out(n * n), work(n * n);
      REQUIRE(invert_into(n, m.data().data(), out.data(), work.data()));
      for (std::size_t e = 0; e < n * n; ++e) CHECK(out[e] == inv->data()[e]);
    }
  }
}

TEST_CASE("singular input is reported") {
  const Matrix s{{1, 2}, {2, 4}};
  CHECK_FALSE(inverse(Matrix{{1, 0}, {0, 0}}).has_value());
  CHECK(numerical_rank(s) == 1);
  CHECK(numerical_rank(Matrix::identity(4)) == 4);
  CHECK(numerical_rank(Matrix::zeros(2)) == 0);
  CHECK(std::isinf(condition_number(Matrix{{1, 0}, {0, 0}})));
  std::vector<double> out(4), work(4);
  const double nanm[4] = {std::nan(""), 0, 0, 1};
  CHECK_FALSE(invert_into(2, nanm, out.data(), work.data()));
}

TEST_CASE("frobenius norm bounds the spectral norm") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix m = random_matrix(rng, 3, 3);
    CHECK(op_norm(m) <= frobenius_norm(m) * (1 + 1e-14));
    CHECK(frobenius_norm(m) <= std::sqrt(3.0) * op_norm(m) * (1 + 1e-12));
  }
}
