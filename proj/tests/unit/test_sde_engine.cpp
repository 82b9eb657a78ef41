#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "sdelab/errors.hpp"
#include "sdelab/kernels.hpp"
#include "sdelab/oracle.hpp"
#include "sdelab/sde_engine.hpp"

using namespace sdelab;

namespace {

CoefficientSpec spec_from(const char* text) { return CoefficientSpec::from_config(ConfigFile::parse(text)); }

// Classical RK4 for the deterministic matrix ODE X' = A(t) X.
Matrix rk4(const CoefficientSpec& spec, double s, double t, std::size_t steps) {
  const double h = (t - s) / static_cast<double>(steps);
  Matrix x = Matrix::identity(spec.dim);
  for (std::size_t k = 0; k < steps; ++k) {
    const double tk = s + static_cast<double>(k) * h;
    const Matrix k1 = spec.A.eval(tk) * x;
    const Matrix k2 = spec.A.eval(tk + h / 2) * (x + (h / 2) * k1);
    const Matrix k3 = spec.A.eval(tk + h / 2) * (x + (h / 2) * k2);
    const Matrix k4 = spec.A.eval(tk + h) * (x + h * k3);
    x += (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

}  // namespace

TEST_CASE("grid validation") {
  SimGrid g{0.0, 1.0, 0.1, {0.0, 0.5, 1.0}};
  CHECK_NOTHROW(g.validate());
  CHECK(g.steps() == 10);
  CHECK(g.node_step(1) == 5);
  CHECK(g.node_index(0.5) == 1u);
  CHECK_FALSE(g.node_index(0.55).has_value());
  CHECK_THROWS_AS(g.node_index_or_throw(0.55), ArgumentError);
  CHECK_THROWS_AS((SimGrid{0, 1, 0.1, {}}.validate()), ArgumentError);
  CHECK_THROWS_AS((SimGrid{0, 1, 0.1, {0.55}}.validate()), ArgumentError);
  CHECK_THROWS_AS((SimGrid{0, 1, 0.1, {0.5, 0.2}}.validate()), ArgumentError);
  CHECK_THROWS_AS((SimGrid{0, 1, 0.0, {0.0}}.validate()), ArgumentError);
  CHECK_THROWS_AS((SimGrid{0, 1, 0.1, {1.5}}.validate()), ArgumentError);
  const auto u = SimGrid::uniform(0, 2, 0.01, 0.25);
  CHECK(u.nodes.size() == 9);
  CHECK(u.nodes.back() == 2.0);
}

TEST_CASE("deterministic constant system is Euler's power exactly") {
  const auto spec = spec_from("dim = 2\nA = \"[[-1, 0], [0, 1]]\"\n");
  const auto grid = SimGrid::uniform(0, 1, 0.01, 0.5);
  const auto ens = simulate_forward(spec, System::Unperturbed, grid, 40, 3);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    const Matrix m = ens.sample(p, 2);
    CHECK(m(0, 0) == doctest::Approx(std::pow(0.99, 100)).epsilon(1e-13));
    CHECK(m(1, 1) == doctest::Approx(std::pow(1.01, 100)).epsilon(1e-13));
    CHECK(m(0, 1) == 0.0);
  }
}

TEST_CASE("time-varying deterministic system converges to the RK4 reference") {
  const auto spec = spec_from("dim = 2\nA = \"[[-1, sin(t)], [0.5*cos(t), -0.2*t]]\"\n");
  const Matrix ref = rk4(spec, 0, 2, 20000);
  double prev_err = INFINITY;
  for (double dt : {0.01, 0.001}) {
    const auto ens = simulate_forward(spec, System::Unperturbed, SimGrid::uniform(0, 2, dt, 1.0), 32, 1);
    const double err = max_abs(ens.sample(0, 2) - ref);
    CHECK(err < 0.02 * max_abs(ref) * dt / 0.01);
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("scalar geometric noise matches the discrete second moment") {
  // dx = lam x dt + sig x dw under Euler: E x_k^2 = ((1 + lam dt)^2 + sig^2 dt)^k.
  const auto spec = spec_from("dim = 1\nA = \"-0.5\"\nG = \"0.4\"\n");
  const double dt = 0.01;
  const auto grid = SimGrid::uniform(0, 1, dt, 0.5);
  const auto ens = simulate_forward(spec, System::Unperturbed, grid, 20000, 17);
  for (std::size_t node = 1; node < grid.nodes.size(); ++node) {
    std::vector<double> sq;
    for (std::size_t p = 0; p < ens.n_paths; ++p) sq.push_back(std::pow(ens.sample(p, node)(0, 0), 2));
    const auto [mean, se] = mean_and_stderr(sq);
    const double k = std::round(grid.nodes[node] / dt);
    const double exact = std::pow(std::pow(1 - 0.5 * dt, 2) + 0.16 * dt, k);
    CHECK(std::abs(mean - exact) < 4 * se);
  }
}

TEST_CASE("cocycle and identity") {
  const auto spec = spec_from("dim = 2\nA = \"[[-1, 0.3], [0.1, 0.5]]\"\nG = \"[[0.2, 0], [0.1, 0.3]]\"\n");
  const auto grid = SimGrid::uniform(0, 2, 0.01, 0.5);
  const auto ens = simulate_forward(spec, System::Unperturbed, grid, 64, 5);
  const auto ts = transition(ens, 2.0, 0.5);
  const auto tu = transition(ens, 2.0, 1.0);
  const auto us = transition(ens, 1.0, 0.5);
  const auto id = transition(ens, 1.0, 1.0);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    REQUIRE(ts.valid[p]);
    CHECK(max_abs(tu.values[p] * us.values[p] - ts.values[p]) < 1e-10 * (1 + max_abs(ts.values[p])));
    CHECK(id.values[p] == Matrix::identity(2));
  }
}

TEST_CASE("ensembles are independent of thread count, ISA and path batching") {
  const auto spec = spec_from("dim = 2\nA = \"[[-1, 0.3], [0.1, 0.5]]\"\nG = \"[[0.2, 0], [0.1, 0.3]]\"\n");
  const auto grid = SimGrid::uniform(0, 1, 0.01, 0.25);
  const auto a = simulate_forward(spec, System::Unperturbed, grid, 100, 5, 1);
  const auto b = simulate_forward(spec, System::Unperturbed, grid, 100, 5, 3);
  CHECK(a.samples == b.samples);
  const auto c = simulate_forward(spec, System::Unperturbed, grid, 37, 5, 2);
  for (std::size_t p = 0; p < 37; ++p)
    for (std::size_t node = 0; node < grid.nodes.size(); ++node)
      CHECK(std::memcmp(a.sample_ptr(p, node), c.sample_ptr(p, node), 4 * sizeof(double)) == 0);
  const auto before = kernels::active_isa();
  kernels::set_active_isa(kernels::Isa::Scalar);
  const auto d = simulate_forward(spec, System::Unperturbed, grid, 100, 5, 1);
  kernels::set_active_isa(before);
  CHECK(a.samples == d.samples);
  const auto e = simulate_forward(spec, System::Unperturbed, grid, 100, 6, 1);
  CHECK(a.samples != e.samples);
}

TEST_CASE("grids on a common lattice share increments") {
  const auto spec = spec_from("dim = 1\nA = \"-0.5\"\nG = \"0.4\"\n");
  const auto full = simulate_forward(spec, System::Unperturbed, SimGrid::uniform(0, 2, 0.01, 0.5), 32, 8);
  const auto tail = simulate_forward(spec, System::Unperturbed, SimGrid::uniform(1, 2, 0.01, 0.5), 32, 8);
  const auto tr = transition(full, 2.0, 1.0);
  for (std::size_t p = 0; p < 32; ++p)
    CHECK(tail.sample(p, 2)(0, 0) == doctest::Approx(tr.values[p](0, 0)).epsilon(1e-12));
}

TEST_CASE("ms_norm_curve and degenerate paths") {
  const auto spec = spec_from("dim = 2\nA = \"[[-1, 0], [0, 1]]\"\n");
  const auto grid = SimGrid::uniform(0, 1, 0.01, 0.5);
  const auto ens = simulate_forward(spec, System::Unperturbed, grid, 10, 1);
  const auto curve = ms_norm_curve(ens, {{1.0, 0.0}, {1.0, 0.5}},
                                   PostFactor([](double) { return Matrix::diagonal({1.0, 0.0}); }));
  REQUIRE(curve.points.size() == 2);
  CHECK(curve.points[0].estimate == doctest::Approx(std::pow(0.99, 200)).epsilon(1e-12));
  CHECK(curve.points[0].std_error == 0.0);
  CHECK(curve.points[0].n_effective == 10);

  const auto sing = spec_from("dim = 2\nA = \"[[-100, 0], [0, 0]]\"\n");
  const auto ens2 = simulate_forward(sing, System::Unperturbed, SimGrid::uniform(0, 0.02, 0.01, 0.01), 4, 1);
  const auto tr = transition(ens2, 0.0, 0.01);  // Phi(0.01) = diag(0, 1) is singular
  CHECK(tr.n_degenerate == 4);
}

TEST_CASE("mean and standard error") {
  CHECK(mean_and_stderr({2.0, 2.0, 2.0}) == std::pair<double, double>{2.0, 0.0});
  CHECK(mean_and_stderr({5.0}).second == 0.0);
  const auto [m, se] = mean_and_stderr({1.0, 2.0, 3.0, 4.0});
  CHECK(m == 2.5);
  CHECK(se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
}

TEST_CASE("example u-component second moment at t = 1") {
  const ExampleParams p{4.0, 1.0};
  const SimGrid grid{0.0, 1.0, 1e-4, {1.0}};
  const auto ens = simulate_affine_scalar([&](double t) { return u_drift(p, t); },
                                          [&](double t) { return u_diffusion(p, t); }, 1.0, grid, 100000, 21);
  const auto mom = second_moment(ens);
  REQUIRE(mom.size() == 1);
  const double exact = std::exp(-8.0 + 2.0 * std::cos(1.0));
  CHECK(exact == doctest::Approx(9.876e-4).epsilon(1e-3));
  CHECK(std::abs(mom[0].mean - exact) < 3 * mom[0].std_error);
}

TEST_CASE("csv output") {
  const auto spec = spec_from("dim = 1\nA = \"-1\"\n");
  const auto ens = simulate_forward(spec, System::Unperturbed, SimGrid::uniform(0, 0.02, 0.01, 0.01), 2, 1);
  std::ostringstream os;
  write_ensemble_csv(os, ens);
  const std::string s = os.str();
  CHECK(s.rfind("path,node_time,row,col,value\n", 0) == 0);
  CHECK(s.find('\r') == std::string::npos);
  CHECK(s.find("1,0.02,0,0,0.98009999999999997\n") != std::string::npos);
}
