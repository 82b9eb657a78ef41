#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "sdelab/errors.hpp"
#include "sdelab/fixedpoint.hpp"
#include "sdelab/kernels.hpp"

using namespace sdelab;

namespace {

CoefficientSpec spec_from(const std::string& text) { return CoefficientSpec::from_config(ConfigFile::parse(text)); }

std::string system_text(const char* interval, double b, double h) {
  std::ostringstream os;
  os << "dim = 2\ninterval = \"" << interval << "\"\n"
     << "A = \"[[-1, 0], [0, 1]]\"\nG = \"[[0.05, 0], [0, 0.05]]\"\n";
  if (b > 0) os << "B = \"[[0, " << b << "], [" << b << ", 0]]\"\n";
  if (h > 0) os << "H = \"[[0, " << h << "], [" << h << ", 0]]\"\n";
  os << "a_bound = 1\ng_bound = 0.05\nb_bound = " << b << "\nh_bound = " << h << "\n";
  return os.str();
}

// Undefined entries are NaN, so fields are compared bitwise.
bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

const Matrix kP0 = Matrix::diagonal({1.0, 0.0});
const DichotomyParams kParams{1.0, 1.99, 0.0, DichotomyKind::Dichotomy};

}  // namespace

TEST_CASE("unperturbed U converges at iterate 1 and reproduces P0") {
  const auto spec = spec_from(system_text("right:0", 0, 0));
  const auto grid = SimGrid::uniform(0, 2, 0.01, 0.25);
  const auto fam = ProjectionFamily::shared(kP0, 0.0);
  PicardOptions opts;
  opts.t_trunc = 16.0;
  const auto U = picard_solve_U(spec, kParams, fam, grid, 200, 4, opts);
  CHECK(U.converged);
  CHECK(U.iterate_index == 1);
  REQUIRE(U.log.size() == 2);
  CHECK(U.log[1].diff_norm == 0.0);
  CHECK(U.which == FieldKind::URight);
  CHECK(U.bases == std::vector<double>{0.0, 1.0, 2.0});

  const auto ens = simulate_forward(spec, System::Unperturbed, grid, 200, 4);
  const auto pert = simulate_forward(spec, System::Perturbed, grid, 200, 4);
  // U(t, s) = Phi(t, s) P0 for the diagonal system.
  const auto tr = transition(ens, 2.0, 1.0);
  const std::size_t b1 = U.base_index(1.0);
  for (std::size_t p = 0; p < 200; ++p) {
    REQUIRE(U.path_valid[p]);
    const Matrix v = U.value(p, b1, 8);
    const Matrix ref = tr.values[p] * kP0;
    CHECK(max_abs(v - ref) < 1e-12 * (1 + max_abs(ref)));
    CHECK_FALSE(U.defined(b1, 3));
  }
  const auto phat = build_projection_right(U, pert);
  for (std::size_t p = 0; p < 200; ++p) {
    REQUIRE(phat.base(p));
    CHECK(*phat.base(p) == kP0);
  }
  CHECK(ms_distance(phat, kP0).first == 0.0);
}

TEST_CASE("contraction solver reproduces the perturbed fundamental matrix") {
  auto text = system_text("right:0", 0.02, 0.02);
  text.replace(text.find("[0, 1]]"), 7, "[0, -1.5]]");
  const auto stable = spec_from(text);
  const DichotomyParams cp{1.0, 1.99, 0.0, DichotomyKind::Contraction};
  PicardOptions opts;
  opts.tol = 1e-10;
  // The discretised integral equation and the Euler scheme agree to O(dt).
  std::vector<double> errs;
  KernelField f;
  for (double dt : {0.01, 0.001}) {
    const auto grid = SimGrid::uniform(0, 1, dt, 0.25);
    f = picard_solve_contraction(stable, cp, grid, 100, 9, opts);
    CHECK(f.converged);
    CHECK(f.which == FieldKind::Contraction);
    const auto pert = simulate_forward(stable, System::Perturbed, grid, 100, 9);
    const auto tr = transition(pert, 1.0, 0.0);
    double worst = 0.0;
    for (std::size_t p = 0; p < 100; ++p) worst = std::max(worst, max_abs(f.value(p, 0, 4) - tr.values[p]));
    errs.push_back(worst);
  }
  CHECK(errs[0] < 1e-3);
  CHECK(errs[1] < errs[0] / 4);
  for (std::size_t k = 2; k < f.log.size(); ++k) CHECK(f.log[k].diff_norm < f.log[k - 1].diff_norm);
}

TEST_CASE("condition and truncation errors") {
  const auto grid = SimGrid::uniform(0, 2, 0.01, 0.25);
  const auto fam = ProjectionFamily::shared(kP0, 0.0);
  PicardOptions opts;
  opts.t_trunc = 16.0;
  const auto big = spec_from(system_text("right:0", 0.5, 0.5));
  CHECK_THROWS_AS(picard_solve_U(big, kParams, fam, grid, 10, 1, opts), ConditionError);
  CHECK_THROWS_AS(picard_solve_contraction(big, {1, 1.99, 0, DichotomyKind::Contraction}, grid, 10, 1, opts),
                  ConditionError);

  const auto spec = spec_from(system_text("right:0", 0.02, 0.02));
  opts.t_trunc = 2.0;
  try {
    picard_solve_U(spec, kParams, fam, grid, 50, 1, opts);
    FAIL("expected TruncationError");
  } catch (const TruncationError& e) {
    CHECK(std::string(e.what()).find("t_trunc") != std::string::npos);
  }
  opts.t_trunc = NAN;
  CHECK_THROWS_AS(picard_solve_U(spec, kParams, fam, grid, 10, 1, opts), ArgumentError);
  opts.t_trunc = 1.0;
  CHECK_THROWS_AS(picard_solve_U(spec, kParams, fam, grid, 10, 1, opts), ArgumentError);
  opts.t_trunc = 16.0;
  CHECK_THROWS_AS(picard_solve_green(spec, kParams, fam, grid, 10, 1, opts), ArgumentError);
}

TEST_CASE("perturbed U is deterministic across threads and ISA") {
  const auto spec = spec_from(system_text("right:0", 0.02, 0.02));
  const auto grid = SimGrid::uniform(0, 1, 0.01, 0.25);
  const auto fam = ProjectionFamily::shared(kP0, 0.0);
  PicardOptions opts;
  opts.t_trunc = 16.0;
  opts.threads = 1;
  const auto a = picard_solve_U(spec, kParams, fam, grid, 70, 3, opts);
  opts.threads = 3;
  const auto b = picard_solve_U(spec, kParams, fam, grid, 70, 3, opts);
  CHECK(a.converged);
  CHECK(same_bits(a.values, b.values));
  const auto before = kernels::active_isa();
  kernels::set_active_isa(kernels::Isa::Scalar);
  const auto c = picard_solve_U(spec, kParams, fam, grid, 70, 3, opts);
  kernels::set_active_isa(before);
  CHECK(same_bits(a.values, c.values));
  std::ostringstream s1, s2;
  write_field_csv(s1, a);
  write_field_csv(s2, c);
  CHECK(s1.str() == s2.str());
  std::ostringstream conv;
  write_convergence_csv(conv, a);
  CHECK(conv.str().rfind("iterate,diff_norm,ratio,weighted_norm\n", 0) == 0);

  for (std::size_t k = 2; k < a.log.size(); ++k)
    if (a.log[k].diff_norm > 0) CHECK(a.log[k].ratio < 0.5);
}

TEST_CASE("left half line and Green kernels in the unperturbed case") {
  const auto grid_l = SimGrid::uniform(-2, 0, 0.01, 0.25);
  const auto left = spec_from(system_text("left:0", 0, 0));
  const auto fam = ProjectionFamily::shared(kP0, 0.0);
  PicardOptions opts;
  opts.t_trunc = -16.0;
  const auto V = picard_solve_V(left, kParams, fam, grid_l, 50, 2, opts);
  CHECK(V.converged);
  CHECK(V.iterate_index == 1);
  CHECK(V.bases == std::vector<double>{-2.0, -1.0, 0.0});
  const auto ens_l = simulate_forward(left, System::Unperturbed, grid_l, 50, 2);
  const auto tr = transition(ens_l, -1.0, 0.0);
  const Matrix q0 = Matrix::identity(2) - kP0;
  const std::size_t b0 = V.base_index(0.0);
  const std::size_t node = *grid_l.node_index(-1.0);
  for (std::size_t p = 0; p < 50; ++p) {
    const Matrix ref = tr.values[p] * q0;
    CHECK(max_abs(V.value(p, b0, node) - ref) < 1e-12 * (1 + max_abs(ref)));
  }

  const auto whole = spec_from(system_text("whole:0", 0, 0));
  const auto grid_w = SimGrid::uniform(-1, 1, 0.01, 0.25);
  opts.t_trunc = 16.0;
  const auto [Ug, Vg] = picard_solve_green(whole, kParams, fam, grid_w, 50, 2, opts);
  CHECK(Ug.which == FieldKind::UGreen);
  CHECK(Vg.which == FieldKind::VGreen);
  CHECK(Ug.converged);
  CHECK(Vg.converged);
  const auto pert = simulate_forward(whole, System::Perturbed, grid_w, 50, 2);
  const auto right = build_projection_right(Ug, pert);
  const auto leftp = build_projection_left(Vg, pert);
  const auto g = glue_projections(right, leftp, fam, pert);
  CHECK(g.n_singular == 0);
  CHECK(g.ms_distance_to_Id == 0.0);
  CHECK(g.idempotence_ms == 0.0);
  const auto glued = glued_family(g);
  CHECK(*glued.base(0) == kP0);
}

TEST_CASE("perturbed whole-line gluing stays close to the identity") {
  const auto whole = spec_from(system_text("whole:0", 0.02, 0.02));
  const auto grid = SimGrid::uniform(-1, 1, 0.01, 0.25);
  const auto fam = ProjectionFamily::shared(kP0, 0.0);
  PicardOptions opts;
  opts.t_trunc = 16.0;
  const auto [U, V] = picard_solve_green(whole, kParams, fam, grid, 200, 5, opts);
  REQUIRE(U.converged);
  REQUIRE(V.converged);
  const auto pert = simulate_forward(whole, System::Perturbed, grid, 200, 5);
  const auto right = build_projection_right(U, pert);
  const auto left = build_projection_left(V, pert);
  const auto bound = s_invertibility_bound(1.0, 1.99, 0.0, 0.02, 0.05, 0.02);
  const auto g = glue_projections(right, left, fam, pert, bound);
  CHECK(g.within_bound);
  CHECK(g.ms_distance_to_Id > 0.0);
  CHECK(g.ms_distance_to_Id <= bound.value);
  CHECK(g.idempotence_ms < 1e-6);
  CHECK(g.s1t1_max_error < 1e-9);
}

TEST_CASE("field accessors") {
  CHECK(std::string(to_string(FieldKind::VGreen)) == "V_green");
  KernelField f;
  f.bases = {0.0};
  CHECK_THROWS_AS(f.base_index(1.0), ArgumentError);
}
