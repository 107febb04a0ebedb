#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "orbitlab/calibration.hpp"
#include "orbitlab/equidist.hpp"

using namespace orbitlab;

namespace {

const LatticeCache& c4() {
  static LatticeCache c = enumerate_lattice(LatticeId::SL2_GaussianIntegers, 4).cache;
  return c;
}

QuotientPoint generic_point() {
  AmbientGroup g = AmbientGroup::SL2C;
  Mat2 mh;
  mh << 0.11, 0.23, 0.07, -0.11;
  return reduce_point(mul(exp_g(lie_h(g, mh)), exp_g(lie_r3(g, 0.03, -0.02, 0.05))),
                      LatticeId::SL2_GaussianIntegers);
}

QuotientPoint bump_center() {
  AmbientGroup g = AmbientGroup::SL2C;
  Mat2 mh;
  mh << 0.21, 0.13, -0.17, -0.21;
  return reduce_point(mul(exp_g(lie_h(g, mh)), exp_g(lie_r3(g, 0.04, 0.02, -0.03))),
                      LatticeId::SL2_GaussianIntegers);
}

}  // namespace

TEST_CASE("test function: constant profile, support, and normalization scale") {
  QuotientPoint z0 = bump_center();
  TestFunction fc{z0, 4.0, ProfileKind::Constant, 3.25};
  CHECK(test_function_value(fc, generic_point(), c4()) == 3.25);

  TestFunction f{z0, 4.0, ProfileKind::Bump, 1.0};
  // peak at the center, zero far away
  double peak = test_function_value(f, z0, c4());
  CHECK(peak > 0);
  CHECK(peak <= std::pow(0.4 * 0.44, -6.0));
  AmbientGroup g = AmbientGroup::SL2C;
  QuotientPoint far = reduce_point(mul(a_elem(g, 3.0), z0.rep), LatticeId::SL2_GaussianIntegers);
  CHECK(test_function_value(f, far, c4()) == 0.0);
}

TEST_CASE("horospherical average: exact constant, convergence in t, base independence") {
  QuotientPoint z0 = bump_center();
  QuotientPoint x = generic_point();
  TestFunction fc{z0, 4.0, ProfileKind::Constant, 2.5};
  AverageResult rc = horospherical_average(fc, x, 6.0, 400, 5, c4());
  CHECK(rc.value == 2.5);
  CHECK(rc.mc_error == 0.0);

  TestFunction f{z0, 4.0, ProfileKind::Bump, 1.0};
  // averages are bounded by sup f
  double sup = test_function_value(f, z0, c4());
  AverageResult bounded = horospherical_average(f, x, 4.0, 2000, 5, c4());
  CHECK(bounded.value <= sup);
  std::vector<double> avgs;
  for (double t : {4.0, 6.0, 8.0, 10.0})
    avgs.push_back(horospherical_average(f, x, t, 40000, 5, c4()).value);
  double d1 = std::abs(avgs[1] - avgs[0]);
  double d3 = std::abs(avgs[3] - avgs[2]);
  CHECK(d3 <= d1 + 0.01);  // successive differences shrink

  AmbientGroup g = AmbientGroup::SL2C;
  QuotientPoint x2 = reduce_point(a_elem(g, 1.1), LatticeId::SL2_GaussianIntegers);
  AverageResult ra = horospherical_average(f, x, 10.0, 40000, 5, c4());
  AverageResult rb = horospherical_average(f, x2, 10.0, 40000, 6, c4());
  CHECK(std::abs(ra.value - rb.value) <= 3.0 * (ra.mc_error + rb.mc_error));

  // MC error shrinks like samples^{-1/2}
  AverageResult small = horospherical_average(f, x, 8.0, 10000, 5, c4());
  AverageResult big = horospherical_average(f, x, 8.0, 160000, 5, c4());
  CHECK(big.mc_error < small.mc_error);
  double ratio = small.mc_error / big.mc_error;
  CHECK(ratio >= 1.6);
  CHECK(ratio <= 10.0);
}

TEST_CASE("sparse average: uniform grid degenerates to the horospherical average") {
  QuotientPoint z0 = bump_center();
  QuotientPoint x = generic_point();
  TestFunction f{z0, 4.0, ProfileKind::Bump, 1.0};
  SparseMeasure uni = uniform_sparse(48);
  SparseAverageResult rs = sparse_average(f, x, 2.0, uni, 3000, 5, c4());
  AverageResult rh = horospherical_average(f, x, 2.0, 144000, 5, c4());
  CHECK(std::abs(rs.value - rh.value) <= 3.0 * (rs.mc_error + rh.mc_error) + 0.01);

  // window warning fires outside [|log b|/4, |log b|/2]
  CHECK(sparse_average(f, x, 9.0, uni, 10, 5, c4()).window_warning);
  double lb = std::abs(std::log(uni.scale_b));
  CHECK_FALSE(sparse_average(f, x, 0.4 * lb, uni, 10, 5, c4()).window_warning);
}

TEST_CASE("rho regularity: uniform passes near 1, Dirac fails with the atom interval") {
  SparseMeasure uni = uniform_sparse(64);
  RhoCheckResult ru = rho_regularity_check(uni, 1.0 - 0.02, 1.0 / 64);
  CHECK(ru.pass);
  CHECK(ru.fitted_c <= 2.0);

  SparseMeasure dirac = dirac_sparse(0.37);
  RhoCheckResult rd = rho_regularity_check(dirac, 1.0 - 0.02, 1.0 / 256);
  CHECK_FALSE(rd.pass);
  CHECK(rd.fitted_c > calib::kRhoConstantCap);
  // the violating interval contains the atom
  CHECK(rd.worst_lo <= 0.37 + 1e-12);
  CHECK(rd.worst_lo + rd.worst_len >= 0.37 - 1e-12);
}

TEST_CASE("density scan: self point at distance zero, deterministic rows, dichotomy shape") {
  QuotientPoint x0 = generic_point();
  std::vector<QuotientPoint> self{x0};
  auto rows = density_scan(x0, {100.0, 1000.0}, self, 200, 5, c4());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].covering_radius <= 1e-12);
  CHECK(rows[1].covering_radius <= 1e-12);

  auto grid = test_grid(LatticeId::SL2_GaussianIntegers, 0.008, 12, c4());
  REQUIRE(grid.size() >= 8);
  auto r1 = density_scan(x0, {100.0, 1000.0}, grid, 400, 5, c4());
  auto r2 = density_scan(x0, {100.0, 1000.0}, grid, 400, 5, c4());
  for (std::size_t i = 0; i < r1.size(); ++i)
    CHECK(r1[i].covering_radius == r2[i].covering_radius);  // same seed, same rows
  CHECK(r1[1].n_samples > r1[0].n_samples);  // sampling tracks the a-range

  // the periodic base orbit keeps the cloud on itself
  AmbientGroup g = AmbientGroup::SL2C;
  QuotientPoint e = reduce_point(identity(g), LatticeId::SL2_GaussianIntegers);
  CHECK(cloud_orbit_excursion(e, 1000.0, 150, 5, c4()) <= 1e-3);
  CHECK(cloud_orbit_excursion(x0, 1000.0, 150, 5, c4()) > 1e-3);
}
