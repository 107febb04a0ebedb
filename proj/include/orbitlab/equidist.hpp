#ifndef ORBITLAB_EQUIDIST_HPP
#define ORBITLAB_EQUIDIST_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "orbitlab/lattice.hpp"
#include "orbitlab/lie.hpp"

namespace orbitlab {

enum class ProfileKind { Bump, Constant };

// smooth tensor bump in the (u^-, a, u, r) box coordinates around a center,
// supported on B^G_{0.1 radius}.center, mass normalized to 1 against the
// box-coordinate Lebesgue gauge
struct TestFunction {
  QuotientPoint center;
  double radius = 0.1;
  ProfileKind profile = ProfileKind::Bump;
  double constant_value = 1.0;  // for the degenerate constant profile
};

double test_function_value(const TestFunction& f, const QuotientPoint& x,
                           const LatticeCache& cache);

struct AverageResult {
  double value = 0;
  double mc_error = 0;  // batch standard error
  int samples = 0;
};

// int_{B_N(0,1)} f(a_t n . x) dn by seeded Monte Carlo over (r,s) in [0,1]^2
AverageResult horospherical_average(const TestFunction& f, const QuotientPoint& x, double t,
                                    int samples, std::uint64_t seed, const LatticeCache& cache);

struct SparseRegularity {
  double exponent = 0;
  double constant = 0;
  double floor = 0;
};

struct SparseMeasure {
  std::vector<double> support;  // I, sorted
  std::vector<double> weights;  // sums to 1
  double scale_b = 0;           // the regularity scale
  SparseRegularity record;
};

SparseMeasure uniform_sparse(int n);           // uniform grid on [0,1]
SparseMeasure dirac_sparse(double s);          // negative control

struct SparseAverageResult {
  double value = 0;
  double mc_error = 0;
  bool window_warning = false;  // t outside [|log b|/4, |log b|/2]
};

// int int f(a_t u_r v_s . x) dr drho(s): exact sum over the support,
// Monte Carlo in r
SparseAverageResult sparse_average(const TestFunction& f, const QuotientPoint& x, double t,
                                   const SparseMeasure& rho, int r_samples, std::uint64_t seed,
                                   const LatticeCache& cache);

struct RhoCheckResult {
  bool pass = false;
  double fitted_c = 0;
  double worst_lo = 0, worst_len = 0;
};

// exhaustive dyadic-interval scan above the floor
RhoCheckResult rho_regularity_check(const SparseMeasure& rho, double exponent, double floor);

struct DensityRow {
  double T = 0;
  double covering_radius = 0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

// deterministic grid of reduced points with inj >= eta, used as test points
std::vector<QuotientPoint> test_grid(LatticeId lat, double eta, int max_points,
                                     const LatticeCache& cache);

// samples B_P(e,T).x0 (log-uniform in a, uniform in u), reduces, and records
// the covering radius of the cloud over the test grid
std::vector<DensityRow> density_scan(const QuotientPoint& x0, const std::vector<double>& t_grid,
                                     const std::vector<QuotientPoint>& grid, int samples,
                                     std::uint64_t seed, const LatticeCache& cache);

// largest distance from any cloud point to the base periodic H-orbit
// (transversal gauge); used by the dichotomy experiments
double cloud_orbit_excursion(const QuotientPoint& x0, double T, int samples, std::uint64_t seed,
                             const LatticeCache& cache);

}  // namespace orbitlab

#endif
