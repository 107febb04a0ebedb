#ifndef ORBITLAB_MARGULIS_HPP
#define ORBITLAB_MARGULIS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "orbitlab/lattice.hpp"
#include "orbitlab/lie.hpp"
#include "orbitlab/rng.hpp"

namespace orbitlab {

// A finite union of local H-boxes through the points exp(w) y0, w in F,
// thickened by E = B^H_beta {u_r : |r| <= 0.1 eta}.
struct SheetSet {
  QuotientPoint base;        // y0
  std::vector<LieVector> F;  // transversal offsets; F[0] = 0
  double beta = 0;
  double eta = 0;
};

// F in B_r(0,beta), 0 in F, beta <= eta^2
bool sheet_set_valid(const SheetSet& s);

// point of the sheet set: sheet index plus E-box coordinates,
// h_z = u^-_s a_d u_b u_r with |s|,|d|,|b| <= beta, |r| <= 0.1 eta
struct SheetPoint {
  int sheet = 0;
  double s = 0, d = 0, b = 0, r = 0;
};

SheetPoint sample_mu(const SheetSet& set, Rng& rng);
GroupElement sheet_chart(const SheetSet& set, const SheetPoint& z);  // h_z
// representative of the quotient point h * h_z * exp(w_sheet) * y0
QuotientPoint sheet_point(const SheetSet& set, const GroupElement& h, const SheetPoint& z,
                          bool reduce = true);

// I_E(h,z): transversal displacements onto the other sheets, computed
// combinatorially from pairwise BCH offsets and the box algebra, cut at the
// injectivity radius of hz.  No lattice search within one sheet set.
std::vector<LieVector> transversal_displacements(const SheetSet& set, const GroupElement& h,
                                                 const SheetPoint& z, const LatticeCache& cache);

// sum ||w||^-alpha over the displacement list, inj(hz)^-alpha if empty
double margulis_f(const SheetSet& set, double alpha, const GroupElement& h, const SheetPoint& z,
                  const LatticeCache& cache);

// (max{#I,1}) inj(hz)^-alpha
double psi(const SheetSet& set, double alpha, const GroupElement& h, const SheetPoint& z,
           const LatticeCache& cache);

// ----- averaged contraction ----------------------------------------------

struct QuadratureResult {
  bool ok = false;
  double value = 0;
  double error = 0;
};

// integral_0^1 || Ad(a_m u_r) w ||^-alpha dr, adaptive subdivision refined
// around the norm minimizer
QuadratureResult ad_contraction_integral(const LieVector& w, double alpha, double m,
                                         double rel_tol = 1e-8);

struct MAlphaResult {
  bool ok = false;
  int m = 0;
  std::string error;
};

// the deterministic unit-vector sample the step-time solver sweeps: corner
// and diagonal directions, the tangency-degenerate family (c, c^2, -1), and
// seeded random vectors
std::vector<LieVector> m_alpha_samples(int samples, std::uint64_t seed);

// smallest integer m with integral <= e^-1 (1 + 1e-6) ||w||^-alpha over the
// sample; cap m <= 200
MAlphaResult solve_m_alpha(double alpha, int samples = 64, std::uint64_t seed = 7,
                           int cap = 200);

struct ContractionCheck {
  bool ok = false;     // quadrature converged
  double lhs = 0;      // integral
  double bound = 0;    // C5 e^{-m(1-alpha)/4}/(2-2^alpha) ||w||^-alpha
  bool pass = false;
};

ContractionCheck contraction_check(const LieVector& w, double alpha, double m,
                                   double rel_tol = 1e-8);

// ----- random walk ---------------------------------------------------------

struct RandomWalk {
  double alpha = 0.5;
  int m = 0;    // step time m_alpha / m0
  int ell = 1;  // depth
};

struct WalkSample {
  GroupElement h;          // = a_{m ell} u_rhat
  double rhat = 0;
  std::vector<double> rs;  // the individual steps
};

// one draw from nu^(ell), nu(phi) = int_0^1 phi(a_m u_r) dr
WalkSample walk_sample(AmbientGroup g, const RandomWalk& walk, Rng& rng);

struct MargulisInequalityReport {
  bool pass = false;
  int ell = 0;
  double worst_lhs = 0;
  double worst_rhs = 0;
  double fitted_c13 = 0;   // smallest C13 that would make every z pass
  double mc_error_rel = 0; // batch-estimate relative error on the lhs
  int z_points = 0;
};

// Monte Carlo check of
//   int f(h,z) dnu^(ell) <= e^-ell f(e,z) + C13 sum_j e^{j-ell} int psi dnu^(j)
MargulisInequalityReport verify_margulis_inequality(const SheetSet& set, const RandomWalk& walk,
                                                    int mc_samples, std::uint64_t seed,
                                                    const LatticeCache& cache, int z_points = 16);

// ----- bootstrap ------------------------------------------------------------

struct BootstrapConfig {
  double alpha = 0.5;
  double epsilon = 0.05;  // must be > 0
  double eta = 0.004;
  double kappa7 = 0.0;        // 0 -> 1/(8 m0)
  double selection_exponent = 2.0;  // p in #F1 = ceil(beta^p #F); paper: 10
  bool use_paper_rule = false;
  int i_max_override = 0;
  int m0_override = 0;
  int r_samples = 300;
  int h0_candidates = 4;
  std::uint64_t seed = 1;
  // covering box: Q^H scale factor and transversal radius factor (times beta)
  double covering_scale = 1.0;
  double mass_threshold_exponent = 13.0;  // covering-mass floor beta^13 e^{-ell m0}
};

struct BootstrapState {
  int iter = 0;
  SheetSet sheets;
  double Mn = 0;  // current log bound on max f
  double n = 1;   // the scale parameter n = t + 1
  int i_max = 0;
  int ell = 1;
  int m0 = 1;
};

struct BootstrapIterationRecord {
  int iter = 0;
  int num_sheets = 0;
  double beta = 0;
  double max_f = 0;
  std::string branch;
  std::uint64_t seed = 0;
};

struct BootstrapStepResult {
  bool ok = false;
  std::string error;  // "EmptyCovering" etc.
  BootstrapState state;
  BootstrapIterationRecord record;
};

BootstrapStepResult bootstrap_step(const BootstrapState& state, const WalkSample& h0,
                                   const BootstrapConfig& cfg, const LatticeCache& cache);

struct BootstrapResult {
  bool ok = false;
  std::string error;
  bool periodic_detected = false;
  SheetSet final_set;
  std::vector<BootstrapIterationRecord> trace;
  double fitted_energy_c = 0;  // max_w sum ||w-w'||^-alpha / (#F)^{1+eps}
};

BootstrapResult bootstrap_run(const QuotientPoint& x0, double t, const BootstrapConfig& cfg,
                              const LatticeCache& cache);

// ----- periodic-orbit Margulis function ------------------------------------

struct PeriodicOrbitStats {
  int samples = 0;
  double mean_f = 0;
  double max_f = 0;
  int max_count = 0;       // max #I(y)
  double volume_proxy = 0; // box-counting proxy for vol(Y)
  double count_bound_c = 0;  // fitted C16 in #I(y) <= C16 * v
};

// displacements from y onto the base periodic orbit H e Gamma, cut at
// delta0 * inj(y)
std::vector<LieVector> orbit_displacements(const QuotientPoint& y, double delta0,
                                           const LatticeCache& cache);

// ergodic sample of mu_Y along the nu-walk started at the identity coset
std::vector<QuotientPoint> sample_periodic_orbit(LatticeId lat, int n, int burn_in, int m0,
                                                 std::uint64_t seed);

PeriodicOrbitStats periodic_orbit_f(const std::vector<QuotientPoint>& ys, double alpha,
                                    double delta0, const LatticeCache& cache);

}  // namespace orbitlab

#endif
