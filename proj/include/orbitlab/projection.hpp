#ifndef ORBITLAB_PROJECTION_HPP
#define ORBITLAB_PROJECTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "orbitlab/lattice.hpp"
#include "orbitlab/lie.hpp"

namespace orbitlab {

// point of r in the (w11, w12, w21) coordinates
using RVec = Eigen::Vector3d;

inline double rvec_norm(const RVec& w) {
  return std::max({std::abs(w[0]), std::abs(w[1]), std::abs(w[2])});
}

RVec to_rvec(const LieVector& w);
LieVector from_rvec(AmbientGroup g, const RVec& w);

// xi_r(w) = (Ad(u_r) w)_12 = -w21 r^2 - 2 w11 r + w12
inline double xi(const RVec& w, double r) { return -w[2] * r * r - 2.0 * w[0] * r + w[1]; }

// tangency gauge Delta(w - w') = |det(w - w')|
inline double tangency(const RVec& a, const RVec& b) {
  RVec d = a - b;
  return std::abs(-d[0] * d[0] - d[1] * d[2]);
}

struct EnergyResult {
  bool ok = false;
  std::string error;
  std::vector<double> per_point;
  double max_sum = 0;
};

// per-point alpha-energy sums sum_{w' != w} ||w - w'||^-alpha
EnergyResult alpha_energy(const std::vector<RVec>& pts, double alpha);

struct PointSetMeasure {
  std::vector<RVec> pts;  // uniform weights
  double b0 = 0, b1 = 1;
  double alpha = 0;    // certified regularity exponent
  double upsilon = 0;  // certificate constant
  bool certified = false;
};

struct RegularityCertificate {
  bool pass = false;
  double fitted_constant = 0;
  double worst_b = 0;
  RVec worst_center = RVec::Zero();
};

// brute-force scan: #(E cap B(w,b))/#E <= C (b/b1)^exponent over all centers
// in E plus a coarse grid, and all dyadic b in [b0, 2 b1]
RegularityCertificate verify_regularity(const std::vector<RVec>& pts, double b0, double b1,
                                        double exponent, double constant_cap);

struct RegularizeResult {
  bool ok = false;
  std::string error;  // "HypothesisFail" etc
  RVec w0 = RVec::Zero();
  double b1 = 0;
  std::vector<RVec> selected;  // F'
  int T = 2, k1 = 0, k2 = 0;
  std::vector<int> branching_bits;  // log2 R_ell
  RegularityCertificate cert;       // at exponent alpha - 20 eps
  double energy_D = 0;              // fitted D of the hypothesis
};

// dyadic-cube branching construction; returns a sub-cube on which counting
// is Ahlfors-regular at exponent alpha - 20 eps
RegularizeResult dyadic_regularize(const std::vector<RVec>& pts, double alpha, double eps,
                                   int T = 2, double d_cap = 1e4);

// tube mass m^b_rho(q) by linear scan (q1 in [0,1])
double multiplicity(const PointSetMeasure& E, double q1, double q2, double b);

// general position: first r0 in {0, 0.1, 0.9} for which at least
// a quarter of Ad(u_r0)E has |w12| >= 1e-3 ||w||
struct GeneralPosition {
  bool ok = false;
  double r0 = 0;
  std::vector<int> kept;  // indices into E
};
GeneralPosition general_position_rotation(const std::vector<RVec>& pts);

struct ProjectionReport {
  bool pass = false;
  bool certificate_missing = false;
  bool degenerate_collisions = false;
  double alpha = 0, kappa = 0, b1 = 0;
  double good_direction_fraction = 0;
  double good_point_fraction_min = 0;
  double fitted_c = 0;
  std::string grid_spec;
  std::uint64_t seed = 0;
  std::vector<double> good_directions;           // J'
  std::vector<std::vector<int>> good_point_sets;  // E_r per good direction
};

std::string projection_report_json(const ProjectionReport& rep);

// worst multiplicities over a direction grid on [j_lo, j_hi] and the dyadic
// b-grid; greedy assembly of J' and E_r at exponent alpha - 7 kappa
ProjectionReport verify_projection_theorem(const PointSetMeasure& E, double kappa, double j_lo,
                                           double j_hi, int r_grid, int b_grid);

struct PipelineConfig {
  double eta = 0.008;
  int min_points = 8;
  double d_cap = 1e4;
  int T = 2;
  int r_grid = 64;
  int b_grid = 12;
  double rho_floor = 1.0 / 256.0;       // desk-scale dyadic interval floor
  double localization_divisor = 6.0;    // keep F' within b1/divisor of w0
  double beta0 = 1e-2;                  // perturbative radius for the BCH chart
  std::uint64_t seed = 1;
};

struct PipelineResult {
  bool ok = false;
  std::string error;  // SizeFloor / HypothesisFail / GeneralPositionFail / RecurrenceFail
  QuotientPoint x2;
  std::vector<double> I;        // support of rho
  std::vector<double> weights;  // rho atoms
  double b1_norm = 0, b1_abs = 0;
  double r_star = 0, r0 = 0;
  double t = 0;
  ProjectionReport report;
  bool rho_pass = false;
  double rho_fitted_c = 0;       // at exponent alpha - 30 eps above rho_floor
  double membership_c = 0;       // max dist(v_s x2, sheet target)/b1
  double energy_D = 0;
};

// Full chain: regularize, localize by BCH against w0, rotate to general
// position, pick a recurrent good direction, expand by a_{|log b1|} and
// push the counting measure through e^t xi_r.
PipelineResult project_pipeline(const std::vector<RVec>& F, const QuotientPoint& x1, double alpha,
                                double eps, const PipelineConfig& cfg, const LatticeCache& cache);

}  // namespace orbitlab

#endif
