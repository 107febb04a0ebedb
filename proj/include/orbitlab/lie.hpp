#ifndef ORBITLAB_LIE_HPP
#define ORBITLAB_LIE_HPP

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>

namespace orbitlab {

using Mat2 = Eigen::Matrix2d;
using Mat2c = Eigen::Matrix2cd;
using cplx = std::complex<double>;

enum class AmbientGroup { SL2C, SL2RxSL2R };

// Element of G = SL2(C) (one complex factor) or SL2(R) x SL2(R) (two real
// factors stored with zero imaginary part).  All entries double precision.
struct GroupElement {
  AmbientGroup group;
  Mat2c f1, f2;  // f2 is ignored for SL2C

  int nfactors() const { return group == AmbientGroup::SL2C ? 1 : 2; }
  const Mat2c& factor(int i) const { return i == 0 ? f1 : f2; }
  Mat2c& factor(int i) { return i == 0 ? f1 : f2; }
};

GroupElement identity(AmbientGroup g);
GroupElement mul(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& a);  // adjugate; exact for det = 1
inline GroupElement operator*(const GroupElement& a, const GroupElement& b) { return mul(a, b); }

// max |det(factor) - 1|
double det_residual(const GroupElement& g);
// entrywise max norm over all factors
double gnorm(const GroupElement& g);
// || g - I ||
double gdist_id(const GroupElement& g);
double gdist(const GroupElement& a, const GroupElement& b);

// one-parameter subgroups of H (and V which is transversal to H)
GroupElement a_elem(AmbientGroup g, double t);
GroupElement u_elem(AmbientGroup g, double r);
GroupElement uminus_elem(AmbientGroup g, double s);
GroupElement v_elem(AmbientGroup g, double s);
GroupElement n_elem(AmbientGroup g, double r, double s);  // n(r,s) = u_r v_s
// embed a real SL2 matrix as an element of H
GroupElement h_embed(AmbientGroup g, const Mat2& m);

// Element of the Lie algebra g = h + r in the coordinate max-norm.
// Both parts are stored as real traceless 2x2 coordinate matrices; the r
// part means i*(matrix) inside sl2(C), resp. (matrix, 0) in sl2(R)+sl2(R).
struct LieVector {
  AmbientGroup group;
  Mat2 h = Mat2::Zero();
  Mat2 r = Mat2::Zero();
};

LieVector lie_zero(AmbientGroup g);
LieVector lie_h(AmbientGroup g, const Mat2& m);
LieVector lie_r(AmbientGroup g, const Mat2& m);
LieVector lie_r3(AmbientGroup g, double c11, double c12, double c21);
LieVector operator+(const LieVector& a, const LieVector& b);
LieVector operator-(const LieVector& a, const LieVector& b);
LieVector operator*(double s, const LieVector& a);

// coordinate max-norm: max(|m11|, |m12|, |m21|) per part, max over parts
double part_norm(const Mat2& m);
double norm_h(const LieVector& w);
double norm_r(const LieVector& w);
double lie_norm(const LieVector& w);

// per-factor algebra embedding and its inverse projection
Mat2c algebra_factor(const LieVector& w, int factor);
LieVector project_algebra(AmbientGroup g, const Mat2c& z1, const Mat2c& z2);

GroupElement exp_g(const LieVector& w);

struct LogResult {
  bool ok = false;
  LieVector w;
};
// principal logarithm; fails on the branch cut (trace near -2 in a factor)
LogResult log_g(const GroupElement& g);

// Ad(g)w, with the result re-projected onto the h/r coordinate split.
// For g in H the split is preserved exactly.
LieVector adjoint(const GroupElement& g, const LieVector& w);

enum class LieStatus { Ok, NonConvergence, OutOfNeighborhood, ChartSingular };

struct TransversalDecomposition {
  LieStatus status = LieStatus::Ok;
  GroupElement h;  // element of H
  LieVector w;     // element of r
  int iterations = 0;
  double residual = 0.0;
};

// Solve g = h exp(w) with h in H, w in r; damped Newton on the six
// coordinates, initialized from the linear projection of log(g).
// Unique in the neighborhood ||g - I|| <= radius.
TransversalDecomposition decompose_transversal(const GroupElement& g,
                                               double neighborhood_radius = 0.5);

struct BchResult {
  LieStatus status = LieStatus::Ok;
  GroupElement h;
  LieVector w;
  double h_dist = 0.0;  // ||h - I||
};

// exp(w1) exp(-w2) = h exp(w); valid in the perturbative regime
// ||w1||,||w2|| <= beta0.
BchResult bch_difference(const LieVector& w1, const LieVector& w2,
                         double beta0 = 1e-2);

// extract the real SL2 matrix of an element of H; residual measures how far
// the element is from H
struct HReal {
  Mat2 m;
  double residual;
};
HReal h_real(const GroupElement& g);

// u^-_s a_d u_r coordinates of an SL2(R) element (Bruhat chart, valid when
// the (1,1) entry is positive)
struct BruhatCoords {
  bool ok = false;
  double s = 0, d = 0, r = 0;
};
BruhatCoords bruhat(const Mat2& m);

struct BoxParams {
  double beta = 0;
  double eta = 0;
  double t = 0;
  double m = 0;
};

enum class BoxKind { BH, BG, E, QH, QG };

struct BoxMembership {
  bool member = false;
  bool chart_singular = false;  // Bruhat (1,1) entry vanished
};

// membership of g in B^H_beta, B^G_beta, E_{eta,t,beta}, Q^H_{eta,beta,m}
// or Q^G = Q^H exp(B_r(0, 2 beta)); exact triangular factorization
BoxMembership box_membership(const GroupElement& g, const BoxParams& box, BoxKind kind);

}  // namespace orbitlab

#endif
