#include "orbitlab/lie.hpp"

#include <cmath>

namespace orbitlab {

namespace {

const Mat2c kId2c = Mat2c::Identity();

Mat2c adjugate(const Mat2c& m) {
  Mat2c a;
  a << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return a;
}

double cnorm(const Mat2c& m) {
  double v = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) v = std::max(v, std::abs(m(i, j)));
  return v;
}

// exp of a traceless 2x2: exp(X) = cosh(t) I + sinhc(t) X with t^2 = -det X.
// cosh and sinhc are entire in t^2, so no branch issues.
Mat2c exp2(const Mat2c& x) {
  cplx mu = -x.determinant();
  cplx ch, shc;
  if (std::abs(mu) < 1e-8) {
    ch = 1.0 + mu / 2.0 + mu * mu / 24.0 + mu * mu * mu / 720.0;
    shc = 1.0 + mu / 6.0 + mu * mu / 120.0 + mu * mu * mu / 5040.0;
  } else {
    cplx t = std::sqrt(mu);
    ch = std::cosh(t);
    shc = std::sinh(t) / t;
  }
  return ch * kId2c + shc * x;
}

// principal log of M in SL2: M = cosh(t) I + sinhc(t) X.
bool log2m(const Mat2c& m, Mat2c& out) {
  cplx c = 0.5 * m.trace();
  if (std::abs(c + 1.0) < 1e-12) return false;  // branch cut
  cplx mu = (c - 1.0) * (c + 1.0);              // sinh^2 t
  cplx t = std::acosh(c);
  cplx inv_shc;
  if (std::abs(t) < 1e-8) {
    cplx t2 = t * t;
    inv_shc = 1.0 - t2 / 6.0 + 7.0 * t2 * t2 / 360.0;
  } else {
    inv_shc = t / std::sinh(t);
  }
  (void)mu;
  out = inv_shc * (m - c * kId2c);
  return true;
}

Mat2 real_part(const Mat2c& m) { return m.real(); }

}  // namespace

GroupElement identity(AmbientGroup g) { return GroupElement{g, kId2c, kId2c}; }

GroupElement mul(const GroupElement& a, const GroupElement& b) {
  GroupElement out{a.group, a.f1 * b.f1, kId2c};
  if (a.group == AmbientGroup::SL2RxSL2R) out.f2 = a.f2 * b.f2;
  return out;
}

GroupElement inverse(const GroupElement& a) {
  GroupElement out{a.group, adjugate(a.f1), kId2c};
  if (a.group == AmbientGroup::SL2RxSL2R) out.f2 = adjugate(a.f2);
  return out;
}

double det_residual(const GroupElement& g) {
  double v = std::abs(g.f1.determinant() - 1.0);
  if (g.group == AmbientGroup::SL2RxSL2R) v = std::max(v, std::abs(g.f2.determinant() - 1.0));
  return v;
}

double gnorm(const GroupElement& g) {
  double v = cnorm(g.f1);
  if (g.group == AmbientGroup::SL2RxSL2R) v = std::max(v, cnorm(g.f2));
  return v;
}

double gdist_id(const GroupElement& g) {
  double v = cnorm(g.f1 - kId2c);
  if (g.group == AmbientGroup::SL2RxSL2R) v = std::max(v, cnorm(g.f2 - kId2c));
  return v;
}

double gdist(const GroupElement& a, const GroupElement& b) {
  double v = cnorm(a.f1 - b.f1);
  if (a.group == AmbientGroup::SL2RxSL2R) v = std::max(v, cnorm(a.f2 - b.f2));
  return v;
}

GroupElement a_elem(AmbientGroup g, double t) {
  Mat2 m;
  m << std::exp(t / 2), 0, 0, std::exp(-t / 2);
  return h_embed(g, m);
}

GroupElement u_elem(AmbientGroup g, double r) {
  Mat2 m;
  m << 1, r, 0, 1;
  return h_embed(g, m);
}

GroupElement uminus_elem(AmbientGroup g, double s) {
  Mat2 m;
  m << 1, 0, s, 1;
  return h_embed(g, m);
}

GroupElement v_elem(AmbientGroup g, double s) {
  GroupElement out = identity(g);
  if (g == AmbientGroup::SL2C) {
    out.f1(0, 1) = cplx(0, s);
  } else {
    out.f1(0, 1) = s;  // second factor stays identity
  }
  return out;
}

GroupElement n_elem(AmbientGroup g, double r, double s) { return mul(u_elem(g, r), v_elem(g, s)); }

GroupElement h_embed(AmbientGroup g, const Mat2& m) {
  GroupElement out{g, m.cast<cplx>(), kId2c};
  if (g == AmbientGroup::SL2RxSL2R) out.f2 = out.f1;
  return out;
}

LieVector lie_zero(AmbientGroup g) { return LieVector{g, Mat2::Zero(), Mat2::Zero()}; }

LieVector lie_h(AmbientGroup g, const Mat2& m) { return LieVector{g, m, Mat2::Zero()}; }

LieVector lie_r(AmbientGroup g, const Mat2& m) { return LieVector{g, Mat2::Zero(), m}; }

LieVector lie_r3(AmbientGroup g, double c11, double c12, double c21) {
  Mat2 m;
  m << c11, c12, c21, -c11;
  return lie_r(g, m);
}

LieVector operator+(const LieVector& a, const LieVector& b) {
  return LieVector{a.group, a.h + b.h, a.r + b.r};
}
LieVector operator-(const LieVector& a, const LieVector& b) {
  return LieVector{a.group, a.h - b.h, a.r - b.r};
}
LieVector operator*(double s, const LieVector& a) { return LieVector{a.group, s * a.h, s * a.r}; }

double part_norm(const Mat2& m) {
  return std::max({std::abs(m(0, 0)), std::abs(m(0, 1)), std::abs(m(1, 0))});
}

double norm_h(const LieVector& w) { return part_norm(w.h); }
double norm_r(const LieVector& w) { return part_norm(w.r); }
double lie_norm(const LieVector& w) { return std::max(norm_h(w), norm_r(w)); }

Mat2c algebra_factor(const LieVector& w, int factor) {
  if (w.group == AmbientGroup::SL2C) {
    return w.h.cast<cplx>() + cplx(0, 1) * w.r.cast<cplx>();
  }
  // (h + r, h)
  Mat2 m = (factor == 0) ? Mat2(w.h + w.r) : w.h;
  return m.cast<cplx>();
}

LieVector project_algebra(AmbientGroup g, const Mat2c& z1, const Mat2c& z2) {
  LieVector w{g, Mat2::Zero(), Mat2::Zero()};
  if (g == AmbientGroup::SL2C) {
    w.h = z1.real();
    w.r = z1.imag();
  } else {
    w.h = real_part(z2);
    w.r = real_part(z1) - real_part(z2);
  }
  return w;
}

GroupElement exp_g(const LieVector& w) {
  GroupElement out{w.group, exp2(algebra_factor(w, 0)), kId2c};
  if (w.group == AmbientGroup::SL2RxSL2R) out.f2 = exp2(algebra_factor(w, 1));
  return out;
}

LogResult log_g(const GroupElement& g) {
  LogResult res;
  Mat2c z1, z2 = Mat2c::Zero();
  if (!log2m(g.f1, z1)) return res;
  if (g.group == AmbientGroup::SL2RxSL2R && !log2m(g.f2, z2)) return res;
  res.ok = true;
  res.w = project_algebra(g.group, z1, z2);
  return res;
}

LieVector adjoint(const GroupElement& g, const LieVector& w) {
  Mat2c z1 = g.f1 * algebra_factor(w, 0) * adjugate(g.f1);
  Mat2c z2 = Mat2c::Zero();
  if (g.group == AmbientGroup::SL2RxSL2R) z2 = g.f2 * algebra_factor(w, 1) * adjugate(g.f2);
  return project_algebra(g.group, z1, z2);
}

TransversalDecomposition decompose_transversal(const GroupElement& g,
                                               double neighborhood_radius) {
  TransversalDecomposition out;
  out.h = identity(g.group);
  out.w = lie_zero(g.group);
  if (gdist_id(g) > neighborhood_radius) {
    out.status = LieStatus::OutOfNeighborhood;
    return out;
  }
  LogResult lg = log_g(g);
  if (!lg.ok) {
    out.status = LieStatus::OutOfNeighborhood;
    return out;
  }
  Mat2 X = lg.w.h;
  Mat2 W = lg.w.r;
  double prev = 1e300;
  double step = 1.0;
  for (int it = 0; it < 50; ++it) {
    GroupElement cur = mul(exp_g(lie_h(g.group, X)), exp_g(lie_r(g.group, W)));
    GroupElement rem = mul(inverse(cur), g);
    LogResult e = log_g(rem);
    if (!e.ok) {
      out.status = LieStatus::NonConvergence;
      return out;
    }
    double err = lie_norm(e.w);
    out.iterations = it + 1;
    out.residual = err;
    if (err <= 1e-14) {
      out.h = h_embed(g.group, exp2(X.cast<cplx>()).real());
      out.w = lie_r(g.group, W);
      out.status = LieStatus::Ok;
      return out;
    }
    if (err > prev) {
      step *= 0.5;  // damp
      if (step < 1e-3) break;
    } else {
      step = std::min(1.0, step * 2.0);
      prev = err;
    }
    X += step * e.w.h;
    W += step * e.w.r;
  }
  // accept if we got within tolerance-ish of the fixed point
  if (out.residual <= 1e-10) {
    out.h = h_embed(g.group, exp2(X.cast<cplx>()).real());
    out.w = lie_r(g.group, W);
    out.status = LieStatus::Ok;
  } else {
    out.status = LieStatus::NonConvergence;
  }
  return out;
}

BchResult bch_difference(const LieVector& w1, const LieVector& w2, double beta0) {
  BchResult res;
  if (norm_r(w1) > beta0 || norm_r(w2) > beta0) {
    res.status = LieStatus::OutOfNeighborhood;
    res.h = identity(w1.group);
    res.w = lie_zero(w1.group);
    return res;
  }
  GroupElement g = mul(exp_g(lie_r(w1.group, w1.r)), exp_g(-1.0 * lie_r(w2.group, w2.r)));
  TransversalDecomposition dec = decompose_transversal(g, 1.0);
  res.status = dec.status;
  res.h = dec.h;
  res.w = dec.w;
  res.h_dist = gdist_id(dec.h);
  return res;
}

HReal h_real(const GroupElement& g) {
  HReal out;
  out.m = g.f1.real();
  double res = g.f1.imag().cwiseAbs().maxCoeff();
  if (g.group == AmbientGroup::SL2RxSL2R) {
    res = std::max({res, g.f2.imag().cwiseAbs().maxCoeff(), cnorm(g.f1 - g.f2)});
    out.m = g.f2.real();
  }
  out.residual = res;
  return out;
}

BruhatCoords bruhat(const Mat2& m) {
  BruhatCoords out;
  double a = m(0, 0);
  if (a <= 1e-14) return out;  // boxes live in the a > 0 cell
  out.ok = true;
  out.s = m(1, 0) / a;
  out.d = 2.0 * std::log(a);
  out.r = m(0, 1) / a;
  return out;
}

BoxMembership box_membership(const GroupElement& g, const BoxParams& box, BoxKind kind) {
  BoxMembership out;
  const double tol = 1e-12;

  // transversal kinds peel off the r-part first
  if (kind == BoxKind::BG || kind == BoxKind::QG) {
    TransversalDecomposition dec = decompose_transversal(g, 1.0);
    if (dec.status != LieStatus::Ok) return out;
    double wrad = (kind == BoxKind::BG) ? box.beta : 2.0 * box.beta;
    if (norm_r(dec.w) > wrad + tol) return out;
    return box_membership(dec.h, box, kind == BoxKind::BG ? BoxKind::BH : BoxKind::QH);
  }

  HReal hr = h_real(g);
  if (hr.residual > 1e-9) return out;  // not in H
  BruhatCoords bc = bruhat(hr.m);
  if (!bc.ok) {
    // a <= 0: either the measure-zero boundary cell (flagged) or the far cell
    out.chart_singular = std::abs(hr.m(0, 0)) <= 1e-7;
    return out;
  }
  switch (kind) {
    case BoxKind::BH:
      out.member = std::abs(bc.s) <= box.beta + tol && std::abs(bc.d) <= box.beta + tol &&
                   std::abs(bc.r) <= box.beta + tol;
      break;
    case BoxKind::E: {
      // B^H_beta a_t {u_r : r in [0, eta]}; in Bruhat coordinates
      // (s, d, x) = (s, d' + t, e^{-t}(b) + r') with |s|,|d'|,|b| <= beta
      bool sd = std::abs(bc.s) <= box.beta + tol && std::abs(bc.d - box.t) <= box.beta + tol;
      double bl = box.beta * std::exp(-box.t);
      out.member = sd && bc.r >= -bl - tol && bc.r <= box.eta + bl + tol;
      break;
    }
    case BoxKind::QH:
      out.member = std::abs(bc.s) <= box.beta * std::exp(-box.m) + tol &&
                   std::abs(bc.d) <= box.beta + tol && std::abs(bc.r) <= box.eta + tol;
      break;
    default:
      break;
  }
  return out;
}

}  // namespace orbitlab
