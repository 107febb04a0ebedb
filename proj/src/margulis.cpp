#include "orbitlab/margulis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "orbitlab/calibration.hpp"

namespace orbitlab {

bool sheet_set_valid(const SheetSet& s) {
  if (s.F.empty() || lie_norm(s.F[0]) != 0.0) return false;
  if (s.beta <= 0 || s.eta <= 0 || s.beta > s.eta * s.eta + 1e-15) return false;
  for (const LieVector& w : s.F)
    if (norm_r(w) > s.beta + 1e-15 || norm_h(w) > 0) return false;
  return true;
}

SheetPoint sample_mu(const SheetSet& set, Rng& rng) {
  SheetPoint z;
  z.sheet = static_cast<int>(rng.below(set.F.size()));
  z.s = rng.sym(set.beta);
  z.d = rng.sym(set.beta);
  z.b = rng.sym(set.beta);
  z.r = rng.sym(0.1 * set.eta);
  return z;
}

GroupElement sheet_chart(const SheetSet& set, const SheetPoint& z) {
  AmbientGroup g = set.base.rep.group;
  return mul(mul(uminus_elem(g, z.s), a_elem(g, z.d)), u_elem(g, z.b + z.r));
}

QuotientPoint sheet_point(const SheetSet& set, const GroupElement& h, const SheetPoint& z,
                          bool reduce) {
  GroupElement rep = mul(mul(mul(h, sheet_chart(set, z)), exp_g(set.F[z.sheet])), set.base.rep);
  if (!reduce || set.base.lattice == LatticeId::CompactStub)
    return QuotientPoint{rep, set.base.lattice, true, 0.0};
  return reduce_point(rep, set.base.lattice);
}

namespace {

// pairwise BCH offsets of a sheet set against one fixed sheet
struct SheetOffsets {
  std::vector<LieVector> v;      // exp(w_j) exp(-w_i) = h_ji exp(v_ji)
  std::vector<GroupElement> h;
  std::vector<bool> ok;
};

SheetOffsets offsets_against(const SheetSet& set, int i) {
  SheetOffsets out;
  const int n = static_cast<int>(set.F.size());
  out.v.resize(n, lie_zero(set.base.rep.group));
  out.h.resize(n, identity(set.base.rep.group));
  out.ok.assign(n, false);
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    BchResult b = bch_difference(set.F[j], set.F[i], std::max(set.beta, 1e-2));
    if (b.status != LieStatus::Ok) continue;
    out.v[j] = b.w;
    out.h[j] = b.h;
    out.ok[j] = true;
  }
  return out;
}

bool in_E_box(const GroupElement& hmaybe, double beta, double eta) {
  HReal hr = h_real(hmaybe);
  if (hr.residual > 1e-9) return false;
  BruhatCoords bc = bruhat(hr.m);
  if (!bc.ok) return false;
  const double tol = 1e-12;
  return std::abs(bc.s) <= beta + tol && std::abs(bc.d) <= beta + tol &&
         std::abs(bc.r) <= beta + 0.1 * eta + tol;
}

double inj_at(const SheetSet& set, const GroupElement& h, const SheetPoint& z,
              const LatticeCache& cache) {
  if (set.base.lattice == LatticeId::CompactStub) return 0.01;
  QuotientPoint p = sheet_point(set, h, z);
  return injectivity_radius(p, cache).value;
}

std::vector<LieVector> displacements_impl(const SheetSet& set, const GroupElement& h,
                                          const SheetPoint& z, const SheetOffsets& off,
                                          double inj_hz) {
  std::vector<LieVector> out;
  GroupElement hz_chart = mul(h, sheet_chart(set, z));
  GroupElement chart = sheet_chart(set, z);
  const int n = static_cast<int>(set.F.size());
  for (int j = 0; j < n; ++j) {
    if (j == z.sheet || !off.ok[j]) continue;
    if (!in_E_box(mul(chart, inverse(off.h[j])), set.beta, set.eta)) continue;
    LieVector w = adjoint(hz_chart, off.v[j]);
    double nw = lie_norm(w);
    if (nw > 0 && nw < inj_hz) out.push_back(w);
  }
  return out;
}

}  // namespace

std::vector<LieVector> transversal_displacements(const SheetSet& set, const GroupElement& h,
                                                 const SheetPoint& z, const LatticeCache& cache) {
  SheetOffsets off = offsets_against(set, z.sheet);
  return displacements_impl(set, h, z, off, inj_at(set, h, z, cache));
}

double margulis_f(const SheetSet& set, double alpha, const GroupElement& h, const SheetPoint& z,
                  const LatticeCache& cache) {
  double inj = inj_at(set, h, z, cache);
  std::vector<LieVector> ws = displacements_impl(set, h, z, offsets_against(set, z.sheet), inj);
  if (ws.empty()) return std::pow(inj, -alpha);
  double sum = 0;
  for (const LieVector& w : ws) sum += std::pow(lie_norm(w), -alpha);
  return sum;
}

double psi(const SheetSet& set, double alpha, const GroupElement& h, const SheetPoint& z,
           const LatticeCache& cache) {
  double inj = inj_at(set, h, z, cache);
  std::vector<LieVector> ws = displacements_impl(set, h, z, offsets_against(set, z.sheet), inj);
  double count = std::max<std::size_t>(ws.size(), 1);
  return count * std::pow(inj, -alpha);
}

// ----- averaged contraction -------------------------------------------------

namespace {

// || Ad(a_m u_r) w || as max of entry magnitudes; per coordinate block
// (Ad(u_r) p)_11 = p11 + r p21, _12 = -p21 r^2 - 2 p11 r + p12, _21 = p21;
// a_m scales the corners by e^{+-m}.  The 12-entry is evaluated in factored
// (or vertex) form: the monomial form cancels catastrophically near the
// roots, which is exactly where the integrand is singular.
struct BlockPoly {
  double p11, p12, p21;
  double em, eminv;
  // factored data for q12 = -p21 (r - r1)(r - r2), or vertex form
  bool factored = false;
  double r1 = 0, r2 = 0;     // roots when disc >= 0
  double vtx = 0, dpos = 0;  // q12 = -p21 ((r - vtx)^2 - dpos) when disc < 0

  void prepare() {
    if (p21 != 0) {
      vtx = -p11 / p21;
      double disc = p11 * p11 + p21 * p12;  // disc/p21^2 in vertex form
      dpos = disc / (p21 * p21);
      if (disc >= 0) {
        factored = true;
        double sq = std::sqrt(disc);
        // stable quadratic roots of -p21 r^2 - 2 p11 r + p12
        double qq = p11 >= 0 ? -(p11 + sq) : -(p11 - sq);
        if (qq != 0) {
          r1 = qq / p21;
          r2 = -p12 / qq;
        } else {
          r1 = r2 = vtx;
        }
      }
    }
  }

  double q12(double r) const {
    if (p21 == 0) return -2 * p11 * r + p12;
    if (factored) return -p21 * (r - r1) * (r - r2);
    return -p21 * ((r - vtx) * (r - vtx) - dpos);
  }

  double eval(double r) const {
    double q11 = p21 != 0 ? p21 * (r - vtx) : p11;
    return std::max({em * std::abs(q12(r)), std::abs(q11), eminv * std::abs(p21)});
  }

  void roots(std::vector<double>& out) const {
    if (p21 != 0) {
      out.push_back(vtx);
      if (factored) {
        out.push_back(r1);
        out.push_back(r2);
      }
    } else if (p11 != 0) {
      out.push_back(p12 / (2 * p11));
    }
  }
};

struct AdNorm {
  BlockPoly h, r;
  bool has_h = false, has_r = false;

  double operator()(double x) const {
    double v = 0;
    if (has_h) v = std::max(v, h.eval(x));
    if (has_r) v = std::max(v, r.eval(x));
    return v;
  }
};

AdNorm ad_norm_fn(const LieVector& w, double m) {
  AdNorm f;
  double em = std::exp(m), eminv = std::exp(-m);
  f.h = BlockPoly{w.h(0, 0), w.h(0, 1), w.h(1, 0), em, eminv};
  f.r = BlockPoly{w.r(0, 0), w.r(0, 1), w.r(1, 0), em, eminv};
  f.h.prepare();
  f.r.prepare();
  f.has_h = norm_h(w) > 0;
  f.has_r = norm_r(w) > 0;
  return f;
}

// quadratic a r^2 + b r + c
struct Quad {
  double a = 0, b = 0, c = 0;
  void roots(std::vector<double>& out) const {
    if (a != 0) {
      double disc = b * b - 4 * a * c;
      if (disc >= 0) {
        double sq = std::sqrt(disc);
        out.push_back((-b + sq) / (2 * a));
        out.push_back((-b - sq) / (2 * a));
      }
    } else if (b != 0) {
      out.push_back(-c / b);
    }
  }
};

// branch polynomials of a block with their scale factors kept separate so
// root finding stays on O(1) coefficients: {q12, e^m}, {q11, 1}, {p21, e^-m}
struct Branch {
  Quad poly;
  double scale;
};

void block_branches(const BlockPoly& p, std::vector<Branch>& out) {
  out.push_back(Branch{Quad{-p.p21, -2.0 * p.p11, p.p12}, p.em});
  out.push_back(Branch{Quad{0, p.p21, p.p11}, 1.0});
  out.push_back(Branch{Quad{0, 0, p.p21}, p.eminv});
}

template <class F>
double simpson(const F& f, double a, double b) {
  return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
}

template <class F>
void adaptive(const F& f, double a, double b, double whole, double tol, int depth, double& acc,
              double& err, long& budget) {
  budget -= 2;
  if (budget < 0) {
    acc += whole;
    err += std::abs(whole);
    return;
  }
  double m = 0.5 * (a + b);
  double left = simpson(f, a, m), right = simpson(f, m, b);
  double delta = left + right - whole;
  if (std::abs(delta) <= 15 * tol || depth <= 0) {
    acc += left + right + delta / 15.0;
    err += std::abs(delta) / 15.0;
    return;
  }
  adaptive(f, a, m, left, tol / 2, depth - 1, acc, err, budget);
  adaptive(f, m, b, right, tol / 2, depth - 1, acc, err, budget);
}

}  // namespace

QuadratureResult ad_contraction_integral(const LieVector& w, double alpha, double m,
                                         double rel_tol) {
  QuadratureResult out;
  if (lie_norm(w) == 0) return out;
  AdNorm norm_fn = ad_norm_fn(w, m);
  auto f = [&](double r) { return std::pow(norm_fn(r), -alpha); };

  // Break [0,1] wherever the pointwise max switches branch or a branch
  // vanishes: roots of every weighted branch polynomial and of all pairwise
  // differences/sums, plus a geometric ladder around the branch roots so the
  // e^{-m}-scale structure near the norm minimizer stays resolved.
  std::vector<Branch> branches;
  if (norm_fn.has_h) block_branches(norm_fn.h, branches);
  if (norm_fn.has_r) block_branches(norm_fn.r, branches);
  std::vector<double> marks;
  for (const Branch& br : branches) br.poly.roots(marks);
  for (std::size_t i = 0; i < branches.size(); ++i)
    for (std::size_t j = i + 1; j < branches.size(); ++j) {
      // fold the smaller scale onto one side so coefficients stay O(1)
      const Branch& big = branches[i].scale >= branches[j].scale ? branches[i] : branches[j];
      const Branch& sml = branches[i].scale >= branches[j].scale ? branches[j] : branches[i];
      double ratio = sml.scale / big.scale;
      Quad{big.poly.a - ratio * sml.poly.a, big.poly.b - ratio * sml.poly.b,
           big.poly.c - ratio * sml.poly.c}
          .roots(marks);
      Quad{big.poly.a + ratio * sml.poly.a, big.poly.b + ratio * sml.poly.b,
           big.poly.c + ratio * sml.poly.c}
          .roots(marks);
    }
  std::vector<double> ladder_roots;
  if (norm_fn.has_h) norm_fn.h.roots(ladder_roots);
  if (norm_fn.has_r) norm_fn.r.roots(ladder_roots);
  std::vector<double> cuts{0.0, 1.0};
  for (double r0 : marks)
    if (r0 > 0 && r0 < 1) cuts.push_back(r0);
  for (double r0 : ladder_roots) {
    if (r0 < -0.5 || r0 > 1.5) continue;
    for (double s = 0.25; s > 0.5 * std::exp(-(m + 8.0)); s *= 0.5) {
      cuts.push_back(r0 - s);
      cuts.push_back(r0 + s);
    }
  }
  for (double& c : cuts) c = std::clamp(c, 0.0, 1.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-300; }),
             cuts.end());

  double coarse = 0;
  std::size_t nseg = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] - cuts[i] < 1e-300) continue;
    coarse += simpson(f, cuts[i], cuts[i + 1]);
    ++nseg;
  }
  if (nseg == 0) return out;
  // spread the total budget uniformly over the graded segments
  double tol = rel_tol * std::max(coarse, 1e-300) / static_cast<double>(nseg);
  double acc = 0;
  double err = 0;
  long budget = 400000;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double a = cuts[i], b = cuts[i + 1];
    if (b - a < 1e-300) continue;
    adaptive(f, a, b, simpson(f, a, b), tol, 26, acc, err, budget);
  }
  out.value = acc;
  out.error = err;
  out.ok = err <= 4.0 * rel_tol * std::max(std::abs(acc), 1e-300);
  return out;
}

std::vector<LieVector> m_alpha_samples(int samples, std::uint64_t seed) {
  AmbientGroup g = AmbientGroup::SL2C;  // the coordinate blocks are group-independent
  std::vector<LieVector> ws;
  // hard directions first: pure corner and diagonal vectors in each part
  for (int part = 0; part < 2; ++part)
    for (int k = 0; k < 3; ++k) {
      Mat2 m = Mat2::Zero();
      if (k == 0) m(0, 1) = 1;
      else if (k == 1) m(1, 0) = 1;
      else { m(0, 0) = 1; m(1, 1) = -1; }
      ws.push_back(part == 0 ? lie_h(g, m) : lie_r(g, m));
    }
  // the tangency-degenerate family (c, c^2, -1): the 12-entry polynomial has
  // a double root at r = c where the 11-entry also vanishes -- this is the
  // extremal family for the averaged contraction
  for (int k = 0; k <= 20; ++k) {
    double c = k / 20.0;
    ws.push_back(lie_r3(g, c, c * c, -1.0));
  }
  Rng rng = Rng::stream(seed, 0x3A);
  while (static_cast<int>(ws.size()) < samples + 27) {
    Mat2 mh, mr;
    mh << rng.sym(1), rng.sym(1), rng.sym(1), 0;
    mh(1, 1) = -mh(0, 0);
    mr << rng.sym(1), rng.sym(1), rng.sym(1), 0;
    mr(1, 1) = -mr(0, 0);
    LieVector w{g, mh, mr};
    double n = lie_norm(w);
    if (n < 0.1) continue;
    ws.push_back((1.0 / n) * w);
  }
  return ws;
}

MAlphaResult solve_m_alpha(double alpha, int samples, std::uint64_t seed, int cap) {
  MAlphaResult res;
  if (!(alpha > 1.0 / 3.0 && alpha < 1.0)) {
    res.error = "alpha outside (1/3, 1)";
    return res;
  }
  std::vector<LieVector> ws = m_alpha_samples(samples, seed);
  const double threshold = std::exp(-1.0) * (1.0 + 1e-6);
  for (int m = 1; m <= cap; ++m) {
    bool all = true;
    for (const LieVector& w : ws) {
      QuadratureResult q = ad_contraction_integral(w, alpha, m);
      if (!q.ok || q.value > threshold * std::pow(lie_norm(w), -alpha)) {
        all = false;
        break;
      }
    }
    if (all) {
      res.ok = true;
      res.m = m;
      return res;
    }
  }
  res.error = "NotFound: no m <= cap contracts the sampled directions";
  return res;
}

ContractionCheck contraction_check(const LieVector& w, double alpha, double m, double rel_tol) {
  ContractionCheck out;
  QuadratureResult q = ad_contraction_integral(w, alpha, m, rel_tol);
  out.ok = q.ok;
  out.lhs = q.value;
  double alpha_hat = (1.0 - alpha) / 4.0;
  out.bound = calib::kC5 * std::exp(-alpha_hat * m) / (2.0 - std::pow(2.0, alpha)) *
              std::pow(lie_norm(w), -alpha);
  out.pass = out.ok && out.lhs <= out.bound;
  return out;
}

// ----- random walk -----------------------------------------------------------

WalkSample walk_sample(AmbientGroup g, const RandomWalk& walk, Rng& rng) {
  WalkSample s;
  s.rs.resize(walk.ell);
  for (int j = 0; j < walk.ell; ++j) s.rs[j] = rng.uniform();
  // h = h_ell ... h_1 = a_{m ell} u_rhat, rhat = sum e^{-j m} r_{j+1}
  s.rhat = 0;
  for (int j = 0; j < walk.ell; ++j) s.rhat += std::exp(-j * static_cast<double>(walk.m)) * s.rs[j];
  s.h = identity(g);
  for (int j = 0; j < walk.ell; ++j)
    s.h = mul(mul(a_elem(g, walk.m), u_elem(g, s.rs[j])), s.h);
  return s;
}

MargulisInequalityReport verify_margulis_inequality(const SheetSet& set, const RandomWalk& walk,
                                                    int mc_samples, std::uint64_t seed,
                                                    const LatticeCache& cache, int z_points) {
  MargulisInequalityReport rep;
  rep.ell = walk.ell;
  AmbientGroup g = set.base.rep.group;
  const int n = static_cast<int>(set.F.size());

  std::vector<SheetOffsets> off(n);
  for (int i = 0; i < n; ++i) off[i] = offsets_against(set, i);

  Rng zrng = Rng::stream(seed, 0x11);
  std::vector<SheetPoint> zs;
  for (int i = 0; i < z_points; ++i) zs.push_back(sample_mu(set, zrng));

  const int per_z = std::max(1, mc_samples / std::max(1, z_points));
  const int batches = 8;
  double worst_ratio = 0;
  double fitted_c13 = 0, worst_lhs = 0, worst_rhs = 0, worst_err = 0;
  bool all_pass = true;

  for (int zi = 0; zi < static_cast<int>(zs.size()); ++zi) {
    const SheetPoint& z = zs[zi];
    GroupElement id = identity(g);
    double fe;
    {
      double inj = inj_at(set, id, z, cache);
      std::vector<LieVector> ws = displacements_impl(set, id, z, off[z.sheet], inj);
      fe = ws.empty() ? std::pow(inj, -walk.alpha) : 0;
      for (const LieVector& w : ws) fe += std::pow(lie_norm(w), -walk.alpha);
    }
    if (walk.ell == 0) {
      // degenerate depth: both sides are f(e, z) exactly
      fitted_c13 = std::max(fitted_c13, 0.0);
      if (fe > worst_lhs) {
        worst_lhs = fe;
        worst_rhs = fe;
      }
      continue;
    }
    // per-batch estimates of lhs and the psi averages over prefixes
    std::vector<double> lhs_batch(batches, 0);
    std::vector<std::vector<double>> psi_batch(walk.ell, std::vector<double>(batches, 0));
    int per_batch = std::max(1, per_z / batches);
    for (int b = 0; b < batches; ++b) {
      Rng rng = Rng::stream(seed, 0x1000 + 64 * zi + b);
      for (int k = 0; k < per_batch; ++k) {
        GroupElement h = identity(g);
        for (int j = 1; j <= walk.ell; ++j) {
          h = mul(mul(a_elem(g, walk.m), u_elem(g, rng.uniform())), h);
          double inj = inj_at(set, h, z, cache);
          std::vector<LieVector> ws = displacements_impl(set, h, z, off[z.sheet], inj);
          if (j == walk.ell) {
            double f = ws.empty() ? std::pow(inj, -walk.alpha) : 0;
            for (const LieVector& w : ws) f += std::pow(lie_norm(w), -walk.alpha);
            lhs_batch[b] += f;
          }
          psi_batch[j - 1][b] +=
              std::max<std::size_t>(ws.size(), 1) * std::pow(inj, -walk.alpha);
        }
      }
      lhs_batch[b] /= per_batch;
      for (int j = 0; j < walk.ell; ++j) psi_batch[j][b] /= per_batch;
    }
    double lhs = std::accumulate(lhs_batch.begin(), lhs_batch.end(), 0.0) / batches;
    double var = 0;
    for (double v : lhs_batch) var += (v - lhs) * (v - lhs);
    double err = std::sqrt(var / (batches * std::max(1, batches - 1)));
    double psi_sum = 0;
    for (int j = 1; j <= walk.ell; ++j) {
      double pj = std::accumulate(psi_batch[j - 1].begin(), psi_batch[j - 1].end(), 0.0) / batches;
      psi_sum += std::exp(static_cast<double>(j - walk.ell)) * pj;
    }
    double rhs = std::exp(-static_cast<double>(walk.ell)) * fe + calib::kC13 * psi_sum;
    double needed = psi_sum > 0
                        ? (lhs - std::exp(-static_cast<double>(walk.ell)) * fe) / psi_sum
                        : 0.0;
    fitted_c13 = std::max(fitted_c13, needed);
    if (lhs > rhs * (1 + 0.05) + 2 * err) all_pass = false;
    if (lhs / std::max(rhs, 1e-300) > worst_ratio) {
      worst_ratio = lhs / std::max(rhs, 1e-300);
      worst_lhs = lhs;
      worst_rhs = rhs;
      worst_err = lhs > 0 ? err / lhs : 0;
    }
  }
  rep.pass = all_pass;
  rep.worst_lhs = worst_lhs;
  rep.worst_rhs = worst_rhs;
  rep.fitted_c13 = fitted_c13;
  rep.mc_error_rel = worst_err;
  rep.z_points = static_cast<int>(zs.size());
  return rep;
}

// ----- bootstrap --------------------------------------------------------------

namespace {

double max_center_f(const SheetSet& set, double alpha, const LatticeCache& cache) {
  double worst = 0;
  for (std::size_t i = 0; i < set.F.size(); ++i) {
    SheetPoint z;
    z.sheet = static_cast<int>(i);
    worst = std::max(worst, margulis_f(set, alpha, identity(set.base.rep.group), z, cache));
  }
  return worst;
}

// transversal offset of point p against anchor y over the cache:
// p = hpart exp(w) y with hpart small
struct ChartOffset {
  bool ok = false;
  GroupElement hpart;
  LieVector w;
};

ChartOffset chart_offset(const QuotientPoint& p, const QuotientPoint& y,
                         const LatticeCache& cache, double radius) {
  ChartOffset out;
  GroupElement yinv = inverse(y.rep);
  double best = 1e300;
  GroupElement bestM = identity(p.rep.group);
  if (p.lattice == LatticeId::CompactStub) {
    bestM = mul(p.rep, yinv);
    best = gdist_id(bestM);
  } else {
    for (std::size_t i = 0; i < cache.size(); ++i) {
      GroupElement M = mul(mul(p.rep, cache.embedded[i]), yinv);
      double d = gdist_id(M);
      if (d < best) {
        best = d;
        bestM = M;
      }
    }
  }
  if (best > radius) return out;
  TransversalDecomposition dec = decompose_transversal(bestM, 1.0);
  if (dec.status != LieStatus::Ok) return out;
  out.ok = true;
  out.hpart = dec.h;
  out.w = dec.w;
  return out;
}

}  // namespace

BootstrapStepResult bootstrap_step(const BootstrapState& state, const WalkSample& h0,
                                   const BootstrapConfig& cfg, const LatticeCache& cache) {
  BootstrapStepResult res;
  const SheetSet& E = state.sheets;
  const int n = static_cast<int>(E.F.size());
  const double ellm0 = static_cast<double>(state.ell) * state.m0;

  if (n == 1) {
    // single sheet: the step is trivial by definition
    res.ok = true;
    res.state = state;
    res.state.iter++;
    res.record = {res.state.iter, 1, E.beta, max_center_f(E, cfg.alpha, cache), "trivial",
                  cfg.seed};
    return res;
  }

  // push the sheet centers through h0 and filter by the Chebyshev bound
  double fbound = std::exp(state.Mn - 0.75 * std::floor(state.ell));
  std::vector<int> good;
  std::vector<QuotientPoint> images(n, QuotientPoint{});
  for (int i = 0; i < n; ++i) {
    SheetPoint z;
    z.sheet = i;
    double f = margulis_f(E, cfg.alpha, h0.h, z, cache);
    if (f <= std::max(fbound, 2.0 * std::pow(n, 1.0 + cfg.epsilon))) good.push_back(i);
    images[i] = sheet_point(E, h0.h, z);
  }
  if (good.empty()) {
    res.error = "EmptyCovering";
    return res;
  }

  // greedy covering of the images by one Q^G-scale box; pick the anchor
  // capturing the most sheets
  double qh_scale = cfg.covering_scale * E.beta;
  double trans_radius = 2.0 * cfg.covering_scale * E.beta;
  double search_radius = 10.0 * (qh_scale + trans_radius) + 10.0 * std::exp(ellm0) * E.beta;
  int best_anchor = -1;
  std::vector<int> best_members;
  std::vector<LieVector> best_ws;
  for (int cand : good) {
    std::vector<int> members;
    std::vector<LieVector> ws;
    for (int i : good) {
      ChartOffset off = chart_offset(images[i], images[cand], cache, search_radius);
      if (!off.ok) continue;
      if (norm_r(off.w) > trans_radius) continue;
      HReal hr = h_real(off.hpart);
      BruhatCoords bc = hr.residual < 1e-9 ? bruhat(hr.m) : BruhatCoords{};
      if (!bc.ok) continue;
      if (std::abs(bc.s) > qh_scale * std::exp(-ellm0) + 1e-12 || std::abs(bc.d) > qh_scale ||
          std::abs(bc.r) > qh_scale)
        continue;
      members.push_back(i);
      ws.push_back(off.w);
    }
    if (static_cast<int>(members.size()) > static_cast<int>(best_members.size())) {
      best_anchor = cand;
      best_members = members;
      best_ws = ws;
    }
  }
  if (best_anchor < 0 || best_members.empty()) {
    res.error = "EmptyCovering";
    return res;
  }
  // mass threshold of the covering lemma (trivially generous at desk scale)
  double mass = static_cast<double>(best_members.size()) / n;
  if (mass < std::pow(E.beta, cfg.mass_threshold_exponent) * std::exp(-ellm0)) {
    res.error = "EmptyCovering";
    return res;
  }

  double p = cfg.use_paper_rule ? 10.0 : cfg.selection_exponent;
  std::size_t target = static_cast<std::size_t>(
      std::ceil(std::pow(E.beta, p) * static_cast<double>(n)));
  target = std::max<std::size_t>(target, 1);

  // order by transversal size, keep 0 first
  std::vector<std::size_t> order(best_ws.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lie_norm(best_ws[a]) < lie_norm(best_ws[b]);
  });
  std::vector<LieVector> F1;
  for (std::size_t k = 0; k < order.size() && F1.size() < target; ++k) {
    LieVector w = best_ws[order[k]];
    bool dup = false;
    for (const LieVector& u : F1)
      if (lie_norm(w - u) < 1e-12) dup = true;
    if (!dup) F1.push_back(w);
  }
  bool underfull = F1.size() < target;

  SheetSet next;
  next.base = images[best_anchor];
  next.F = F1;
  next.beta = E.beta;
  next.eta = E.eta;

  double maxf = max_center_f(next, cfg.alpha, cache);
  double kappa7 = cfg.kappa7 > 0 ? cfg.kappa7 : 1.0 / (8.0 * state.m0);
  std::string branch;
  double stop_bound = 2.0 * std::pow(static_cast<double>(F1.size()), 1.0 + cfg.epsilon);
  double improve_bound = std::exp(state.Mn - 2.0 * kappa7 * cfg.epsilon / 3.0 * state.n);
  if (maxf <= stop_bound) branch = "stop";
  else if (maxf <= improve_bound) branch = "improve";
  else branch = "stall";
  if (underfull) branch += "-underfull";

  res.ok = true;
  res.state = state;
  res.state.iter++;
  res.state.sheets = next;
  if (branch == "improve") res.state.Mn = std::log(std::max(maxf, 2.0));
  res.record = {res.state.iter, static_cast<int>(F1.size()), next.beta, maxf, branch, cfg.seed};
  return res;
}

BootstrapResult bootstrap_run(const QuotientPoint& x0, double t, const BootstrapConfig& cfg,
                              const LatticeCache& cache) {
  BootstrapResult res;
  if (!(cfg.epsilon > 0)) {
    res.error = "epsilon must be positive";
    return res;
  }
  AmbientGroup g = x0.rep.group;

  // closing-lemma branch: a near-stabilizer pair ends the run immediately
  if (x0.lattice != LatticeId::CompactStub) {
    StabilizerReport stab = near_stabilizer_search(x0, 1e-8, cache);
    if (stab.periodic_flag) {
      res.ok = true;
      res.periodic_detected = true;
      return res;
    }
  }

  int m0 = cfg.m0_override;
  if (m0 <= 0) {
    MAlphaResult ma = solve_m_alpha(cfg.alpha, 32, cfg.seed);
    if (!ma.ok) {
      res.error = ma.error;
      return res;
    }
    m0 = ma.m;
  }
  double kappa7 = cfg.kappa7 > 0 ? cfg.kappa7 : 1.0 / (8.0 * m0);
  double beta = std::min(std::exp(-0.01 * kappa7 * cfg.epsilon * (t + 1.0) / 2.0),
                         cfg.eta * cfg.eta);

  // base sheet set: cluster the reduced points of the expanded u-fiber
  std::vector<QuotientPoint> pts;
  for (int i = 0; i < cfg.r_samples; ++i) {
    double r = (i + 0.5) / cfg.r_samples;
    GroupElement ge = mul(mul(a_elem(g, t), u_elem(g, r)), x0.rep);
    QuotientPoint p = x0.lattice == LatticeId::CompactStub
                          ? QuotientPoint{ge, x0.lattice, true, 0.0}
                          : reduce_point(ge, x0.lattice);
    if (x0.lattice == LatticeId::CompactStub ||
        injectivity_radius(p, cache).value >= 2 * cfg.eta)
      pts.push_back(p);
  }
  if (pts.empty()) {
    res.error = "EmptyCovering";
    return res;
  }
  // anchor on the point capturing the most neighbors within the sheet box
  std::size_t anchor = 0;
  std::vector<LieVector> bestF;
  for (std::size_t cand = 0; cand < pts.size(); ++cand) {
    std::vector<LieVector> F{lie_zero(g)};
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == cand) continue;
      ChartOffset off = chart_offset(pts[i], pts[cand], cache, 1.0);
      if (!off.ok || norm_r(off.w) > beta || norm_r(off.w) == 0) continue;
      if (gdist_id(off.hpart) > 0.1 * cfg.eta) continue;
      bool dup = false;
      for (const LieVector& u : F)
        if (lie_norm(off.w - u) < 1e-12) dup = true;
      if (!dup) F.push_back(off.w);
    }
    if (F.size() > bestF.size()) {
      bestF = F;
      anchor = cand;
    }
    if (cand > 48) break;  // keep the greedy anchor scan bounded
  }
  if (bestF.empty()) bestF.push_back(lie_zero(g));

  BootstrapState state;
  state.sheets = SheetSet{pts[anchor], bestF, beta, cfg.eta};
  state.m0 = m0;
  state.n = t + 1.0;
  state.ell = std::max(1, static_cast<int>(std::floor(kappa7 * cfg.epsilon * (t + 1.0))));
  double maxf0 = max_center_f(state.sheets, cfg.alpha, cache);
  state.Mn = std::log(std::max(maxf0, 2.0));
  int i_max = cfg.i_max_override;
  if (i_max <= 0)
    i_max = static_cast<int>(std::floor((6.0 * state.Mn - 3.0) /
                                        (4.0 * kappa7 * cfg.epsilon))) + 1;
  state.i_max = std::max(1, std::min(i_max, 64));

  res.trace.push_back({0, static_cast<int>(bestF.size()), beta, maxf0, "base", cfg.seed});

  RandomWalk walk{cfg.alpha, m0, state.ell};
  for (int i = 0; i < state.i_max; ++i) {
    // pick the best of a few h0 candidates from the walk support
    BootstrapStepResult best;
    for (int c = 0; c < cfg.h0_candidates; ++c) {
      Rng wrng = Rng::stream(cfg.seed, 0xC00 + 16 * i + c);
      WalkSample h0 = walk_sample(g, walk, wrng);
      BootstrapStepResult step = bootstrap_step(state, h0, cfg, cache);
      if (!step.ok) continue;
      if (!best.ok || step.record.max_f < best.record.max_f) best = step;
    }
    if (!best.ok) {
      res.error = "EmptyCovering";
      res.final_set = state.sheets;
      return res;
    }
    state = best.state;
    res.trace.push_back(best.record);
    if (best.record.branch.rfind("stop", 0) == 0 || best.record.branch == "trivial") break;
  }

  res.ok = true;
  res.final_set = state.sheets;
  const auto& F = state.sheets.F;
  double worst = 0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < F.size(); ++j)
      if (j != i) s += std::pow(lie_norm(F[i] - F[j]), -cfg.alpha);
    worst = std::max(worst, s);
  }
  res.fitted_energy_c =
      worst / std::pow(static_cast<double>(std::max<std::size_t>(F.size(), 1)), 1.0 + cfg.epsilon);
  return res;
}

// ----- periodic orbits ---------------------------------------------------------

std::vector<LieVector> orbit_displacements(const QuotientPoint& y, double delta0,
                                           const LatticeCache& cache) {
  std::vector<LieVector> out;
  AmbientGroup g = y.rep.group;
  double cut = delta0 * injectivity_radius(y, cache).value;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    GroupElement M = mul(y.rep, cache.embedded[i]);
    LieVector w = lie_zero(g);
    bool ok = false;
    if (g == AmbientGroup::SL2RxSL2R) {
      // M = exp((W,0)) (h,h):  W = log(M1 M2^-1), h = M2
      Mat2c D = M.f1 * (Mat2c() << M.f2(1, 1), -M.f2(0, 1), -M.f2(1, 0), M.f2(0, 0)).finished();
      if ((D - Mat2c::Identity()).cwiseAbs().maxCoeff() < 0.9) {
        GroupElement dd{AmbientGroup::SL2C, D, Mat2c::Identity()};
        LogResult lg = log_g(dd);
        if (lg.ok && norm_r(lg.w) < 1e-9) {
          // real log of a real matrix: the h-coordinates carry it
          w = lie_r(g, lg.w.h);
          ok = true;
        }
      }
    } else {
      // iterate for M = exp(i W) h with h real
      Mat2 R = M.f1.real();
      double det = R.determinant();
      if (det > 1e-4) {
        Mat2 h = R / std::sqrt(det);
        bool conv = false;
        for (int it = 0; it < 40; ++it) {
          Mat2c N = M.f1 * (Mat2c() << h(1, 1), -h(0, 1), -h(1, 0), h(0, 0)).finished();
          GroupElement nn{AmbientGroup::SL2C, N, Mat2c::Identity()};
          LogResult lg = log_g(nn);
          if (!lg.ok) break;
          if (norm_h(lg.w) < 1e-13) {
            w = lie_r(g, lg.w.r);
            conv = true;
            break;
          }
          GroupElement eh = exp_g(lie_h(AmbientGroup::SL2C, lg.w.h));
          h = (eh.f1.real() * h).eval();
        }
        ok = conv;
      }
    }
    if (!ok) continue;
    double n = lie_norm(w);
    if (n <= 0 || n >= cut) continue;
    LieVector disp = -1.0 * w;
    bool dup = false;
    for (const LieVector& u : out)
      if (lie_norm(disp - u) < 1e-12) dup = true;
    if (!dup) out.push_back(disp);
  }
  return out;
}

std::vector<QuotientPoint> sample_periodic_orbit(LatticeId lat, int n, int burn_in, int m0,
                                                 std::uint64_t seed) {
  AmbientGroup g = lattice_group(lat);
  Rng rng = Rng::stream(seed, 0x9E);
  QuotientPoint y = reduce_point(identity(g), lat);
  std::vector<QuotientPoint> out;
  for (int i = 0; i < n + burn_in; ++i) {
    GroupElement step = mul(a_elem(g, m0), u_elem(g, rng.uniform()));
    y = reduce_point(mul(step, y.rep), lat);
    if (i >= burn_in) out.push_back(y);
  }
  return out;
}

PeriodicOrbitStats periodic_orbit_f(const std::vector<QuotientPoint>& ys, double alpha,
                                    double delta0, const LatticeCache& cache) {
  PeriodicOrbitStats st;
  st.samples = static_cast<int>(ys.size());
  std::map<std::array<long long, 8>, int> cells;
  const double q = 0.05;
  double total = 0;
  for (const QuotientPoint& y : ys) {
    std::vector<LieVector> ws = orbit_displacements(y, delta0, cache);
    double f;
    if (ws.empty()) {
      f = std::pow(injectivity_radius(y, cache).value, -alpha);
    } else {
      f = 0;
      for (const LieVector& w : ws) f += std::pow(lie_norm(w), -alpha);
    }
    st.max_f = std::max(st.max_f, f);
    st.max_count = std::max(st.max_count, static_cast<int>(ws.size()));
    total += f;
    std::array<long long, 8> key{};
    int idx = 0;
    for (int fac = 0; fac < 2; ++fac)
      for (int a = 0; a < 2 && idx < 8; ++a)
        for (int b = 0; b < 2 && idx < 8; ++b) {
          const Mat2c& m = fac == 0 ? y.rep.f1 : y.rep.f2;
          key[idx++] = std::llround(m(a, b).real() / q);
        }
    cells[key]++;
  }
  st.mean_f = ys.empty() ? 0 : total / ys.size();
  st.volume_proxy = static_cast<double>(cells.size());
  st.count_bound_c = st.volume_proxy > 0 ? st.max_count / st.volume_proxy : 0;
  return st;
}

}  // namespace orbitlab
