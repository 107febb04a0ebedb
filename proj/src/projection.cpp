#include "orbitlab/projection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "orbitlab/calibration.hpp"

namespace orbitlab {

RVec to_rvec(const LieVector& w) { return RVec(w.r(0, 0), w.r(0, 1), w.r(1, 0)); }

LieVector from_rvec(AmbientGroup g, const RVec& w) { return lie_r3(g, w[0], w[1], w[2]); }

EnergyResult alpha_energy(const std::vector<RVec>& pts, double alpha) {
  EnergyResult out;
  const std::size_t n = pts.size();
  out.per_point.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = rvec_norm(pts[i] - pts[j]);
      if (d == 0) {
        out.error = "DuplicatePoints";
        return out;
      }
      double v = std::pow(d, -alpha);
      out.per_point[i] += v;
      out.per_point[j] += v;
    }
  out.ok = true;
  for (double v : out.per_point) out.max_sum = std::max(out.max_sum, v);
  return out;
}

RegularityCertificate verify_regularity(const std::vector<RVec>& pts, double b0, double b1,
                                        double exponent, double constant_cap) {
  RegularityCertificate cert;
  if (pts.empty()) return cert;
  const double n = static_cast<double>(pts.size());
  std::vector<RVec> centers = pts;
  // a coarse grid of extra centers across the bounding box
  RVec lo = pts[0], hi = pts[0];
  for (const RVec& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const int g = 4;
  for (int a = 0; a <= g; ++a)
    for (int b = 0; b <= g; ++b)
      for (int c = 0; c <= g; ++c)
        centers.push_back(lo + RVec((hi - lo)[0] * a / g, (hi - lo)[1] * b / g,
                                    (hi - lo)[2] * c / g));
  double worst = 0;
  for (double b = b0; b <= 2.0 * b1 + 1e-300; b *= 2.0) {
    for (const RVec& w : centers) {
      int count = 0;
      for (const RVec& p : pts)
        if (rvec_norm(p - w) <= b) ++count;
      double ratio = (count / n) / std::pow(b / b1, exponent);
      if (ratio > worst) {
        worst = ratio;
        cert.worst_b = b;
        cert.worst_center = w;
      }
    }
  }
  cert.fitted_constant = worst;
  cert.pass = worst <= constant_cap;
  return cert;
}

namespace {

using Key = std::array<long long, 3>;

Key cube_key(const RVec& p, double side) {
  return Key{static_cast<long long>(std::floor((p[0] + 1.0) / side)),
             static_cast<long long>(std::floor((p[1] + 1.0) / side)),
             static_cast<long long>(std::floor((p[2] + 1.0) / side))};
}

}  // namespace

RegularizeResult dyadic_regularize(const std::vector<RVec>& pts, double alpha, double eps, int T,
                                   double d_cap) {
  RegularizeResult res;
  res.T = T;
  const std::size_t n0 = pts.size();
  if (n0 < 2) {
    res.error = "HypothesisFail";
    return res;
  }
  for (const RVec& p : pts)
    if (rvec_norm(p) > 1.0 + 1e-12) {
      res.error = "HypothesisFail: points outside B(0,1)";
      return res;
    }
  EnergyResult energy = alpha_energy(pts, alpha);
  if (!energy.ok) {
    res.error = energy.error;
    return res;
  }
  res.energy_D = energy.max_sum / std::pow(static_cast<double>(n0), 1.0 + eps);
  if (res.energy_D > d_cap) {
    res.error = "HypothesisFail";
    return res;
  }

  // b0-separated subset, greedy in deterministic order
  const double b0 = 1.0 / static_cast<double>(n0);
  std::vector<std::size_t> order(n0);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(pts[a].data(), pts[a].data() + 3, pts[b].data(),
                                        pts[b].data() + 3);
  });
  std::vector<RVec> sep;
  for (std::size_t idx : order) {
    bool fits = true;
    for (const RVec& q : sep)
      if (rvec_norm(pts[idx] - q) < b0 - 1e-15) {
        fits = false;
        break;
      }
    if (fits) sep.push_back(pts[idx]);
  }

  // regular dyadic tree: levels of side 2 * 2^{-ell T}; prune to a uniform
  // branching number per level, keeping the heaviest dyadic class
  res.k1 = static_cast<int>(std::ceil(std::log2(1.0 / b0) / T));
  std::vector<char> alive(sep.size(), 1);
  res.branching_bits.clear();
  for (int ell = 0; ell < res.k1; ++ell) {
    double side = 2.0 * std::pow(2.0, -static_cast<double>(T) * ell);
    double child_side = side / std::pow(2.0, T);
    // parent -> child cubes -> points
    std::map<Key, std::map<Key, std::vector<std::size_t>>> tree;
    for (std::size_t i = 0; i < sep.size(); ++i)
      if (alive[i]) tree[cube_key(sep[i], side)][cube_key(sep[i], child_side)].push_back(i);
    if (tree.empty()) break;
    // dyadic class of the child count, weighted by retained points
    std::map<int, long long> class_mass;
    for (auto& [pk, children] : tree) {
      int bits = static_cast<int>(std::floor(std::log2(static_cast<double>(children.size()))));
      long long mass = 0;
      for (auto& [ck, v] : children) mass += static_cast<long long>(v.size());
      class_mass[bits] += mass;
    }
    int best_bits = class_mass.begin()->first;
    for (auto& [bits, mass] : class_mass)
      if (mass > class_mass[best_bits]) best_bits = bits;
    long long keep = 1ll << best_bits;
    for (auto& [pk, children] : tree) {
      int bits = static_cast<int>(std::floor(std::log2(static_cast<double>(children.size()))));
      if (bits != best_bits) {
        for (auto& [ck, v] : children)
          for (std::size_t i : v) alive[i] = 0;
        continue;
      }
      // trim to exactly 2^bits children, heaviest first
      std::vector<std::pair<long long, Key>> by_mass;
      for (auto& [ck, v] : children)
        by_mass.push_back({-static_cast<long long>(v.size()), ck});
      std::sort(by_mass.begin(), by_mass.end());
      for (std::size_t k = keep; k < by_mass.size(); ++k)
        for (std::size_t i : children[by_mass[k].second]) alive[i] = 0;
    }
    res.branching_bits.push_back(best_bits);
  }

  // cut level k2: first window where the forward-averaged branching reaches
  // (alpha - 20 eps) T bits
  const double target_bits = (alpha - 20.0 * eps) * T;
  int k0 = static_cast<int>(std::floor(res.k1 * eps));
  res.k2 = res.k1;
  for (int k = k0 + 1; k <= res.k1; ++k) {
    double mk = 1e300;
    double run = 0;
    for (int ell = k + 1; ell <= res.k1; ++ell) {
      run += (ell - 1 < static_cast<int>(res.branching_bits.size()))
                 ? res.branching_bits[ell - 1]
                 : 0;
      mk = std::min(mk, run / (ell - k));
    }
    if (mk >= target_bits) {
      res.k2 = k;
      break;
    }
  }
  res.b1 = 2.0 * std::pow(2.0, -static_cast<double>(T) * res.k2);

  // heaviest level-k2 cube
  std::map<Key, std::vector<std::size_t>> cubes;
  for (std::size_t i = 0; i < sep.size(); ++i)
    if (alive[i]) cubes[cube_key(sep[i], res.b1)].push_back(i);
  if (cubes.empty()) {
    res.error = "HypothesisFail";
    return res;
  }
  const std::vector<std::size_t>* best = nullptr;
  for (auto& [key, v] : cubes)
    if (!best || v.size() > best->size()) best = &v;
  for (std::size_t i : *best) res.selected.push_back(sep[i]);

  // anchor point: closest to the cube's center of mass
  RVec com = RVec::Zero();
  for (const RVec& p : res.selected) com += p;
  com /= static_cast<double>(res.selected.size());
  double bd = 1e300;
  for (const RVec& p : res.selected) {
    double d = rvec_norm(p - com);
    if (d < bd) {
      bd = d;
      res.w0 = p;
    }
  }

  res.cert = verify_regularity(res.selected, b0, res.b1, alpha - 20.0 * eps,
                               calib::kRegularizeCPrimeCap);
  res.ok = true;
  return res;
}

double multiplicity(const PointSetMeasure& E, double q1, double q2, double b) {
  if (E.pts.empty()) return 0;
  int count = 0;
  for (const RVec& w : E.pts)
    if (std::abs(q2 - xi(w, q1)) <= b) ++count;
  return static_cast<double>(count) / static_cast<double>(E.pts.size());
}

GeneralPosition general_position_rotation(const std::vector<RVec>& pts) {
  GeneralPosition out;
  for (double r0 : {0.0, 0.1, 0.9}) {
    std::vector<int> kept;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      // Ad(u_r0) in the (w11, w12, w21) coordinates
      RVec w = pts[i];
      RVec v(w[0] + r0 * w[2], xi(w, r0), w[2]);
      if (std::abs(v[1]) >= 1e-3 * rvec_norm(v)) kept.push_back(static_cast<int>(i));
    }
    if (4 * kept.size() >= pts.size()) {
      out.ok = true;
      out.r0 = r0;
      out.kept = kept;
      return out;
    }
  }
  return out;
}

std::string projection_report_json(const ProjectionReport& rep) {
  std::ostringstream os;
  os.precision(12);
  os << "{\"alpha\":" << rep.alpha << ",\"kappa\":" << rep.kappa << ",\"b1\":" << rep.b1
     << ",\"good_direction_fraction\":" << rep.good_direction_fraction
     << ",\"good_point_fraction_min\":" << rep.good_point_fraction_min
     << ",\"fitted_C\":" << rep.fitted_c << ",\"grid_spec\":\"" << rep.grid_spec << "\""
     << ",\"seed\":" << rep.seed << ",\"pass\":" << (rep.pass ? "true" : "false") << "}";
  return os.str();
}

ProjectionReport verify_projection_theorem(const PointSetMeasure& E, double kappa, double j_lo,
                                           double j_hi, int r_grid, int b_grid) {
  ProjectionReport rep;
  rep.kappa = kappa;
  rep.alpha = E.alpha;
  rep.b1 = E.b1;
  std::ostringstream gs;
  gs << "r:" << r_grid << "@[" << j_lo << "," << j_hi << "] b:" << b_grid << " dyadic";
  rep.grid_spec = gs.str();
  if (!E.certified) {
    rep.certificate_missing = true;
    return rep;
  }
  const std::size_t n = E.pts.size();
  if (n == 0) return rep;
  const double expo = E.alpha - 7.0 * kappa;

  std::vector<double> b_values;
  for (int k = 0; k < b_grid; ++k) {
    double b = E.b1 * std::pow(2.0, -k);
    if (b < E.b0) break;
    b_values.push_back(b);
  }
  if (b_values.empty()) b_values.push_back(E.b1);

  std::vector<double> cr;  // per-direction 0.9-quantile constant
  std::vector<double> rs;
  std::vector<std::vector<double>> cw_all;
  for (int ri = 0; ri < r_grid; ++ri) {
    double r = j_lo + (j_hi - j_lo) * (ri + 0.5) / r_grid;
    rs.push_back(r);
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = xi(E.pts[i], r);
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cw(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (double b : b_values) {
        auto lo = std::lower_bound(sorted.begin(), sorted.end(), vals[i] - b);
        auto hi = std::upper_bound(sorted.begin(), sorted.end(), vals[i] + b);
        double frac = static_cast<double>(hi - lo) / static_cast<double>(n);
        cw[i] = std::max(cw[i], frac / std::pow(b / E.b1, expo));
      }
    }
    cw_all.push_back(cw);
    std::vector<double> sc = cw;
    std::size_t q = static_cast<std::size_t>(std::ceil(0.9 * n)) - 1;
    std::nth_element(sc.begin(), sc.begin() + q, sc.end());
    cr.push_back(sc[q]);
  }
  std::vector<double> crs = cr;
  std::size_t qd = static_cast<std::size_t>(std::ceil(0.9 * cr.size())) - 1;
  std::nth_element(crs.begin(), crs.begin() + qd, crs.end());
  rep.fitted_c = crs[qd];

  double min_point_fraction = 1.0;
  for (std::size_t ri = 0; ri < cr.size(); ++ri) {
    if (cr[ri] > rep.fitted_c) continue;
    rep.good_directions.push_back(rs[ri]);
    std::vector<int> er;
    for (std::size_t i = 0; i < n; ++i)
      if (cw_all[ri][i] <= rep.fitted_c) er.push_back(static_cast<int>(i));
    min_point_fraction = std::min(min_point_fraction, er.size() / static_cast<double>(n));
    rep.good_point_sets.push_back(std::move(er));
  }
  rep.good_direction_fraction = rep.good_directions.size() / static_cast<double>(r_grid);
  rep.good_point_fraction_min = rep.good_directions.empty() ? 0 : min_point_fraction;
  // collision diagnostic: the fitted constant carries the whole mass at the
  // finest scale, i.e. the multiplicity bound is vacuous
  double vacuous = 0.5 * std::pow(b_values.back() / E.b1, -expo);
  rep.degenerate_collisions = rep.fitted_c >= std::max(8.0, vacuous);
  rep.pass = rep.good_direction_fraction >= 0.9 - 1e-12 &&
             rep.good_point_fraction_min >= 0.9 - 1e-12 && !rep.degenerate_collisions;
  return rep;
}

PipelineResult project_pipeline(const std::vector<RVec>& F, const QuotientPoint& x1, double alpha,
                                double eps, const PipelineConfig& cfg,
                                const LatticeCache& cache) {
  PipelineResult res;
  AmbientGroup g = x1.rep.group;
  if (static_cast<int>(F.size()) < cfg.min_points) {
    res.error = "SizeFloor";
    return res;
  }

  // normalize to B(0,1) for the regularization step
  double scale = 0;
  for (const RVec& w : F) scale = std::max(scale, rvec_norm(w));
  if (scale == 0) {
    res.error = "SizeFloor";
    return res;
  }
  std::vector<RVec> Fn;
  Fn.reserve(F.size());
  for (const RVec& w : F) Fn.push_back(w / scale);

  RegularizeResult reg = dyadic_regularize(Fn, alpha, eps, cfg.T, cfg.d_cap);
  if (!reg.ok) {
    res.error = reg.error;
    return res;
  }
  res.energy_D = reg.energy_D;
  res.b1_norm = reg.b1;
  res.b1_abs = reg.b1 * scale;

  // localize: keep the inner part of the selected cube around w0 so the
  // pushed-forward support stays inside the unit window
  std::vector<RVec> local;
  for (const RVec& w : reg.selected)
    if (rvec_norm(w - reg.w0) <= reg.b1 / cfg.localization_divisor) local.push_back(w);
  if (static_cast<int>(local.size()) < cfg.min_points) local = reg.selected;

  // chart the local set against w0 through the BCH difference; the zero
  // displacement (w' = w0) is part of the charted set
  RVec w0_abs = reg.w0 * scale;
  std::vector<RVec> E;
  std::vector<int> src;  // E index -> local index
  for (std::size_t li = 0; li < local.size(); ++li) {
    const RVec& wp = local[li];
    if ((wp - reg.w0).norm() == 0) {
      E.push_back(RVec::Zero());
      src.push_back(static_cast<int>(li));
      continue;
    }
    BchResult b = bch_difference(from_rvec(g, wp * scale), from_rvec(g, w0_abs),
                                 std::max(2.0 * scale, cfg.beta0));
    if (b.status != LieStatus::Ok) continue;
    E.push_back(to_rvec(b.w));
    src.push_back(static_cast<int>(li));
  }
  if (static_cast<int>(E.size()) < cfg.min_points) {
    res.error = "HypothesisFail";
    return res;
  }

  QuotientPoint x2p = x1.lattice == LatticeId::CompactStub
                          ? QuotientPoint{mul(exp_g(from_rvec(g, w0_abs)), x1.rep), x1.lattice,
                                          true, 0.0}
                          : reduce_point(mul(exp_g(from_rvec(g, w0_abs)), x1.rep), x1.lattice);

  // general-position rotation (never fails for honest sets)
  GeneralPosition gp = general_position_rotation(E);
  if (!gp.ok) {
    res.error = "GeneralPositionFail";
    return res;
  }
  res.r0 = gp.r0;
  std::vector<RVec> Erot;
  std::vector<int> rot_src;
  for (int idx : gp.kept) {
    RVec w = E[idx];
    Erot.push_back(RVec(w[0] + gp.r0 * w[2], xi(w, gp.r0), w[2]));
    rot_src.push_back(src[idx]);
  }
  GroupElement shift = u_elem(g, gp.r0);
  x2p.rep = mul(shift, x2p.rep);
  if (x1.lattice != LatticeId::CompactStub) x2p = reduce_point(x2p.rep, x1.lattice);

  // certify the charted set at the inherited exponent (hard invariant)
  PointSetMeasure Em;
  Em.pts = Erot;
  Em.b1 = res.b1_abs;
  Em.b0 = std::max(res.b1_abs / std::pow(2.0, cfg.b_grid - 1), 1e-14);
  Em.alpha = alpha - 20.0 * eps;
  RegularityCertificate cert =
      verify_regularity(Em.pts, Em.b0, Em.b1, Em.alpha, 4.0 * calib::kRegularizeCPrimeCap);
  Em.upsilon = cert.fitted_constant;
  Em.certified = cert.pass;
  if (!Em.certified) {
    res.error = "HypothesisFail: charted set lost regularity";
    return res;
  }

  res.t = std::abs(std::log(res.b1_abs));
  ProjectionReport rep = verify_projection_theorem(Em, eps, -1e-4, 1e-4, cfg.r_grid, cfg.b_grid);
  rep.seed = cfg.seed;
  res.report = rep;
  if (rep.good_directions.empty()) {
    res.error = "RecurrenceFail";
    return res;
  }

  // recurrence filter J'' on the same grid
  double r_star = 0;
  std::vector<int> chosen;
  bool found = false;
  for (std::size_t k = 0; k < rep.good_directions.size(); ++k) {
    double r = rep.good_directions[k];
    GroupElement ge = mul(mul(a_elem(g, res.t), u_elem(g, r)), x2p.rep);
    QuotientPoint p = x1.lattice == LatticeId::CompactStub
                          ? QuotientPoint{ge, x1.lattice, true, 0.0}
                          : reduce_point(ge, x1.lattice);
    if (injectivity_radius(p, cache).value >= cfg.eta) {
      r_star = r;
      chosen = rep.good_point_sets[k];
      res.x2 = p;
      found = true;
      break;
    }
  }
  if (!found) {
    res.error = "RecurrenceFail";
    return res;
  }
  res.r_star = r_star;

  // push forward the counting measure under w -> e^t xi_r(w)
  double et = std::exp(res.t);
  std::map<long long, std::pair<double, double>> atoms;  // quantized s -> (s, mass)
  for (int idx : chosen) {
    double s = et * xi(Erot[idx], r_star);
    long long key = std::llround(s * 1e12);
    auto& a = atoms[key];
    a.first = s;
    a.second += 1.0 / chosen.size();
  }
  for (auto& [k, sv] : atoms) {
    res.I.push_back(sv.first);
    res.weights.push_back(sv.second);
  }

  // brute-force regularity of rho at exponent alpha - 30 eps over dyadic
  // intervals above the configured floor
  double expo = alpha - 30.0 * eps;
  double worst = 0;
  for (double len = 1.0; len >= cfg.rho_floor / 2; len /= 2) {
    for (std::size_t i = 0; i < res.I.size(); ++i) {
      double lo = res.I[i];
      double mass = 0;
      for (std::size_t j = 0; j < res.I.size(); ++j)
        if (res.I[j] >= lo - 1e-15 && res.I[j] <= lo + len + 1e-15) mass += res.weights[j];
      worst = std::max(worst, mass / std::pow(len, expo));
    }
  }
  res.rho_fitted_c = worst;
  res.rho_pass = worst <= calib::kRhoConstantCap;

  // membership: v_s x2 stays within C b1 of the expanded sheet targets
  double worst_ratio = 0;
  int checked = 0;
  for (std::size_t k = 0; k < chosen.size() && checked < 32; ++k, ++checked) {
    int idx = chosen[k];
    double s = et * xi(Erot[idx], r_star);
    GroupElement vs = mul(v_elem(g, s), res.x2.rep);
    QuotientPoint pv = x1.lattice == LatticeId::CompactStub
                           ? QuotientPoint{vs, x1.lattice, true, 0.0}
                           : reduce_point(vs, x1.lattice);
    // target: a_t u_{r*} u_{r0} exp(w') x1 for the matching source point
    GroupElement tgt = mul(mul(mul(a_elem(g, res.t), u_elem(g, r_star)), u_elem(g, gp.r0)),
                           mul(exp_g(from_rvec(g, local[rot_src[idx]] * scale)), x1.rep));
    QuotientPoint pt = x1.lattice == LatticeId::CompactStub
                           ? QuotientPoint{tgt, x1.lattice, true, 0.0}
                           : reduce_point(tgt, x1.lattice);
    double d = distance_X(pv, pt, cache).value;
    worst_ratio = std::max(worst_ratio, d / res.b1_abs);
  }
  res.membership_c = worst_ratio;
  res.ok = true;
  return res;
}

}  // namespace orbitlab
