#include "orbitlab/equidist.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "orbitlab/calibration.hpp"
#include "orbitlab/rng.hpp"

namespace orbitlab {

namespace {

double bump(double t) {
  double t2 = t * t;
  if (t2 >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - t2));
}

// integral of bump over [-1,1], fixed high-order composite Simpson
double bump_mass() {
  static const double value = [] {
    const int n = 4096;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      double a = -1.0 + 2.0 * i / n, b = -1.0 + 2.0 * (i + 1) / n;
      acc += (b - a) / 6.0 * (bump(a) + 4.0 * bump(0.5 * (a + b)) + bump(b));
    }
    return acc;
  }();
  return value;
}

}  // namespace

double test_function_value(const TestFunction& f, const QuotientPoint& x,
                           const LatticeCache& cache) {
  if (f.profile == ProfileKind::Constant) return f.constant_value;
  // chart x against the center over the cache
  GroupElement cinv = inverse(f.center.rep);
  double best = 1e300;
  GroupElement bestM = identity(x.rep.group);
  if (x.lattice == LatticeId::CompactStub) {
    bestM = mul(x.rep, cinv);
    best = gdist_id(bestM);
  } else {
    for (std::size_t i = 0; i < cache.size(); ++i) {
      GroupElement M = mul(mul(x.rep, cache.embedded[i]), cinv);
      double d = gdist_id(M);
      if (d < best) {
        best = d;
        bestM = M;
      }
    }
  }
  double h = 0.1 * f.radius;
  if (best > 8.0 * h) return 0.0;  // clear of the support
  TransversalDecomposition dec = decompose_transversal(bestM, 0.9);
  if (dec.status != LieStatus::Ok) return 0.0;
  HReal hr = h_real(dec.h);
  BruhatCoords bc = bruhat(hr.m);
  if (!bc.ok) return 0.0;
  double v = bump(bc.s / h) * bump(bc.d / h) * bump(bc.r / h) * bump(dec.w.r(0, 0) / h) *
             bump(dec.w.r(0, 1) / h) * bump(dec.w.r(1, 0) / h);
  double norm = std::pow(h * bump_mass(), 6.0);
  return v / norm;
}

namespace {

AverageResult batched_average(int samples, std::uint64_t seed, std::uint64_t stream,
                              const std::function<double(Rng&)>& draw) {
  const int batches = 8;
  int per = std::max(1, samples / batches);
  std::vector<double> est(batches, 0);
  for (int b = 0; b < batches; ++b) {
    Rng rng = Rng::stream(seed, stream + b);
    for (int k = 0; k < per; ++k) est[b] += draw(rng);
    est[b] /= per;
  }
  AverageResult out;
  out.samples = per * batches;
  out.value = std::accumulate(est.begin(), est.end(), 0.0) / batches;
  double var = 0;
  for (double v : est) var += (v - out.value) * (v - out.value);
  out.mc_error = std::sqrt(var / (batches * (batches - 1)));
  return out;
}

}  // namespace

AverageResult horospherical_average(const TestFunction& f, const QuotientPoint& x, double t,
                                    int samples, std::uint64_t seed, const LatticeCache& cache) {
  AmbientGroup g = x.rep.group;
  return batched_average(samples, seed, 0xA0, [&](Rng& rng) {
    double r = rng.uniform(), s = rng.uniform();
    GroupElement ge = mul(mul(a_elem(g, t), n_elem(g, r, s)), x.rep);
    QuotientPoint p = x.lattice == LatticeId::CompactStub ? QuotientPoint{ge, x.lattice, true, 0.0}
                                                          : reduce_point(ge, x.lattice);
    return test_function_value(f, p, cache);
  });
}

SparseMeasure uniform_sparse(int n) {
  SparseMeasure rho;
  for (int i = 0; i < n; ++i) {
    rho.support.push_back((i + 0.5) / n);
    rho.weights.push_back(1.0 / n);
  }
  rho.scale_b = 1.0 / n;
  rho.record = {1.0, 2.0, 1.0 / n};
  return rho;
}

SparseMeasure dirac_sparse(double s) {
  SparseMeasure rho;
  rho.support.push_back(s);
  rho.weights.push_back(1.0);
  rho.scale_b = 1.0 / 256.0;
  rho.record = {1.0, 1.0, 1.0 / 256.0};
  return rho;
}

SparseAverageResult sparse_average(const TestFunction& f, const QuotientPoint& x, double t,
                                   const SparseMeasure& rho, int r_samples, std::uint64_t seed,
                                   const LatticeCache& cache) {
  SparseAverageResult out;
  double lb = std::abs(std::log(std::max(rho.scale_b, 1e-300)));
  out.window_warning = !(lb / 4.0 <= t && t <= lb / 2.0);
  AmbientGroup g = x.rep.group;
  AverageResult avg = batched_average(r_samples, seed, 0xB0, [&](Rng& rng) {
    double r = rng.uniform();
    double acc = 0;
    for (std::size_t i = 0; i < rho.support.size(); ++i) {
      GroupElement ge =
          mul(mul(mul(a_elem(g, t), u_elem(g, r)), v_elem(g, rho.support[i])), x.rep);
      QuotientPoint p = x.lattice == LatticeId::CompactStub
                            ? QuotientPoint{ge, x.lattice, true, 0.0}
                            : reduce_point(ge, x.lattice);
      acc += rho.weights[i] * test_function_value(f, p, cache);
    }
    return acc;
  });
  out.value = avg.value;
  out.mc_error = avg.mc_error;
  return out;
}

RhoCheckResult rho_regularity_check(const SparseMeasure& rho, double exponent, double floor) {
  RhoCheckResult out;
  if (rho.support.empty()) return out;
  double lo_all = *std::min_element(rho.support.begin(), rho.support.end());
  for (double len = 1.0; len >= floor / 2; len /= 2) {
    // offsets at half-length steps plus each atom as a left endpoint
    std::vector<double> los;
    for (double o = lo_all - len; o <= lo_all + 1.0 + len; o += len / 2) los.push_back(o);
    for (double s : rho.support) los.push_back(s);
    for (double lo : los) {
      double mass = 0;
      for (std::size_t i = 0; i < rho.support.size(); ++i)
        if (rho.support[i] >= lo - 1e-15 && rho.support[i] <= lo + len + 1e-15)
          mass += rho.weights[i];
      double ratio = mass / std::pow(len, exponent);
      if (ratio > out.fitted_c) {
        out.fitted_c = ratio;
        out.worst_lo = lo;
        out.worst_len = len;
      }
    }
  }
  out.pass = out.fitted_c <= calib::kRhoConstantCap;
  return out;
}

std::vector<QuotientPoint> test_grid(LatticeId lat, double eta, int max_points,
                                     const LatticeCache& cache) {
  std::vector<QuotientPoint> out;
  AmbientGroup g = lattice_group(lat);
  for (int a = 0; a < 4 && static_cast<int>(out.size()) < max_points; ++a)
    for (int b = 0; b < 4 && static_cast<int>(out.size()) < max_points; ++b)
      for (int c = 0; c < 4 && static_cast<int>(out.size()) < max_points; ++c) {
        GroupElement ge = mul(
            mul(n_elem(g, 0.13 + 0.2 * a, 0.11 + 0.2 * b), a_elem(g, -0.4 + 0.25 * c)),
            uminus_elem(g, 0.07 * a - 0.09 * b));
        QuotientPoint p = reduce_point(ge, lat);
        if (injectivity_radius(p, cache).value >= eta) out.push_back(p);
      }
  return out;
}

std::vector<DensityRow> density_scan(const QuotientPoint& x0, const std::vector<double>& t_grid,
                                     const std::vector<QuotientPoint>& grid, int samples,
                                     std::uint64_t seed, const LatticeCache& cache) {
  std::vector<DensityRow> rows;
  AmbientGroup g = x0.rep.group;
  double t_ref = std::log(t_grid.empty() ? 101.0 : t_grid.front() + 1.0);
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    double T = t_grid[ti];
    Rng rng = Rng::stream(seed, 0xD0 + ti);
    std::vector<QuotientPoint> cloud;
    // the a-range grows with log T; keep the sample density on the orbit
    // piece comparable across the grid
    double scale = std::log(T + 1.0) / t_ref;
    int n = static_cast<int>(std::lround(samples * scale * scale));
    cloud.reserve(n + 1);
    cloud.push_back(x0.reduced ? x0 : reduce_point(x0.rep, x0.lattice));  // e is in B_P(e,T)
    double tau_max = 2.0 * std::log(T + 1.0);
    for (int k = 0; k < n; ++k) {
      double tau = rng.sym(tau_max);
      double rmax = T * std::exp(-tau / 2.0);
      double r = rng.sym(std::min(rmax, 1e8));
      GroupElement ge = mul(mul(a_elem(g, tau), u_elem(g, r)), x0.rep);
      cloud.push_back(reduce_point(ge, x0.lattice));
    }
    double radius = 0;
    for (const QuotientPoint& z : grid) {
      double mind = 1e300;
      for (const QuotientPoint& p : cloud) {
        double d = distance_X(z, p, cache).value;
        if (d < mind) mind = d;
      }
      radius = std::max(radius, mind);
    }
    rows.push_back(DensityRow{T, radius, n, seed});
  }
  return rows;
}

double cloud_orbit_excursion(const QuotientPoint& x0, double T, int samples, std::uint64_t seed,
                             const LatticeCache& cache) {
  AmbientGroup g = x0.rep.group;
  Rng rng = Rng::stream(seed, 0xE0);
  double worst = 0;
  double tau_max = 2.0 * std::log(T + 1.0);
  for (int k = 0; k < samples; ++k) {
    double tau = rng.sym(tau_max);
    double rmax = T * std::exp(-tau / 2.0);
    double r = rng.sym(std::min(rmax, 1e8));
    GroupElement ge = mul(mul(a_elem(g, tau), u_elem(g, r)), x0.rep);
    QuotientPoint p = reduce_point(ge, x0.lattice);
    // transversal distance to the base H-orbit
    double best = 0.01;
    for (std::size_t i = 0; i < cache.size(); ++i) {
      GroupElement M = mul(p.rep, cache.embedded[i]);
      if (g == AmbientGroup::SL2RxSL2R) {
        Mat2c D = M.f1 * (Mat2c() << M.f2(1, 1), -M.f2(0, 1), -M.f2(1, 0), M.f2(0, 0)).finished();
        if ((D - Mat2c::Identity()).cwiseAbs().maxCoeff() < 0.9) {
          GroupElement dd{AmbientGroup::SL2C, D, Mat2c::Identity()};
          LogResult lg = log_g(dd);
          if (lg.ok) best = std::min(best, part_norm(lg.w.h));
        }
      } else {
        // ||Im M|| after peeling the real H part
        Mat2 R = M.f1.real();
        double det = R.determinant();
        if (det > 1e-4) {
          Mat2 h = R / std::sqrt(det);
          Mat2c N = M.f1 * (Mat2c() << h(1, 1), -h(0, 1), -h(1, 0), h(0, 0)).finished();
          GroupElement nn{AmbientGroup::SL2C, N, Mat2c::Identity()};
          LogResult lg = log_g(nn);
          if (lg.ok && norm_h(lg.w) < 1e-3) best = std::min(best, norm_r(lg.w));
        }
      }
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace orbitlab
