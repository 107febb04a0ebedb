#include "orbitlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "orbitlab/calibration.hpp"
#include "orbitlab/rng.hpp"

namespace orbitlab {

namespace {

using i64 = std::int64_t;

// ----- exact entry arithmetic ------------------------------------------

// quadratic-integer entry x + y*omega with omega^2 = d (d = -1 or 2)
struct QEntry {
  i64 x = 0, y = 0;
};

QEntry qmul(const QEntry& a, const QEntry& b, i64 d) {
  return QEntry{a.x * b.x + d * a.y * b.y, a.x * b.y + a.y * b.x};
}
QEntry qadd(const QEntry& a, const QEntry& b) { return QEntry{a.x + b.x, a.y + b.y}; }

i64 quad_d(LatticeId id) { return id == LatticeId::SL2_GaussianIntegers ? -1 : 2; }

QEntry get_entry(const LatticeElement& e, int k) { return QEntry{e.c[2 * k], e.c[2 * k + 1]}; }
void set_entry(LatticeElement& e, int k, const QEntry& q) {
  e.c[2 * k] = q.x;
  e.c[2 * k + 1] = q.y;
}

bool is_quad(LatticeId id) {
  return id == LatticeId::SL2_GaussianIntegers || id == LatticeId::SL2_ZSqrt2;
}

LatticeElement quad_mat(i64 ax, i64 ay, i64 bx, i64 by, i64 cx, i64 cy, i64 dx, i64 dy) {
  LatticeElement e;
  e.c = {ax, ay, bx, by, cx, cy, dx, dy};
  return e;
}

LatticeElement int_pair_mat(std::array<i64, 4> m1, std::array<i64, 4> m2) {
  LatticeElement e;
  e.c = {m1[0], m1[1], m1[2], m1[3], m2[0], m2[1], m2[2], m2[3]};
  return e;
}

std::array<i64, 4> imul(const std::array<i64, 4>& a, const std::array<i64, 4>& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
          a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

// ----- symmetric-space actions ------------------------------------------

struct H3Point {
  cplx z;
  double t = 1.0;
};

// Moebius action of SL2(C) on the upper half space
H3Point act_h3(const Mat2c& g, const H3Point& p) {
  cplx a = g(0, 0), b = g(0, 1), c = g(1, 0), d = g(1, 1);
  cplx czd = c * p.z + d;
  double den = std::norm(czd) + std::norm(c) * p.t * p.t;
  H3Point out;
  out.z = ((a * p.z + b) * std::conj(czd) + a * std::conj(c) * p.t * p.t) / den;
  out.t = p.t / den;
  return out;
}

cplx act_h2(const Mat2& g, cplx z) {
  return (g(0, 0) * z + g(0, 1)) / (g(1, 0) * z + g(1, 1));
}

i64 iround(double v) { return static_cast<i64>(std::llround(v)); }

}  // namespace

std::string lattice_name(LatticeId id) {
  switch (id) {
    case LatticeId::SL2_GaussianIntegers: return "SL2_GaussianIntegers";
    case LatticeId::SL2Z_x_SL2Z: return "SL2Z_x_SL2Z";
    case LatticeId::SL2_ZSqrt2: return "SL2_ZSqrt2";
    default: return "CompactStub";
  }
}

AmbientGroup lattice_group(LatticeId id) {
  return id == LatticeId::SL2_GaussianIntegers ? AmbientGroup::SL2C : AmbientGroup::SL2RxSL2R;
}

LatticeElement lat_identity(LatticeId id) {
  if (is_quad(id)) return quad_mat(1, 0, 0, 0, 0, 0, 1, 0);
  return int_pair_mat({1, 0, 0, 1}, {1, 0, 0, 1});
}

LatticeElement lat_mul(LatticeId id, const LatticeElement& a, const LatticeElement& b) {
  LatticeElement out;
  if (is_quad(id)) {
    i64 d = quad_d(id);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        QEntry s = qadd(qmul(get_entry(a, 2 * i), get_entry(b, j), d),
                        qmul(get_entry(a, 2 * i + 1), get_entry(b, 2 + j), d));
        set_entry(out, 2 * i + j, s);
      }
    return out;
  }
  std::array<i64, 4> m1{a.c[0], a.c[1], a.c[2], a.c[3]}, m2{a.c[4], a.c[5], a.c[6], a.c[7]};
  std::array<i64, 4> n1{b.c[0], b.c[1], b.c[2], b.c[3]}, n2{b.c[4], b.c[5], b.c[6], b.c[7]};
  return int_pair_mat(imul(m1, n1), imul(m2, n2));
}

LatticeElement lat_inverse(LatticeId id, const LatticeElement& a) {
  LatticeElement out;
  if (is_quad(id)) {
    // adjugate; entries are exact since det = 1
    QEntry e00 = get_entry(a, 0), e01 = get_entry(a, 1), e10 = get_entry(a, 2),
           e11 = get_entry(a, 3);
    set_entry(out, 0, e11);
    set_entry(out, 1, QEntry{-e01.x, -e01.y});
    set_entry(out, 2, QEntry{-e10.x, -e10.y});
    set_entry(out, 3, e00);
    return out;
  }
  out.c = {a.c[3], -a.c[1], -a.c[2], a.c[0], a.c[7], -a.c[5], -a.c[6], a.c[4]};
  return out;
}

LatticeElement lat_neg(const LatticeElement& a) {
  LatticeElement out;
  for (int i = 0; i < 8; ++i) out.c[i] = -a.c[i];
  return out;
}

bool lat_is_identity(const LatticeElement& a, LatticeId id) { return a == lat_identity(id); }

bool lat_is_pm_identity(const LatticeElement& a, LatticeId id) {
  return a == lat_identity(id) || a == lat_neg(lat_identity(id));
}

bool lat_commute(LatticeId id, const LatticeElement& a, const LatticeElement& b) {
  return lat_mul(id, a, b) == lat_mul(id, b, a);
}

GroupElement lat_embed(LatticeId id, const LatticeElement& a) {
  GroupElement g = identity(lattice_group(id));
  if (id == LatticeId::SL2_GaussianIntegers) {
    for (int k = 0; k < 4; ++k) {
      QEntry q = get_entry(a, k);
      g.f1(k / 2, k % 2) = cplx(static_cast<double>(q.x), static_cast<double>(q.y));
    }
  } else if (id == LatticeId::SL2_ZSqrt2) {
    const double s2 = std::sqrt(2.0);
    for (int k = 0; k < 4; ++k) {
      QEntry q = get_entry(a, k);
      g.f1(k / 2, k % 2) = static_cast<double>(q.x) + static_cast<double>(q.y) * s2;
      g.f2(k / 2, k % 2) = static_cast<double>(q.x) - static_cast<double>(q.y) * s2;
    }
  } else {
    for (int k = 0; k < 4; ++k) {
      g.f1(k / 2, k % 2) = static_cast<double>(a.c[k]);
      g.f2(k / 2, k % 2) = static_cast<double>(a.c[4 + k]);
    }
  }
  return g;
}

std::vector<LatticeElement> lat_generators(LatticeId id) {
  std::vector<LatticeElement> gens;
  auto add_with_inverse = [&](const LatticeElement& e) {
    gens.push_back(e);
    LatticeElement inv = lat_inverse(id, e);
    if (!(inv == e)) gens.push_back(inv);
  };
  if (id == LatticeId::SL2_GaussianIntegers) {
    add_with_inverse(quad_mat(1, 0, 1, 0, 0, 0, 1, 0));   // T = (1,1;0,1)
    add_with_inverse(quad_mat(1, 0, 0, 1, 0, 0, 1, 0));   // U = (1,i;0,1)
    add_with_inverse(quad_mat(0, 0, -1, 0, 1, 0, 0, 0));  // S
    add_with_inverse(quad_mat(0, 1, 0, 0, 0, 0, 0, -1));  // L = diag(i,-i)
  } else if (id == LatticeId::SL2_ZSqrt2) {
    add_with_inverse(quad_mat(1, 0, 1, 0, 0, 0, 1, 0));   // T
    add_with_inverse(quad_mat(1, 0, 0, 1, 0, 0, 1, 0));   // T_sqrt2
    add_with_inverse(quad_mat(0, 0, -1, 0, 1, 0, 0, 0));  // S
    add_with_inverse(quad_mat(1, 1, 0, 0, 0, 0, -1, 1));  // E = diag(1+s2, -1+s2)
  } else if (id == LatticeId::SL2Z_x_SL2Z) {
    std::array<i64, 4> S{0, -1, 1, 0}, T{1, 1, 0, 1}, I{1, 0, 0, 1};
    add_with_inverse(int_pair_mat(S, I));
    add_with_inverse(int_pair_mat(T, I));
    add_with_inverse(int_pair_mat(I, S));
    add_with_inverse(int_pair_mat(I, T));
  }
  return gens;
}

void LatticeCache::build_index() {
  conj_lb.resize(elems.size());
  for (std::size_t i = 0; i < elems.size(); ++i) {
    const GroupElement& g = embedded[i];
    double lb = std::abs(g.f1.trace() - 2.0) / 2.0;
    if (g.group == AmbientGroup::SL2RxSL2R)
      lb = std::max(lb, std::abs(g.f2.trace() - 2.0) / 2.0);
    conj_lb[i] = lb;
  }
  by_lb.resize(elems.size());
  for (std::size_t i = 0; i < elems.size(); ++i) by_lb[i] = static_cast<std::uint32_t>(i);
  std::sort(by_lb.begin(), by_lb.end(),
            [&](std::uint32_t a, std::uint32_t b) { return conj_lb[a] < conj_lb[b]; });
}

EnumerateResult enumerate_lattice(LatticeId id, int word_length, std::size_t max_elems) {
  EnumerateResult res;
  if (word_length > 14) {
    res.error = "CapExceeded";
    return res;
  }
  std::map<LatticeElement, int> seen;
  std::deque<LatticeElement> frontier;
  LatticeElement e = lat_identity(id);
  seen[e] = 0;
  frontier.push_back(e);
  std::vector<LatticeElement> gens = lat_generators(id);
  if (id == LatticeId::CompactStub) gens.clear();
  for (int depth = 1; depth <= word_length; ++depth) {
    std::deque<LatticeElement> next;
    for (const LatticeElement& cur : frontier) {
      for (const LatticeElement& g : gens) {
        LatticeElement prod = lat_mul(id, cur, g);
        if (seen.emplace(prod, depth).second) {
          next.push_back(prod);
          if (seen.size() > max_elems) {
            res.error = "CapExceeded";
            return res;
          }
        }
      }
    }
    frontier.swap(next);
  }
  res.ok = true;
  res.cache.lattice = id;
  res.cache.depth = word_length;
  res.cache.elems.reserve(seen.size());
  for (auto& [elem, wl] : seen) {
    res.cache.elems.push_back(elem);
    res.cache.word_length.push_back(wl);
  }
  res.cache.embedded.reserve(res.cache.elems.size());
  for (const auto& elem : res.cache.elems) res.cache.embedded.push_back(lat_embed(id, elem));
  res.cache.build_index();
  return res;
}

std::string cache_to_string(const LatticeCache& cache) {
  std::ostringstream os;
  os << "lattice=" << lattice_name(cache.lattice) << " depth=" << cache.depth
     << " count=" << cache.elems.size() << "\n";
  for (std::size_t i = 0; i < cache.elems.size(); ++i) {
    const auto& c = cache.elems[i].c;
    for (int k = 0; k < 8; ++k) os << c[k] << (k == 7 ? "" : " ");
    os << "\n";
  }
  return os.str();
}

bool cache_from_string(const std::string& text, LatticeCache& out) {
  std::istringstream is(text);
  std::string header;
  if (!std::getline(is, header)) return false;
  char name[64];
  int depth = 0;
  long long count = 0;
  if (std::sscanf(header.c_str(), "lattice=%63s depth=%d count=%lld", name, &depth, &count) != 3)
    return false;
  std::string n(name);
  if (n == "SL2_GaussianIntegers") out.lattice = LatticeId::SL2_GaussianIntegers;
  else if (n == "SL2Z_x_SL2Z") out.lattice = LatticeId::SL2Z_x_SL2Z;
  else if (n == "SL2_ZSqrt2") out.lattice = LatticeId::SL2_ZSqrt2;
  else out.lattice = LatticeId::CompactStub;
  out.depth = depth;
  out.elems.clear();
  out.elems.reserve(count);
  for (long long i = 0; i < count; ++i) {
    LatticeElement e;
    for (int k = 0; k < 8; ++k)
      if (!(is >> e.c[k])) return false;
    out.elems.push_back(e);
  }
  // word lengths are not stored; recover the boundary flag conservatively
  out.word_length.assign(out.elems.size(), out.depth);
  out.embedded.clear();
  out.embedded.reserve(out.elems.size());
  for (const auto& e : out.elems) out.embedded.push_back(lat_embed(out.lattice, e));
  out.build_index();
  return true;
}

bool save_cache(const LatticeCache& cache, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) return false;
  f << cache_to_string(cache);
  return static_cast<bool>(f);
}

bool load_cache(const std::string& path, LatticeCache& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  std::stringstream ss;
  ss << f.rdbuf();
  return cache_from_string(ss.str(), out);
}

LatticeCache cached_lattice(LatticeId id, int depth, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string path = dir + "/" + lattice_name(id) + "_d" + std::to_string(depth) + ".cache";
  LatticeCache cache;
  if (load_cache(path, cache) && cache.lattice == id && cache.depth == depth) return cache;
  EnumerateResult res = enumerate_lattice(id, depth);
  if (!res.ok) return cache;
  save_cache(res.cache, path);
  return res.cache;
}

// ----- fundamental-domain reduction --------------------------------------

namespace {

QuotientPoint reduce_gaussian(const GroupElement& g, int max_iter) {
  QuotientPoint out{g, LatticeId::SL2_GaussianIntegers, false, 0.0};
  const LatticeId id = LatticeId::SL2_GaussianIntegers;
  GroupElement ginv = inverse(g);
  H3Point q = act_h3(ginv.f1, H3Point{cplx(0, 0), 1.0});
  LatticeElement delta = lat_identity(id);
  const LatticeElement S = quad_mat(0, 0, -1, 0, 1, 0, 0, 0);
  const LatticeElement L = quad_mat(0, 1, 0, 0, 0, 0, 0, -1);
  const double tol = 1e-13;
  int it = 0;
  for (; it < max_iter; ++it) {
    i64 a = iround(q.z.real()), b = iround(q.z.imag());
    if (a != 0 || b != 0) {
      LatticeElement tr = quad_mat(1, 0, -a, -b, 0, 0, 1, 0);
      q.z -= cplx(static_cast<double>(a), static_cast<double>(b));
      delta = lat_mul(id, tr, delta);
      continue;
    }
    if (std::norm(q.z) + q.t * q.t < 1.0 - tol) {
      q = act_h3(lat_embed(id, S).f1, q);
      delta = lat_mul(id, S, delta);
      continue;
    }
    if (q.z.imag() < -tol) {
      q.z = -q.z;  // L = diag(i,-i) acts by z -> -z
      delta = lat_mul(id, L, delta);
      continue;
    }
    break;
  }
  out.rep = mul(g, lat_embed(id, lat_inverse(id, delta)));
  out.reduced = it < max_iter;
  // drift between the tracked point and the one recomputed from the result
  H3Point check = act_h3(inverse(out.rep).f1, H3Point{cplx(0, 0), 1.0});
  out.reduction_quality = std::abs(check.z - q.z) + std::abs(check.t - q.t);
  return out;
}

// reduce one SL2(Z) factor acting on H^2; writes the net lattice word into
// the given 2x2 integer matrix
std::array<i64, 4> reduce_modular_factor(cplx& z, int max_iter, bool& done) {
  std::array<i64, 4> delta{1, 0, 0, 1};
  auto lmul = [&](std::array<i64, 4> m) { delta = imul(m, delta); };
  int it = 0;
  const double tol = 1e-13;
  for (; it < max_iter; ++it) {
    i64 a = iround(z.real());
    if (a != 0) {
      lmul({1, -a, 0, 1});
      z -= static_cast<double>(a);
      continue;
    }
    if (std::norm(z) < 1.0 - tol) {
      lmul({0, -1, 1, 0});
      z = -1.0 / z;
      continue;
    }
    break;
  }
  done = it < max_iter;
  return delta;
}

QuotientPoint reduce_product(const GroupElement& g, int max_iter) {
  QuotientPoint out{g, LatticeId::SL2Z_x_SL2Z, false, 0.0};
  const LatticeId id = LatticeId::SL2Z_x_SL2Z;
  GroupElement ginv = inverse(g);
  cplx z1 = act_h2(ginv.f1.real(), cplx(0, 1));
  cplx z2 = act_h2(ginv.f2.real(), cplx(0, 1));
  bool d1 = false, d2 = false;
  std::array<i64, 4> m1 = reduce_modular_factor(z1, max_iter, d1);
  std::array<i64, 4> m2 = reduce_modular_factor(z2, max_iter, d2);
  LatticeElement delta = int_pair_mat(m1, m2);
  out.rep = mul(g, lat_embed(id, lat_inverse(id, delta)));
  out.reduced = d1 && d2;
  cplx c1 = act_h2(inverse(out.rep).f1.real(), cplx(0, 1));
  cplx c2 = act_h2(inverse(out.rep).f2.real(), cplx(0, 1));
  out.reduction_quality = std::abs(c1 - z1) + std::abs(c2 - z2);
  return out;
}

QuotientPoint reduce_zsqrt2(const GroupElement& g, int max_iter) {
  QuotientPoint out{g, LatticeId::SL2_ZSqrt2, false, 0.0};
  const LatticeId id = LatticeId::SL2_ZSqrt2;
  const double s2 = std::sqrt(2.0);
  const double logu = std::log(1.0 + s2);
  GroupElement ginv = inverse(g);
  cplx z1 = act_h2(ginv.f1.real(), cplx(0, 1));
  cplx z2 = act_h2(ginv.f2.real(), cplx(0, 1));
  LatticeElement delta = lat_identity(id);
  const LatticeElement S = quad_mat(0, 0, -1, 0, 1, 0, 0, 0);
  const LatticeElement E = quad_mat(1, 1, 0, 0, 0, 0, -1, 1);
  const double tol = 1e-12;
  int it = 0;
  for (; it < max_iter; ++it) {
    // balance the two heights with the unit diagonal
    i64 k = iround(std::log(z2.imag() / z1.imag()) / (4.0 * logu));
    if (k != 0) {
      LatticeElement Ek = lat_identity(id);
      LatticeElement base = k > 0 ? E : lat_inverse(id, E);
      for (i64 j = 0; j < std::llabs(k); ++j) Ek = lat_mul(id, base, Ek);
      GroupElement ge = lat_embed(id, Ek);
      z1 = act_h2(ge.f1.real(), z1);
      z2 = act_h2(ge.f2.real(), z2);
      delta = lat_mul(id, Ek, delta);
      continue;
    }
    // simultaneous translation by the closest a + b sqrt2
    double r1 = z1.real(), r2 = z2.real();
    i64 a = iround((r1 + r2) / 2.0), b = iround((r1 - r2) / (2.0 * s2));
    if (a != 0 || b != 0) {
      LatticeElement tr = quad_mat(1, 0, -a, -b, 0, 0, 1, 0);
      z1 -= static_cast<double>(a) + static_cast<double>(b) * s2;
      z2 -= static_cast<double>(a) - static_cast<double>(b) * s2;
      delta = lat_mul(id, tr, delta);
      continue;
    }
    if (std::norm(z1) * std::norm(z2) < 1.0 - tol) {
      z1 = -1.0 / z1;
      z2 = -1.0 / z2;
      delta = lat_mul(id, S, delta);
      continue;
    }
    break;
  }
  out.rep = mul(g, lat_embed(id, lat_inverse(id, delta)));
  out.reduced = false;  // best-effort only
  out.reduction_quality = std::max(0.0, 1.0 - std::norm(z1) * std::norm(z2));
  return out;
}

}  // namespace

QuotientPoint reduce_point(const GroupElement& g, LatticeId lat, int max_iter) {
  switch (lat) {
    case LatticeId::SL2_GaussianIntegers: return reduce_gaussian(g, max_iter);
    case LatticeId::SL2Z_x_SL2Z: return reduce_product(g, max_iter);
    case LatticeId::SL2_ZSqrt2: return reduce_zsqrt2(g, max_iter);
    default: return QuotientPoint{g, lat, true, 0.0};
  }
}

double symmetric_space_height(const QuotientPoint& x) {
  GroupElement ginv = inverse(x.rep);
  if (x.lattice == LatticeId::SL2_GaussianIntegers)
    return act_h3(ginv.f1, H3Point{cplx(0, 0), 1.0}).t;
  double h1 = act_h2(ginv.f1.real(), cplx(0, 1)).imag();
  if (x.lattice == LatticeId::CompactStub) return h1;
  double h2 = act_h2(ginv.f2.real(), cplx(0, 1)).imag();
  return std::min(h1, h2);
}

InjResult injectivity_radius(const QuotientPoint& x, const LatticeCache& cache) {
  InjResult out;
  if (x.lattice == LatticeId::CompactStub) return out;
  GroupElement ginv = inverse(x.rep);
  double best = 1e300;
  std::size_t best_i = 0;
  for (std::uint32_t idx : cache.by_lb) {
    if (cache.conj_lb[idx] >= best) break;  // trace bound: no smaller value ahead
    if (lat_is_pm_identity(cache.elems[idx], cache.lattice)) continue;
    GroupElement conj = mul(mul(x.rep, cache.embedded[idx]), ginv);
    double d = gdist_id(conj);
    if (d < best) {
      best = d;
      best_i = idx;
    }
  }
  if (best == 1e300) return out;
  out.value = std::min(0.01, calib::kInjScale * best);
  out.cache_boundary = cache.word_length[best_i] >= cache.depth;
  return out;
}

namespace {

// || Ad(m) E12 || = max(|a|, |c|)^2 for m = (a,b;c,d)
double ad_e12_norm(const Mat2c& m) {
  double v = std::max(std::abs(m(0, 0)), std::abs(m(1, 0)));
  return v * v;
}

}  // namespace

OmegaResult omega(const QuotientPoint& x, const LatticeCache& cache) {
  OmegaResult out;
  if (x.lattice == LatticeId::CompactStub) return out;
  double best = 0.0;
  std::size_t best_i = 0;
  const double s2 = std::sqrt(2.0);
  for (std::size_t i = 0; i < cache.size(); ++i) {
    GroupElement m = mul(x.rep, cache.embedded[i]);
    double val = 0.0;
    switch (x.lattice) {
      case LatticeId::SL2_GaussianIntegers:
        val = 1.0 / ad_e12_norm(m.f1);
        break;
      case LatticeId::SL2Z_x_SL2Z:
        val = std::max(1.0 / ad_e12_norm(m.f1), 1.0 / ad_e12_norm(m.f2));
        break;
      default:  // irreducible: wedge of the two factor vectors
        val = 1.0 / (2.0 * s2 * ad_e12_norm(m.f1) * ad_e12_norm(m.f2));
        break;
    }
    if (val > best) {
      best = val;
      best_i = i;
    }
  }
  out.value = std::max(2.0, best);
  out.cache_boundary = best > 2.0 && cache.word_length[best_i] >= cache.depth;
  return out;
}

DistanceResult distance_X(const QuotientPoint& x, const QuotientPoint& y,
                          const LatticeCache& cache) {
  DistanceResult out;
  double best = 1e300;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    const GroupElement& ge = cache.embedded[i];
    double d = std::min(gdist(x.rep, mul(y.rep, ge)), gdist(mul(x.rep, ge), y.rep));
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  out.value = best;
  out.cache_boundary = cache.word_length[best_i] >= cache.depth;
  return out;
}

double recurrence_fraction(const QuotientPoint& x, double t, double i_lo, double i_hi,
                           double eps, int samples, std::uint64_t seed,
                           const LatticeCache& cache) {
  Rng rng = Rng::stream(seed, 0xACC0);
  int hits = 0;
  AmbientGroup gr = x.rep.group;
  for (int k = 0; k < samples; ++k) {
    double r = rng.uniform(i_lo, i_hi);
    GroupElement g = mul(mul(a_elem(gr, t), u_elem(gr, r)), x.rep);
    QuotientPoint p = reduce_point(g, x.lattice);
    if (injectivity_radius(p, cache).value < eps * eps) ++hits;
  }
  return static_cast<double>(hits) / samples;
}

double fraction_in_X_eta(const QuotientPoint& x, double t, double i_lo, double i_hi,
                         double eta, int samples, std::uint64_t seed,
                         const LatticeCache& cache) {
  Rng rng = Rng::stream(seed, 0xE7A0);
  int hits = 0;
  AmbientGroup gr = x.rep.group;
  for (int k = 0; k < samples; ++k) {
    double r = rng.uniform(i_lo, i_hi);
    GroupElement g = mul(mul(a_elem(gr, t), u_elem(gr, r)), x.rep);
    QuotientPoint p = reduce_point(g, x.lattice);
    if (injectivity_radius(p, cache).value >= eta) ++hits;
  }
  return static_cast<double>(hits) / samples;
}

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

Mat2 coord_basis(int k) {
  Mat2 m = Mat2::Zero();
  if (k == 0) m(0, 1) = 1;       // E12
  else if (k == 1) m(1, 0) = 1;  // E21
  else {                          // diag(1,-1)
    m(0, 0) = 1;
    m(1, 1) = -1;
  }
  return m;
}

Eigen::Matrix<double, 6, 1> lie_coords(const LieVector& w) {
  Eigen::Matrix<double, 6, 1> v;
  v << w.h(0, 1), w.h(1, 0), w.h(0, 0), w.r(0, 1), w.r(1, 0), w.r(0, 0);
  return v;
}

Mat6 ad_matrix(const GroupElement& g) {
  Mat6 A;
  for (int k = 0; k < 6; ++k) {
    LieVector b = (k < 3) ? lie_h(g.group, coord_basis(k)) : lie_r(g.group, coord_basis(k - 3));
    A.col(k) = lie_coords(adjoint(g, b));
  }
  return A;
}

// coordinates of wedge^3 of the three columns: all 3x3 row minors
Eigen::Matrix<double, 20, 1> triple_minors(const Mat63& B) {
  Eigen::Matrix<double, 20, 1> out;
  int idx = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      for (int k = j + 1; k < 6; ++k) {
        Eigen::Matrix3d m;
        m.row(0) = B.row(i);
        m.row(1) = B.row(j);
        m.row(2) = B.row(k);
        out(idx++) = m.determinant();
      }
  return out;
}

}  // namespace

StabilizerReport near_stabilizer_search(const QuotientPoint& x, double tol,
                                        const LatticeCache& cache) {
  StabilizerReport rep;
  if (x.lattice == LatticeId::CompactStub) return rep;
  Mat6 Aginv = ad_matrix(inverse(x.rep));
  Mat63 B = Aginv.leftCols<3>();
  Eigen::Matrix<double, 20, 1> base = triple_minors(B);
  std::map<LatticeElement, double> dedup;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    if (lat_is_pm_identity(cache.elems[i], cache.lattice)) continue;
    // Ad kills the center: canonicalize the sign
    LatticeElement key = cache.elems[i];
    LatticeElement neg = lat_neg(key);
    if (neg < key) key = neg;
    if (dedup.count(key)) continue;
    Mat63 Bg = ad_matrix(cache.embedded[i]) * B;
    double res = (triple_minors(Bg) - base).cwiseAbs().maxCoeff();
    if (res <= tol) dedup[key] = res;
  }
  for (auto& [elem, res] : dedup) rep.hits.push_back(StabilizerHit{elem, res});
  std::sort(rep.hits.begin(), rep.hits.end(),
            [](const StabilizerHit& a, const StabilizerHit& b) { return a.residual < b.residual; });
  for (std::size_t i = 0; i < rep.hits.size() && !rep.periodic_flag; ++i)
    for (std::size_t j = i + 1; j < rep.hits.size(); ++j)
      if (!lat_commute(x.lattice, rep.hits[i].gamma, rep.hits[j].gamma)) {
        rep.periodic_flag = true;
        break;
      }
  return rep;
}

}  // namespace orbitlab
