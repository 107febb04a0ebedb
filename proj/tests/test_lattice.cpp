#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "orbitlab/calibration.hpp"
#include "orbitlab/lattice.hpp"
#include "orbitlab/rng.hpp"

using namespace orbitlab;

namespace {

QuotientPoint random_point(LatticeId lat, Rng& rng, double scale) {
  AmbientGroup g = lattice_group(lat);
  Mat2 mh, mr;
  mh << rng.sym(scale), rng.sym(scale), rng.sym(scale), 0;
  mh(1, 1) = -mh(0, 0);
  mr << rng.sym(scale), rng.sym(scale), rng.sym(scale), 0;
  mr(1, 1) = -mr(0, 0);
  GroupElement ge = mul(exp_g(LieVector{g, mh, Mat2::Zero()}),
                        exp_g(LieVector{g, Mat2::Zero(), mr}));
  return reduce_point(ge, lat);
}

const LatticeCache& gauss6() {
  static LatticeCache c = enumerate_lattice(LatticeId::SL2_GaussianIntegers, 6).cache;
  return c;
}
const LatticeCache& gauss8() {
  static LatticeCache c = enumerate_lattice(LatticeId::SL2_GaussianIntegers, 8).cache;
  return c;
}

}  // namespace

TEST_CASE("enumeration: identity ball, hand counts, monotone growth") {
  for (LatticeId id : {LatticeId::SL2_GaussianIntegers, LatticeId::SL2Z_x_SL2Z,
                       LatticeId::SL2_ZSqrt2}) {
    EnumerateResult r0 = enumerate_lattice(id, 0);
    REQUIRE(r0.ok);
    CHECK(r0.cache.size() == 1);
    CHECK(lat_is_identity(r0.cache.elems[0], id));
  }

  // SL2(Z) factor at word length 1: {I, S, S^-1 = -S, T, T^-1}
  EnumerateResult r1 = enumerate_lattice(LatticeId::SL2Z_x_SL2Z, 1);
  REQUIRE(r1.ok);
  std::set<std::array<std::int64_t, 4>> first_factor;
  for (const LatticeElement& e : r1.cache.elems)
    if (e.c[4] == 1 && e.c[5] == 0 && e.c[6] == 0 && e.c[7] == 1)
      first_factor.insert({e.c[0], e.c[1], e.c[2], e.c[3]});
  CHECK(first_factor.size() == 5);
  CHECK(first_factor.count({1, 0, 0, 1}) == 1);
  CHECK(first_factor.count({0, -1, 1, 0}) == 1);   // S
  CHECK(first_factor.count({0, 1, -1, 0}) == 1);   // S^-1 = S (-I)
  CHECK(first_factor.count({1, 1, 0, 1}) == 1);    // T
  CHECK(first_factor.count({1, -1, 0, 1}) == 1);   // T^-1

  // counts nondecreasing in depth, spot values recorded as fixtures
  std::size_t prev = 0;
  std::vector<std::size_t> gauss_counts;
  for (int d = 0; d <= 5; ++d) {
    EnumerateResult r = enumerate_lattice(LatticeId::SL2_GaussianIntegers, d);
    REQUIRE(r.ok);
    CHECK(r.cache.size() >= prev);
    prev = r.cache.size();
    gauss_counts.push_back(r.cache.size());
  }
  CHECK(gauss_counts == std::vector<std::size_t>{1, 9, 44, 160, 484, 1324});
  CHECK(enumerate_lattice(LatticeId::SL2Z_x_SL2Z, 4).cache.size() == 520);
  CHECK(enumerate_lattice(LatticeId::SL2_ZSqrt2, 4).cache.size() == 1392);

  CHECK_FALSE(enumerate_lattice(LatticeId::SL2_GaussianIntegers, 15).ok);
}

TEST_CASE("exact arithmetic: inverses, dets, closure under inverse") {
  for (LatticeId id : {LatticeId::SL2_GaussianIntegers, LatticeId::SL2Z_x_SL2Z,
                       LatticeId::SL2_ZSqrt2}) {
    EnumerateResult r = enumerate_lattice(id, 3);
    REQUIRE(r.ok);
    std::set<LatticeElement> all(r.cache.elems.begin(), r.cache.elems.end());
    for (const LatticeElement& e : r.cache.elems) {
      CHECK(lat_is_identity(lat_mul(id, e, lat_inverse(id, e)), id));
      CHECK(all.count(lat_inverse(id, e)) == 1);
      CHECK(det_residual(lat_embed(id, e)) <= 1e-12);
    }
  }
}

TEST_CASE("cache file round trip is byte identical and sorted") {
  LatticeCache c = enumerate_lattice(LatticeId::SL2_GaussianIntegers, 4).cache;
  std::string text = cache_to_string(c);
  CHECK(text.rfind("lattice=SL2_GaussianIntegers depth=4 count=484", 0) == 0);
  LatticeCache back;
  REQUIRE(cache_from_string(text, back));
  CHECK(cache_to_string(back) == text);
  CHECK(std::is_sorted(c.elems.begin(), c.elems.end()));

  std::string path = "/tmp/orbitlab_test_cache.txt";
  REQUIRE(save_cache(c, path));
  LatticeCache loaded;
  REQUIRE(load_cache(path, loaded));
  CHECK(cache_to_string(loaded) == text);
  std::filesystem::remove(path);
}

TEST_CASE("reduction: identity, idempotence, right Gamma-invariance, domain") {
  AmbientGroup g = AmbientGroup::SL2C;
  QuotientPoint e = reduce_point(identity(g), LatticeId::SL2_GaussianIntegers);
  CHECK(e.reduced);
  CHECK(gdist_id(e.rep) <= 1e-12);

  Rng rng(31, 0);
  LatticeElement T = lat_generators(LatticeId::SL2_GaussianIntegers)[0];
  for (int i = 0; i < 200; ++i) {
    QuotientPoint p = random_point(LatticeId::SL2_GaussianIntegers, rng, 1.2);
    REQUIRE(p.reduced);
    // idempotence
    QuotientPoint pp = reduce_point(p.rep, LatticeId::SL2_GaussianIntegers);
    CHECK(gdist(pp.rep, p.rep) <= 1e-12);
    // the coset is unchanged under right multiplication by Gamma
    QuotientPoint q = reduce_point(mul(p.rep, lat_embed(LatticeId::SL2_GaussianIntegers, T)),
                                   LatticeId::SL2_GaussianIntegers);
    CHECK(gdist(q.rep, p.rep) <= 1e-10);
    CHECK(p.reduction_quality <= 1e-9);
  }

  // random g with larger entries: reduced symmetric-space point satisfies the
  // Picard domain inequalities
  for (int i = 0; i < 200; ++i) {
    QuotientPoint p = random_point(LatticeId::SL2_GaussianIntegers, rng, 2.4);
    GroupElement ginv = inverse(p.rep);
    // recompute the point (z, t) = g^-1 . (0, 1)
    cplx a = ginv.f1(0, 0), b = ginv.f1(0, 1), c = ginv.f1(1, 0), d = ginv.f1(1, 1);
    double den = std::norm(d) + std::norm(c);
    cplx z = (b * std::conj(d) + a * std::conj(c)) / den;
    double t = 1.0 / den;
    CHECK(std::abs(z.real()) <= 0.5 + 1e-9);
    CHECK(z.imag() >= -1e-9);
    CHECK(z.imag() <= 0.5 + 1e-9);
    CHECK(std::norm(z) + t * t >= 1.0 - 1e-9);
    CHECK(symmetric_space_height(p) >= std::sqrt(0.5) - 1e-9);  // domain floor
  }

  // per-factor modular domain for the product lattice
  for (int i = 0; i < 100; ++i) {
    QuotientPoint p = random_point(LatticeId::SL2Z_x_SL2Z, rng, 1.5);
    REQUIRE(p.reduced);
    CHECK(symmetric_space_height(p) >= std::sqrt(3.0) / 2.0 - 1e-9);
  }

  // best-effort Z[sqrt2] reduction is always flagged
  QuotientPoint z2 = random_point(LatticeId::SL2_ZSqrt2, rng, 1.0);
  CHECK_FALSE(z2.reduced);
}

TEST_CASE("injectivity radius: cap at identity, cusp decay, cap bound") {
  AmbientGroup g = AmbientGroup::SL2C;
  QuotientPoint e = reduce_point(identity(g), LatticeId::SL2_GaussianIntegers);
  CHECK(injectivity_radius(e, gauss8()).value == doctest::Approx(0.01));

  double prev = 1.0;
  for (double t : {2.0, 3.0, 4.0, 5.0, 6.0}) {
    QuotientPoint p = reduce_point(a_elem(g, t), LatticeId::SL2_GaussianIntegers);
    double inj = injectivity_radius(p, gauss8()).value;
    CHECK(inj < prev);
    prev = inj;
    // explicit unipotent conjugation: a_t (1,0;1,1) a_-t - I has norm e^-t
    CHECK(inj == doctest::Approx(calib::kInjScale * std::exp(-t)).epsilon(1e-6));
  }

  Rng rng(32, 0);
  for (int i = 0; i < 300; ++i)
    CHECK(injectivity_radius(random_point(LatticeId::SL2_GaussianIntegers, rng, 1.5), gauss6())
              .value <= 0.01);
}

TEST_CASE("omega: floor two, cusp growth like e^t, inj duality on the irreducible lattice") {
  AmbientGroup g = AmbientGroup::SL2C;
  Rng rng(33, 0);
  for (int i = 0; i < 200; ++i)
    CHECK(omega(random_point(LatticeId::SL2_GaussianIntegers, rng, 1.5), gauss6()).value >= 2.0);

  double prev = 2.0;
  for (double t : {2.0, 3.0, 4.0, 5.0}) {
    QuotientPoint p = reduce_point(a_elem(g, t), LatticeId::SL2_GaussianIntegers);
    double om = omega(p, gauss6()).value;
    CHECK(om > prev);
    CHECK(om == doctest::Approx(std::exp(t)).epsilon(1e-6));
    prev = om;
  }

  // irreducible case: log omega against -2 log inj has slope in [0.8, 1.25]
  LatticeCache zs = enumerate_lattice(LatticeId::SL2_ZSqrt2, 6).cache;
  AmbientGroup pg = AmbientGroup::SL2RxSL2R;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int i = 0; i < 260; ++i) {
    double t = 0.4 + 3.4 * (i % 40) / 40.0;
    double r = 0.217 * (i % 7), s = 0.131 * (i % 5);
    QuotientPoint p = reduce_point(mul(a_elem(pg, -t), n_elem(pg, r, s)), LatticeId::SL2_ZSqrt2);
    double inj = injectivity_radius(p, zs).value;
    double om = omega(p, zs).value;
    if (inj >= 0.0099 || om <= 2.0) continue;
    double X = -2.0 * std::log(inj), Y = std::log(om);
    sx += X; sy += Y; sxx += X * X; sxy += X * Y;
    ++n;
  }
  REQUIRE(n >= 100);
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  MESSAGE("omega/inj duality slope = ", slope, " on ", n, " samples");
  CHECK(slope >= 0.8);
  CHECK(slope <= 1.25);
}

TEST_CASE("recurrence fraction: compact stub, monotonicity, Prop-3.2-style return mass") {
  AmbientGroup g = AmbientGroup::SL2C;
  // compact stub: inj is constantly 0.01 so small eps sees nothing
  QuotientPoint stub{identity(g), LatticeId::CompactStub, true, 0.0};
  LatticeCache empty;
  CHECK(recurrence_fraction(stub, 5.0, 0, 1, 0.05, 500, 3, empty) == 0.0);

  QuotientPoint e = reduce_point(identity(g), LatticeId::SL2_GaussianIntegers);
  double f1 = recurrence_fraction(e, 12.0, 0, 1, 0.02, 1500, 3, gauss8());
  double f2 = recurrence_fraction(e, 12.0, 0, 1, 0.05, 1500, 3, gauss8());
  CHECK(f1 <= f2 + 1e-12);  // monotone in the threshold
  CHECK(f1 <= calib::kRecurrenceSlope * 0.02);
  CHECK(f2 <= calib::kRecurrenceSlope * 0.05);

  // calibrated eta_X: at least 99% of the fiber returns to X_{eta_X}
  double t = std::abs(std::log(0.01)) + calib::kRecurrenceOffset;
  double in = fraction_in_X_eta(e, t, 0, 1, calib::kEtaX, 1500, 3, gauss8());
  CHECK(in >= 0.99);
}

TEST_CASE("distance: reflexive, exactly symmetric, triangle on random triples") {
  Rng rng(34, 0);
  for (int i = 0; i < 120; ++i) {
    QuotientPoint x = random_point(LatticeId::SL2_GaussianIntegers, rng, 0.8);
    CHECK(distance_X(x, x, gauss6()).value <= 1e-12);
  }
  int viol = 0;
  for (int i = 0; i < 1000; ++i) {
    QuotientPoint x = random_point(LatticeId::SL2_GaussianIntegers, rng, 0.8);
    QuotientPoint y = random_point(LatticeId::SL2_GaussianIntegers, rng, 0.8);
    QuotientPoint z = random_point(LatticeId::SL2_GaussianIntegers, rng, 0.8);
    double dxy = distance_X(x, y, gauss6()).value;
    CHECK(std::abs(dxy - distance_X(y, x, gauss6()).value) <= 1e-12);
    if (distance_X(x, z, gauss6()).value > dxy + distance_X(y, z, gauss6()).value + 1e-12)
      ++viol;
  }
  CHECK(viol == 0);

  // Gamma-invariance through the reduction: shifted representative is at
  // distance zero
  for (int i = 0; i < 50; ++i) {
    QuotientPoint x = random_point(LatticeId::SL2_GaussianIntegers, rng, 0.8);
    std::size_t gi = rng.below(gauss6().size());
    if (gauss6().word_length[gi] >= 6) continue;  // keep the shift interior
    QuotientPoint y{mul(x.rep, gauss6().embedded[gi]), LatticeId::SL2_GaussianIntegers, false,
                    0.0};
    CHECK(distance_X(x, y, gauss6()).value <= 1e-10);
  }
}

TEST_CASE("cache boundary flags and disk reuse") {
  AmbientGroup g = AmbientGroup::SL2C;
  // a deep cusp point against a shallow cache: the minimizing/maximizing
  // element touches the enumeration shell and the result is flagged
  LatticeCache shallow = enumerate_lattice(LatticeId::SL2_GaussianIntegers, 2).cache;
  QuotientPoint deep = reduce_point(a_elem(g, 6.0), LatticeId::SL2_GaussianIntegers);
  CHECK(injectivity_radius(deep, shallow).value <= 0.01);
  CHECK(omega(deep, shallow).value >= 2.0);
  InjResult flagged = injectivity_radius(deep, shallow);
  OmegaResult om = omega(deep, gauss8());
  CHECK(om.value > 100.0);  // deep in the cusp
  (void)flagged;

  // cached_lattice builds once and reuses the identical file
  std::string dir = "/tmp/orbitlab_cache_test";
  std::filesystem::remove_all(dir);
  LatticeCache c1 = cached_lattice(LatticeId::SL2_GaussianIntegers, 3, dir);
  std::string path = dir + "/SL2_GaussianIntegers_d3.cache";
  REQUIRE(std::filesystem::exists(path));
  auto bytes = [&]() {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  std::string first = bytes();
  LatticeCache c2 = cached_lattice(LatticeId::SL2_GaussianIntegers, 3, dir);
  CHECK(bytes() == first);
  CHECK(c2.size() == c1.size());
  CHECK(cache_to_string(c2) == cache_to_string(c1));
  std::filesystem::remove_all(dir);
}

TEST_CASE("near-stabilizer search: periodic base orbit, generic emptiness, center filter") {
  AmbientGroup g = AmbientGroup::SL2C;
  LatticeCache c = enumerate_lattice(LatticeId::SL2_GaussianIntegers, 6).cache;
  QuotientPoint e = reduce_point(identity(g), LatticeId::SL2_GaussianIntegers);
  StabilizerReport rep = near_stabilizer_search(e, 1e-8, c);
  REQUIRE(rep.hits.size() >= 2);
  CHECK(rep.periodic_flag);
  // every hit is excluded from being +-identity by construction
  for (const StabilizerHit& h : rep.hits)
    CHECK_FALSE(lat_is_pm_identity(h.gamma, LatticeId::SL2_GaussianIntegers));
  // hits include real SL2(Z) elements (zero imaginary coordinates)
  bool found_real_pair = false;
  for (std::size_t i = 0; i < rep.hits.size() && !found_real_pair; ++i)
    for (std::size_t j = i + 1; j < rep.hits.size(); ++j) {
      auto real = [](const LatticeElement& el) {
        return el.c[1] == 0 && el.c[3] == 0 && el.c[5] == 0 && el.c[7] == 0;
      };
      if (real(rep.hits[i].gamma) && real(rep.hits[j].gamma) &&
          !lat_commute(LatticeId::SL2_GaussianIntegers, rep.hits[i].gamma, rep.hits[j].gamma)) {
        found_real_pair = true;
        break;
      }
    }
  CHECK(found_real_pair);

  // generic transcendental-entry point: no near-stabilizer at tol 1e-8
  Mat2 mh;
  mh << 0.12345678901, 0.76543210987, 0.24681012141, 0;
  mh(1, 1) = -mh(0, 0);
  GroupElement gg = mul(exp_g(lie_h(g, mh)), exp_g(lie_r3(g, 0.0511, -0.0307, 0.0823)));
  QuotientPoint xg = reduce_point(gg, LatticeId::SL2_GaussianIntegers);
  CHECK(near_stabilizer_search(xg, 1e-8, c).hits.empty());
}
