#ifndef ORBITLAB_LATTICE_HPP
#define ORBITLAB_LATTICE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "orbitlab/lie.hpp"

namespace orbitlab {

// The three built-in arithmetic lattices, plus a trivial stub standing in
// for a cocompact quotient in tests.
enum class LatticeId { SL2_GaussianIntegers, SL2Z_x_SL2Z, SL2_ZSqrt2, CompactStub };

std::string lattice_name(LatticeId id);
AmbientGroup lattice_group(LatticeId id);

// One lattice element with exact integer coordinates.
//   Gaussian:  entry_k = c[2k] + c[2k+1] i          (k = 0..3 row major)
//   ZSqrt2:    entry_k = c[2k] + c[2k+1] sqrt(2)
//   SL2Z^2:    first matrix c[0..3], second c[4..7]
struct LatticeElement {
  std::array<std::int64_t, 8> c{};
  bool operator==(const LatticeElement&) const = default;
  bool operator<(const LatticeElement& o) const { return c < o.c; }
};

LatticeElement lat_identity(LatticeId id);
LatticeElement lat_mul(LatticeId id, const LatticeElement& a, const LatticeElement& b);
LatticeElement lat_inverse(LatticeId id, const LatticeElement& a);
LatticeElement lat_neg(const LatticeElement& a);
bool lat_is_identity(const LatticeElement& a, LatticeId id);
bool lat_is_pm_identity(const LatticeElement& a, LatticeId id);
bool lat_commute(LatticeId id, const LatticeElement& a, const LatticeElement& b);
GroupElement lat_embed(LatticeId id, const LatticeElement& a);
std::vector<LatticeElement> lat_generators(LatticeId id);  // closed under inverse

struct LatticeCache {
  LatticeId lattice = LatticeId::CompactStub;
  int depth = 0;
  std::vector<LatticeElement> elems;   // sorted lexicographically
  std::vector<int> word_length;       // aligned with elems
  std::vector<GroupElement> embedded;  // aligned with elems
  // conjugation-invariant lower bound |tr - 2|/2 per element, and the scan
  // order it induces; lets displacement minimizations exit early
  std::vector<double> conj_lb;
  std::vector<std::uint32_t> by_lb;

  std::size_t size() const { return elems.size(); }
  void build_index();
};

struct EnumerateResult {
  bool ok = false;
  std::string error;  // "CapExceeded" etc.
  LatticeCache cache;
};

// BFS over the generators with exact-entry dedup; monotone in word_length.
EnumerateResult enumerate_lattice(LatticeId id, int word_length, std::size_t max_elems = 2'000'000);

// Bit-exact cache file: header `lattice=<id> depth=<n> count=<m>`, then one
// element per line as 8 space separated integers, sorted lexicographically.
std::string cache_to_string(const LatticeCache& cache);
bool cache_from_string(const std::string& text, LatticeCache& out);
bool save_cache(const LatticeCache& cache, const std::string& path);
bool load_cache(const std::string& path, LatticeCache& out);
// loads, or builds and saves, the cache for (id, depth) under dir
LatticeCache cached_lattice(LatticeId id, int depth, const std::string& dir);

struct QuotientPoint {
  GroupElement rep;
  LatticeId lattice = LatticeId::CompactStub;
  bool reduced = false;
  double reduction_quality = 0.0;  // residual diagnostic; 0 is best
};

// Fundamental-domain reduction of the coset g Gamma.  Exact (up to floating
// error in the representative) for the Gaussian and SL2(Z)^2 lattices;
// best-effort LLL-style balancing for Z[sqrt 2], always flagged unreduced.
QuotientPoint reduce_point(const GroupElement& g, LatticeId lat, int max_iter = 400);

// t-coordinate of the reduced symmetric-space point (height above the floor
// of the fundamental domain); used in tests of the domain inequalities
double symmetric_space_height(const QuotientPoint& x);

struct InjResult {
  double value = 0.01;
  bool cache_boundary = false;  // minimizing gamma touched the cache shell
};

// Conjugation-displacement proxy for the box injectivity radius:
// min(0.01, c_inj * min_{gamma != +-e} ||g gamma g^{-1} - I||).
InjResult injectivity_radius(const QuotientPoint& x, const LatticeCache& cache);

struct OmegaResult {
  double value = 2.0;
  bool cache_boundary = false;
};

// Height function from lattice-orbit vector norms (floored at 2).
OmegaResult omega(const QuotientPoint& x, const LatticeCache& cache);

struct DistanceResult {
  double value = 0.0;
  bool cache_boundary = false;
};

// min over cached gamma of the bi-chart matrix distance; upper bound on the
// true quotient distance, exact when the minimizer is interior to the cache.
DistanceResult distance_X(const QuotientPoint& x, const QuotientPoint& y,
                          const LatticeCache& cache);

// Monte Carlo fraction of r in I with inj(a_t u_r x) < eps^2.
double recurrence_fraction(const QuotientPoint& x, double t, double i_lo, double i_hi,
                           double eps, int samples, std::uint64_t seed,
                           const LatticeCache& cache);

// fraction of r in I with a_t u_r x in X_eta
double fraction_in_X_eta(const QuotientPoint& x, double t, double i_lo, double i_hi,
                         double eta, int samples, std::uint64_t seed,
                         const LatticeCache& cache);

struct StabilizerHit {
  LatticeElement gamma;
  double residual = 0.0;
};

struct StabilizerReport {
  std::vector<StabilizerHit> hits;  // sorted by residual, excludes +-e
  bool periodic_flag = false;       // two non-commuting hits
};

// All cached gamma moving the wedge^3(h) vector of the chart of x by at most
// tol; two non-commuting hits flag a candidate periodic H-orbit.
StabilizerReport near_stabilizer_search(const QuotientPoint& x, double tol,
                                        const LatticeCache& cache);

}  // namespace orbitlab

#endif
