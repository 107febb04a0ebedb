#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "orbitlab/lie.hpp"
#include "orbitlab/rng.hpp"

using namespace orbitlab;

namespace {

LieVector random_lie(AmbientGroup g, Rng& rng, double scale) {
  Mat2 mh, mr;
  mh << rng.sym(scale), rng.sym(scale), rng.sym(scale), 0;
  mh(1, 1) = -mh(0, 0);
  mr << rng.sym(scale), rng.sym(scale), rng.sym(scale), 0;
  mr(1, 1) = -mr(0, 0);
  return LieVector{g, mh, mr};
}

LieVector random_r(AmbientGroup g, Rng& rng, double scale) {
  LieVector w = random_lie(g, rng, scale);
  w.h.setZero();
  return w;
}

GroupElement random_group(AmbientGroup g, Rng& rng, double scale) {
  return exp_g(random_lie(g, rng, scale));
}

GroupElement random_h(AmbientGroup g, Rng& rng, double scale) {
  LieVector w = random_lie(g, rng, scale);
  w.r.setZero();
  return exp_g(w);
}

const AmbientGroup kGroups[] = {AmbientGroup::SL2C, AmbientGroup::SL2RxSL2R};

}  // namespace

TEST_CASE("a_t is a one-parameter subgroup with exact conjugation action") {
  for (AmbientGroup g : kGroups) {
    CHECK(gdist_id(a_elem(g, 0.0)) == doctest::Approx(0).epsilon(1e-15));
    CHECK(gdist_id(mul(a_elem(g, 2.0), a_elem(g, -2.0))) <= 1e-12);
    CHECK(gdist(mul(a_elem(g, 0.7), a_elem(g, 0.5)), a_elem(g, 1.2)) <= 1e-12);
    // a_t n(r,s) a_-t = n(e^t r, e^t s) at (t,r,s) = (1, 0.3, -0.2)
    GroupElement lhs = mul(mul(a_elem(g, 1.0), n_elem(g, 0.3, -0.2)), a_elem(g, -1.0));
    GroupElement rhs = n_elem(g, std::exp(1.0) * 0.3, std::exp(1.0) * (-0.2));
    CHECK(gdist(lhs, rhs) <= 1e-12);
  }
}

TEST_CASE("n(r,s) matches the defining matrices") {
  CHECK(gdist_id(n_elem(AmbientGroup::SL2C, 0, 0)) == 0);
  GroupElement n12 = n_elem(AmbientGroup::SL2C, 1, 2);
  CHECK(std::abs(n12.f1(0, 1) - cplx(1, 2)) <= 1e-15);
  GroupElement p12 = n_elem(AmbientGroup::SL2RxSL2R, 1, 2);
  CHECK(std::abs(p12.f1(0, 1) - cplx(3, 0)) <= 1e-15);  // (1, r+s; 0, 1)
  CHECK(std::abs(p12.f2(0, 1) - cplx(1, 0)) <= 1e-15);  // (1, r; 0, 1)
  CHECK(gdist(n_elem(AmbientGroup::SL2C, 0.4, 0.9),
              mul(u_elem(AmbientGroup::SL2C, 0.4), v_elem(AmbientGroup::SL2C, 0.9))) <= 1e-15);
}

TEST_CASE("determinants stay at 1 across products and exponentials") {
  Rng rng(11, 0);
  for (AmbientGroup g : kGroups) {
    for (int i = 0; i < 2000; ++i) {
      GroupElement a = random_group(g, rng, 0.8);
      GroupElement b = random_group(g, rng, 0.8);
      CHECK(det_residual(mul(a, b)) <= 1e-12);
      CHECK(det_residual(inverse(a)) <= 1e-12);
    }
  }
}

TEST_CASE("adjoint: identity, homomorphism, split preservation") {
  Rng rng(12, 0);
  for (AmbientGroup g : kGroups) {
    for (int i = 0; i < 2500; ++i) {
      LieVector w = random_lie(g, rng, 1.0);
      CHECK(lie_norm(adjoint(identity(g), w) - w) <= 1e-15);
      GroupElement a = random_group(g, rng, 0.6);
      GroupElement b = random_group(g, rng, 0.6);
      // direct double-conjugation oracle
      LieVector lhs = adjoint(mul(a, b), w);
      LieVector rhs = adjoint(a, adjoint(b, w));
      CHECK(lie_norm(lhs - rhs) <= 1e-12 * std::max(1.0, lie_norm(lhs)));
      // h in H preserves both parts exactly
      GroupElement h = random_h(g, rng, 0.6);
      LieVector hw = adjoint(h, lie_r(g, w.r));
      CHECK(norm_h(hw) <= 1e-12);
      LieVector hh = adjoint(h, lie_h(g, w.h));
      CHECK(norm_r(hh) <= 1e-12);
    }
  }
}

TEST_CASE("xi polynomial identity (Ad(u_r)w)_12 = -w21 r^2 - 2 w11 r + w12") {
  for (AmbientGroup g : kGroups) {
    Mat2 m;
    m << 1, 0, 0, -1;
    LieVector w = lie_r(g, m);
    LieVector aw = adjoint(u_elem(g, 1.0), w);
    CHECK(aw.r(0, 1) == doctest::Approx(-2.0).epsilon(1e-13));
    Rng rng(13, 0);
    for (int i = 0; i < 2500; ++i) {
      LieVector v = random_r(g, rng, 2.0);
      double r = rng.sym(3.0);
      LieVector av = adjoint(u_elem(g, r), v);
      double poly = -v.r(1, 0) * r * r - 2.0 * v.r(0, 0) * r + v.r(0, 1);
      CHECK(std::abs(av.r(0, 1) - poly) <= 1e-12 * std::max(1.0, std::abs(poly)));
    }
  }
}

TEST_CASE("exp/log round trips at 1e-12") {
  Rng rng(14, 0);
  for (AmbientGroup g : kGroups) {
    for (int i = 0; i < 2000; ++i) {
      LieVector w = random_lie(g, rng, 0.7);
      LogResult lg = log_g(exp_g(w));
      REQUIRE(lg.ok);
      CHECK(lie_norm(lg.w - w) <= 1e-12);
    }
  }
}

TEST_CASE("transversal decomposition recovers synthetic h exp(w)") {
  Rng rng(15, 0);
  for (AmbientGroup g : kGroups) {
    // identity and pure-transversal cases
    TransversalDecomposition d0 = decompose_transversal(identity(g));
    CHECK(d0.status == LieStatus::Ok);
    CHECK(gdist_id(d0.h) <= 1e-14);
    CHECK(lie_norm(d0.w) <= 1e-14);
    LieVector w0 = lie_r3(g, 1e-3, -4e-4, 7e-4);
    TransversalDecomposition d1 = decompose_transversal(exp_g(w0));
    CHECK(d1.status == LieStatus::Ok);
    CHECK(gdist_id(d1.h) <= 1e-9);
    CHECK(lie_norm(d1.w - w0) <= 1e-9);

    for (int i = 0; i < 500; ++i) {
      GroupElement h = random_h(g, rng, 0.05);
      LieVector w = random_r(g, rng, 0.05);
      GroupElement prod = mul(h, exp_g(w));
      TransversalDecomposition dec = decompose_transversal(prod);
      REQUIRE(dec.status == LieStatus::Ok);
      CHECK(gdist(dec.h, h) <= 1e-9);
      CHECK(lie_norm(dec.w - w) <= 1e-9);
      CHECK(gdist(mul(dec.h, exp_g(dec.w)), prod) <= 1e-10);
    }
    GroupElement far = random_group(g, rng, 3.0);
    if (gdist_id(far) > 0.5)
      CHECK(decompose_transversal(far).status == LieStatus::OutOfNeighborhood);
  }
}

TEST_CASE("bch_difference: trivial case and product-group closed form") {
  for (AmbientGroup g : kGroups) {
    LieVector w1 = lie_r3(g, 2e-3, -1e-3, 5e-4);
    BchResult triv = bch_difference(w1, lie_zero(g));
    CHECK(triv.status == LieStatus::Ok);
    CHECK(gdist_id(triv.h) <= 1e-11);
    CHECK(lie_norm(triv.w - w1) <= 1e-11);
  }
  // product case: exp((W1,0)) exp((-W2,0)) = (g2, g2) (log(g2^-1 g1), 0)
  // with g2 = I, so h = I and w = log(exp(W1) exp(-W2))
  AmbientGroup g = AmbientGroup::SL2RxSL2R;
  Rng rng(16, 0);
  for (int i = 0; i < 200; ++i) {
    LieVector w1 = random_r(g, rng, 5e-3);
    LieVector w2 = random_r(g, rng, 5e-3);
    BchResult res = bch_difference(w1, w2);
    REQUIRE(res.status == LieStatus::Ok);
    // matrix-logarithm oracle in the first factor
    GroupElement prod = mul(exp_g(w1), exp_g(-1.0 * w2));
    GroupElement recon = mul(res.h, exp_g(res.w));
    CHECK(gdist(prod, recon) <= 1e-12);
    Mat2c direct = prod.f1;
    GroupElement wrap{AmbientGroup::SL2C, direct, Mat2c::Identity()};
    LogResult lg = log_g(wrap);
    REQUIRE(lg.ok);
    CHECK(gdist_id(res.h) <= 1e-8);  // h = (g2,g2) with g2 = I here
    CHECK(part_norm(res.w.r - lg.w.h) <= 1e-8);
  }
}

TEST_CASE("perturbative BCH bounds hold on 1e4 random pairs at beta = 1e-3") {
  Rng rng(17, 0);
  int trials = 0;
  double worst_c = 0;
  for (AmbientGroup g : kGroups) {
    for (int i = 0; i < 5000; ++i) {
      LieVector w1 = random_r(g, rng, 1e-3);
      LieVector w2 = random_r(g, rng, 1e-3);
      if (lie_norm(w1 - w2) < 1e-9) continue;
      BchResult res = bch_difference(w1, w2);
      REQUIRE(res.status == LieStatus::Ok);
      double diff = lie_norm(w1 - w2);
      double wn = lie_norm(res.w);
      CHECK(wn >= 0.5 * diff);
      CHECK(wn <= 2.0 * diff);
      // reconstruction residual
      CHECK(gdist(mul(exp_g(w1), exp_g(-1.0 * w2)), mul(res.h, exp_g(res.w))) <= 1e-10);
      if (wn > 0) worst_c = std::max(worst_c, res.h_dist / (1e-3 * wn));
      ++trials;
    }
  }
  CHECK(trials >= 9900);
  // ||h - I|| <= C beta ||w||: report-style fitted constant stays modest
  CHECK(worst_c <= 64.0);
  MESSAGE("fitted BCH constant C = ", worst_c);
}

TEST_CASE("synthetic sheet identity: exp(w') h x = h' exp(w) x forces h' = h, w' = Ad(h)w") {
  Rng rng(18, 0);
  for (AmbientGroup g : kGroups) {
    for (int i = 0; i < 300; ++i) {
      GroupElement h = random_h(g, rng, 1e-2);
      LieVector w = random_r(g, rng, 1e-2);
      // construct exp(w') h = exp(Ad(h) w) h synthetically and decompose back
      LieVector wprime = adjoint(h, w);
      GroupElement lhs = mul(exp_g(wprime), h);
      TransversalDecomposition dec = decompose_transversal(lhs, 0.8);
      REQUIRE(dec.status == LieStatus::Ok);
      // g = h exp(w) chart: h part must equal h, and w = Ad(h^-1) w'
      CHECK(gdist(dec.h, h) <= 1e-9);
      CHECK(lie_norm(dec.w - w) <= 1e-9);
      CHECK(lie_norm(wprime) <= 2.0 * lie_norm(w) + 1e-12);
    }
  }
}

TEST_CASE("box membership: identity, generators, and the box algebra") {
  for (AmbientGroup g : kGroups) {
    for (double beta : {1e-3, 1e-2, 0.05}) {
      BoxParams box{beta, 0, 0, 0};
      CHECK(box_membership(identity(g), box, BoxKind::BH).member);
    }
    // boundary generator product of Q^H
    double beta = 0.01, eta = 0.02, m = 2.0;
    GroupElement q = mul(mul(uminus_elem(g, beta * std::exp(-m)), a_elem(g, beta)),
                         u_elem(g, eta));
    BoxParams qbox{beta, eta, 0, m};
    CHECK(box_membership(q, qbox, BoxKind::QH).member);
    CHECK_FALSE(box_membership(u_elem(g, 1.5 * eta), qbox, BoxKind::QH).member);

    // triple products: (Q^H_{0.01 eta, 0.01 beta, m})^{pm 1} cubed
    // lands in Q^H_{eta, beta, m}
    Rng rng(19, 0);
    BoxParams small{0.01 * beta, 0.01 * eta, 0, m};
    for (int i = 0; i < 1000; ++i) {
      GroupElement prod = identity(g);
      for (int k = 0; k < 3; ++k) {
        GroupElement e = mul(mul(uminus_elem(g, rng.sym(small.beta * std::exp(-m))),
                                 a_elem(g, rng.sym(small.beta))),
                             u_elem(g, rng.sym(small.eta)));
        if (rng.uniform() < 0.5) e = inverse(e);
        prod = mul(prod, e);
      }
      CHECK(box_membership(prod, qbox, BoxKind::QH).member);
    }
  }
}

TEST_CASE("box algebra part 2: Q^H conjugation into E boxes") {
  // (Q^H_{beta^2, m})^{pm1} a_m u_r E_{eta,t,beta'} in a_m u_r E_{eta,t,beta},
  // beta' = beta - 100 beta^2
  Rng rng(20, 0);
  for (AmbientGroup g : kGroups) {
    double beta = 0.01, eta = 0.3, t = 3.0, m = 1.5;
    double betap = beta - 100 * beta * beta;
    BoxParams ebox{beta, eta, t, 0};
    for (int i = 0; i < 400; ++i) {
      GroupElement q = mul(mul(uminus_elem(g, rng.sym(beta * beta * std::exp(-m))),
                               a_elem(g, rng.sym(beta * beta))),
                           u_elem(g, rng.sym(beta * beta)));
      if (rng.uniform() < 0.5) q = inverse(q);
      GroupElement e = mul(mul(mul(uminus_elem(g, rng.sym(betap)), a_elem(g, rng.sym(betap))),
                               u_elem(g, rng.sym(betap))),
                           mul(a_elem(g, t), u_elem(g, rng.uniform(0, eta))));
      double r = rng.sym(2.0);
      GroupElement amur = mul(a_elem(g, m), u_elem(g, r));
      GroupElement lhs = mul(q, mul(amur, e));
      // strip a_m u_r back off and test membership in E_{eta,t,beta}
      GroupElement stripped = mul(inverse(amur), lhs);
      CHECK(box_membership(stripped, ebox, BoxKind::E).member);
    }
  }
}

TEST_CASE("B^G membership peels the transversal part") {
  Rng rng(21, 0);
  for (AmbientGroup g : kGroups) {
    double beta = 0.02;
    BoxParams box{beta, 0, 0, 0};
    for (int i = 0; i < 200; ++i) {
      GroupElement h = mul(mul(uminus_elem(g, rng.sym(beta * 0.9)), a_elem(g, rng.sym(beta * 0.9))),
                           u_elem(g, rng.sym(beta * 0.9)));
      GroupElement e = mul(h, exp_g(random_r(g, rng, beta * 0.9)));
      CHECK(box_membership(e, box, BoxKind::BG).member);
      GroupElement far = mul(h, exp_g(lie_r3(g, 0, 3 * beta, 0)));
      CHECK_FALSE(box_membership(far, box, BoxKind::BG).member);
    }
  }
}
