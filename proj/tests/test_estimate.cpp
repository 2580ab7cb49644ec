#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hfsem/estimate.hpp"

using namespace hfsem;
using TI = TemplateId;

namespace {

// Central finite differences on the raw objective, for cross-checking the
// analytic gradient.
Vector fd_gradient(const ContrastEvaluator& f, const Theta& theta) {
  Vector g(theta.size());
  for (int j = 0; j < theta.size(); ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta(j)));
    Theta hi = theta, lo = theta;
    hi(j) += step;
    lo(j) -= step;
    g(j) = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

ModelSpec make_m0_swapped01() {
  // m0 with observed coordinates 0 and 1 of the first block exchanged;
  // parameter names are introduced in the same order, so theta has the
  // same meaning and Sigma'(theta) = P Sigma(theta) P'.
  ModelBuilder b(4, 2, 2, 1);
  b.free(TI::LambdaX1, 0, 0, "lx1_21").fix(TI::LambdaX1, 1, 0, 1);
  b.fix(TI::LambdaX1, 2, 1, 1).free(TI::LambdaX1, 3, 1, "lx1_42");
  b.fix(TI::LambdaX2, 0, 0, 1).free(TI::LambdaX2, 1, 0, "lx2_21");
  b.free(TI::Gamma, 0, 0, "g_11").free(TI::Gamma, 0, 1, "g_12");
  b.free(TI::SigmaXiXi, 0, 0, "sxx_11")
      .free(TI::SigmaXiXi, 1, 0, "sxx_21")
      .free(TI::SigmaXiXi, 1, 1, "sxx_22");
  b.free(TI::SigmaDd, 1, 1, "sdd_11").free(TI::SigmaDd, 0, 0, "sdd_22");
  b.free(TI::SigmaDd, 2, 2, "sdd_33").free(TI::SigmaDd, 3, 3, "sdd_44");
  b.free(TI::SigmaEe, 0, 0, "see_11").free(TI::SigmaEe, 1, 1, "see_22");
  b.free(TI::SigmaZz, 0, 0, "szz_11");
  const IntervalUnion uni{{-100, -0.1}, {0.1, 100}}, pos{{0.1, 100}};
  for (const char* nm :
       {"lx1_21", "lx1_42", "lx2_21", "g_11", "g_12", "sxx_21"})
    b.bound(nm, uni);
  for (const char* nm : {"sxx_11", "sxx_22", "sdd_11", "sdd_22", "sdd_33",
                         "sdd_44", "see_11", "see_22", "szz_11"})
    b.bound(nm, pos);
  return b.build();
}

ModelSpec make_saturated_scalar() {
  // One indicator per side, three free parameters, pbar = 3 = q: zero
  // testing degrees of freedom.
  ModelBuilder b(1, 1, 1, 1);
  b.fix(TI::LambdaX1, 0, 0, 1);
  b.fix(TI::LambdaX2, 0, 0, 1);
  b.free(TI::Gamma, 0, 0, "g");
  b.free(TI::SigmaXiXi, 0, 0, "sxx");
  b.free(TI::SigmaDd, 0, 0, "sdd");
  b.fix(TI::SigmaEe, 0, 0, 0.5);
  b.fix(TI::SigmaZz, 0, 0, 0.3);
  const IntervalUnion uni{{-100, -0.1}, {0.1, 100}}, pos{{0.1, 100}};
  b.bound("g", uni);
  b.bound("sxx", pos);
  b.bound("sdd", pos);
  return b.build();
}

}  // namespace

TEST_CASE("realized covariance basics") {
  SECTION("single increment over unit horizon") {
    Matrix obs(2, 2);
    obs << 0, 0, 1, -2;
    const RealizedCov rc = realized_cov(obs, 1.0);
    CHECK(rc.n == 1);
    CHECK(rc.horizon == 1.0);
    CHECK(rc.q(0, 0) == 1.0);
    CHECK(rc.q(0, 1) == -2.0);
    CHECK(rc.q(1, 1) == 4.0);
    CHECK_FALSE(rc.pd);  // rank one
  }
  SECTION("constant series") {
    Matrix obs = Matrix::Ones(50, 3);
    const RealizedCov rc = realized_cov(obs, 0.1);
    CHECK(rc.q.cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(rc.pd);
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(realized_cov(Matrix::Ones(1, 2), 0.1), DataError);
    CHECK_THROWS_AS(realized_cov(Matrix::Ones(5, 2), 0.0), NumericError);
    Matrix bad = Matrix::Ones(5, 2);
    bad(3, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(realized_cov(bad, 0.1), NumericError);
  }
  SECTION("scales like a covariance rate") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    Matrix obs(201, 2);
    obs.row(0).setZero();
    for (int i = 1; i <= 200; ++i)
      for (int j = 0; j < 2; ++j)
        obs(i, j) = obs(i - 1, j) + gauss(rng);
    const RealizedCov a = realized_cov(obs, 0.5);
    const RealizedCov b = realized_cov(obs, 0.25);
    CHECK((a.q * 0.5 - b.q * 0.25).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.pd);
  }
}

TEST_CASE("contrast value") {
  const SymMatrix sigma0{fixtures::sigma0_exact()};
  SECTION("zero at the truth") {
    const RealizedCov rc = exact_cov(sigma0, 1000, 1e-3);
    CHECK(contrast(rc, sigma0) == Catch::Approx(0.0).margin(1e-13));
  }
  SECTION("scalar closed form") {
    const SymMatrix one{(Matrix(1, 1) << 1.0).finished()};
    const SymMatrix two{(Matrix(1, 1) << 2.0).finished()};
    const RealizedCov rc = exact_cov(two, 10, 0.1);
    // log 1 - log 2 + 2/1 - 1 = 1 - log 2.
    CHECK(contrast(rc, one) ==
          Catch::Approx(1.0 - std::log(2.0)).epsilon(1e-12));
  }
  SECTION("singular-covariance fallback is a squared distance") {
    const RealizedCov rc = realized_cov(Matrix::Zero(20, 6), 0.1);
    REQUIRE_FALSE(rc.pd);
    const double expect = vech_of(sigma0.mat()).squaredNorm();
    CHECK(contrast(rc, sigma0) == Catch::Approx(expect).epsilon(1e-12));
  }
  SECTION("rejects a non-positive-definite model covariance") {
    Matrix m = Matrix::Identity(2, 2);
    m(0, 0) = -1.0;
    const RealizedCov rc = exact_cov(SymMatrix{Matrix::Identity(2, 2)}, 5, 1);
    CHECK_THROWS_AS(contrast(rc, SymMatrix{m}), NonPdError);
  }
  SECTION("dimension mismatch") {
    const RealizedCov rc = exact_cov(SymMatrix{Matrix::Identity(2, 2)}, 5, 1);
    CHECK_THROWS_AS(contrast(rc, SymMatrix{Matrix::Identity(3, 3)}),
                    DimensionError);
  }
}

TEST_CASE("integral representation reproduces the contrast") {
  // F(Q, Sigma) = (vech Q - vech Sigma)' V(Q, Sigma) (vech Q - vech Sigma)
  // for the quadrature-evaluated weight V.
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 12; ++rep) {
    const int p = 2 + static_cast<int>(rng() % 5);  // 2..6
    const Matrix q = fixtures::random_spd(p, rng);
    const Matrix s = fixtures::random_spd(p, rng);
    const RealizedCov rc = exact_cov(SymMatrix{q}, 100, 0.01);
    const double f = contrast(rc, SymMatrix{s});
    const SymMatrix v = v_integral(SymMatrix{q}, SymMatrix{s});
    const Vector d = vech_of(q) - vech_of(s);
    const double quad = d.dot(v.mat() * d);
    CHECK(quad == Catch::Approx(f).epsilon(1e-6));
  }
}

TEST_CASE("weight integral at coincident arguments") {
  // At Q = Sigma the integrand is constant, so the double integral is
  // 1/2 and V = D' (Sigma^{-1} (x) Sigma^{-1}) D / 2.
  const SymMatrix eye{Matrix::Identity(2, 2)};
  const SymMatrix v = v_integral(eye, eye);
  Matrix expect = Matrix::Zero(3, 3);
  expect.diagonal() << 0.5, 1.0, 0.5;
  CHECK((v.mat() - expect).cwiseAbs().maxCoeff() < 1e-10);

  // Its inverse relates to the asymptotic weighting of vech Q:
  // (2 V)^{-1} = W / 2 with W = 2 Dplus (Sigma (x) Sigma) Dplus'.
  std::mt19937_64 rng(123);
  const Matrix s = fixtures::random_spd(4, rng);
  const SymMatrix vs = v_integral(SymMatrix{s}, SymMatrix{s});
  const Matrix lhs = (2.0 * vs.mat()).inverse();
  const Matrix rhs = 0.5 * w_matrix(SymMatrix{s}).mat();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <
        1e-8 * rhs.cwiseAbs().maxCoeff());
}

TEST_CASE("v_integral input validation") {
  CHECK_THROWS_AS(v_integral(SymMatrix{Matrix::Identity(2, 2)},
                             SymMatrix{Matrix::Identity(3, 3)}),
                  DimensionError);
  // A segment that leaves the cone: Q not PSD-compatible with Sigma.
  Matrix q = Matrix::Identity(2, 2);
  q(0, 0) = -5.0;  // Sigma + l1 l2 (Q - Sigma) loses definiteness
  CHECK_THROWS_AS(
      v_integral(SymMatrix{q}, SymMatrix{Matrix::Identity(2, 2)}),
      NumericError);
}

TEST_CASE("analytic gradient matches finite differences") {
  const ModelSpec m0 = fixtures::make_m0();
  const SymMatrix sigma0{fixtures::sigma0_exact()};
  const Theta t0 = fixtures::theta0_m0();

  SECTION("at a generic interior point, PD branch") {
    // Slightly perturbed data so the gradient is not zero.
    Matrix qm = sigma0.mat();
    qm.diagonal().array() += 0.25;
    qm(0, 1) += 0.1;
    qm(1, 0) += 0.1;
    const RealizedCov rc = exact_cov(SymMatrix{qm}, 1000, 1e-3);
    const ContrastEvaluator f(m0, rc);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (int rep = 0; rep < 4; ++rep) {
      Theta t = t0;
      for (int j = 0; j < t.size(); ++j) t(j) *= 1.0 + u(rng);
      const Vector ga = f.gradient(t);
      const Vector gn = fd_gradient(f, t);
      const double scale = std::max(1.0, gn.cwiseAbs().maxCoeff());
      CHECK((ga - gn).cwiseAbs().maxCoeff() / scale < 1e-6);
    }
  }

  SECTION("singular-covariance branch") {
    const RealizedCov rc = realized_cov(Matrix::Zero(30, 6), 0.1);
    REQUIRE_FALSE(rc.pd);
    const ContrastEvaluator f(m0, rc);
    const Vector ga = f.gradient(t0);
    const Vector gn = fd_gradient(f, t0);
    const double scale = std::max(1.0, gn.cwiseAbs().maxCoeff());
    CHECK((ga - gn).cwiseAbs().maxCoeff() / scale < 1e-6);
  }

  SECTION("gradient vanishes at the unconstrained optimum") {
    const RealizedCov rc = exact_cov(sigma0, 1000, 1e-3);
    const ContrastEvaluator f(m0, rc);
    CHECK(f.gradient(t0).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fitting exact model covariance recovers the parameter") {
  const ModelSpec m0 = fixtures::make_m0();
  const Theta t0 = fixtures::theta0_m0();
  const RealizedCov rc = exact_cov(SymMatrix{fixtures::sigma0_exact()},
                                   10000, 1e-3);
  FitOptions opt;
  opt.n_starts = 0;
  opt.init_override = t0;
  const FitResult fr = fit(m0, rc, opt);
  CHECK(fr.converged);
  CHECK(fr.contrast < 1e-12);
  CHECK((fr.theta_hat - t0).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(fr.best_start_index == -1);
  REQUIRE(fr.se_ok);
  // Standard errors follow the asymptotic covariance at the optimum.
  const SymMatrix acov = asymptotic_cov(m0, fr.theta_hat);
  for (int j = 0; j < t0.size(); ++j)
    CHECK(fr.se(j) ==
          Catch::Approx(std::sqrt(acov(j, j) / 10000.0)).epsilon(1e-4));

  FitOptions opt2 = opt;
  opt2.gradient = GradientMode::Analytic;
  const FitResult fr2 = fit(m0, rc, opt2);
  CHECK(fr2.contrast < 1e-12);
  CHECK((fr2.theta_hat - t0).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("goodness-of-fit test mechanics") {
  const ModelSpec m0 = fixtures::make_m0();
  SECTION("perfect fit gives p = 1") {
    const RealizedCov rc = exact_cov(SymMatrix{fixtures::sigma0_exact()},
                                     10000, 1e-3);
    FitResult fr;
    fr.contrast = 0.0;
    const GofResult g = gof_test(m0, fr, rc, 0.05);
    CHECK(g.t_stat == 0.0);
    CHECK(g.df == 6);
    CHECK(g.p_value == Catch::Approx(1.0));
    CHECK_FALSE(g.reject);
  }
  SECTION("statistic is n times the contrast") {
    const RealizedCov rc = exact_cov(SymMatrix{fixtures::sigma0_exact()},
                                     500, 1e-2);
    FitResult fr;
    fr.contrast = 0.031;
    const GofResult g = gof_test(m0, fr, rc, 0.05);
    CHECK(g.t_stat == Catch::Approx(500 * 0.031));
    CHECK(g.p_value ==
          Catch::Approx(1.0 - chi2_cdf(g.t_stat, 6)).epsilon(1e-12));
    CHECK(g.reject == (g.t_stat > chi2_quantile(0.05, 6)));
  }
  SECTION("degrees of freedom by model") {
    CHECK(fixtures::make_m0().df() == 6);
    CHECK(fixtures::make_m1().df() == 8);
    CHECK(fixtures::make_m2().df() == 7);
  }
  SECTION("saturated model is rejected as untestable") {
    const ModelSpec sat = make_saturated_scalar();
    CHECK(sat.df() == 0);
    const RealizedCov rc = exact_cov(SymMatrix{Matrix::Identity(2, 2)}, 10, 1);
    FitResult fr;
    fr.contrast = 0.0;
    CHECK_THROWS_AS(gof_test(sat, fr, rc, 0.05), FitError);
  }
  SECTION("singular realized covariance is refused") {
    const RealizedCov rc = realized_cov(Matrix::Zero(10, 6), 0.1);
    FitResult fr;
    fr.contrast = 0.0;
    CHECK_THROWS_AS(gof_test(m0, fr, rc, 0.05), FitError);
    const RealizedCov ok = exact_cov(SymMatrix{fixtures::sigma0_exact()},
                                     10, 0.1);
    CHECK_THROWS_AS(gof_test(m0, fr, ok, 0.0), NumericError);
    CHECK_THROWS_AS(gof_test(m0, fr, ok, 1.0), NumericError);
  }
}

TEST_CASE("contrast is invariant under relabelling observed coordinates") {
  const ModelSpec base = fixtures::make_m0();
  const ModelSpec swapped = make_m0_swapped01();
  REQUIRE(swapped.q == base.q);

  // Simulated, slightly misfitting data; P exchanges coordinates 0 and 1.
  const PathBundle pb =
      simulate_model(base, fixtures::theta0_m0(), fixtures::make_sde(),
                     fixtures::make_grid(2000), 31, 0);
  const Matrix obs = observed_series(pb);
  Matrix perm = obs;
  perm.col(0).swap(perm.col(1));
  const RealizedCov rc = realized_cov(obs, 1e-3);
  const RealizedCov rcp = realized_cov(perm, 1e-3);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Theta t = fixtures::theta0_m0();
  for (int rep = 0; rep < 5; ++rep) {
    Theta tr = t;
    for (int j = 0; j < tr.size(); ++j) tr(j) *= 1.0 + u(rng);
    const double f0 = contrast(rc, implied_sigma(base, tr));
    const double f1 = contrast(rcp, implied_sigma(swapped, tr));
    CHECK(f1 == Catch::Approx(f0).epsilon(1e-10));
  }
}

TEST_CASE("realized covariance concentrates as the grid refines") {
  // Fixed horizon T = 10, shrinking step: the distance from the
  // population covariance rate must fall with n.
  const ModelSpec m0 = fixtures::make_m0();
  const Theta t0 = fixtures::theta0_m0();
  const SdeConfig sde = fixtures::make_sde();
  const Matrix sigma0 = fixtures::sigma0_exact();

  const long ns[3] = {100, 1000, 10000};
  double med[3];
  for (int k = 0; k < 3; ++k) {
    SimGrid grid;
    grid.n = ns[k];
    grid.h = 10.0 / static_cast<double>(ns[k]);
    std::vector<double> dist;
    for (int rep = 0; rep < 100; ++rep) {
      const PathBundle pb = simulate_model(m0, t0, sde, grid, 600 + k,
                                           static_cast<std::uint64_t>(rep));
      const RealizedCov rc = realized_cov(observed_series(pb), grid.h);
      dist.push_back((rc.q - sigma0).norm());
    }
    std::nth_element(dist.begin(), dist.begin() + 50, dist.end());
    med[k] = dist[50];
  }
  CHECK(med[1] < med[0]);
  CHECK(med[2] < med[1]);
}
