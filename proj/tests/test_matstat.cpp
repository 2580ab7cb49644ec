#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"
#include "hfsem/matstat.hpp"

using namespace hfsem;

namespace {

Matrix random_sym(int p, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = nd(rng);
  return a;
}

}  // namespace

TEST_CASE("vech stacks the lower triangle column-major") {
  SymMatrix a((Matrix(2, 2) << 1, 2, 2, 3).finished());
  const HalfVec v = vech(a);
  REQUIRE(v.dim == 2);
  REQUIRE(v.data.size() == 3);
  CHECK(v.data(0) == 1.0);
  CHECK(v.data(1) == 2.0);
  CHECK(v.data(2) == 3.0);

  SymMatrix s1((Matrix(1, 1) << 5).finished());
  CHECK(vech(s1).data(0) == 5.0);

  SymMatrix id3(Matrix::Identity(3, 3));
  Vector expect(6);
  expect << 1, 0, 0, 1, 0, 1;
  CHECK(vech(id3).data == expect);
}

TEST_CASE("vech and unvech invert each other exactly") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 1000; ++rep) {
    const int p = 1 + static_cast<int>(rng() % 8);
    SymMatrix a(random_sym(p, rng));
    const SymMatrix back = unvech(vech(a));
    REQUIRE(back.dim() == p);
    CHECK((back.mat() - a.mat()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("duplication matrix maps vech to vec exactly") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const int p = 1 + static_cast<int>(rng() % 8);
    const DuplicationPair dp = duplication(p);
    SymMatrix a(random_sym(p, rng));
    const Vector lhs = dp.D * vech(a).data;
    CHECK((lhs - vec_of(a.mat())).cwiseAbs().maxCoeff() == 0.0);
    // Pseudoinverse sends vec back to vech.
    const Vector hv = dp.Dplus * vec_of(a.mat());
    CHECK((hv - vech(a).data).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("duplication pair closed forms") {
  const DuplicationPair d1 = duplication(1);
  CHECK(d1.D(0, 0) == 1.0);
  CHECK(d1.Dplus(0, 0) == 1.0);

  // p=2: rows of D are e1,e2,e2,e3 in vech order (a11,a21,a22).
  const DuplicationPair d2 = duplication(2);
  Matrix expect(4, 3);
  expect << 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1;
  CHECK((d2.D - expect).cwiseAbs().maxCoeff() == 0.0);

  // Dplus equals (D'D)^{-1} D'.
  const Matrix closed =
      (d2.D.transpose() * d2.D).inverse() * d2.D.transpose();
  CHECK((d2.Dplus - closed).cwiseAbs().maxCoeff() < 1e-14);

  const DuplicationPair d6 = duplication(6);
  const Matrix prod = d6.Dplus * d6.D;
  CHECK((prod - Matrix::Identity(21, 21)).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(duplication(0), DimensionError);
}

TEST_CASE("pinv satisfies the Penrose conditions") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  auto check_penrose = [](const Matrix& m) {
    const Matrix g = pinv(m);
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    CHECK((m * g * m - m).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK((g * m * g - g).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK(((m * g) - (m * g).transpose()).cwiseAbs().maxCoeff() <
          1e-10 * scale);
    CHECK(((g * m) - (g * m).transpose()).cwiseAbs().maxCoeff() <
          1e-10 * scale);
  };

  SECTION("invertible matrix: pseudoinverse equals inverse") {
    const Matrix m = fixtures::random_spd(4, rng);
    CHECK((pinv(m) * m - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <
          1e-10);
  }
  SECTION("zero matrix maps to zero") {
    CHECK(pinv(Matrix::Zero(3, 2)).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("rank-1 closed form") {
    Vector u(3), v(2);
    u << 1, -2, 3;
    v << 4, 5;
    const Matrix m = u * v.transpose();
    const Matrix expect =
        v * u.transpose() / (u.squaredNorm() * v.squaredNorm());
    CHECK((pinv(m) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("random matrices of every rank") {
    for (int rep = 0; rep < 30; ++rep) {
      const int r = 2 + static_cast<int>(rng() % 3);
      const int c = 2 + static_cast<int>(rng() % 3);
      const int rank = static_cast<int>(rng() % (std::min(r, c) + 1));
      Matrix m = Matrix::Zero(r, c);
      for (int k = 0; k < rank; ++k) {
        Vector a(r), b(c);
        for (int i = 0; i < r; ++i) a(i) = nd(rng);
        for (int i = 0; i < c; ++i) b(i) = nd(rng);
        m += a * b.transpose();
      }
      check_penrose(m);
    }
  }
  SECTION("non-finite input is rejected") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(pinv(m), NumericError);
  }
}

TEST_CASE("w_matrix closed forms and positive definiteness") {
  SECTION("identity input") {
    const SymMatrix w = w_matrix(SymMatrix(Matrix::Identity(2, 2)));
    Matrix expect = Matrix::Zero(3, 3);
    expect.diagonal() << 2, 1, 2;
    CHECK((w.mat() - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
  SECTION("scalar input") {
    const double s2 = 1.7;
    const SymMatrix w = w_matrix(SymMatrix((Matrix(1, 1) << s2).finished()));
    CHECK(w(0, 0) == Catch::Approx(2.0 * s2 * s2).epsilon(1e-14));
  }
  SECTION("fixture covariance reproduces the tabulated sampling SD") {
    const SymMatrix sigma(fixtures::sigma0_exact());
    const SymMatrix w = w_matrix(sigma);
    // First diagonal cell: 2 * Sigma_11^2 = 18; at n = 10^4 the sampling
    // SD of the (1,1) realized-covariance entry is 0.0424.
    CHECK(w(0, 0) == Catch::Approx(18.0).epsilon(1e-12));
    CHECK(std::sqrt(w(0, 0) / 1e4) == Catch::Approx(0.042).margin(5e-4));
  }
  SECTION("PD propagates from the input") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 20; ++rep) {
      const int p = 1 + static_cast<int>(rng() % 5);
      const SymMatrix w = w_matrix(SymMatrix(fixtures::random_spd(p, rng)));
      Eigen::LLT<Matrix> llt(w.mat());
      CHECK(llt.info() == Eigen::Success);
    }
  }
}

TEST_CASE("chi-squared quantiles match reference values") {
  CHECK(chi2_quantile(0.05, 6) == Catch::Approx(12.59).margin(0.01));
  CHECK(chi2_quantile(0.05, 8) == Catch::Approx(15.51).margin(0.01));
  CHECK(chi2_quantile(0.05, 7) == Catch::Approx(14.07).margin(0.01));
}

TEST_CASE("chi-squared cdf and quantile are inverse") {
  for (double alpha : {0.01, 0.05, 0.5, 0.95})
    for (int df = 1; df <= 30; ++df) {
      const double x = chi2_quantile(alpha, df);
      CHECK(chi2_cdf(x, df) == Catch::Approx(1.0 - alpha).margin(1e-8));
    }
  CHECK_THROWS_AS(chi2_quantile(0.0, 5), NumericError);
  CHECK_THROWS_AS(chi2_quantile(1.0, 5), NumericError);
  CHECK_THROWS_AS(chi2_cdf(-1.0, 5), NumericError);
}

TEST_CASE("normal quantile inverts the normal cdf") {
  for (double u : {0.001, 0.025, 0.2, 0.5, 0.8, 0.975, 0.999})
    CHECK(normal_cdf(normal_quantile(u)) == Catch::Approx(u).margin(1e-10));
  CHECK(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("symmetric-matrix wrapper rejects bad input") {
  CHECK_THROWS_AS(SymMatrix((Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished()),
                  DimensionError);
  CHECK_THROWS_AS(SymMatrix((Matrix(2, 2) << 1, 2, 3, 4).finished()),
                  NumericError);
  Matrix nanm = Matrix::Identity(2, 2);
  nanm(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(SymMatrix(nanm), NumericError);
}
