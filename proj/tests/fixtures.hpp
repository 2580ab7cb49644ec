#pragma once

// Shared fixtures: the two-factor system the bundled configs describe
// (m0), its two misspecified alternatives (m1: single common factor,
// m2: uncorrelated factors), the generating parameter, and SDE blocks
// whose diffusion matches the covariance blocks of that parameter.

#include "hfsem/estimate.hpp"
#include "hfsem/simulate.hpp"

namespace fixtures {

using namespace hfsem;
using TI = TemplateId;

inline ModelSpec make_m0() {
  ModelBuilder b(4, 2, 2, 1);
  b.fix(TI::LambdaX1, 0, 0, 1).free(TI::LambdaX1, 1, 0, "lx1_21");
  b.fix(TI::LambdaX1, 2, 1, 1).free(TI::LambdaX1, 3, 1, "lx1_42");
  b.fix(TI::LambdaX2, 0, 0, 1).free(TI::LambdaX2, 1, 0, "lx2_21");
  b.free(TI::Gamma, 0, 0, "g_11").free(TI::Gamma, 0, 1, "g_12");
  b.free(TI::SigmaXiXi, 0, 0, "sxx_11")
      .free(TI::SigmaXiXi, 1, 0, "sxx_21")
      .free(TI::SigmaXiXi, 1, 1, "sxx_22");
  b.free(TI::SigmaDd, 0, 0, "sdd_11").free(TI::SigmaDd, 1, 1, "sdd_22");
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

inline ModelSpec make_m1() {
  ModelBuilder b(4, 2, 1, 1);
  b.fix(TI::LambdaX1, 0, 0, 1).free(TI::LambdaX1, 1, 0, "lx1_21");
  b.free(TI::LambdaX1, 2, 0, "lx1_31").free(TI::LambdaX1, 3, 0, "lx1_41");
  b.fix(TI::LambdaX2, 0, 0, 1).free(TI::LambdaX2, 1, 0, "lx2_21");
  b.free(TI::Gamma, 0, 0, "g_11");
  b.free(TI::SigmaXiXi, 0, 0, "sxx_11");
  b.free(TI::SigmaDd, 0, 0, "sdd_11").free(TI::SigmaDd, 1, 1, "sdd_22");
  b.free(TI::SigmaDd, 2, 2, "sdd_33").free(TI::SigmaDd, 3, 3, "sdd_44");
  b.free(TI::SigmaEe, 0, 0, "see_11").free(TI::SigmaEe, 1, 1, "see_22");
  b.free(TI::SigmaZz, 0, 0, "szz_11");
  const IntervalUnion uni{{-100, -0.1}, {0.1, 100}}, pos{{0.1, 100}};
  for (const char* nm : {"lx1_21", "lx1_31", "lx1_41", "lx2_21", "g_11"})
    b.bound(nm, uni);
  for (const char* nm : {"sxx_11", "sdd_11", "sdd_22", "sdd_33", "sdd_44",
                         "see_11", "see_22", "szz_11"})
    b.bound(nm, pos);
  return b.build();
}

inline ModelSpec make_m2() {
  ModelBuilder b(4, 2, 2, 1);
  b.fix(TI::LambdaX1, 0, 0, 1).free(TI::LambdaX1, 1, 0, "lx1_21");
  b.fix(TI::LambdaX1, 2, 1, 1).free(TI::LambdaX1, 3, 1, "lx1_42");
  b.fix(TI::LambdaX2, 0, 0, 1).free(TI::LambdaX2, 1, 0, "lx2_21");
  b.free(TI::Gamma, 0, 0, "g_11").free(TI::Gamma, 0, 1, "g_12");
  b.free(TI::SigmaXiXi, 0, 0, "sxx_11").free(TI::SigmaXiXi, 1, 1, "sxx_22");
  b.free(TI::SigmaDd, 0, 0, "sdd_11").free(TI::SigmaDd, 1, 1, "sdd_22");
  b.free(TI::SigmaDd, 2, 2, "sdd_33").free(TI::SigmaDd, 3, 3, "sdd_44");
  b.free(TI::SigmaEe, 0, 0, "see_11").free(TI::SigmaEe, 1, 1, "see_22");
  b.free(TI::SigmaZz, 0, 0, "szz_11");
  const IntervalUnion uni{{-100, -0.1}, {0.1, 100}}, pos{{0.1, 100}};
  for (const char* nm : {"lx1_21", "lx1_42", "lx2_21", "g_11", "g_12"})
    b.bound(nm, uni);
  for (const char* nm : {"sxx_11", "sxx_22", "sdd_11", "sdd_22", "sdd_33",
                         "sdd_44", "see_11", "see_22", "szz_11"})
    b.bound(nm, pos);
  return b.build();
}

inline Theta theta0_m0() {
  Theta t(15);
  t << 2, 3, 3, 1, 2, 2, 2, 4, 1, 4, 4, 1, 1, 9, 4;
  return t;
}

inline SdeConfig make_sde() {
  SdeConfig c;
  c.xi.dim = 2;
  c.xi.drift = OuDrift{(Matrix(2, 2) << 0.5, 0.3, 0.2, 0.4).finished(),
                       (Vector(2) << 2, 4).finished()};
  c.xi.S = (Matrix(2, 2) << 1, 1, 0, 2).finished();
  c.xi.c = (Vector(2) << 3, 5).finished();
  c.delta.dim = 4;
  c.delta.drift = OuDrift{
      (Matrix(4, 4) << 3, 0, 0, 0, 0, 2, 0, 0, 0, 0, 3, 0, 0, 0, 0, 2)
          .finished(),
      Vector::Zero(4)};
  c.delta.S =
      (Matrix(4, 4) << 1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 2, 0, 0, 0, 0, 1)
          .finished();
  c.delta.c = Vector::Zero(4);
  c.eps.dim = 2;
  c.eps.drift =
      OuDrift{(Matrix(2, 2) << 2, 0, 0, 3).finished(), Vector::Zero(2)};
  c.eps.S = (Matrix(2, 2) << 1, 0, 0, 3).finished();
  c.eps.c = Vector::Zero(2);
  c.zeta.dim = 1;
  c.zeta.drift = OuDrift{(Matrix(1, 1) << 1).finished(), Vector::Zero(1)};
  c.zeta.S = (Matrix(1, 1) << 2).finished();
  c.zeta.c = Vector::Zero(1);
  return c;
}

inline SimGrid make_grid(long n = 10000, double h = 1e-3) {
  SimGrid g;
  g.n = n;
  g.h = h;
  return g;
}

// The 6x6 covariance the m0 structure implies at the generating
// parameter; every entry is an exact integer.
inline Matrix sigma0_exact() {
  Matrix s(6, 6);
  s << 3, 4, 2, 6, 6, 18,
      4, 12, 4, 12, 12, 36,
      2, 4, 8, 12, 10, 30,
      6, 12, 12, 37, 30, 90,
      6, 12, 10, 30, 31, 90,
      18, 36, 30, 90, 90, 279;
  return s;
}

// Random SPD matrix with eigenvalues bounded away from zero.
inline Matrix random_spd(int p, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> nd;
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = nd(rng);
  return a * a.transpose() + ridge * Matrix::Identity(p, p);
}

}  // namespace fixtures
