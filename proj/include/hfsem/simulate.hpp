#pragma once
// Sample-path generation for the four latent diffusion blocks (common factors
// xi, unique factors delta/eps/zeta) and assembly of the observed
// high-frequency series X = (X1', X2')' on the grid t_i = i*h.
//
// Linear (OU) blocks use the exact Gaussian transition: the one-step map
// e^{-Ah}, integrated drift, and integrated noise covariance all come from
// augmented-matrix exponentials (Van Loan), so no discretization bias enters
// the Monte Carlo study. General drifts fall back to Euler-Maruyama with
// internal substeps.

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "hfsem/model.hpp"

namespace hfsem {

// ---------------------------------------------------------------------------
// Observation grid.
// ---------------------------------------------------------------------------
struct SimGrid {
  long n = 0;        // number of increments
  double h = 0.0;    // step size
  int substeps = 10; // Euler refinement per observation step

  double horizon() const { return static_cast<double>(n) * h; }

  void validate() const {
    if (n < 1) throw DimensionError("grid: n must be >= 1");
    if (!(h > 0.0)) throw NumericError("grid: h must be positive");
    if (substeps < 1) throw NumericError("grid: substeps must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// One latent diffusion block: dX = -(A X - mu) dt + S dW (linear case) or
// dX = b(X) dt + S dW (general case), started at X_0 = c.
// ---------------------------------------------------------------------------
struct OuDrift {
  Matrix A;   // dim x dim
  Vector mu;  // dim
};

using DriftFn = std::function<Vector(const Vector&)>;

struct SdeBlock {
  int dim = 0;
  std::variant<OuDrift, DriftFn> drift;
  Matrix S;  // dim x r
  Vector c;  // initial state

  bool linear() const { return std::holds_alternative<OuDrift>(drift); }

  void validate() const {
    if (dim < 1) throw DimensionError("sde block: dim must be >= 1");
    if (S.rows() != dim || S.cols() < 1)
      throw DimensionError("sde block: diffusion matrix shape mismatch");
    if (!all_finite(S)) throw NumericError("sde block: non-finite diffusion");
    if (c.size() != dim)
      throw DimensionError("sde block: initial state length mismatch");
    if (linear()) {
      const OuDrift& d = std::get<OuDrift>(drift);
      if (d.A.rows() != dim || d.A.cols() != dim || d.mu.size() != dim)
        throw DimensionError("sde block: drift matrices shape mismatch");
    }
  }
};

// ---------------------------------------------------------------------------
// Deterministic, parallel-safe RNG streams: one generator per
// (master seed, replication, block) triple.
// ---------------------------------------------------------------------------
inline std::mt19937_64 make_stream(std::uint64_t master, std::uint64_t rep,
                                   std::uint64_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(master),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(rep),
                    static_cast<std::uint32_t>(rep >> 32),
                    static_cast<std::uint32_t>(block)};
  return std::mt19937_64(seq);
}

// Factor L with L L' = M for symmetric PSD M: Cholesky when PD, otherwise a
// symmetric-eigen square root with negative eigenvalues clamped to zero.
inline Matrix psd_factor(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw NumericError("psd_factor: eigendecomposition failed");
  Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal();
}

// ---------------------------------------------------------------------------
// Exact one-step transition of dX = -(A X - mu) dt + S dW over step h:
//   X' = F X + drift + L Z,   Z ~ N(0, I),
// with F = e^{-Ah}, drift = (int_0^h e^{-Au} du) mu and
// L L' = int_0^h e^{-Au} S S' e^{-A'u} du, both integrals via augmented
// block-matrix exponentials.
// ---------------------------------------------------------------------------
struct OuTransition {
  Matrix F;
  Vector drift;
  Matrix noise;

  static OuTransition compute(const OuDrift& d, const Matrix& S, double h) {
    const int k = static_cast<int>(d.A.rows());
    Matrix aug1 = Matrix::Zero(2 * k, 2 * k);
    aug1.topLeftCorner(k, k) = -d.A;
    aug1.topRightCorner(k, k) = Matrix::Identity(k, k);
    const Matrix e1 = (aug1 * h).exp();
    Matrix aug2 = Matrix::Zero(2 * k, 2 * k);
    aug2.topLeftCorner(k, k) = -d.A;
    aug2.topRightCorner(k, k) = S * S.transpose();
    aug2.bottomRightCorner(k, k) = d.A.transpose();
    const Matrix e2 = (aug2 * h).exp();
    OuTransition t;
    t.F = e1.topLeftCorner(k, k);
    t.drift = e1.topRightCorner(k, k) * d.mu;
    Matrix qh = e2.topRightCorner(k, k) * t.F.transpose();
    qh = ((qh + qh.transpose()) / 2.0).eval();
    t.noise = psd_factor(qh);
    return t;
  }
};

enum class SimScheme { ExactOu, Euler };

// Simulates one block on the observation grid; returns an (n+1) x dim path.
inline Matrix simulate_block(const SdeBlock& block, const SimGrid& grid,
                             std::mt19937_64& rng,
                             SimScheme scheme = SimScheme::ExactOu) {
  block.validate();
  grid.validate();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix path(grid.n + 1, block.dim);
  Vector x = block.c;
  path.row(0) = x.transpose();
  if (block.linear() && scheme == SimScheme::ExactOu) {
    const OuTransition tr =
        OuTransition::compute(std::get<OuDrift>(block.drift), block.S, grid.h);
    Vector z(block.dim);
    for (long i = 1; i <= grid.n; ++i) {
      for (int j = 0; j < block.dim; ++j) z(j) = gauss(rng);
      x = tr.F * x + tr.drift + tr.noise * z;
      if (!x.allFinite())
        throw SimulationError(i, "state diverged to non-finite values");
      path.row(i) = x.transpose();
    }
    return path;
  }
  const int r = static_cast<int>(block.S.cols());
  const double dt = grid.h / grid.substeps;
  const double sq = std::sqrt(dt);
  const OuDrift* lin =
      block.linear() ? &std::get<OuDrift>(block.drift) : nullptr;
  Vector z(r), b(block.dim);
  for (long i = 1; i <= grid.n; ++i) {
    for (int s = 0; s < grid.substeps; ++s) {
      if (lin)
        b = -(lin->A * x - lin->mu);
      else
        b = std::get<DriftFn>(block.drift)(x);
      if (!b.allFinite())
        throw SimulationError(i, "drift returned non-finite values");
      for (int j = 0; j < r; ++j) z(j) = gauss(rng);
      x += b * dt + block.S * (sq * z);
      if (!x.allFinite())
        throw SimulationError(i, "state diverged to non-finite values");
    }
    path.row(i) = x.transpose();
  }
  return path;
}

// ---------------------------------------------------------------------------
// Full-model simulation: four independent latent blocks plus the exact
// observation equations
//   X1 = L1 xi + delta,
//   X2 = L2 P Gamma xi + L2 P zeta + eps     (P = (I-B0)^{-1}, reduced form).
// ---------------------------------------------------------------------------
struct SdeConfig {
  SdeBlock xi, delta, eps, zeta;
};

struct PathBundle {
  SimGrid grid;
  Matrix xi, delta, eps, zeta;  // (n+1) x dim each
  Matrix x1, x2;                // (n+1) x p1 / p2
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
};

namespace detail {

inline void check_diffusion_matches(const Matrix& S, const Matrix& sigma,
                                    const char* which) {
  const Matrix ss = S * S.transpose();
  if (ss.rows() != sigma.rows() ||
      (ss - sigma).cwiseAbs().maxCoeff() > 1e-10)
    throw ConsistencyError(
        std::string("diffusion of the ") + which +
        " block disagrees with theta's covariance block (S S' != Sigma)");
}

}  // namespace detail

inline PathBundle simulate_model(const ModelSpec& spec, const Theta& theta,
                                 const SdeConfig& cfg, const SimGrid& grid,
                                 std::uint64_t seed,
                                 std::uint64_t replication = 0,
                                 SimScheme scheme = SimScheme::ExactOu) {
  grid.validate();
  const ModelMatrices m = materialize_model(spec, theta);
  if (cfg.xi.dim != spec.k1 || cfg.delta.dim != spec.p1 ||
      cfg.eps.dim != spec.p2 || cfg.zeta.dim != spec.k2)
    throw DimensionError("sde block dimensions disagree with the model spec");
  detail::check_diffusion_matches(cfg.xi.S, m.sigma_xixi, "common-factor");
  detail::check_diffusion_matches(cfg.delta.S, m.sigma_dd, "delta");
  detail::check_diffusion_matches(cfg.eps.S, m.sigma_ee, "eps");
  detail::check_diffusion_matches(cfg.zeta.S, m.sigma_zz, "zeta");

  PathBundle b;
  b.grid = grid;
  b.seed = seed;
  b.replication = replication;
  {
    auto rng = make_stream(seed, replication, 0);
    b.xi = simulate_block(cfg.xi, grid, rng, scheme);
  }
  {
    auto rng = make_stream(seed, replication, 1);
    b.delta = simulate_block(cfg.delta, grid, rng, scheme);
  }
  {
    auto rng = make_stream(seed, replication, 2);
    b.eps = simulate_block(cfg.eps, grid, rng, scheme);
  }
  {
    auto rng = make_stream(seed, replication, 3);
    b.zeta = simulate_block(cfg.zeta, grid, rng, scheme);
  }
  b.x1 = b.xi * m.lambda_x1.transpose() + b.delta;
  const Matrix loadings = m.lambda_x2 * m.psi_inv;  // p2 x k2
  b.x2 = b.xi * (loadings * m.gamma).transpose() +
         b.zeta * loadings.transpose() + b.eps;
  return b;
}

// Observed series as one (n+1) x p matrix (X1 columns then X2 columns).
inline Matrix observed_series(const PathBundle& b) {
  Matrix x(b.x1.rows(), b.x1.cols() + b.x2.cols());
  x << b.x1, b.x2;
  return x;
}

// CSV dump `t,x1_1..x1_p1,x2_1..x2_p2[,latents]` at full round-trip
// precision.
inline void dump_paths(const PathBundle& b, std::ostream& os,
                       bool with_latents = false) {
  os << "t";
  for (int j = 0; j < b.x1.cols(); ++j) os << ",x1_" << j + 1;
  for (int j = 0; j < b.x2.cols(); ++j) os << ",x2_" << j + 1;
  if (with_latents) {
    for (int j = 0; j < b.xi.cols(); ++j) os << ",xi_" << j + 1;
    for (int j = 0; j < b.delta.cols(); ++j) os << ",delta_" << j + 1;
    for (int j = 0; j < b.eps.cols(); ++j) os << ",eps_" << j + 1;
    for (int j = 0; j < b.zeta.cols(); ++j) os << ",zeta_" << j + 1;
  }
  os << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    os << buf;
  };
  for (long i = 0; i <= b.grid.n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(i) * b.grid.h);
    os << buf;
    for (int j = 0; j < b.x1.cols(); ++j) put(b.x1(i, j));
    for (int j = 0; j < b.x2.cols(); ++j) put(b.x2(i, j));
    if (with_latents) {
      for (int j = 0; j < b.xi.cols(); ++j) put(b.xi(i, j));
      for (int j = 0; j < b.delta.cols(); ++j) put(b.delta(i, j));
      for (int j = 0; j < b.eps.cols(); ++j) put(b.eps(i, j));
      for (int j = 0; j < b.zeta.cols(); ++j) put(b.zeta(i, j));
    }
    os << "\n";
  }
}

}  // namespace hfsem
