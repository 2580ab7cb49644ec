#pragma once
// Estimation and testing: realized covariance of high-frequency increments,
// the minimum-contrast objective F(Q, Sigma(theta)), its integral (Shapiro)
// representation used as a validation oracle, multi-start projected
// quasi-Newton fitting, asymptotic standard errors, and the
// quasi-likelihood-ratio goodness-of-fit test.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hfsem/model.hpp"
#include "hfsem/simulate.hpp"

namespace hfsem {

// ---------------------------------------------------------------------------
// Realized covariance Q_XX = (1/T) sum_i (dX_i)(dX_i)'.
// ---------------------------------------------------------------------------
struct RealizedCov {
  Matrix q;            // p x p, symmetric PSD
  long n = 0;          // number of increments
  double h = 0.0;      // step size
  double horizon = 0;  // T = n h
  bool pd = false;     // Cholesky succeeded
  double logdet = std::numeric_limits<double>::quiet_NaN();  // when pd
};

inline RealizedCov realized_cov(const Matrix& obs, double h) {
  if (obs.rows() < 2)
    throw DataError("realized covariance needs at least 2 observations");
  if (!(h > 0.0)) throw NumericError("realized covariance: h must be > 0");
  if (!all_finite(obs))
    throw NumericError("realized covariance: non-finite observations");
  RealizedCov rc;
  rc.n = obs.rows() - 1;
  rc.h = h;
  rc.horizon = static_cast<double>(rc.n) * h;
  const int p = static_cast<int>(obs.cols());
  Matrix q = Matrix::Zero(p, p);
  for (long i = 1; i <= rc.n; ++i) {
    const Vector d = (obs.row(i) - obs.row(i - 1)).transpose();
    q.selfadjointView<Eigen::Lower>().rankUpdate(d);
  }
  q = Matrix(q.selfadjointView<Eigen::Lower>()) / rc.horizon;
  rc.q = ((q + q.transpose()) / 2.0).eval();
  Eigen::LLT<Matrix> llt(rc.q);
  rc.pd = llt.info() == Eigen::Success &&
          llt.matrixLLT().diagonal().minCoeff() > 0.0;
  if (rc.pd)
    rc.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return rc;
}

// Wraps an externally supplied covariance rate (e.g. an exact Sigma used by
// oracle tests) in the RealizedCov interface; n is the nominal sample size.
inline RealizedCov exact_cov(const SymMatrix& sigma, long n, double h) {
  RealizedCov rc;
  rc.q = sigma.mat();
  rc.n = n;
  rc.h = h;
  rc.horizon = static_cast<double>(n) * h;
  Eigen::LLT<Matrix> llt(rc.q);
  rc.pd = llt.info() == Eigen::Success &&
          llt.matrixLLT().diagonal().minCoeff() > 0.0;
  if (rc.pd)
    rc.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return rc;
}

// ---------------------------------------------------------------------------
// Contrast F(Q, Sigma) = logdet Sigma - logdet Q + tr(Sigma^{-1} Q) - p for
// PD Q; for singular Q the fallback quadratic form ||vech Q - vech Sigma||^2
// (identity weighting). Sigma must be PD in both branches.
// ---------------------------------------------------------------------------
inline double contrast(const RealizedCov& rc, const SymMatrix& sigma) {
  const int p = sigma.dim();
  if (rc.q.rows() != p)
    throw DimensionError("contrast: dimension mismatch between Q and Sigma");
  Eigen::LLT<Matrix> llt(sigma.mat());
  if (llt.info() != Eigen::Success ||
      llt.matrixLLT().diagonal().minCoeff() <= 0.0)
    throw NonPdError("contrast: model covariance is not positive definite");
  if (!rc.pd) {
    const Vector d = vech_of(rc.q) - vech_of(sigma.mat());
    return d.squaredNorm();
  }
  const double logdet_sigma =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double tr = llt.solve(rc.q).trace();
  return logdet_sigma - rc.logdet + tr - p;
}

// ---------------------------------------------------------------------------
// V(Q, Sigma) = D' [ int_0^1 int_0^1 l2 (A^{-1} (x) A^{-1}) dl1 dl2 ] D with
// A = Sigma + l1 l2 (Q - Sigma): the weighting matrix of the integral
// representation F = (vech Q - vech Sigma)' V (vech Q - vech Sigma).
// Tensor Gauss-Legendre quadrature, refined until within quad_tol.
// Validation oracle only; never used on the estimation hot path.
// ---------------------------------------------------------------------------
namespace detail {

// Nodes/weights of k-point Gauss-Legendre on [0,1] (Newton on Legendre P_k).
inline void gauss_legendre_01(int k, std::vector<double>& x,
                              std::vector<double>& w) {
  x.assign(static_cast<size_t>(k), 0.0);
  w.assign(static_cast<size_t>(k), 0.0);
  for (int i = 0; i < k; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (k + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int j = 2; j <= k; ++j) {
        const double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = k * (t * p1 - p0) / (t * t - 1.0);
      const double step = p1 / dp;
      t -= step;
      if (std::abs(step) < 1e-15) break;
    }
    x[static_cast<size_t>(i)] = 0.5 * (1.0 + t);
    w[static_cast<size_t>(i)] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
}

inline Matrix v_integral_fixed_order(const Matrix& q, const Matrix& sigma,
                                     int order) {
  const int p = static_cast<int>(sigma.rows());
  std::vector<double> x, w;
  gauss_legendre_01(order, x, w);
  const Matrix diff = q - sigma;
  Matrix m = Matrix::Zero(p * p, p * p);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) {
      const double l1 = x[static_cast<size_t>(i)];
      const double l2 = x[static_cast<size_t>(j)];
      const Matrix a = sigma + (l1 * l2) * diff;
      Eigen::LLT<Matrix> llt(a);
      if (llt.info() != Eigen::Success)
        throw NumericError(
            "v_integral: convex combination leaves the positive definite "
            "cone");
      const Matrix ainv = llt.solve(Matrix::Identity(p, p));
      m += (w[static_cast<size_t>(i)] * w[static_cast<size_t>(j)] * l2) *
           kron(ainv, ainv);
    }
  return m;
}

}  // namespace detail

inline SymMatrix v_integral(const SymMatrix& q, const SymMatrix& sigma,
                            double quad_tol = 1e-8) {
  if (q.dim() != sigma.dim())
    throw DimensionError("v_integral: dimension mismatch");
  const DuplicationPair dp = duplication(sigma.dim());
  Matrix prev;
  for (int order : {8, 12, 16, 24, 32, 48, 64}) {
    Matrix cur = detail::v_integral_fixed_order(q.mat(), sigma.mat(), order);
    if (prev.size() > 0) {
      const double dev = (cur - prev).cwiseAbs().maxCoeff();
      if (dev <= quad_tol * std::max(1.0, cur.cwiseAbs().maxCoeff())) {
        Matrix v = dp.D.transpose() * cur * dp.D;
        return SymMatrix(((v + v.transpose()) / 2.0).eval());
      }
    }
    prev.swap(cur);
  }
  throw NumericError("v_integral: quadrature did not reach tolerance");
}

// ---------------------------------------------------------------------------
// Objective wrapper: theta -> F(Q, Sigma(theta)), +infinity outside the
// domain (non-PD Sigma, ill-conditioned I - B0).
// ---------------------------------------------------------------------------
class ContrastEvaluator {
 public:
  ContrastEvaluator(const ModelSpec& spec, const RealizedCov& rc)
      : spec_(&spec), rc_(&rc) {
    if (rc.q.rows() != spec.p())
      throw DimensionError("fit: realized covariance dimension != model p");
  }

  double operator()(const Theta& theta) const {
    try {
      return contrast(*rc_, implied_sigma(*spec_, theta));
    } catch (const NonPdError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const AssumptionError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  // Analytic gradient of the PD-branch contrast:
  //   dF/dtheta_j = tr[(Sigma^{-1} - Sigma^{-1} Q Sigma^{-1}) dSigma_j],
  // evaluated through the covariance-structure Jacobian.
  Vector gradient(const Theta& theta) const {
    const SymMatrix sigma = implied_sigma(*spec_, theta);
    const int p = sigma.dim();
    Eigen::LLT<Matrix> llt(sigma.mat());
    if (llt.info() != Eigen::Success)
      throw NonPdError("gradient: model covariance is not positive definite");
    Vector wv(spec_->pbar());
    int k = 0;
    if (rc_->pd) {
      // tr(M dSigma_j) = sum over vech cells with off-diagonal weight 2,
      // since dSigma_j perturbs both mirrored entries.
      const Matrix sinv = llt.solve(Matrix::Identity(p, p));
      const Matrix m = sinv - sinv * rc_->q * sinv;
      for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) wv(k++) = (i == j ? 1.0 : 2.0) * m(i, j);
    } else {
      // Quadratic branch sums over vech cells directly: each off-diagonal
      // appears once, so no doubling.
      const Matrix m = 2.0 * (sigma.mat() - rc_->q);
      for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) wv(k++) = m(i, j);
    }
    return sigma_jacobian(*spec_, theta).transpose() * wv;
  }

  const ModelSpec& spec() const { return *spec_; }
  const RealizedCov& rcov() const { return *rc_; }

 private:
  const ModelSpec* spec_;
  const RealizedCov* rc_;
};

// ---------------------------------------------------------------------------
// Multi-start projected quasi-Newton fit.
// ---------------------------------------------------------------------------
enum class GradientMode { Numeric, Analytic };

struct FitOptions {
  int n_starts = 50;              // random feasible starts
  std::uint64_t seed = 0;         // stream for start generation
  std::optional<Theta> init_override;  // extra deterministic start
  double tol = 1e-12;             // stop when |dF| < tol
  int max_iter = 500;
  GradientMode gradient = GradientMode::Numeric;
};

struct FitResult {
  Theta theta_hat;
  double contrast = std::numeric_limits<double>::infinity();
  bool converged = false;
  int n_starts_used = 0;
  int best_start_index = -1;  // -1 = the init_override start
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  Vector se;     // empty when standard errors are unavailable
  Matrix vcov;   // empty when standard errors are unavailable
  bool se_ok = false;
  std::string se_note;  // rank report when the Jacobian is deficient
};

namespace detail {

// Central finite-difference gradient with one-sided fallback at barrier
// points; relative step 1e-7 per coordinate.
inline Vector numeric_gradient(const ContrastEvaluator& f, const Theta& x,
                               double f_x) {
  const int q = static_cast<int>(x.size());
  Vector g(q);
  Theta t = x;
  for (int j = 0; j < q; ++j) {
    const double step = 1e-7 * (1.0 + std::abs(x(j)));
    t(j) = x(j) + step;
    const double fp = f(t);
    t(j) = x(j) - step;
    const double fm = f(t);
    t(j) = x(j);
    if (std::isfinite(fp) && std::isfinite(fm))
      g(j) = (fp - fm) / (2.0 * step);
    else if (std::isfinite(fp))
      g(j) = (fp - f_x) / step;
    else if (std::isfinite(fm))
      g(j) = (f_x - fm) / step;
    else
      g(j) = 0.0;
  }
  return g;
}

inline Vector fit_gradient(const ContrastEvaluator& f, const Theta& x,
                           double f_x, GradientMode mode) {
  if (mode == GradientMode::Analytic) {
    try {
      return f.gradient(x);
    } catch (const Error&) {
      // fall through to finite differences near the domain boundary
    }
  }
  return numeric_gradient(f, x, f_x);
}

struct StartResult {
  Theta theta;
  double value = std::numeric_limits<double>::infinity();
  bool converged = false;
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
};

// Sup-norm of the projected gradient step x - P(x - g): zero exactly at a
// constrained stationary point.
inline double projected_gradient_norm(const ModelSpec& spec, const Theta& x,
                                      const Vector& g) {
  return (x - spec.project(x - g)).cwiseAbs().maxCoeff();
}

// Strong-Wolfe line search along direction d, evaluated on the projected
// path so every trial point is feasible. Extends the step while the slope
// stays negative (the objective has long shallow plateaus), then zooms by
// bisection. On success writes the new point/value/gradient and returns
// true; candidate values of +inf (covariance left the positive-definite
// cone) act as an infinite barrier and shrink the bracket.
inline bool wolfe_search(const ContrastEvaluator& fe, const ModelSpec& spec,
                         const Theta& x0, double f0, const Vector& g0,
                         const Vector& d, GradientMode mode, Theta& x_out,
                         double& f_out, Vector& g_out) {
  constexpr double c1 = 1e-4;  // sufficient decrease
  constexpr double c2 = 0.9;   // curvature
  const double d0 = g0.dot(d);
  if (!(d0 < 0.0)) return false;

  struct Probe {
    double t = 0.0;
    double f = std::numeric_limits<double>::infinity();
    double slope = 0.0;
    Theta x;
    Vector g;
  };
  auto probe = [&](double t, Probe& p) {
    p.t = t;
    p.x = spec.project(x0 + t * d);
    p.f = fe(p.x);
    if (!std::isfinite(p.f)) return false;
    p.g = fit_gradient(fe, p.x, p.f, mode);
    p.slope = p.g.dot(d);
    return true;
  };
  auto accept = [&](Probe& p) {
    if (!(p.f < f0) || (p.x - x0).cwiseAbs().maxCoeff() == 0.0) return false;
    x_out = std::move(p.x);
    f_out = p.f;
    g_out = std::move(p.g);
    return true;
  };

  Probe lo;  // best point satisfying sufficient decrease, slope < 0
  lo.t = 0.0;
  lo.f = f0;
  lo.slope = d0;
  lo.x = x0;
  lo.g = g0;
  double hi = 1.0;
  bool bracketed = false;
  double t = 1.0;
  for (int i = 0; i < 20; ++i, t *= 2.0) {
    Probe cur;
    const bool finite = probe(t, cur);
    if (!finite || cur.f > f0 + c1 * t * d0 || (i > 0 && cur.f >= lo.f)) {
      hi = t;
      bracketed = true;
      break;
    }
    if (std::abs(cur.slope) <= c2 * std::abs(d0)) return accept(cur);
    if (cur.slope >= 0.0) {
      hi = lo.t;
      lo = std::move(cur);
      bracketed = true;
      break;
    }
    lo = std::move(cur);
    hi = 2.0 * t;
  }
  if (!bracketed && lo.t > 0.0) return accept(lo);  // ran out of extensions
  for (int i = 0; i < 50; ++i) {
    const double tm = 0.5 * (lo.t + hi);
    Probe mid;
    if (!probe(tm, mid) || mid.f > f0 + c1 * tm * d0 || mid.f >= lo.f) {
      hi = tm;
    } else {
      if (std::abs(mid.slope) <= c2 * std::abs(d0)) return accept(mid);
      if (mid.slope * (hi - lo.t) >= 0.0) hi = lo.t;
      lo = std::move(mid);
    }
    if (std::abs(hi - lo.t) <= 1e-14 * std::max(1.0, std::abs(lo.t))) break;
  }
  return lo.t > 0.0 && accept(lo);
}

// Coordinates pinned at a bound edge with the gradient pushing outward.
// Those must be excluded from the quasi-Newton model: their step component
// is zero after projection while their gradient component is not, which
// otherwise corrupts the curvature estimate and collapses the step length.
inline Vector bound_mask(const ModelSpec& spec, const Theta& x,
                         const Vector& g) {
  const int q = static_cast<int>(x.size());
  Vector m = Vector::Ones(q);
  for (int j = 0; j < q; ++j) {
    const IntervalUnion& u = spec.bounds[static_cast<size_t>(j)];
    for (const Interval& iv : u) {
      const double tolb = 1e-10 * std::max(1.0, std::abs(x(j)));
      if (x(j) < iv.lo - tolb || x(j) > iv.hi + tolb) continue;
      if (x(j) - iv.lo <= tolb && g(j) > 0.0) m(j) = 0.0;
      if (iv.hi - x(j) <= tolb && g(j) < 0.0) m(j) = 0.0;
      break;  // containing interval found
    }
  }
  return m;
}

// Projected-BFGS descent from a feasible start. The objective mixes
// log-scale plateaus (huge theta) with steep curved valleys, so the inverse
// Hessian is rescaled after the first accepted step, the model lives in the
// subspace of coordinates not pinned at a bound, a steepest-descent
// direction backs up the quasi-Newton one when its line search fails, and
// the descent restarts with a fresh Hessian (up to a few passes) while it
// still makes progress.
inline StartResult optimize_from(const ContrastEvaluator& f,
                                 const ModelSpec& spec, Theta x,
                                 const FitOptions& opts) {
  StartResult out;
  double fx = f(x);
  if (!std::isfinite(fx)) return out;  // infeasible start
  const int q = static_cast<int>(x.size());
  Vector g = fit_gradient(f, x, fx, opts.gradient);

  Matrix hinv = Matrix::Identity(q, q);
  bool converged = false;
  int iter = 0;
  constexpr int max_passes = 8;
  for (int pass = 0; pass < max_passes && iter < opts.max_iter; ++pass) {
    hinv.setIdentity();
    bool first_step = true;
    int tol_hits = 0;
    const double pass_start_f = fx;
    bool moved = false;
    Vector mask = bound_mask(spec, x, g);
    for (; iter < opts.max_iter; ++iter) {
      if (projected_gradient_norm(spec, x, g) <=
          1e-8 * (1.0 + std::abs(fx))) {
        converged = true;
        break;
      }
      const Vector gr = mask.cwiseProduct(g);  // gradient on free coords
      Vector d = -mask.cwiseProduct(hinv * gr);
      if (!d.allFinite() || d.dot(gr) >= 0.0) {
        hinv.setIdentity();
        first_step = true;
        d = -gr;
      }
      Theta xn;
      double fn = std::numeric_limits<double>::infinity();
      Vector gn;
      bool accepted =
          wolfe_search(f, spec, x, fx, gr, d, opts.gradient, xn, fn, gn);
      if (!accepted) {
        hinv.setIdentity();
        first_step = true;
        const double gmax = gr.cwiseAbs().maxCoeff();
        if (gmax > 0.0) {
          const Vector sd = -gr / std::max(1.0, gmax);
          accepted =
              wolfe_search(f, spec, x, fx, gr, sd, opts.gradient, xn, fn, gn);
        }
      }
      if (!accepted) break;  // numerically no descent left
      const Vector mask_new = bound_mask(spec, xn, gn);
      if ((mask_new - mask).cwiseAbs().maxCoeff() > 0.0) {
        // The pinned set changed; curvature collected so far mixes
        // subspaces, so start the model over.
        hinv.setIdentity();
        first_step = true;
      } else {
        const Vector s = mask.cwiseProduct(xn - x);
        const Vector y = mask.cwiseProduct(gn - g);
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          if (first_step) {
            hinv = (sy / y.squaredNorm()) * Matrix::Identity(q, q);
            first_step = false;
          }
          const Vector hy = hinv * y;
          const double yhy = y.dot(hy);
          hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                  (hy * s.transpose() + s * hy.transpose()) / sy;
        } else {
          hinv.setIdentity();
          first_step = true;
        }
      }
      mask = mask_new;
      const double df = fx - fn;
      x = std::move(xn);
      fx = fn;
      g = std::move(gn);
      moved = true;
      tol_hits = df < opts.tol ? tol_hits + 1 : 0;
      if (tol_hits >= 2) {
        converged = true;  // descent is flat to within tolerance
        break;
      }
    }
    if (converged) break;
    converged =
        projected_gradient_norm(spec, x, g) <= 1e-6 * (1.0 + std::abs(fx));
    // Another pass is useful only if this one still made headway.
    if (converged || !moved || !(fx < pass_start_f)) break;
  }
  out.theta = x;
  out.value = fx;
  out.converged = converged;
  out.grad_norm = g.norm();
  return out;
}

// Uniform draw from an interval union, each interval weighted by length.
inline double sample_bounds(const IntervalUnion& u, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (u.empty()) return -100.0 + 200.0 * unif(rng);
  double total = 0.0;
  for (const Interval& iv : u) total += iv.hi - iv.lo;
  if (total <= 0.0) return u.front().lo;  // union of points
  double pick = unif(rng) * total;
  for (const Interval& iv : u) {
    const double len = iv.hi - iv.lo;
    if (pick <= len) return iv.lo + pick;
    pick -= len;
  }
  return u.back().hi;
}

}  // namespace detail

inline FitResult fit(const ModelSpec& spec, const RealizedCov& rc,
                     const FitOptions& opts = FitOptions{}) {
  spec.validate();
  if (opts.n_starts < 0) throw FitError("fit: n_starts must be >= 0");
  if (opts.n_starts == 0 && !opts.init_override)
    throw FitError("fit: no starting points (n_starts == 0 and no init)");
  const ContrastEvaluator f(spec, rc);

  FitResult best;
  int feasible_starts = 0;
  auto consider = [&](const detail::StartResult& sr, int index) {
    if (!std::isfinite(sr.value)) return;
    ++feasible_starts;
    if (sr.value < best.contrast) {
      best.theta_hat = sr.theta;
      best.contrast = sr.value;
      best.converged = sr.converged;
      best.best_start_index = index;
      best.grad_norm = sr.grad_norm;
    }
  };

  int used = 0;
  if (opts.init_override) {
    Theta init = *opts.init_override;
    spec.check_theta(init);
    consider(detail::optimize_from(f, spec, spec.project(init), opts), -1);
    ++used;
  }
  // Random starts are drawn uniformly over the bound set and redrawn (up to
  // a cap) until the model covariance is positive definite there, so no
  // start is wasted on the barrier region.
  auto rng = make_stream(opts.seed, 0, 0x5747u);  // start-generation stream
  for (int s = 0; s < opts.n_starts; ++s) {
    Theta x0(spec.q);
    for (int attempt = 0; attempt < 200; ++attempt) {
      for (int j = 0; j < spec.q; ++j)
        x0(j) =
            detail::sample_bounds(spec.bounds[static_cast<size_t>(j)], rng);
      if (std::isfinite(f(x0))) break;
    }
    consider(detail::optimize_from(f, spec, x0, opts), s);
    ++used;
  }
  best.n_starts_used = used;
  if (feasible_starts == 0)
    throw FitError(
        "fit: every start was infeasible (model covariance never positive "
        "definite)");

  try {
    const SymMatrix av = asymptotic_cov(spec, best.theta_hat);
    best.vcov = av.mat();
    best.se = (av.mat().diagonal() / static_cast<double>(rc.n)).cwiseSqrt();
    best.se_ok = true;
  } catch (const AssumptionError& e) {
    best.se_ok = false;
    best.se_note = e.what();
  } catch (const NumericError& e) {
    best.se_ok = false;
    best.se_note = e.what();
  }
  return best;
}

// ---------------------------------------------------------------------------
// Quasi-likelihood-ratio goodness-of-fit test: T = n F(theta_hat), compared
// to the chi-squared law with pbar - q degrees of freedom.
// ---------------------------------------------------------------------------
struct GofResult {
  double t_stat = 0.0;
  int df = 0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
};

inline GofResult gof_test(const ModelSpec& spec, const FitResult& fr,
                          const RealizedCov& rc, double alpha = 0.05) {
  if (!rc.pd)
    throw FitError(
        "gof_test: realized covariance is singular; the test requires PD "
        "Q_XX");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw NumericError("gof_test: alpha must be in (0,1)");
  GofResult g;
  g.df = spec.df();
  if (g.df <= 0) throw FitError("gof_test: saturated model (pbar - q <= 0)");
  g.alpha = alpha;
  g.t_stat = static_cast<double>(rc.n) * fr.contrast;
  g.p_value = 1.0 - chi2_cdf(g.t_stat, g.df);
  g.reject = g.t_stat > chi2_quantile(alpha, g.df);
  return g;
}

}  // namespace hfsem
