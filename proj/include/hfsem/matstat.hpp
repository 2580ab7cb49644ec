#pragma once
// Symmetric-matrix calculus (vec/vech, duplication matrix, pseudoinverse,
// Kronecker sandwiches) and the chi-squared distribution functions used by
// the estimation and testing modules.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <utility>

#include "hfsem/errors.hpp"

namespace hfsem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------
// SymMatrix: a square matrix with enforced exact symmetry.
// ---------------------------------------------------------------------------
class SymMatrix {
 public:
  explicit SymMatrix(Matrix m, double tol = 1e-9) : m_(std::move(m)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols())
      throw DimensionError("SymMatrix: need a nonempty square matrix");
    if (!all_finite(m_)) throw NumericError("SymMatrix: non-finite entries");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > tol * scale)
      throw NumericError("SymMatrix: input is not symmetric");
    m_ = ((m_ + m_.transpose()) / 2.0).eval();
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Matrix m_;
};

inline int half_dim(int p) { return p * (p + 1) / 2; }

// Position of (i,j), i >= j, inside vech (column-major lower triangle).
inline int vech_index(int p, int i, int j) {
  if (j > i) std::swap(i, j);
  return j * p - j * (j - 1) / 2 + (i - j);
}

// HalfVec: vech(A) together with the originating dimension.
struct HalfVec {
  int dim;
  Vector data;
};

inline HalfVec vech(const SymMatrix& a) {
  const int p = a.dim();
  Vector v(half_dim(p));
  int k = 0;
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) v(k++) = a(i, j);
  return {p, std::move(v)};
}

// Lower-triangle vech of a plain square matrix (assumed symmetric).
inline Vector vech_of(const Matrix& a) {
  const int p = static_cast<int>(a.rows());
  Vector v(half_dim(p));
  int k = 0;
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) v(k++) = a(i, j);
  return v;
}

inline SymMatrix unvech(const HalfVec& h) {
  const int p = h.dim;
  if (h.data.size() != half_dim(p))
    throw DimensionError("unvech: data length does not match dim");
  Matrix a(p, p);
  int k = 0;
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) a(i, j) = a(j, i) = h.data(k++);
  return SymMatrix(std::move(a));
}

inline Vector vec_of(const Matrix& a) {
  return Eigen::Map<const Vector>(a.data(), a.size());
}

// ---------------------------------------------------------------------------
// Duplication matrix D_p with vec A = D_p vech A, and its Moore-Penrose
// inverse. D'D is diagonal (1 for diagonal cells, 2 off-diagonal), so the
// pseudoinverse is exact.
// ---------------------------------------------------------------------------
struct DuplicationPair {
  int dim;
  Matrix D;      // p^2 x pbar, 0/1 entries
  Matrix Dplus;  // pbar x p^2
};

inline DuplicationPair duplication(int p) {
  if (p < 1) throw DimensionError("duplication: p must be >= 1");
  const int pbar = half_dim(p);
  Matrix D = Matrix::Zero(p * p, pbar);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) D(j * p + i, vech_index(p, i, j)) = 1.0;
  Matrix Dplus = D.transpose();
  for (int k = 0; k < pbar; ++k) Dplus.row(k) /= Dplus.row(k).sum();
  return {p, std::move(D), std::move(Dplus)};
}

// ---------------------------------------------------------------------------
// Moore-Penrose pseudoinverse via SVD. tol < 0 selects the default relative
// cutoff max(rows,cols) * eps * sigma_max.
// ---------------------------------------------------------------------------
inline Matrix pinv(const Matrix& m, double tol = -1.0) {
  if (!all_finite(m)) throw NumericError("pinv: non-finite entries");
  if (m.size() == 0) throw DimensionError("pinv: empty matrix");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double cut =
      tol >= 0 ? tol * smax
               : static_cast<double>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<double>::epsilon() * smax;
  Vector sinv = Vector::Zero(s.size());
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > cut && s(i) > 0.0) sinv(i) = 1.0 / s(i);
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int j = 0; j < a.cols(); ++j)
    for (int i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// ---------------------------------------------------------------------------
// W(Sigma) = 2 D+ (Sigma (x) Sigma) D+' : the asymptotic covariance of
// sqrt(n) vech Q_XX. pbar x pbar, PD whenever Sigma is PD.
// ---------------------------------------------------------------------------
inline SymMatrix w_matrix(const SymMatrix& sigma) {
  const int p = sigma.dim();
  const DuplicationPair dp = duplication(p);
  Matrix w = 2.0 * dp.Dplus * kron(sigma.mat(), sigma.mat()) *
             dp.Dplus.transpose();
  return SymMatrix(std::move(w));
}

// ---------------------------------------------------------------------------
// Regularized lower incomplete gamma P(a,x), series / continued-fraction
// split at x = a + 1, and the chi-squared cdf / upper-alpha quantile on top
// of it.
// ---------------------------------------------------------------------------
namespace detail {

inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double fac = d * c;
    h *= fac;
    if (std::abs(fac - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

inline double gamma_p(double a, double x) {
  if (a <= 0.0) throw NumericError("gamma_p: a must be positive");
  if (x < 0.0) throw NumericError("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  return x < a + 1.0 ? detail::gamma_p_series(a, x)
                     : 1.0 - detail::gamma_q_contfrac(a, x);
}

inline double chi2_cdf(double x, int df) {
  if (df < 1) throw NumericError("chi2_cdf: df must be >= 1");
  if (x < 0.0) throw NumericError("chi2_cdf: x must be nonnegative");
  return gamma_p(df / 2.0, x / 2.0);
}

inline double chi2_pdf(double x, int df) {
  if (x <= 0.0) return 0.0;
  const double a = df / 2.0;
  return std::exp((a - 1.0) * std::log(x) - x / 2.0 - a * std::log(2.0) -
                  std::lgamma(a));
}

// Upper-alpha point: the x with P(chi2_df > x) = alpha.
inline double chi2_quantile(double alpha, int df) {
  if (df < 1) throw NumericError("chi2_quantile: df must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw NumericError("chi2_quantile: alpha must be in (0,1)");
  const double target = 1.0 - alpha;
  double lo = 0.0, hi = std::max(10.0, 2.0 * df);
  while (chi2_cdf(hi, df) < target) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(mid, df) < target ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {  // Newton polish
    const double f = chi2_cdf(x, df) - target;
    const double d = chi2_pdf(x, df);
    if (d <= 0.0) break;
    const double step = f / d;
    if (x - step > 0.0) x -= step;
  }
  return x;
}

// Standard normal cdf and quantile (quantile used for Q-Q diagnostics).
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0))
    throw NumericError("normal_quantile: u must be in (0,1)");
  // Acklam's rational approximation, then one Halley step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (u < plow) {
    const double q = std::sqrt(-2 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (u <= phigh) {
    const double q = u - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = normal_cdf(x) - u;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI);
  const double w = e * std::sqrt(2 * M_PI) * std::exp(0.5 * x * x);
  x -= w / (1 + 0.5 * x * w);
  (void)pdf;
  return x;
}

}  // namespace hfsem
