#pragma once
// Latent-variable covariance-structure model: matrix templates mapping a free
// parameter vector theta to the block matrices (Lambda_x1, Lambda_x2, B0,
// Gamma, Sigma_xixi, Sigma_dd, Sigma_ee, Sigma_zz), the implied covariance
// Sigma(theta), its Jacobian, the asymptotic covariance of the estimator, and
// identifiability diagnostics.

#include <array>
#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hfsem/matstat.hpp"

namespace hfsem {

using Theta = Vector;

// ---------------------------------------------------------------------------
// Matrix templates: each cell is fixed to a constant, a free parameter, or a
// scaled copy of a free parameter (equality constraints).
// ---------------------------------------------------------------------------
enum class CellKind { Fixed, Free, Tied };

struct Cell {
  CellKind kind = CellKind::Fixed;
  double value = 0.0;  // Fixed only
  int param = -1;      // Free/Tied: index into theta
  double scale = 1.0;  // Tied multiplier (Free uses 1)
};

struct MatrixTemplate {
  int rows = 0, cols = 0;
  bool symmetric = false;
  std::vector<Cell> cells;  // row-major

  Cell& at(int i, int j) { return cells[static_cast<size_t>(i) * cols + j]; }
  const Cell& at(int i, int j) const {
    return cells[static_cast<size_t>(i) * cols + j];
  }

  Matrix materialize(const Theta& theta) const {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const Cell& c = at(i, j);
        m(i, j) = c.kind == CellKind::Fixed ? c.value : c.scale * theta(c.param);
      }
    return m;
  }

  bool depends_on(int param) const {
    for (const Cell& c : cells)
      if (c.kind != CellKind::Fixed && c.param == param) return true;
    return false;
  }

  // d(materialize)/d(theta_param): sparse 0/scale pattern.
  Matrix derivative(int param) const {
    Matrix d = Matrix::Zero(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const Cell& c = at(i, j);
        if (c.kind != CellKind::Fixed && c.param == param) d(i, j) = c.scale;
      }
    return d;
  }
};

// ---------------------------------------------------------------------------
// Parameter bounds: each coordinate ranges over a union of closed intervals
// (e.g. [-100,-0.1] u [0.1,100]); an empty union means unconstrained.
// ---------------------------------------------------------------------------
struct Interval {
  double lo = 0.0, hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

using IntervalUnion = std::vector<Interval>;

inline bool bounds_contain(const IntervalUnion& u, double x) {
  if (u.empty()) return true;
  for (const Interval& iv : u)
    if (iv.contains(x)) return true;
  return false;
}

// Nearest point of the union; on a tie the interval on the side of sign(x)
// wins (x == 0 counts as positive).
inline double project_scalar(const IntervalUnion& u, double x) {
  if (bounds_contain(u, x)) return x;
  double best = 0.0, best_dist = std::numeric_limits<double>::infinity();
  for (const Interval& iv : u) {
    const double cand = std::min(std::max(x, iv.lo), iv.hi);
    const double dist = std::abs(cand - x);
    const bool same_side = (x >= 0.0) ? cand >= 0.0 : cand < 0.0;
    if (dist < best_dist - 1e-300 ||
        (dist <= best_dist && same_side &&
         !((x >= 0.0) ? best >= 0.0 : best < 0.0))) {
      best = cand;
      best_dist = dist;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// ModelSpec: dimensions, the eight templates, and parameter metadata.
// ---------------------------------------------------------------------------
enum class TemplateId {
  LambdaX1,
  LambdaX2,
  B0,
  Gamma,
  SigmaXiXi,
  SigmaDd,
  SigmaEe,
  SigmaZz
};

struct ModelSpec {
  int p1 = 0, p2 = 0, k1 = 0, k2 = 0;
  MatrixTemplate lambda_x1, lambda_x2, b0, gamma;
  MatrixTemplate sigma_xixi, sigma_dd, sigma_ee, sigma_zz;
  int q = 0;
  std::vector<std::string> param_names;
  std::vector<IntervalUnion> bounds;  // size q; empty union = unconstrained

  int p() const { return p1 + p2; }
  int pbar() const { return half_dim(p()); }
  int df() const { return pbar() - q; }

  const MatrixTemplate& tmpl(TemplateId t) const {
    switch (t) {
      case TemplateId::LambdaX1: return lambda_x1;
      case TemplateId::LambdaX2: return lambda_x2;
      case TemplateId::B0: return b0;
      case TemplateId::Gamma: return gamma;
      case TemplateId::SigmaXiXi: return sigma_xixi;
      case TemplateId::SigmaDd: return sigma_dd;
      case TemplateId::SigmaEe: return sigma_ee;
      default: return sigma_zz;
    }
  }

  std::array<const MatrixTemplate*, 8> all_templates() const {
    return {&lambda_x1, &lambda_x2,  &b0,       &gamma,
            &sigma_xixi, &sigma_dd, &sigma_ee, &sigma_zz};
  }

  void check_theta(const Theta& theta) const {
    if (theta.size() != q)
      throw DimensionError("theta length " + std::to_string(theta.size()) +
                           " does not match q=" + std::to_string(q));
    if (!theta.allFinite()) throw NumericError("theta has non-finite entries");
  }

  bool feasible(const Theta& theta) const {
    if (theta.size() != q) return false;
    for (int j = 0; j < q; ++j)
      if (!bounds_contain(bounds[static_cast<size_t>(j)], theta(j)))
        return false;
    return true;
  }

  Theta project(const Theta& theta) const {
    Theta out = theta;
    for (int j = 0; j < q; ++j)
      out(j) = project_scalar(bounds[static_cast<size_t>(j)], theta(j));
    return out;
  }

  void validate() const {
    if (p1 < 1 || p2 < 1 || k1 < 1 || k2 < 1)
      throw DimensionError("model dimensions must be positive");
    if (k1 > p1 || k2 > p2)
      throw DimensionError("latent dimension exceeds observed block size");
    auto expect = [](const MatrixTemplate& t, int r, int c, const char* nm) {
      if (t.rows != r || t.cols != c)
        throw DimensionError(std::string("template ") + nm +
                             " has wrong shape");
    };
    expect(lambda_x1, p1, k1, "lambda_x1");
    expect(lambda_x2, p2, k2, "lambda_x2");
    expect(b0, k2, k2, "b0");
    expect(gamma, k2, k1, "gamma");
    expect(sigma_xixi, k1, k1, "sigma_xixi");
    expect(sigma_dd, p1, p1, "sigma_dd");
    expect(sigma_ee, p2, p2, "sigma_ee");
    expect(sigma_zz, k2, k2, "sigma_zz");
    for (int i = 0; i < k2; ++i) {
      const Cell& c = b0.at(i, i);
      if (c.kind != CellKind::Fixed || c.value != 0.0)
        throw NumericError("b0 diagonal cells must be fixed to zero");
    }
    std::vector<int> uses(static_cast<size_t>(q), 0);
    for (const MatrixTemplate* t : all_templates()) {
      for (const Cell& c : t->cells) {
        if (c.kind == CellKind::Fixed) continue;
        if (c.param < 0 || c.param >= q)
          throw DimensionError("cell parameter index out of range");
        ++uses[static_cast<size_t>(c.param)];
      }
      if (t->symmetric)
        for (int i = 0; i < t->rows; ++i)
          for (int j = 0; j < i; ++j) {
            const Cell &a = t->at(i, j), &b = t->at(j, i);
            if (a.kind != b.kind || a.param != b.param || a.value != b.value ||
                a.scale != b.scale)
              throw NumericError("symmetric template has unmirrored cells");
          }
    }
    for (int j = 0; j < q; ++j)
      if (uses[static_cast<size_t>(j)] == 0)
        throw DimensionError("parameter " + std::to_string(j) +
                             " appears in no template cell");
    if (pbar() < q)
      throw DimensionError("more free parameters than distinct moments");
    if (static_cast<int>(param_names.size()) != q ||
        static_cast<int>(bounds.size()) != q)
      throw DimensionError("parameter metadata length does not match q");
    for (const IntervalUnion& u : bounds)
      for (const Interval& iv : u)
        if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
          throw NumericError("malformed bound interval");
  }
};

// ---------------------------------------------------------------------------
// ModelBuilder: incremental construction with named parameters. A name's
// index is its order of first appearance.
// ---------------------------------------------------------------------------
class ModelBuilder {
 public:
  ModelBuilder(int p1, int p2, int k1, int k2) {
    spec_.p1 = p1;
    spec_.p2 = p2;
    spec_.k1 = k1;
    spec_.k2 = k2;
    init(spec_.lambda_x1, p1, k1, false);
    init(spec_.lambda_x2, p2, k2, false);
    init(spec_.b0, k2, k2, false);
    init(spec_.gamma, k2, k1, false);
    init(spec_.sigma_xixi, k1, k1, true);
    init(spec_.sigma_dd, p1, p1, true);
    init(spec_.sigma_ee, p2, p2, true);
    init(spec_.sigma_zz, k2, k2, true);
  }

  ModelBuilder& fix(TemplateId t, int i, int j, double v) {
    Cell c;
    c.kind = CellKind::Fixed;
    c.value = v;
    set(t, i, j, c);
    return *this;
  }

  ModelBuilder& free(TemplateId t, int i, int j, const std::string& name) {
    Cell c;
    c.kind = CellKind::Free;
    c.param = index_of(name);
    set(t, i, j, c);
    return *this;
  }

  ModelBuilder& tie(TemplateId t, int i, int j, const std::string& name,
                    double scale) {
    if (!std::isfinite(scale) || scale == 0.0)
      throw NumericError("tie scale must be finite and nonzero");
    Cell c;
    c.kind = CellKind::Tied;
    c.param = index_of(name);
    c.scale = scale;
    set(t, i, j, c);
    return *this;
  }

  ModelBuilder& bound(const std::string& name, IntervalUnion u) {
    const auto it = names_.find(name);
    if (it == names_.end())
      throw DimensionError("bound references unknown parameter '" + name +
                           "'");
    spec_.bounds[static_cast<size_t>(it->second)] = std::move(u);
    return *this;
  }

  int param_index(const std::string& name) const {
    const auto it = names_.find(name);
    return it == names_.end() ? -1 : it->second;
  }

  ModelSpec build() const {
    ModelSpec out = spec_;
    out.validate();
    return out;
  }

 private:
  static void init(MatrixTemplate& t, int r, int c, bool sym) {
    t.rows = r;
    t.cols = c;
    t.symmetric = sym;
    t.cells.assign(static_cast<size_t>(r) * c, Cell{});
  }

  MatrixTemplate& tmpl(TemplateId t) {
    return const_cast<MatrixTemplate&>(spec_.tmpl(t));
  }

  int index_of(const std::string& name) {
    const auto it = names_.find(name);
    if (it != names_.end()) return it->second;
    const int idx = spec_.q++;
    names_.emplace(name, idx);
    spec_.param_names.push_back(name);
    spec_.bounds.emplace_back();
    return idx;
  }

  void set(TemplateId t, int i, int j, const Cell& c) {
    MatrixTemplate& m = tmpl(t);
    if (i < 0 || i >= m.rows || j < 0 || j >= m.cols)
      throw DimensionError("template cell index out of range");
    m.at(i, j) = c;
    if (m.symmetric) m.at(j, i) = c;
  }

  ModelSpec spec_;
  std::unordered_map<std::string, int> names_;
};

// ---------------------------------------------------------------------------
// Materialized model matrices (shared by the covariance map, its Jacobian,
// and the path simulator's reduced form).
// ---------------------------------------------------------------------------
struct ModelMatrices {
  Matrix lambda_x1, lambda_x2, b0, gamma;
  Matrix sigma_xixi, sigma_dd, sigma_ee, sigma_zz;
  Matrix psi_inv;  // (I - B0)^{-1}
};

inline double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

inline ModelMatrices materialize_model(const ModelSpec& spec,
                                       const Theta& theta) {
  spec.check_theta(theta);
  ModelMatrices m;
  m.lambda_x1 = spec.lambda_x1.materialize(theta);
  m.lambda_x2 = spec.lambda_x2.materialize(theta);
  m.b0 = spec.b0.materialize(theta);
  m.gamma = spec.gamma.materialize(theta);
  m.sigma_xixi = spec.sigma_xixi.materialize(theta);
  m.sigma_dd = spec.sigma_dd.materialize(theta);
  m.sigma_ee = spec.sigma_ee.materialize(theta);
  m.sigma_zz = spec.sigma_zz.materialize(theta);
  const Matrix psi = Matrix::Identity(spec.k2, spec.k2) - m.b0;
  const double cond = condition_number(psi);
  if (!(cond <= 1e12))
    throw AssumptionError("E", "I - B0 is singular or ill-conditioned "
                               "(condition number " +
                                   std::to_string(cond) + ")");
  m.psi_inv = psi.inverse();
  return m;
}

// Sigma(theta): the p x p implied instantaneous covariance, assembled from
//   S11 = L1 Sxx L1' + Sdd
//   S12 = L1 Sxx G' P' L2'
//   S22 = L2 P (G Sxx G' + Szz) P' L2' + See        with P = (I - B0)^{-1}.
inline SymMatrix implied_sigma(const ModelSpec& spec, const Theta& theta) {
  const ModelMatrices m = materialize_model(spec, theta);
  const int p1 = spec.p1, p2 = spec.p2, p = spec.p();
  const Matrix& P = m.psi_inv;
  Matrix sigma(p, p);
  sigma.topLeftCorner(p1, p1) =
      m.lambda_x1 * m.sigma_xixi * m.lambda_x1.transpose() + m.sigma_dd;
  const Matrix cross = m.lambda_x1 * m.sigma_xixi * m.gamma.transpose() *
                       P.transpose() * m.lambda_x2.transpose();
  sigma.topRightCorner(p1, p2) = cross;
  sigma.bottomLeftCorner(p2, p1) = cross.transpose();
  const Matrix inner =
      m.gamma * m.sigma_xixi * m.gamma.transpose() + m.sigma_zz;
  sigma.bottomRightCorner(p2, p2) =
      m.lambda_x2 * P * inner * P.transpose() * m.lambda_x2.transpose() +
      m.sigma_ee;
  return SymMatrix(std::move(sigma));
}

// Jacobian d vech Sigma / d theta', pbar x q, assembled analytically by the
// product rule on each block (d(P) = P dB0 P since P = (I-B0)^{-1}).
inline Matrix sigma_jacobian(const ModelSpec& spec, const Theta& theta) {
  const ModelMatrices m = materialize_model(spec, theta);
  const int p1 = spec.p1, p2 = spec.p2, p = spec.p();
  const Matrix& L1 = m.lambda_x1;
  const Matrix& L2 = m.lambda_x2;
  const Matrix& G = m.gamma;
  const Matrix& Sxx = m.sigma_xixi;
  const Matrix& P = m.psi_inv;
  const Matrix inner = G * Sxx * G.transpose() + m.sigma_zz;

  Matrix jac(spec.pbar(), spec.q);
  Matrix dsig(p, p);
  for (int j = 0; j < spec.q; ++j) {
    const Matrix dL1 = spec.lambda_x1.derivative(j);
    const Matrix dL2 = spec.lambda_x2.derivative(j);
    const Matrix dB0 = spec.b0.derivative(j);
    const Matrix dG = spec.gamma.derivative(j);
    const Matrix dSxx = spec.sigma_xixi.derivative(j);
    const Matrix dSdd = spec.sigma_dd.derivative(j);
    const Matrix dSee = spec.sigma_ee.derivative(j);
    const Matrix dSzz = spec.sigma_zz.derivative(j);
    const Matrix dP = P * dB0 * P;

    dsig.topLeftCorner(p1, p1) = dL1 * Sxx * L1.transpose() +
                                 L1 * dSxx * L1.transpose() +
                                 L1 * Sxx * dL1.transpose() + dSdd;
    const Matrix core = Sxx * G.transpose() * P.transpose();
    const Matrix dcore = dSxx * G.transpose() * P.transpose() +
                         Sxx * dG.transpose() * P.transpose() +
                         Sxx * G.transpose() * dP.transpose();
    dsig.topRightCorner(p1, p2) = dL1 * core * L2.transpose() +
                                  L1 * dcore * L2.transpose() +
                                  L1 * core * dL2.transpose();
    dsig.bottomLeftCorner(p2, p1) =
        dsig.topRightCorner(p1, p2).transpose();
    const Matrix dinner = dG * Sxx * G.transpose() + G * dSxx * G.transpose() +
                          G * Sxx * dG.transpose() + dSzz;
    const Matrix R = P * inner * P.transpose();
    const Matrix dR = dP * inner * P.transpose() + P * dinner * P.transpose() +
                      P * inner * dP.transpose();
    dsig.bottomRightCorner(p2, p2) = dL2 * R * L2.transpose() +
                                     L2 * dR * L2.transpose() +
                                     L2 * R * dL2.transpose() + dSee;
    jac.col(j) = vech_of(dsig);
  }
  return jac;
}

// Central finite-difference cross-check of sigma_jacobian.
inline Matrix sigma_jacobian_fd(const ModelSpec& spec, const Theta& theta,
                                double rel_step = 1e-6) {
  spec.check_theta(theta);
  Matrix jac(spec.pbar(), spec.q);
  Theta t = theta;
  for (int j = 0; j < spec.q; ++j) {
    const double step = rel_step * (1.0 + std::abs(theta(j)));
    t(j) = theta(j) + step;
    const Vector hi = vech(implied_sigma(spec, t)).data;
    t(j) = theta(j) - step;
    const Vector lo = vech(implied_sigma(spec, t)).data;
    t(j) = theta(j);
    jac.col(j) = (hi - lo) / (2.0 * step);
  }
  return jac;
}

inline int svd_rank(const Matrix& m, double rel_cutoff = 1e-8) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double cut = rel_cutoff * s(0);
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

// Asymptotic covariance of the minimum-contrast estimator:
// (Delta' W(Sigma)^{-1} Delta)^{-1}; the SE of theta_hat_j at sample size n
// is sqrt(diag_j / n).
inline SymMatrix asymptotic_cov(const ModelSpec& spec, const Theta& theta) {
  const Matrix delta = sigma_jacobian(spec, theta);
  const int r = svd_rank(delta);
  if (r < spec.q)
    throw AssumptionError(
        "H", "covariance-structure Jacobian is rank deficient (rank " +
                 std::to_string(r) + " < q=" + std::to_string(spec.q) + ")");
  const SymMatrix sigma = implied_sigma(spec, theta);
  const SymMatrix w = w_matrix(sigma);
  Eigen::LLT<Matrix> llt(w.mat());
  if (llt.info() != Eigen::Success)
    throw NumericError("asymptotic_cov: implied covariance is not positive "
                       "definite");
  const Matrix h = delta.transpose() * llt.solve(delta);
  Eigen::LLT<Matrix> hllt(h);
  if (hllt.info() != Eigen::Success)
    throw AssumptionError("H",
                          "Delta' W^{-1} Delta is not positive definite");
  return SymMatrix(hllt.solve(Matrix::Identity(spec.q, spec.q)));
}

// ---------------------------------------------------------------------------
// Local identifiability and regularity diagnostics. Always returns.
// ---------------------------------------------------------------------------
struct IdentReport {
  int rank_delta = 0;
  int q = 0;
  bool h_pass = false;       // rank Delta == q
  Vector delta_singvals;
  bool sigma_dd_pd = false;  // unique-factor variance of X1 block PD
  bool sigma_ee_pd = false;  // unique-factor variance of X2 block PD
  double psi_cond = std::numeric_limits<double>::infinity();
  bool e_pass = false;       // I - B0 well conditioned
  int lambda_x1_rank = 0;
  bool f_pass = false;       // Lambda_x1 full column rank

  bool all_pass() const {
    return h_pass && sigma_dd_pd && sigma_ee_pd && e_pass && f_pass;
  }
};

inline IdentReport local_identifiability(const ModelSpec& spec,
                                         const Theta& theta) {
  IdentReport rep;
  rep.q = spec.q;
  spec.check_theta(theta);
  const Matrix psi = Matrix::Identity(spec.k2, spec.k2) -
                     spec.b0.materialize(theta);
  rep.psi_cond = condition_number(psi);
  rep.e_pass = rep.psi_cond <= 1e12;
  auto pd = [](const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    return llt.info() == Eigen::Success;
  };
  rep.sigma_dd_pd = pd(spec.sigma_dd.materialize(theta));
  rep.sigma_ee_pd = pd(spec.sigma_ee.materialize(theta));
  const Matrix l1 = spec.lambda_x1.materialize(theta);
  rep.lambda_x1_rank = svd_rank(l1);
  rep.f_pass = rep.lambda_x1_rank == spec.k1;
  if (rep.e_pass) {
    const Matrix delta = sigma_jacobian(spec, theta);
    Eigen::JacobiSVD<Matrix> svd(delta);
    rep.delta_singvals = svd.singularValues();
    rep.rank_delta = svd_rank(delta);
  }
  rep.h_pass = rep.rank_delta == spec.q;
  return rep;
}

}  // namespace hfsem
