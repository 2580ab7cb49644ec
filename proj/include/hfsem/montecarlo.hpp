#pragma once

// Replication harness: repeated simulate -> realized covariance -> fit ->
// test pipelines with deterministic per-replication RNG streams, summary
// tables (realized covariance, estimates, test statistics) and distribution
// diagnostics (histogram / QQ / empirical CDF) emitted as CSV.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hfsem/estimate.hpp"
#include "hfsem/simulate.hpp"

namespace hfsem {

// One model fitted to every replication, under its own fit protocol.
struct FittedModel {
  std::string name;
  ModelSpec spec;
  FitOptions options;
};

struct McConfig {
  int replications = 500;
  SimGrid grid{10000, 1e-3};
  ModelSpec true_spec;  // data-generating covariance structure
  Theta theta0;         // true parameter driving the simulation
  SdeConfig sde;
  std::vector<FittedModel> fitted;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const {
    if (replications < 1)
      throw ConfigError(0, "mc: replications must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw ConfigError(0, "mc: alpha must lie in (0, 1)");
    if (workers < 1) throw ConfigError(0, "mc: workers must be >= 1");
    grid.validate();
    true_spec.validate();
    true_spec.check_theta(theta0);
    for (const FittedModel& m : fitted) {
      m.spec.validate();
      if (m.spec.p() != true_spec.p())
        throw ConfigError(0, "mc: fitted model '" + m.name +
                                 "' has observed dimension " +
                                 std::to_string(m.spec.p()) +
                                 ", data-generating model has " +
                                 std::to_string(true_spec.p()));
    }
  }
};

// Raw outcome of one replication; failed replications keep the error text
// and are excluded from every aggregate.
struct RepRecord {
  int replication = -1;
  bool ok = false;
  std::string message;
  Vector vech_q;
  std::vector<Theta> theta_hat;  // one entry per fitted model
  std::vector<double> t_stat;
  std::vector<char> reject;
};

struct TStats {
  int df = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double q1 = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double q3 = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  double reject_rate = std::numeric_limits<double>::quiet_NaN();
};

struct McSummary {
  int replications = 0;
  int failures = 0;
  bool quality_warning = false;  // more than 5% of replications failed
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int n = 0;
  double h = 0.0;
  // Realized-covariance table, one row per vech entry.
  Vector q_mean, q_sd, q_theo, q_theo_sd;
  // Per fitted model: estimate table and test-statistic distribution.
  std::vector<std::string> model_names;
  std::vector<std::vector<std::string>> param_names;
  std::vector<Vector> theta_mean, theta_sd, theta_theo, theta_theo_se;
  std::vector<TStats> t_stats;
  std::vector<RepRecord> records;
};

// Linear-interpolation quantile (the "type 7" convention) on sorted data.
inline double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (sorted.size() == 1) return sorted.front();
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Kolmogorov-Smirnov statistic sup |F_emp - F_ref| for a sample against a
// reference CDF.
inline double ks_statistic(std::vector<double> values,
                           const std::function<double(double)>& cdf) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double ks = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    const double f = cdf(values[i]);
    ks = std::max(ks, std::abs(f - (static_cast<double>(i) + 1.0) / n));
    ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
  }
  return ks;
}

namespace detail {

// Per-(replication, model) fit seed derived from the master seed so that
// multi-start draws differ across replications but not across schedules.
inline std::uint64_t mc_fit_seed(std::uint64_t master, int rep, int model) {
  std::uint64_t z = master ^ (0x9e3779b97f4a7c15ull *
                              (static_cast<std::uint64_t>(rep) + 1));
  z ^= 0x94d049bb133111ebull * (static_cast<std::uint64_t>(model) + 1);
  z ^= z >> 31;
  return z;
}

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (v.empty()) return {nan, nan};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, nan};  // SD absent for a single record
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / (static_cast<double>(v.size()) - 1.0))};
}

inline RepRecord run_replication(const McConfig& cfg, int rep) {
  RepRecord rec;
  rec.replication = rep;
  try {
    const PathBundle pb = simulate_model(cfg.true_spec, cfg.theta0, cfg.sde,
                                         cfg.grid, cfg.seed,
                                         static_cast<std::uint64_t>(rep));
    const Matrix x = observed_series(pb);
    const RealizedCov rc = realized_cov(x, cfg.grid.h);
    rec.vech_q = vech_of(rc.q);
    for (size_t m = 0; m < cfg.fitted.size(); ++m) {
      FitOptions fo = cfg.fitted[m].options;
      fo.seed = mc_fit_seed(cfg.seed, rep, static_cast<int>(m));
      const FitResult fr = fit(cfg.fitted[m].spec, rc, fo);
      const GofResult gr = gof_test(cfg.fitted[m].spec, fr, rc, cfg.alpha);
      rec.theta_hat.push_back(fr.theta_hat);
      rec.t_stat.push_back(gr.t_stat);
      rec.reject.push_back(gr.reject ? 1 : 0);
    }
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.message = e.what();
    rec.theta_hat.clear();
    rec.t_stat.clear();
    rec.reject.clear();
  }
  return rec;
}

}  // namespace detail

// Runs the full study. Replications are independent tasks keyed by their
// index: the RNG streams, fit seeds and record slots depend only on that
// index, so any worker count yields the identical summary. Failures are
// recorded and excluded from aggregates rather than aborting the study.
inline McSummary run_study(const McConfig& cfg) {
  cfg.validate();
  const int R = cfg.replications;
  std::vector<RepRecord> records(static_cast<size_t>(R));

  const int workers = std::max(1, std::min(cfg.workers, R));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= R) return;
      records[static_cast<size_t>(r)] = detail::run_replication(cfg, r);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (std::thread& t : pool) t.join();
  }

  McSummary sum;
  sum.replications = R;
  sum.alpha = cfg.alpha;
  sum.seed = cfg.seed;
  sum.n = cfg.grid.n;
  sum.h = cfg.grid.h;

  std::vector<const RepRecord*> ok;
  for (const RepRecord& r : records) {
    if (r.ok)
      ok.push_back(&r);
    else
      ++sum.failures;
  }
  sum.quality_warning = sum.failures > 0.05 * static_cast<double>(R);
  if (sum.quality_warning)
    std::cerr << "run_study: warning: " << sum.failures << " of " << R
              << " replications failed; aggregates may be unreliable\n";

  // Realized-covariance table against the model-implied covariance.
  const SymMatrix sigma0 = implied_sigma(cfg.true_spec, cfg.theta0);
  const int pbar = half_dim(sigma0.dim());
  sum.q_theo = vech(sigma0).data;
  const SymMatrix w = w_matrix(sigma0);
  sum.q_theo_sd.resize(pbar);
  for (int i = 0; i < pbar; ++i)
    sum.q_theo_sd(i) = std::sqrt(w.mat()(i, i) / static_cast<double>(cfg.grid.n));
  sum.q_mean.resize(pbar);
  sum.q_sd.resize(pbar);
  std::vector<double> col;
  col.reserve(ok.size());
  for (int i = 0; i < pbar; ++i) {
    col.clear();
    for (const RepRecord* r : ok) col.push_back(r->vech_q(i));
    const auto [m, s] = detail::mean_sd(col);
    sum.q_mean(i) = m;
    sum.q_sd(i) = s;
  }

  // Per-model estimate and test tables. Theoretical columns are filled only
  // for a fitted model with the same parameterization as the generator.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t m = 0; m < cfg.fitted.size(); ++m) {
    const ModelSpec& spec = cfg.fitted[m].spec;
    sum.model_names.push_back(cfg.fitted[m].name);
    sum.param_names.push_back(spec.param_names);
    const int q = spec.q;
    Vector tmean(q), tsd(q), ttheo(q), tse(q);
    const bool is_true = spec.param_names == cfg.true_spec.param_names;
    if (is_true) {
      ttheo = cfg.theta0;
      try {
        const SymMatrix acov = asymptotic_cov(spec, cfg.theta0);
        for (int j = 0; j < q; ++j)
          tse(j) =
              std::sqrt(acov.mat()(j, j) / static_cast<double>(cfg.grid.n));
      } catch (const Error&) {
        tse.setConstant(nan);
      }
    } else {
      ttheo.setConstant(nan);
      tse.setConstant(nan);
    }
    for (int j = 0; j < q; ++j) {
      col.clear();
      for (const RepRecord* r : ok)
        col.push_back(r->theta_hat[m](j));
      const auto [mu, s] = detail::mean_sd(col);
      tmean(j) = mu;
      tsd(j) = s;
    }
    sum.theta_mean.push_back(std::move(tmean));
    sum.theta_sd.push_back(std::move(tsd));
    sum.theta_theo.push_back(std::move(ttheo));
    sum.theta_theo_se.push_back(std::move(tse));

    TStats ts;
    ts.df = spec.df();
    col.clear();
    double rejects = 0.0;
    for (const RepRecord* r : ok) {
      col.push_back(r->t_stat[m]);
      rejects += r->reject[m] ? 1.0 : 0.0;
    }
    const auto [mu, s] = detail::mean_sd(col);
    ts.mean = mu;
    ts.sd = s;
    if (!col.empty()) {
      std::sort(col.begin(), col.end());
      ts.min = col.front();
      ts.q1 = quantile_type7(col, 0.25);
      ts.median = quantile_type7(col, 0.5);
      ts.q3 = quantile_type7(col, 0.75);
      ts.max = col.back();
      ts.reject_rate = rejects / static_cast<double>(col.size());
    }
    sum.t_stats.push_back(ts);
  }

  sum.records = std::move(records);
  return sum;
}

namespace detail {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

// Writes summary.json, table_q.csv, table_theta.csv and table_t.csv into
// out_dir (created if absent).
inline void write_study_outputs(const McSummary& sum,
                                const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    nlohmann::json j;
    j["replications"] = sum.replications;
    j["failures"] = sum.failures;
    j["quality_warning"] = sum.quality_warning;
    j["alpha"] = sum.alpha;
    j["seed"] = sum.seed;
    j["n"] = sum.n;
    j["h"] = sum.h;
    nlohmann::json models = nlohmann::json::array();
    for (size_t m = 0; m < sum.model_names.size(); ++m) {
      const TStats& ts = sum.t_stats[m];
      models.push_back({{"name", sum.model_names[m]},
                        {"df", ts.df},
                        {"t_mean", ts.mean},
                        {"t_sd", ts.sd},
                        {"t_min", ts.min},
                        {"t_q1", ts.q1},
                        {"t_median", ts.median},
                        {"t_q3", ts.q3},
                        {"t_max", ts.max},
                        {"reject_rate", ts.reject_rate}});
    }
    j["models"] = models;
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "table_q.csv");
    out << "entry,row,col,mean,sd,theoretical,theoretical_sd\n";
    const int p = sum.q_theo.size() > 0
                      ? static_cast<int>(
                            (std::sqrt(8.0 * sum.q_theo.size() + 1.0) - 1.0) /
                            2.0)
                      : 0;
    for (int j = 0, k = 0; j < p; ++j)
      for (int i = j; i < p; ++i, ++k)
        out << "q" << i + 1 << j + 1 << "," << i + 1 << "," << j + 1 << ","
            << detail::fmt17(sum.q_mean(k)) << "," << detail::fmt17(sum.q_sd(k))
            << "," << detail::fmt17(sum.q_theo(k)) << ","
            << detail::fmt17(sum.q_theo_sd(k)) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "table_theta.csv");
    out << "model,param,mean,sd,theoretical,theoretical_se\n";
    for (size_t m = 0; m < sum.model_names.size(); ++m)
      for (int j = 0; j < sum.theta_mean[m].size(); ++j)
        out << sum.model_names[m] << "," << sum.param_names[m][static_cast<size_t>(j)] << ","
            << detail::fmt17(sum.theta_mean[m](j)) << ","
            << detail::fmt17(sum.theta_sd[m](j)) << ","
            << detail::fmt17(sum.theta_theo[m](j)) << ","
            << detail::fmt17(sum.theta_theo_se[m](j)) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "table_t.csv");
    out << "model,df,mean,sd,min,q1,median,q3,max,reject_rate\n";
    for (size_t m = 0; m < sum.model_names.size(); ++m) {
      const TStats& ts = sum.t_stats[m];
      out << sum.model_names[m] << "," << ts.df << ","
          << detail::fmt17(ts.mean) << "," << detail::fmt17(ts.sd) << ","
          << detail::fmt17(ts.min) << "," << detail::fmt17(ts.q1) << ","
          << detail::fmt17(ts.median) << "," << detail::fmt17(ts.q3) << ","
          << detail::fmt17(ts.max) << "," << detail::fmt17(ts.reject_rate)
          << "\n";
    }
  }
}

namespace detail {

// Extracts the replication series for a diagnostic selector together with
// the reference CDF / quantile function of its limit law.
//   q<i><j>     standardized sqrt(n)((Q)_ij - Sigma_ij), reference N(0,1)
//   theta<j>    standardized (theta_hat_j - theta0_j)/se_j of the first
//               fitted model with theoretical columns, reference N(0,1)
//   t<m>        test statistic of fitted model m (1-based), reference chi^2_df
struct DiagSeries {
  std::vector<double> values;
  std::function<double(double)> cdf;
  std::function<double(double)> quantile;  // at probability p
  bool known = false;
};

inline DiagSeries diag_series(const McSummary& sum, const std::string& name) {
  DiagSeries out;
  auto ok_records = [&]() {
    std::vector<const RepRecord*> v;
    for (const RepRecord& r : sum.records)
      if (r.ok) v.push_back(&r);
    return v;
  };
  if (name.size() == 3 && name[0] == 'q' && std::isdigit(name[1]) &&
      std::isdigit(name[2])) {
    int i = name[1] - '1';
    int j = name[2] - '1';
    if (i < j) std::swap(i, j);
    const int p = static_cast<int>(
        (std::sqrt(8.0 * sum.q_theo.size() + 1.0) - 1.0) / 2.0);
    if (i >= p || j < 0) return out;
    const int k = vech_index(p, i, j);
    const double scale = sum.q_theo_sd(k);
    for (const RepRecord* r : ok_records())
      out.values.push_back((r->vech_q(k) - sum.q_theo(k)) / scale);
    out.cdf = [](double x) { return normal_cdf(x); };
    out.quantile = [](double p_) { return normal_quantile(p_); };
    out.known = true;
    return out;
  }
  if (name.rfind("theta", 0) == 0) {
    const int j = std::atoi(name.c_str() + 5) - 1;
    for (size_t m = 0; m < sum.model_names.size(); ++m) {
      if (!std::isfinite(sum.theta_theo[m].size() > 0 ? sum.theta_theo[m](0)
                                                      : nan("")))
        continue;
      if (j < 0 || j >= sum.theta_theo[m].size()) return out;
      const double se = sum.theta_theo_se[m](j);
      for (const RepRecord* r : ok_records())
        out.values.push_back((r->theta_hat[m](j) - sum.theta_theo[m](j)) / se);
      out.cdf = [](double x) { return normal_cdf(x); };
      out.quantile = [](double p_) { return normal_quantile(p_); };
      out.known = true;
      return out;
    }
    return out;
  }
  if (name.size() >= 2 && name[0] == 't' && std::isdigit(name[1])) {
    const int m = std::atoi(name.c_str() + 1) - 1;
    if (m < 0 || m >= static_cast<int>(sum.t_stats.size())) return out;
    const double df = sum.t_stats[static_cast<size_t>(m)].df;
    for (const RepRecord* r : ok_records())
      out.values.push_back(r->t_stat[static_cast<size_t>(m)]);
    out.cdf = [df](double x) { return chi2_cdf(x, df); };
    out.quantile = [df](double p_) { return chi2_quantile(1.0 - p_, df); };
    out.known = true;
    return out;
  }
  return out;
}

}  // namespace detail

// Emits diag_<name>.csv per selector: histogram bins (Freedman-Diaconis
// width), QQ pairs against the quantity's limit law and empirical-CDF step
// points, all in one long-format file with a `part` column. An empty
// selector list is a no-op with a warning. With a single replication only
// the raw value row is written (no histogram).
inline void emit_diagnostics(const McSummary& sum,
                             const std::vector<std::string>& which,
                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (which.empty()) {
    std::cerr << "emit_diagnostics: warning: empty selector list, nothing to do\n";
    return;
  }
  fs::create_directories(out_dir);
  for (const std::string& name : which) {
    detail::DiagSeries s = detail::diag_series(sum, name);
    if (!s.known) {
      std::cerr << "emit_diagnostics: warning: unknown selector '" << name
                << "' skipped\n";
      continue;
    }
    std::ofstream out(fs::path(out_dir) / ("diag_" + name + ".csv"));
    out << "part,x,y\n";
    std::vector<double> v = s.values;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    if (n == 0) continue;
    if (n == 1) {
      out << "value," << detail::fmt17(v[0]) << ",0\n";
      continue;
    }
    // Histogram with Freedman-Diaconis bin width.
    const double iqr =
        quantile_type7(v, 0.75) - quantile_type7(v, 0.25);
    double width = 2.0 * iqr / std::cbrt(static_cast<double>(n));
    if (!(width > 0.0)) width = (v.back() - v.front()) > 0.0
                                    ? (v.back() - v.front())
                                    : 1.0;
    const int bins = std::max(
        1, static_cast<int>(std::ceil((v.back() - v.front()) / width)));
    std::vector<int> count(static_cast<size_t>(bins), 0);
    for (double x : v) {
      int b = static_cast<int>((x - v.front()) / width);
      b = std::min(b, bins - 1);
      ++count[static_cast<size_t>(b)];
    }
    for (int b = 0; b < bins; ++b)
      out << "hist," << detail::fmt17(v.front() + (b + 0.5) * width) << ","
          << count[static_cast<size_t>(b)] << "\n";
    for (size_t i = 0; i < n; ++i) {
      const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      out << "qq," << detail::fmt17(s.quantile(p)) << ","
          << detail::fmt17(v[i]) << "\n";
    }
    for (size_t i = 0; i < n; ++i)
      out << "ecdf," << detail::fmt17(v[i]) << ","
          << detail::fmt17((static_cast<double>(i) + 1.0) /
                           static_cast<double>(n))
          << "\n";
  }
}

}  // namespace hfsem
