// hfsem: simulate latent-factor diffusion systems, estimate their
// covariance structure from realized covariance, run the fit test, and
// drive replication studies — all from declarative config files.
//
// Exit codes: 0 success, 1 usage or input/parse error, 2 numerical or
// model-assumption failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hfsem/config.hpp"
#include "hfsem/estimate.hpp"
#include "hfsem/montecarlo.hpp"
#include "hfsem/simulate.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct CommonArgs {
  std::string config;
  std::string data;
  std::string out;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  int reps = 0;  // 0 = take the config value
  std::string format = "json";
  int workers = 0;  // 0 = take the config value
  std::vector<std::string> diag;
  bool latents = false;
};

std::string model_name_of(const std::string& path) {
  const std::string stem = fs::path(path).stem().string();
  return stem.empty() ? std::string("model") : stem;
}

// Reads a paths CSV as written by the simulate subcommand: header
// `t,x1_1..,x2_1..` with optional extra columns (ignored), one sample per
// row. Returns the observed block and the step size taken from the first
// two time stamps.
std::pair<hfsem::Matrix, double> read_paths_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hfsem::DataError("cannot read data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw hfsem::DataError("data file '" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::istringstream iss(line);
    std::string tok;
    while (std::getline(iss, tok, ',')) header.push_back(tok);
  }
  if (header.empty() || header[0] != "t")
    throw hfsem::DataError("data file '" + path +
                           "': first column must be 't'");
  std::vector<int> keep;  // observed-series columns, in header order
  for (size_t j = 1; j < header.size(); ++j)
    if (header[j].rfind("x1_", 0) == 0 || header[j].rfind("x2_", 0) == 0)
      keep.push_back(static_cast<int>(j));
  if (keep.empty())
    throw hfsem::DataError("data file '" + path +
                           "': no x1_*/x2_* columns found");

  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::istringstream iss(line);
    std::string tok;
    while (std::getline(iss, tok, ',')) {
      try {
        cells.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw hfsem::DataError("data file '" + path + "' line " +
                               std::to_string(lineno) +
                               ": bad number '" + tok + "'");
      }
    }
    if (cells.size() != header.size())
      throw hfsem::DataError("data file '" + path + "' line " +
                             std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
    times.push_back(cells[0]);
    std::vector<double> row;
    row.reserve(keep.size());
    for (int j : keep) row.push_back(cells[static_cast<size_t>(j)]);
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2)
    throw hfsem::DataError("data file '" + path +
                           "': need at least 2 samples");
  const double h = times[1] - times[0];
  if (!(h > 0.0))
    throw hfsem::DataError("data file '" + path +
                           "': time stamps must be strictly increasing");
  hfsem::Matrix m(static_cast<long>(rows.size()),
                  static_cast<long>(keep.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<long>(i), static_cast<long>(j)) = rows[i][j];
  return {std::move(m), h};
}

json vector_json(const hfsem::Vector& v) {
  json a = json::array();
  for (long i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json matrix_json(const hfsem::Matrix& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (long j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json ident_json(const hfsem::IdentReport& r) {
  return json{{"rank", r.rank_delta},
              {"free_parameters", r.q},
              {"jacobian_full_rank", r.h_pass},
              {"unique_factor_covariances_pd", r.sigma_dd_pd && r.sigma_ee_pd},
              {"structural_matrix_condition", r.psi_cond},
              {"structural_matrix_ok", r.e_pass},
              {"loading_rank_ok", r.f_pass},
              {"all_pass", r.all_pass()}};
}

void write_text(const std::string& out_dir, const std::string& name,
                const std::string& text) {
  if (out_dir.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  fs::create_directories(out_dir);
  const fs::path p = fs::path(out_dir) / name;
  std::ofstream f(p);
  if (!f) throw hfsem::DataError("cannot write '" + p.string() + "'");
  f << text;
  if (!text.empty() && text.back() != '\n') f << "\n";
  std::cerr << "wrote " << p.string() << "\n";
}

// The realized covariance the fit/test subcommands operate on: either an
// observed-series CSV or a fresh config-driven simulation.
hfsem::RealizedCov make_input(const hfsem::ParsedConfig& pc,
                              const CommonArgs& args) {
  if (!args.data.empty()) {
    auto [obs, h] = read_paths_csv(args.data);
    const int p = pc.model.p1 + pc.model.p2;
    if (obs.cols() != p)
      throw hfsem::DataError(
          "data has " + std::to_string(obs.cols()) +
          " observed columns, model expects " + std::to_string(p));
    return hfsem::realized_cov(obs, h);
  }
  if (!pc.theta0 || !pc.sde || !pc.grid)
    throw hfsem::ConfigError(
        0, "config must provide theta0, [sde.*] and [grid] to simulate "
           "(or pass --data)");
  const hfsem::PathBundle pb = hfsem::simulate_model(
      pc.model, *pc.theta0, *pc.sde, *pc.grid, args.seed, 0);
  return hfsem::realized_cov(hfsem::observed_series(pb), pc.grid->h);
}

json fit_json(const hfsem::ModelSpec& spec, const hfsem::FitResult& fr,
              const hfsem::RealizedCov& rc,
              const hfsem::ParsedConfig& pc) {
  json j;
  j["theta_hat"] = vector_json(fr.theta_hat);
  j["param_names"] = spec.param_names;
  j["contrast"] = fr.contrast;
  j["converged"] = fr.converged;
  j["n_starts_used"] = fr.n_starts_used;
  j["grad_norm"] = fr.grad_norm;
  if (fr.se_ok) {
    j["se"] = vector_json(fr.se);
    j["vcov"] = matrix_json(fr.vcov);
  } else {
    j["se"] = nullptr;
    j["vcov"] = nullptr;
  }
  json diag;
  diag["n"] = rc.n;
  diag["h"] = rc.h;
  diag["horizon"] = rc.horizon;
  diag["realized_cov_pd"] = rc.pd;
  if (!fr.se_note.empty()) diag["se_note"] = fr.se_note;
  if (pc.ident_available) diag["identification"] = ident_json(pc.ident);
  j["diagnostics"] = std::move(diag);
  return j;
}

std::string fit_csv(const hfsem::ModelSpec& spec, const hfsem::FitResult& fr) {
  std::ostringstream os;
  os << "param,estimate,se\n";
  for (int i = 0; i < spec.q; ++i) {
    os << spec.param_names[static_cast<size_t>(i)] << ","
       << hfsem::detail::fmt17(fr.theta_hat(i)) << ",";
    if (fr.se_ok) os << hfsem::detail::fmt17(fr.se(i));
    os << "\n";
  }
  return os.str();
}

int cmd_simulate(const CommonArgs& args) {
  const hfsem::ParsedConfig pc = hfsem::parse_config(args.config);
  if (!pc.theta0 || !pc.sde || !pc.grid)
    throw hfsem::ConfigError(
        0, "simulate needs theta0, [sde.*] and [grid] in the config");
  const hfsem::PathBundle pb = hfsem::simulate_model(
      pc.model, *pc.theta0, *pc.sde, *pc.grid, args.seed, 0);
  const std::string dir = args.out.empty() ? "." : args.out;
  fs::create_directories(dir);
  const fs::path p = fs::path(dir) / "paths.csv";
  std::ofstream f(p);
  if (!f) throw hfsem::DataError("cannot write '" + p.string() + "'");
  hfsem::dump_paths(pb, f, args.latents);
  std::cerr << "wrote " << p.string() << "\n";
  return 0;
}

int cmd_fit(const CommonArgs& args, bool with_test) {
  if (!args.data.empty() && !fs::exists(args.data))
    throw hfsem::DataError("cannot read data file '" + args.data + "'");
  const hfsem::ParsedConfig pc = hfsem::parse_config(args.config);
  const hfsem::RealizedCov rc = make_input(pc, args);
  const hfsem::FitResult fr = hfsem::fit(pc.model, rc, pc.fit);
  if (!with_test) {
    if (args.format == "csv") {
      write_text(args.out, "fit.csv", fit_csv(pc.model, fr));
    } else {
      write_text(args.out, "fit.json",
                 fit_json(pc.model, fr, rc, pc).dump(2));
    }
    return 0;
  }
  const hfsem::GofResult gr = hfsem::gof_test(pc.model, fr, rc, args.alpha);
  if (args.format == "csv") {
    std::ostringstream os;
    os << "stat,value\n";
    os << "t_stat," << hfsem::detail::fmt17(gr.t_stat) << "\n";
    os << "df," << gr.df << "\n";
    os << "p_value," << hfsem::detail::fmt17(gr.p_value) << "\n";
    os << "alpha," << hfsem::detail::fmt17(gr.alpha) << "\n";
    os << "reject," << (gr.reject ? 1 : 0) << "\n";
    write_text(args.out, "test.csv", os.str());
  } else {
    json j = fit_json(pc.model, fr, rc, pc);
    j["t_stat"] = gr.t_stat;
    j["df"] = gr.df;
    j["p_value"] = gr.p_value;
    j["alpha"] = gr.alpha;
    j["reject"] = gr.reject;
    write_text(args.out, "test.json", j.dump(2));
  }
  return 0;
}

int cmd_mc(const CommonArgs& args) {
  const hfsem::ParsedConfig pc = hfsem::parse_config(args.config);
  if (!pc.theta0 || !pc.sde || !pc.grid)
    throw hfsem::ConfigError(
        0, "mc needs theta0, [sde.*] and [grid] in the config");
  hfsem::McConfig mc;
  mc.replications = args.reps > 0 ? args.reps : pc.mc_replications;
  mc.grid = *pc.grid;
  mc.true_spec = pc.model;
  mc.theta0 = *pc.theta0;
  mc.sde = *pc.sde;
  mc.alpha = args.alpha;
  mc.seed = args.seed != 1 ? args.seed : pc.mc_seed;
  mc.workers = pc.mc_workers;
  if (args.workers > 0) mc.workers = args.workers;
  if (const char* env = std::getenv("HFSEM_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) mc.workers = w;
  }
  if (pc.mc_fit_self) {
    hfsem::FittedModel fm;
    fm.name = model_name_of(args.config);
    fm.spec = pc.model;
    fm.options = pc.fit;
    mc.fitted.push_back(std::move(fm));
  }
  for (const std::string& path : pc.mc_fit_configs) {
    const hfsem::ParsedConfig sub = hfsem::parse_config(path);
    hfsem::FittedModel fm;
    fm.name = model_name_of(path);
    fm.spec = sub.model;
    fm.options = sub.fit;
    mc.fitted.push_back(std::move(fm));
  }
  const hfsem::McSummary sum = hfsem::run_study(mc);
  const std::string dir = args.out.empty() ? "mc_out" : args.out;
  hfsem::write_study_outputs(sum, dir);
  if (!args.diag.empty()) hfsem::emit_diagnostics(sum, args.diag, dir);
  std::cerr << "study complete: " << sum.replications << " replications, "
            << sum.failures << " failures, outputs in " << dir << "\n";
  return 0;
}

int cmd_check(const CommonArgs& args) {
  const hfsem::ParsedConfig pc = hfsem::parse_config(args.config);
  json j;
  j["q"] = pc.model.q;
  j["pbar"] = pc.model.pbar();
  j["df"] = pc.model.df();
  j["param_names"] = pc.model.param_names;
  if (!pc.ident_available) {
    j["identification"] = nullptr;
    std::cout << j.dump(2) << "\n";
    std::cerr << "check: no evaluation point (set theta0 or [fit] init) — "
                 "structure loaded, identification not evaluated\n";
    return 0;
  }
  j["identification"] = ident_json(pc.ident);
  std::cout << j.dump(2) << "\n";
  std::cerr << "rank " << pc.ident.rank_delta << "/" << pc.ident.q
            << (pc.ident.all_pass() ? " (all checks pass)\n"
                                    : " (CHECK FAILED)\n");
  return pc.ident.all_pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Latent-factor diffusion models: simulate, estimate the covariance "
      "structure from realized covariance, test fit, run replication "
      "studies."};
  app.require_subcommand(1);
  CommonArgs args;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", args.config,
                              "model/study configuration file");
    if (needs_config) c->required();
    sub->add_option("--seed", args.seed, "simulation seed (default 1)");
    sub->add_option("--out", args.out, "output directory");
  };

  CLI::App* sim = app.add_subcommand(
      "simulate", "simulate the configured system and write paths.csv");
  add_common(sim, true);
  sim->add_flag("--latents", args.latents,
                "include latent factor columns in paths.csv");

  CLI::App* fit = app.add_subcommand(
      "fit", "estimate free parameters from realized covariance");
  add_common(fit, false);
  fit->add_option("--data", args.data,
                  "observed-series CSV (as written by simulate)");
  fit->add_option("--format", args.format, "output format")
      ->check(CLI::IsMember({"csv", "json"}));

  CLI::App* test = app.add_subcommand(
      "test", "fit, then run the goodness-of-fit test");
  add_common(test, false);
  test->add_option("--data", args.data,
                   "observed-series CSV (as written by simulate)");
  test->add_option("--alpha", args.alpha, "test level (default 0.05)");
  test->add_option("--format", args.format, "output format")
      ->check(CLI::IsMember({"csv", "json"}));

  CLI::App* mc = app.add_subcommand(
      "mc", "run the replication study defined by the config");
  add_common(mc, true);
  mc->add_option("--reps", args.reps, "replication count override");
  mc->add_option("--alpha", args.alpha, "test level (default 0.05)");
  mc->add_option("--workers", args.workers,
                 "worker threads (HFSEM_WORKERS env overrides)");
  mc->add_option("--diag", args.diag,
                 "diagnostic selectors, e.g. q11 theta1 t1");

  CLI::App* check = app.add_subcommand(
      "check", "load a config and report the identification diagnostics");
  add_common(check, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(args);
    if (fit->parsed()) return cmd_fit(args, false);
    if (test->parsed()) return cmd_fit(args, true);
    if (mc->parsed()) return cmd_mc(args);
    if (check->parsed()) return cmd_check(args);
  } catch (const hfsem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const hfsem::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const hfsem::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
