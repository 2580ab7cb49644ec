#pragma once

// Declarative model/study configuration: an INI-style document with
// sections [model], [bounds], [sde.<block>], [grid], [fit] and [mc].
// Matrix templates are given as cell lists `fix(i,j,v)`, `free(i,j,name)`
// and `tie(i,j,name,scale)` with 1-based subscripts matching the usual
// matrix-entry notation. Every parse failure carries the offending line
// number.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hfsem/estimate.hpp"
#include "hfsem/model.hpp"
#include "hfsem/simulate.hpp"

namespace hfsem {

struct ParsedConfig {
  ModelSpec model;
  std::optional<Theta> theta0;   // true parameter, needed to simulate
  std::optional<SdeConfig> sde;  // present when all four blocks are given
  std::optional<SimGrid> grid;
  FitOptions fit;
  // Study settings consumed by the mc subcommand.
  int mc_replications = 500;
  double mc_alpha = 0.05;
  std::uint64_t mc_seed = 1;
  int mc_workers = 1;
  bool mc_fit_self = true;
  std::vector<std::string> mc_fit_configs;  // resolved against the file's dir
  // Diagnostics run at load (at theta0, else at the fit init when present).
  bool ident_available = false;
  IdentReport ident;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline double parse_number(const std::string& tok, int line) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ConfigError(line, "expected a number, got '" + tok + "'");
  }
  if (pos != tok.size())
    throw ConfigError(line, "trailing characters in number '" + tok + "'");
  return v;
}

inline long parse_integer(const std::string& tok, int line) {
  const double v = parse_number(tok, line);
  const long i = static_cast<long>(v);
  if (static_cast<double>(i) != v)
    throw ConfigError(line, "expected an integer, got '" + tok + "'");
  return i;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

// Whitespace-separated numbers; rows split at ';' for matrices.
inline Matrix parse_matrix(const std::string& value, int line) {
  std::vector<std::vector<double>> rows;
  std::string part;
  std::istringstream iss(value);
  while (std::getline(iss, part, ';')) {
    std::vector<double> row;
    for (const std::string& tok : split_ws(part))
      row.push_back(parse_number(tok, line));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(line, "empty matrix value");
  const size_t cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols)
      throw ConfigError(line, "ragged matrix rows");
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(cols));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols; ++j)
      m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return m;
}

inline Vector parse_vector(const std::string& value, int line) {
  const Matrix m = parse_matrix(value, line);
  if (m.rows() != 1 && m.cols() != 1)
    throw ConfigError(line, "expected a vector, got a matrix");
  Vector v(m.size());
  for (int i = 0; i < m.size(); ++i)
    v(i) = m.rows() == 1 ? m(0, i) : m(i, 0);
  return v;
}

// One cell-list entry: kind(args) with kind in {fix, free, tie}.
struct CellEntry {
  enum Kind { Fix, Free, Tie } kind = Fix;
  int i = 0, j = 0;  // 0-based after parsing
  double value = 0.0;
  std::string name;
  double scale = 1.0;
};

inline std::vector<CellEntry> parse_cells(const std::string& value,
                                          int line) {
  std::vector<CellEntry> out;
  size_t pos = 0;
  const size_t n = value.size();
  auto skip_ws = [&]() {
    while (pos < n && std::isspace(static_cast<unsigned char>(value[pos])))
      ++pos;
  };
  skip_ws();
  while (pos < n) {
    size_t open = value.find('(', pos);
    if (open == std::string::npos)
      throw ConfigError(line, "malformed cell list near '" +
                                  value.substr(pos) + "'");
    const std::string kind = trim(value.substr(pos, open - pos));
    size_t close = value.find(')', open);
    if (close == std::string::npos)
      throw ConfigError(line, "missing ')' in cell list");
    std::vector<std::string> args;
    {
      std::string inner = value.substr(open + 1, close - open - 1);
      std::istringstream iss(inner);
      std::string tok;
      while (std::getline(iss, tok, ',')) args.push_back(trim(tok));
    }
    CellEntry e;
    auto subscripts = [&](const std::string& si, const std::string& sj) {
      e.i = static_cast<int>(parse_integer(si, line)) - 1;
      e.j = static_cast<int>(parse_integer(sj, line)) - 1;
      if (e.i < 0 || e.j < 0)
        throw ConfigError(line, "cell subscripts are 1-based");
    };
    if (kind == "fix") {
      if (args.size() != 3)
        throw ConfigError(line, "fix() takes (i,j,value)");
      e.kind = CellEntry::Fix;
      subscripts(args[0], args[1]);
      e.value = parse_number(args[2], line);
    } else if (kind == "free") {
      if (args.size() != 3)
        throw ConfigError(line, "free() takes (i,j,name)");
      e.kind = CellEntry::Free;
      subscripts(args[0], args[1]);
      e.name = args[2];
      if (e.name.empty())
        throw ConfigError(line, "free() needs a parameter name");
    } else if (kind == "tie") {
      if (args.size() != 4)
        throw ConfigError(line, "tie() takes (i,j,name,scale)");
      e.kind = CellEntry::Tie;
      subscripts(args[0], args[1]);
      e.name = args[2];
      if (e.name.empty())
        throw ConfigError(line, "tie() needs a parameter name");
      e.scale = parse_number(args[3], line);
    } else {
      throw ConfigError(line, "unknown cell kind '" + kind +
                                  "' (expected fix/free/tie)");
    }
    out.push_back(std::move(e));
    pos = close + 1;
    skip_ws();
  }
  return out;
}

// Interval unions like `[-100,-0.1] [0.1,100]`.
inline IntervalUnion parse_bounds_value(const std::string& value, int line) {
  IntervalUnion u;
  size_t pos = 0;
  const size_t n = value.size();
  while (pos < n) {
    while (pos < n && std::isspace(static_cast<unsigned char>(value[pos])))
      ++pos;
    if (pos >= n) break;
    if (value[pos] != '[')
      throw ConfigError(line, "expected '[' in interval list");
    const size_t close = value.find(']', pos);
    if (close == std::string::npos)
      throw ConfigError(line, "missing ']' in interval list");
    const std::string inner = value.substr(pos + 1, close - pos - 1);
    const size_t comma = inner.find(',');
    if (comma == std::string::npos)
      throw ConfigError(line, "interval needs two endpoints");
    Interval iv;
    iv.lo = parse_number(trim(inner.substr(0, comma)), line);
    iv.hi = parse_number(trim(inner.substr(comma + 1)), line);
    if (!(iv.lo <= iv.hi))
      throw ConfigError(line, "interval endpoints out of order");
    u.push_back(iv);
    pos = close + 1;
  }
  if (u.empty()) throw ConfigError(line, "empty bounds value");
  return u;
}

struct RawLine {
  int number = 0;
  std::string key;
  std::string value;
};

}  // namespace detail

inline ParsedConfig parse_config_text(const std::string& text,
                                      const std::string& origin_dir = ".") {
  using detail::RawLine;
  // First pass: split into sections of key/value lines.
  std::map<std::string, std::vector<RawLine>> sections;
  std::vector<std::string> section_order;
  {
    std::istringstream iss(text);
    std::string raw;
    std::string current;
    int lineno = 0;
    while (std::getline(iss, raw)) {
      ++lineno;
      const size_t hash = raw.find('#');
      if (hash != std::string::npos) raw = raw.substr(0, hash);
      const std::string line = detail::trim(raw);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(lineno, "malformed section header");
        current = line.substr(1, line.size() - 2);
        if (current.empty())
          throw ConfigError(lineno, "empty section name");
        if (!sections.count(current)) section_order.push_back(current);
        sections[current];  // make present even if empty
        continue;
      }
      if (current.empty())
        throw ConfigError(lineno, "key outside any section");
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(lineno, "expected 'key = value'");
      RawLine rl;
      rl.number = lineno;
      rl.key = detail::trim(line.substr(0, eq));
      rl.value = detail::trim(line.substr(eq + 1));
      if (rl.key.empty()) throw ConfigError(lineno, "empty key");
      sections[current].push_back(std::move(rl));
    }
  }
  for (const std::string& name : section_order) {
    const bool known = name == "model" || name == "bounds" ||
                       name == "grid" || name == "fit" || name == "mc" ||
                       name.rfind("sde.", 0) == 0;
    if (!known) throw ConfigError(0, "unknown section [" + name + "]");
  }
  if (!sections.count("model"))
    throw ConfigError(0, "missing [model] section");

  // [model]: dimensions first, then templates into the builder.
  int p1 = -1, p2 = -1, k1 = -1, k2 = -1;
  std::optional<Theta> theta0;
  int theta0_line = 0;
  std::vector<RawLine> template_lines;
  for (const RawLine& rl : sections["model"]) {
    if (rl.key == "p1")
      p1 = static_cast<int>(detail::parse_integer(rl.value, rl.number));
    else if (rl.key == "p2")
      p2 = static_cast<int>(detail::parse_integer(rl.value, rl.number));
    else if (rl.key == "k1")
      k1 = static_cast<int>(detail::parse_integer(rl.value, rl.number));
    else if (rl.key == "k2")
      k2 = static_cast<int>(detail::parse_integer(rl.value, rl.number));
    else if (rl.key == "theta0") {
      theta0 = detail::parse_vector(rl.value, rl.number);
      theta0_line = rl.number;
    } else if (rl.key == "lambda_x1" || rl.key == "lambda_x2" ||
               rl.key == "b0" || rl.key == "gamma" ||
               rl.key == "sigma_xixi" || rl.key == "sigma_dd" ||
               rl.key == "sigma_ee" || rl.key == "sigma_zz")
      template_lines.push_back(rl);
    else
      throw ConfigError(rl.number, "unknown key '" + rl.key +
                                       "' in [model]");
  }
  if (p1 < 1 || p2 < 1 || k1 < 1 || k2 < 1)
    throw ConfigError(0, "[model] must set p1, p2, k1, k2");

  ModelBuilder builder(p1, p2, k1, k2);
  std::map<std::string, int> name_line;  // first cell-list line per name
  for (const RawLine& rl : template_lines) {
    TemplateId id;
    int rows, cols;
    if (rl.key == "lambda_x1") {
      id = TemplateId::LambdaX1; rows = p1; cols = k1;
    } else if (rl.key == "lambda_x2") {
      id = TemplateId::LambdaX2; rows = p2; cols = k2;
    } else if (rl.key == "b0") {
      id = TemplateId::B0; rows = k2; cols = k2;
    } else if (rl.key == "gamma") {
      id = TemplateId::Gamma; rows = k2; cols = k1;
    } else if (rl.key == "sigma_xixi") {
      id = TemplateId::SigmaXiXi; rows = k1; cols = k1;
    } else if (rl.key == "sigma_dd") {
      id = TemplateId::SigmaDd; rows = p1; cols = p1;
    } else if (rl.key == "sigma_ee") {
      id = TemplateId::SigmaEe; rows = p2; cols = p2;
    } else {
      id = TemplateId::SigmaZz; rows = k2; cols = k2;
    }
    for (const detail::CellEntry& e : detail::parse_cells(rl.value, rl.number)) {
      if (e.i >= rows || e.j >= cols)
        throw ConfigError(rl.number,
                          rl.key + " cell (" + std::to_string(e.i + 1) + "," +
                              std::to_string(e.j + 1) + ") outside " +
                              std::to_string(rows) + "x" +
                              std::to_string(cols));
      try {
        switch (e.kind) {
          case detail::CellEntry::Fix:
            builder.fix(id, e.i, e.j, e.value);
            break;
          case detail::CellEntry::Free:
            builder.free(id, e.i, e.j, e.name);
            if (!name_line.count(e.name)) name_line[e.name] = rl.number;
            break;
          case detail::CellEntry::Tie:
            builder.tie(id, e.i, e.j, e.name, e.scale);
            if (!name_line.count(e.name)) name_line[e.name] = rl.number;
            break;
        }
      } catch (const Error& err) {
        throw ConfigError(rl.number, err.what());
      }
    }
  }

  // [bounds]: every entry must reference a declared parameter, and every
  // parameter must get an entry.
  std::map<std::string, int> bounded;
  if (sections.count("bounds")) {
    for (const RawLine& rl : sections["bounds"]) {
      try {
        builder.bound(rl.key, detail::parse_bounds_value(rl.value, rl.number));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& err) {
        throw ConfigError(rl.number, err.what());
      }
      bounded[rl.key] = rl.number;
    }
  }
  for (const auto& [name, line] : name_line)
    if (!bounded.count(name))
      throw ConfigError(line, "parameter '" + name +
                                  "' has no [bounds] entry");

  ParsedConfig out;
  try {
    out.model = builder.build();
  } catch (const Error& err) {
    throw ConfigError(0, std::string("invalid model: ") + err.what());
  }
  if (theta0) {
    if (theta0->size() != out.model.q)
      throw ConfigError(theta0_line,
                        "theta0 has " + std::to_string(theta0->size()) +
                            " entries, model has q=" +
                            std::to_string(out.model.q));
    try {
      out.model.check_theta(*theta0);
    } catch (const Error& err) {
      throw ConfigError(theta0_line, err.what());
    }
    out.theta0 = theta0;
  }

  // [sde.<block>] sections.
  auto parse_block = [&](const std::string& section, int dim) {
    SdeBlock b;
    b.dim = dim;
    Matrix a;
    Vector mu = Vector::Zero(dim), c = Vector::Zero(dim);
    bool have_a = false, have_s = false;
    for (const RawLine& rl : sections[section]) {
      if (rl.key == "kind") {
        if (rl.value != "ou")
          throw ConfigError(rl.number, "unsupported drift kind '" + rl.value +
                                           "' (only 'ou' can be configured)");
      } else if (rl.key == "a") {
        a = detail::parse_matrix(rl.value, rl.number);
        have_a = true;
      } else if (rl.key == "mu") {
        mu = detail::parse_vector(rl.value, rl.number);
      } else if (rl.key == "s") {
        b.S = detail::parse_matrix(rl.value, rl.number);
        have_s = true;
      } else if (rl.key == "c") {
        c = detail::parse_vector(rl.value, rl.number);
      } else {
        throw ConfigError(rl.number,
                          "unknown key '" + rl.key + "' in [" + section + "]");
      }
    }
    const int line = sections[section].empty() ? 0 : sections[section].front().number;
    if (!have_a || !have_s)
      throw ConfigError(line, "[" + section + "] needs at least a and s");
    if (a.rows() != dim || a.cols() != dim)
      throw ConfigError(line, "[" + section + "] drift matrix must be " +
                                  std::to_string(dim) + "x" +
                                  std::to_string(dim));
    if (mu.size() != dim || c.size() != dim)
      throw ConfigError(line, "[" + section + "] mu/c length mismatch");
    if (b.S.rows() != dim)
      throw ConfigError(line, "[" + section + "] diffusion rows mismatch");
    b.drift = OuDrift{std::move(a), std::move(mu)};
    b.c = std::move(c);
    return b;
  };
  const bool any_sde = sections.count("sde.xi") || sections.count("sde.delta") ||
                       sections.count("sde.eps") || sections.count("sde.zeta");
  if (any_sde) {
    for (const char* s : {"sde.xi", "sde.delta", "sde.eps", "sde.zeta"})
      if (!sections.count(s))
        throw ConfigError(0, std::string("missing [") + s +
                                 "] (all four latent blocks are required)");
    SdeConfig sde;
    sde.xi = parse_block("sde.xi", k1);
    sde.delta = parse_block("sde.delta", p1);
    sde.eps = parse_block("sde.eps", p2);
    sde.zeta = parse_block("sde.zeta", k2);
    out.sde = std::move(sde);
  }

  if (sections.count("grid")) {
    SimGrid g;
    for (const RawLine& rl : sections["grid"]) {
      if (rl.key == "n")
        g.n = detail::parse_integer(rl.value, rl.number);
      else if (rl.key == "h")
        g.h = detail::parse_number(rl.value, rl.number);
      else if (rl.key == "substeps")
        g.substeps = static_cast<int>(detail::parse_integer(rl.value, rl.number));
      else
        throw ConfigError(rl.number, "unknown key '" + rl.key + "' in [grid]");
    }
    try {
      g.validate();
    } catch (const Error& err) {
      throw ConfigError(sections["grid"].empty() ? 0
                                                 : sections["grid"].front().number,
                        err.what());
    }
    out.grid = g;
  }

  if (sections.count("fit")) {
    for (const RawLine& rl : sections["fit"]) {
      if (rl.key == "n_starts")
        out.fit.n_starts = static_cast<int>(detail::parse_integer(rl.value, rl.number));
      else if (rl.key == "tol")
        out.fit.tol = detail::parse_number(rl.value, rl.number);
      else if (rl.key == "max_iter")
        out.fit.max_iter = static_cast<int>(detail::parse_integer(rl.value, rl.number));
      else if (rl.key == "seed")
        out.fit.seed = static_cast<std::uint64_t>(detail::parse_integer(rl.value, rl.number));
      else if (rl.key == "gradient") {
        if (rl.value == "numeric")
          out.fit.gradient = GradientMode::Numeric;
        else if (rl.value == "analytic")
          out.fit.gradient = GradientMode::Analytic;
        else
          throw ConfigError(rl.number, "gradient must be numeric or analytic");
      } else if (rl.key == "init") {
        Theta init = detail::parse_vector(rl.value, rl.number);
        if (init.size() != out.model.q)
          throw ConfigError(rl.number,
                            "init has " + std::to_string(init.size()) +
                                " entries, model has q=" +
                                std::to_string(out.model.q));
        out.fit.init_override = std::move(init);
      } else
        throw ConfigError(rl.number, "unknown key '" + rl.key + "' in [fit]");
    }
  }

  if (sections.count("mc")) {
    for (const RawLine& rl : sections["mc"]) {
      if (rl.key == "replications")
        out.mc_replications = static_cast<int>(detail::parse_integer(rl.value, rl.number));
      else if (rl.key == "alpha")
        out.mc_alpha = detail::parse_number(rl.value, rl.number);
      else if (rl.key == "seed")
        out.mc_seed = static_cast<std::uint64_t>(detail::parse_integer(rl.value, rl.number));
      else if (rl.key == "workers")
        out.mc_workers = static_cast<int>(detail::parse_integer(rl.value, rl.number));
      else if (rl.key == "fit_self") {
        if (rl.value == "true")
          out.mc_fit_self = true;
        else if (rl.value == "false")
          out.mc_fit_self = false;
        else
          throw ConfigError(rl.number, "fit_self must be true or false");
      } else if (rl.key == "fit_configs") {
        for (const std::string& tok : detail::split_ws(rl.value)) {
          std::filesystem::path p(tok);
          if (p.is_relative()) p = std::filesystem::path(origin_dir) / p;
          out.mc_fit_configs.push_back(p.string());
        }
      } else
        throw ConfigError(rl.number, "unknown key '" + rl.key + "' in [mc]");
    }
  }

  // Load-time diagnostics at the best available parameter point.
  const Theta* at = nullptr;
  if (out.theta0)
    at = &*out.theta0;
  else if (out.fit.init_override)
    at = &*out.fit.init_override;
  if (at != nullptr) {
    out.ident = local_identifiability(out.model, *at);
    out.ident_available = true;
  }
  return out;
}

inline ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError(0, "cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(
      buf.str(), std::filesystem::path(path).parent_path().string());
}

}  // namespace hfsem
