#include "dgp/harness.hpp"

#include "dgp/dual_gp.hpp"
#include "dgp/kernels.hpp"
#include "dgp/spectral_gp.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace dgp::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\n\r") == std::string::npos) return raw;
  std::string out = "\"";
  for (char c : raw) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// config parsing

struct RawEntry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct RawConfig {
  std::string origin;
  // section -> key -> entry; "" is the top-level section
  std::map<std::string, std::map<std::string, RawEntry>> sections;
  std::vector<std::string> section_order;
};

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

RawConfig tokenize(const std::string& text, const std::string& origin) {
  RawConfig raw;
  raw.origin = origin;
  std::string section;
  raw.section_order.push_back("");
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail(origin, lineno, "empty section name");
      if (!raw.sections.count(section)) raw.section_order.push_back(section);
      raw.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    auto& sec = raw.sections[section];
    if (sec.count(key)) fail(origin, lineno, "duplicate key '" + key + "'");
    sec[key] = RawEntry{value, lineno, false};
  }
  return raw;
}

class SectionReader {
 public:
  SectionReader(RawConfig& raw, const std::string& section)
      : raw_(raw), section_(section) {}

  bool has(const std::string& key) const {
    auto sec = raw_.sections.find(section_);
    return sec != raw_.sections.end() && sec->second.count(key) > 0;
  }

  std::string get(const std::string& key, const std::string& fallback) {
    auto sec = raw_.sections.find(section_);
    if (sec == raw_.sections.end()) return fallback;
    auto it = sec->second.find(key);
    if (it == sec->second.end()) return fallback;
    it->second.used = true;
    line_of_last_ = it->second.line;
    return it->second.value;
  }

  double get_double(const std::string& key, double fallback) {
    const std::string v = get(key, "");
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      fail(raw_.origin, line_of_last_, "field '" + key + "': expected a number, got '" + v + "'");
    }
  }

  int get_int(const std::string& key, int fallback) {
    const std::string v = get(key, "");
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const int out = std::stoi(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      fail(raw_.origin, line_of_last_, "field '" + key + "': expected an integer, got '" + v + "'");
    }
  }

  int line_of_last() const { return line_of_last_; }

 private:
  RawConfig& raw_;
  std::string section_;
  int line_of_last_ = 0;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, sep)) out.push_back(trim(tok));
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text, const std::string& origin,
                                       int line) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) {
    const auto dots = part.find("..");
    try {
      if (dots != std::string::npos) {
        const std::uint64_t lo = std::stoull(part.substr(0, dots));
        const std::uint64_t hi = std::stoull(part.substr(dots + 2));
        if (hi < lo) fail(origin, line, "seed range is reversed: " + part);
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
      } else if (!part.empty()) {
        seeds.push_back(std::stoull(part));
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      fail(origin, line, "bad seed entry '" + part + "'");
    }
  }
  if (seeds.empty()) fail(origin, line, "no seeds given");
  std::vector<std::uint64_t> dedup = seeds;
  std::sort(dedup.begin(), dedup.end());
  if (std::adjacent_find(dedup.begin(), dedup.end()) != dedup.end()) {
    fail(origin, line, "seeds must be distinct");
  }
  return seeds;
}

DerivLevel parse_level(const std::string& v, const std::string& origin, int line) {
  if (v == "plain") return DerivLevel::plain;
  if (v == "grad") return DerivLevel::grad;
  if (v == "hess") return DerivLevel::hess;
  fail(origin, line, "unknown derivative level '" + v + "' (plain|grad|hess)");
}

Backend parse_backend(const std::string& v, const std::string& origin, int line) {
  if (v == "dual") return Backend::dual;
  if (v == "spectral") return Backend::spectral;
  if (v == "auto") return Backend::auto_select;
  fail(origin, line, "unknown backend '" + v + "' (dual|spectral|auto)");
}

ExperimentKind parse_kind(const std::string& v, const std::string& origin, int line) {
  if (v == "bo_race") return ExperimentKind::bo_race;
  if (v == "bq_error") return ExperimentKind::bq_error;
  if (v == "condition_sweep") return ExperimentKind::condition_sweep;
  if (v == "kernel_validation") return ExperimentKind::kernel_validation;
  if (v == "hyper_contraction") return ExperimentKind::hyper_contraction;
  fail(origin, line, "unknown experiment kind '" + v + "'");
}

void check_all_used(const RawConfig& raw) {
  for (const auto& [section, entries] : raw.sections) {
    for (const auto& [key, entry] : entries) {
      if (!entry.used) {
        fail(raw.origin, entry.line,
             "unknown key '" + key + "'" +
                 (section.empty() ? "" : " in section [" + section + "]"));
      }
    }
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  RawConfig raw = tokenize(text, origin);
  ExperimentConfig cfg;
  cfg.raw_text = text;

  SectionReader top(raw, "");
  const std::string kind_str = top.get("kind", "");
  if (kind_str.empty()) throw ConfigError(origin + ": missing required key 'kind'");
  cfg.kind = parse_kind(kind_str, origin, top.line_of_last());

  cfg.objective_name = top.get("objective", cfg.objective_name);
  cfg.out_dir = top.get("out", "");
  cfg.budget = top.get_int("budget", cfg.budget);
  cfg.n_init = top.get_int("n_init", cfg.n_init);
  if (top.has("seeds")) {
    const std::string s = top.get("seeds", "");
    cfg.seeds = parse_seeds(s, origin, top.line_of_last());
  } else {
    cfg.seeds = {1};
  }

  SectionReader mcmc(raw, "mcmc");
  cfg.mcmc.n_samples = mcmc.get_int("n_samples", cfg.mcmc.n_samples);
  cfg.mcmc.burn_in = mcmc.get_int("burn_in", cfg.mcmc.burn_in);
  cfg.mcmc.thinning = mcmc.get_int("thinning", cfg.mcmc.thinning);
  cfg.mcmc.step = mcmc.get_double("step", cfg.mcmc.step);

  SectionReader acq(raw, "acquisition");
  const std::string acq_kind = acq.get("kind", "ei");
  if (acq_kind == "ei") {
    cfg.acq.kind = AcqKind::ei;
  } else if (acq_kind == "ucb") {
    cfg.acq.kind = AcqKind::ucb;
  } else {
    fail(origin, acq.line_of_last(), "unknown acquisition kind '" + acq_kind + "'");
  }
  cfg.acq.ei_xi = acq.get_double("xi", cfg.acq.ei_xi);
  cfg.acq.ucb_kappa = acq.get_double("kappa", cfg.acq.ucb_kappa);

  SectionReader inner(raw, "inner");
  cfg.inner.n_candidates = inner.get_int("candidates", cfg.inner.n_candidates);
  cfg.inner.refine_starts = inner.get_int("refine_starts", cfg.inner.refine_starts);
  cfg.inner.refine_sweeps = inner.get_int("refine_sweeps", cfg.inner.refine_sweeps);

  SectionReader gp(raw, "gp");
  cfg.noise_var = gp.get_double("noise_var", cfg.noise_var);
  cfg.spectral_delta_frac = gp.get_double("spectral_delta_frac", cfg.spectral_delta_frac);

  SectionReader grid(raw, "grid");
  cfg.grid.boundary_t = grid.get_double("t", cfg.grid.boundary_t);
  cfg.grid.cond_target = grid.get_double("cond_target", cfg.grid.cond_target);
  cfg.grid.max_grid = static_cast<std::size_t>(
      grid.get_double("max_grid", static_cast<double>(cfg.grid.max_grid)));

  // methods from [method NAME] sections, in file order
  for (const auto& section : raw.section_order) {
    if (section.rfind("method ", 0) != 0) continue;
    MethodSpec m;
    m.name = trim(section.substr(7));
    if (m.name.empty()) throw ConfigError(origin + ": empty method name");
    SectionReader ms(raw, section);
    m.level = parse_level(ms.get("level", "plain"), origin, ms.line_of_last());
    m.backend = parse_backend(ms.get("backend", "dual"), origin, ms.line_of_last());
    cfg.methods.push_back(m);
  }

  switch (cfg.kind) {
    case ExperimentKind::bo_race:
    case ExperimentKind::hyper_contraction:
      if (cfg.methods.empty()) throw ConfigError(origin + ": needs at least one [method ...]");
      break;
    case ExperimentKind::bq_error: {
      if (cfg.methods.empty()) throw ConfigError(origin + ": needs at least one [method ...]");
      SectionReader bq(raw, "bq");
      cfg.prior_mean = bq.get_double("prior_mean", cfg.prior_mean);
      cfg.prior_var = bq.get_double("prior_var", cfg.prior_var);
      cfg.bq_rho = bq.get_double("rho", cfg.bq_rho);
      cfg.bq_delta = bq.get_double("delta", cfg.bq_delta);
      cfg.bq_candidates = bq.get_int("candidates", cfg.bq_candidates);
      cfg.bq_budget = bq.get_int("budget", cfg.bq_budget);
      for (int i = 1; i <= 9; ++i) {
        const std::string key = "bump" + std::to_string(i);
        if (!bq.has(key)) break;
        const auto parts = split(bq.get(key, ""), ':');
        if (parts.size() != 3) {
          fail(origin, bq.line_of_last(), key + ": expected amplitude:center:width");
        }
        cfg.bumps.push_back(
            GaussianBump{std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])});
      }
      if (cfg.bumps.empty()) cfg.bumps = {{1.0, 0.3, 0.25}, {0.6, -0.6, 0.2}};
      break;
    }
    case ExperimentKind::condition_sweep: {
      SectionReader sweep(raw, "sweep");
      cfg.delta_lo = sweep.get_double("delta_lo", cfg.delta_lo);
      cfg.delta_hi = sweep.get_double("delta_hi", cfg.delta_hi);
      cfg.n_delta = sweep.get_int("n", cfg.n_delta);
      cfg.sweep_points = sweep.get_int("points", cfg.sweep_points);
      cfg.sweep_spacing = sweep.get_double("spacing", cfg.sweep_spacing);
      break;
    }
    case ExperimentKind::kernel_validation: {
      SectionReader val(raw, "validation");
      if (val.has("families")) cfg.val_families = split(val.get("families", ""), ',');
      if (val.has("dims")) {
        cfg.val_dims.clear();
        for (const auto& d : split(val.get("dims", ""), ',')) cfg.val_dims.push_back(std::stoi(d));
      }
      cfg.val_points = val.get_int("points", cfg.val_points);
      cfg.val_rho = val.get_double("rho", cfg.val_rho);
      cfg.val_delta = val.get_double("delta", cfg.val_delta);
      break;
    }
  }

  if (cfg.budget < cfg.n_init) throw ConfigError(origin + ": budget < n_init");
  check_all_used(raw);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

namespace {

// ---------------------------------------------------------------------------
// cell execution

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    out << content;
  }
  fs::rename(tmp, path);
}

std::string bo_trace_csv(const BoTrace& trace, int dim) {
  std::ostringstream out;
  out << "iter";
  for (int j = 0; j < dim; ++j) out << ",x" << j;
  out << ",f,incumbent,dist_to_opt,backend,rho_mean,delta_sq_mean,delta_sq_var\r\n";
  for (const auto& rec : trace.iters) {
    out << rec.iter;
    for (int j = 0; j < dim; ++j) out << "," << format_double(rec.x[j]);
    out << "," << format_double(rec.f) << "," << format_double(rec.incumbent) << ","
        << format_double(rec.dist_to_opt) << "," << csv_field(rec.backend) << ","
        << format_double(rec.rho_mean) << "," << format_double(rec.delta_sq_mean) << ","
        << format_double(rec.delta_sq_var) << "\r\n";
  }
  return out.str();
}

std::string bq_trace_csv(const BqTrace& trace) {
  std::ostringstream out;
  out << "iter,x,integral_mean,integral_var,abs_error\r\n";
  for (const auto& rec : trace.iters) {
    out << rec.iter << "," << (rec.x.size() > 0 ? format_double(rec.x[0]) : "") << ","
        << format_double(rec.integral_mean) << "," << format_double(rec.integral_var) << ","
        << format_double(rec.abs_error) << "\r\n";
  }
  return out.str();
}

struct Cell {
  std::string file;  // final artifact name (relative to out dir)
  std::function<std::string()> produce;
};

std::vector<Cell> build_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  switch (cfg.kind) {
    case ExperimentKind::bo_race: {
      const Objective objective = objective_by_name(cfg.objective_name);
      for (const auto& method : cfg.methods) {
        for (const auto seed : cfg.seeds) {
          Cell cell;
          cell.file = "trace_" + method.name + "_seed" + std::to_string(seed) + ".csv";
          cell.produce = [cfg, method, seed, objective]() {
            BoConfig bo;
            bo.budget = cfg.budget;
            bo.n_init = cfg.n_init;
            bo.level = method.level;
            bo.backend = method.backend;
            bo.mcmc = cfg.mcmc;
            bo.acq = cfg.acq;
            bo.inner = cfg.inner;
            bo.grid = cfg.grid;
            bo.noise_var = cfg.noise_var;
            bo.spectral_delta_frac = cfg.spectral_delta_frac;
            bo.seed = derive_seed(seed, fnv1a(method.name));
            const BoTrace trace = run_bo(objective, bo);
            if (trace.aborted) {
              throw std::runtime_error("bo run aborted: " + trace.abort_reason);
            }
            return bo_trace_csv(trace, objective.dim);
          };
          cells.push_back(std::move(cell));
        }
      }
      break;
    }
    case ExperimentKind::bq_error: {
      for (const auto& method : cfg.methods) {
        for (const auto seed : cfg.seeds) {
          Cell cell;
          cell.file = "trace_" + method.name + "_seed" + std::to_string(seed) + ".csv";
          cell.produce = [cfg, method, seed]() {
            const Objective integrand = gaussian_bumps_1d(
                cfg.bumps, cfg.prior_mean - 6.0 * std::sqrt(cfg.prior_var),
                cfg.prior_mean + 6.0 * std::sqrt(cfg.prior_var));
            const double z_true =
                gaussian_bumps_integral(cfg.bumps, cfg.prior_mean, cfg.prior_var);
            BqConfig bq;
            bq.kernel = KernelSpec{KernelFamily::squared_exponential, cfg.bq_rho, cfg.bq_delta, 1};
            bq.prior.mean = Vec::Constant(1, cfg.prior_mean);
            bq.prior.cov = Mat::Constant(1, 1, cfg.prior_var);
            bq.level = method.level;
            bq.budget = cfg.bq_budget;
            bq.n_candidates = cfg.bq_candidates;
            bq.noise_var = cfg.noise_var;
            bq.grid = cfg.grid;
            bq.seed = derive_seed(seed, fnv1a(method.name));
            return bq_trace_csv(run_bq(integrand, z_true, bq));
          };
          cells.push_back(std::move(cell));
        }
      }
      break;
    }
    case ExperimentKind::condition_sweep: {
      Cell cell;
      cell.file = "condition_sweep.csv";
      cell.produce = [cfg]() {
        Mat x(cfg.sweep_points, 1);
        for (int i = 0; i < cfg.sweep_points; ++i) x(i, 0) = cfg.sweep_spacing * i;
        const NoiseSpec noise = NoiseSpec::uniform(cfg.noise_var);
        std::ostringstream out;
        out << "delta,cond_value,cond_grad,cond_hess,cond_hess_rescaled\r\n";
        for (int k = 0; k < cfg.n_delta; ++k) {
          const double frac = cfg.n_delta == 1 ? 0.0 : static_cast<double>(k) / (cfg.n_delta - 1);
          const double delta =
              std::pow(10.0, std::log10(cfg.delta_lo) +
                                 frac * (std::log10(cfg.delta_hi) - std::log10(cfg.delta_lo)));
          KernelSpec spec{KernelFamily::squared_exponential, 1.0, delta, 1};
          KernelSpec unit = spec;
          unit.delta = 1.0;
          const double cv = condition_number(build_joint_gram(spec, x, Orders{}, noise));
          const double cg =
              condition_number(build_joint_gram(spec, x, Orders{true, false}, noise));
          const double ch =
              condition_number(build_joint_gram(spec, x, Orders{true, true}, noise));
          const double cr =
              condition_number(build_joint_gram(unit, x / delta, Orders{true, true}, noise));
          out << format_double(delta) << "," << format_double(cv) << "," << format_double(cg)
              << "," << format_double(ch) << "," << format_double(cr) << "\r\n";
        }
        return out.str();
      };
      cells.push_back(std::move(cell));
      break;
    }
    case ExperimentKind::kernel_validation: {
      Cell cell;
      cell.file = "kernel_validation.csv";
      cell.produce = [cfg]() {
        std::ostringstream out;
        out << "family,dim,block_row,block_col,max_abs_dev,block_scale,rel_dev,grid_size\r\n";
        for (const auto& family : cfg.val_families) {
          KernelFamily fam;
          bool with_hess;
          if (family == "se") {
            fam = KernelFamily::squared_exponential;
            with_hess = true;
          } else if (family == "matern_factorizable") {
            fam = KernelFamily::matern52_factorizable;
            with_hess = false;
          } else {
            throw ConfigError("kernel_validation: unknown family '" + family + "'");
          }
          for (int d : cfg.val_dims) {
            KernelSpec spec{fam, cfg.val_rho, cfg.val_delta, d};
            std::mt19937_64 rng(derive_seed(cfg.seeds.front(), fnv1a(family) + d));
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            const int n = std::max(2, cfg.val_points - (d - 1));
            Mat pts(n, d);
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < d; ++j) pts(i, j) = u(rng);
            double span = 0.0;
            for (int j = 0; j < d; ++j)
              span = std::max(span, pts.col(j).maxCoeff() - pts.col(j).minCoeff());
            const Orders orders{true, with_hess};
            const FrequencyGrid grid = build_grid(span, spec, cfg.grid.boundary_t,
                                                  cfg.grid.cond_target, cfg.grid.max_grid);
            const Mat rec = reconstruct_kernel(spec, grid, pts, orders);
            const Mat gram = build_joint_gram(spec, pts, orders, NoiseSpec{});
            const BlockLayout layout{n, d, orders};
            std::vector<DerivOrder> active{DerivOrder::value, DerivOrder::gradient};
            if (with_hess) active.push_back(DerivOrder::hessian);
            for (DerivOrder ro : active) {
              for (DerivOrder co : active) {
                const int r0 = layout.offset(ro), nr = n * block_size(ro, d);
                const int c0 = layout.offset(co), nc = n * block_size(co, d);
                const double dev =
                    (rec.block(r0, c0, nr, nc) - gram.block(r0, c0, nr, nc)).cwiseAbs().maxCoeff();
                const double scale = gram.block(r0, c0, nr, nc).cwiseAbs().maxCoeff();
                out << family << "," << d << "," << static_cast<int>(ro) << ","
                    << static_cast<int>(co) << "," << format_double(dev) << ","
                    << format_double(scale) << "," << format_double(dev / scale) << ","
                    << grid.n_features() << "\r\n";
              }
            }
          }
        }
        return out.str();
      };
      cells.push_back(std::move(cell));
      break;
    }
    case ExperimentKind::hyper_contraction: {
      const Objective objective = objective_by_name(cfg.objective_name);
      for (const auto& method : cfg.methods) {
        for (const auto seed : cfg.seeds) {
          Cell cell;
          cell.file = "contraction_" + method.name + "_seed" + std::to_string(seed) + ".csv";
          cell.produce = [cfg, method, seed, objective]() {
            // identical observation locations across methods for this seed
            std::mt19937_64 loc_rng(derive_seed(seed, fnv1a("locations")));
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const int n_obs = cfg.n_init;
            ObservationSet obs;
            obs.X = Mat(n_obs, objective.dim);
            obs.f = Vec(n_obs);
            const Orders orders = orders_for(method.level);
            if (orders.gradient) obs.grad = Mat(n_obs, objective.dim);
            if (orders.hessian) obs.hess = Mat(n_obs, hess_vec_size(objective.dim));
            const double sign = objective.minimize ? -1.0 : 1.0;
            for (int i = 0; i < n_obs; ++i) {
              Vec x(objective.dim);
              for (int j = 0; j < objective.dim; ++j) {
                x[j] = objective.bounds(j, 0) +
                       (objective.bounds(j, 1) - objective.bounds(j, 0)) * u(loc_rng);
              }
              Vec g;
              Mat h;
              const double f = objective(x, orders.gradient ? &g : nullptr,
                                         orders.hessian ? &h : nullptr);
              obs.X.row(i) = x.transpose();
              obs.f[i] = sign * f;
              if (orders.gradient) obs.grad->row(i) = sign * g.transpose();
              if (orders.hessian) obs.hess->row(i) = (sign * hess_to_vec(h)).transpose();
            }
            obs.noise_var = cfg.noise_var;
            McmcConfig mcmc = cfg.mcmc;
            mcmc.seed = derive_seed(seed, fnv1a(method.name));
            const HyperPriorSpec priors = default_priors(objective.bounds, obs.f);
            const HyperModel model{KernelFamily::squared_exponential, cfg.noise_var};
            const auto samples = sample_hypers(obs, priors, mcmc, model);
            double mean_d2 = 0.0, var_d2 = 0.0;
            for (const auto& s : samples) mean_d2 += s.delta_sq();
            mean_d2 /= samples.size();
            for (const auto& s : samples) {
              var_d2 += (s.delta_sq() - mean_d2) * (s.delta_sq() - mean_d2);
            }
            var_d2 /= samples.size();
            std::ostringstream out;
            out << "method,seed,n_obs,delta_sq_mean,delta_sq_var\r\n";
            out << csv_field(method.name) << "," << seed << "," << n_obs << ","
                << format_double(mean_d2) << "," << format_double(var_d2) << "\r\n";
            return out.str();
          };
          cells.push_back(std::move(cell));
        }
      }
      break;
    }
  }
  return cells;
}

std::string resolve_out_dir(const ExperimentConfig& cfg, const RunOptions& options) {
  if (!options.out_override.empty()) return options.out_override;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  std::string root = "dgp_out";
  if (const char* env = std::getenv("DGP_OUT_ROOT")) root = env;
  return (fs::path(root) / ("experiment_" + std::to_string(fnv1a(cfg.raw_text)))).string();
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  RunReport report;
  report.out_dir = resolve_out_dir(config, options);
  fs::create_directories(report.out_dir);

  std::vector<Cell> cells = build_cells(config);
  report.total_cells = static_cast<int>(cells.size());

  struct CellStatus {
    std::string file;
    std::string status;
    std::string error;
    double wall_ms = 0.0;
  };
  std::vector<CellStatus> statuses(cells.size());

  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      auto& cell = cells[i];
      auto& status = statuses[i];
      status.file = cell.file;
      const fs::path path = fs::path(report.out_dir) / cell.file;
      if (options.resume && fs::exists(path)) {
        status.status = "skipped";
        std::lock_guard<std::mutex> lock(report_mutex);
        ++report.skipped;
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        const std::string content = cell.produce();
        atomic_write(path.string(), content);
        status.status = "ok";
        std::lock_guard<std::mutex> lock(report_mutex);
        ++report.completed;
      } catch (const std::exception& e) {
        status.status = "failed";
        status.error = e.what();
        std::lock_guard<std::mutex> lock(report_mutex);
        ++report.failed;
        report.failures.push_back(cell.file + ": " + e.what());
      }
      status.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    }
  };
  const int jobs = std::max(1, options.jobs);
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // manifest: enough metadata to reproduce and to summarize
  json manifest;
  manifest["config_hash"] = fnv1a(config.raw_text);
  manifest["version"] = "0.1.0";
  manifest["kind"] = static_cast<int>(config.kind);
  manifest["objective"] = config.objective_name;
  manifest["budget"] = config.budget;
  manifest["n_init"] = config.n_init;
  manifest["seeds"] = config.seeds;
  {
    std::vector<std::string> names;
    for (const auto& m : config.methods) names.push_back(m.name);
    manifest["methods"] = names;
  }
  if (config.kind == ExperimentKind::bo_race) {
    const Objective objective = objective_by_name(config.objective_name);
    manifest["minimize"] = objective.minimize;
    if (objective.best_value) manifest["best_value"] = *objective.best_value;
  }
  atomic_write((fs::path(report.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");

  json summary;
  summary["config_hash"] = fnv1a(config.raw_text);
  summary["total_cells"] = report.total_cells;
  summary["completed"] = report.completed;
  summary["skipped"] = report.skipped;
  summary["failed"] = report.failed;
  json cell_list = json::array();
  for (const auto& s : statuses) {
    json c;
    c["file"] = s.file;
    c["status"] = s.status;
    c["wall_ms"] = s.wall_ms;  // informational; excluded from determinism checks
    if (!s.error.empty()) c["error"] = s.error;
    cell_list.push_back(c);
  }
  summary["cells"] = cell_list;
  atomic_write((fs::path(report.out_dir) / "summary.json").string(), summary.dump(2) + "\n");
  return report;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace

SummaryReport summarize_dir(const std::string& dir, double tol) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) throw MissingTraces("no manifest.json in " + dir);
  json manifest;
  {
    std::ifstream in(manifest_path);
    in >> manifest;
  }
  const bool minimize = manifest.value("minimize", true);
  const double best_value = manifest.value("best_value",
                                           std::numeric_limits<double>::quiet_NaN());
  const int budget = manifest.value("budget", 0);

  SummaryReport report;
  report.tol = tol;
  report.objective = manifest.value("objective", "");
  report.threshold_gap =
      std::isnan(best_value) ? std::numeric_limits<double>::quiet_NaN()
                             : (best_value != 0.0 ? tol * std::abs(best_value) : tol);

  std::vector<std::string> methods = manifest.value("methods", std::vector<std::string>{});
  std::vector<std::uint64_t> seeds = manifest.value("seeds", std::vector<std::uint64_t>{});

  bool any_trace = false;
  for (const auto& name : methods) {
    MethodSummary ms;
    ms.name = name;
    // per-iteration collections across seeds
    std::vector<std::vector<double>> incumbents(budget), dists(budget);
    for (const auto seed : seeds) {
      const fs::path file = fs::path(dir) / ("trace_" + name + "_seed" + std::to_string(seed) +
                                             ".csv");
      if (!fs::exists(file)) continue;
      any_trace = true;
      ++ms.n_seeds;
      std::ifstream in(file);
      std::string line;
      std::getline(in, line);  // header
      const auto header = split_csv_line(line);
      int col_iter = -1, col_inc = -1, col_dist = -1;
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "iter") col_iter = static_cast<int>(c);
        if (header[c] == "incumbent") col_inc = static_cast<int>(c);
        if (header[c] == "dist_to_opt") col_dist = static_cast<int>(c);
      }
      if (col_iter < 0 || col_inc < 0) throw MissingTraces("bad trace header in " + file.string());
      int reached = budget + 1;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        const int iter = std::stoi(fields[col_iter]);
        const double inc = std::stod(fields[col_inc]);
        if (iter >= 1 && iter <= budget) {
          incumbents[iter - 1].push_back(inc);
          if (col_dist >= 0) dists[iter - 1].push_back(std::stod(fields[col_dist]));
          if (reached > budget && !std::isnan(report.threshold_gap)) {
            const double gap = minimize ? inc - best_value : best_value - inc;
            if (gap <= report.threshold_gap) reached = iter;
          }
        }
      }
      ms.iters_to_tol.push_back(reached);
    }
    for (int it = 0; it < budget; ++it) {
      ms.median_incumbent.push_back(median_of(incumbents[it]));
      ms.iqr_lo.push_back(quantile_of(incumbents[it], 0.25));
      ms.iqr_hi.push_back(quantile_of(incumbents[it], 0.75));
      ms.median_dist.push_back(median_of(dists[it]));
    }
    {
      std::vector<double> iters(ms.iters_to_tol.begin(), ms.iters_to_tol.end());
      ms.median_iters_to_tol = median_of(iters);
    }
    report.methods.push_back(std::move(ms));
  }
  if (!any_trace) throw MissingTraces("no trace files found in " + dir);

  auto find_method = [&](const std::string& name) -> const MethodSummary* {
    for (const auto& m : report.methods)
      if (m.name == name && m.n_seeds > 0) return &m;
    return nullptr;
  };
  const MethodSummary* hess = find_method("hess");
  const MethodSummary* grad = find_method("grad");
  const MethodSummary* plain = find_method("plain");
  if (hess && grad) report.verdicts["hess<=grad"] = hess->median_iters_to_tol <=
                                                    grad->median_iters_to_tol;
  if (grad && plain) report.verdicts["grad<=plain"] = grad->median_iters_to_tol <=
                                                      plain->median_iters_to_tol;
  if (hess && plain) {
    report.verdicts["hess<=plain"] = hess->median_iters_to_tol <= plain->median_iters_to_tol;
    report.verdicts["hess<=0.7plain"] =
        hess->median_iters_to_tol <= 0.7 * plain->median_iters_to_tol;
  }
  return report;
}

void write_summary_report(const SummaryReport& report, const std::string& path) {
  json j;
  j["objective"] = report.objective;
  j["tol"] = report.tol;
  j["threshold_gap"] = report.threshold_gap;
  for (const auto& m : report.methods) {
    json jm;
    jm["n_seeds"] = m.n_seeds;
    jm["median_incumbent"] = m.median_incumbent;
    jm["iqr_lo"] = m.iqr_lo;
    jm["iqr_hi"] = m.iqr_hi;
    jm["median_dist"] = m.median_dist;
    jm["iters_to_tol"] = m.iters_to_tol;
    jm["median_iters_to_tol"] = m.median_iters_to_tol;
    j["methods"][m.name] = jm;
  }
  for (const auto& [k, v] : report.verdicts) j["verdicts"][k] = v;
  atomic_write(path, j.dump(2) + "\n");
}

}  // namespace dgp::harness
