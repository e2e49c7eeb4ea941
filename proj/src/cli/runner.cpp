#include "tsmooth/cli/runner.hpp"

#include "tsmooth/gaussian.hpp"
#include "tsmooth/grid_smoother.hpp"
#include "tsmooth/quantum_smoother.hpp"
#include "tsmooth/record_io.hpp"
#include "tsmooth/weak.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace tsmooth::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";

Mat m1(double v) { return Mat::Constant(1, 1, v); }

/// Symmetric square root with negative eigenvalues clipped, so a singular
/// prior covariance still samples.
Mat sqrt_psd(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (cov + cov.transpose()));
  const Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

PriorSampler gaussian_sampler(const Vec& mean, const Mat& cov) {
  const Mat L = sqrt_psd(cov);
  return [mean, L](std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Vec z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n(rng);
    return Vec(mean + L * z);
  };
}

gauss::GaussianBelief moments(const grid::GridDensity& d) {
  gauss::GaussianBelief b;
  b.t = d.t;
  b.mean = d.mean();
  b.cov = d.covariance();
  return b;
}

std::vector<gauss::GaussianBelief> moments(const std::vector<grid::GridDensity>& ds) {
  std::vector<gauss::GaussianBelief> out;
  out.reserve(ds.size());
  for (const auto& d : ds) out.push_back(moments(d));
  return out;
}

/// Collects artifact names as they are written.
class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) {}

  fs::path path(const std::string& name) {
    names_.push_back(name);
    const fs::path p = dir_ / name;
    fs::create_directories(p.parent_path());
    return p;
  }
  std::ofstream open(const std::string& name) {
    std::ofstream os(path(name), std::ios::binary);
    if (!os) throw Error("cannot write " + (dir_ / name).string());
    return os;
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

MeasurementRecord load_record(const std::string& rel, const RunOptions& opts) {
  fs::path p(rel);
  if (p.is_relative()) p = opts.config_dir / p;
  return io::read_record_csv(p.string());
}

StateSpaceModel linear_model(const LinearSpec& l) {
  StateSpaceModel m = StateSpaceModel::linear_time_invariant(l.J, l.B, l.K, l.Q, l.R, l.S);
  m.validate();
  return m;
}

MeasurementRecord linear_record(const StateSpaceModel& m, const LinearSpec& l, std::uint64_t seed,
                                const RunOptions& opts) {
  if (!l.record.empty()) return load_record(l.record, opts);
  return simulate(m, gaussian_sampler(l.prior_mean, l.prior_cov), l.dt, l.horizon, seed);
}

json run_linear(const ExperimentConfig& cfg, const LinearSpec& l, Writer& w, const RunOptions& opts) {
  const StateSpaceModel m = linear_model(l);
  const MeasurementRecord rec = linear_record(m, l, cfg.seed, opts);
  gauss::GaussianBelief prior;
  prior.t = rec.t0;
  prior.mean = l.prior_mean;
  prior.cov = l.prior_cov;
  const gauss::SmoothingRun r = gauss::smooth(m, rec, prior);
  io::write_record_csv(w.path("record.csv").string(), rec);
  io::write_belief_csv(w.path("filtered.csv").string(), r.filtered);
  io::write_belief_csv(w.path("smoothed.csv").string(), r.smoothed);
  return {{"steps", rec.steps()}};
}

json run_grid(const ExperimentConfig& cfg, const GridRunSpec& g, Writer& w, const RunOptions& opts) {
  const LinearSpec& l = g.linear;
  const StateSpaceModel m = linear_model(l);
  const MeasurementRecord rec = linear_record(m, l, cfg.seed, opts);
  Eigen::LLT<Mat> llt(l.prior_cov);
  if (llt.info() != Eigen::Success) throw ConfigError("prior.cov: must be positive definite for a grid prior");
  const Vec mean = l.prior_mean;
  const Mat cov = l.prior_cov;
  grid::GridDensity prior =
      grid::GridDensity::from_function(g.grid, [&](const Vec& x) { return std::exp(gaussian_log_density(x, mean, cov)); },
                                       rec.t0);
  prior.normalize();

  grid::GridSmootherOptions o;
  o.kernel.cutoff_sigmas = g.cutoff_sigmas;
  o.boundary_threshold = cfg.tol.boundary;
  o.cache_kernel = true;
  const grid::GridSmoothingRun r = grid::smooth(decorrelate(m), rec, prior, o);

  io::write_record_csv(w.path("record.csv").string(), rec);
  io::write_belief_csv(w.path("filtered.csv").string(), moments(r.filtered));
  io::write_belief_csv(w.path("smoothed.csv").string(), moments(r.smoothed));
  if (g.write_densities) {
    for (std::size_t k = 0; k < r.smoothed.size(); ++k) {
      std::ostringstream name;
      name << "densities/smoothed_" << std::setw(6) << std::setfill('0') << k << ".bin";
      grid::write_binary(w.path(name.str()).string(), g.grid, r.smoothed[k].values);
    }
  }
  return {{"steps", rec.steps()},
          {"conservation_drift", grid::conservation_check(r.filtered, r.backward)},
          {"max_boundary_fraction", r.diagnostics.max_boundary_fraction},
          {"regularized", r.diagnostics.regularized},
          {"warnings", r.diagnostics.warnings}};
}

json run_hybrid(const ExperimentConfig& cfg, const HybridSpec& h, Writer& w, const RunOptions& opts) {
  quantum::HybridModel model;
  model.hilbert = h.oscillator ? quantum::HilbertSpec::oscillator(h.dim) : quantum::HilbertSpec::qubit();
  model.classical = StateSpaceModel::linear_time_invariant(m1(h.J), m1(h.B), m1(0.0), m1(h.Q), m1(1.0), m1(0.0));
  model.H0 = h.H0;
  model.lindblad = h.lindblad;
  const CMat H1 = h.H1;
  model.coupling = [H1](const Vec& x) { return CMat(x(0) * H1); };
  const std::vector<CMat> C0 = h.C0, C1 = h.C1;
  model.measurement = [C0, C1](const Vec& x, double) {
    std::vector<CMat> c(C0.size());
    for (std::size_t i = 0; i < C0.size(); ++i) c[i] = C0[i] + x(0) * C1[i];
    return c;
  };
  model.R = h.R;
  model.validate(h.grid);

  const cplx tr = h.rho0.trace();
  if (!(tr.real() > 0.0)) throw ConfigError("hybrid.prior.rho0: needs a positive trace");
  const CMat rho0 = h.rho0 / tr.real();

  MeasurementRecord rec;
  if (!h.record.empty()) {
    rec = load_record(h.record, opts);
  } else {
    const std::size_t steps = step_count(h.horizon, h.dt);
    rec = quantum::simulate_hybrid(model, gaussian_sampler(Vec::Constant(1, h.prior_mean), m1(h.prior_var)), rho0,
                                   h.dt, steps, cfg.seed)
              .record;
  }
  const double pm = h.prior_mean, pv = h.prior_var;
  const auto prior = quantum::HybridOperatorField::product(
      h.grid, [pm, pv](const Vec& x) { return std::exp(-0.5 * (x(0) - pm) * (x(0) - pm) / pv); }, rho0, rec.t0);

  quantum::QuantumSmootherOptions o;
  o.keep_backward_fields = !h.observables.empty();
  o.truncation_threshold = cfg.tol.truncation;
  o.measurement_norm_threshold = cfg.tol.measurement_norm;
  const quantum::QuantumSmoothingRun r = quantum::smooth(model, rec, prior, o);

  io::write_record_csv(w.path("record.csv").string(), rec);
  io::write_belief_csv(w.path("filtered.csv").string(), moments(r.filtered));
  io::write_belief_csv(w.path("smoothed.csv").string(), moments(r.smoothed));
  if (!h.observables.empty()) {
    std::ofstream os = w.open("expectations.csv");
    os << "t";
    for (const auto& n : h.observable_names) os << "," << n << "_filtered," << n << "_weak";
    os << "\n";
    for (std::size_t k = 0; k < r.forward.size(); ++k) {
      os << io::format_double(r.forward[k].t);
      for (const CMat& O : h.observables) {
        const auto [fv, wv] = quantum::expectations(r.forward[k], r.backward[k], O);
        os << "," << io::format_double(fv) << "," << io::format_double(wv);
      }
      os << "\n";
    }
  }
  return {{"steps", rec.steps()},
          {"conservation_drift", r.diagnostics.conservation_drift},
          {"max_measurement_norm", r.diagnostics.max_measurement_norm},
          {"max_top_population", r.diagnostics.max_top_population},
          {"cfl", r.diagnostics.cfl},
          {"warnings", r.diagnostics.warnings}};
}

json run_pll(const PLLRunSpec& p, Writer& w) {
  p.cfg.validate();
  if (p.sweep) {
    const pll::SweepResult r = pll::evaluate(p.cfg, *p.sweep);
    {
      std::ofstream os = w.open("sweep.csv");
      pll::write_sweep_csv(os, r.rows);
    }
    std::ofstream os = w.open("summary.csv");
    pll::write_summary_csv(os, r.summary);
    return {{"rows", r.rows.size()}, {"points", r.summary.size()}};
  }
  const pll::PLLRunResult r = pll::run(p.cfg);
  std::ofstream os = w.open("run.csv");
  pll::write_run_csv(os, r);
  return {{"mse_filter", r.mse_filter},
          {"mse_smooth", r.mse_smooth},
          {"residual_max", r.residual_max},
          {"warnings", r.warnings}};
}

json run_weak(const ExperimentConfig& cfg, const WeakSpec& s, Writer& w) {
  const weak::PrePostPair pair{s.f, s.g};
  pair.validate();
  json diag;

  if (!s.observables.empty()) {
    std::ofstream os = w.open("weak_values.csv");
    for (std::size_t i = 0; i < s.observables.size(); ++i) {
      os << (i ? "," : "") << "re_" << s.observable_names[i] << ",im_" << s.observable_names[i];
    }
    os << "\n";
    for (std::size_t i = 0; i < s.observables.size(); ++i) {
      const cplx v = weak::weak_value(pair, s.observables[i]);
      os << (i ? "," : "") << io::format_double(v.real()) << "," << io::format_double(v.imag());
    }
    os << "\n";
  }

  weak::WignerOptions wo;
  wo.boundary_tol = cfg.tol.boundary;
  const weak::WignerGrid wf = weak::wigner_transform(s.f, s.phase_grid, wo);
  const weak::WignerGrid wg = weak::wigner_transform(s.g, s.phase_grid, wo);
  const weak::Quasiprobability h = weak::smoothing_quasiprob(wf, wg);
  grid::write_csv(w.path("quasiprob.csv").string(), h.grid, h.values);
  std::vector<std::string> warnings = wf.warnings;
  warnings.insert(warnings.end(), wg.warnings.begin(), wg.warnings.end());
  diag["quasiprob"] = {{"overlap", h.overlap},
                       {"min_value", h.min_value},
                       {"mean", {h.mean(0), h.mean(1)}},
                       {"cov", {h.cov(0, 0), h.cov(0, 1), h.cov(1, 1)}}};

  if (s.eps_q) {
    weak::WeakMeasurementSetup setup;
    setup.eps_q = *s.eps_q;
    setup.eps_p = *s.eps_p;
    setup.y_grid = *s.y_grid;
    setup.phase_grid = s.phase_grid;
    setup.consistency_tol = cfg.tol.consistency;
    const weak::JointDensity j = weak::weak_joint_density(pair, setup);
    grid::write_csv(w.path("joint_density.csv").string(), j.y_grid, j.P);
    grid::write_csv(w.path("p_tilde.csv").string(), j.phase_grid, j.P_tilde);
    warnings.insert(warnings.end(), j.warnings.begin(), j.warnings.end());
    diag["joint"] = {{"normalizer", j.normalizer},
                     {"mass", j.mass},
                     {"min_P", j.min_P},
                     {"min_P_tilde", j.min_P_tilde},
                     {"consistency", j.consistency}};
  }

  if (!s.ladder.empty()) {
    const weak::WeakLimitReport rep = weak::weak_limit(pair, s.phase_grid, s.ladder, true, s.readout_points);
    std::ofstream os = w.open("ladder.csv");
    os << "eps,l1,P_mass,P_min\n";
    for (std::size_t i = 0; i < rep.eps.size(); ++i) {
      os << io::format_double(rep.eps[i]) << "," << io::format_double(rep.l1[i]) << ","
         << io::format_double(rep.P_mass[i]) << "," << io::format_double(rep.P_min[i]) << "\n";
    }
    diag["ladder"] = {{"monotone", rep.monotone}, {"extrapolated", rep.extrapolated}};
  }
  diag["warnings"] = warnings;
  return diag;
}

/// Removes the artifacts a previous run recorded in its manifest.
void clear_previous(const fs::path& dir) {
  const fs::path m = dir / kManifest;
  if (!fs::exists(m)) return;
  try {
    std::ifstream in(m);
    const json j = json::parse(in);
    for (const auto& a : j.at("artifacts")) fs::remove(dir / a.at("name").get<std::string>());
  } catch (const std::exception&) {
    // An unreadable manifest is simply overwritten.
  }
  fs::remove(m);
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

std::vector<std::string> list_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Mismatch(dir.string() + " is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel != kManifest) out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void accumulate(ArtifactDiff& d, double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return;
  const double diff = std::abs(a - b);
  if (!(diff <= d.max_abs)) d.max_abs = std::isnan(diff) ? INFINITY : diff;
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale > 0.0) d.max_rel = std::max(d.max_rel, diff / scale);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_hash(const fs::path& path) { return fnv1a_hex(read_bytes(path)); }

fs::path resolve_output(const ExperimentConfig& cfg, const RunOptions& opts) {
  fs::path out = opts.out ? fs::path(*opts.out) : fs::path(cfg.output);
  if (out.is_relative()) {
    if (const char* root = std::getenv("TSMOOTH_OUTPUT_ROOT"); root && *root) out = fs::path(root) / out;
  }
  return out;
}

RunResult run(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  if (opts.threads > 0) omp_set_num_threads(opts.threads);

  RunResult res;
  res.dir = resolve_output(cfg, opts);
  fs::create_directories(res.dir);
  clear_previous(res.dir);

  Writer w(res.dir);
  const std::string section = cfg.kind == "hybrid"        ? "hybrid"
                              : cfg.kind == "pll"         ? "pll"
                              : cfg.kind == "weak-values" ? "weak"
                                                          : "model";
  try {
    res.diagnostics = std::visit(
        [&](const auto& spec) -> json {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, LinearSpec>) return run_linear(cfg, spec, w, opts);
          else if constexpr (std::is_same_v<T, GridRunSpec>) return run_grid(cfg, spec, w, opts);
          else if constexpr (std::is_same_v<T, HybridSpec>) return run_hybrid(cfg, spec, w, opts);
          else if constexpr (std::is_same_v<T, PLLRunSpec>) return run_pll(spec, w);
          else return run_weak(cfg, spec, w);
        },
        cfg.spec);
  } catch (const InvalidModel& e) {
    throw ConfigError(section + ": " + e.what());
  }

  json artifacts = json::array();
  for (const auto& name : w.names()) {
    const fs::path p = res.dir / name;
    Artifact a{name, fs::file_size(p), file_hash(p)};
    artifacts.push_back({{"name", a.name}, {"bytes", a.bytes}, {"fnv1a", a.hash}});
    res.artifacts.push_back(std::move(a));
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.manifest = {{"version", TSMOOTH_VERSION},
                  {"schema_version", kSchemaVersion},
                  {"kind", cfg.kind},
                  {"config_hash", fnv1a_hex(cfg.raw.dump())},
                  {"seed", cfg.seed},
                  {"threads", omp_get_max_threads()},
                  {"wall_time_s", wall},
                  {"artifacts", artifacts},
                  {"diagnostics", res.diagnostics},
                  {"config", cfg.raw}};
  write_atomic(res.dir / kManifest, res.manifest.dump(2) + "\n");
  return res;
}

RunResult run_file(const std::string& path, RunOptions opts) {
  json doc = load_json(path);
  if (opts.seed && doc.is_object()) doc["seed"] = *opts.seed;
  try {
    const ExperimentConfig cfg = parse_config(doc);
    opts.config_dir = fs::path(path).parent_path();
    if (opts.config_dir.empty()) opts.config_dir = ".";
    return run(cfg, opts);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json CompareReport::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) {
    arts.push_back({{"name", a.name},
                    {"tabular", a.tabular},
                    {"identical", a.identical},
                    {"rows", a.rows},
                    {"max_abs", a.max_abs},
                    {"max_rel", a.max_rel}});
  }
  return {{"identical", identical}, {"max_abs", max_abs}, {"max_rel", max_rel}, {"artifacts", arts}};
}

CompareReport compare(const fs::path& a, const fs::path& b) {
  const auto fa = list_files(a), fb = list_files(b);
  if (fa != fb) {
    std::vector<std::string> diff;
    std::set_symmetric_difference(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(diff));
    std::string msg = "artifact sets differ:";
    for (const auto& d : diff) msg += " " + d;
    throw Mismatch(msg);
  }
  CompareReport rep;
  for (const auto& name : fa) {
    ArtifactDiff d;
    d.name = name;
    d.identical = read_bytes(a / name) == read_bytes(b / name);
    const std::string ext = fs::path(name).extension().string();
    if (ext == ".csv") {
      d.tabular = true;
      const io::CsvTable ta = io::read_csv((a / name).string());
      const io::CsvTable tb = io::read_csv((b / name).string());
      if (ta.header != tb.header) throw Mismatch(name + ": headers differ");
      if (ta.rows.size() != tb.rows.size()) throw Mismatch(name + ": row counts differ");
      d.rows = ta.rows.size();
      for (std::size_t r = 0; r < ta.rows.size(); ++r) {
        if (ta.rows[r].size() != tb.rows[r].size()) throw Mismatch(name + ": row " + std::to_string(r) + " differs in width");
        for (std::size_t c = 0; c < ta.rows[r].size(); ++c) accumulate(d, ta.rows[r][c], tb.rows[r][c]);
      }
    } else if (ext == ".bin") {
      d.tabular = true;
      grid::GridSpec ga, gb;
      const Vec va = grid::read_binary((a / name).string(), ga);
      const Vec vb = grid::read_binary((b / name).string(), gb);
      if (!(ga == gb)) throw Mismatch(name + ": grids differ");
      d.rows = static_cast<std::size_t>(va.size());
      for (Eigen::Index i = 0; i < va.size(); ++i) accumulate(d, va(i), vb(i));
    } else if (!d.identical) {
      d.max_abs = INFINITY;
    }
    rep.identical = rep.identical && d.identical;
    rep.max_abs = std::max(rep.max_abs, d.max_abs);
    rep.max_rel = std::max(rep.max_rel, d.max_rel);
    rep.artifacts.push_back(d);
  }
  return rep;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"tsmooth: filtering and smoothing experiments"};
  app.set_version_flag("--version", std::string(TSMOOTH_VERSION));
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> outdir;
  int threads = 0;
  CLI::App* run_cmd = app.add_subcommand("run", "Run an experiment config");
  run_cmd->add_option("config", config, "JSON experiment config")->required();
  run_cmd->add_option("--seed", seed, "Override the config seed");
  run_cmd->add_option("--out", outdir, "Override the output directory");
  run_cmd->add_option("--threads", threads, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);

  std::string dir_a, dir_b;
  std::optional<double> fail_above;
  CLI::App* cmp_cmd = app.add_subcommand("compare", "Compare two run directories");
  cmp_cmd->add_option("dir_a", dir_a)->required();
  cmp_cmd->add_option("dir_b", dir_b)->required();
  cmp_cmd->add_option("--fail-above", fail_above, "Exit 1 when any absolute difference exceeds this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      RunOptions opts;
      opts.seed = seed;
      opts.out = outdir;
      opts.threads = threads;
      const RunResult r = run_file(config, opts);
      json summary = {{"dir", r.dir.string()}, {"artifacts", json::array()}, {"diagnostics", r.diagnostics}};
      for (const auto& a : r.artifacts) summary["artifacts"].push_back(a.name);
      out << summary.dump(2) << "\n";
      return 0;
    }
    const CompareReport rep = compare(dir_a, dir_b);
    out << rep.to_json().dump(2) << "\n";
    if (fail_above && rep.max_abs > *fail_above) {
      err << "error: max abs difference " << rep.max_abs << " exceeds " << *fail_above << "\n";
      return 1;
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidModel& e) {
    err << "config error: invalid model: " << e.what() << "\n";
    return 2;
  } catch (const io::FormatError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tsmooth::cli
