#include "tsmooth/cli/config.hpp"

#include "tsmooth/quantum.hpp"
#include "tsmooth/weak.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace tsmooth::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path.empty() ? msg : path + ": " + msg);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

Vec as_vector(const json& j, const std::string& path) {
  if (j.is_number()) return Vec::Constant(1, as_number(j, path));
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = as_number(j[i], index(path, i));
  return v;
}

Mat as_matrix(const json& j, const std::string& path) {
  if (j.is_number()) return Mat::Constant(1, 1, as_number(j, path));
  if (!j.is_array() || j.empty()) fail(path, "expected a matrix (array of rows)");
  std::size_t cols = 0;
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].empty()) fail(index(path, r), "expected a non-empty row");
    if (r == 0) cols = j[r].size();
    if (j[r].size() != cols) fail(index(path, r), "rows have different lengths");
  }
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_number(j[r][c], index(index(path, r), c));
  return m;
}

/// Object reader that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string path(const std::string& k) const { return join(path_, k); }

  const json& at(const std::string& k) {
    if (!j_.contains(k)) fail(path(k), "missing required field");
    used_.insert(k);
    return j_.at(k);
  }
  const json* find(const std::string& k) {
    if (!j_.contains(k)) return nullptr;
    used_.insert(k);
    return &j_.at(k);
  }

  double number(const std::string& k) { return as_number(at(k), path(k)); }
  double number(const std::string& k, double def) {
    const json* v = find(k);
    return v ? as_number(*v, path(k)) : def;
  }
  double positive(const std::string& k, std::optional<double> def = std::nullopt) {
    const double v = def && !has(k) ? *def : number(k);
    if (!(v > 0.0)) fail(path(k), "must be positive");
    return v;
  }
  std::uint64_t count(const std::string& k, std::optional<std::uint64_t> def = std::nullopt) {
    const json* v = find(k);
    if (!v) {
      if (def) return *def;
      fail(path(k), "missing required field");
    }
    if (!v->is_number_integer() || v->get<long long>() < 0) fail(path(k), "expected a nonnegative integer");
    return v->get<std::uint64_t>();
  }
  std::string string(const std::string& k, std::optional<std::string> def = std::nullopt) {
    const json* v = find(k);
    if (!v) {
      if (def) return *def;
      fail(path(k), "missing required field");
    }
    if (!v->is_string()) fail(path(k), "expected a string");
    return v->get<std::string>();
  }
  bool boolean(const std::string& k, bool def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_boolean()) fail(path(k), "expected true or false");
    return v->get<bool>();
  }
  Mat matrix(const std::string& k) { return as_matrix(at(k), path(k)); }
  Vec vector(const std::string& k) { return as_vector(at(k), path(k)); }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) fail(path(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

grid::GridSpec parse_grid(const json& j, const std::string& path) {
  Section s(j, path);
  const json& axes = s.at("axes");
  if (!axes.is_array() || axes.empty()) fail(s.path("axes"), "expected a non-empty array of axes");
  std::vector<grid::Axis> out;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    Section a(axes[i], index(s.path("axes"), i));
    grid::Axis ax;
    ax.min = a.number("min");
    ax.max = a.number("max");
    ax.n = a.count("n");
    a.done();
    if (!(ax.max > ax.min)) fail(index(s.path("axes"), i), "max must exceed min");
    if (ax.n < 2) fail(a.path("n"), "needs at least 2 nodes");
    out.push_back(ax);
  }
  s.done();
  grid::GridSpec g(out);
  try {
    g.validate();
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return g;
}

void check_shape(const Mat& m, Eigen::Index r, Eigen::Index c, const std::string& path) {
  if (m.rows() != r || m.cols() != c) {
    fail(path, "expected shape " + std::to_string(r) + "x" + std::to_string(c) + ", got " + std::to_string(m.rows()) +
                   "x" + std::to_string(m.cols()));
  }
}

CMat named_operator(const std::string& name, int dim, const std::string& path) {
  const bool qubit_op = name.rfind("sigma_", 0) == 0;
  if (qubit_op && dim != 2) fail(path, "'" + name + "' needs a qubit (dim 2)");
  quantum::HilbertSpec hs = quantum::HilbertSpec::oscillator(dim);
  if (name == "identity") return CMat::Identity(dim, dim);
  if (name == "sigma_x") return quantum::pauli_x();
  if (name == "sigma_y") return quantum::pauli_y();
  if (name == "sigma_z") return quantum::pauli_z();
  if (name == "sigma_minus" || name == "sigma_plus") {
    CMat m = CMat::Zero(2, 2);
    if (name == "sigma_minus") m(0, 1) = 1.0;
    else m(1, 0) = 1.0;
    return m;
  }
  if (name == "a") return hs.annihilation();
  if (name == "a_dag") return hs.annihilation().adjoint();
  if (name == "q") return hs.position();
  if (name == "p") return hs.momentum();
  if (name == "n") return hs.annihilation().adjoint() * hs.annihilation();
  fail(path, "unknown operator name '" + name + "'");
}

void parse_observables(Section& s, const std::string& key, int dim, std::vector<std::string>& names,
                       std::vector<CMat>& ops) {
  const json* obs = s.find(key);
  if (!obs) return;
  if (!obs->is_array()) fail(s.path(key), "expected an array");
  for (std::size_t i = 0; i < obs->size(); ++i) {
    const json& o = (*obs)[i];
    const std::string p = index(s.path(key), i);
    if (o.is_string()) {
      names.push_back(o.get<std::string>());
      ops.push_back(named_operator(o.get<std::string>(), dim, p));
    } else {
      Section os(o, p);
      names.push_back(os.string("label"));
      ops.push_back(parse_operator(os.at("op"), dim, os.path("op")));
      os.done();
    }
    const CMat& m = ops.back();
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
      fail(p, "observable must be Hermitian");
    }
  }
}

Tolerances parse_tolerances(const json& j, const std::string& path) {
  Section s(j, path);
  Tolerances t;
  t.boundary = s.positive("boundary", t.boundary);
  t.consistency = s.positive("consistency", t.consistency);
  t.truncation = s.positive("truncation", t.truncation);
  t.measurement_norm = s.positive("measurement_norm", t.measurement_norm);
  t.residual = s.positive("residual", t.residual);
  s.done();
  return t;
}

LinearSpec parse_linear(Section& top) {
  LinearSpec l;
  Section m(top.at("model"), "model");
  l.J = m.matrix("J");
  const Eigen::Index n = l.J.rows();
  check_shape(l.J, n, n, "model.J");
  l.B = m.matrix("B");
  if (l.B.rows() != n) fail("model.B", "must have as many rows as J");
  const Eigen::Index w = l.B.cols();
  l.K = m.matrix("K");
  if (l.K.cols() != n) fail("model.K", "must have as many columns as J");
  const Eigen::Index y = l.K.rows();
  l.Q = m.matrix("Q");
  check_shape(l.Q, w, w, "model.Q");
  l.R = m.matrix("R");
  check_shape(l.R, y, y, "model.R");
  l.S = m.has("S") ? m.matrix("S") : Mat::Zero(w, y);
  check_shape(l.S, w, y, "model.S");
  m.done();

  Section p(top.at("prior"), "prior");
  l.prior_mean = p.vector("mean");
  if (l.prior_mean.size() != n) fail("prior.mean", "length must match the state dimension");
  l.prior_cov = p.matrix("cov");
  check_shape(l.prior_cov, n, n, "prior.cov");
  p.done();

  l.dt = top.positive("dt");
  l.horizon = top.positive("horizon");
  l.record = top.string("record", "");
  if (l.record.empty()) {
    const double steps = l.horizon / l.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) fail("horizon", "must be a multiple of dt");
  }
  return l;
}

HybridSpec parse_hybrid(const json& j) {
  Section s(j, "hybrid");
  HybridSpec h;
  {
    Section hs(s.at("hilbert"), "hybrid.hilbert");
    const std::string kind = hs.string("kind");
    if (kind == "qubit") {
      h.dim = 2;
    } else if (kind == "oscillator") {
      h.oscillator = true;
      h.dim = static_cast<int>(hs.count("dim"));
      if (h.dim < 2) fail(hs.path("dim"), "must be at least 2");
    } else {
      fail(hs.path("kind"), "expected 'qubit' or 'oscillator'");
    }
    hs.done();
  }
  {
    Section c(s.at("classical"), "hybrid.classical");
    h.J = c.number("J", 0.0);
    h.B = c.number("B", 1.0);
    h.Q = c.number("Q", 0.0);
    if (h.Q < 0.0) fail(c.path("Q"), "must be nonnegative");
    c.done();
  }
  const int d = h.dim;
  h.H0 = s.has("H0") ? parse_operator(s.at("H0"), d, "hybrid.H0") : CMat::Zero(d, d);
  h.H1 = s.has("coupling") ? parse_operator(s.at("coupling"), d, "hybrid.coupling") : CMat::Zero(d, d);
  if (const json* l = s.find("lindblad")) {
    if (!l->is_array()) fail("hybrid.lindblad", "expected an array of operators");
    for (std::size_t i = 0; i < l->size(); ++i) h.lindblad.push_back(parse_operator((*l)[i], d, index("hybrid.lindblad", i)));
  }
  const json& meas = s.at("measurement");
  if (!meas.is_array() || meas.empty()) fail("hybrid.measurement", "expected a non-empty array");
  for (std::size_t i = 0; i < meas.size(); ++i) {
    Section m(meas[i], index("hybrid.measurement", i));
    h.C0.push_back(m.has("const") ? parse_operator(m.at("const"), d, m.path("const")) : CMat::Zero(d, d));
    h.C1.push_back(m.has("linear") ? parse_operator(m.at("linear"), d, m.path("linear")) : CMat::Zero(d, d));
    m.done();
  }
  const auto dy = static_cast<Eigen::Index>(h.C0.size());
  h.R = s.has("R") ? s.matrix("R") : Mat::Identity(dy, dy);
  check_shape(h.R, dy, dy, "hybrid.R");
  h.grid = parse_grid(s.at("grid"), "hybrid.grid");
  if (h.grid.dims() != 1) fail("hybrid.grid", "hybrid runs use one classical dimension");
  {
    Section p(s.at("prior"), "hybrid.prior");
    h.prior_mean = p.number("mean", 0.0);
    h.prior_var = p.positive("var");
    h.rho0 = parse_operator(p.at("rho0"), d, "hybrid.prior.rho0");
    p.done();
  }
  h.dt = s.positive("dt");
  h.horizon = s.positive("horizon");
  h.record = s.string("record", "");
  parse_observables(s, "observables", d, h.observable_names, h.observables);
  s.done();
  return h;
}

PLLRunSpec parse_pll(const json& j, std::uint64_t seed, const Tolerances& tol) {
  Section s(j, "pll");
  PLLRunSpec r;
  pll::PLLConfig& c = r.cfg;
  c.b = s.number("b", c.b);
  if (c.b < 0.0) fail(s.path("b"), "must be nonnegative");
  c.gamma = s.positive("gamma", c.gamma);
  c.chi = s.number("chi", c.chi);
  {
    Section ph(s.at("phase"), "pll.phase");
    const std::string model = ph.string("model");
    const double q = ph.positive("q");
    if (model == "wiener") {
      c.phase = pll::PhaseModel::wiener(q);
    } else if (model == "ou") {
      c.phase = pll::PhaseModel::ornstein_uhlenbeck(ph.positive("rate"), q);
    } else {
      fail(ph.path("model"), "expected 'wiener' or 'ou'");
    }
    ph.done();
  }
  const Eigen::Index n = c.phase.dim();
  c.phase_mean = s.has("phase_mean") ? s.vector("phase_mean") : Vec::Zero(n);
  if (c.phase_mean.size() != n) fail("pll.phase_mean", "length must match the phase dimension");
  c.phase_cov = s.has("phase_cov") ? s.matrix("phase_cov") : Mat::Zero(n, n);
  check_shape(c.phase_cov, n, n, "pll.phase_cov");
  c.dt = s.positive("dt", c.dt);
  c.steps = s.count("steps", c.steps);
  if (c.steps == 0) fail(s.path("steps"), "must be positive");
  const std::string est = s.string("estimator", "kalman");
  if (est == "kalman") {
    c.estimator = pll::Estimator::linearized_kalman;
  } else if (est == "grid") {
    c.estimator = pll::Estimator::grid;
    c.phase_grid = parse_grid(s.at("phase_grid"), "pll.phase_grid").axes;
  } else {
    fail(s.path("estimator"), "expected 'kalman' or 'grid'");
  }
  c.residual_threshold = tol.residual;
  c.seed = seed;

  if (const json* sw = s.find("sweep")) {
    Section w(*sw, "pll.sweep");
    pll::Sweep sweep;
    const std::string param = w.string("param");
    if (param == "b") sweep.param = pll::SweepParam::b;
    else if (param == "chi") sweep.param = pll::SweepParam::chi;
    else if (param == "phase_noise") sweep.param = pll::SweepParam::phase_noise;
    else if (param == "seed") sweep.param = pll::SweepParam::seed;
    else fail(w.path("param"), "expected one of b, chi, phase_noise, seed");
    if (sweep.param != pll::SweepParam::seed) {
      const json& vals = w.at("values");
      if (!vals.is_array() || vals.empty()) fail(w.path("values"), "expected a non-empty array of numbers");
      for (std::size_t i = 0; i < vals.size(); ++i) sweep.values.push_back(as_number(vals[i], index(w.path("values"), i)));
    }
    if (const json* seeds = w.find("seeds")) {
      if (!seeds->is_array() || seeds->empty()) fail(w.path("seeds"), "expected a non-empty array of integers");
      for (std::size_t i = 0; i < seeds->size(); ++i) {
        const json& v = (*seeds)[i];
        if (!v.is_number_integer() || v.get<long long>() < 0) fail(index(w.path("seeds"), i), "expected a nonnegative integer");
        sweep.seeds.push_back(v.get<std::uint64_t>());
      }
      if (w.has("n_seeds")) fail(w.path("n_seeds"), "give either seeds or n_seeds");
    } else {
      const std::uint64_t n_seeds = w.count("n_seeds");
      if (n_seeds == 0) fail(w.path("n_seeds"), "must be positive");
      for (std::uint64_t i = 0; i < n_seeds; ++i) sweep.seeds.push_back(seed + i);
    }
    w.done();
    r.sweep = sweep;
  }
  s.done();
  return r;
}

WeakSpec parse_weak(const json& j) {
  Section s(j, "weak");
  WeakSpec w;
  w.dim = static_cast<int>(s.count("dim"));
  if (w.dim < 1) fail(s.path("dim"), "must be positive");
  w.f = parse_operator(s.at("f"), w.dim, "weak.f");
  w.g = parse_operator(s.at("g"), w.dim, "weak.g");
  parse_observables(s, "observables", w.dim, w.observable_names, w.observables);
  w.phase_grid = parse_grid(s.at("phase_grid"), "weak.phase_grid");
  if (w.phase_grid.dims() != 2) fail("weak.phase_grid", "needs axes (q, p)");
  if (const json* r = s.find("readout")) {
    Section rs(*r, "weak.readout");
    w.eps_q = rs.positive("eps_q");
    w.eps_p = rs.positive("eps_p");
    w.y_grid = parse_grid(rs.at("y_grid"), "weak.readout.y_grid");
    if (w.y_grid->dims() != 2) fail("weak.readout.y_grid", "needs axes (y_q, y_p)");
    rs.done();
  }
  if (const json* l = s.find("ladder")) {
    if (!l->is_array() || l->size() < 2) fail("weak.ladder", "expected at least two strengths");
    for (std::size_t i = 0; i < l->size(); ++i) {
      const double e = as_number((*l)[i], index("weak.ladder", i));
      if (!(e > 0.0)) fail(index("weak.ladder", i), "must be positive");
      w.ladder.push_back(e);
    }
  }
  w.readout_points = s.count("readout_points", w.readout_points);
  if (w.readout_points < 3) fail(s.path("readout_points"), "needs at least 3 points");
  s.done();
  return w;
}

}  // namespace

CMat parse_operator(const json& j, int dim, const std::string& path) {
  if (j.is_string()) return named_operator(j.get<std::string>(), dim, path);
  if (j.is_array()) {
    if (j.empty()) fail(path, "empty operator sum");
    CMat acc = CMat::Zero(dim, dim);
    for (std::size_t i = 0; i < j.size(); ++i) acc += parse_operator(j[i], dim, index(path, i));
    return acc;
  }
  Section s(j, path);
  CMat op;
  if (s.has("name")) {
    op = named_operator(s.string("name"), dim, s.path("name"));
  } else if (s.has("re")) {
    const Mat re = s.matrix("re");
    const Mat im = s.has("im") ? s.matrix("im") : Mat::Zero(re.rows(), re.cols());
    check_shape(re, dim, dim, s.path("re"));
    check_shape(im, dim, dim, s.path("im"));
    op = re.cast<cplx>() + cplx(0.0, 1.0) * im.cast<cplx>();
  } else if (s.has("fock")) {
    const std::uint64_t n = s.count("fock");
    if (n >= static_cast<std::uint64_t>(dim)) fail(s.path("fock"), "level outside the truncated space");
    op = weak::projector(weak::fock_ket(dim, static_cast<int>(n)));
  } else if (s.has("coherent")) {
    const Vec a = s.vector("coherent");
    if (a.size() != 2) fail(s.path("coherent"), "expected [re, im]");
    op = weak::projector(weak::coherent_ket(dim, cplx(a(0), a(1))));
  } else {
    fail(path, "expected one of name, re/im, fock, coherent");
  }
  const double scale = s.number("scale", 1.0);
  s.done();
  return scale * op;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot read config file");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

ExperimentConfig parse_config(const json& doc) {
  Section top(doc, "");
  ExperimentConfig c;
  c.raw = doc;
  const json& version = top.at("schema_version");
  if (!version.is_number_integer() || version.get<long long>() != kSchemaVersion) {
    fail("schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  c.kind = top.string("kind");
  c.seed = top.count("seed", 1);
  c.output = top.string("output", "out");
  if (const json* t = top.find("tolerances")) c.tol = parse_tolerances(*t, "tolerances");

  if (c.kind == "linear-smoothing") {
    c.spec = parse_linear(top);
  } else if (c.kind == "grid-smoothing") {
    GridRunSpec g;
    g.linear = parse_linear(top);
    Section gs(top.at("grid"), "grid");
    g.grid = parse_grid(json{{"axes", gs.at("axes")}}, "grid");
    g.cutoff_sigmas = gs.positive("cutoff_sigmas", g.cutoff_sigmas);
    g.write_densities = gs.boolean("write_densities", false);
    gs.done();
    if (g.grid.dims() != g.linear.J.rows()) fail("grid.axes", "one axis per state dimension is required");
    c.spec = g;
  } else if (c.kind == "hybrid") {
    c.spec = parse_hybrid(top.at("hybrid"));
  } else if (c.kind == "pll") {
    c.spec = parse_pll(top.at("pll"), c.seed, c.tol);
  } else if (c.kind == "weak-values") {
    c.spec = parse_weak(top.at("weak"));
  } else {
    fail("kind", "expected one of linear-smoothing, grid-smoothing, hybrid, pll, weak-values");
  }
  top.done();
  return c;
}

}  // namespace tsmooth::cli
