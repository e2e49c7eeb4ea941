#include "tsmooth/grid.hpp"

#include "tsmooth/record_io.hpp"

#include <cmath>
#include <fstream>

namespace tsmooth::grid {

void GridSpec::validate(std::size_t cap) const {
  if (axes.empty() || axes.size() > kMaxDims) {
    throw InvalidModel("grid must have between 1 and 3 dimensions, got " + std::to_string(axes.size()));
  }
  for (std::size_t d = 0; d < axes.size(); ++d) {
    const auto& a = axes[d];
    if (a.n < 2) throw InvalidModel("grid axis " + std::to_string(d) + " needs at least 2 points");
    if (!(a.max > a.min) || !std::isfinite(a.min) || !std::isfinite(a.max)) {
      throw InvalidModel("grid axis " + std::to_string(d) + " needs max > min");
    }
  }
  if (size() > cap) {
    throw InvalidModel("grid has " + std::to_string(size()) + " points, above the cap of " +
                       std::to_string(cap));
  }
}

std::size_t GridSpec::size() const {
  std::size_t s = 1;
  for (const auto& a : axes) s *= a.n;
  return s;
}

std::size_t GridSpec::stride(int d) const {
  std::size_t s = 1;
  for (std::size_t e = static_cast<std::size_t>(d) + 1; e < axes.size(); ++e) s *= axes[e].n;
  return s;
}

std::size_t GridSpec::flat(const std::vector<std::size_t>& idx) const {
  std::size_t f = 0;
  for (std::size_t d = 0; d < axes.size(); ++d) f = f * axes[d].n + idx[d];
  return f;
}

std::vector<std::size_t> GridSpec::unflat(std::size_t f) const {
  std::vector<std::size_t> idx(axes.size());
  for (std::size_t d = axes.size(); d-- > 0;) {
    idx[d] = f % axes[d].n;
    f /= axes[d].n;
  }
  return idx;
}

Vec GridSpec::point(std::size_t f) const {
  Vec x(dims());
  for (std::size_t d = axes.size(); d-- > 0;) {
    x(static_cast<int>(d)) = axes[d].coord(f % axes[d].n);
    f /= axes[d].n;
  }
  return x;
}

bool GridSpec::on_boundary(std::size_t f) const {
  for (std::size_t d = axes.size(); d-- > 0;) {
    const std::size_t i = f % axes[d].n;
    if (i == 0 || i + 1 == axes[d].n) return true;
    f /= axes[d].n;
  }
  return false;
}

Vec GridSpec::weights() const {
  Vec w = Vec::Ones(static_cast<Eigen::Index>(size()));
  for (std::size_t f = 0; f < size(); ++f) {
    std::size_t r = f;
    for (std::size_t d = axes.size(); d-- > 0;) {
      const std::size_t i = r % axes[d].n;
      r /= axes[d].n;
      const double h = axes[d].step();
      w(static_cast<Eigen::Index>(f)) *= (i == 0 || i + 1 == axes[d].n) ? 0.5 * h : h;
    }
  }
  return w;
}

GridDensity GridDensity::from_function(const GridSpec& grid,
                                       const std::function<double(const Vec&)>& f, double t) {
  grid.validate();
  GridDensity d{grid, Vec(static_cast<Eigen::Index>(grid.size())), t, 0.0};
  for (std::size_t i = 0; i < grid.size(); ++i) d.values(static_cast<Eigen::Index>(i)) = f(grid.point(i));
  return d;
}

GridDensity GridDensity::constant(const GridSpec& grid, double value, double t) {
  grid.validate();
  return GridDensity{grid, Vec::Constant(static_cast<Eigen::Index>(grid.size()), value), t, 0.0};
}

void GridDensity::validate() const {
  if (static_cast<std::size_t>(values.size()) != grid.size()) {
    throw InvalidModel("density has " + std::to_string(values.size()) + " values for a grid of " +
                       std::to_string(grid.size()));
  }
  if (!values.allFinite()) throw InvalidModel("density has non-finite values");
  if (values.size() > 0 && values.minCoeff() < 0.0) throw InvalidModel("density has negative values");
  if (!std::isfinite(log_scale)) throw InvalidModel("density log_scale is not finite");
}

double GridDensity::mass() const { return grid.weights().dot(values); }

Vec GridDensity::mean() const {
  const Vec w = grid.weights();
  Vec m = Vec::Zero(grid.dims());
  double z = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = w(static_cast<Eigen::Index>(i)) * values(static_cast<Eigen::Index>(i));
    m += p * grid.point(i);
    z += p;
  }
  if (!(z > 0.0)) throw Collapse("density has zero mass");
  return m / z;
}

Mat GridDensity::covariance() const {
  const Vec w = grid.weights();
  const Vec mu = mean();
  Mat c = Mat::Zero(grid.dims(), grid.dims());
  double z = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = w(static_cast<Eigen::Index>(i)) * values(static_cast<Eigen::Index>(i));
    const Vec d = grid.point(i) - mu;
    c += p * d * d.transpose();
    z += p;
  }
  return c / z;
}

void GridDensity::normalize() {
  const double z = mass();
  if (!(z > 0.0) || !std::isfinite(z)) throw Collapse("cannot normalize a density with zero mass");
  values /= z;
  log_scale += std::log(z);
}

double boundary_mass_fraction(const GridSpec& grid, const Vec& values) {
  const Vec w = grid.weights();
  double edge = 0.0, total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = w(static_cast<Eigen::Index>(i)) * std::abs(values(static_cast<Eigen::Index>(i)));
    total += p;
    if (grid.on_boundary(i)) edge += p;
  }
  return total > 0.0 ? edge / total : 0.0;
}

Vec marginal(const GridDensity& d, int keep) {
  const auto& g = d.grid;
  const Vec w = g.weights();
  const auto& ax = g.axes[static_cast<std::size_t>(keep)];
  const double h = ax.step();
  Vec out = Vec::Zero(static_cast<Eigen::Index>(ax.n));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t k = (i / g.stride(keep)) % ax.n;
    const double wk = (k == 0 || k + 1 == ax.n) ? 0.5 * h : h;
    out(static_cast<Eigen::Index>(k)) += w(static_cast<Eigen::Index>(i)) / wk * d.values(static_cast<Eigen::Index>(i));
  }
  return out;
}

void write_csv(std::ostream& os, const GridSpec& grid, const Vec& values) {
  for (int d = 1; d <= grid.dims(); ++d) os << "x_" << d << ',';
  os << "value\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec x = grid.point(i);
    for (int d = 0; d < grid.dims(); ++d) os << io::format_double(x(d)) << ',';
    os << io::format_double(values(static_cast<Eigen::Index>(i))) << '\n';
  }
}

void write_csv(const std::string& path, const GridSpec& grid, const Vec& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::FormatError("cannot open " + path + " for writing");
  write_csv(os, grid, values);
}

void write_binary_header(std::ostream& os, const GridSpec& grid) {
  io::BinaryWriter w(os);
  w.u32(static_cast<std::uint32_t>(grid.dims()));
  for (const auto& a : grid.axes) w.u64(a.n);
  for (const auto& a : grid.axes) {
    w.f64(a.min);
    w.f64(a.max);
  }
}

GridSpec read_binary_header(std::istream& is) {
  io::BinaryReader r(is);
  const std::uint32_t dims = r.u32();
  if (dims == 0 || dims > GridSpec::kMaxDims) throw io::FormatError("bad grid dimension count");
  GridSpec g;
  g.axes.resize(dims);
  for (auto& a : g.axes) a.n = r.u64();
  for (auto& a : g.axes) {
    a.min = r.f64();
    a.max = r.f64();
  }
  g.validate();
  return g;
}

void write_binary(const std::string& path, const GridSpec& grid, const Vec& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::FormatError("cannot open " + path + " for writing");
  write_binary_header(os, grid);
  io::BinaryWriter w(os);
  for (Eigen::Index i = 0; i < values.size(); ++i) w.f64(values(i));
}

Vec read_binary(const std::string& path, GridSpec& grid) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("cannot open " + path);
  grid = read_binary_header(is);
  io::BinaryReader r(is);
  Vec v(static_cast<Eigen::Index>(grid.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
  return v;
}

}  // namespace tsmooth::grid
