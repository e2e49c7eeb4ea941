#pragma once

// Rectangular tensor grids and tabulated densities on them. Values are
// densities; integrals use the product trapezoid rule. Flat indices are
// row-major with the last dimension fastest.

#include "tsmooth/common.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tsmooth::grid {

struct Axis {
  double min = 0.0;
  double max = 1.0;
  std::size_t n = 2;

  double step() const { return (max - min) / static_cast<double>(n - 1); }
  double coord(std::size_t i) const { return min + static_cast<double>(i) * step(); }
  bool operator==(const Axis&) const = default;
};

struct GridSpec {
  std::vector<Axis> axes;

  static constexpr std::size_t kMaxDims = 3;
  static constexpr std::size_t kDefaultCap = 4'000'000;

  GridSpec() = default;
  explicit GridSpec(std::vector<Axis> a) : axes(std::move(a)) {}
  static GridSpec uniform1d(double min, double max, std::size_t n) { return GridSpec({{min, max, n}}); }

  /// n >= 2, max > min, 1 <= dims <= 3 and size() <= cap.
  void validate(std::size_t cap = kDefaultCap) const;

  int dims() const { return static_cast<int>(axes.size()); }
  std::size_t size() const;
  std::size_t stride(int d) const;
  std::size_t flat(const std::vector<std::size_t>& idx) const;
  std::vector<std::size_t> unflat(std::size_t flat) const;
  Vec point(std::size_t flat) const;
  bool on_boundary(std::size_t flat) const;

  /// Product trapezoid weights, one per node.
  Vec weights() const;

  bool operator==(const GridSpec&) const = default;
};

struct GridDensity {
  GridSpec grid;
  Vec values;
  double t = 0.0;
  double log_scale = 0.0;

  /// The true (unnormalized) function is values * exp(log_scale).
  static GridDensity from_function(const GridSpec& grid, const std::function<double(const Vec&)>& f,
                                   double t = 0.0);
  static GridDensity constant(const GridSpec& grid, double value, double t = 0.0);

  /// values >= 0, finite, log_scale finite; throws InvalidModel.
  void validate() const;

  double mass() const;
  Vec mean() const;
  Mat covariance() const;

  /// Rescales values to unit trapezoid mass, folding the factor into log_scale.
  void normalize();
};

/// Fraction of trapezoid mass sitting on boundary nodes.
double boundary_mass_fraction(const GridSpec& grid, const Vec& values);

/// Marginal over every dimension except `keep`, trapezoid in the others.
Vec marginal(const GridDensity& d, int keep);

/// CSV with header `x_1..x_d,value`, one row per node.
void write_csv(std::ostream& os, const GridSpec& grid, const Vec& values);
void write_csv(const std::string& path, const GridSpec& grid, const Vec& values);

/// Binary dump (little-endian): u32 dims, u64 n[d], (f64 min, f64 max)[d],
/// then row-major f64 values with the last dimension fastest.
void write_binary_header(std::ostream& os, const GridSpec& grid);
GridSpec read_binary_header(std::istream& is);
void write_binary(const std::string& path, const GridSpec& grid, const Vec& values);
Vec read_binary(const std::string& path, GridSpec& grid);

}  // namespace tsmooth::grid
