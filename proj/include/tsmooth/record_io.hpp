#pragma once

// CSV and little-endian binary helpers shared by every module that writes
// artifacts. Floating-point values are written with 17 significant digits so
// that a write/read round trip is exact.

#include "tsmooth/common.hpp"
#include "tsmooth/gaussian.hpp"
#include "tsmooth/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tsmooth::io {

/// Malformed or unreadable artifact file.
class FormatError : public Error {
 public:
  using Error::Error;
};

std::string format_double(double v);
double parse_double(const std::string& s);

/// Header `t,dy_1..dy_m[,x_1..x_n]`. With truth there are N+1 rows and the
/// dy fields of the final row are empty.
void write_record_csv(const std::string& path, const MeasurementRecord& record);
void write_record_csv(std::ostream& os, const MeasurementRecord& record);
MeasurementRecord read_record_csv(const std::string& path);

/// Header `t,mean_1..mean_n,cov_11,cov_12,..,cov_nn` (upper triangle, row-major).
void write_belief_csv(const std::string& path, const std::vector<gauss::GaussianBelief>& beliefs);
void write_belief_csv(std::ostream& os, const std::vector<gauss::GaussianBelief>& beliefs);
std::vector<gauss::GaussianBelief> read_belief_csv(const std::string& path);

/// Comma-separated rows with a header; every field parsed as double, empty
/// fields become NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::string& path);

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();

 private:
  std::istream& is_;
};

}  // namespace tsmooth::io
