#include "tsmooth/record_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace tsmooth::io {

static_assert(std::endian::native == std::endian::little,
              "binary artifacts assume a little-endian host");

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  return os;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int count_prefix(const std::vector<std::string>& header, const std::string& prefix) {
  int n = 0;
  for (const auto& h : header) {
    if (h.rfind(prefix, 0) == 0) ++n;
  }
  return n;
}

double time_step(const CsvTable& table, const std::string& path) {
  if (table.rows.size() < 2) throw FormatError(path + ": need at least two rows to infer dt");
  return table.rows[1][0] - table.rows[0][0];
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": empty file");
  table.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(table.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double(f));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_record_csv(std::ostream& os, const MeasurementRecord& record) {
  record.validate();
  const int m = record.steps() ? static_cast<int>(record.increments[0].size()) : 0;
  const int n = record.has_truth() ? static_cast<int>(record.truth[0].size()) : 0;
  os << "t";
  for (int i = 1; i <= m; ++i) os << ",dy_" << i;
  for (int i = 1; i <= n; ++i) os << ",x_" << i;
  os << "\n";
  const std::size_t rows = record.has_truth() ? record.steps() + 1 : record.steps();
  for (std::size_t k = 0; k < rows; ++k) {
    os << format_double(record.time(k));
    for (int i = 0; i < m; ++i) {
      os << ',';
      if (k < record.steps()) os << format_double(record.increments[k](i));
    }
    for (int i = 0; i < n; ++i) os << ',' << format_double(record.truth[k](i));
    os << "\n";
  }
}

void write_record_csv(const std::string& path, const MeasurementRecord& record) {
  auto os = open_out(path);
  write_record_csv(os, record);
}

MeasurementRecord read_record_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header.empty() || table.header[0] != "t") throw FormatError(path + ": first column must be t");
  const int m = count_prefix(table.header, "dy_");
  const int n = count_prefix(table.header, "x_");
  if (1 + m + n != static_cast<int>(table.header.size())) {
    throw FormatError(path + ": unexpected columns in record header");
  }
  MeasurementRecord rec;
  rec.t0 = table.rows.empty() ? 0.0 : table.rows[0][0];
  rec.dt = time_step(table, path);
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    const bool last = k + 1 == table.rows.size();
    const bool blank_dy = m > 0 && std::isnan(row[1]);
    if (!(n > 0 && last && blank_dy)) {
      Vec dy(m);
      for (int i = 0; i < m; ++i) dy(i) = row[1 + i];
      if (!dy.allFinite()) throw FormatError(path + ": missing increment in row " + std::to_string(k + 2));
      rec.increments.push_back(std::move(dy));
    }
    if (n > 0) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x(i) = row[1 + m + i];
      rec.truth.push_back(std::move(x));
    }
  }
  rec.validate();
  return rec;
}

void write_belief_csv(std::ostream& os, const std::vector<gauss::GaussianBelief>& beliefs) {
  const int n = beliefs.empty() ? 0 : static_cast<int>(beliefs[0].mean.size());
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",mean_" << i;
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j <= n; ++j) os << ",cov_" << i << j;
  }
  os << "\n";
  for (const auto& b : beliefs) {
    if (b.mean.size() != n) throw Mismatch("beliefs have inconsistent dimensions");
    os << format_double(b.t);
    for (int i = 0; i < n; ++i) os << ',' << format_double(b.mean(i));
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) os << ',' << format_double(b.cov(i, j));
    }
    os << "\n";
  }
}

void write_belief_csv(const std::string& path, const std::vector<gauss::GaussianBelief>& beliefs) {
  auto os = open_out(path);
  write_belief_csv(os, beliefs);
}

std::vector<gauss::GaussianBelief> read_belief_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int n = count_prefix(table.header, "mean_");
  if (static_cast<int>(table.header.size()) != 1 + n + n * (n + 1) / 2) {
    throw FormatError(path + ": belief header does not match dimension " + std::to_string(n));
  }
  std::vector<gauss::GaussianBelief> out;
  for (const auto& row : table.rows) {
    gauss::GaussianBelief b;
    b.t = row[0];
    b.mean.resize(n);
    b.cov.resize(n, n);
    for (int i = 0; i < n; ++i) b.mean(i) = row[1 + i];
    int c = 1 + n;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) b.cov(i, j) = b.cov(j, i) = row[c++];
    }
    out.push_back(std::move(b));
  }
  return out;
}

void BinaryWriter::u32(std::uint32_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::f64(double v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t BinaryReader::u32() {
  std::uint32_t v = 0;
  if (!is_.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated binary file");
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v = 0;
  if (!is_.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated binary file");
  return v;
}

double BinaryReader::f64() {
  double v = 0;
  if (!is_.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated binary file");
  return v;
}

}  // namespace tsmooth::io
