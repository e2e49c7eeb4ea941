#pragma once

// Experiment configuration: a JSON document with a versioned schema. Parsing
// checks every field, rejects unknown keys and reports the offending path
// (`model.Q`, `pll.sweep.values[2]`, ...) before anything runs.

#include "tsmooth/common.hpp"
#include "tsmooth/grid.hpp"
#include "tsmooth/pll.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tsmooth::cli {

inline constexpr int kSchemaVersion = 1;

/// Malformed or schema-violating configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct Tolerances {
  double boundary = 1e-6;
  double consistency = 1e-6;
  double truncation = 1e-6;
  double measurement_norm = 0.1;
  double residual = 0.5;
};

struct LinearSpec {
  Mat J, B, K, Q, R, S;
  Vec prior_mean;
  Mat prior_cov;
  double dt = 1e-3;
  double horizon = 1.0;
  /// Record CSV to smooth; simulated from the seed when empty.
  std::string record;
};

struct GridRunSpec {
  LinearSpec linear;
  grid::GridSpec grid;
  double cutoff_sigmas = 12.0;
  bool write_densities = false;
};

struct HybridSpec {
  int dim = 2;
  bool oscillator = false;
  /// dx = J x dt + B dW, Cov dW = Q dt (scalars).
  double J = 0.0, B = 1.0, Q = 0.0;
  CMat H0;
  /// H_I(x) = x H1.
  CMat H1;
  std::vector<CMat> lindblad;
  /// C_mu(x) = C0_mu + x C1_mu.
  std::vector<CMat> C0, C1;
  Mat R;
  grid::GridSpec grid;
  double prior_mean = 0.0;
  double prior_var = 1.0;
  CMat rho0;
  double dt = 1e-3;
  double horizon = 1.0;
  std::string record;
  std::vector<std::string> observable_names;
  std::vector<CMat> observables;
};

struct PLLRunSpec {
  pll::PLLConfig cfg;
  std::optional<pll::Sweep> sweep;
};

struct WeakSpec {
  int dim = 20;
  CMat f, g;
  std::vector<std::string> observable_names;
  std::vector<CMat> observables;
  grid::GridSpec phase_grid;
  std::optional<double> eps_q, eps_p;
  std::optional<grid::GridSpec> y_grid;
  std::vector<double> ladder;
  std::size_t readout_points = 81;
};

struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed = 1;
  std::string output;
  Tolerances tol;
  std::variant<LinearSpec, GridRunSpec, HybridSpec, PLLRunSpec, WeakSpec> spec;
  /// The document as read, used for hashing and the manifest.
  nlohmann::json raw;
};

/// Reads a file; syntax errors carry line and column.
nlohmann::json load_json(const std::string& path);

/// Full schema validation and conversion.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Named or explicit operator on a Hilbert space of dimension dim. Accepts a
/// name (identity, sigma_x/y/z, sigma_minus, sigma_plus, a, a_dag, q, p, n),
/// {"name", "scale"}, {"re", "im"} matrices, {"fock": n}, {"coherent": [re, im]}
/// (projectors) or an array of any of these, which is summed.
CMat parse_operator(const nlohmann::json& j, int dim, const std::string& path);

}  // namespace tsmooth::cli
