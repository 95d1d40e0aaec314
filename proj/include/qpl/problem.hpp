#pragma once

// Problem definition: torus frequencies, chart manifold, force function W,
// auxiliary function V with level v, and run configuration.

#include <cstdint>
#include <string>
#include <vector>

#include "qpl/errors.hpp"
#include "qpl/geometry.hpp"
#include "qpl/torus.hpp"

namespace qpl {

/// Sublevel-set data {V < v} and its sampling parameters.
struct DomainSpec {
  ScalarField V;     // declared with k = 0
  double v = 0.0;
  int S = 24;        // grid cells per chart axis
  double eps_bnd = 1e-3;
};

/// Numerical parameters for every stage; defaults follow the documented values.
struct RunConfig {
  // torus and Galerkin discretization
  int N = 8;
  int P = 0;  // 0 selects 2N+2
  int N_check = 12;
  double delta_indep = 1e-6;

  // optimizer
  int max_iter = 5000;
  double g_tol = 1e-9;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
  int lbfgs_memory = 10;
  double beta0 = 1e-3;
  double beta_factor = 0.5;
  double beta_min = 1e-9;
  double tail_max = 1e-6;

  // conditions
  int phi_grid = 12;  // torus points per axis for condition sampling
  double delta_crit = 1e-4;
  double delta_pd = 1e-6;
  double delta_strict = 1e-8;
  int restarts = 8;

  // connecting map
  double tol_bvp = 1e-8;
  int bvp_max_iter = 40;
  int bvp_steps = 256;
  int bvp_segments = 8;

  // verification
  double window = 100.0;
  double dt = 0.01;
  int trials = 5;

  // dichotomy
  double dich_T = 50.0;
  double reorth_dt = 0.1;
  double gap_min = 0.05;
  int f_samples = 8;
  double f_T = 20.0;
  double f_dt = 0.01;
  double frame_dt = 0.02;

  std::uint64_t seed = 0;

  int grid_points() const { return P > 0 ? P : 2 * N + 2; }
};

struct ProblemSpec {
  std::string name;
  int k = 0;
  int m = 0;
  FrequencyVector omega;
  ChartManifold M;
  ScalarField W;  // declared with (k, m)
  DomainSpec dom;
  RunConfig config;

  /// Dimension consistency; throws ConfigError.
  void validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (m < 1) throw ConfigError("m must be >= 1");
    if (m + 1 > Jet::kMaxVars) throw ConfigError("m must be at most " + std::to_string(Jet::kMaxVars - 1));
    if (omega.k() != k) throw ConfigError("omega must have k entries");
    if (M.m() != m) throw ConfigError("metric dimension differs from m");
    if (!W.valid() || W.k() != k || W.m() != m) throw ConfigError("force function W must be declared over (phi, x)");
    if (!dom.V.valid() || dom.V.k() != 0 || dom.V.m() != m) throw ConfigError("V must be an expression in x only");
    if (!std::isfinite(dom.v)) throw ConfigError("level v must be finite");
    if (dom.S < 2) throw ConfigError("sampling resolution S must be >= 2");
    if (!(dom.eps_bnd > 0.0)) throw ConfigError("eps_bnd must be positive");
    if (config.N < 0) throw ConfigError("truncation N must be >= 0");
    if (config.grid_points() < 2 * config.N + 2)
      throw BandwidthError("grid P = " + std::to_string(config.grid_points()) + " is below 2N+2 = " +
                           std::to_string(2 * config.N + 2));
  }
};

}  // namespace qpl
