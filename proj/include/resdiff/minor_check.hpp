#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "resdiff/diffusivity.hpp"
#include "resdiff/map_core.hpp"

namespace resdiff {

/// Piecewise-constant density on the unit cubes first_cube .. first_cube +
/// num_cubes - 1 of R (d = 1), with `cells_per_unit` cells per cube. values[i]
/// is the average over cell i, so the mass is sum(values) / cells_per_unit.
struct GridDensity {
  std::int64_t first_cube = 0;
  std::size_t num_cubes = 0;
  std::size_t cells_per_unit = 0;
  std::vector<double> values;

  static GridDensity zeros(std::int64_t first_cube, std::size_t num_cubes, std::size_t cells_per_unit);

  double width() const { return 1.0 / static_cast<double>(cells_per_unit); }
  std::size_t size() const { return values.size(); }
  double cell_lower(std::size_t i) const;
  double cell_center(std::size_t i) const { return cell_lower(i) + 0.5 * width(); }
  double mass() const;
  /// Cell index range [begin, end) of cube k inside the window (empty if outside).
  std::pair<std::size_t, std::size_t> cube_cells(std::int64_t k) const;
  /// Cube masses, index k - first_cube.
  std::vector<double> cube_masses() const;
  /// Grows the window to cover [lo, hi] cubes (zero-filled).
  GridDensity extended(std::int64_t lo, std::int64_t hi) const;
  /// Drops leading and trailing cubes that carry no mass at all.
  void trim();

  void write_csv(std::ostream& os) const;
};

/// Per-cube bump (pi/2)^d prod |sin(pi x_i)|, unit mass on every cube.
double f_star(std::span<const double> x);
inline constexpr double kFStarNorm1d = 1.5707963267948966;  // pi / 2

/// F_{k,s}(x): |C_{k,s}|^{-1} 1_{C_{k,s}} F_* o phi^{|s|}, or 1_{Q_k} F_* for s empty.
double f_ks(const BernoulliMap& map, const LatticeVec& k, std::span<const int> s, std::span<const double> x);

/// Exact cell averages of F_{k,s} on a grid covering cube k (d = 1).
GridDensity bump_density(const BernoulliMap& map, std::int64_t k, std::span<const int> s, std::size_t cells_per_unit);
/// Exact cell averages of the N(mean, eps^2) density, window covering the tails.
GridDensity gaussian_density(double mean, double eps, std::size_t cells_per_unit, double tail_tol = 1e-12);

struct PushOptions {
  double tail_tol = 1e-12;
  std::size_t max_cubes = 4096;
  int threads = 1;
};

/// T_{*,eps} f: the density of phi(X) + eps xi when X has density f. The map is
/// applied by an exact change of variables on a minmod piecewise-linear
/// reconstruction of f; the Gaussian is applied as exact cell-to-cell weights.
GridDensity push_density(const BernoulliMap& map, const GridDensity& f, double eps, const PushOptions& opts = {});

/// Density of X - I with I independent, P(I = sigma_0(i)) = |E_i|.
GridDensity shift_mix(const BernoulliMap& map, const GridDensity& f);

/// Convolution with N(0, eps^2) only.
GridDensity gaussian_smooth(const GridDensity& f, double eps, const PushOptions& opts = {});

// --- bump chain -------------------------------------------------------------------

struct BumpChainReport {
  std::vector<double> step_ratio;        // min T F_{sigma^{n-1}} / F_{sigma^n}, n = 1..|s|
  std::vector<double> cumulative_ratio;  // min T^n F_{k,s} / F_{sigma^n}
  std::vector<double> lambda;            // lambda of the source cylinder of each step
  double a_fit = 0.0;                    // max_n -ln(step_ratio) / (lambda eps)^2
  double beta_emp = 0.0;                 // cumulative ratio at n = |s|
  double beta_theory = 0.0;              // exp(-1 / (1 - |E_M|^{2/d}))
  double mass_error = 0.0;               // max |mass - 1| along the chain
};

struct BumpChainOptions {
  std::size_t cells_per_unit = 2048;
  std::size_t boundary_layer = 2;
  PushOptions push;
};

BumpChainReport verify_bump_chain(const BernoulliMap& map, std::int64_t k, std::span<const int> s, double eps,
                                  const BumpChainOptions& opts = {});

// --- Doeblin stages -----------------------------------------------------------------

enum class DoeblinStage { Defrag, OneStep, TwoStep };

struct DoeblinOptions {
  std::size_t cells_per_unit = 2048;
  PushOptions push;
};

struct DoeblinReport {
  DoeblinStage stage = DoeblinStage::Defrag;
  double min_constant = 0.0;     // c' (defrag), c (one step) or min p_2 / w-check (two step)
  std::int64_t target_cube = 0;  // floor X^0_{1+theta}(x) for the one and two step stages
  std::size_t theta = 0;
  GridDensity density;           // final density
};

DoeblinReport verify_doeblin(const BernoulliMap& map, double x, double eps, DoeblinStage stage,
                             const DoeblinOptions& opts = {});

/// Density of Z_1 started from x (2 + theta(x) noisy steps, then the I shift).
GridDensity z_one_step_density(const BernoulliMap& map, double x, double eps, const DoeblinOptions& opts = {});

}  // namespace resdiff
