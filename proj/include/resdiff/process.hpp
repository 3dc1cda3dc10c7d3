#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "resdiff/map_core.hpp"
#include "resdiff/rng.hpp"

namespace resdiff {

/// phi(x) + eps * xi with xi drawn from `noise`; eps = 0 draws nothing.
Point step(const PeriodicMap& map, std::span<const double> x, double eps, NoiseStream& noise);
/// Same step with an explicit noise vector (testing hook).
Point step_with_noise(const PeriodicMap& map, std::span<const double> x, double eps, std::span<const double> xi);

/// X^0_1, ..., X^0_n.
std::vector<Point> deterministic_orbit(const PeriodicMap& map, std::span<const double> x, std::size_t n);

struct InitialDistribution {
  enum class Kind { Delta, Uniform, Custom };
  Kind kind = Kind::Uniform;
  Point point;                                   // Delta
  LatticeVec cube;                               // Uniform: Q_cube (defaults to Q_0)
  std::function<Point(NoiseStream&)> sampler;    // Custom

  static InitialDistribution delta(Point x);
  static InitialDistribution uniform(int dim, LatticeVec cube = {});
  static InitialDistribution custom(std::function<Point(NoiseStream&)> sampler);

  /// Initial position of trajectory `stream`, drawn from the Initial domain.
  LatticePoint sample(int dim, std::uint64_t seed, std::uint64_t stream) const;
};

struct EnsembleOptions {
  std::vector<std::size_t> observe_times;  // empty means {n}
  std::vector<Point> directions;           // v's for var(v . X)
  std::size_t batches = 64;                // trajectory batches for standard errors
  int threads = 1;
  bool keep_paths = false;
};

struct EnsembleMoments {
  std::size_t time = 0;
  Point mean;
  Point mean_se;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd covariance_se;
  std::vector<double> direction_variance;
  std::vector<double> direction_variance_se;
};

struct EnsembleResult {
  std::size_t trajectories = 0;
  std::vector<EnsembleMoments> moments;  // one per observation time, sorted
  /// keep_paths only: paths[t][k] = X_k of trajectory t, k = 0..n.
  std::vector<std::vector<Point>> paths;
  /// Per-batch covariance matrices, batch_covariance[time][batch].
  std::vector<std::vector<Eigen::MatrixXd>> batch_covariance;
};

/// Streams trajectories of X^eps_{k+1} = phi(X^eps_k) + eps xi_{k+1}. Trajectory
/// t uses noise stream (seed, t); results are independent of the thread count.
/// With eps = 0, a BernoulliMap and a non-delta start, the low-order bits that
/// expansion pushes out of the mantissa are redrawn from the noise stream, so
/// long orbits keep the law of exact-arithmetic orbits instead of collapsing
/// onto a dyadic fixed point.
EnsembleResult simulate_ensemble(const PeriodicMap& map, const InitialDistribution& initial, double eps,
                                 std::size_t n, std::size_t trajectories, std::uint64_t seed,
                                 const EnsembleOptions& opts = {});

/// Writes the binary trace layout: 8-byte magic "RDTRACE1", then u64 d, u64 n,
/// u64 trajectories, then trajectories x (n+1) x d little-endian f64.
void write_trace(std::ostream& os, const std::vector<std::vector<Point>>& paths);
std::vector<std::vector<Point>> read_trace(std::istream& is);

// --- defragmented chain -----------------------------------------------------

struct ZTraceRow {
  std::size_t n = 0;
  LatticePoint z;          // Z_n
  std::size_t big_n = 0;   // N_n (N_0 = 0)
  LatticeVec shift_sum;    // I_1 + ... + I_n
  LatticePoint x;          // X_{N_n}
};

struct ZTrace {
  std::vector<ZTraceRow> rows;  // n = 0..z_steps
  std::vector<Point> x_path;    // X_0..X_{N_last} when requested
};

/// Draws I with P(I = sigma_0(i)) = |E_i| from one uniform.
LatticeVec draw_shift(const BernoulliMap& map, double u);

/// Runs X^eps from x0 and records Z_n = X_{N_n} - (I_1 + ... + I_n) with
/// N_{k+1} = N_k + 2 + theta^eps(X_{N_k}). Noise comes from stream (seed,
/// stream), shifts from the Shift domain of the same stream.
ZTrace simulate_z(const BernoulliMap& map, std::span<const double> x0, double eps, std::size_t z_steps,
                  std::uint64_t seed, std::uint64_t stream = 0, bool keep_x_path = false);

}  // namespace resdiff
