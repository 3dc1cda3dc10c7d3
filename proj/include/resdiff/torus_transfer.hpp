#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "resdiff/map_core.hpp"

namespace resdiff {

/// Uniform partition of T^d (d in {1,2}) into G^d cells. Cell g has index
/// vector (g mod G, g / G) with the first coordinate running fastest.
class UlamGrid {
 public:
  UlamGrid(int dim, std::size_t cells_per_dim);

  int dim() const { return dim_; }
  std::size_t cells_per_dim() const { return g_; }
  std::size_t size() const { return size_; }
  double cell_width() const { return 1.0 / static_cast<double>(g_); }
  double cell_volume() const { return 1.0 / static_cast<double>(size_); }
  Point center(std::size_t g) const;
  std::size_t index_of(std::span<const double> u) const;

 private:
  int dim_;
  std::size_t g_;
  std::size_t size_;
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// One step of a Z^d-periodic chain on finitely many torus states, resolved by
/// lattice displacement: entry (g, g', j) is the probability of moving from
/// state g to state g' while the cube index grows by j. The position of the
/// R^d chain is Y = J + c(g) with c the state's reference point in Q_0.
struct DisplacementKernel {
  struct Entry {
    std::size_t to = 0;
    LatticeVec jump;
    double prob = 0.0;
  };

  int dim = 1;
  std::size_t states = 0;
  std::vector<double> centers;  // states x dim
  std::optional<UlamGrid> grid;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> cols;
  std::vector<std::int64_t> jumps;  // nnz x dim
  std::vector<double> probs;
  LatticeVec window_lo, window_hi;  // bounding box of the displacements present
  double eps = 0.0;
  double tail_tol = 0.0;

  static DisplacementKernel from_rows(int dim, std::vector<Point> centers, const std::vector<std::vector<Entry>>& rows);

  std::size_t nnz() const { return probs.size(); }
  std::span<const double> center(std::size_t g) const {
    return {centers.data() + g * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<const std::int64_t> jump(std::size_t e) const {
    return {jumps.data() + e * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  double max_row_error() const;
  /// The j-marginal, i.e. the transition matrix of the projected torus chain.
  SparseRowMatrix torus_matrix() const;
  Eigen::MatrixXd dense_torus_matrix() const;
  /// Column sums of the j-marginal (all ones for a doubly stochastic kernel).
  Eigen::VectorXd column_sums() const;
  /// s(g) = E[Y_1 - Y_0 | state g], one row per state.
  Eigen::MatrixXd drift() const;
};

struct KernelOptions {
  double tail_tol = 1e-12;
  std::size_t subsamples_per_dim = 4;  // q_sub = subsamples_per_dim^d midpoints
  double prune = 1e-14;
  int threads = 1;
};

/// Ulam discretization of x -> phi(x) + eps xi started uniformly in each grid cell.
DisplacementKernel build_displacement_kernel(const PeriodicMap& map, double eps, const UlamGrid& grid,
                                             const KernelOptions& opts = {});

// --- mixing -------------------------------------------------------------------

enum class MixingMode { Dense, MatVec };

struct MixingOptions {
  double threshold = 0.5;
  std::size_t cap = 10'000;
  MixingMode mode = MixingMode::Dense;
  int threads = 1;
};

struct MixingResult {
  std::size_t time = 0;
  std::vector<double> distance;  // max_g L1 distance to uniform after 1..time steps (dense mode)
};

/// Smallest T with max_g || P^T(g, .) - uniform ||_{L1} < threshold.
MixingResult mixing_time(const DisplacementKernel& kernel, const MixingOptions& opts = {});
MixingResult mixing_time(const Eigen::MatrixXd& p, const MixingOptions& opts = {});

/// max_g sum_g' |M(g, g') - 1/S|.
double max_l1_to_uniform(const Eigen::MatrixXd& m);

/// Stationary row vector of the torus chain.
Eigen::VectorXd stationary_distribution(const DisplacementKernel& kernel);

// --- corrector and Kipnis-Varadhan rate -----------------------------------------

enum class CorrectorMode { Series, Linear };

struct CorrectorOptions {
  double tol = 1e-12;
  std::size_t max_terms = 1'000'000;
};

struct CorrectorSolution {
  CorrectorMode mode = CorrectorMode::Linear;
  Eigen::MatrixXd drift;       // s, states x d
  Eigen::VectorXd drift_mean;  // s-bar
  Eigen::MatrixXd chi;         // corrector, pi-mean zero
  Eigen::VectorXd stationary;  // pi
  double residual = 0.0;       // sup | (I - P) chi - (s - s-bar) |
  std::size_t terms = 0;       // series terms used
};

CorrectorSolution corrector_solve(const DisplacementKernel& kernel, CorrectorMode mode,
                                  const CorrectorOptions& opts = {});

/// V_v(g) = E[(v . (zeta(Y_1) - zeta(Y_0) - s-bar))^2 | state g].
Eigen::VectorXd kv_integrand(const DisplacementKernel& kernel, const CorrectorSolution& corrector,
                             std::span<const double> v);
/// Integral of V_v against the stationary law.
double kv_rate(const DisplacementKernel& kernel, const CorrectorSolution& corrector, std::span<const double> v);

// --- covariance decay ------------------------------------------------------------

struct CovDecay {
  double lhs = 0.0;             // |cov(v.Delta_m, v.Delta_{m+n+1})| from start_state
  double rhs = 0.0;             // 4 |v|^2 sup||p_n - 1||_L1 sup E|Delta_0|^2
  double l1_distance = 0.0;
  double second_moment = 0.0;
  bool holds() const { return lhs <= rhs; }
};

CovDecay cov_decay_check(const DisplacementKernel& kernel, std::size_t m, std::size_t n, std::span<const double> v,
                         std::size_t start_state = 0);

/// sup_g E[|Delta_0|^2 | state g].
double sup_second_moment(const DisplacementKernel& kernel);

// --- export ------------------------------------------------------------------------

/// Binary layout: magic "RDKERN01", u64 d, u64 G (0 without grid), u64 states,
/// states x d f64 centers, d x i64 window_lo, d x i64 window_hi, u64 nnz, then nnz records of
/// (u64 from, u64 to, d x i64 jump, f64 prob); all little-endian.
void write_kernel_binary(std::ostream& os, const DisplacementKernel& kernel);
DisplacementKernel read_kernel_binary(std::istream& is);
/// One "from to j_1 .. j_d prob" line per entry.
void write_kernel_triplets(std::ostream& os, const DisplacementKernel& kernel);

}  // namespace resdiff
