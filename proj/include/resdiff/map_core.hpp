#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resdiff/errors.hpp"
#include "resdiff/rational.hpp"

namespace resdiff {

using Point = std::vector<double>;
using LatticeVec = std::vector<std::int64_t>;

/// Guard band used when snapping a coordinate to a partition cell.
inline constexpr double kCellGuard = 1e-12;
/// Default node budget for symbol-tree enumerations.
inline constexpr std::size_t kDefaultNodeBudget = 10'000'000;

/// A point of R^d stored as its unit cube index plus the offset in [0,1)^d.
/// Keeps lattice bookkeeping exact no matter how far a trajectory travels.
struct LatticePoint {
  LatticeVec cube;
  Point frac;

  static LatticePoint from_point(std::span<const double> x);
  Point to_point() const;
  int dim() const { return static_cast<int>(frac.size()); }
};

/// A map of R^d whose displacement x -> phi(x) - x is Z^d-periodic, so that
/// phi(n + u) = n + phi(u) for every lattice vector n.
class PeriodicMap {
 public:
  virtual ~PeriodicMap() = default;

  virtual int dim() const = 0;
  /// phi(u) for u in [0,1)^d.
  virtual void apply_unit(std::span<const double> u, std::span<double> out) const = 0;

  /// phi(x) for arbitrary x, using half-open cubes Q_n = n + [0,1)^d.
  Point apply(std::span<const double> x) const;

  /// p <- phi(p) + scale * kick, renormalised so p.frac stays in [0,1)^d.
  /// `kick` may be empty (deterministic step). `scratch` needs dim() slots.
  void advance(LatticePoint& p, std::span<const double> kick, double scale, std::span<double> scratch) const;
};

struct PartitionCell {
  Point corner;              // lower corner in Q_0
  double side = 0.0;         // h_i, so |E_i| = h_i^d
  Eigen::MatrixXd rotation;  // O_i
  Point offset;              // o_i
  LatticeVec target;         // sigma_0(i)

  double volume() const;
};

/// Builds a cell whose affine branch x -> O x / h + o maps the cell onto the
/// unit cube with lower corner `target`; the offset is solved for.
PartitionCell make_cell(Point corner, double side, Eigen::MatrixXd rotation, LatticeVec target);

/// Piecewise-affine expanding Bernoulli map. Cells are 0-indexed; symbol
/// tuples use the same indices. Immutable after construction.
class BernoulliMap final : public PeriodicMap {
 public:
  BernoulliMap(int dim, std::vector<PartitionCell> cells);

  int dim() const override { return dim_; }
  std::size_t num_cells() const { return cells_.size(); }
  const PartitionCell& cell(std::size_t i) const { return cells_.at(i); }
  const std::vector<PartitionCell>& cells() const { return cells_; }

  /// Index of the cell containing u in [0,1)^d (half-open, guard-banded).
  std::size_t locate_cell(std::span<const double> u) const;

  void apply_unit(std::span<const double> u, std::span<double> out) const override;
  /// Affine branch i evaluated at u (no cell lookup).
  void apply_branch(std::size_t i, std::span<const double> u, std::span<double> out) const;
  /// Inverse branch of cell i: the point of E_i mapped to target(i) + w, for w in [0,1]^d.
  Point inverse_branch(std::size_t i, std::span<const double> w) const;

  double min_volume() const { return min_volume_; }
  double max_volume() const { return max_volume_; }

  /// Cell volumes as exact rationals when every side is a recognisable rational.
  const std::optional<std::vector<Rational>>& rational_volumes() const { return rational_volumes_; }

 private:
  int dim_;
  std::vector<PartitionCell> cells_;
  std::vector<double> lo_;     // cells x dim, guard-adjusted lower bounds
  std::vector<double> hi_;     // cells x dim, guard-adjusted upper bounds
  std::vector<double> scale_;  // cells x dim x dim, O_i / h_i row-major
  double min_volume_ = 0.0;
  double max_volume_ = 0.0;
  std::optional<std::vector<Rational>> rational_volumes_;
};

/// phi(x, y) = (x + sin(2 pi y), y): the unit-time flow of a shear profile.
class ShearMap final : public PeriodicMap {
 public:
  int dim() const override { return 2; }
  void apply_unit(std::span<const double> u, std::span<double> out) const override;
};

/// phi(x) = x + shift.
class TranslationMap final : public PeriodicMap {
 public:
  explicit TranslationMap(Point shift) : shift_(std::move(shift)) {}
  int dim() const override { return static_cast<int>(shift_.size()); }
  void apply_unit(std::span<const double> u, std::span<double> out) const override;

 private:
  Point shift_;
};

namespace maps {
/// phi(x) = 2x on Q_0: E_1 = [0,1/2) -> Q_0, E_2 = [1/2,1) -> Q_1.
BernoulliMap doubling();
/// E_1 = [0,1/3) -> Q_0 via 3x, E_2 = [1/3,1) -> Q_1 via 3x/2 + 1/2.
BernoulliMap asymmetric();
/// Four quarter squares of Q_0, each doubled onto the cube with corner 2*corner.
BernoulliMap quadrant();
/// Doubling on the torus but every cell returns to Q_0 (no lattice spreading).
BernoulliMap confined_doubling();
}  // namespace maps

// --- validation -------------------------------------------------------------

struct ValidationItem {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationItem> items;
  std::vector<ErrorCode> errors;

  bool ok() const { return errors.empty(); }
  bool has(ErrorCode code) const;
};

struct ValidationOptions {
  /// Boundary mesh points per face edge for the surjectivity check in d >= 2.
  std::size_t boundary_mesh = 10'000;
};

ValidationReport validate_map(const BernoulliMap& map, const ValidationOptions& opts = {});

// --- expansion times --------------------------------------------------------

double jacobian_det(const BernoulliMap& map, std::span<const double> x);

/// Smallest m >= 0 with prod_{k=1..m} |det Dphi(X^0_k(x))| >= eps^-d.
/// Evaluated as the equivalent side-length test prod h <= eps.
std::size_t theta_eps(const BernoulliMap& map, std::span<const double> x, double eps);

enum class ThetaMode { Exact, MonteCarlo };

struct ThetaBar {
  double value = 0.0;
  double error = 0.0;  // rounding bound (exact) or standard error (Monte Carlo)
  std::optional<Rational> exact;
  std::size_t nodes = 0;
};

struct ThetaBarOptions {
  std::size_t node_budget = kDefaultNodeBudget;
  std::size_t samples = 100'000;
  std::uint64_t seed = 1;
};

ThetaBar theta_bar(const BernoulliMap& map, double eps, ThetaMode mode, const ThetaBarOptions& opts = {});

// --- cylinders --------------------------------------------------------------

struct CylinderSet {
  LatticeVec cube;
  std::vector<int> symbols;
  Point lower;  // lower corner in R^d
  double side = 1.0;

  double volume() const;
  bool contains(std::span<const double> x) const;
};

CylinderSet cylinder_geometry(const BernoulliMap& map, const LatticeVec& cube, std::span<const int> symbols);

/// sigma(k, s) = (k + sigma_0(s_0), s with its first symbol dropped).
std::pair<LatticeVec, std::vector<int>> cylinder_shift(const BernoulliMap& map, const LatticeVec& cube,
                                                       std::span<const int> symbols);

/// J(k, s) = k + sum_j sigma_0(s_j).
LatticeVec jump_cube(const BernoulliMap& map, const LatticeVec& cube, std::span<const int> symbols);

/// The element (k, s) of S_eps whose cylinder contains x.
CylinderSet locate_cylinder(const BernoulliMap& map, std::span<const double> x, double eps);

/// S_eps restricted to Q_0, in lexicographic symbol order.
std::vector<CylinderSet> enumerate_s_eps(const BernoulliMap& map, double eps,
                                         std::size_t node_budget = kDefaultNodeBudget);

/// Visits every minimal crossing tuple t (ell_t <= eps < ell_parent) of the
/// symbol tree in lexicographic order. `volume_exact` is empty when the map
/// has no rational volumes or the product overflowed.
struct CrossingTuple {
  std::span<const int> symbols;
  double side;
  double volume;
  const std::optional<Rational>& volume_exact;
};
std::size_t for_each_crossing_tuple(const BernoulliMap& map, double eps, std::size_t node_budget,
                                    const std::function<void(const CrossingTuple&)>& visit);

}  // namespace resdiff
