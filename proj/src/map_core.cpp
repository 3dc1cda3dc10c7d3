#include "resdiff/map_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "resdiff/rng.hpp"

namespace resdiff {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void renormalise(LatticePoint& p, std::span<const double> y) {
  for (std::size_t c = 0; c < y.size(); ++c) {
    double fl = std::floor(y[c]);
    double u = y[c] - fl;
    auto shift = static_cast<std::int64_t>(fl);
    if (u >= 1.0) {  // y a hair below an integer rounds up
      u = 0.0;
      shift += 1;
    }
    p.cube[c] += shift;
    p.frac[c] = u;
  }
}

std::string join_lattice(const LatticeVec& v) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

}  // namespace

// --- LatticePoint / PeriodicMap ----------------------------------------------

LatticePoint LatticePoint::from_point(std::span<const double> x) {
  LatticePoint p;
  p.cube.assign(x.size(), 0);
  p.frac.assign(x.size(), 0.0);
  renormalise(p, x);
  return p;
}

Point LatticePoint::to_point() const {
  Point x(frac.size());
  for (std::size_t c = 0; c < frac.size(); ++c) x[c] = static_cast<double>(cube[c]) + frac[c];
  return x;
}

Point PeriodicMap::apply(std::span<const double> x) const {
  const auto d = static_cast<std::size_t>(dim());
  if (x.size() != d) throw Error(ErrorCode::InvalidArgument, "point dimension mismatch");
  Point u(d), out(d);
  std::vector<double> n(d);
  for (std::size_t c = 0; c < d; ++c) {
    n[c] = std::floor(x[c]);
    u[c] = x[c] - n[c];
    if (u[c] >= 1.0) {
      u[c] = 0.0;
      n[c] += 1.0;
    }
  }
  apply_unit(u, out);
  for (std::size_t c = 0; c < d; ++c) out[c] += n[c];
  return out;
}

void PeriodicMap::advance(LatticePoint& p, std::span<const double> kick, double scale,
                          std::span<double> scratch) const {
  const auto d = static_cast<std::size_t>(dim());
  auto y = scratch.first(d);
  apply_unit(p.frac, y);
  if (!kick.empty()) {
    for (std::size_t c = 0; c < d; ++c) y[c] += scale * kick[c];
  }
  renormalise(p, y);
}

void ShearMap::apply_unit(std::span<const double> u, std::span<double> out) const {
  out[0] = u[0] + std::sin(2.0 * std::numbers::pi * u[1]);
  out[1] = u[1];
}

void TranslationMap::apply_unit(std::span<const double> u, std::span<double> out) const {
  for (std::size_t c = 0; c < shift_.size(); ++c) out[c] = u[c] + shift_[c];
}

// --- BernoulliMap ------------------------------------------------------------

double PartitionCell::volume() const { return std::pow(side, static_cast<double>(corner.size())); }

PartitionCell make_cell(Point corner, double side, Eigen::MatrixXd rotation, LatticeVec target) {
  const auto d = corner.size();
  if (rotation.rows() != static_cast<Eigen::Index>(d) || rotation.cols() != static_cast<Eigen::Index>(d) ||
      target.size() != d || !(side > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "inconsistent cell description");
  }
  PartitionCell cell{std::move(corner), side, std::move(rotation), Point(d, 0.0), std::move(target)};
  for (std::size_t r = 0; r < d; ++r) {
    double lo = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double o = cell.rotation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      lo += std::min(o * cell.corner[c], o * (cell.corner[c] + side)) / side;
    }
    cell.offset[r] = static_cast<double>(cell.target[r]) - lo;
  }
  return cell;
}

BernoulliMap::BernoulliMap(int dim, std::vector<PartitionCell> cells) : dim_(dim), cells_(std::move(cells)) {
  if (dim_ < 1) throw Error(ErrorCode::UnsupportedDimension, "dimension must be positive");
  if (cells_.size() < 2) throw Error(ErrorCode::InvalidArgument, "a Bernoulli map needs at least two cells");
  const auto d = static_cast<std::size_t>(dim_);
  lo_.resize(cells_.size() * d);
  hi_.resize(cells_.size() * d);
  scale_.resize(cells_.size() * d * d);
  min_volume_ = kInf;
  max_volume_ = 0.0;
  std::vector<Rational> rational;
  bool exact = true;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const auto& cell = cells_[i];
    if (cell.corner.size() != d || cell.offset.size() != d || cell.target.size() != d ||
        cell.rotation.rows() != dim_ || cell.rotation.cols() != dim_ || !(cell.side > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "cell " + std::to_string(i) + " has inconsistent shape");
    }
    for (std::size_t c = 0; c < d; ++c) {
      double lo = cell.corner[c];
      double hi = cell.corner[c] + cell.side;
      lo_[i * d + c] = lo <= 0.0 ? -kInf : lo - kCellGuard;
      hi_[i * d + c] = hi >= 1.0 - 1e-15 ? kInf : hi - kCellGuard;
      for (std::size_t k = 0; k < d; ++k) {
        scale_[(i * d + c) * d + k] =
            cell.rotation(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) / cell.side;
      }
    }
    double vol = cell.volume();
    min_volume_ = std::min(min_volume_, vol);
    max_volume_ = std::max(max_volume_, vol);
    if (exact) {
      auto side = Rational::approximate(cell.side);
      if (!side) {
        exact = false;
      } else {
        Rational v(1);
        for (std::size_t c = 0; c < d; ++c) v *= *side;
        rational.push_back(v);
      }
    }
  }
  if (exact) rational_volumes_ = std::move(rational);
}

std::size_t BernoulliMap::locate_cell(std::span<const double> u) const {
  const auto d = static_cast<std::size_t>(dim_);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    bool inside = true;
    for (std::size_t c = 0; c < d && inside; ++c) {
      inside = u[c] >= lo_[i * d + c] && u[c] < hi_[i * d + c];
    }
    if (inside) return i;
  }
  // Only reachable for maps whose cells leave gaps; pick the nearest box.
  std::size_t best = 0;
  double best_gap = kInf;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    double gap = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double lo = cells_[i].corner[c], hi = lo + cells_[i].side;
      gap += std::max({0.0, lo - u[c], u[c] - hi});
    }
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return best;
}

void BernoulliMap::apply_branch(std::size_t i, std::span<const double> u, std::span<double> out) const {
  const auto d = static_cast<std::size_t>(dim_);
  const double* s = &scale_[i * d * d];
  for (std::size_t r = 0; r < d; ++r) {
    double acc = cells_[i].offset[r];
    for (std::size_t c = 0; c < d; ++c) acc += s[r * d + c] * u[c];
    out[r] = acc;
  }
}

void BernoulliMap::apply_unit(std::span<const double> u, std::span<double> out) const {
  apply_branch(locate_cell(u), u, out);
}

Point BernoulliMap::inverse_branch(std::size_t i, std::span<const double> w) const {
  const auto d = static_cast<std::size_t>(dim_);
  const auto& cell = cells_.at(i);
  Point x(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      acc += cell.rotation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) *
             (static_cast<double>(cell.target[r]) + w[r] - cell.offset[r]);
    }
    x[c] = cell.side * acc;
  }
  return x;
}

namespace maps {

BernoulliMap doubling() {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(1, 1);
  return BernoulliMap(1, {make_cell({0.0}, 0.5, id, {0}), make_cell({0.5}, 0.5, id, {1})});
}

BernoulliMap asymmetric() {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(1, 1);
  return BernoulliMap(1, {make_cell({0.0}, 1.0 / 3.0, id, {0}), make_cell({1.0 / 3.0}, 2.0 / 3.0, id, {1})});
}

BernoulliMap quadrant() {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  std::vector<PartitionCell> cells;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) cells.push_back(make_cell({0.5 * a, 0.5 * b}, 0.5, id, {a, b}));
  }
  return BernoulliMap(2, std::move(cells));
}

BernoulliMap confined_doubling() {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(1, 1);
  return BernoulliMap(1, {make_cell({0.0}, 0.5, id, {0}), make_cell({0.5}, 0.5, id, {0})});
}

}  // namespace maps

// --- validation --------------------------------------------------------------

bool ValidationReport::has(ErrorCode code) const {
  return std::find(errors.begin(), errors.end(), code) != errors.end();
}

namespace {

void record(ValidationReport& report, std::string name, bool pass, std::string detail, ErrorCode code) {
  report.items.push_back({std::move(name), pass, std::move(detail)});
  if (!pass && !report.has(code)) report.errors.push_back(code);
}

// Is x the image of a point interior to some unit cube?
bool has_interior_preimage(const BernoulliMap& map, std::span<const double> x) {
  const auto d = static_cast<std::size_t>(map.dim());
  std::vector<double> out(d);
  for (std::size_t i = 0; i < map.num_cells(); ++i) {
    const auto& target = map.cell(i).target;
    // x - k must lie in the closed target cube; two choices per coordinate at most.
    std::vector<std::array<std::int64_t, 2>> choices(d);
    for (std::size_t c = 0; c < d; ++c) {
      auto base = static_cast<std::int64_t>(std::floor(x[c])) - target[c];
      choices[c] = {base, base - 1};
    }
    for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
      LatticeVec k(d);
      Point w(d);
      bool in_cube = true;
      for (std::size_t c = 0; c < d; ++c) {
        k[c] = choices[c][(mask >> c) & 1U];
        w[c] = x[c] - static_cast<double>(k[c]) - static_cast<double>(target[c]);
        in_cube = in_cube && w[c] >= -1e-12 && w[c] <= 1.0 + 1e-12;
      }
      if (!in_cube) continue;
      Point y = map.inverse_branch(i, w);
      bool interior = true;
      for (std::size_t c = 0; c < d; ++c) interior = interior && y[c] > 1e-12 && y[c] < 1.0 - 1e-12;
      if (!interior || map.locate_cell(y) != i) continue;
      map.apply_branch(i, y, out);
      double err = 0.0;
      for (std::size_t c = 0; c < d; ++c) err = std::max(err, std::abs(out[c] + static_cast<double>(k[c]) - x[c]));
      if (err <= 1e-9) return true;
    }
  }
  return false;
}

}  // namespace

ValidationReport validate_map(const BernoulliMap& map, const ValidationOptions& opts) {
  ValidationReport report;
  const auto d = static_cast<std::size_t>(map.dim());
  const auto& cells = map.cells();

  // Item 1: cells are intervals / axis-aligned cubes inside Q_0.
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        double lo = cells[i].corner[c], hi = lo + cells[i].side;
        if (lo < -1e-12 || hi > 1.0 + 1e-12) {
          ok = false;
          detail = "cell " + std::to_string(i) + " leaves Q_0";
        }
      }
    }
    record(report, "cells_are_cubes", ok, detail, ErrorCode::OverlappingCells);
  }

  {
    bool sorted = true;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].volume() < cells[i - 1].volume() * (1.0 - 1e-12)) sorted = false;
    }
    record(report, "volume_order", sorted, sorted ? "" : "cells must have nondecreasing volume",
           ErrorCode::CellOrder);
  }

  {
    double total = 0.0;
    for (const auto& cell : cells) total += cell.volume();
    bool ok = std::abs(total - 1.0) <= 1e-12;
    record(report, "volume_sum", ok, "sum of volumes = " + std::to_string(total), ErrorCode::VolumeDeficit);
  }

  {
    std::string detail;
    bool ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (std::size_t j = i + 1; j < cells.size(); ++j) {
        double overlap = 1.0;
        for (std::size_t c = 0; c < d; ++c) {
          double lo = std::max(cells[i].corner[c], cells[j].corner[c]);
          double hi = std::min(cells[i].corner[c] + cells[i].side, cells[j].corner[c] + cells[j].side);
          overlap *= std::max(0.0, hi - lo);
        }
        if (overlap > 1e-12) {
          ok = false;
          detail = "cells " + std::to_string(i) + " and " + std::to_string(j) + " overlap";
        }
      }
    }
    record(report, "disjoint", ok, detail, ErrorCode::OverlappingCells);
  }

  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& o = cells[i].rotation;
      double err = (o * o.transpose() - Eigen::MatrixXd::Identity(o.rows(), o.cols())).cwiseAbs().maxCoeff();
      if (err > 1e-12) {
        ok = false;
        detail = "cell " + std::to_string(i) + ": |O O^T - I| = " + std::to_string(err);
      }
    }
    record(report, "orthogonal", ok, detail, ErrorCode::NonOrthogonalMatrix);
  }

  // Item 2: the branch maps the cell corners onto the corners of its target cube.
  {
    bool ok = true;
    std::string detail;
    std::vector<double> image(d);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& cell = cells[i];
      std::vector<double> lo(d, kInf), hi(d, -kInf);
      for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
        Point corner(d);
        for (std::size_t c = 0; c < d; ++c) corner[c] = cell.corner[c] + (((mask >> c) & 1U) ? cell.side : 0.0);
        map.apply_branch(i, corner, image);
        for (std::size_t c = 0; c < d; ++c) {
          double t = static_cast<double>(cell.target[c]);
          bool on_corner = std::abs(image[c] - t) <= 1e-9 || std::abs(image[c] - t - 1.0) <= 1e-9;
          if (!on_corner) ok = false;
          lo[c] = std::min(lo[c], image[c]);
          hi[c] = std::max(hi[c], image[c]);
        }
      }
      for (std::size_t c = 0; c < d; ++c) {
        double t = static_cast<double>(cell.target[c]);
        if (std::abs(lo[c] - t) > 1e-9 || std::abs(hi[c] - t - 1.0) > 1e-9) ok = false;
      }
      if (!ok && detail.empty()) {
        detail = "cell " + std::to_string(i) + " does not map onto Q" + join_lattice(cell.target);
      }
    }
    record(report, "bijective_branches", ok, detail, ErrorCode::TargetCubeMismatch);
  }

  // Item 3: every boundary point of Q_0 has a preimage interior to some cube.
  {
    bool ok = true;
    std::string detail;
    if (d == 1) {
      // Interior points of a cell map into an open cube, so only cell
      // endpoints strictly inside (0,1) can land on an integer.
      for (double x : {0.0, 1.0}) {
        bool found = false;
        std::int64_t reach = 2;
        for (const auto& cell : cells) reach = std::max(reach, std::abs(cell.target[0]) + 2);
        for (const auto& cell : cells) {
          double b = cell.corner[0];
          if (b <= 0.0 || b >= 1.0) continue;
          for (std::int64_t k = -reach; k <= reach && !found; ++k) {
            double y = static_cast<double>(k) + b;
            found = std::abs(map.apply(std::span<const double>(&y, 1))[0] - x) <= 1e-12;
          }
        }
        if (!found) {
          ok = false;
          detail = "no interior preimage of " + std::to_string(x);
        }
      }
    } else {
      std::size_t per_face = opts.boundary_mesh;
      if (d > 2) {
        per_face = static_cast<std::size_t>(
            std::ceil(std::pow(static_cast<double>(opts.boundary_mesh), 1.0 / static_cast<double>(d - 1))));
      }
      Point x(d);
      for (std::size_t axis = 0; axis < d && ok; ++axis) {
        for (double side_value : {0.0, 1.0}) {
          std::size_t free_dims = d - 1;
          std::size_t total = 1;
          for (std::size_t f = 0; f < free_dims; ++f) total *= per_face + 1;
          for (std::size_t idx = 0; idx < total && ok; ++idx) {
            std::size_t rest = idx;
            for (std::size_t c = 0; c < d; ++c) {
              if (c == axis) {
                x[c] = side_value;
                continue;
              }
              x[c] = static_cast<double>(rest % (per_face + 1)) / static_cast<double>(per_face);
              rest /= per_face + 1;
            }
            if (!has_interior_preimage(map, x)) {
              ok = false;
              std::ostringstream os;
              os << "no interior preimage of boundary point (";
              for (std::size_t c = 0; c < d; ++c) os << (c ? "," : "") << x[c];
              os << ")";
              detail = os.str();
            }
          }
        }
      }
    }
    record(report, "boundary_surjective", ok, detail, ErrorCode::BoundaryUncovered);
  }

  // Periodic displacement holds by construction; spot-check it on dyadic points.
  {
    bool ok = true;
    Point x(d), xk(d);
    for (int trial = 0; trial < 64 && ok; ++trial) {
      for (std::size_t c = 0; c < d; ++c) {
        x[c] = static_cast<double>((trial * 37 + static_cast<int>(c) * 11) % 64) / 64.0;
        xk[c] = x[c] + static_cast<double>(trial % 7 - 3);
      }
      Point a = map.apply(x), b = map.apply(xk);
      for (std::size_t c = 0; c < d; ++c) ok = ok && (b[c] - (xk[c] - x[c]) == a[c]);
    }
    report.items.push_back({"periodic_displacement", ok, ""});
  }
  return report;
}

// --- expansion times ---------------------------------------------------------

double jacobian_det(const BernoulliMap& map, std::span<const double> x) {
  auto p = LatticePoint::from_point(x);
  return 1.0 / map.cell(map.locate_cell(p.frac)).volume();
}

std::size_t theta_eps(const BernoulliMap& map, std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  auto p = LatticePoint::from_point(x);
  std::vector<double> scratch(static_cast<std::size_t>(map.dim()));
  double side = 1.0;
  std::size_t m = 0;
  while (!(side <= eps)) {
    map.advance(p, {}, 0.0, scratch);
    side *= map.cell(map.locate_cell(p.frac)).side;
    ++m;
  }
  return m;
}

std::size_t for_each_crossing_tuple(const BernoulliMap& map, double eps, std::size_t node_budget,
                                    const std::function<void(const CrossingTuple&)>& visit) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  const auto& rational = map.rational_volumes();
  std::vector<int> symbols;
  std::size_t nodes = 1;
  std::optional<Rational> one = rational ? std::optional<Rational>(Rational(1)) : std::nullopt;
  if (1.0 <= eps) {
    visit({symbols, 1.0, 1.0, one});
    return nodes;
  }
  const std::size_t m = map.num_cells();
  std::function<void(double, double, const std::optional<Rational>&)> descend =
      [&](double side, double volume, const std::optional<Rational>& exact) {
        for (std::size_t i = 0; i < m; ++i) {
          if (++nodes > node_budget) {
            throw Error(ErrorCode::TreeBudgetExceeded,
                        "symbol tree exceeds " + std::to_string(node_budget) + " nodes");
          }
          double child_side = side * map.cell(i).side;
          double child_volume = volume * map.cell(i).volume();
          std::optional<Rational> child_exact;
          if (exact) {
            try {
              child_exact = *exact * (*rational)[i];
            } catch (const std::overflow_error&) {
            }
          }
          symbols.push_back(static_cast<int>(i));
          if (child_side <= eps) {
            visit({symbols, child_side, child_volume, child_exact});
          } else {
            descend(child_side, child_volume, child_exact);
          }
          symbols.pop_back();
        }
      };
  descend(1.0, 1.0, one);
  return nodes;
}

ThetaBar theta_bar(const BernoulliMap& map, double eps, ThetaMode mode, const ThetaBarOptions& opts) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  ThetaBar result;
  if (mode == ThetaMode::Exact) {
    double total = 0.0;
    std::optional<Rational> exact = map.rational_volumes() ? std::optional<Rational>(Rational(0)) : std::nullopt;
    result.nodes = for_each_crossing_tuple(map, eps, opts.node_budget, [&](const CrossingTuple& t) {
      auto len = static_cast<std::int64_t>(t.symbols.size());
      total += static_cast<double>(len) * t.volume;
      if (exact && t.volume_exact) {
        try {
          *exact += Rational(len) * *t.volume_exact;
        } catch (const std::overflow_error&) {
          exact.reset();
        }
      } else {
        exact.reset();
      }
    });
    result.value = exact ? exact->to_double() : total;
    result.exact = exact;
    result.error = static_cast<double>(result.nodes) * std::numeric_limits<double>::epsilon() * total;
    return result;
  }
  NoiseStream rng(opts.seed, 0, 0, StreamDomain::Sampling);
  const auto d = static_cast<std::size_t>(map.dim());
  Point u(d);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t n = 0; n < opts.samples; ++n) {
    for (auto& c : u) c = rng.uniform();
    auto t = static_cast<double>(theta_eps(map, u, eps));
    sum += t;
    sum_sq += t * t;
  }
  auto count = static_cast<double>(opts.samples);
  result.value = sum / count;
  double var = count > 1 ? (sum_sq - count * result.value * result.value) / (count - 1) : 0.0;
  result.error = std::sqrt(std::max(var, 0.0) / count);
  result.nodes = opts.samples;
  return result;
}

// --- cylinders ---------------------------------------------------------------

double CylinderSet::volume() const { return std::pow(side, static_cast<double>(lower.size())); }

bool CylinderSet::contains(std::span<const double> x) const {
  for (std::size_t c = 0; c < lower.size(); ++c) {
    if (x[c] < lower[c] || x[c] >= lower[c] + side) return false;
  }
  return true;
}

namespace {
void check_symbols(const BernoulliMap& map, std::span<const int> symbols) {
  for (int s : symbols) {
    if (s < 0 || static_cast<std::size_t>(s) >= map.num_cells()) {
      throw Error(ErrorCode::SymbolOutOfRange, "symbol " + std::to_string(s) + " outside [0, " +
                                                   std::to_string(map.num_cells()) + ")");
    }
  }
}
}  // namespace

CylinderSet cylinder_geometry(const BernoulliMap& map, const LatticeVec& cube, std::span<const int> symbols) {
  check_symbols(map, symbols);
  const auto d = static_cast<std::size_t>(map.dim());
  if (cube.size() != d) throw Error(ErrorCode::InvalidArgument, "cube index dimension mismatch");
  Point lo(d, 0.0), hi(d, 1.0);
  double side = 1.0;
  for (auto it = symbols.rbegin(); it != symbols.rend(); ++it) {
    auto i = static_cast<std::size_t>(*it);
    Point a = map.inverse_branch(i, lo);
    Point b = map.inverse_branch(i, hi);
    for (std::size_t c = 0; c < d; ++c) {
      lo[c] = std::min(a[c], b[c]);
      hi[c] = std::max(a[c], b[c]);
    }
  }
  for (int s : symbols) side *= map.cell(static_cast<std::size_t>(s)).side;
  CylinderSet cyl{cube, std::vector<int>(symbols.begin(), symbols.end()), Point(d), side};
  for (std::size_t c = 0; c < d; ++c) cyl.lower[c] = static_cast<double>(cube[c]) + lo[c];
  return cyl;
}

std::pair<LatticeVec, std::vector<int>> cylinder_shift(const BernoulliMap& map, const LatticeVec& cube,
                                                       std::span<const int> symbols) {
  check_symbols(map, symbols);
  if (symbols.empty()) return {cube, {}};
  LatticeVec k = cube;
  const auto& target = map.cell(static_cast<std::size_t>(symbols.front())).target;
  for (std::size_t c = 0; c < k.size(); ++c) k[c] += target[c];
  return {k, std::vector<int>(symbols.begin() + 1, symbols.end())};
}

LatticeVec jump_cube(const BernoulliMap& map, const LatticeVec& cube, std::span<const int> symbols) {
  check_symbols(map, symbols);
  LatticeVec k = cube;
  for (int s : symbols) {
    const auto& target = map.cell(static_cast<std::size_t>(s)).target;
    for (std::size_t c = 0; c < k.size(); ++c) k[c] += target[c];
  }
  return k;
}

CylinderSet locate_cylinder(const BernoulliMap& map, std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  auto p = LatticePoint::from_point(x);
  LatticeVec cube = p.cube;
  std::vector<int> symbols;
  std::vector<double> scratch(static_cast<std::size_t>(map.dim()));
  double side = 1.0;
  while (!(side <= eps)) {
    std::size_t i = map.locate_cell(p.frac);
    symbols.push_back(static_cast<int>(i));
    side *= map.cell(i).side;
    map.advance(p, {}, 0.0, scratch);
  }
  return cylinder_geometry(map, cube, symbols);
}

std::vector<CylinderSet> enumerate_s_eps(const BernoulliMap& map, double eps, std::size_t node_budget) {
  std::vector<CylinderSet> out;
  LatticeVec origin(static_cast<std::size_t>(map.dim()), 0);
  for_each_crossing_tuple(map, eps, node_budget,
                          [&](const CrossingTuple& t) { out.push_back(cylinder_geometry(map, origin, t.symbols)); });
  return out;
}

}  // namespace resdiff
