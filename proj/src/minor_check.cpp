#include "resdiff/minor_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

#include "resdiff/parallel.hpp"
#include "resdiff/process.hpp"

namespace resdiff {

namespace {

void require_1d(const BernoulliMap& map) {
  if (map.dim() != 1) throw Error(ErrorCode::UnsupportedDimension, "density grids support d = 1 only");
}

double normal_cdf_interval(double lo, double hi, double mean, double eps) {
  const double s = eps * std::numbers::sqrt2;
  double a = (lo - mean) / s, b = (hi - mean) / s;
  if (a >= 0.0) return 0.5 * (std::erfc(a) - std::erfc(b));
  if (b <= 0.0) return 0.5 * (std::erfc(-b) - std::erfc(-a));
  return 1.0 - 0.5 * std::erfc(-a) - 0.5 * std::erfc(b);
}

double tail_quantile(double p) {
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::numbers::sqrt2) > p ? lo : hi) = mid;
  }
  return hi;
}

// Psi(-t) = phi(t) - t Phi(-t), where Psi(t) = t Phi(t) + phi(t).
double psi_negative(double t) {
  const double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
  return phi - t * 0.5 * std::erfc(t / std::numbers::sqrt2);
}

// Weights w[m], m = 0..M, of the cell-average Gaussian convolution; w[-m] = w[m].
std::vector<double> gaussian_cell_weights(double eps, double width, double tail_tol) {
  const double r = width / eps;
  const auto reach = static_cast<std::size_t>(std::ceil(tail_quantile(tail_tol) / r)) + 1;
  std::vector<double> w(reach + 1);
  const double scale = eps / width;
  w[0] = 1.0 + 2.0 * scale * (psi_negative(r) - psi_negative(0.0));
  for (std::size_t m = 1; m <= reach; ++m) {
    auto mm = static_cast<double>(m);
    w[m] = scale * (psi_negative((mm + 1.0) * r) - 2.0 * psi_negative(mm * r) + psi_negative((mm - 1.0) * r));
    w[m] = std::max(w[m], 0.0);
  }
  double total = w[0];
  for (std::size_t m = 1; m <= reach; ++m) total += 2.0 * w[m];
  for (auto& x : w) x /= total;
  return w;
}

void add_into(GridDensity& acc, const GridDensity& g) {
  if (acc.values.empty()) {
    acc = g;
    return;
  }
  std::int64_t lo = std::min(acc.first_cube, g.first_cube);
  std::int64_t hi = std::max(acc.first_cube + static_cast<std::int64_t>(acc.num_cubes),
                             g.first_cube + static_cast<std::int64_t>(g.num_cubes)) - 1;
  acc = acc.extended(lo, hi);
  std::size_t offset = static_cast<std::size_t>(g.first_cube - acc.first_cube) * acc.cells_per_unit;
  for (std::size_t i = 0; i < g.size(); ++i) acc.values[offset + i] += g.values[i];
}

// Value of f on the cell with absolute index `cell` (cell * width is its lower edge).
double value_at(const GridDensity& f, std::int64_t cell) {
  std::int64_t start = f.first_cube * static_cast<std::int64_t>(f.cells_per_unit);
  std::int64_t i = cell - start;
  if (i < 0 || i >= static_cast<std::int64_t>(f.size())) return 0.0;
  return f.values[static_cast<std::size_t>(i)];
}

}  // namespace

// --- GridDensity ----------------------------------------------------------------------

GridDensity GridDensity::zeros(std::int64_t first_cube, std::size_t num_cubes, std::size_t cells_per_unit) {
  GridDensity f;
  f.first_cube = first_cube;
  f.num_cubes = num_cubes;
  f.cells_per_unit = cells_per_unit;
  f.values.assign(num_cubes * cells_per_unit, 0.0);
  return f;
}

double GridDensity::cell_lower(std::size_t i) const {
  return static_cast<double>(first_cube) + static_cast<double>(i) / static_cast<double>(cells_per_unit);
}

double GridDensity::mass() const {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum * width();
}

std::pair<std::size_t, std::size_t> GridDensity::cube_cells(std::int64_t k) const {
  if (k < first_cube || k >= first_cube + static_cast<std::int64_t>(num_cubes)) return {0, 0};
  auto begin = static_cast<std::size_t>(k - first_cube) * cells_per_unit;
  return {begin, begin + cells_per_unit};
}

std::vector<double> GridDensity::cube_masses() const {
  std::vector<double> out(num_cubes, 0.0);
  for (std::size_t i = 0; i < size(); ++i) out[i / cells_per_unit] += values[i];
  for (auto& m : out) m *= width();
  return out;
}

GridDensity GridDensity::extended(std::int64_t lo, std::int64_t hi) const {
  lo = std::min(lo, first_cube);
  hi = std::max(hi, first_cube + static_cast<std::int64_t>(num_cubes) - 1);
  GridDensity g = zeros(lo, static_cast<std::size_t>(hi - lo + 1), cells_per_unit);
  std::size_t offset = static_cast<std::size_t>(first_cube - lo) * cells_per_unit;
  std::copy(values.begin(), values.end(), g.values.begin() + static_cast<std::ptrdiff_t>(offset));
  return g;
}

void GridDensity::trim() {
  auto empty = [&](std::size_t cube) {
    for (std::size_t i = cube * cells_per_unit; i < (cube + 1) * cells_per_unit; ++i) {
      if (values[i] != 0.0) return false;
    }
    return true;
  };
  std::size_t lo = 0, hi = num_cubes;
  while (lo < hi && empty(lo)) ++lo;
  while (hi > lo && empty(hi - 1)) --hi;
  if (lo == 0 && hi == num_cubes) return;
  if (lo == hi) {
    num_cubes = 0;
    values.clear();
    return;
  }
  std::vector<double> kept(values.begin() + static_cast<std::ptrdiff_t>(lo * cells_per_unit),
                           values.begin() + static_cast<std::ptrdiff_t>(hi * cells_per_unit));
  values = std::move(kept);
  first_cube += static_cast<std::int64_t>(lo);
  num_cubes = hi - lo;
}

void GridDensity::write_csv(std::ostream& os) const {
  os << "x,value\n";
  char buf[64];
  for (std::size_t i = 0; i < size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", cell_center(i), values[i]);
    os << buf;
  }
}

// --- bumps ------------------------------------------------------------------------------

double f_star(std::span<const double> x) {
  double v = 1.0;
  for (double xi : x) v *= kFStarNorm1d * std::abs(std::sin(std::numbers::pi * xi));
  return v;
}

double f_ks(const BernoulliMap& map, const LatticeVec& k, std::span<const int> s, std::span<const double> x) {
  if (s.empty()) {
    auto p = LatticePoint::from_point(x);
    return p.cube == k ? f_star(x) : 0.0;
  }
  CylinderSet cyl = cylinder_geometry(map, k, s);
  if (!cyl.contains(x)) return 0.0;
  Point y(x.begin(), x.end());
  for (std::size_t n = 0; n < s.size(); ++n) y = map.apply(y);
  return f_star(y) / cyl.volume();
}

GridDensity bump_density(const BernoulliMap& map, std::int64_t k, std::span<const int> s, std::size_t cells_per_unit) {
  require_1d(map);
  CylinderSet cyl = cylinder_geometry(map, {k}, s);
  const double lower = cyl.lower[0], side = cyl.side;
  GridDensity f = GridDensity::zeros(k, 1, cells_per_unit);
  const double w = f.width();
  for (std::size_t i = 0; i < f.size(); ++i) {
    double a = f.cell_lower(i), b = a + w;
    double a2 = std::max(a, lower), b2 = std::min(b, lower + side);
    if (b2 <= a2) continue;
    double ta = std::numbers::pi * (a2 - lower) / side, tb = std::numbers::pi * (b2 - lower) / side;
    f.values[i] = std::max(0.0, 0.5 * (std::cos(ta) - std::cos(tb)) / w);
  }
  return f;
}

GridDensity gaussian_density(double mean, double eps, std::size_t cells_per_unit, double tail_tol) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  const double reach = tail_quantile(tail_tol) * eps;
  auto lo = static_cast<std::int64_t>(std::floor(mean - reach));
  auto hi = static_cast<std::int64_t>(std::floor(mean + reach));
  GridDensity f = GridDensity::zeros(lo, static_cast<std::size_t>(hi - lo + 1), cells_per_unit);
  const double w = f.width();
  for (std::size_t i = 0; i < f.size(); ++i) {
    double a = f.cell_lower(i);
    f.values[i] = normal_cdf_interval(a, a + w, mean, eps) / w;
  }
  return f;
}

// --- pushes ------------------------------------------------------------------------------

GridDensity gaussian_smooth(const GridDensity& f, double eps, const PushOptions& opts) {
  if (eps == 0.0) return f;
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be nonnegative");
  const std::size_t g = f.cells_per_unit;
  auto w = gaussian_cell_weights(eps, f.width(), opts.tail_tol);
  const std::size_t reach = w.size() - 1;
  const auto pad = static_cast<std::int64_t>((reach + g - 1) / g);
  std::int64_t lo = f.first_cube - pad, hi = f.first_cube + static_cast<std::int64_t>(f.num_cubes) - 1 + pad;
  if (static_cast<std::size_t>(hi - lo + 1) > opts.max_cubes) {
    throw Error(ErrorCode::WindowBudgetExceeded, "density window exceeds " + std::to_string(opts.max_cubes) + " cubes");
  }
  GridDensity out = GridDensity::zeros(lo, static_cast<std::size_t>(hi - lo + 1), g);
  const auto offset = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(pad) * g);
  const auto n_in = static_cast<std::ptrdiff_t>(f.size());
  const std::size_t chunks = std::max<std::size_t>(1, out.size() / 4096);
  parallel_for(chunks, opts.threads, [&](std::size_t c) {
    std::size_t begin = c * out.size() / chunks, end = (c + 1) * out.size() / chunks;
    for (std::size_t i = begin; i < end; ++i) {
      std::ptrdiff_t center = static_cast<std::ptrdiff_t>(i) - offset;
      std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, center - static_cast<std::ptrdiff_t>(reach));
      std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(n_in - 1, center + static_cast<std::ptrdiff_t>(reach));
      double acc = 0.0;
      for (std::ptrdiff_t j = j0; j <= j1; ++j) {
        double v = f.values[static_cast<std::size_t>(j)];
        if (v != 0.0) acc += v * w[static_cast<std::size_t>(std::abs(center - j))];
      }
      out.values[i] = acc;
    }
  });
  out.trim();
  return out;
}

GridDensity push_density(const BernoulliMap& map, const GridDensity& f, double eps, const PushOptions& opts) {
  require_1d(map);
  if (eps < 0.0) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be nonnegative");
  const std::size_t g = f.cells_per_unit;
  const double width = f.width();
  std::int64_t tmin = std::numeric_limits<std::int64_t>::max(), tmax = std::numeric_limits<std::int64_t>::min();
  for (const auto& cell : map.cells()) {
    tmin = std::min(tmin, cell.target[0]);
    tmax = std::max(tmax, cell.target[0]);
  }
  const std::int64_t lo = f.first_cube + tmin;
  const std::int64_t hi = f.first_cube + static_cast<std::int64_t>(f.num_cubes) - 1 + tmax;
  if (static_cast<std::size_t>(hi - lo + 1) > opts.max_cubes) {
    throw Error(ErrorCode::WindowBudgetExceeded, "density window exceeds " + std::to_string(opts.max_cubes) + " cubes");
  }
  GridDensity out = GridDensity::zeros(lo, static_cast<std::size_t>(hi - lo + 1), g);
  const double out_start = static_cast<double>(lo);

  // Partition breakpoints of Q_0.
  std::vector<double> breaks;
  for (const auto& cell : map.cells()) breaks.push_back(cell.corner[0]);
  std::sort(breaks.begin(), breaks.end());

  const std::size_t n = f.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = f.values[i];
    if (v == 0.0) continue;
    // minmod slope from neighbouring cell averages (zero outside the window)
    double left = i > 0 ? f.values[i - 1] : 0.0;
    double right = i + 1 < n ? f.values[i + 1] : 0.0;
    double dl = v - left, dr = right - v;
    double slope = dl * dr > 0.0 ? (std::abs(dl) < std::abs(dr) ? dl : dr) / width : 0.0;

    const auto cube = f.first_cube + static_cast<std::int64_t>(i / g);
    const double u0 = static_cast<double>(i % g) * width;
    const double u1 = u0 + width;
    const double um = 0.5 * (u0 + u1);
    // Split [u0, u1) at the partition breakpoints.
    std::vector<double> pieces{u0};
    for (double b : breaks) {
      if (b > u0 && b < u1) pieces.push_back(b);
    }
    pieces.push_back(u1);
    for (std::size_t p = 0; p + 1 < pieces.size(); ++p) {
      double a = pieces[p], b = pieces[p + 1];
      double mid = 0.5 * (a + b);
      std::size_t branch = map.locate_cell(std::span<const double>(&mid, 1));
      double ya = 0.0, yb = 0.0;
      map.apply_branch(branch, std::span<const double>(&a, 1), std::span<double>(&ya, 1));
      map.apply_branch(branch, std::span<const double>(&b, 1), std::span<double>(&yb, 1));
      ya += static_cast<double>(cube);
      yb += static_cast<double>(cube);
      const double alpha = (yb - ya) / (b - a);
      const double y_lo = std::min(ya, yb), y_hi = std::max(ya, yb);
      auto m0 = static_cast<std::int64_t>(std::floor((y_lo - out_start) / width));
      auto m1 = static_cast<std::int64_t>(std::ceil((y_hi - out_start) / width));
      m0 = std::max<std::int64_t>(m0, 0);
      m1 = std::min<std::int64_t>(m1, static_cast<std::int64_t>(out.size()));
      for (std::int64_t m = m0; m < m1; ++m) {
        double c0 = std::max(y_lo, out_start + static_cast<double>(m) * width);
        double c1 = std::min(y_hi, out_start + static_cast<double>(m + 1) * width);
        if (c1 <= c0) continue;
        double x0 = a + (c0 - ya) / alpha, x1 = a + (c1 - ya) / alpha;
        if (x0 > x1) std::swap(x0, x1);
        double mass = v * (x1 - x0) + 0.5 * slope * ((x1 - um) * (x1 - um) - (x0 - um) * (x0 - um));
        out.values[static_cast<std::size_t>(m)] += mass / width;
      }
    }
  }
  out.trim();
  return gaussian_smooth(out, eps, opts);
}

GridDensity shift_mix(const BernoulliMap& map, const GridDensity& f) {
  require_1d(map);
  std::map<std::int64_t, double> shifts;
  for (const auto& cell : map.cells()) shifts[cell.target[0]] += cell.volume();
  GridDensity out;
  for (const auto& [sigma, p] : shifts) {
    GridDensity part = f;
    part.first_cube -= sigma;
    for (auto& v : part.values) v *= p;
    add_into(out, part);
  }
  return out;
}

// --- bump chain ---------------------------------------------------------------------------

namespace {

double min_ratio_on_cylinder(const GridDensity& num, const GridDensity& target, const CylinderSet& cyl,
                             std::size_t layer) {
  const double w = target.width();
  const double lo = cyl.lower[0] + static_cast<double>(layer) * w;
  const double hi = cyl.lower[0] + cyl.side - static_cast<double>(layer) * w;
  const std::int64_t start = target.first_cube * static_cast<std::int64_t>(target.cells_per_unit);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < target.size(); ++i) {
    double a = target.cell_lower(i);
    if (a < lo - 1e-12 || a + w > hi + 1e-12 || target.values[i] <= 0.0) continue;
    double ratio = value_at(num, start + static_cast<std::int64_t>(i)) / target.values[i];
    best = std::min(best, ratio);
  }
  return best;
}

}  // namespace

BumpChainReport verify_bump_chain(const BernoulliMap& map, std::int64_t k, std::span<const int> s, double eps,
                                  const BumpChainOptions& opts) {
  require_1d(map);
  CylinderSet start = cylinder_geometry(map, {k}, s);
  if (start.side < eps) {
    throw Error(ErrorCode::HypothesisViolated, "cylinder side " + std::to_string(start.side) + " < eps");
  }
  BumpChainReport report;
  report.beta_theory = std::exp(-1.0 / (1.0 - std::pow(map.max_volume(), 2.0 / map.dim())));
  const std::size_t g = opts.cells_per_unit;
  GridDensity cumulative = bump_density(map, k, s, g);
  LatticeVec cube{k};
  std::vector<int> symbols(s.begin(), s.end());
  double a_fit = 0.0;
  for (std::size_t step = 1; step <= s.size(); ++step) {
    CylinderSet source = cylinder_geometry(map, cube, symbols);
    GridDensity fresh = push_density(map, bump_density(map, cube[0], symbols, g), eps, opts.push);
    cumulative = push_density(map, cumulative, eps, opts.push);
    auto [next_cube, next_symbols] = cylinder_shift(map, cube, symbols);
    CylinderSet dest = cylinder_geometry(map, next_cube, next_symbols);
    GridDensity target = bump_density(map, next_cube[0], next_symbols, g);
    double ratio = min_ratio_on_cylinder(fresh, target, dest, opts.boundary_layer);
    double lambda = 1.0 / source.side;
    report.step_ratio.push_back(ratio);
    report.cumulative_ratio.push_back(min_ratio_on_cylinder(cumulative, target, dest, opts.boundary_layer));
    report.lambda.push_back(lambda);
    report.mass_error = std::max(report.mass_error, std::abs(cumulative.mass() - 1.0));
    if (eps > 0.0 && ratio < 1.0) a_fit = std::max(a_fit, -std::log(ratio) / ((lambda * eps) * (lambda * eps)));
    cube = next_cube;
    symbols = next_symbols;
  }
  report.a_fit = a_fit;
  report.beta_emp = report.cumulative_ratio.empty() ? 1.0 : report.cumulative_ratio.back();
  return report;
}

// --- Doeblin stages -------------------------------------------------------------------------

GridDensity z_one_step_density(const BernoulliMap& map, double x, double eps, const DoeblinOptions& opts) {
  require_1d(map);
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  const std::size_t theta = theta_eps(map, std::span<const double>(&x, 1), eps);
  double y = map.apply(std::span<const double>(&x, 1))[0];
  GridDensity f = gaussian_density(y, eps, opts.cells_per_unit, opts.push.tail_tol);
  for (std::size_t k = 0; k < theta + 1; ++k) f = push_density(map, f, eps, opts.push);
  return shift_mix(map, f);
}

DoeblinReport verify_doeblin(const BernoulliMap& map, double x, double eps, DoeblinStage stage,
                             const DoeblinOptions& opts) {
  require_1d(map);
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  DoeblinReport report;
  report.stage = stage;
  auto cube_min = [](const GridDensity& f, std::int64_t k) {
    auto [b, e] = f.cube_cells(k);
    if (b == e) return 0.0;
    return *std::min_element(f.values.begin() + static_cast<std::ptrdiff_t>(b),
                             f.values.begin() + static_cast<std::ptrdiff_t>(e));
  };

  if (stage == DoeblinStage::Defrag) {
    GridDensity f = bump_density(map, 0, {}, opts.cells_per_unit);
    report.density = shift_mix(map, push_density(map, f, eps, opts.push));
    report.min_constant = cube_min(report.density, 0);
    return report;
  }

  report.theta = theta_eps(map, std::span<const double>(&x, 1), eps);
  auto orbit = deterministic_orbit(map, std::span<const double>(&x, 1), 1 + report.theta);
  report.target_cube = static_cast<std::int64_t>(std::floor(orbit.back()[0]));
  GridDensity z1 = z_one_step_density(map, x, eps, opts);
  if (stage == DoeblinStage::OneStep) {
    report.min_constant = cube_min(z1, report.target_cube);
    report.density = std::move(z1);
    return report;
  }

  // Second Z step: group the Z_1 density by theta of the starting cell.
  std::map<std::size_t, GridDensity> groups;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    if (z1.values[i] == 0.0) continue;
    double c = z1.cell_center(i);
    std::size_t t = theta_eps(map, std::span<const double>(&c, 1), eps);
    auto [it, fresh] = groups.try_emplace(t, GridDensity::zeros(z1.first_cube, z1.num_cubes, z1.cells_per_unit));
    it->second.values[i] = z1.values[i];
  }
  GridDensity z2;
  for (auto& [t, part] : groups) {
    GridDensity f = part;
    for (std::size_t k = 0; k < t + 2; ++k) f = push_density(map, f, eps, opts.push);
    add_into(z2, shift_mix(map, f));
  }
  double anchor = orbit.back()[0];
  auto w = w_check_distribution(map, std::span<const double>(&anchor, 1), eps, DistributionMode::Exact);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.support.size(); ++i) {
    if (w.prob[i] <= 0.0) continue;
    best = std::min(best, cube_min(z2, w.support[i][0]) / w.prob[i]);
  }
  report.min_constant = best;
  report.density = std::move(z2);
  return report;
}

}  // namespace resdiff
