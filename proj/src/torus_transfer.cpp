#include "resdiff/torus_transfer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "binary_io.hpp"
#include "resdiff/parallel.hpp"

namespace resdiff {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// P(lo <= y + eps Z < hi) without cancellation in the tails.
double gaussian_interval(double lo, double hi, double y, double eps) {
  const double s = eps * std::numbers::sqrt2;
  double a = (lo - y) / s, b = (hi - y) / s;
  if (a >= 0.0) return 0.5 * (std::erfc(a) - std::erfc(b));
  if (b <= 0.0) return 0.5 * (std::erfc(-b) - std::erfc(-a));
  return 1.0 - 0.5 * std::erfc(-a) - 0.5 * std::erfc(b);
}

// z with P(|Z| > z) = p.
double two_sided_quantile(double p) {
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (std::erfc(mid / std::numbers::sqrt2) > p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace

// --- grid ----------------------------------------------------------------------

UlamGrid::UlamGrid(int dim, std::size_t cells_per_dim) : dim_(dim), g_(cells_per_dim) {
  if (dim != 1 && dim != 2) throw Error(ErrorCode::UnsupportedDimension, "Ulam grids support d = 1 or 2");
  if (cells_per_dim < 8) throw Error(ErrorCode::InvalidArgument, "grid needs at least 8 cells per dimension");
  size_ = dim == 1 ? g_ : g_ * g_;
}

Point UlamGrid::center(std::size_t g) const {
  Point c(static_cast<std::size_t>(dim_));
  for (auto& x : c) {
    x = (static_cast<double>(g % g_) + 0.5) / static_cast<double>(g_);
    g /= g_;
  }
  return c;
}

std::size_t UlamGrid::index_of(std::span<const double> u) const {
  std::size_t g = 0, stride = 1;
  for (int c = 0; c < dim_; ++c) {
    double v = u[static_cast<std::size_t>(c)] - std::floor(u[static_cast<std::size_t>(c)]);
    auto i = std::min(g_ - 1, static_cast<std::size_t>(v * static_cast<double>(g_)));
    g += i * stride;
    stride *= g_;
  }
  return g;
}

// --- kernel ----------------------------------------------------------------------

DisplacementKernel DisplacementKernel::from_rows(int dim, std::vector<Point> centers,
                                                 const std::vector<std::vector<Entry>>& rows) {
  DisplacementKernel k;
  k.dim = dim;
  k.states = rows.size();
  if (centers.size() != rows.size()) throw Error(ErrorCode::InvalidArgument, "one center per state required");
  const auto d = static_cast<std::size_t>(dim);
  for (const auto& c : centers) {
    if (c.size() != d) throw Error(ErrorCode::InvalidArgument, "center dimension mismatch");
    k.centers.insert(k.centers.end(), c.begin(), c.end());
  }
  k.window_lo.assign(d, std::numeric_limits<std::int64_t>::max());
  k.window_hi.assign(d, std::numeric_limits<std::int64_t>::min());
  k.row_ptr.push_back(0);
  for (const auto& row : rows) {
    for (const auto& e : row) {
      if (e.to >= rows.size()) throw Error(ErrorCode::InvalidArgument, "entry targets a missing state");
      if (e.jump.size() != d) throw Error(ErrorCode::InvalidArgument, "jump dimension mismatch");
      if (!(e.prob >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative transition probability");
      k.cols.push_back(static_cast<std::uint32_t>(e.to));
      k.jumps.insert(k.jumps.end(), e.jump.begin(), e.jump.end());
      k.probs.push_back(e.prob);
      for (std::size_t c = 0; c < d; ++c) {
        k.window_lo[c] = std::min(k.window_lo[c], e.jump[c]);
        k.window_hi[c] = std::max(k.window_hi[c], e.jump[c]);
      }
    }
    k.row_ptr.push_back(k.probs.size());
  }
  return k;
}

double DisplacementKernel::max_row_error() const {
  double err = 0.0;
  for (std::size_t g = 0; g < states; ++g) {
    double sum = 0.0;
    for (std::size_t e = row_ptr[g]; e < row_ptr[g + 1]; ++e) sum += probs[e];
    err = std::max(err, std::abs(sum - 1.0));
  }
  return err;
}

SparseRowMatrix DisplacementKernel::torus_matrix() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(nnz());
  for (std::size_t g = 0; g < states; ++g) {
    for (std::size_t e = row_ptr[g]; e < row_ptr[g + 1]; ++e) {
      triplets.emplace_back(static_cast<int>(g), static_cast<int>(cols[e]), probs[e]);
    }
  }
  SparseRowMatrix p(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(states));
  p.setFromTriplets(triplets.begin(), triplets.end());
  return p;
}

Eigen::MatrixXd DisplacementKernel::dense_torus_matrix() const {
  auto s = static_cast<Eigen::Index>(states);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(s, s);
  for (std::size_t g = 0; g < states; ++g) {
    for (std::size_t e = row_ptr[g]; e < row_ptr[g + 1]; ++e) {
      p(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(cols[e])) += probs[e];
    }
  }
  return p;
}

Eigen::VectorXd DisplacementKernel::column_sums() const {
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states));
  for (std::size_t e = 0; e < nnz(); ++e) sums[cols[e]] += probs[e];
  return sums;
}

Eigen::MatrixXd DisplacementKernel::drift() const {
  const auto d = static_cast<std::size_t>(dim);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states), dim);
  for (std::size_t g = 0; g < states; ++g) {
    auto cg = center(g);
    for (std::size_t e = row_ptr[g]; e < row_ptr[g + 1]; ++e) {
      auto cto = center(cols[e]);
      auto j = jump(e);
      for (std::size_t c = 0; c < d; ++c) {
        s(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(c)) +=
            probs[e] * (static_cast<double>(j[c]) + cto[c] - cg[c]);
      }
    }
  }
  return s;
}

DisplacementKernel build_displacement_kernel(const PeriodicMap& map, double eps, const UlamGrid& grid,
                                             const KernelOptions& opts) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  const int dim = map.dim();
  if (dim != grid.dim()) throw Error(ErrorCode::UnsupportedDimension, "grid and map dimensions differ");
  const auto d = static_cast<std::size_t>(dim);
  const auto big_g = static_cast<std::int64_t>(grid.cells_per_dim());
  const double width = grid.cell_width();
  const std::size_t q = std::max<std::size_t>(1, opts.subsamples_per_dim);
  const std::size_t q_total = d == 1 ? q : q * q;
  const double z_tail = two_sided_quantile(opts.tail_tol / static_cast<double>(d));
  const double reach = z_tail * eps;

  std::vector<std::vector<DisplacementKernel::Entry>> rows(grid.size());
  parallel_for(grid.size(), opts.threads, [&](std::size_t g) {
    Point corner = grid.center(g);
    for (auto& c : corner) c -= 0.5 * width;
    // Images of the midpoint subsamples and the fine-index window they reach.
    std::vector<Point> images(q_total, Point(d));
    std::vector<std::int64_t> lo(d, std::numeric_limits<std::int64_t>::max());
    std::vector<std::int64_t> hi(d, std::numeric_limits<std::int64_t>::min());
    Point u(d);
    for (std::size_t s = 0; s < q_total; ++s) {
      std::size_t rest = s;
      for (std::size_t c = 0; c < d; ++c) {
        u[c] = corner[c] + (static_cast<double>(rest % q) + 0.5) * width / static_cast<double>(q);
        rest /= q;
      }
      map.apply_unit(u, images[s]);
      for (std::size_t c = 0; c < d; ++c) {
        lo[c] = std::min(lo[c], static_cast<std::int64_t>(std::floor((images[s][c] - reach) / width)));
        hi[c] = std::max(hi[c], static_cast<std::int64_t>(std::floor((images[s][c] + reach) / width)));
      }
    }
    std::vector<std::size_t> extent(d);
    std::size_t cells = 1;
    for (std::size_t c = 0; c < d; ++c) {
      extent[c] = static_cast<std::size_t>(hi[c] - lo[c] + 1);
      cells *= extent[c];
    }
    std::vector<double> mass(cells, 0.0);
    std::vector<std::vector<double>> marginal(d);
    const double weight = 1.0 / static_cast<double>(q_total);
    for (std::size_t s = 0; s < q_total; ++s) {
      for (std::size_t c = 0; c < d; ++c) {
        marginal[c].assign(extent[c], 0.0);
        for (std::size_t m = 0; m < extent[c]; ++m) {
          double a = static_cast<double>(lo[c] + static_cast<std::int64_t>(m)) * width;
          marginal[c][m] = gaussian_interval(a, a + width, images[s][c], eps);
        }
      }
      if (d == 1) {
        for (std::size_t m = 0; m < extent[0]; ++m) mass[m] += weight * marginal[0][m];
      } else {
        for (std::size_t m1 = 0; m1 < extent[1]; ++m1) {
          double w1 = weight * marginal[1][m1];
          if (w1 == 0.0) continue;
          for (std::size_t m0 = 0; m0 < extent[0]; ++m0) mass[m1 * extent[0] + m0] += w1 * marginal[0][m0];
        }
      }
    }
    double kept = 0.0;
    auto& row = rows[g];
    for (std::size_t idx = 0; idx < cells; ++idx) {
      if (mass[idx] < opts.prune) continue;
      DisplacementKernel::Entry e;
      e.jump.resize(d);
      std::size_t rest = idx, to = 0, stride = 1;
      for (std::size_t c = 0; c < d; ++c) {
        std::int64_t fine = lo[c] + static_cast<std::int64_t>(rest % extent[c]);
        rest /= extent[c];
        e.jump[c] = floor_div(fine, big_g);
        to += static_cast<std::size_t>(fine - e.jump[c] * big_g) * stride;
        stride *= grid.cells_per_dim();
      }
      e.to = to;
      e.prob = mass[idx];
      kept += e.prob;
      row.push_back(std::move(e));
    }
    for (auto& e : row) e.prob /= kept;
  });

  std::vector<Point> centers(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) centers[g] = grid.center(g);
  DisplacementKernel kernel = DisplacementKernel::from_rows(dim, std::move(centers), rows);
  kernel.grid = grid;
  kernel.eps = eps;
  kernel.tail_tol = opts.tail_tol;
  return kernel;
}

// --- mixing ------------------------------------------------------------------------

double max_l1_to_uniform(const Eigen::MatrixXd& m) {
  const double u = 1.0 / static_cast<double>(m.cols());
  return (m.array() - u).abs().rowwise().sum().maxCoeff();
}

MixingResult mixing_time(const Eigen::MatrixXd& p, const MixingOptions& opts) {
  MixingResult result;
  Eigen::MatrixXd power = p;
  for (std::size_t t = 1; t <= opts.cap; ++t) {
    double dist = max_l1_to_uniform(power);
    result.distance.push_back(dist);
    if (dist < opts.threshold) {
      result.time = t;
      return result;
    }
    power = (power * p).eval();
  }
  throw Error(ErrorCode::NoMixingWithinCap, "no mixing within " + std::to_string(opts.cap) + " steps");
}

MixingResult mixing_time(const DisplacementKernel& kernel, const MixingOptions& opts) {
  if (opts.mode == MixingMode::Dense) {
    if (kernel.states > 4096) throw Error(ErrorCode::InvalidArgument, "dense mixing limited to 4096 states");
    return mixing_time(kernel.dense_torus_matrix(), opts);
  }
  // Propagate each indicator row until it is within the threshold. For a
  // doubly stochastic chain the distance is nonincreasing, so the slowest row
  // determines T.
  SparseRowMatrix p = kernel.torus_matrix();
  SparseRowMatrix pt = p.transpose();
  const auto s = static_cast<Eigen::Index>(kernel.states);
  const double u = 1.0 / static_cast<double>(s);
  std::vector<std::size_t> hit(kernel.states, 0);
  std::atomic<bool> capped{false};
  parallel_for(kernel.states, opts.threads, [&](std::size_t g) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(s);
    row[static_cast<Eigen::Index>(g)] = 1.0;
    for (std::size_t t = 1; t <= opts.cap; ++t) {
      row = (pt * row).eval();
      if ((row.array() - u).abs().sum() < opts.threshold) {
        hit[g] = t;
        return;
      }
    }
    capped = true;
  });
  if (capped) throw Error(ErrorCode::NoMixingWithinCap, "no mixing within " + std::to_string(opts.cap) + " steps");
  MixingResult result;
  result.time = *std::max_element(hit.begin(), hit.end());
  return result;
}

Eigen::VectorXd stationary_distribution(const DisplacementKernel& kernel) {
  const auto s = static_cast<Eigen::Index>(kernel.states);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s);
  rhs[0] = 1.0;
  Eigen::VectorXd pi;
  // (I - P^T) pi = 0 with the first equation replaced by sum(pi) = 1.
  if (kernel.states <= 4096) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(s, s) - kernel.dense_torus_matrix().transpose();
    a.row(0).setOnes();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    pi = lu.solve(rhs);
  } else {
    SparseRowMatrix p = kernel.torus_matrix();
    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index g = 0; g < s; ++g) {
      if (g != 0) triplets.emplace_back(g, g, 1.0);
      for (SparseRowMatrix::InnerIterator it(p, g); it; ++it) {
        if (it.col() != 0) triplets.emplace_back(it.col(), g, -it.value());
      }
      triplets.emplace_back(0, g, 1.0);
    }
    Eigen::SparseMatrix<double> a(s, s);
    a.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "stationary system is singular");
    pi = lu.solve(rhs);
  }
  if (!pi.allFinite()) throw Error(ErrorCode::SingularSystem, "stationary system is singular");
  return pi;
}

// --- corrector ------------------------------------------------------------------------

CorrectorSolution corrector_solve(const DisplacementKernel& kernel, CorrectorMode mode, const CorrectorOptions& opts) {
  CorrectorSolution sol;
  sol.mode = mode;
  sol.stationary = stationary_distribution(kernel);
  sol.drift = kernel.drift();
  sol.drift_mean = sol.drift.transpose() * sol.stationary;
  Eigen::MatrixXd f = sol.drift.rowwise() - sol.drift_mean.transpose();
  const auto s = static_cast<Eigen::Index>(kernel.states);
  SparseRowMatrix p = kernel.torus_matrix();

  if (mode == CorrectorMode::Series) {
    sol.chi = Eigen::MatrixXd::Zero(s, kernel.dim);
    Eigen::MatrixXd term = f;
    double previous = std::numeric_limits<double>::infinity();
    std::size_t n = 0;
    for (;; ++n) {
      if (n >= opts.max_terms) throw Error(ErrorCode::SeriesDivergence, "corrector series did not converge");
      sol.chi += term;
      term = (p * term).eval();
      double size = term.cwiseAbs().maxCoeff();
      // Geometric tail estimate from the last contraction ratio.
      double ratio = previous > 0.0 && std::isfinite(previous) ? size / previous : 1.0;
      previous = size;
      if (size == 0.0) break;
      if (ratio < 1.0 && size * ratio / (1.0 - ratio) < opts.tol && size < opts.tol) break;
    }
    sol.terms = n + 1;
    // Remove the component along constants that rounding leaves behind.
    Eigen::RowVectorXd mean = sol.stationary.transpose() * sol.chi;
    sol.chi.rowwise() -= mean;
  } else if (kernel.states <= 4096) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(s, s) - kernel.dense_torus_matrix();
    a += Eigen::VectorXd::Ones(s) * sol.stationary.transpose();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    sol.chi = lu.solve(f);
  } else {
    // Bordered system [[I - P, 1], [pi^T, 0]] [chi; lambda] = [f; 0].
    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index g = 0; g < s; ++g) {
      triplets.emplace_back(g, g, 1.0);
      for (SparseRowMatrix::InnerIterator it(p, g); it; ++it) triplets.emplace_back(g, it.col(), -it.value());
      triplets.emplace_back(g, s, 1.0);
      triplets.emplace_back(s, g, sol.stationary[g]);
    }
    Eigen::SparseMatrix<double> a(s + 1, s + 1);
    a.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "corrector system is singular");
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(s + 1, kernel.dim);
    rhs.topRows(s) = f;
    sol.chi = lu.solve(rhs).topRows(s);
  }
  if (!sol.chi.allFinite()) throw Error(ErrorCode::SingularSystem, "corrector is not finite");
  Eigen::MatrixXd residual = sol.chi - p * sol.chi - f;
  sol.residual = residual.cwiseAbs().maxCoeff();
  return sol;
}

Eigen::VectorXd kv_integrand(const DisplacementKernel& kernel, const CorrectorSolution& corrector,
                             std::span<const double> v) {
  const auto d = static_cast<std::size_t>(kernel.dim);
  if (corrector.chi.rows() != static_cast<Eigen::Index>(kernel.states) || corrector.chi.cols() != kernel.dim) {
    throw Error(ErrorCode::MissingCorrector, "corrector was not solved on this kernel");
  }
  if (v.size() != d) throw Error(ErrorCode::InvalidArgument, "direction dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kernel.states));
  // zeta per state projected on v, and v . s-bar.
  Eigen::VectorXd zeta(static_cast<Eigen::Index>(kernel.states));
  for (std::size_t g = 0; g < kernel.states; ++g) {
    double z = 0.0;
    auto c = kernel.center(g);
    for (std::size_t k = 0; k < d; ++k) z += v[k] * (c[k] + corrector.chi(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(k)));
    zeta[static_cast<Eigen::Index>(g)] = z;
  }
  double sbar = 0.0;
  for (std::size_t k = 0; k < d; ++k) sbar += v[k] * corrector.drift_mean[static_cast<Eigen::Index>(k)];
  for (std::size_t g = 0; g < kernel.states; ++g) {
    double acc = 0.0;
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      double inc = zeta[kernel.cols[e]] - zeta[static_cast<Eigen::Index>(g)] - sbar;
      auto j = kernel.jump(e);
      for (std::size_t k = 0; k < d; ++k) inc += v[k] * static_cast<double>(j[k]);
      acc += kernel.probs[e] * inc * inc;
    }
    out[static_cast<Eigen::Index>(g)] = acc;
  }
  return out;
}

double kv_rate(const DisplacementKernel& kernel, const CorrectorSolution& corrector, std::span<const double> v) {
  return corrector.stationary.dot(kv_integrand(kernel, corrector, v));
}

// --- covariance decay ----------------------------------------------------------------

double sup_second_moment(const DisplacementKernel& kernel) {
  const auto d = static_cast<std::size_t>(kernel.dim);
  double best = 0.0;
  for (std::size_t g = 0; g < kernel.states; ++g) {
    auto cg = kernel.center(g);
    double acc = 0.0;
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      auto cto = kernel.center(kernel.cols[e]);
      auto j = kernel.jump(e);
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        double delta = static_cast<double>(j[c]) + cto[c] - cg[c];
        sq += delta * delta;
      }
      acc += kernel.probs[e] * sq;
    }
    best = std::max(best, acc);
  }
  return best;
}

CovDecay cov_decay_check(const DisplacementKernel& kernel, std::size_t m, std::size_t n, std::span<const double> v,
                         std::size_t start_state) {
  const auto d = static_cast<std::size_t>(kernel.dim);
  if (v.size() != d) throw Error(ErrorCode::InvalidArgument, "direction dimension mismatch");
  if (start_state >= kernel.states) throw Error(ErrorCode::InvalidArgument, "start state out of range");
  const auto s = static_cast<Eigen::Index>(kernel.states);
  SparseRowMatrix p = kernel.torus_matrix();
  SparseRowMatrix pt = p.transpose();

  // a(g) = E[v . Delta_0 | g]; b = P^n a.
  Eigen::VectorXd a = kernel.drift() * Eigen::Map<const Eigen::VectorXd>(v.data(), kernel.dim);
  Eigen::VectorXd b = a;
  for (std::size_t k = 0; k < n; ++k) b = (p * b).eval();

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(s);
  mu[static_cast<Eigen::Index>(start_state)] = 1.0;
  for (std::size_t k = 0; k < m; ++k) mu = (pt * mu).eval();

  double joint = 0.0;
  for (std::size_t g = 0; g < kernel.states; ++g) {
    double weight = mu[static_cast<Eigen::Index>(g)];
    if (weight == 0.0) continue;
    auto cg = kernel.center(g);
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      auto cto = kernel.center(kernel.cols[e]);
      auto j = kernel.jump(e);
      double inc = 0.0;
      for (std::size_t c = 0; c < d; ++c) inc += v[c] * (static_cast<double>(j[c]) + cto[c] - cg[c]);
      joint += weight * kernel.probs[e] * inc * b[kernel.cols[e]];
    }
  }
  double first = mu.dot(a);
  Eigen::VectorXd later = mu;
  for (std::size_t k = 0; k < n + 1; ++k) later = (pt * later).eval();
  double second = later.dot(a);

  CovDecay out;
  out.lhs = std::abs(joint - first * second);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(s, s);
  for (std::size_t k = 0; k < n; ++k) power = (power * p).eval();
  out.l1_distance = max_l1_to_uniform(power);
  out.second_moment = sup_second_moment(kernel);
  double v2 = 0.0;
  for (double x : v) v2 += x * x;
  out.rhs = 4.0 * v2 * out.l1_distance * out.second_moment;
  return out;
}

// --- export ------------------------------------------------------------------------------

void write_kernel_binary(std::ostream& os, const DisplacementKernel& kernel) {
  os.write("RDKERN01", 8);
  detail::put_u64(os, static_cast<std::uint64_t>(kernel.dim));
  detail::put_u64(os, kernel.grid ? kernel.grid->cells_per_dim() : 0);
  detail::put_u64(os, kernel.states);
  for (double c : kernel.centers) detail::put_f64(os, c);
  for (auto w : kernel.window_lo) detail::put_i64(os, w);
  for (auto w : kernel.window_hi) detail::put_i64(os, w);
  detail::put_u64(os, kernel.nnz());
  for (std::size_t g = 0; g < kernel.states; ++g) {
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      detail::put_u64(os, g);
      detail::put_u64(os, kernel.cols[e]);
      for (auto j : kernel.jump(e)) detail::put_i64(os, j);
      detail::put_f64(os, kernel.probs[e]);
    }
  }
}

DisplacementKernel read_kernel_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != "RDKERN01") throw Error(ErrorCode::Io, "not a kernel file");
  const auto dim = static_cast<int>(detail::get_u64(is));
  const auto big_g = detail::get_u64(is);
  const auto states = detail::get_u64(is);
  const auto d = static_cast<std::size_t>(dim);
  std::vector<Point> centers(states, Point(d));
  for (auto& c : centers) {
    for (auto& x : c) x = detail::get_f64(is);
  }
  for (std::size_t c = 0; c < 2 * d; ++c) detail::get_i64(is);
  const auto nnz = detail::get_u64(is);
  std::vector<std::vector<DisplacementKernel::Entry>> rows(states);
  for (std::uint64_t e = 0; e < nnz; ++e) {
    auto from = detail::get_u64(is);
    DisplacementKernel::Entry entry;
    entry.to = detail::get_u64(is);
    entry.jump.resize(d);
    for (auto& j : entry.jump) j = detail::get_i64(is);
    entry.prob = detail::get_f64(is);
    if (from >= states) throw Error(ErrorCode::Io, "corrupt kernel file");
    rows[from].push_back(std::move(entry));
  }
  DisplacementKernel kernel = DisplacementKernel::from_rows(dim, std::move(centers), rows);
  if (big_g > 0) kernel.grid = UlamGrid(dim, big_g);
  return kernel;
}

void write_kernel_triplets(std::ostream& os, const DisplacementKernel& kernel) {
  os << std::setprecision(17);
  for (std::size_t g = 0; g < kernel.states; ++g) {
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      os << g << ' ' << kernel.cols[e];
      for (auto j : kernel.jump(e)) os << ' ' << j;
      os << ' ' << kernel.probs[e] << '\n';
    }
  }
}

}  // namespace resdiff
