#include "resdiff/process.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "binary_io.hpp"
#include "resdiff/parallel.hpp"

namespace resdiff {

Point step_with_noise(const PeriodicMap& map, std::span<const double> x, double eps, std::span<const double> xi) {
  Point y = map.apply(x);
  if (eps != 0.0) {
    if (xi.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "noise dimension mismatch");
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += eps * xi[c];
  }
  return y;
}

Point step(const PeriodicMap& map, std::span<const double> x, double eps, NoiseStream& noise) {
  if (eps == 0.0) return map.apply(x);
  Point xi(x.size());
  noise.gaussian(xi);
  return step_with_noise(map, x, eps, xi);
}

std::vector<Point> deterministic_orbit(const PeriodicMap& map, std::span<const double> x, std::size_t n) {
  std::vector<Point> orbit;
  orbit.reserve(n);
  auto p = LatticePoint::from_point(x);
  std::vector<double> scratch(x.size());
  for (std::size_t k = 0; k < n; ++k) {
    map.advance(p, {}, 0.0, scratch);
    orbit.push_back(p.to_point());
  }
  return orbit;
}

InitialDistribution InitialDistribution::delta(Point x) {
  InitialDistribution init;
  init.kind = Kind::Delta;
  init.point = std::move(x);
  return init;
}

InitialDistribution InitialDistribution::uniform(int dim, LatticeVec cube) {
  InitialDistribution init;
  init.kind = Kind::Uniform;
  init.cube = cube.empty() ? LatticeVec(static_cast<std::size_t>(dim), 0) : std::move(cube);
  return init;
}

InitialDistribution InitialDistribution::custom(std::function<Point(NoiseStream&)> sampler) {
  InitialDistribution init;
  init.kind = Kind::Custom;
  init.sampler = std::move(sampler);
  return init;
}

LatticePoint InitialDistribution::sample(int dim, std::uint64_t seed, std::uint64_t stream) const {
  const auto d = static_cast<std::size_t>(dim);
  switch (kind) {
    case Kind::Delta:
      if (point.size() != d) throw Error(ErrorCode::InvalidArgument, "initial point dimension mismatch");
      return LatticePoint::from_point(point);
    case Kind::Uniform: {
      NoiseStream rng(seed, stream, 0, StreamDomain::Initial);
      LatticePoint p;
      p.cube = cube.empty() ? LatticeVec(d, 0) : cube;
      p.frac.resize(d);
      for (auto& u : p.frac) u = rng.uniform();
      return p;
    }
    case Kind::Custom: {
      NoiseStream rng(seed, stream, 0, StreamDomain::Initial);
      Point x = sampler(rng);
      if (x.size() != d) throw Error(ErrorCode::InvalidArgument, "custom initial sample dimension mismatch");
      return LatticePoint::from_point(x);
    }
  }
  return {};
}

namespace {

// Width of the window around a stored coordinate that still holds the exact
// point, and the width at which it is refilled.
constexpr double kFreshResolution = 0x1p-53;
constexpr double kRefillResolution = 0x1p-26;

// Refills bits that noiseless expansion has shifted out of the mantissa. The
// exact point is uniform on the window around the stored value, so drawing it
// afresh keeps the law of the exact-arithmetic orbit.
void refill_precision(LatticePoint& p, double& resolution, NoiseStream& noise) {
  if (resolution < kRefillResolution) return;
  for (std::size_t c = 0; c < p.frac.size(); ++c) {
    double u = p.frac[c] + (noise.uniform() - 0.5) * resolution;
    double f = std::floor(u);
    p.cube[c] += static_cast<std::int64_t>(f);
    p.frac[c] = u - f;
  }
  resolution = kFreshResolution;
}

struct Accumulator {
  double count = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;

  explicit Accumulator(Eigen::Index d) : mean(Eigen::VectorXd::Zero(d)), m2(Eigen::MatrixXd::Zero(d, d)) {}

  void add(const Eigen::VectorXd& x) {
    count += 1.0;
    Eigen::VectorXd delta = x - mean;
    mean += delta / count;
    m2.noalias() += delta * (x - mean).transpose();
  }

  void merge(const Accumulator& o) {
    if (o.count == 0.0) return;
    double total = count + o.count;
    Eigen::VectorXd delta = o.mean - mean;
    mean += delta * (o.count / total);
    m2 += o.m2 + delta * delta.transpose() * (count * o.count / total);
    count = total;
  }

  Eigen::MatrixXd covariance() const {
    if (count < 2.0) return Eigen::MatrixXd::Zero(m2.rows(), m2.cols());
    Eigen::MatrixXd c = m2 / (count - 1.0);
    return 0.5 * (c + c.transpose());
  }
};

double batch_se(const std::vector<double>& values) {
  const auto b = static_cast<double>(values.size());
  if (values.size() < 2) return std::nan("");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= b;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (b - 1.0) / b);
}

}  // namespace

EnsembleResult simulate_ensemble(const PeriodicMap& map, const InitialDistribution& initial, double eps,
                                 std::size_t n, std::size_t trajectories, std::uint64_t seed,
                                 const EnsembleOptions& opts) {
  if (trajectories == 0) throw Error(ErrorCode::InvalidArgument, "need at least one trajectory");
  if (eps < 0.0) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be nonnegative");
  const int dim = map.dim();
  const auto d = static_cast<std::size_t>(dim);
  for (const auto& v : opts.directions) {
    if (v.size() != d) throw Error(ErrorCode::InvalidArgument, "direction dimension mismatch");
  }

  std::vector<std::size_t> times = opts.observe_times.empty() ? std::vector<std::size_t>{n} : opts.observe_times;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (times.back() > n) throw Error(ErrorCode::InvalidArgument, "observation time beyond n");

  const std::size_t batches = std::max<std::size_t>(1, std::min(opts.batches, trajectories));
  std::vector<std::vector<Accumulator>> acc(batches, std::vector<Accumulator>(times.size(), Accumulator(dim)));

  EnsembleResult result;
  result.trajectories = trajectories;
  if (opts.keep_paths) result.paths.resize(trajectories);

  // Noiseless runs of a Bernoulli map from a spread-out start lose one mantissa
  // bit per factor 2 of expansion; those runs refill the lost bits.
  const auto* bernoulli = dynamic_cast<const BernoulliMap*>(&map);
  const double expansion = bernoulli ? 1.0 / std::pow(bernoulli->min_volume(), 1.0 / dim) : 1.0;
  const bool refill = eps == 0.0 && bernoulli && initial.kind != InitialDistribution::Kind::Delta;

  parallel_for(batches, opts.threads, [&](std::size_t b) {
    std::size_t first = b * trajectories / batches;
    std::size_t last = (b + 1) * trajectories / batches;
    std::vector<double> kick(d), scratch(d);
    Eigen::VectorXd x(dim);
    for (std::size_t t = first; t < last; ++t) {
      LatticePoint p = initial.sample(dim, seed, t);
      NoiseStream noise(seed, t, 0, StreamDomain::Noise);
      std::vector<Point>* path = opts.keep_paths ? &result.paths[t] : nullptr;
      if (path) {
        path->reserve(n + 1);
        path->push_back(p.to_point());
      }
      std::size_t next_obs = 0;
      double resolution = kFreshResolution;
      for (std::size_t k = 0;; ++k) {
        while (next_obs < times.size() && times[next_obs] == k) {
          for (std::size_t c = 0; c < d; ++c) x[static_cast<Eigen::Index>(c)] = static_cast<double>(p.cube[c]) + p.frac[c];
          acc[b][next_obs].add(x);
          ++next_obs;
        }
        if (k == n) break;
        if (eps != 0.0) {
          noise.gaussian(kick);
          map.advance(p, kick, eps, scratch);
        } else {
          map.advance(p, {}, 0.0, scratch);
          if (refill) {
            resolution *= expansion;
            refill_precision(p, resolution, noise);
          }
        }
        if (path) path->push_back(p.to_point());
      }
    }
  });

  result.batch_covariance.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    Accumulator total(dim);
    for (std::size_t b = 0; b < batches; ++b) {
      total.merge(acc[b][i]);
      result.batch_covariance[i].push_back(acc[b][i].covariance());
    }
    EnsembleMoments m;
    m.time = times[i];
    m.covariance = total.covariance();
    m.mean.assign(total.mean.data(), total.mean.data() + dim);
    m.mean_se.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
      auto ci = static_cast<Eigen::Index>(c);
      m.mean_se[c] = std::sqrt(m.covariance(ci, ci) / total.count);
    }
    m.covariance_se = Eigen::MatrixXd::Constant(dim, dim, std::nan(""));
    for (Eigen::Index r = 0; r < dim; ++r) {
      for (Eigen::Index c = 0; c < dim; ++c) {
        std::vector<double> vals;
        for (const auto& cov : result.batch_covariance[i]) vals.push_back(cov(r, c));
        m.covariance_se(r, c) = batch_se(vals);
      }
    }
    for (const auto& v : opts.directions) {
      Eigen::Map<const Eigen::VectorXd> vv(v.data(), dim);
      m.direction_variance.push_back(vv.dot(m.covariance * vv));
      std::vector<double> vals;
      for (const auto& cov : result.batch_covariance[i]) vals.push_back(vv.dot(cov * vv));
      m.direction_variance_se.push_back(batch_se(vals));
    }
    result.moments.push_back(std::move(m));
  }
  return result;
}

// --- binary traces -----------------------------------------------------------

namespace {

constexpr std::array<char, 8> kTraceMagic{'R', 'D', 'T', 'R', 'A', 'C', 'E', '1'};

}  // namespace

void write_trace(std::ostream& os, const std::vector<std::vector<Point>>& paths) {
  std::uint64_t d = 0, n = 0;
  if (!paths.empty() && !paths.front().empty()) {
    d = paths.front().front().size();
    n = paths.front().size() - 1;
  }
  os.write(kTraceMagic.data(), kTraceMagic.size());
  detail::put_u64(os, d);
  detail::put_u64(os, n);
  detail::put_u64(os, paths.size());
  for (const auto& path : paths) {
    if (path.size() != n + 1) throw Error(ErrorCode::InvalidArgument, "ragged trajectories");
    for (const auto& x : path) {
      for (double v : x) detail::put_f64(os, v);
    }
  }
}

std::vector<std::vector<Point>> read_trace(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), 8) || magic != kTraceMagic) throw Error(ErrorCode::Io, "not a trace file");
  std::uint64_t d = detail::get_u64(is), n = detail::get_u64(is), count = detail::get_u64(is);
  std::vector<std::vector<Point>> paths(count, std::vector<Point>(n + 1, Point(d)));
  for (auto& path : paths) {
    for (auto& x : path) {
      for (auto& v : x) v = detail::get_f64(is);
    }
  }
  return paths;
}

// --- defragmented chain --------------------------------------------------------

LatticeVec draw_shift(const BernoulliMap& map, double u) {
  double cumulative = 0.0;
  for (std::size_t i = 0; i + 1 < map.num_cells(); ++i) {
    cumulative += map.cell(i).volume();
    if (u < cumulative) return map.cell(i).target;
  }
  return map.cell(map.num_cells() - 1).target;
}

ZTrace simulate_z(const BernoulliMap& map, std::span<const double> x0, double eps, std::size_t z_steps,
                  std::uint64_t seed, std::uint64_t stream, bool keep_x_path) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  if (z_steps == 0) throw Error(ErrorCode::InvalidArgument, "need at least one Z step");
  const auto d = static_cast<std::size_t>(map.dim());
  if (x0.size() != d) throw Error(ErrorCode::InvalidArgument, "initial point dimension mismatch");

  NoiseStream noise(seed, stream, 0, StreamDomain::Noise);
  NoiseStream shifts(seed, stream, 0, StreamDomain::Shift);
  std::vector<double> kick(d), scratch(d);

  ZTrace trace;
  LatticePoint x = LatticePoint::from_point(x0);
  LatticeVec shift_sum(d, 0);
  std::size_t big_n = 0;
  if (keep_x_path) trace.x_path.push_back(x.to_point());
  trace.rows.push_back({0, x, 0, shift_sum, x});

  for (std::size_t k = 1; k <= z_steps; ++k) {
    Point u = x.frac;
    std::size_t duration = 2 + theta_eps(map, u, eps);
    for (std::size_t s = 0; s < duration; ++s) {
      noise.gaussian(kick);
      map.advance(x, kick, eps, scratch);
      if (keep_x_path) trace.x_path.push_back(x.to_point());
    }
    big_n += duration;
    LatticeVec shift = draw_shift(map, shifts.uniform());
    LatticePoint z = x;
    for (std::size_t c = 0; c < d; ++c) {
      shift_sum[c] += shift[c];
      z.cube[c] -= shift_sum[c];
    }
    trace.rows.push_back({k, z, big_n, shift_sum, x});
  }
  return trace;
}

}  // namespace resdiff
