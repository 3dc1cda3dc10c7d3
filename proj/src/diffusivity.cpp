#include "resdiff/diffusivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "resdiff/process.hpp"
#include "resdiff/rng.hpp"
#include "resdiff/torus_transfer.hpp"

namespace resdiff {

// --- LatticeDistribution ----------------------------------------------------------

LatticeDistribution LatticeDistribution::from_weights(int dim, const std::map<LatticeVec, double>& weights) {
  LatticeDistribution w;
  w.dim = dim;
  for (const auto& [k, p] : weights) {
    if (k.size() != static_cast<std::size_t>(dim)) throw Error(ErrorCode::InvalidArgument, "support dimension mismatch");
    if (p < 0.0) throw Error(ErrorCode::InvalidArgument, "negative probability");
    w.support.push_back(k);
    w.prob.push_back(p);
  }
  return w;
}

LatticeDistribution LatticeDistribution::from_exact(int dim, const std::map<LatticeVec, Rational>& weights) {
  LatticeDistribution w;
  w.dim = dim;
  std::vector<Rational> exact;
  for (const auto& [k, p] : weights) {
    if (k.size() != static_cast<std::size_t>(dim)) throw Error(ErrorCode::InvalidArgument, "support dimension mismatch");
    w.support.push_back(k);
    w.prob.push_back(p.to_double());
    exact.push_back(p);
  }
  w.exact = std::move(exact);
  return w;
}

double LatticeDistribution::total() const {
  double sum = 0.0;
  for (double p : prob) sum += p;
  return sum;
}

double LatticeDistribution::at(const LatticeVec& k) const {
  auto it = std::lower_bound(support.begin(), support.end(), k);
  return it != support.end() && *it == k ? prob[static_cast<std::size_t>(it - support.begin())] : 0.0;
}

LatticeDistribution LatticeDistribution::shifted(const LatticeVec& by) const {
  LatticeDistribution w = *this;
  for (auto& k : w.support) {
    for (std::size_t c = 0; c < k.size(); ++c) k[c] += by[c];
  }
  return w;
}

Eigen::VectorXd LatticeDistribution::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < support.size(); ++i) {
    for (int c = 0; c < dim; ++c) m[c] += prob[i] * static_cast<double>(support[i][static_cast<std::size_t>(c)]);
  }
  return m;
}

Eigen::MatrixXd LatticeDistribution::covariance() const {
  Eigen::VectorXd m = mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd x(dim);
  for (std::size_t i = 0; i < support.size(); ++i) {
    for (int c = 0; c < dim; ++c) x[c] = static_cast<double>(support[i][static_cast<std::size_t>(c)]) - m[c];
    cov += prob[i] * x * x.transpose();
  }
  return cov;
}

std::optional<std::vector<Rational>> LatticeDistribution::exact_mean() const {
  if (!exact) return std::nullopt;
  try {
    std::vector<Rational> m(static_cast<std::size_t>(dim), Rational(0));
    for (std::size_t i = 0; i < support.size(); ++i) {
      for (std::size_t c = 0; c < m.size(); ++c) m[c] += (*exact)[i] * Rational(support[i][c]);
    }
    return m;
  } catch (const std::overflow_error&) {
    return std::nullopt;
  }
}

std::optional<std::vector<Rational>> LatticeDistribution::exact_covariance() const {
  auto m = exact_mean();
  if (!m) return std::nullopt;
  const auto d = static_cast<std::size_t>(dim);
  try {
    std::vector<Rational> cov(d * d, Rational(0));
    for (std::size_t i = 0; i < support.size(); ++i) {
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          cov[r * d + c] += (*exact)[i] * Rational(support[i][r]) * Rational(support[i][c]);
        }
      }
    }
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) cov[r * d + c] -= (*m)[r] * (*m)[c];
    }
    return cov;
  } catch (const std::overflow_error&) {
    return std::nullopt;
  }
}

// --- one-step and w-check laws ------------------------------------------------------

LatticeDistribution one_step_cube_distribution(const BernoulliMap& map, const LatticeVec& m) {
  const auto d = static_cast<std::size_t>(map.dim());
  if (m.size() != d) throw Error(ErrorCode::InvalidArgument, "cube index dimension mismatch");
  const auto& rational = map.rational_volumes();
  if (rational) {
    std::map<LatticeVec, Rational> weights;
    for (std::size_t i = 0; i < map.num_cells(); ++i) {
      LatticeVec k = m;
      for (std::size_t c = 0; c < d; ++c) k[c] += map.cell(i).target[c];
      auto [it, fresh] = weights.emplace(k, (*rational)[i]);
      if (!fresh) it->second += (*rational)[i];
    }
    return LatticeDistribution::from_exact(map.dim(), weights);
  }
  std::map<LatticeVec, double> weights;
  for (std::size_t i = 0; i < map.num_cells(); ++i) {
    LatticeVec k = m;
    for (std::size_t c = 0; c < d; ++c) k[c] += map.cell(i).target[c];
    weights[k] += map.cell(i).volume();
  }
  return LatticeDistribution::from_weights(map.dim(), weights);
}

CovarianceMatrix d_w0(const BernoulliMap& map) {
  auto w = one_step_cube_distribution(map, LatticeVec(static_cast<std::size_t>(map.dim()), 0));
  return {w.covariance(), w.exact_covariance()};
}

LatticeDistribution w_check_distribution(const BernoulliMap& map, std::span<const double> z, double eps,
                                         DistributionMode mode, const WCheckOptions& opts) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
  const int dim = map.dim();
  const auto d = static_cast<std::size_t>(dim);
  if (z.size() != d) throw Error(ErrorCode::InvalidArgument, "point dimension mismatch");
  LatticeVec base = LatticePoint::from_point(z).cube;

  if (mode == DistributionMode::MonteCarlo) {
    NoiseStream rng(opts.seed, 0, 0, StreamDomain::Sampling);
    std::map<LatticeVec, double> counts;
    std::vector<double> scratch(d);
    LatticePoint p;
    for (std::size_t s = 0; s < opts.samples; ++s) {
      p.cube = base;
      p.frac.resize(d);
      for (auto& u : p.frac) u = rng.uniform();
      std::size_t steps = 1 + theta_eps(map, p.frac, eps);
      for (std::size_t k = 0; k < steps; ++k) map.advance(p, {}, 0.0, scratch);
      counts[p.cube] += 1.0;
    }
    for (auto& [k, c] : counts) c /= static_cast<double>(opts.samples);
    return LatticeDistribution::from_weights(dim, counts);
  }

  // w-check is w^0 convolved with the law of J(0, t) over crossing tuples t.
  LatticeVec origin(d, 0);
  std::map<LatticeVec, double> jumps;
  std::map<LatticeVec, Rational> jumps_exact;
  bool exact = map.rational_volumes().has_value();
  for_each_crossing_tuple(map, eps, opts.node_budget, [&](const CrossingTuple& t) {
    LatticeVec j = jump_cube(map, origin, t.symbols);
    jumps[j] += t.volume;
    if (exact && t.volume_exact) {
      try {
        auto [it, fresh] = jumps_exact.emplace(j, *t.volume_exact);
        if (!fresh) it->second += *t.volume_exact;
      } catch (const std::overflow_error&) {
        exact = false;
      }
    } else {
      exact = false;
    }
  });
  auto w0 = one_step_cube_distribution(map, base);
  if (exact && w0.exact) {
    try {
      std::map<LatticeVec, Rational> out;
      for (const auto& [j, pj] : jumps_exact) {
        for (std::size_t i = 0; i < w0.support.size(); ++i) {
          LatticeVec k = w0.support[i];
          for (std::size_t c = 0; c < d; ++c) k[c] += j[c];
          Rational mass = pj * (*w0.exact)[i];
          auto [it, fresh] = out.emplace(k, mass);
          if (!fresh) it->second += mass;
        }
      }
      return LatticeDistribution::from_exact(dim, out);
    } catch (const std::overflow_error&) {
    }
  }
  std::map<LatticeVec, double> out;
  for (const auto& [j, pj] : jumps) {
    for (std::size_t i = 0; i < w0.support.size(); ++i) {
      LatticeVec k = w0.support[i];
      for (std::size_t c = 0; c < d; ++c) k[c] += j[c];
      out[k] += pj * w0.prob[i];
    }
  }
  return LatticeDistribution::from_weights(dim, out);
}

DWCheck d_w_check(const BernoulliMap& map, double eps, std::size_t node_budget) {
  DWCheck out;
  ThetaBarOptions topts;
  topts.node_budget = node_budget;
  ThetaBar tb = theta_bar(map, eps, ThetaMode::Exact, topts);
  CovarianceMatrix base = d_w0(map);
  out.theta_bar = tb.value;
  out.value.value = (1.0 + tb.value) * base.value;
  if (tb.exact && base.exact) {
    try {
      std::vector<Rational> v;
      Rational factor = Rational(1) + *tb.exact;
      for (const auto& x : *base.exact) v.push_back(factor * x);
      out.value.exact = std::move(v);
      const auto d = static_cast<std::size_t>(map.dim());
      for (std::size_t i = 0; i < d * d; ++i) {
        out.value.value(static_cast<Eigen::Index>(i / d), static_cast<Eigen::Index>(i % d)) =
            (*out.value.exact)[i].to_double();
      }
    } catch (const std::overflow_error&) {
      out.value.exact.reset();
    }
  }
  WCheckOptions wopts;
  wopts.node_budget = node_budget;
  Point origin(static_cast<std::size_t>(map.dim()), 0.0);
  out.from_distribution = w_check_distribution(map, origin, eps, DistributionMode::Exact, wopts).covariance();
  out.discrepancy = (out.from_distribution - out.value.value).cwiseAbs().maxCoeff();
  return out;
}

// --- Monte Carlo rate ------------------------------------------------------------------

RateEstimate variance_rate_mc(const PeriodicMap& map, double eps, std::span<const double> v, std::size_t n,
                              std::size_t trajectories, std::uint64_t seed, const RateOptions& opts) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "rate estimation needs n >= 2");
  const std::size_t half = n / 2;
  EnsembleOptions eopts;
  eopts.observe_times = {half, n};
  eopts.directions = {Point(v.begin(), v.end())};
  eopts.batches = opts.batches;
  eopts.threads = opts.threads;
  auto result = simulate_ensemble(map, InitialDistribution::uniform(map.dim()), eps, n, trajectories, seed, eopts);
  const double span = static_cast<double>(n - half);
  RateEstimate est;
  est.var_half = result.moments[0].direction_variance[0];
  est.var_n = result.moments[1].direction_variance[0];
  est.rate = (est.var_n - est.var_half) / span;

  Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(v.size()));
  const auto& early = result.batch_covariance[0];
  const auto& late = result.batch_covariance[1];
  std::vector<double> rates;
  for (std::size_t b = 0; b < early.size(); ++b) rates.push_back((vv.dot(late[b] * vv) - vv.dot(early[b] * vv)) / span);
  if (rates.size() >= 2) {
    double mean = 0.0;
    for (double r : rates) mean += r;
    mean /= static_cast<double>(rates.size());
    double ss = 0.0;
    for (double r : rates) ss += (r - mean) * (r - mean);
    auto b = static_cast<double>(rates.size());
    est.se = std::sqrt(ss / (b - 1.0) / b);
  } else {
    est.se = std::nan("");
  }
  return est;
}

// --- sweep -------------------------------------------------------------------------------

SweepReport residual_sweep(const BernoulliMap& map, std::vector<double> eps_list, std::span<const double> v,
                           const SweepBudget& budget) {
  if (eps_list.empty()) throw Error(ErrorCode::InvalidArgument, "empty eps list");
  if (v.size() != static_cast<std::size_t>(map.dim())) throw Error(ErrorCode::InvalidArgument, "direction dimension mismatch");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw Error(ErrorCode::NonpositiveEpsilon, "eps must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw Error(ErrorCode::InvalidArgument, "eps list must decrease");
  }
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(v.size()));
  const double vdv = vv.dot(d_w0(map).value * vv);
  const double v2 = vv.squaredNorm();

  SweepReport report;
  for (std::size_t r = 0; r < eps_list.size(); ++r) {
    const double eps = eps_list[r];
    SweepRow row;
    row.eps = eps;
    row.n = budget.n_per_log * static_cast<std::size_t>(std::ceil(std::abs(std::log(eps))));
    row.n = std::max<std::size_t>(row.n, 2);
    RateOptions ropts{budget.batches, budget.threads};
    auto est = variance_rate_mc(map, eps, v, row.n, budget.trajectories, splitmix64(budget.seed + r), ropts);
    row.rate = est.rate;
    row.rate_se = est.se;
    row.lower_bound = budget.c_floor * vdv;
    row.c_emp = vdv > 0.0 ? row.rate / vdv : std::nan("");
    row.kv_rate = std::nan("");
    row.var_upper = std::nan("");
    if (budget.grid_cells > 0 && map.dim() <= 2) {
      KernelOptions kopts;
      kopts.threads = budget.threads;
      auto kernel = build_displacement_kernel(map, eps, UlamGrid(map.dim(), budget.grid_cells), kopts);
      MixingOptions mopts;
      mopts.threads = budget.threads;
      if (kernel.states > 4096) mopts.mode = MixingMode::MatVec;
      row.t_mix = mixing_time(kernel, mopts).time;
      row.var_upper = budget.upper_constant * static_cast<double>(row.t_mix) * v2 * sup_second_moment(kernel);
      auto corrector = corrector_solve(kernel, CorrectorMode::Linear);
      row.kv_rate = kv_rate(kernel, corrector, v);
    }
    report.rows.push_back(row);
  }

  // Envelope constant from the two largest eps.
  const std::size_t fit = std::min<std::size_t>(2, report.rows.size());
  for (std::size_t r = 0; r < fit; ++r) {
    const auto& row = report.rows[r];
    double scale = std::abs(std::log(row.eps)) * v2;
    if (scale > 0.0) report.c_env = std::max(report.c_env, row.rate / scale);
  }
  report.c_min = std::numeric_limits<double>::infinity();
  report.envelope_ok = true;
  for (auto& row : report.rows) {
    row.envelope = report.c_env * std::abs(std::log(row.eps)) * v2;
    report.c_min = std::min(report.c_min, row.c_emp);
    if (row.rate > row.envelope) report.envelope_ok = false;
    if (!std::isnan(row.var_upper) && row.rate > row.var_upper) report.var_upper_ok = false;
  }
  report.lower_ok = report.c_min >= budget.c_floor;
  return report;
}

void write_sweep_csv(std::ostream& os, const SweepReport& report) {
  os << "eps,rate,rate_se,kv_rate,lower_bound,envelope,t_mix,c_emp\n";
  char buf[64];
  auto put = [&](double x, bool last) {
    if (std::isnan(x)) {
      os << "nan" << (last ? '\n' : ',');
      return;
    }
    std::snprintf(buf, sizeof buf, "%.17g", x);
    os << buf << (last ? '\n' : ',');
  };
  for (const auto& row : report.rows) {
    put(row.eps, false);
    put(row.rate, false);
    put(row.rate_se, false);
    put(row.kv_rate, false);
    put(row.lower_bound, false);
    put(row.envelope, false);
    if (row.t_mix > 0) {
      os << row.t_mix << ',';
    } else {
      os << "nan,";
    }
    put(row.c_emp, true);
  }
}

}  // namespace resdiff
