#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "resdiff/map_core.hpp"
#include "resdiff/rational.hpp"

namespace resdiff {

/// Finitely supported probability distribution on Z^d. Support is kept in
/// lexicographic order; `exact` mirrors `prob` when every weight is rational.
struct LatticeDistribution {
  int dim = 1;
  std::vector<LatticeVec> support;
  std::vector<double> prob;
  std::optional<std::vector<Rational>> exact;

  static LatticeDistribution from_weights(int dim, const std::map<LatticeVec, double>& weights);
  static LatticeDistribution from_exact(int dim, const std::map<LatticeVec, Rational>& weights);

  double total() const;
  double at(const LatticeVec& k) const;
  LatticeDistribution shifted(const LatticeVec& by) const;
  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;
  /// Row-major d x d covariance in exact arithmetic, when available.
  std::optional<std::vector<Rational>> exact_covariance() const;
  std::optional<std::vector<Rational>> exact_mean() const;
};

/// Law of floor(phi(U)) for U uniform on Q_m.
LatticeDistribution one_step_cube_distribution(const BernoulliMap& map, const LatticeVec& m);

struct CovarianceMatrix {
  Eigen::MatrixXd value;
  std::optional<std::vector<Rational>> exact;  // row-major
};

/// Covariance of w^0(0, .).
CovarianceMatrix d_w0(const BernoulliMap& map);

enum class DistributionMode { Exact, MonteCarlo };

struct WCheckOptions {
  std::size_t node_budget = kDefaultNodeBudget;
  std::size_t samples = 200'000;
  std::uint64_t seed = 1;
};

/// Law of floor(X^0_{1 + theta^eps(U)}(U)) for U uniform on Q_{floor z}.
LatticeDistribution w_check_distribution(const BernoulliMap& map, std::span<const double> z, double eps,
                                         DistributionMode mode, const WCheckOptions& opts = {});

struct DWCheck {
  CovarianceMatrix value;            // (1 + theta-bar) D_{w^0}
  double theta_bar = 0.0;
  Eigen::MatrixXd from_distribution;  // covariance of the exact w-check law
  double discrepancy = 0.0;          // max entry difference of the two
};

DWCheck d_w_check(const BernoulliMap& map, double eps, std::size_t node_budget = kDefaultNodeBudget);

// --- Monte Carlo rates ----------------------------------------------------------

struct RateOptions {
  std::size_t batches = 64;
  int threads = 1;
};

struct RateEstimate {
  double rate = 0.0;
  double se = 0.0;
  double var_n = 0.0;
  double var_half = 0.0;
};

/// (var(v.X_n) - var(v.X_{n/2})) / (n/2) from uniform starts on Q_0, with a
/// batch standard error.
RateEstimate variance_rate_mc(const PeriodicMap& map, double eps, std::span<const double> v, std::size_t n,
                              std::size_t trajectories, std::uint64_t seed, const RateOptions& opts = {});

// --- residual diffusivity sweep ---------------------------------------------------

struct SweepBudget {
  std::size_t trajectories = 100'000;
  std::size_t n_per_log = 200;     // n = n_per_log * ceil(|ln eps|)
  std::uint64_t seed = 1;
  std::size_t grid_cells = 0;      // Ulam cells per dimension; 0 skips KV and t_mix
  double c_floor = 0.2;
  double upper_constant = 8.0;     // C in rate <= C t_mix sup E|Delta_0|^2
  std::size_t batches = 64;
  int threads = 1;
};

struct SweepRow {
  double eps = 0.0;
  std::size_t n = 0;
  double rate = 0.0;
  double rate_se = 0.0;
  double kv_rate = 0.0;      // NaN without a grid
  double lower_bound = 0.0;  // c_floor v.D_{w^0}.v
  double envelope = 0.0;     // C_env |ln eps| |v|^2
  std::size_t t_mix = 0;     // 0 without a grid
  double var_upper = 0.0;    // upper_constant t_mix |v|^2 sup E|Delta_0|^2, NaN without a grid
  double c_emp = 0.0;        // rate / v.D_{w^0}.v
};

struct SweepReport {
  std::vector<SweepRow> rows;  // decreasing eps
  double c_env = 0.0;
  double c_min = 0.0;
  bool lower_ok = false;
  bool envelope_ok = false;
  bool var_upper_ok = true;
};

SweepReport residual_sweep(const BernoulliMap& map, std::vector<double> eps_list, std::span<const double> v,
                           const SweepBudget& budget = {});

/// CSV with header eps,rate,rate_se,kv_rate,lower_bound,envelope,t_mix,c_emp
/// and 17 significant digits; missing values are written as nan.
void write_sweep_csv(std::ostream& os, const SweepReport& report);

}  // namespace resdiff
