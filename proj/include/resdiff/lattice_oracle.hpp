#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resdiff/diffusivity.hpp"
#include "resdiff/map_core.hpp"
#include "resdiff/torus_transfer.hpp"

namespace resdiff {

/// beta and one lattice distribution w(g, .) per torus state. The declared
/// bound is on the transition density with respect to the uniform law on
/// states: q(g, g', j) >= beta w(g, j) / S for every g, g', j.
struct Minorizer {
  double beta = 0.0;
  std::vector<LatticeDistribution> w;
};

struct PeriodicChainSpec {
  DisplacementKernel kernel;
  std::optional<Minorizer> minorizer;
  std::uint64_t seed = 0;  // generator seed for random specs, 0 otherwise

  std::size_t states() const { return kernel.states; }
  int dim() const { return kernel.dim; }
};

struct SpecCheck {
  double row_error = 0.0;     // max |row sum - 1|
  double column_error = 0.0;  // max |column sum of the j-marginal - 1|
  double minorizer_slack = 0.0;  // min over (g, g', j) of S q - beta w; negative means violated
};

/// Throws InvalidArgument if rows are not stochastic within 1e-14 (1e-10 for
/// map-derived kernels via `row_tol`) and InvalidMinorizer if a declared
/// minorizer is not dominated.
SpecCheck check_spec(const PeriodicChainSpec& spec, double row_tol = 1e-14);

/// Random d = 1 spec with `states` states and displacements in {lo..hi}. The
/// state marginal is a Birkhoff mixture of the identity, the cyclic shift and
/// `extra_permutations` random permutations (std::mt19937_64 seeded with
/// `seed`), so it is doubly stochastic and aperiodic irreducible. Each (g, g')
/// mass is split over the window with random weights.
PeriodicChainSpec random_spec(std::uint64_t seed, std::size_t states = 5, std::int64_t lo = -2, std::int64_t hi = 2,
                              std::size_t extra_permutations = 2);

/// Reuses build_displacement_kernel verbatim; no minorizer.
PeriodicChainSpec build_spec_from_map(const PeriodicMap& map, double eps, std::size_t cells_per_dim,
                                      const KernelOptions& opts = {});

/// Single state, displacement +1 and -1 with probability 1/2, minorized by
/// itself with beta = 1.
PeriodicChainSpec equality_case_spec();

/// Largest beta with q(g, g', j) >= beta w(g, j) / S everywhere.
double max_minorizer_beta(const DisplacementKernel& kernel, const std::vector<LatticeDistribution>& w);

/// JSON text: {"dim", "states", "centers", "entries": [[from, to, [j..], prob], ..],
/// "minorizer": {"beta", "w": [{"support": [[j..], ..], "prob": [..]}, ..]}, "seed"}.
std::string spec_to_json(const PeriodicChainSpec& spec);
PeriodicChainSpec spec_from_json(const std::string& text);

// --- mixing and rates ---------------------------------------------------------------

struct MixingCheck {
  std::size_t steps = 0;  // power of P at which the gap fell below the tolerance
  double gap = 0.0;       // max_g max_g' |P^steps(g, g') - pi(g')|
};

/// Repeated squaring of the j-marginal; throws NotMixing if the gap is still
/// >= tol after max_steps.
MixingCheck check_mixing(const DisplacementKernel& kernel, double tol = 1e-12, std::size_t max_steps = 100'000);

struct MomentPath {
  std::vector<std::size_t> times;
  std::vector<double> mean;      // E[v.(Y_n - Y_0) - n v.s-bar]
  std::vector<double> variance;  // var(v.Y_n)
};

/// Exact first and second moments of v.Y_n from the stationary start, by the
/// per-state recursion over (mass, E[v.disp], E[(v.disp)^2]).
MomentPath moment_recursion(const DisplacementKernel& kernel, std::span<const double> v,
                            const std::vector<std::size_t>& times);

struct DualRate {
  double rate_a = 0.0;  // corrector + KV integral
  double rate_b = 0.0;  // moment recursion, (var_n - var_{n/2}) / (n/2)
  double diff = 0.0;
  std::size_t n = 0;    // horizon used for rate_b
  double corrector_residual = 0.0;
  bool agrees() const;  // diff <= 1e-6 max(1, rate_a)
};

/// rate_b doubles n from 16 until two successive estimates agree to 1e-13
/// relative, or n reaches max_n (at most 10^4).
DualRate exact_variance_rate_dual(const PeriodicChainSpec& spec, std::span<const double> v,
                                  std::size_t max_n = 10'000);

struct KvIdentity {
  std::size_t n = 0;
  double lhs = 0.0;  // E_pi[(v.(Y_n - Y_0 - n s-bar) + v.chi(g_n) - v.chi(g_0))^2]
  double rhs = 0.0;  // n * integral of V_v
  double martingale_mean = 0.0;
  double error() const;  // |lhs - rhs| / max(1, rhs)
};

/// The martingale part of the KV decomposition, checked at n = 1..max_n.
std::vector<KvIdentity> kv_finite_identity(const PeriodicChainSpec& spec, std::span<const double> v,
                                           std::size_t max_n = 100);

// --- minorized lower bound -------------------------------------------------------------

/// tau_n = a n + b; requires tau_n >= gamma n for every n.
struct StoppingSchedule {
  std::size_t a = 1;
  std::size_t b = 0;
  double gamma = 1.0;

  std::size_t at(std::size_t n) const { return a * n + b; }
};

struct BoundCheck {
  double rate = 0.0;   // lim var(v.Y_{tau_n}) / n, or the plain rate
  double bound = 0.0;  // (gamma) beta v.D-bar_w.v
  double d_bar = 0.0;  // v.D-bar_w.v, D-bar_w the state average of cov w(g, .)
  bool pass = false;   // rate >= bound - 1e-9
};

BoundCheck minorization_bound_check(const PeriodicChainSpec& spec, std::span<const double> v,
                                    const std::optional<StoppingSchedule>& stopping = std::nullopt,
                                    std::size_t max_n = 10'000);

}  // namespace resdiff
