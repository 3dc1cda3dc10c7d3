#include "resdiff/lattice_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace resdiff {

namespace {

double dot_v(std::span<const double> v, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t c = 0; c < v.size(); ++c) s += v[c] * x[c];
  return s;
}

void require_direction(const DisplacementKernel& kernel, std::span<const double> v) {
  if (v.size() != static_cast<std::size_t>(kernel.dim)) {
    throw Error(ErrorCode::InvalidArgument, "direction dimension mismatch");
  }
}

// v.(j + c(g') - c(g)) for every entry of the kernel.
std::vector<double> entry_increments(const DisplacementKernel& kernel, std::span<const double> v) {
  const auto d = static_cast<std::size_t>(kernel.dim);
  std::vector<double> inc(kernel.nnz());
  for (std::size_t g = 0; g < kernel.states; ++g) {
    auto cg = kernel.center(g);
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      auto cto = kernel.center(kernel.cols[e]);
      auto j = kernel.jump(e);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += v[c] * (static_cast<double>(j[c]) + cto[c] - cg[c]);
      inc[e] = s;
    }
  }
  return inc;
}

struct Moments {
  std::vector<double> m0, m1, m2;
};

// One step of the per-state moment recursion for the additive functional with
// entry increments `inc`.
void advance_moments(const DisplacementKernel& kernel, const std::vector<double>& inc, Moments& m) {
  const std::size_t s = kernel.states;
  std::vector<double> n0(s, 0.0), n1(s, 0.0), n2(s, 0.0);
  for (std::size_t g = 0; g < s; ++g) {
    const double a0 = m.m0[g], a1 = m.m1[g], a2 = m.m2[g];
    if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0) continue;
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      const double q = kernel.probs[e], x = inc[e];
      const std::size_t to = kernel.cols[e];
      n0[to] += q * a0;
      n1[to] += q * (a1 + x * a0);
      n2[to] += q * (a2 + 2.0 * x * a1 + x * x * a0);
    }
  }
  m.m0 = std::move(n0);
  m.m1 = std::move(n1);
  m.m2 = std::move(n2);
}

double sum(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0); }

double v_d_bar(const Minorizer& minorizer, std::span<const double> v, std::size_t states) {
  double total = 0.0;
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(v.size()));
  for (const auto& w : minorizer.w) total += vv.dot(w.covariance() * vv);
  return total / static_cast<double>(states);
}

}  // namespace

// --- construction -----------------------------------------------------------------------

SpecCheck check_spec(const PeriodicChainSpec& spec, double row_tol) {
  const auto& k = spec.kernel;
  SpecCheck out;
  out.row_error = k.max_row_error();
  if (!(out.row_error <= row_tol)) {
    throw Error(ErrorCode::InvalidArgument, "kernel rows not stochastic: error " + std::to_string(out.row_error));
  }
  out.column_error = (k.column_sums().array() - 1.0).abs().maxCoeff();
  out.minorizer_slack = 0.0;
  if (spec.minorizer) {
    const auto& mz = *spec.minorizer;
    if (mz.w.size() != k.states) throw Error(ErrorCode::InvalidMinorizer, "need one w per state");
    if (!(mz.beta > 0.0 && mz.beta <= 1.0)) throw Error(ErrorCode::InvalidMinorizer, "beta must lie in (0, 1]");
    for (const auto& w : mz.w) {
      if (w.dim != k.dim) throw Error(ErrorCode::InvalidMinorizer, "w dimension mismatch");
      if (std::abs(w.total() - 1.0) > 1e-12) throw Error(ErrorCode::InvalidMinorizer, "w is not a probability");
    }
    double slack = max_minorizer_beta(k, mz.w) - mz.beta;
    out.minorizer_slack = slack;
    if (slack < -1e-14) {
      throw Error(ErrorCode::InvalidMinorizer, "kernel does not dominate the declared minorizer (slack " +
                                                   std::to_string(slack) + ")");
    }
  }
  return out;
}

double max_minorizer_beta(const DisplacementKernel& kernel, const std::vector<LatticeDistribution>& w) {
  if (w.size() != kernel.states) throw Error(ErrorCode::InvalidMinorizer, "need one w per state");
  const auto d = static_cast<std::size_t>(kernel.dim);
  const auto scale = static_cast<double>(kernel.states);
  double beta = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < kernel.states; ++g) {
    std::map<std::pair<std::size_t, LatticeVec>, double> q;
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      auto j = kernel.jump(e);
      q[{kernel.cols[e], LatticeVec(j.begin(), j.begin() + static_cast<std::ptrdiff_t>(d))}] += kernel.probs[e];
    }
    for (std::size_t i = 0; i < w[g].support.size(); ++i) {
      double wp = w[g].prob[i];
      if (wp <= 0.0) continue;
      for (std::size_t to = 0; to < kernel.states; ++to) {
        auto it = q.find({to, w[g].support[i]});
        double mass = it == q.end() ? 0.0 : it->second;
        beta = std::min(beta, scale * mass / wp);
      }
    }
  }
  return beta;
}

PeriodicChainSpec random_spec(std::uint64_t seed, std::size_t states, std::int64_t lo, std::int64_t hi,
                              std::size_t extra_permutations) {
  if (states < 2 || hi < lo) throw Error(ErrorCode::InvalidArgument, "random spec needs >= 2 states and a window");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.1, 1.0);

  std::vector<std::vector<std::size_t>> perms;
  std::vector<std::size_t> id(states);
  std::iota(id.begin(), id.end(), 0);
  perms.push_back(id);
  std::vector<std::size_t> cyc(states);
  for (std::size_t g = 0; g < states; ++g) cyc[g] = (g + 1) % states;
  perms.push_back(cyc);
  for (std::size_t p = 0; p < extra_permutations; ++p) {
    auto perm = id;
    std::shuffle(perm.begin(), perm.end(), gen);
    perms.push_back(perm);
  }
  std::vector<double> alpha(perms.size());
  for (auto& a : alpha) a = unif(gen);
  double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  for (auto& a : alpha) a /= total;

  Eigen::MatrixXd marginal = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(states));
  for (std::size_t p = 0; p < perms.size(); ++p) {
    for (std::size_t g = 0; g < states; ++g) marginal(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(perms[p][g])) += alpha[p];
  }

  const auto width = static_cast<std::size_t>(hi - lo + 1);
  std::vector<std::vector<DisplacementKernel::Entry>> rows(states);
  for (std::size_t g = 0; g < states; ++g) {
    for (std::size_t to = 0; to < states; ++to) {
      double mass = marginal(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(to));
      if (mass == 0.0) continue;
      std::vector<double> split(width);
      for (auto& s : split) s = unif(gen);
      double st = std::accumulate(split.begin(), split.end(), 0.0);
      for (std::size_t i = 0; i < width; ++i) {
        rows[g].push_back({to, {lo + static_cast<std::int64_t>(i)}, mass * split[i] / st});
      }
    }
  }
  std::vector<Point> centers(states);
  for (std::size_t g = 0; g < states; ++g) centers[g] = {(static_cast<double>(g) + 0.5) / static_cast<double>(states)};

  PeriodicChainSpec spec;
  spec.kernel = DisplacementKernel::from_rows(1, centers, rows);
  spec.seed = seed;
  auto check = check_spec(spec, 1e-14);
  if (check.column_error > 1e-14) {
    throw Error(ErrorCode::AssertionFailed, "random spec is not doubly stochastic");
  }
  return spec;
}

PeriodicChainSpec build_spec_from_map(const PeriodicMap& map, double eps, std::size_t cells_per_dim,
                                      const KernelOptions& opts) {
  PeriodicChainSpec spec;
  spec.kernel = build_displacement_kernel(map, eps, UlamGrid(map.dim(), cells_per_dim), opts);
  return spec;
}

PeriodicChainSpec equality_case_spec() {
  std::vector<std::vector<DisplacementKernel::Entry>> rows{{{0, {-1}, 0.5}, {0, {1}, 0.5}}};
  PeriodicChainSpec spec;
  spec.kernel = DisplacementKernel::from_rows(1, {{0.5}}, rows);
  Minorizer mz;
  mz.beta = 1.0;
  mz.w.push_back(LatticeDistribution::from_weights(1, {{{-1}, 0.5}, {{1}, 0.5}}));
  spec.minorizer = std::move(mz);
  return spec;
}

// --- serialization ----------------------------------------------------------------------

std::string spec_to_json(const PeriodicChainSpec& spec) {
  using nlohmann::json;
  const auto& k = spec.kernel;
  const auto d = static_cast<std::size_t>(k.dim);
  json j;
  j["dim"] = k.dim;
  j["states"] = k.states;
  j["centers"] = json::array();
  for (std::size_t g = 0; g < k.states; ++g) {
    auto c = k.center(g);
    j["centers"].push_back(std::vector<double>(c.begin(), c.end()));
  }
  j["entries"] = json::array();
  for (std::size_t g = 0; g < k.states; ++g) {
    for (std::size_t e = k.row_ptr[g]; e < k.row_ptr[g + 1]; ++e) {
      auto jump = k.jump(e);
      j["entries"].push_back(json::array({g, k.cols[e], std::vector<std::int64_t>(jump.begin(), jump.begin() + static_cast<std::ptrdiff_t>(d)), k.probs[e]}));
    }
  }
  if (spec.minorizer) {
    json m;
    m["beta"] = spec.minorizer->beta;
    m["w"] = json::array();
    for (const auto& w : spec.minorizer->w) m["w"].push_back({{"support", w.support}, {"prob", w.prob}});
    j["minorizer"] = m;
  }
  j["seed"] = spec.seed;
  return j.dump();
}

PeriodicChainSpec spec_from_json(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("spec parse error: ") + e.what());
  }
  static const std::vector<std::string> allowed{"dim", "states", "centers", "entries", "minorizer", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::ConfigInvalid, "unknown spec key '" + key + "'");
    }
  }
  try {
    int dim = j.at("dim").get<int>();
    auto states = j.at("states").get<std::size_t>();
    auto centers = j.at("centers").get<std::vector<Point>>();
    if (centers.size() != states) throw Error(ErrorCode::ConfigInvalid, "centers must list every state");
    std::vector<std::vector<DisplacementKernel::Entry>> rows(states);
    for (const auto& e : j.at("entries")) {
      auto from = e.at(0).get<std::size_t>();
      auto to = e.at(1).get<std::size_t>();
      if (from >= states || to >= states) throw Error(ErrorCode::ConfigInvalid, "entry state out of range");
      auto jump = e.at(2).get<LatticeVec>();
      if (jump.size() != static_cast<std::size_t>(dim)) throw Error(ErrorCode::ConfigInvalid, "jump dimension mismatch");
      rows[from].push_back({to, jump, e.at(3).get<double>()});
    }
    PeriodicChainSpec spec;
    spec.kernel = DisplacementKernel::from_rows(dim, centers, rows);
    if (j.contains("minorizer")) {
      const auto& m = j.at("minorizer");
      Minorizer mz;
      mz.beta = m.at("beta").get<double>();
      for (const auto& w : m.at("w")) {
        auto support = w.at("support").get<std::vector<LatticeVec>>();
        auto prob = w.at("prob").get<std::vector<double>>();
        if (support.size() != prob.size()) throw Error(ErrorCode::ConfigInvalid, "w support and prob differ in length");
        std::map<LatticeVec, double> weights;
        for (std::size_t i = 0; i < support.size(); ++i) weights[support[i]] += prob[i];
        mz.w.push_back(LatticeDistribution::from_weights(dim, weights));
      }
      spec.minorizer = std::move(mz);
    }
    spec.seed = j.value("seed", std::uint64_t{0});
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("spec field error: ") + e.what());
  }
}

// --- mixing and rates ----------------------------------------------------------------------

MixingCheck check_mixing(const DisplacementKernel& kernel, double tol, std::size_t max_steps) {
  Eigen::VectorXd pi = stationary_distribution(kernel);
  const auto s = static_cast<Eigen::Index>(kernel.states);
  auto gap_of = [&](const Eigen::MatrixXd& m) {
    return (m.rowwise() - pi.transpose()).cwiseAbs().maxCoeff();
  };
  MixingCheck out;
  if (kernel.states <= 1024) {
    Eigen::MatrixXd power = kernel.dense_torus_matrix();
    std::size_t steps = 1;
    while (true) {
      out.gap = gap_of(power);
      out.steps = steps;
      if (out.gap < tol) return out;
      if (steps * 2 > max_steps) break;
      power = (power * power).eval();
      steps *= 2;
    }
  } else {
    // Large chains: follow a fixed set of start states by sparse mat-vec.
    SparseRowMatrix pt = kernel.torus_matrix().transpose();
    const Eigen::Index probes = std::min<Eigen::Index>(8, s);
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(s, probes);
    for (Eigen::Index i = 0; i < probes; ++i) rows((i * s) / probes, i) = 1.0;
    for (std::size_t steps = 1; steps <= max_steps; ++steps) {
      rows = (pt * rows).eval();
      out.gap = (rows.colwise() - pi).cwiseAbs().maxCoeff();
      out.steps = steps;
      if (out.gap < tol) return out;
    }
  }
  throw Error(ErrorCode::NotMixing, "gap " + std::to_string(out.gap) + " after " + std::to_string(out.steps) + " steps");
}

MomentPath moment_recursion(const DisplacementKernel& kernel, std::span<const double> v,
                            const std::vector<std::size_t>& times) {
  require_direction(kernel, v);
  Eigen::VectorXd pi = stationary_distribution(kernel);
  auto inc = entry_increments(kernel, v);
  // Center the increments on the stationary mean drift.
  double mu = 0.0;
  for (std::size_t g = 0; g < kernel.states; ++g) {
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) mu += pi[static_cast<Eigen::Index>(g)] * kernel.probs[e] * inc[e];
  }
  for (auto& x : inc) x -= mu;

  Moments m;
  m.m0.resize(kernel.states);
  m.m1.resize(kernel.states);
  m.m2.resize(kernel.states);
  for (std::size_t g = 0; g < kernel.states; ++g) {
    double p = pi[static_cast<Eigen::Index>(g)];
    double y0 = dot_v(v, kernel.center(g));
    m.m0[g] = p;
    m.m1[g] = p * y0;
    m.m2[g] = p * y0 * y0;
  }
  const double mean0 = sum(m.m1);

  std::vector<std::size_t> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  MomentPath out;
  std::size_t now = 0;
  for (std::size_t t : sorted) {
    for (; now < t; ++now) advance_moments(kernel, inc, m);
    double mean = sum(m.m1);
    out.times.push_back(t);
    out.mean.push_back(mean - mean0);
    out.variance.push_back(sum(m.m2) - mean * mean);
  }
  return out;
}

bool DualRate::agrees() const { return diff <= 1e-6 * std::max(1.0, rate_a); }

namespace {

// Variance differencing at (n/2, n) with n doubling until the estimate settles.
std::pair<double, std::size_t> differenced_rate(const DisplacementKernel& kernel, std::span<const double> v,
                                                const StoppingSchedule& schedule, std::size_t max_n) {
  double previous = std::numeric_limits<double>::quiet_NaN();
  double rate = 0.0;
  std::size_t used = 0;
  for (std::size_t n = 16; n <= max_n; n *= 2) {
    auto path = moment_recursion(kernel, v, {schedule.at(n / 2), schedule.at(n)});
    rate = (path.variance[1] - path.variance[0]) / static_cast<double>(n / 2);
    used = n;
    if (std::abs(rate - previous) <= 1e-13 * std::max(1.0, std::abs(rate))) break;
    previous = rate;
  }
  return {rate, used};
}

}  // namespace

DualRate exact_variance_rate_dual(const PeriodicChainSpec& spec, std::span<const double> v, std::size_t max_n) {
  require_direction(spec.kernel, v);
  if (max_n > 10'000) throw Error(ErrorCode::InvalidArgument, "moment horizon is capped at 10^4");
  check_mixing(spec.kernel);
  DualRate out;
  auto corrector = corrector_solve(spec.kernel, CorrectorMode::Linear);
  out.corrector_residual = corrector.residual;
  out.rate_a = kv_rate(spec.kernel, corrector, v);
  auto [rate, n] = differenced_rate(spec.kernel, v, StoppingSchedule{}, max_n);
  out.rate_b = rate;
  out.n = n;
  out.diff = std::abs(out.rate_a - out.rate_b);
  return out;
}

double KvIdentity::error() const { return std::abs(lhs - rhs) / std::max(1.0, rhs); }

std::vector<KvIdentity> kv_finite_identity(const PeriodicChainSpec& spec, std::span<const double> v,
                                           std::size_t max_n) {
  const auto& kernel = spec.kernel;
  require_direction(kernel, v);
  auto corrector = corrector_solve(kernel, CorrectorMode::Linear);
  const double rate = kv_rate(kernel, corrector, v);
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), kernel.dim);
  Eigen::VectorXd vchi = corrector.chi * vv;
  const double mu = corrector.drift_mean.dot(vv);

  // Martingale increments v.(zeta(Y_1) - zeta(Y_0) - s-bar) per entry.
  auto inc = entry_increments(kernel, v);
  for (std::size_t g = 0; g < kernel.states; ++g) {
    for (std::size_t e = kernel.row_ptr[g]; e < kernel.row_ptr[g + 1]; ++e) {
      inc[e] += vchi[kernel.cols[e]] - vchi[static_cast<Eigen::Index>(g)] - mu;
    }
  }
  Moments m;
  m.m0.assign(corrector.stationary.data(), corrector.stationary.data() + corrector.stationary.size());
  m.m1.assign(kernel.states, 0.0);
  m.m2.assign(kernel.states, 0.0);
  std::vector<KvIdentity> out;
  for (std::size_t n = 1; n <= max_n; ++n) {
    advance_moments(kernel, inc, m);
    KvIdentity row;
    row.n = n;
    row.lhs = sum(m.m2);
    row.rhs = static_cast<double>(n) * rate;
    row.martingale_mean = sum(m.m1);
    out.push_back(row);
  }
  return out;
}

// --- minorized lower bound ---------------------------------------------------------------

BoundCheck minorization_bound_check(const PeriodicChainSpec& spec, std::span<const double> v,
                                    const std::optional<StoppingSchedule>& stopping, std::size_t max_n) {
  require_direction(spec.kernel, v);
  if (!spec.minorizer) throw Error(ErrorCode::InvalidMinorizer, "spec declares no minorizer");
  check_spec(spec, 1e-12);
  BoundCheck out;
  out.d_bar = v_d_bar(*spec.minorizer, v, spec.states());
  out.bound = spec.minorizer->beta * out.d_bar;
  if (stopping) {
    const auto& st = *stopping;
    if (st.a == 0 || !(st.gamma > 0.0) || st.gamma > static_cast<double>(st.a)) {
      throw Error(ErrorCode::InvalidStoppingSchedule, "need a >= 1 and 0 < gamma <= a so that tau_n >= gamma n");
    }
    check_mixing(spec.kernel);
    out.rate = differenced_rate(spec.kernel, v, st, max_n).first;
    out.bound *= st.gamma;
  } else {
    out.rate = exact_variance_rate_dual(spec, v, max_n).rate_a;
  }
  out.pass = out.rate >= out.bound - 1e-9;
  return out;
}

}  // namespace resdiff
