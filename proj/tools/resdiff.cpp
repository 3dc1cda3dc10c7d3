#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "resdiff/diffusivity.hpp"
#include "resdiff/errors.hpp"
#include "resdiff/lattice_oracle.hpp"
#include "resdiff/map_core.hpp"
#include "resdiff/map_io.hpp"
#include "resdiff/minor_check.hpp"
#include "resdiff/process.hpp"
#include "resdiff/torus_transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resdiff;

namespace {

constexpr const char* kVersion = "0.1.0";
const std::vector<std::string> kSubcommands{"validate", "simulate", "mixing", "kv", "sweep", "minorize", "oracle"};

bool g_reported = false;  // validate already printed its error list

struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, what + ": " + e.what());
  }
}

// Reads parameters from one config section, filling defaults and rejecting
// keys nobody asked for.
class Section {
 public:
  Section(const json& src, std::string name) : src_(src.is_null() ? json::object() : src), name_(std::move(name)) {
    if (!src_.is_object()) throw Error(ErrorCode::ConfigInvalid, "section '" + name_ + "' must be an object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.push_back(key);
    T value = fallback;
    if (src_.contains(key)) {
      try {
        value = src_.at(key).get<T>();
      } catch (const json::exception&) {
        throw Error(ErrorCode::ConfigInvalid, name_ + "." + key + " has the wrong type");
      }
    }
    resolved_[key] = value;
    return value;
  }

  json raw(const std::string& key, json fallback) {
    used_.push_back(key);
    json value = src_.contains(key) ? src_.at(key) : std::move(fallback);
    resolved_[key] = value;
    return value;
  }

  void set_resolved(const std::string& key, json value) { resolved_[key] = std::move(value); }

  json finish() const {
    for (const auto& [key, value] : src_.items()) {
      if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
        throw Error(ErrorCode::ConfigInvalid, "unknown key '" + key + "' in section '" + name_ + "'");
      }
    }
    return resolved_;
  }

 private:
  json src_;
  std::string name_;
  std::vector<std::string> used_;
  json resolved_ = json::object();
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::ConfigInvalid, msg);
}

void require_eps_list(const std::vector<double>& eps, bool allow_zero = false) {
  require(!eps.empty(), "eps list is empty");
  for (double e : eps) require(allow_zero ? e >= 0.0 : e > 0.0, "eps values must be positive");
}

struct Context {
  std::string sub;
  json config;          // as read
  json resolved;        // defaults filled, map and specs inlined
  fs::path config_dir;
  fs::path out_dir;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<std::pair<std::string, std::string>> outputs;  // file name, contents

  json section() const { return config.contains(sub) ? config.at(sub) : json::object(); }

  void emit(const std::string& name, const std::string& contents) { outputs.emplace_back(name, contents); }
};

json resolve_map(Context& ctx) {
  require(ctx.config.contains("map"), "config needs a 'map' entry (path or object)");
  const json& m = ctx.config.at("map");
  json inline_map;
  if (m.is_string()) {
    fs::path p = m.get<std::string>();
    if (p.is_relative()) p = ctx.config_dir / p;
    inline_map = parse_json(read_file(p), "map file " + p.string());
  } else if (m.is_object()) {
    inline_map = m;
  } else {
    throw Error(ErrorCode::ConfigInvalid, "'map' must be a path or an object");
  }
  ctx.resolved["map"] = inline_map;
  return inline_map;
}

BernoulliMap load_map(Context& ctx) {
  json m = resolve_map(ctx);
  try {
    return load_map_json(m.dump());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
}

// --- subcommands ----------------------------------------------------------------------

void run_validate(Context& ctx) {
  Section(ctx.section(), "validate").finish();
  ctx.resolved["validate"] = json::object();
  json m = resolve_map(ctx);
  json report = {{"ok", false}, {"errors", json::array()}, {"items", json::array()}};
  std::string csv = "item,pass,detail\n";
  std::optional<BernoulliMap> map;
  try {
    auto desc = parse_map_json(m.dump());
    map.emplace(desc.dimension, desc.cells);
  } catch (const Error& e) {
    report["errors"].push_back({{"code", std::string(to_string(e.code()))}, {"message", e.what()}});
  }
  if (map) {
    auto r = validate_map(*map);
    for (const auto& item : r.items) {
      csv += csv_field(item.name) + "," + (item.pass ? "1" : "0") + "," + csv_field(item.detail) + "\n";
      report["items"].push_back({{"name", item.name}, {"pass", item.pass}, {"detail", item.detail}});
    }
    for (auto code : r.errors) report["errors"].push_back({{"code", std::string(to_string(code))}});
    report["ok"] = r.ok();
  }
  ctx.emit("validate.csv", csv);
  std::cout << report.dump(1) << "\n";
  g_reported = true;
  if (!report["ok"].get<bool>()) throw Error(ErrorCode::ConfigInvalid, "map is invalid");
}

void run_simulate(Context& ctx) {
  Section s(ctx.section(), "simulate");
  BernoulliMap map = load_map(ctx);
  const auto d = static_cast<std::size_t>(map.dim());
  double eps = s.get<double>("eps", 0.1);
  auto n = s.get<std::size_t>("n", 100);
  auto trajectories = s.get<std::size_t>("trajectories", 10'000);
  auto batches = s.get<std::size_t>("batches", 64);
  auto observe = s.get<std::vector<std::size_t>>("observe", {});
  Point e1(d, 0.0);
  e1[0] = 1.0;
  auto directions = s.get<std::vector<Point>>("directions", {e1});
  json init = s.raw("initial", json{{"type", "uniform"}});
  ctx.resolved["simulate"] = s.finish();
  require(eps >= 0.0, "simulate.eps must be nonnegative");
  require(trajectories >= 2 && batches >= 2 && batches <= trajectories, "need 2 <= batches <= trajectories");
  for (const auto& v : directions) require(v.size() == d, "direction dimension mismatch");
  for (auto t : observe) require(t <= n, "observation time beyond n");

  InitialDistribution initial;
  require(init.is_object() && init.contains("type"), "simulate.initial needs a 'type'");
  auto type = init.at("type").get<std::string>();
  for (const auto& [key, value] : init.items()) require(key == "type" || key == "x" || key == "cube", "unknown key '" + key + "' in simulate.initial");
  if (type == "delta") {
    require(init.contains("x"), "delta initial law needs 'x'");
    auto x = init.at("x").get<Point>();
    require(x.size() == d, "initial point dimension mismatch");
    initial = InitialDistribution::delta(x);
  } else if (type == "uniform") {
    LatticeVec cube = init.value("cube", LatticeVec(d, 0));
    require(cube.size() == d, "initial cube dimension mismatch");
    initial = InitialDistribution::uniform(map.dim(), cube);
  } else {
    throw Error(ErrorCode::ConfigInvalid, "initial type must be 'uniform' or 'delta'");
  }

  EnsembleOptions opts;
  opts.observe_times = observe;
  opts.directions = directions;
  opts.batches = batches;
  opts.threads = ctx.threads;
  auto result = simulate_ensemble(map, initial, eps, n, trajectories, ctx.seed, opts);

  std::string csv = "time";
  for (std::size_t c = 0; c < d; ++c) csv += ",mean_" + std::to_string(c) + ",mean_se_" + std::to_string(c);
  for (std::size_t k = 0; k < directions.size(); ++k) csv += ",var_v" + std::to_string(k) + ",var_v" + std::to_string(k) + "_se";
  csv += "\n";
  for (const auto& m : result.moments) {
    csv += std::to_string(m.time);
    for (std::size_t c = 0; c < d; ++c) csv += "," + num(m.mean[c]) + "," + num(m.mean_se[c]);
    for (std::size_t k = 0; k < directions.size(); ++k) {
      csv += "," + num(m.direction_variance[k]) + "," + num(m.direction_variance_se[k]);
    }
    csv += "\n";
  }
  ctx.emit("simulate.csv", csv);
}

MixingMode parse_mixing_mode(const std::string& mode) {
  if (mode == "dense") return MixingMode::Dense;
  if (mode == "matvec") return MixingMode::MatVec;
  throw Error(ErrorCode::ConfigInvalid, "mixing mode must be 'dense' or 'matvec'");
}

void run_mixing(Context& ctx) {
  Section s(ctx.section(), "mixing");
  BernoulliMap map = load_map(ctx);
  auto eps_list = s.get<std::vector<double>>("eps", {0.1, 0.07, 0.05, 0.02, 0.01});
  auto g = s.get<std::size_t>("grid_cells", 1024);
  double threshold = s.get<double>("threshold", 0.5);
  auto cap = s.get<std::size_t>("cap", 10'000);
  auto mode = parse_mixing_mode(s.get<std::string>("mode", "dense"));
  ctx.resolved["mixing"] = s.finish();
  require_eps_list(eps_list);
  require(map.dim() <= 2, "mixing supports d <= 2");

  std::string csv = "eps,abs_log_eps,t_mix,distance\n";
  for (double eps : eps_list) {
    KernelOptions kopts;
    kopts.threads = ctx.threads;
    auto kernel = build_displacement_kernel(map, eps, UlamGrid(map.dim(), g), kopts);
    MixingOptions mopts{threshold, cap, mode, ctx.threads};
    auto r = mixing_time(kernel, mopts);
    double dist = r.distance.empty() ? std::nan("") : r.distance.back();
    csv += num(eps) + "," + num(std::abs(std::log(eps))) + "," + std::to_string(r.time) + "," + num(dist) + "\n";
  }
  ctx.emit("mixing.csv", csv);
}

void run_kv(Context& ctx) {
  Section s(ctx.section(), "kv");
  BernoulliMap map = load_map(ctx);
  const auto d = static_cast<std::size_t>(map.dim());
  auto eps_list = s.get<std::vector<double>>("eps", {0.1, 0.05});
  auto g = s.get<std::size_t>("grid_cells", 1024);
  Point e1(d, 0.0);
  e1[0] = 1.0;
  auto v = s.get<Point>("v", e1);
  double tol = s.get<double>("tol", 1e-12);
  bool series = s.get<bool>("series", true);
  double max_residual = s.get<double>("max_residual", 1e-8);
  ctx.resolved["kv"] = s.finish();
  require_eps_list(eps_list);
  require(v.size() == d, "kv.v dimension mismatch");
  require(map.dim() <= 2, "kv supports d <= 2");

  std::string csv = "eps,kv_rate,residual,series_kv_rate,series_residual,mode_diff\n";
  bool ok = true;
  for (double eps : eps_list) {
    KernelOptions kopts;
    kopts.threads = ctx.threads;
    auto kernel = build_displacement_kernel(map, eps, UlamGrid(map.dim(), g), kopts);
    CorrectorOptions copts;
    copts.tol = tol;
    auto lin = corrector_solve(kernel, CorrectorMode::Linear, copts);
    double rate = kv_rate(kernel, lin, v);
    double srate = std::nan(""), sres = std::nan(""), diff = std::nan("");
    if (series) {
      auto ser = corrector_solve(kernel, CorrectorMode::Series, copts);
      srate = kv_rate(kernel, ser, v);
      sres = ser.residual;
      diff = (lin.chi - ser.chi).cwiseAbs().maxCoeff();
      ok = ok && sres <= max_residual;
    }
    ok = ok && lin.residual <= max_residual;
    csv += num(eps) + "," + num(rate) + "," + num(lin.residual) + "," + num(srate) + "," + num(sres) + "," + num(diff) + "\n";
  }
  ctx.emit("kv.csv", csv);
  if (!ok) throw AssertionFailure("corrector residual above " + num(max_residual));
}

void run_sweep(Context& ctx) {
  Section s(ctx.section(), "sweep");
  BernoulliMap map = load_map(ctx);
  const auto d = static_cast<std::size_t>(map.dim());
  auto eps_list = s.get<std::vector<double>>("eps", {0.2, 0.1, 0.05, 0.02});
  Point e1(d, 0.0);
  e1[0] = 1.0;
  auto v = s.get<Point>("v", e1);
  SweepBudget budget;
  budget.trajectories = s.get<std::size_t>("trajectories", budget.trajectories);
  budget.n_per_log = s.get<std::size_t>("n_per_log", budget.n_per_log);
  budget.grid_cells = s.get<std::size_t>("grid_cells", budget.grid_cells);
  budget.c_floor = s.get<double>("c_floor", budget.c_floor);
  budget.upper_constant = s.get<double>("upper_constant", budget.upper_constant);
  budget.batches = s.get<std::size_t>("batches", budget.batches);
  ctx.resolved["sweep"] = s.finish();
  require_eps_list(eps_list);
  require(v.size() == d, "sweep.v dimension mismatch");
  budget.seed = ctx.seed;
  budget.threads = ctx.threads;

  auto report = residual_sweep(map, eps_list, v, budget);
  std::ostringstream os;
  write_sweep_csv(os, report);
  ctx.emit("sweep.csv", os.str());
  if (!report.lower_ok) throw AssertionFailure("rate / v.D_w0.v fell below c_floor");
  if (!report.envelope_ok) throw AssertionFailure("rate exceeded the logarithmic envelope");
  if (!report.var_upper_ok) throw AssertionFailure("rate exceeded the mixing-time upper bound");
}

void run_minorize(Context& ctx) {
  Section s(ctx.section(), "minorize");
  BernoulliMap map = load_map(ctx);
  auto stage = s.get<std::string>("stage", "bump");
  auto eps_list = s.get<std::vector<double>>("eps", {0.05, 0.02});
  auto g = s.get<std::size_t>("cells_per_unit", 2048);
  auto k = s.get<std::int64_t>("k", 0);
  auto symbols = s.get<std::vector<int>>("symbols", {1, 0});
  auto xs = s.get<std::vector<double>>("x", {0.3});
  double beta_slack = s.get<double>("beta_slack", 0.05);
  ctx.resolved["minorize"] = s.finish();
  require_eps_list(eps_list);
  require(map.dim() == 1, "minorize supports d = 1");

  std::string csv;
  bool ok = true;
  std::string failure;
  if (stage == "bump") {
    csv = "eps,step,step_ratio,cumulative_ratio,lambda,a_fit,beta_emp,beta_theory\n";
    for (double eps : eps_list) {
      BumpChainOptions opts;
      opts.cells_per_unit = g;
      opts.push.threads = ctx.threads;
      auto r = verify_bump_chain(map, k, symbols, eps, opts);
      for (std::size_t i = 0; i < r.step_ratio.size(); ++i) {
        csv += num(eps) + "," + std::to_string(i + 1) + "," + num(r.step_ratio[i]) + "," + num(r.cumulative_ratio[i]) + "," +
               num(r.lambda[i]) + "," + num(r.a_fit) + "," + num(r.beta_emp) + "," + num(r.beta_theory) + "\n";
      }
      if (r.beta_emp < r.beta_theory - beta_slack) {
        ok = false;
        failure = "beta_emp below beta_theory at eps " + num(eps);
      }
    }
  } else {
    DoeblinStage st;
    if (stage == "defrag") st = DoeblinStage::Defrag;
    else if (stage == "one_step") st = DoeblinStage::OneStep;
    else if (stage == "two_step") st = DoeblinStage::TwoStep;
    else throw Error(ErrorCode::ConfigInvalid, "minorize.stage must be bump, defrag, one_step or two_step");
    csv = "eps,x,theta,target_cube,min_constant\n";
    for (double eps : eps_list) {
      require(eps <= 0.2, "Doeblin stages need eps <= 0.2");
      std::vector<double> starts = st == DoeblinStage::Defrag ? std::vector<double>{0.0} : xs;
      for (double x : starts) {
        DoeblinOptions opts;
        opts.cells_per_unit = g;
        opts.push.threads = ctx.threads;
        auto r = verify_doeblin(map, x, eps, st, opts);
        csv += num(eps) + "," + num(x) + "," + std::to_string(r.theta) + "," + std::to_string(r.target_cube) + "," +
               num(r.min_constant) + "\n";
        if (!(r.min_constant > 0.0)) {
          ok = false;
          failure = "nonpositive Doeblin constant at eps " + num(eps) + ", x " + num(x);
        }
      }
    }
  }
  ctx.emit("minorize.csv", csv);
  if (!ok) throw AssertionFailure(failure);
}

void run_oracle(Context& ctx) {
  Section s(ctx.section(), "oracle");
  json spec_entries = s.raw("specs", json::array());
  json random = s.raw("random", json{{"count", 0}, {"states", 5}, {"lo", -2}, {"hi", 2}});
  json from_map = s.raw("from_map", nullptr);
  auto v = s.get<Point>("v", {1.0});
  auto kv_n = s.get<std::size_t>("kv_n", 100);
  double tol = s.get<double>("tol", 1e-6);
  double kv_tol = s.get<double>("kv_tol", 1e-10);
  require(spec_entries.is_array(), "oracle.specs must be a list");

  std::vector<std::pair<std::string, PeriodicChainSpec>> specs;
  json inlined = json::array();
  for (const auto& e : spec_entries) {
    json obj;
    std::string name;
    if (e.is_string()) {
      fs::path p = e.get<std::string>();
      name = p.stem().string();
      if (p.is_relative()) p = ctx.config_dir / p;
      obj = parse_json(read_file(p), "spec file " + p.string());
      obj = json{{"name", name}, {"spec", obj}};
    } else {
      require(e.is_object() && e.contains("spec"), "inline specs need {\"name\", \"spec\"}");
      obj = e;
      name = e.value("name", "spec" + std::to_string(specs.size()));
    }
    specs.emplace_back(name, spec_from_json(obj.at("spec").dump()));
    inlined.push_back(obj);
  }
  s.set_resolved("specs", inlined);

  require(random.is_object(), "oracle.random must be an object");
  for (const auto& [key, value] : random.items()) {
    require(key == "count" || key == "states" || key == "lo" || key == "hi", "unknown key '" + key + "' in oracle.random");
  }
  auto count = random.value("count", std::size_t{0});
  auto states = random.value("states", std::size_t{5});
  auto lo = random.value("lo", std::int64_t{-2});
  auto hi = random.value("hi", std::int64_t{2});
  for (std::size_t i = 0; i < count; ++i) {
    specs.emplace_back("random_" + std::to_string(ctx.seed + i), random_spec(ctx.seed + i, states, lo, hi));
  }
  if (!from_map.is_null()) {
    require(from_map.is_object(), "oracle.from_map must be an object");
    for (const auto& [key, value] : from_map.items()) {
      require(key == "eps" || key == "grid_cells", "unknown key '" + key + "' in oracle.from_map");
    }
    BernoulliMap map = load_map(ctx);
    double eps = from_map.value("eps", 0.1);
    auto g = from_map.value("grid_cells", std::size_t{128});
    require(eps > 0.0, "oracle.from_map.eps must be positive");
    specs.emplace_back("map_eps_" + num(eps), build_spec_from_map(map, eps, g));
  }
  ctx.resolved["oracle"] = s.finish();
  require(!specs.empty(), "oracle needs at least one spec");

  std::string csv = "name,states,rate_a,rate_b,abs_diff,kv_error,bound,bound_pass\n";
  bool ok = true;
  std::string failure;
  for (const auto& [name, spec] : specs) {
    require(v.size() == static_cast<std::size_t>(spec.dim()), "oracle.v dimension mismatch for " + name);
    auto dual = exact_variance_rate_dual(spec, v);
    double kv_err = 0.0;
    for (const auto& row : kv_finite_identity(spec, v, kv_n)) kv_err = std::max(kv_err, row.error());
    double bound = std::nan("");
    std::string pass = "";
    if (spec.minorizer) {
      auto b = minorization_bound_check(spec, v);
      bound = b.bound;
      pass = b.pass ? "1" : "0";
      if (!b.pass) {
        ok = false;
        failure = name + ": rate below the minorized bound";
      }
    }
    if (dual.diff > tol * std::max(1.0, dual.rate_a)) {
      ok = false;
      failure = name + ": |A - B| = " + num(dual.diff);
    }
    if (kv_err > kv_tol) {
      ok = false;
      failure = name + ": KV identity error " + num(kv_err);
    }
    csv += csv_field(name) + "," + std::to_string(spec.states()) + "," + num(dual.rate_a) + "," + num(dual.rate_b) + "," +
           num(dual.diff) + "," + num(kv_err) + "," + num(bound) + "," + pass + "\n";
  }
  ctx.emit("oracle.csv", csv);
  if (!ok) throw AssertionFailure(failure);
}

void write_outputs(const Context& ctx) {
  fs::create_directories(ctx.out_dir);
  json outputs = json::array();
  for (const auto& [name, contents] : ctx.outputs) {
    std::ofstream out(ctx.out_dir / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + (ctx.out_dir / name).string());
    out << contents;
    outputs.push_back({{"file", name}, {"fnv1a64", fnv1a64(contents)}});
  }
  json manifest;
  manifest["tool"] = "resdiff";
  manifest["version"] = kVersion;
  manifest["subcommand"] = ctx.sub;
  manifest["seed"] = ctx.seed;
  manifest["config"] = ctx.resolved;
  manifest["config_digest"] = fnv1a64(ctx.resolved.dump());
  manifest["outputs"] = outputs;
  std::ofstream out(ctx.out_dir / (ctx.sub + ".manifest.json"), std::ios::binary);
  out << manifest.dump(1) << "\n";
}

int run(const std::string& sub, const std::string& config_path, std::optional<std::uint64_t> seed,
        std::optional<int> threads, const std::string& out, const std::string& map_path) {
  Context ctx;
  ctx.sub = sub;
  if (!config_path.empty()) {
    fs::path p = config_path;
    ctx.config = parse_json(read_file(p), "config " + p.string());
    ctx.config_dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    // A run manifest is a valid config: re-run it as recorded.
    if (ctx.config.is_object() && ctx.config.contains("tool") && ctx.config.contains("config")) {
      ctx.config = ctx.config.at("config");
    }
  } else {
    ctx.config = json::object();
    ctx.config_dir = ".";
  }
  require(ctx.config.is_object(), "config must be an object");
  if (!map_path.empty()) ctx.config["map"] = fs::absolute(map_path).string();
  for (const auto& [key, value] : ctx.config.items()) {
    bool known = key == "map" || key == "seed" || key == "threads" || key == "out" ||
                 std::find(kSubcommands.begin(), kSubcommands.end(), key) != kSubcommands.end();
    require(known, "unknown config key '" + key + "'");
  }
  try {
    ctx.seed = seed ? *seed : ctx.config.value("seed", std::uint64_t{1});
    ctx.threads = threads ? *threads : ctx.config.value("threads", 1);
  } catch (const json::exception&) {
    throw Error(ErrorCode::ConfigInvalid, "seed and threads must be integers");
  }
  require(ctx.threads >= 1, "threads must be >= 1");
  ctx.out_dir = !out.empty() ? fs::path(out) : fs::path(ctx.config.value("out", std::string(".")));
  ctx.resolved = json::object();
  ctx.resolved["seed"] = ctx.seed;

  int code = 0;
  std::string failure;
  try {
    if (sub == "validate") run_validate(ctx);
    else if (sub == "simulate") run_simulate(ctx);
    else if (sub == "mixing") run_mixing(ctx);
    else if (sub == "kv") run_kv(ctx);
    else if (sub == "sweep") run_sweep(ctx);
    else if (sub == "minorize") run_minorize(ctx);
    else if (sub == "oracle") run_oracle(ctx);
  } catch (const AssertionFailure& e) {
    code = 2;
    failure = e.what();
  } catch (const Error&) {
    if (!ctx.outputs.empty()) write_outputs(ctx);
    throw;
  }
  write_outputs(ctx);
  if (code == 2) std::cerr << "AssertionFailed: " << failure << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual diffusivity toolkit for noisy expanding Bernoulli maps"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config_path, out, map_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  const std::vector<std::pair<std::string, std::string>> descriptions{
      {"validate", "check a map file against the structural assumptions"},
      {"simulate", "ensemble moments of the noisy lift"},
      {"mixing", "mixing times of the Ulam discretization"},
      {"kv", "corrector solve and Kipnis-Varadhan rate"},
      {"sweep", "residual diffusivity sweep over eps"},
      {"minorize", "grid verification of the bump-function minorization chain"},
      {"oracle", "exact dual-method rates on finite-state periodic chains"},
  };
  for (const auto& [name, help] : descriptions) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config or run manifest");
    sub->add_option("--seed", seed, "seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads; results do not depend on it");
    sub->add_option("--out", out, "output directory");
    if (name == "validate") sub->add_option("--map", map_path, "map file (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  std::string sub = app.get_subcommands().front()->get_name();
  try {
    return run(sub, config_path, seed, threads, out, map_path);
  } catch (const Error& e) {
    if (!g_reported) {
      json err = {{"ok", false}, {"errors", json::array({{{"code", std::string(to_string(e.code()))}, {"message", e.what()}}})}};
      std::cout << err.dump(1) << "\n";
    }
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
