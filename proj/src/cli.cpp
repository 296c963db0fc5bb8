#include "spamtree/cli.hpp"

#include "spamtree/oracle.hpp"
#include "spamtree/parallel.hpp"
#include "spamtree/precision.hpp"
#include "spamtree/predict.hpp"
#include "spamtree/synthgen.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace spamtree {

namespace fs = std::filesystem;

namespace {

int to_int(const std::string& key, const std::string& v) {
  int x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw Error(key + " expects an integer, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw Error(key + " expects a non-negative integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    throw Error(key + " expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw Error(key + " expects true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = cell.find_last_not_of(" \t");
    out.push_back(to_double(key, cell.substr(b, e - b + 1)));
  }
  return out;
}

std::string from_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + format_double(v[k]);
  return s;
}

struct Setting {
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Setting make(const std::string& key, const std::string& help, T RunConfig::*m) {
  Setting s{key, help, {}, {}};
  if constexpr (std::is_same_v<T, int>) {
    s.set = [m, key](RunConfig& c, const std::string& v) { c.*m = to_int(key, v); };
    s.get = [m](const RunConfig& c) { return std::to_string(c.*m); };
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    s.set = [m, key](RunConfig& c, const std::string& v) { c.*m = to_u64(key, v); };
    s.get = [m](const RunConfig& c) { return std::to_string(c.*m); };
  } else if constexpr (std::is_same_v<T, double>) {
    s.set = [m, key](RunConfig& c, const std::string& v) { c.*m = to_double(key, v); };
    s.get = [m](const RunConfig& c) { return format_double(c.*m); };
  } else if constexpr (std::is_same_v<T, bool>) {
    s.set = [m, key](RunConfig& c, const std::string& v) { c.*m = to_bool(key, v); };
    s.get = [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    s.set = [m](RunConfig& c, const std::string& v) { c.*m = v; };
    s.get = [m](const RunConfig& c) { return c.*m; };
  } else {
    s.set = [m, key](RunConfig& c, const std::string& v) { c.*m = to_list(key, v); };
    s.get = [m](const RunConfig& c) { return from_list(c.*m); };
  }
  return s;
}

const std::vector<Setting>& settings() {
  static const std::vector<Setting> all = {
      make("data", "input data CSV", &RunConfig::data),
      make("out", "output path or directory", &RunConfig::out),
      make("bundle", "model bundle directory", &RunConfig::bundle),
      make("locations", "prediction locations CSV (data format)", &RunConfig::locations),
      make("dim", "number of coordinate columns", &RunConfig::dim),
      make("num_vars", "number of outcomes (0 infers)", &RunConfig::num_vars),
      make("levels", "branch levels of the tree", &RunConfig::levels),
      make("depth", "nested levels, 1..levels (0 means levels)", &RunConfig::depth),
      make("children_per_axis", "splits per axis of each branch cell", &RunConfig::children_per_axis),
      make("root_cells_per_axis", "root cells per axis", &RunConfig::root_cells_per_axis),
      make("subset_size", "reference locations per branch node", &RunConfig::subset_size),
      make("bias_weights", "per-outcome reference sampling weights", &RunConfig::bias_weights),
      make("iterations", "MCMC sweeps", &RunConfig::iterations),
      make("burn_in", "sweeps discarded and used for adaptation", &RunConfig::burn_in),
      make("thin", "keep every thin-th sweep after burn-in", &RunConfig::thin),
      make("seed", "random seed", &RunConfig::seed),
      make("mode", "theta target: latent or integrated", &RunConfig::mode),
      make("ram_target", "target acceptance rate", &RunConfig::ram_target),
      make("ram_initial_scale", "initial proposal scale", &RunConfig::ram_initial_scale),
      make("estimate_alpha_beta", "sample alpha and beta", &RunConfig::estimate_alpha_beta),
      make("integrated_max_locations", "size cap for integrated mode",
           &RunConfig::integrated_max_locations),
      make("beta_var", "prior variance of regression coefficients", &RunConfig::beta_var),
      make("tau_shape", "inverse-gamma shape for nuggets", &RunConfig::tau_shape),
      make("tau_rate", "inverse-gamma rate for nuggets", &RunConfig::tau_rate),
      make("theta_sd", "prior sd of unconstrained theta", &RunConfig::theta_sd),
      make("grid_side", "synthetic grid side", &RunConfig::grid_side),
      make("q", "synthetic number of outcomes", &RunConfig::q),
      make("missing_rate", "synthetic missing share", &RunConfig::missing_rate),
      make("patch_count", "synthetic sparse patches", &RunConfig::patch_count),
      make("patch_radius", "synthetic patch radius", &RunConfig::patch_radius),
      make("patch_missing_rate", "missing share inside patches", &RunConfig::patch_missing_rate),
      make("bench_sizes", "benchmark sizes", &RunConfig::bench_sizes),
      make("bench_subset_size", "benchmark subset size", &RunConfig::bench_subset_size),
      make("bench_sweeps", "timed sweeps per size", &RunConfig::bench_sweeps),
      make("threads", "OpenMP threads (0 uses SPAMTREE_NUM_THREADS)", &RunConfig::threads),
  };
  return all;
}

const Setting& find_setting(const std::string& key) {
  for (const auto& s : settings())
    if (s.key == key) return s;
  throw Error("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& s : settings()) out.push_back(s.key);
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_setting(key).set(cfg, value);
}

void apply_settings(RunConfig& cfg, const KeyValues& kv) {
  for (const auto& [k, v] : kv) apply_setting(cfg, k, v);
}

KeyValues to_key_values(const RunConfig& cfg) {
  KeyValues kv;
  for (const auto& s : settings()) kv[s.key] = s.get(cfg);
  return kv;
}

void validate(const RunConfig& cfg) {
  if (cfg.iterations < 0) throw Error("iterations must be >= 0");
  if (cfg.burn_in < 0 || cfg.burn_in > cfg.iterations)
    throw Error("burn_in must lie in [0, iterations]");
  if (cfg.thin < 1) throw Error("thin must be >= 1");
  if (cfg.levels < 1) throw Error("levels must be >= 1");
  if (cfg.depth < 0 || cfg.depth > cfg.levels) throw Error("depth must lie in 1..levels");
  if (cfg.subset_size < 1) throw Error("subset_size must be >= 1");
  if (cfg.children_per_axis < 1 || cfg.root_cells_per_axis < 1)
    throw Error("cell splits must be >= 1");
  if (cfg.mode != "latent" && cfg.mode != "integrated")
    throw Error("mode must be latent or integrated");
  if (!(cfg.ram_target > 0.0 && cfg.ram_target < 1.0)) throw Error("ram_target must lie in (0, 1)");
  if (!(cfg.beta_var > 0.0) || !(cfg.tau_shape > 0.0) || !(cfg.tau_rate > 0.0) ||
      !(cfg.theta_sd > 0.0))
    throw Error("prior hyperparameters must be > 0");
  if (cfg.dim < 1) throw Error("dim must be >= 1");
  if (cfg.threads < 0) throw Error("threads must be >= 0");
}

TreeParams tree_params(const RunConfig& cfg) {
  TreeParams p;
  p.levels = cfg.levels;
  p.depth = cfg.depth == 0 ? cfg.levels : cfg.depth;
  p.children_per_axis = cfg.children_per_axis;
  p.root_cells_per_axis = cfg.root_cells_per_axis;
  p.subset_size = cfg.subset_size;
  p.bias_weights = cfg.bias_weights;
  p.seed = cfg.seed;
  return p;
}

ChainConfig chain_config(const RunConfig& cfg) {
  ChainConfig c;
  c.iterations = cfg.iterations;
  c.burn_in = cfg.burn_in;
  c.thin = cfg.thin;
  c.seed = cfg.seed;
  c.target = cfg.mode == "integrated" ? ThetaTarget::integrated : ThetaTarget::latent;
  c.integrated_max_locations = cfg.integrated_max_locations;
  c.estimate_alpha_beta = cfg.estimate_alpha_beta;
  c.ram_target = cfg.ram_target;
  c.ram_initial_scale = cfg.ram_initial_scale;
  c.priors.beta_var = cfg.beta_var;
  c.priors.tau_shape = cfg.tau_shape;
  c.priors.tau_rate = cfg.tau_rate;
  c.priors.theta_sd = cfg.theta_sd;
  return c;
}

int resolve_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("SPAMTREE_NUM_THREADS")) {
    const std::string s(env);
    int n = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), n);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || n < 0)
      throw Error("SPAMTREE_NUM_THREADS must be a non-negative integer");
    return n;
  }
  return 0;
}

ChainResult fit_bundle(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.data.empty()) throw Error("fit needs --data");
  if (cfg.out.empty()) throw Error("fit needs --out");
  IngestReport rep;
  const ModelData data = read_data_csv(cfg.data, {cfg.dim, cfg.num_vars}, &rep);
  log << describe(rep);
  if (data.n() == 0) throw Error("no locations to fit");
  const TreedDag dag = build_tree(data.locations, data.observed, tree_params(cfg));
  log << "graph: " << dag.size() << " nodes, height " << dag.height() << ", depth "
      << dag.depth() << ", " << dag.fallback_count() << " fallback placements\n";
  const ChainResult res = run_chain(data, dag, chain_config(cfg));

  fs::create_directories(cfg.out);
  const fs::path dir(cfg.out);
  write_data_csv((dir / "data.csv").string(), data);
  {
    std::ofstream os(dir / "dag.txt");
    write_dag(os, dag);
    if (!os) throw Error("failed writing dag.txt");
  }
  RunConfig snapshot = cfg;
  snapshot.num_vars = data.q;
  write_key_values((dir / "config.ini").string(), to_key_values(snapshot));
  write_samples(cfg.out, res.layout, res.draws);
  const auto& d = res.diag;
  KeyValues diag;
  diag["sweeps"] = std::to_string(cfg.iterations);
  diag["retained_draws"] = std::to_string(res.draws.size());
  diag["theta_proposals"] = std::to_string(d.theta_proposals);
  diag["theta_accepted"] = std::to_string(d.theta_accepted);
  diag["theta_acceptance_rate"] =
      format_double(d.theta_proposals ? double(d.theta_accepted) / d.theta_proposals : 0.0);
  diag["invalid_proposals"] = std::to_string(d.invalid_proposals);
  diag["seconds_w"] = format_double(d.seconds_w);
  diag["seconds_beta"] = format_double(d.seconds_beta);
  diag["seconds_tau2"] = format_double(d.seconds_tau2);
  diag["seconds_theta"] = format_double(d.seconds_theta);
  diag["seconds_total"] = format_double(d.seconds_total);
  write_key_values((dir / "diagnostics.txt").string(), diag);
  log << "wrote " << res.draws.size() << " draws to " << cfg.out << "\n";
  return res;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("slope needs at least two points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]) / n;
    my += std::log(y[k]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = std::log(x[k]) - mx;
    sxy += dx * (std::log(y[k]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ScalingResult scaling_benchmark(const std::vector<int>& sizes, int subset_size, int sweeps,
                                std::uint64_t seed) {
  if (sweeps < 1) throw Error("benchmark needs at least one sweep");
  ScalingResult out;
  std::vector<double> xs, ys;
  for (int n : sizes) {
    if (n < 2) throw Error("benchmark sizes must be >= 2");
    RngStream rng(seed, 0x62656e6368ULL, static_cast<std::uint64_t>(n));
    ModelData data;
    data.q = 2;
    data.locations = LocationSet(2);
    for (int i = 0; i < n / 2; ++i) {
      const double c[2] = {rng.uniform(), rng.uniform()};
      for (int v = 0; v < 2; ++v) data.locations.push_back(std::span<const double>(c, 2), v);
    }
    const int m = data.locations.size();
    data.X = Matrix::Ones(m, 1);
    data.y.resize(m);
    for (int i = 0; i < m; ++i) data.y(i) = rng.normal();
    data.observed.assign(m, 1);

    TreeParams tp;
    tp.levels = 2;
    tp.depth = 1;
    tp.children_per_axis = 2;
    tp.root_cells_per_axis = std::max(1, static_cast<int>(std::lround(3.0 * std::sqrt(m / 1000.0))));
    tp.subset_size = subset_size;
    tp.seed = seed;
    const TreedDag dag = build_tree(data.locations, data.observed, tp);

    ChainConfig cc;
    cc.iterations = sweeps;
    cc.burn_in = 0;
    cc.seed = seed;
    const ChainResult res = run_chain(data, dag, cc);
    const auto& d = res.diag;
    ScalingPoint pt;
    pt.n = m;
    pt.seconds_per_sweep = (d.seconds_w + d.seconds_beta + d.seconds_tau2 + d.seconds_theta) / sweeps;
    pt.nodes = dag.size();
    for (int i = 0; i < m; ++i) pt.reference_locations += dag.is_reference(i) ? 1 : 0;
    out.points.push_back(pt);
    xs.push_back(m);
    ys.push_back(pt.seconds_per_sweep);
  }
  if (xs.size() >= 2) out.slope = loglog_slope(xs, ys);
  return out;
}

bool run_oracle_suite(std::ostream& os, int configs, std::uint64_t seed) {
  bool all = true;
  auto report = [&](const std::string& name, bool ok, double value) {
    os << (ok ? "PASS " : "FAIL ") << name << " (" << value << ")\n";
    all = all && ok;
  };
  double dens = 0.0, duality = 0.0;
  for (int k = 0; k < configs; ++k) {
    const int q = 1 + k % 3;
    const int depth = k % 3 == 2 ? 0 : 1 + k % 3;
    const auto inst = random_instance(seed + k, q, 60 + 20 * (k % 5), depth);
    const TreedDag dag = build_tree(inst.locs, inst.observed, inst.params);
    const ModelFactors mf = compute_factors(inst.theta, dag, inst.locs);
    const Matrix c = dense_spamtree_cov(dag, mf);
    RngStream rng(seed + k, 1, 0);
    Vector w(inst.locs.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
    const DenseGaussian g(Vector::Zero(w.size()), c);
    dens = std::max(dens, std::abs(log_prior_w(w, dag, mf) - g.log_density(w)));
    const Matrix lam = assemble_precision(mf, dag).to_dense();
    duality = std::max(duality,
                       (lam * c - Matrix::Identity(c.rows(), c.cols())).cwiseAbs().maxCoeff());
  }
  report("tree density matches dense density", dens <= 1e-6, dens);
  report("precision times covariance is identity", duality <= 1e-5, duality);

  double kol = 0.0;
  for (int k = 0; k < configs; ++k) {
    const auto inst = random_instance(seed + 100 + k, 1 + k % 2, 40, k % 2 ? 0 : 1);
    const auto r = kolmogorov_checks(inst.theta, inst.locs, inst.params, seed + k);
    kol = std::max({kol, r.permutation_cov_error, r.permutation_logdens_error,
                    r.marginal_cov_error, r.reference_cov_error});
  }
  report("consistency under permutation and marginalization", kol <= 1e-10, kol);

  int prop_fail = 0;
  for (int k = 0; k < configs; ++k) {
    RngStream rng(seed + 200 + k, 2, 0);
    const ThetaParams th = random_theta(rng, 2);
    const auto sc = random_proposition_scenario(seed + 200 + k, 2, 5);
    if (!check_propositions(th, sc).inequalities_hold) ++prop_fail;
  }
  report("reference placement inequalities", prop_fail == 0, prop_fail);
  return all;
}

// ------------------------------------------------------------------ main

namespace {

void add_config_flags(CLI::App* sub, KeyValues& flags, std::string& config_path) {
  sub->add_option("--config", config_path, "key = value config file");
  for (const auto& s : settings()) {
    auto* opt = sub->add_option_function<std::string>(
        "--" + s.key, [&flags, key = s.key](const std::string& v) { flags[key] = v; }, s.help);
    opt->type_name("VALUE");
  }
}

RunConfig resolve(const std::string& config_path, const KeyValues& flags) {
  RunConfig cfg;
  if (!config_path.empty()) apply_settings(cfg, read_key_values(config_path));
  apply_settings(cfg, flags);
  validate(cfg);
  set_threads(resolve_threads(cfg));
  return cfg;
}

int cmd_predict(const RunConfig& cfg) {
  if (cfg.bundle.empty()) throw Error("predict needs --bundle");
  const fs::path dir(cfg.bundle);
  RunConfig fitted;
  apply_settings(fitted, read_key_values((dir / "config.ini").string()));
  const ModelData data = read_data_csv((dir / "data.csv").string(), {fitted.dim, fitted.num_vars});
  TreedDag dag;
  {
    std::ifstream is(dir / "dag.txt");
    if (!is) throw Error("cannot read dag.txt in " + cfg.bundle);
    dag = read_dag(is);
  }
  const auto draws = read_samples(cfg.bundle);
  ModelData target = data;
  if (!cfg.locations.empty())
    target = read_data_csv(cfg.locations, {fitted.dim, data.q});
  PredictionRequest req{target.locations, target.X};
  const ThetaLayout layout(data.q, fitted.estimate_alpha_beta);
  const auto pd = predict(draws, layout, dag, data, req, cfg.seed);
  const auto summary = summarize(pd.y);
  const std::string out = cfg.out.empty() ? (dir / "predictions.csv").string() : cfg.out;
  write_predictions(out, target.locations, summary, target.observed);
  std::cout << "wrote " << target.n() << " predictions to " << out << "\n";
  if (!cfg.locations.empty()) {
    Vector truth = target.y;
    for (int i = 0; i < target.n(); ++i)
      if (!target.observed[i]) truth(i) = std::nan("");
    std::vector<int> vars(target.n());
    for (int i = 0; i < target.n(); ++i) vars[i] = target.locations.var(i);
    const auto sc = score(summary, truth, vars, data.q);
    const std::string spath = fs::path(out).replace_extension(".scores.csv").string();
    write_scores(spath, sc);
    for (std::size_t v = 0; v < sc.size(); ++v)
      std::cout << "outcome " << v << ": coverage95 " << sc[v].coverage95 << ", rmse "
                << sc[v].rmse << ", mae " << sc[v].mae << " over " << sc[v].count << "\n";
  }
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  if (cfg.out.empty()) throw Error("synth needs --out");
  SynthConfig sc;
  sc.grid_side = cfg.grid_side;
  sc.q = cfg.q;
  sc.missing_rate = cfg.missing_rate;
  sc.patch_count = cfg.patch_count;
  sc.patch_radius = cfg.patch_radius;
  sc.patch_missing_rate = cfg.patch_missing_rate;
  sc.seed = cfg.seed;
  const SynthData sd = generate(sc);
  write_data_csv(cfg.out, sd.data);
  const fs::path base = fs::path(cfg.out).replace_extension("");
  write_truth_csv(base.string() + ".truth.csv", sd.data, sd.truth);
  // held-out outcomes in the data format, ready for predict --locations
  ModelData held = sd.data;
  for (int i = 0; i < held.n(); ++i) {
    held.observed[i] = held.observed[i] ? 0 : 1;
    held.y(i) = sd.truth.y_full(i);
  }
  std::vector<int> keep;
  for (int i = 0; i < held.n(); ++i)
    if (held.observed[i]) keep.push_back(i);
  ModelData sub;
  sub.q = held.q;
  sub.locations = held.locations.subset(keep);
  sub.y.resize(keep.size());
  sub.X.resize(keep.size(), held.p());
  sub.observed.assign(keep.size(), 1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    sub.y(k) = held.y(keep[k]);
    sub.X.row(k) = held.X.row(keep[k]);
  }
  write_data_csv(base.string() + ".heldout.csv", sub);
  const ThetaLayout layout(sc.q, true);
  const Vector nat = layout.natural(sd.truth.theta);
  const auto names = layout.names();
  KeyValues kv;
  for (std::size_t k = 0; k < names.size(); ++k) kv[names[k]] = format_double(nat(k));
  for (int v = 0; v < sc.q; ++v) {
    kv["tau2_" + std::to_string(v)] = format_double(sd.truth.tau2(v));
    kv["beta_" + std::to_string(v)] = format_double(sd.truth.beta(v));
  }
  write_key_values(base.string() + ".params.txt", kv);
  std::cout << "wrote " << sd.data.n() << " rows to " << cfg.out << "\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  std::vector<int> sizes;
  for (double s : cfg.bench_sizes) sizes.push_back(static_cast<int>(s));
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = scaling_benchmark(sizes, cfg.bench_subset_size, cfg.bench_sweeps, cfg.seed);
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<Vector> rows;
  for (const auto& p : res.points) {
    Vector r(4);
    r << p.n, p.seconds_per_sweep, p.reference_locations, p.nodes;
    rows.push_back(r);
    std::cout << "n " << p.n << ": " << p.seconds_per_sweep << " s per sweep\n";
  }
  std::cout << "log-log slope " << res.slope << ", total " << total << " s\n";
  if (!cfg.out.empty()) {
    write_table(cfg.out, {"n", "seconds_per_sweep", "reference_locations", "nodes"}, rows);
    std::cout << "wrote " << cfg.out << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Bayesian multivariate spatial regression on treed graphs"};
  app.require_subcommand(1);
  struct Sub {
    CLI::App* app;
    KeyValues flags;
    std::string config;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto add = [&](const char* name, const char* help) {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, help);
    add_config_flags(s->app, s->flags, s->config);
    subs.push_back(std::move(s));
    return subs.back().get();
  };
  Sub* fit = add("fit", "run the sampler and write a model bundle");
  Sub* pred = add("predict", "predict from a bundle and score against known outcomes");
  Sub* synth = add("synth", "generate a synthetic data set");
  Sub* bench = add("bench", "per-sweep timing over data sizes");
  Sub* check = add("check", "run the dense-oracle checks");
  int check_configs = 6;
  check->app->add_option("--configs", check_configs, "random instances per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (fit->app->parsed()) {
      fit_bundle(resolve(fit->config, fit->flags), std::cout);
      return 0;
    }
    if (pred->app->parsed()) return cmd_predict(resolve(pred->config, pred->flags));
    if (synth->app->parsed()) return cmd_synth(resolve(synth->config, synth->flags));
    if (bench->app->parsed()) return cmd_bench(resolve(bench->config, bench->flags));
    if (check->app->parsed()) {
      const RunConfig cfg = resolve(check->config, check->flags);
      return run_oracle_suite(std::cout, check_configs, cfg.seed) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace spamtree
