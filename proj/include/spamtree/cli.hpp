#pragma once

#include "spamtree/io.hpp"
#include "spamtree/mcmc.hpp"
#include "spamtree/treegraph.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace spamtree {

struct RunConfig {
  // data
  std::string data, out, bundle, locations;
  int dim = 2;
  int num_vars = 0;
  // tree
  int levels = 3;
  int depth = 0;  // 0 means levels
  int children_per_axis = 2;
  int root_cells_per_axis = 1;
  int subset_size = 25;
  std::vector<double> bias_weights;
  // sampler
  int iterations = 1000;
  int burn_in = 500;
  int thin = 1;
  std::uint64_t seed = 1;
  std::string mode = "latent";
  double ram_target = 0.234;
  double ram_initial_scale = 0.1;
  bool estimate_alpha_beta = false;
  int integrated_max_locations = 3000;
  // priors
  double beta_var = 100.0;
  double tau_shape = 2.0;
  double tau_rate = 1.0;
  double theta_sd = 1.0;
  // synthetic data
  int grid_side = 30;
  int q = 2;
  double missing_rate = 0.8;
  int patch_count = 3;
  double patch_radius = 0.1;
  double patch_missing_rate = 0.99;
  // benchmark
  std::vector<double> bench_sizes{1000, 2000, 4000, 8000};
  int bench_subset_size = 16;
  int bench_sweeps = 5;
  // 0 uses SPAMTREE_NUM_THREADS or the OpenMP default
  int threads = 0;
};

/// Keys accepted in config files and as --key flags.
std::vector<std::string> config_keys();
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_settings(RunConfig& cfg, const KeyValues& kv);
KeyValues to_key_values(const RunConfig& cfg);
void validate(const RunConfig& cfg);

TreeParams tree_params(const RunConfig& cfg);
ChainConfig chain_config(const RunConfig& cfg);
/// Thread count from the config, else SPAMTREE_NUM_THREADS, else 0.
int resolve_threads(const RunConfig& cfg);

/// Fits the model and writes a bundle directory: data.csv, dag.txt,
/// config.ini, samples/ and diagnostics.txt.
ChainResult fit_bundle(const RunConfig& cfg, std::ostream& log);

struct ScalingPoint {
  int n = 0;
  double seconds_per_sweep = 0.0;
  int reference_locations = 0;
  int nodes = 0;
};
struct ScalingResult {
  std::vector<ScalingPoint> points;
  double slope = 0.0;  // least-squares slope of log time on log n
};
/// Per-sweep wall time on uniform random locations at fixed subset size.
/// The root grid grows with sqrt(n) so the reference set stays a fixed share
/// of the data.
ScalingResult scaling_benchmark(const std::vector<int>& sizes, int subset_size, int sweeps,
                                std::uint64_t seed);
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Small randomized run of the dense-oracle checks; returns true when all pass.
bool run_oracle_suite(std::ostream& os, int configs, std::uint64_t seed);

int run_cli(int argc, char** argv);

}  // namespace spamtree
