#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "distrl/imputation.hpp"

namespace distrl {

// Environment block of an experiment config. `lengths` is a sweep axis (the
// chain-length comparisons run several); single-environment experiments hold
// one entry, and the control environment (whose size is fixed) holds none.
struct EnvSpec {
  std::string name = "nchain";  // nchain | absorbing-chain | control
  std::vector<int> lengths{15};
  double p_forward = 0.95;  // nchain forward-success probability
  double gamma = 0.99;
  int reward_atoms = 1000;  // discretisation of continuous reward laws
};

// Statistic set block. `ks` is a sweep axis over set sizes.
struct StatSpec {
  std::string kind = "expectile";  // expectile | quantile | huber | categorical
  std::vector<int> ks{9};
  double kappa = 1.0;  // huber width
  double z_lo = 0.0;   // categorical support range
  double z_hi = 1.0;
};

// Imputation solver knobs exposed to configs; mapped onto SolverOptions.
struct SolverSpec {
  double tolerance = SolverOptions{}.tolerance;
  int max_iters = SolverOptions{}.max_iters;
  int n_atoms = SolverOptions{}.n_atoms;  // 0: one atom per statistic
};

// One experiment description: a named preset (fig2..appendixD, bounds,
// closedness) or a custom sweep. Every field is echoed into the run
// manifest; seeds are always explicit so reruns are exact.
struct ExperimentConfig {
  int schema_version = 1;
  std::string kind;            // fig2 | fig5 | fig6 | fig7 | fig8 | appendixD |
                               // bounds | closedness | custom
  std::string method = "sgd";  // sgd | dp (fig8 always runs greedy DP)
  EnvSpec env;
  std::vector<std::string> algorithms{"expectile"};
  StatSpec statistics;
  double alpha = 0.05;
  int steps = 30000;
  int metric_every = 0;  // checkpoint cadence; 0 means steps / 10
  int sweeps = 10000;    // DP sweep budget
  double dp_tol = 1e-9;
  std::vector<std::uint64_t> seeds;
  int mc_rollouts = 1000;
  std::uint64_t mc_seed = 10007;  // truth stream, shared across all cells
  SolverSpec solver;
  std::string out_dir = "out";
};

// Paper-default config for a named experiment kind, seeds included, so the
// kind alone reproduces the corresponding figure. Throws ConfigError for an
// unknown kind.
ExperimentConfig preset_config(const std::string& kind);

// Parses JSON config text: the named kind's preset supplies defaults (seeds
// excepted, which the text must provide), the text overrides them. Unknown
// keys are rejected by full path and validation reports every violation at
// once. Throws ConfigError with line/column diagnostics on malformed JSON.
ExperimentConfig parse_config(const std::string& text);

// Canonical JSON echo of a config (the manifest's `config` block). Parsing
// it back yields the same config.
std::string config_to_json(const ExperimentConfig& config);

// Collects validation violations; empty means the config is runnable.
std::vector<std::string> validate_config(const ExperimentConfig& config);

// Command-line overrides applied on top of a config before running.
struct RunFlags {
  std::string out_dir;               // overrides config.out_dir when nonempty
  std::vector<std::uint64_t> seeds;  // overrides config.seeds when nonempty
  int workers = 0;                   // parallel cells; 0 = hardware threads
  bool overwrite = false;            // allow writing into a nonempty out_dir
};

struct CellResult {
  std::string run_id;
  bool ok = true;
  std::string error;
  double wall_time_s = 0.0;
};

struct RunReport {
  int exit_code = 0;  // 0 all cells ok, 1 any cell failed or check refuted
  std::vector<CellResult> cells;
  std::vector<std::string> artifacts;  // paths relative to out_dir
  std::filesystem::path out_dir;
};

// Executes every (cell x seed) of the config and writes artifacts under the
// output directory: runs/<run_id>.csv per cell, summary.csv, manifest.json,
// plus checks.csv for the bounds/closedness kinds and control_summary.csv
// for fig8. Cell failures are recorded and reported, not thrown. Throws
// ConfigError for invalid configs or a nonempty out_dir without overwrite.
RunReport run_experiment(const ExperimentConfig& config, const RunFlags& flags = {});

// One row of a verification table: pass iff observed <= limit.
struct CheckRow {
  std::string check;
  std::string params;
  double observed = 0.0;
  double limit = 0.0;
  bool pass = false;
};

// Theorem 2 / Theorem 3 bound checks over the seeded random-MDP family
// (K = 11 supports, K = 20 quantiles, gamma = 0.9, rewards in [-1, 1]).
std::vector<CheckRow> run_bounds_check(std::span<const std::uint64_t> seeds,
                                       int workers = 0);

// Closedness witnesses: CDRL's two formulations coincide (Lemma 1), moment
// DP matches exact moments (Lemma 2), the quantile non-closedness gap
// (Lemma 3), mean consistency and its QDRL counterexample (Lemma 4), and
// the two nonuniform-error constructions.
std::vector<CheckRow> run_closedness_check(int workers = 0);

// Derives tidy per-figure data files from a finished run directory (pass
// the directory, its manifest.json, or its summary.csv). Files land in
// <run_dir>/plot (or out_dir when nonempty) and are appended to the
// manifest's artifact list. Returns the paths written, relative to the run
// directory. Throws ConfigError on missing inputs or schema mismatches.
std::vector<std::string> emit_plotdata(const std::filesystem::path& aggregate,
                                       const std::filesystem::path& out_dir = {});

}  // namespace distrl
