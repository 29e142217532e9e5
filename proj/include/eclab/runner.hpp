#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eclab/game.hpp"
#include "eclab/metrics.hpp"

namespace eclab {

/// Flat, serializable run description. JSON keys are exactly the field names.
struct RunConfig {
  std::string preset = "custom";
  std::string meaning_kind = "attrval";  // attrval | dyck
  int n_att = 2;
  int n_val = 64;
  int dyck_k = 4;
  int dyck_l_max = 8;
  std::string strategy = "learned";  // learned | left | random
  std::string random_resample = "per_step";
  std::string beta_mode = "off";  // off | rewo
  bool prior_head = true;
  long iterations = 15000;
  int batch_size = 8192;
  double learning_rate = 1e-4;
  double l2 = 1e-4;
  double entropy_coef = 0.5;
  std::string entropy_normalization = "per_position";  // per_position | sum
  int max_len = 8;
  int vocab = 4;
  int hidden = 512;
  int embedding = 32;
  double cap_pop = 2.0;
  double cap_push = 2.0;
  double cap_read = 2.0;
  double beta0 = 0.001;
  double rewo_kappa = 0.1;
  double rewo_nu = 0.01;
  double rewo_ema_decay = 0.99;
  double baseline_decay = 0.95;
  std::uint64_t seed = 0;
  long eval_every = 100;
  int eval_draws = 1;
  std::string precision = "float32";  // float32 | float64
  std::string out_dir = "runs/run";
};

std::vector<std::string> preset_names();
/// Throws Error for unknown names.
RunConfig preset(const std::string& name);

std::string config_to_json(const RunConfig& config);
/// Rejects unknown keys and wrongly typed values.
RunConfig config_from_json(const std::string& text, const RunConfig& base = RunConfig{});
RunConfig load_config(const std::filesystem::path& path);
/// Applies "key=value" (value parsed as JSON, falling back to a string).
void apply_override(RunConfig& config, const std::string& assignment);

MeaningSpace build_meaning_space(const RunConfig& config);
GameConfig to_game_config(const RunConfig& config);
/// Label used to group runs in reports: the preset name, or a description of
/// the meaning space for custom configs.
std::string panel_label(const RunConfig& config);

/// Independent deterministic substreams derived from the master seed.
struct SeedStreams {
  std::uint64_t init = 0;
  std::uint64_t split = 0;
  std::uint64_t batch = 0;
  std::uint64_t sender = 0;
  std::uint64_t branching = 0;
  std::uint64_t eval = 0;
};

SeedStreams seed_streams(std::uint64_t master);

/// True when ECLAB_DETERMINISTIC=1: wall-clock columns are zeroed and sweeps
/// run one job at a time.
bool deterministic_mode();

struct RunSummary {
  std::string status = "ok";  // ok | failed
  std::string error;
  double final_comacc_train = 0.0;
  double final_comacc_test = 0.0;
  double final_log_prior_train = 0.0;
  double final_log_prior_test = 0.0;
  double final_beta = 0.0;
  bool kept = true;
};

struct RunResult {
  RunConfig config;
  std::vector<MetricsRecord> series;
  RunSummary summary;
  SeedStreams streams;
};

inline const char* kMetricsHeader =
    "iteration,comacc_train,comacc_test,mean_log_prior_train,mean_log_prior_test,recon_loss,kl,beta,entropy,"
    "wall_seconds";

std::string format_metrics_row(const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

/// Trains and evaluates one run, writing config.json, metrics.csv (appended
/// at every evaluation point) and summary.json into config.out_dir.
/// Training failures are reported in the summary; I/O failures throw.
RunResult run(const RunConfig& config);

struct SweepOptions {
  std::string preset;
  std::vector<std::string> strategies{"learned", "left", "random"};
  int seeds = 24;
  int jobs = 1;
  std::filesystem::path out_dir = "runs/sweep";
  std::vector<std::string> overrides;
};

struct SweepRow {
  std::string strategy;
  std::uint64_t seed = 0;
  RunSummary summary;
};

/// Runs the strategy x seed grid and writes aggregate.csv. Rows are ordered by
/// strategy then seed regardless of job count.
std::vector<SweepRow> sweep(const SweepOptions& options);
std::string aggregate_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& strategies);

}  // namespace eclab
