#include "eclab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace eclab {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

template <typename C, typename F>
void visit_fields(C& c, F&& f) {
  f("preset", c.preset);
  f("meaning_kind", c.meaning_kind);
  f("n_att", c.n_att);
  f("n_val", c.n_val);
  f("dyck_k", c.dyck_k);
  f("dyck_l_max", c.dyck_l_max);
  f("strategy", c.strategy);
  f("random_resample", c.random_resample);
  f("beta_mode", c.beta_mode);
  f("prior_head", c.prior_head);
  f("iterations", c.iterations);
  f("batch_size", c.batch_size);
  f("learning_rate", c.learning_rate);
  f("l2", c.l2);
  f("entropy_coef", c.entropy_coef);
  f("entropy_normalization", c.entropy_normalization);
  f("max_len", c.max_len);
  f("vocab", c.vocab);
  f("hidden", c.hidden);
  f("embedding", c.embedding);
  f("cap_pop", c.cap_pop);
  f("cap_push", c.cap_push);
  f("cap_read", c.cap_read);
  f("beta0", c.beta0);
  f("rewo_kappa", c.rewo_kappa);
  f("rewo_nu", c.rewo_nu);
  f("rewo_ema_decay", c.rewo_ema_decay);
  f("baseline_decay", c.baseline_decay);
  f("seed", c.seed);
  f("eval_every", c.eval_every);
  f("eval_draws", c.eval_draws);
  f("precision", c.precision);
  f("out_dir", c.out_dir);
}

json to_json_object(const RunConfig& config) {
  json j = json::object();
  visit_fields(config, [&](const char* key, const auto& value) { j[key] = value; });
  return j;
}

void assign_from_json(RunConfig& config, const json& j) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    visit_fields(config, [&](const char* key, auto& field) {
      if (it.key() != key) return;
      found = true;
      using F = std::decay_t<decltype(field)>;
      try {
        if constexpr (std::is_integral_v<F> && !std::is_same_v<F, bool>) {
          if (!it.value().is_number_integer()) throw Error("not an integer");
        }
        field = it.value().template get<F>();
      } catch (const std::exception& e) {
        throw Error("config: bad value for '" + it.key() + "': " + it.value().dump());
      }
    });
    if (!found) throw Error("config: unknown key '" + it.key() + "'");
  }
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<Meaning> select(const MeaningSpace& space, const std::vector<std::size_t>& idx) {
  std::vector<Meaning> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(space.meanings[i]);
  return out;
}

json summary_json(const RunResult& r) {
  json j = json::object();
  j["status"] = r.summary.status;
  j["error"] = r.summary.error;
  j["strategy"] = r.config.strategy;
  j["seed"] = r.config.seed;
  j["panel"] = panel_label(r.config);
  j["beta_mode"] = r.config.beta_mode;
  j["iterations"] = r.config.iterations;
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  j["final_comacc_train"] = num(r.summary.final_comacc_train);
  j["final_comacc_test"] = num(r.summary.final_comacc_test);
  j["final_log_prior_train"] = num(r.summary.final_log_prior_train);
  j["final_log_prior_test"] = num(r.summary.final_log_prior_test);
  j["final_beta"] = r.summary.final_beta;
  j["kept"] = r.summary.kept;
  j["streams"] = {{"init", r.streams.init},         {"split", r.streams.split},
                  {"batch", r.streams.batch},       {"sender", r.streams.sender},
                  {"branching", r.streams.branching}, {"eval", r.streams.eval}};
  return j;
}

template <typename T>
void train_and_evaluate(const RunConfig& config, RunResult& result, std::ofstream& csv) {
  const bool deterministic = deterministic_mode();
  MeaningSpace space = build_meaning_space(config);
  apply_split(space, result.streams.split);
  const auto train = select(space, space.train);
  const auto test = select(space, space.test);
  const GameConfig gc = to_game_config(config);
  const Strategy strategy = gc.agent.strategy;

  Rng init(result.streams.init), batch_rng(result.streams.batch), sender_rng(result.streams.sender),
      branching_rng(result.streams.branching), eval_rng(result.streams.eval);
  Game<T> game(space, gc, init);

  const auto start = std::chrono::steady_clock::now();
  std::vector<Meaning> batch(static_cast<std::size_t>(gc.batch_size));
  for (long it = 1; it <= config.iterations; ++it) {
    for (auto& m : batch) m = train[batch_rng.below(train.size())];
    const StepStats stats = game.train_step(batch, sender_rng, branching_rng);
    if (it % config.eval_every != 0 && it != config.iterations) continue;

    MetricsRecord r;
    r.iteration = it;
    r.comacc_train = comacc(game.sender(), game.receiver(), std::span<const Meaning>(train), strategy, eval_rng,
                            config.eval_draws);
    r.comacc_test = comacc(game.sender(), game.receiver(), std::span<const Meaning>(test), strategy, eval_rng,
                           config.eval_draws);
    if (game.receiver().has_prior()) {
      r.mean_log_prior_train = mean_log_prior(game.sender(), game.receiver(), std::span<const Meaning>(train), strategy, eval_rng);
      r.mean_log_prior_test = mean_log_prior(game.sender(), game.receiver(), std::span<const Meaning>(test), strategy, eval_rng);
    } else {
      r.mean_log_prior_train = r.mean_log_prior_test = std::numeric_limits<double>::quiet_NaN();
    }
    r.recon_loss = -stats.recon_log_lik;
    r.kl = stats.kl;
    r.beta = game.beta();
    r.entropy = stats.entropy;
    r.wall_seconds =
        deterministic ? 0.0 : std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.series.push_back(r);
    csv << format_metrics_row(r) << '\n';
    csv.flush();
  }
  result.summary.final_beta = game.beta();
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"exp1-dyck-k1",  "exp1-dyck-k4", "exp1-dyck-k9", "exp2-attrval-2x64", "exp2-attrval-4x8", "prelim-2x64",
          "prelim-3x16",   "prelim-4x8",   "prelim-6x4",   "smoke-attrval",     "smoke-dyck"};
}

RunConfig preset(const std::string& name) {
  RunConfig c;  // defaults are the full-scale hyperparameters
  c.preset = name;
  c.out_dir = "runs/" + name;
  auto dyck = [&](int k, int l_max) {
    c.meaning_kind = "dyck";
    c.dyck_k = k;
    c.dyck_l_max = l_max;
  };
  auto attrval = [&](int n_att, int n_val) {
    c.meaning_kind = "attrval";
    c.n_att = n_att;
    c.n_val = n_val;
  };
  if (name == "exp1-dyck-k1") {
    dyck(1, 18);
  } else if (name == "exp1-dyck-k4") {
    dyck(4, 8);
  } else if (name == "exp1-dyck-k9") {
    dyck(9, 6);
  } else if (name == "exp2-attrval-2x64" || name == "exp2-attrval-4x8") {
    name == "exp2-attrval-2x64" ? attrval(2, 64) : attrval(4, 8);
    c.iterations = 10000;
    c.beta_mode = "rewo";
  } else if (name == "prelim-2x64" || name == "prelim-3x16" || name == "prelim-4x8" || name == "prelim-6x4") {
    const int n_att = name[7] - '0';
    attrval(n_att, std::stoi(name.substr(9)));
    c.iterations = 5000;
  } else if (name == "smoke-attrval") {
    attrval(2, 4);
    c.hidden = 64;
    c.batch_size = 256;
    c.iterations = 2000;
    c.learning_rate = 3e-3;  // 1e-3 left 2 of 5 seeds short of 0.95 at 2000
  } else if (name == "smoke-dyck") {
    dyck(4, 6);
    c.hidden = 128;
    c.batch_size = 512;
    c.iterations = 4000;
    c.learning_rate = 1e-3;
  } else {
    throw Error("unknown preset '" + name + "'");
  }
  return c;
}

std::string config_to_json(const RunConfig& config) { return to_json_object(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c = base;
  assign_from_json(c, j);
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  assign_from_json(config, json{{key, value}});
}

MeaningSpace build_meaning_space(const RunConfig& config) {
  if (config.meaning_kind == "attrval") return enumerate_attr_val(config.n_att, config.n_val);
  if (config.meaning_kind == "dyck") return enumerate_dyck(config.dyck_k, config.dyck_l_max);
  throw Error("unknown meaning_kind '" + config.meaning_kind + "' (expected attrval or dyck)");
}

GameConfig to_game_config(const RunConfig& c) {
  if (c.iterations < 1 || c.batch_size < 1 || c.eval_every < 1 || c.eval_draws < 1) {
    throw Error("config: iterations, batch_size, eval_every and eval_draws must be positive");
  }
  if (c.vocab < 2 || c.max_len < 1 || c.hidden < 1 || c.embedding < 1) throw Error("config: bad agent dimensions");
  if (c.entropy_normalization != "per_position" && c.entropy_normalization != "sum") {
    throw Error("unknown entropy_normalization '" + c.entropy_normalization + "' (expected per_position or sum)");
  }
  GameConfig g;
  g.agent.vocab = c.vocab;
  g.agent.max_len = c.max_len;
  g.agent.hidden = c.hidden;
  g.agent.embedding = c.embedding;
  g.agent.caps = {c.cap_pop, c.cap_push, c.cap_read};
  g.agent.strategy = parse_strategy(c.strategy);
  g.agent.resample = parse_random_resample(c.random_resample);
  g.agent.prior_head = c.prior_head;
  g.beta_mode = parse_beta_mode(c.beta_mode);
  g.entropy_coef = c.entropy_coef;
  g.entropy_per_position = c.entropy_normalization == "per_position";
  g.batch_size = c.batch_size;
  g.adam.learning_rate = c.learning_rate;
  g.adam.l2 = c.l2;
  g.rewo = {c.beta0, c.rewo_kappa, c.rewo_nu, c.rewo_ema_decay};
  g.baseline_decay = c.baseline_decay;
  return g;
}

std::string panel_label(const RunConfig& c) {
  if (c.preset != "custom") return c.preset;
  if (c.meaning_kind == "dyck") return "dyck-k" + std::to_string(c.dyck_k) + "-l" + std::to_string(c.dyck_l_max);
  return "attrval-" + std::to_string(c.n_att) + "x" + std::to_string(c.n_val);
}

SeedStreams seed_streams(std::uint64_t master) {
  return {derive_seed(master, "init"),      derive_seed(master, "split"),     derive_seed(master, "batch"),
          derive_seed(master, "sender"),    derive_seed(master, "branching"), derive_seed(master, "eval")};
}

bool deterministic_mode() {
  const char* v = std::getenv("ECLAB_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

std::string format_metrics_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.iteration);
  for (double x : {r.comacc_train, r.comacc_test, r.mean_log_prior_train, r.mean_log_prior_test, r.recon_loss, r.kl,
                   r.beta, r.entropy, r.wall_seconds}) {
    s += ',';
    s += fmt(x);
  }
  return s;
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw Error(path.string() + ": unexpected metrics header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 10) break;  // truncated trailing row of a killed run
    MetricsRecord r;
    r.iteration = std::stol(cells[0]);
    double* fields[] = {&r.comacc_train, &r.comacc_test, &r.mean_log_prior_train, &r.mean_log_prior_test,
                        &r.recon_loss,   &r.kl,          &r.beta,                 &r.entropy,
                        &r.wall_seconds};
    for (std::size_t i = 0; i < 9; ++i) *fields[i] = parse_double(cells[i + 1]);
    out.push_back(r);
  }
  return out;
}

RunResult run(const RunConfig& config) {
  RunResult result;
  result.config = config;
  result.streams = seed_streams(config.seed);
  to_game_config(config);  // validate before touching the disk
  if (config.precision != "float32" && config.precision != "float64") {
    throw Error("unknown precision '" + config.precision + "' (expected float32 or float64)");
  }

  const fs::path out = config.out_dir;
  fs::create_directories(out);
  write_text(out / "config.json", config_to_json(config));
  std::ofstream csv(out / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw Error("cannot open " + (out / "metrics.csv").string());
  csv << kMetricsHeader << '\n';
  csv.flush();

  try {
    if (config.precision == "float64") {
      train_and_evaluate<double>(config, result, csv);
    } else {
      train_and_evaluate<float>(config, result, csv);
    }
  } catch (const Error& e) {
    result.summary.status = "failed";
    result.summary.error = e.what();
  }
  if (!csv) throw Error("write failed for " + (out / "metrics.csv").string());

  auto& s = result.summary;
  if (!result.series.empty()) {
    const auto& last = result.series.back();
    s.final_comacc_train = last.comacc_train;
    s.final_comacc_test = last.comacc_test;
    s.final_log_prior_train = last.mean_log_prior_train;
    s.final_log_prior_test = last.mean_log_prior_test;
  }
  s.kept = s.status == "ok" && (config.beta_mode != "rewo" || run_filter(s.final_beta));
  write_text(out / "summary.json", summary_json(result).dump(2) + "\n");
  return result;
}

std::vector<SweepRow> sweep(const SweepOptions& options) {
  if (options.seeds < 1) throw Error("sweep: need at least one seed");
  if (options.strategies.empty()) throw Error("sweep: need at least one strategy");
  RunConfig base = preset(options.preset);
  for (const auto& o : options.overrides) apply_override(base, o);

  std::vector<RunConfig> grid;
  for (const auto& strategy : options.strategies) {
    parse_strategy(strategy);
    for (int seed = 0; seed < options.seeds; ++seed) {
      RunConfig c = base;
      c.strategy = strategy;
      c.seed = static_cast<std::uint64_t>(seed);
      c.out_dir = (options.out_dir / strategy / ("seed-" + std::to_string(seed))).string();
      grid.push_back(c);
    }
  }

  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) {
      rows[i].strategy = grid[i].strategy;
      rows[i].seed = grid[i].seed;
      try {
        rows[i].summary = run(grid[i]).summary;
      } catch (const std::exception& e) {
        rows[i].summary.status = "failed";
        rows[i].summary.error = e.what();
        rows[i].summary.kept = false;
      }
    }
  };
  const int jobs = deterministic_mode() ? 1 : std::max(1, options.jobs);
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  fs::create_directories(options.out_dir);
  write_text(options.out_dir / "aggregate.csv", aggregate_csv(rows, options.strategies));
  return rows;
}

std::string aggregate_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& strategies) {
  std::vector<SweepRow> sorted = rows;
  auto rank = [&](const std::string& s) { return std::find(strategies.begin(), strategies.end(), s) - strategies.begin(); };
  std::stable_sort(sorted.begin(), sorted.end(), [&](const SweepRow& a, const SweepRow& b) {
    return rank(a.strategy) != rank(b.strategy) ? rank(a.strategy) < rank(b.strategy) : a.seed < b.seed;
  });

  std::ostringstream out;
  out << "row,strategy,seed,status,kept,final_beta,comacc_train,comacc_test,log_prior_train,log_prior_test\n";
  for (const auto& r : sorted) {
    const auto& s = r.summary;
    out << "run," << r.strategy << ',' << r.seed << ',' << s.status << ',' << (s.kept ? 1 : 0) << ','
        << fmt(s.final_beta) << ',' << fmt(s.final_comacc_train) << ',' << fmt(s.final_comacc_test) << ','
        << fmt(s.final_log_prior_train) << ',' << fmt(s.final_log_prior_test) << '\n';
  }
  for (const auto& strategy : strategies) {
    std::vector<const RunSummary*> kept;
    for (const auto& r : sorted)
      if (r.strategy == strategy && r.summary.kept) kept.push_back(&r.summary);
    auto stat = [&](double RunSummary::*field, bool stddev) {
      const double n = static_cast<double>(kept.size());
      if (kept.empty()) return std::numeric_limits<double>::quiet_NaN();
      double mean = 0.0;
      for (auto* s : kept) mean += s->*field;
      mean /= n;
      if (!stddev) return mean;
      if (kept.size() < 2) return 0.0;
      double var = 0.0;
      for (auto* s : kept) var += (s->*field - mean) * (s->*field - mean);
      return std::sqrt(var / (n - 1.0));
    };
    for (bool sd : {false, true}) {
      out << (sd ? "std," : "mean,") << strategy << ",,," << kept.size() << ',' << fmt(stat(&RunSummary::final_beta, sd))
          << ',' << fmt(stat(&RunSummary::final_comacc_train, sd)) << ','
          << fmt(stat(&RunSummary::final_comacc_test, sd)) << ',' << fmt(stat(&RunSummary::final_log_prior_train, sd))
          << ',' << fmt(stat(&RunSummary::final_log_prior_test, sd)) << '\n';
    }
  }
  return out.str();
}

}  // namespace eclab
