// eclab: train, sweep and plot the stack-receiver signaling game.
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "eclab/report.hpp"
#include "eclab/runner.hpp"

namespace {

struct RunFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> eval_draws;
  std::vector<std::string> sets;
  bool print_config = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--eval-draws", f.eval_draws, "Random-branching draws per meaning at evaluation");
  cmd->add_option("--set", f.sets, "Override a config key (key=value), repeatable");
  cmd->add_flag("--print-config", f.print_config, "Print the resolved config and exit");
}

int execute(eclab::RunConfig config, const RunFlags& f) {
  for (const auto& s : f.sets) eclab::apply_override(config, s);
  if (f.seed) config.seed = *f.seed;
  if (f.out) config.out_dir = *f.out;
  if (f.eval_draws) config.eval_draws = *f.eval_draws;
  if (f.print_config) {
    std::cout << eclab::config_to_json(config);
    return 0;
  }
  const auto result = eclab::run(config);
  const auto& s = result.summary;
  std::printf("%s: status=%s comacc_train=%.4f comacc_test=%.4f beta=%.4f kept=%s\n", config.out_dir.c_str(),
              s.status.c_str(), s.final_comacc_train, s.final_comacc_test, s.final_beta, s.kept ? "yes" : "no");
  if (s.status != "ok") {
    std::fprintf(stderr, "run failed: %s\n", s.error.c_str());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signaling games with a neural-stack receiver"};
  app.require_subcommand(1);

  RunFlags run_flags;
  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Train one run from a JSON config");
  run_cmd->add_option("--config", config_path, "Flat JSON config")->required()->check(CLI::ExistingFile);
  add_run_flags(run_cmd, run_flags);

  RunFlags preset_flags;
  std::string preset_name;
  bool list = false;
  auto* preset_cmd = app.add_subcommand("preset", "Train one run from a named preset");
  preset_cmd->add_option("name", preset_name, "Preset name");
  preset_cmd->add_flag("--list", list, "List preset names");
  add_run_flags(preset_cmd, preset_flags);

  eclab::SweepOptions sweep_opts;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a strategy x seed grid");
  sweep_cmd->add_option("--preset", sweep_opts.preset, "Preset name")->required();
  sweep_cmd->add_option("--seeds", sweep_opts.seeds, "Seeds 0..N-1")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--jobs", sweep_opts.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--strategies", sweep_opts.strategies, "Strategies")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "Output directory");
  sweep_cmd->add_option("--set", sweep_opts.overrides, "Override a config key (key=value), repeatable");

  std::vector<std::string> report_in;
  std::string report_out;
  bool include_excluded = false;
  auto* report_cmd = app.add_subcommand("report", "Plot runs as SVG plus plot_data.csv");
  report_cmd->add_option("--in", report_in, "Run or sweep directories")->required()->expected(1, -1);
  report_cmd->add_option("--out", report_out, "Output directory")->required();
  report_cmd->add_flag("--include-excluded", include_excluded, "Also plot runs whose final beta failed the filter");

  std::string export_preset, export_path;
  auto* export_cmd = app.add_subcommand("export-meanings", "Write a preset's meaning space, one per line");
  export_cmd->add_option("preset", export_preset, "Preset name")->required();
  export_cmd->add_option("--out", export_path, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return execute(eclab::load_config(config_path), run_flags);
    if (*preset_cmd) {
      if (list) {
        for (const auto& n : eclab::preset_names()) std::cout << n << '\n';
        return 0;
      }
      if (preset_name.empty()) throw eclab::Error("preset: missing NAME (see --list)");
      return execute(eclab::preset(preset_name), preset_flags);
    }
    if (*sweep_cmd) {
      sweep_opts.out_dir = sweep_out.empty() ? "runs/sweep-" + sweep_opts.preset : sweep_out;
      const auto rows = eclab::sweep(sweep_opts);
      int failed = 0;
      for (const auto& r : rows) failed += r.summary.status != "ok";
      std::printf("%zu runs, %d failed; aggregate at %s\n", rows.size(), failed,
                  (sweep_opts.out_dir / "aggregate.csv").string().c_str());
      return 0;
    }
    if (*report_cmd) {
      std::vector<std::filesystem::path> inputs(report_in.begin(), report_in.end());
      for (const auto& p : eclab::report(inputs, report_out, include_excluded)) std::cout << p.string() << '\n';
      return 0;
    }
    if (*export_cmd) {
      const auto space = eclab::build_meaning_space(eclab::preset(export_preset));
      eclab::export_meanings(space, export_path);
      std::printf("%zu meanings written to %s\n", space.size(), export_path.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
