// Command-line front end: simulate, mask, complete, evaluate, benchmark.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cvkt/cvkt.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> method;
  bool no_postprocess = false;
  std::optional<std::string> postprocess_range;
  bool bb_steps = false;
  bool oracle_cv = false;
  std::optional<int> max_iters;
  std::optional<std::vector<double>> landmark_fractions;
  std::optional<std::vector<double>> rank_fractions;
};

void add_run_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Seed for every random choice");
  cmd->add_option("--threads", f.threads, "Parallel view completions");
  cmd->add_option("--method", f.method, "cvkt, zero or mean");
  cmd->add_flag("--no-postprocess", f.no_postprocess, "Skip range/mean post-processing of CVKT predictions");
  cmd->add_option("--postprocess-range", f.postprocess_range,
                  "Predicted entries whose range is matched to the known block: known (default) or full");
  cmd->add_flag("--bb-steps", f.bb_steps, "Barzilai-Borwein trial steps in the optimizer");
  cmd->add_flag("--oracle-cv", f.oracle_cv, "Select hyperparameters by CA against the full truth (benchmark only)");
  cmd->add_option("--max-iters", f.max_iters, "Optimizer iteration budget");
  cmd->add_option("--landmark-fractions", f.landmark_fractions, "Nystrom landmark fractions to cross-validate");
  cmd->add_option("--rank-fractions", f.rank_fractions, "Rank fractions to cross-validate");
}

cvkt::RunConfig resolve(const CommonFlags& f) {
  cvkt::RunConfig cfg = f.config.empty() ? cvkt::RunConfig{} : cvkt::load_run_config(f.config);
  if (f.seed) cfg.set_seed(*f.seed);
  if (f.threads) cfg.threads = *f.threads;
  if (f.method) cfg.method = cvkt::parse_method(*f.method);
  if (f.no_postprocess) cfg.postprocess = false;
  if (f.postprocess_range) cfg.postprocess_range = cvkt::parse_postprocess_range(*f.postprocess_range);
  if (f.bb_steps) cfg.optimizer.bb_steps = true;
  if (f.oracle_cv) cfg.oracle_cv = true;
  if (f.max_iters) cfg.optimizer.max_iters = *f.max_iters;
  if (f.landmark_fractions) cfg.grid.landmark_fractions = *f.landmark_fractions;
  if (f.rank_fractions) cfg.grid.rank_fractions = *f.rank_fractions;
  return cfg;
}

void print_warnings(const cvkt::MethodRun& run) {
  for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view kernel transfer: multi-view kernel completion"};
  app.require_subcommand(1);

  // simulate
  cvkt::SimConfig sim;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Generate a switching-VAR multi-view dataset");
  simulate->add_option("--out", sim_out, "Output dataset directory")->required();
  simulate->add_option("--n", sim.n, "Number of samples");
  simulate->add_option("--views", sim.V, "Number of views");
  simulate->add_option("--series-dim", sim.series_dim, "VAR dimension");
  simulate->add_option("--window-width", sim.window_width, "Columns per view");
  simulate->add_option("--period", sim.period, "Parameter switching period");
  simulate->add_option("--a", sim.missing_a, "Views to drop per sample (0 keeps masks full)");
  simulate->add_option("--seed", sim.seed, "Random seed");

  // mask
  std::string mask_in, mask_out;
  std::optional<int> mask_a;
  std::optional<double> mask_fraction;
  std::uint64_t mask_seed = 0;
  auto* mask = app.add_subcommand("mask", "Remove samples from views of a dataset");
  mask->add_option("--in", mask_in, "Input dataset directory")->required();
  mask->add_option("--out", mask_out, "Output dataset directory")->required();
  auto* a_opt = mask->add_option("--a", mask_a, "Drop exactly a views per sample");
  auto* p_opt = mask->add_option("--fraction", mask_fraction, "Drop this fraction of all (view, sample) cells");
  a_opt->excludes(p_opt);
  mask->add_option("--seed", mask_seed, "Random seed");

  // complete
  CommonFlags complete_flags;
  std::string complete_dataset, complete_out;
  auto* complete = app.add_subcommand("complete", "Complete the missing kernel entries of a dataset");
  complete->add_option("--dataset", complete_dataset, "Masked dataset directory");
  complete->add_option("--out", complete_out, "Output directory");
  add_run_flags(complete, complete_flags);

  // evaluate
  std::string eval_pred, eval_truth, eval_masked, eval_out;
  std::string eval_method = "cvkt";
  auto* evaluate = app.add_subcommand("evaluate", "Score predicted kernels against the truth");
  evaluate->add_option("--pred", eval_pred, "Directory written by `complete`")->required();
  evaluate->add_option("--truth", eval_truth, "Uncorrupted dataset directory")->required();
  evaluate->add_option("--masked", eval_masked, "Masked dataset directory (defines missing rows)")->required();
  evaluate->add_option("--out", eval_out, "Write results.csv/results.txt here");
  evaluate->add_option("--method", eval_method, "Method name for the result rows");

  // benchmark
  CommonFlags bench_flags;
  std::string bench_dataset, bench_truth, bench_out;
  auto* benchmark = app.add_subcommand("benchmark", "Complete, score and tabulate in one run");
  benchmark->add_option("--dataset", bench_dataset, "Masked dataset directory");
  benchmark->add_option("--truth", bench_truth, "Uncorrupted dataset directory")->required();
  benchmark->add_option("--out", bench_out, "Output directory");
  add_run_flags(benchmark, bench_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      cvkt::MultiViewDataset ds = cvkt::simulate_var_multiview(sim);
      if (sim.missing_a > 0) ds = cvkt::apply_missingness(ds, cvkt::MissingMode::per_sample(sim.missing_a), cvkt::derive_seed(sim.seed, 1));
      cvkt::save_dataset(ds, sim_out);
      std::cout << "wrote " << ds.V() << " views x " << ds.n << " samples to " << sim_out << '\n';
    } else if (*mask) {
      if (!mask_a && !mask_fraction) throw cvkt::config_error("mask needs --a or --fraction");
      const cvkt::MultiViewDataset ds = cvkt::load_dataset(mask_in);
      const auto mode = mask_a ? cvkt::MissingMode::per_sample(*mask_a) : cvkt::MissingMode::total_fraction(*mask_fraction);
      cvkt::save_dataset(cvkt::apply_missingness(ds, mode, mask_seed), mask_out);
      std::cout << "wrote masked dataset to " << mask_out << '\n';
    } else if (*complete) {
      cvkt::RunConfig cfg = resolve(complete_flags);
      if (!complete_dataset.empty()) cfg.dataset_dir = complete_dataset;
      if (!complete_out.empty()) cfg.output_dir = complete_out;
      if (cfg.dataset_dir.empty() || cfg.output_dir.empty()) throw cvkt::config_error("complete needs --dataset and --out");
      if (cfg.oracle_cv) throw cvkt::config_error("--oracle-cv needs the truth; use `benchmark`");
      const cvkt::MultiViewDataset ds = cvkt::load_dataset(cfg.dataset_dir);
      const cvkt::MethodRun run = cvkt::run_method(ds, cfg);
      print_warnings(run);
      cvkt::write_predictions(run, cfg.output_dir);
      std::cout << "wrote predictions to " << cfg.output_dir.string() << '\n';
    } else if (*evaluate) {
      const cvkt::MultiViewDataset pred = cvkt::load_dataset(eval_pred);
      const cvkt::MultiViewDataset truth = cvkt::load_dataset(eval_truth);
      const cvkt::MultiViewDataset masked = cvkt::load_dataset(eval_masked);
      const cvkt::Method method = cvkt::parse_method(eval_method);
      const cvkt::MetricReport report = cvkt::evaluate_predictions(pred.kernels(), truth, masked);
      const std::string table = cvkt::format_results_table(method, report);
      std::cout << table;
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        cvkt::write_results_csv(fs::path(eval_out) / "results.csv", method, report);
        std::ofstream(fs::path(eval_out) / "results.txt") << table;
      }
    } else if (*benchmark) {
      cvkt::RunConfig cfg = resolve(bench_flags);
      if (!bench_dataset.empty()) cfg.dataset_dir = bench_dataset;
      if (!bench_out.empty()) cfg.output_dir = bench_out;
      if (cfg.dataset_dir.empty()) throw cvkt::config_error("benchmark needs --dataset");
      const cvkt::BenchmarkResult res = cvkt::run_benchmark(cfg, bench_truth);
      print_warnings(res.run);
      std::cout << res.table;
    }
  } catch (const cvkt::error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
