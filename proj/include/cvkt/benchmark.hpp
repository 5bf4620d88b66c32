#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cvkt/baselines.hpp"
#include "cvkt/data.hpp"
#include "cvkt/metrics.hpp"
#include "cvkt/modelselect.hpp"
#include "cvkt/transfer.hpp"

namespace cvkt {

enum class Method { cvkt, zero, mean };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::cvkt: return "cvkt";
    case Method::zero: return "zero";
    case Method::mean: return "mean";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  if (s == "cvkt") return Method::cvkt;
  if (s == "zero") return Method::zero;
  if (s == "mean") return Method::mean;
  throw config_error("unknown method '" + s + "' (expected cvkt, zero or mean)");
}

struct RunConfig {
  std::filesystem::path dataset_dir;
  Method method = Method::cvkt;
  CvGrid grid;
  OptimizerOptions optimizer;
  bool postprocess = true;
  PostprocessRange postprocess_range = PostprocessRange::known_block;
  std::filesystem::path output_dir;
  int threads = 1;
  bool oracle_cv = false;

  /// Sets every seed (CV holdouts, landmarks, optimizer starts) from one value.
  void set_seed(std::uint64_t seed) {
    grid.seed = seed;
    optimizer.seed = seed;
  }

  void validate() const {
    if (threads < 1) throw config_error("threads must be at least 1");
    grid.validate();
    optimizer.validate();
  }
};

/// Reads a JSON run configuration; absent fields keep their defaults.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  const io::json j = io::read_json_file(path);
  const std::string where = path.string();
  if (!j.is_object()) throw parse_error(where + ": top level must be an object");
  RunConfig cfg;
  try {
    if (j.contains("dataset_dir")) cfg.dataset_dir = j.at("dataset_dir").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("method")) cfg.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("postprocess")) cfg.postprocess = j.at("postprocess").get<bool>();
    if (j.contains("postprocess_range")) cfg.postprocess_range = parse_postprocess_range(j.at("postprocess_range").get<std::string>());
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("oracle_cv")) cfg.oracle_cv = j.at("oracle_cv").get<bool>();
    if (j.contains("seed")) cfg.set_seed(j.at("seed").get<std::uint64_t>());
    if (j.contains("grid")) {
      const io::json& g = j.at("grid");
      if (g.contains("landmark_fractions")) cfg.grid.landmark_fractions = g.at("landmark_fractions").get<std::vector<double>>();
      if (g.contains("rank_fractions")) cfg.grid.rank_fractions = g.at("rank_fractions").get<std::vector<double>>();
      if (g.contains("holdout_fraction")) cfg.grid.holdout_fraction = g.at("holdout_fraction").get<double>();
      if (g.contains("folds")) cfg.grid.folds = g.at("folds").get<int>();
      if (g.contains("seed")) cfg.grid.seed = g.at("seed").get<std::uint64_t>();
    }
    if (j.contains("optimizer")) {
      const io::json& o = j.at("optimizer");
      if (o.contains("max_iters")) cfg.optimizer.max_iters = o.at("max_iters").get<int>();
      if (o.contains("grad_tol")) cfg.optimizer.grad_tol = o.at("grad_tol").get<double>();
      if (o.contains("step_init")) cfg.optimizer.step_init = o.at("step_init").get<double>();
      if (o.contains("backtrack_factor")) cfg.optimizer.backtrack_factor = o.at("backtrack_factor").get<double>();
      if (o.contains("armijo_c")) cfg.optimizer.armijo_c = o.at("armijo_c").get<double>();
      if (o.contains("seed")) cfg.optimizer.seed = o.at("seed").get<std::uint64_t>();
      if (o.contains("bb_steps")) cfg.optimizer.bb_steps = o.at("bb_steps").get<bool>();
    }
  } catch (const io::json::exception& e) {
    throw parse_error(where + ": " + e.what());
  }
  return cfg;
}

struct MethodRun {
  Method method = Method::cvkt;
  std::vector<KernelMatrix> predicted;
  /// Empty for baselines and pass-through views.
  std::vector<std::vector<TracePoint>> traces;
  std::vector<std::optional<CvResult>> selections;
  std::vector<bool> completed;
  std::vector<std::string> warnings;
};

/// Completes every view of a masked dataset with the configured method.
/// `truth` is consulted only for oracle cross-validation.
inline MethodRun run_method(const MultiViewDataset& masked, const RunConfig& cfg,
                            const MultiViewDataset* truth = nullptr) {
  cfg.validate();
  masked.validate();
  const std::vector<KernelMatrix> kernels = masked.kernels();
  for (const auto& k : kernels) validate_kernel(k);
  const auto V = static_cast<std::size_t>(masked.V());

  MethodRun run;
  run.method = cfg.method;
  run.predicted.resize(V);
  run.traces.resize(V);
  run.selections.resize(V);
  run.completed.assign(V, false);
  if (cfg.method != Method::cvkt) {
    for (std::size_t v = 0; v < V; ++v) {
      run.predicted[v] = cfg.method == Method::zero ? zero_impute(kernels[v]) : mean_impute(kernels[v]);
      run.completed[v] = !kernels[v].fully_observed();
    }
    return run;
  }
  if (V < 2) throw validation_error("cvkt needs at least two views");
  if (cfg.oracle_cv && truth == nullptr) throw config_error("oracle cross-validation needs the true dataset");

  CompletionOptions opts{cfg.optimizer, cfg.postprocess, 1, cfg.postprocess_range};
  std::vector<std::vector<std::string>> warnings(V);
  parallel_for(static_cast<int>(V), cfg.threads, [&](int v) {
    const auto idx = static_cast<std::size_t>(v);
    if (kernels[idx].fully_observed()) {
      run.predicted[idx] = kernels[idx];
      return;
    }
    ViewConfig view_cfg{cfg.grid.landmark_fractions.front(), 0, cfg.grid.rank_fractions.front()};
    if (cfg.grid.size() > 1) {
      std::optional<KernelMatrix> oracle;
      if (cfg.oracle_cv) oracle = truth->kernel(v);
      CvResult sel = cross_validate(kernels, v, cfg.grid, opts, oracle ? &*oracle : nullptr);
      view_cfg = sel.config();
      run.selections[idx] = std::move(sel);
    }
    ViewResult res = complete_view(kernels, v, view_cfg, opts);
    run.predicted[idx] = std::move(res.predicted);
    run.traces[idx] = std::move(res.trace);
    run.completed[idx] = res.completed;
    warnings[idx] = std::move(res.warnings);
  });
  for (auto& w : warnings) run.warnings.insert(run.warnings.end(), w.begin(), w.end());
  return run;
}

/// Per-view CA term, ARE over the masked dataset's missing rows, and SSIM.
inline MetricReport evaluate_predictions(const std::vector<KernelMatrix>& predicted, const MultiViewDataset& truth,
                                         const MultiViewDataset& masked) {
  if (truth.n != masked.n || truth.V() != masked.V()) {
    throw validation_error("truth and masked datasets differ in shape (n " + std::to_string(truth.n) + " vs " +
                           std::to_string(masked.n) + ", V " + std::to_string(truth.V()) + " vs " + std::to_string(masked.V()) + ")");
  }
  if (predicted.size() != static_cast<std::size_t>(truth.V())) throw validation_error("one prediction per view required");
  MetricReport report;
  std::vector<KernelMatrix> truths;
  for (int v = 0; v < truth.V(); ++v) {
    KernelMatrix t = truth.kernel(v);
    if (!t.fully_observed() || !t.values.allFinite()) {
      throw validation_error("truth view " + std::to_string(v) + " is not fully observed");
    }
    const KernelMatrix& p = predicted[static_cast<std::size_t>(v)];
    if (p.n() != t.n()) throw validation_error("prediction for view " + std::to_string(v) + " has the wrong size");
    report.ca_per_view.push_back(completion_accuracy_term(p.values, t.values));
    const IndexSet missing = complement(masked.masks[static_cast<std::size_t>(v)], masked.n);
    report.are_per_view.push_back(missing.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : average_relative_error(p, t, missing));
    report.ssim_per_view.push_back(ssim(p, t));
    truths.push_back(std::move(t));
  }
  report.ca = completion_accuracy(predicted, truths);
  return report;
}

inline double nan_mean(const std::vector<double>& values) {
  double acc = 0.0;
  int count = 0;
  for (double x : values) {
    if (std::isfinite(x)) {
      acc += x;
      ++count;
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : acc / count;
}

namespace detail {

inline std::string fixed3(double x) {
  if (std::isnan(x)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << x;
  return os.str();
}

}  // namespace detail

/// Rows (method, view, ca, are, ssim) plus a final "mean" row.
inline void write_results_csv(const std::filesystem::path& path, Method method, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out << "method,view,ca,are,ssim\n";
  for (std::size_t v = 0; v < report.ca_per_view.size(); ++v) {
    out << to_string(method) << ',' << v << ',' << io::format_double(report.ca_per_view[v]) << ','
        << io::format_double(report.are_per_view[v]) << ',' << io::format_double(report.ssim_per_view[v]) << '\n';
  }
  out << to_string(method) << ",mean," << io::format_double(report.ca) << ',' << io::format_double(nan_mean(report.are_per_view))
      << ',' << io::format_double(nan_mean(report.ssim_per_view)) << '\n';
}

inline std::string format_results_table(Method method, const MetricReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "method" << std::right << std::setw(6) << "view" << std::setw(9) << "CA"
     << std::setw(9) << "ARE" << std::setw(9) << "S.sim" << '\n';
  auto row = [&](const std::string& view, double ca, double are, double s) {
    os << std::left << std::setw(8) << to_string(method) << std::right << std::setw(6) << view << std::setw(9)
       << detail::fixed3(ca) << std::setw(9) << detail::fixed3(are) << std::setw(9) << detail::fixed3(s) << '\n';
  };
  for (std::size_t v = 0; v < report.ca_per_view.size(); ++v) {
    row(std::to_string(v), report.ca_per_view[v], report.are_per_view[v], report.ssim_per_view[v]);
  }
  row("mean", report.ca, nan_mean(report.are_per_view), nan_mean(report.ssim_per_view));
  return os.str();
}

/// Writes pred_view<k>.csv, trace_view<k>.csv and a manifest so the output
/// directory loads back as a (fully observed) dataset.
inline void write_predictions(const MethodRun& run, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
  io::json manifest;
  const auto n = run.predicted.empty() ? Index{0} : run.predicted.front().n();
  manifest["n"] = n;
  manifest["V"] = run.predicted.size();
  manifest["views"] = io::json::array();
  for (std::size_t v = 0; v < run.predicted.size(); ++v) {
    const std::string pred_file = "pred_view" + std::to_string(v) + ".csv";
    io::write_csv(dir / pred_file, run.predicted[v].values);
    manifest["views"].push_back({{"kernel_csv", pred_file}, {"observed", all_indices(n)}, {"kernel_spec", {{"kind", "linear"}}}});
    std::ofstream trace(dir / ("trace_view" + std::to_string(v) + ".csv"));
    if (!trace) throw io_error("cannot write trace for view " + std::to_string(v));
    trace << "iteration,objective\n";
    for (const auto& p : run.traces[v]) trace << p.iteration << ',' << io::format_double(p.value) << '\n';
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw io_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';

  std::ofstream sel(dir / "selection.csv");
  sel << "view,completed,landmark_fraction,rank,cv_score\n";
  for (std::size_t v = 0; v < run.predicted.size(); ++v) {
    sel << v << ',' << (run.completed[v] ? 1 : 0) << ',';
    if (run.selections[v]) {
      sel << io::format_double(run.selections[v]->landmark_fraction) << ',' << run.selections[v]->rank << ','
          << io::format_double(run.selections[v]->score);
    } else {
      sel << ",,";
    }
    sel << '\n';
  }
}

struct BenchmarkResult {
  MethodRun run;
  MetricReport metrics;
  std::string table;
};

/// Completes the masked dataset, scores it against the truth and writes
/// predictions, traces, results.csv and results.txt to cfg.output_dir.
inline BenchmarkResult run_benchmark(const RunConfig& cfg, const std::filesystem::path& truth_dir) {
  const MultiViewDataset masked = load_dataset(cfg.dataset_dir);
  const MultiViewDataset truth = load_dataset(truth_dir);
  if (truth.n != masked.n || truth.V() != masked.V()) {
    throw validation_error("truth and masked datasets differ in shape (n " + std::to_string(truth.n) + " vs " +
                           std::to_string(masked.n) + ", V " + std::to_string(truth.V()) + " vs " + std::to_string(masked.V()) + ")");
  }
  BenchmarkResult res;
  res.run = run_method(masked, cfg, &truth);
  res.metrics = evaluate_predictions(res.run.predicted, truth, masked);
  res.table = format_results_table(cfg.method, res.metrics);
  if (!cfg.output_dir.empty()) {
    write_predictions(res.run, cfg.output_dir);
    write_results_csv(cfg.output_dir / "results.csv", cfg.method, res.metrics);
    std::ofstream txt(cfg.output_dir / "results.txt");
    txt << res.table;
  }
  return res;
}

}  // namespace cvkt
