#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "cvkt/dataset.hpp"
#include "cvkt/kernels.hpp"

namespace cvkt {

// ---------------------------------------------------------------------------
// Synthetic switching-VAR data

struct SimConfig {
  Index n = 100;
  int V = 7;
  Index series_dim = 14;
  Index window_width = 4;
  Index period = 20;
  int missing_a = 0;
  std::uint64_t seed = 0;
  double spectral_radius = 0.9;
  double noise_std = 0.1;
};

/// Start columns of V windows of the given width spread evenly over
/// `series_dim` columns. Windows are distinct, cover every column and each
/// overlaps its neighbour by at least one column.
inline std::vector<Index> window_starts(Index series_dim, int V, Index width) {
  if (V < 2) throw config_error("simulation needs at least 2 views");
  if (width < 2) throw config_error("view windows must be at least 2 columns wide");
  if (series_dim < width + V - 1) {
    throw config_error("series_dim " + std::to_string(series_dim) + " too small for " + std::to_string(V) +
                       " distinct overlapping windows of width " + std::to_string(width));
  }
  std::vector<Index> starts(static_cast<std::size_t>(V));
  const double span = static_cast<double>(series_dim - width);
  for (int k = 0; k < V; ++k) {
    starts[static_cast<std::size_t>(k)] = static_cast<Index>(std::lround(span * k / (V - 1)));
  }
  for (int k = 1; k < V; ++k) {
    const Index gap = starts[static_cast<std::size_t>(k)] - starts[static_cast<std::size_t>(k - 1)];
    if (gap < 1 || gap > width - 1) throw config_error("window geometry does not give overlapping distinct windows");
  }
  return starts;
}

inline double spectral_radius(const MatrixXd& A) {
  Eigen::EigenSolver<MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct VarSimulation {
  MatrixXd series;
  std::vector<MatrixXd> coefficients;
  std::vector<Index> window_starts;
};

/// x_t = A_p x_{t-1} + eps_t with A_p switching every `period` steps.
inline VarSimulation simulate_var_series(const SimConfig& cfg) {
  if (cfg.n < 2) throw config_error("simulation needs at least 2 samples");
  if (cfg.period < 1) throw config_error("period must be positive");
  if (!(cfg.spectral_radius > 0.0 && cfg.spectral_radius < 1.0)) throw config_error("spectral_radius must be in (0, 1)");
  if (cfg.missing_a < 0 || cfg.missing_a > cfg.V - 1) throw config_error("missing_a must be in [0, V-1]");
  VarSimulation sim;
  sim.window_starts = window_starts(cfg.series_dim, cfg.V, cfg.window_width);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index d = cfg.series_dim;
  const Index regimes = (cfg.n + cfg.period - 1) / cfg.period;
  for (Index p = 0; p < regimes; ++p) {
    MatrixXd A(d, d);
    for (Index j = 0; j < d; ++j) {
      for (Index i = 0; i < d; ++i) A(i, j) = normal(rng);
    }
    A *= cfg.spectral_radius / spectral_radius(A);
    if (!(spectral_radius(A) < 1.0)) throw config_error("generated VAR coefficients are not stable");
    sim.coefficients.push_back(std::move(A));
  }
  sim.series.resize(cfg.n, d);
  VectorXd x(d);
  for (Index i = 0; i < d; ++i) x(i) = normal(rng);
  for (Index t = 0; t < cfg.n; ++t) {
    VectorXd eps(d);
    for (Index i = 0; i < d; ++i) eps(i) = cfg.noise_std * normal(rng);
    x = sim.coefficients[static_cast<std::size_t>(t / cfg.period)] * x + eps;
    sim.series.row(t) = x.transpose();
  }
  return sim;
}

/// Seven-view (by default) RBF dataset over overlapping column windows of a
/// switching VAR series. Masks are full; labels are the regime index.
inline MultiViewDataset simulate_var_multiview(const SimConfig& cfg) {
  const VarSimulation sim = simulate_var_series(cfg);
  MultiViewDataset ds;
  ds.n = cfg.n;
  std::vector<int> labels(static_cast<std::size_t>(cfg.n));
  for (Index t = 0; t < cfg.n; ++t) labels[static_cast<std::size_t>(t)] = static_cast<int>(t / cfg.period);
  ds.labels = std::move(labels);
  for (int v = 0; v < cfg.V; ++v) {
    const MatrixXd X = sim.series.middleCols(sim.window_starts[static_cast<std::size_t>(v)], cfg.window_width);
    View view;
    view.spec = KernelSpec::rbf();
    view.kernel = gram_matrix(X, view.spec).values;
    ds.views.push_back(std::move(view));
    ds.masks.push_back(all_indices(cfg.n));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Missingness

struct MissingMode {
  enum class Kind { per_sample_a, total_fraction };
  Kind kind = Kind::per_sample_a;
  int a = 0;
  double p = 0.0;

  static MissingMode per_sample(int a) { return {Kind::per_sample_a, a, 0.0}; }
  static MissingMode total_fraction(double p) { return {Kind::total_fraction, 0, p}; }
};

namespace detail {

inline bool masks_feasible(const std::vector<std::vector<char>>& observed, Index n) {
  for (const auto& view : observed) {
    if (std::count(view.begin(), view.end(), char{1}) < 2) return false;
  }
  for (Index i = 0; i < n; ++i) {
    bool any = false;
    for (const auto& view : observed) any = any || view[static_cast<std::size_t>(i)];
    if (!any) return false;
  }
  return true;
}

}  // namespace detail

/// Replaces every unobserved kernel entry / feature row with NaN.
inline MultiViewDataset with_masked_values(MultiViewDataset ds) {
  for (int v = 0; v < ds.V(); ++v) {
    View& view = ds.views[static_cast<std::size_t>(v)];
    const IndexSet& mask = ds.masks[static_cast<std::size_t>(v)];
    if (view.kernel) view.kernel = KernelMatrix::masked(*view.kernel, mask).values;
    if (view.features) {
      for (Index i : complement(mask, ds.n)) view.features->row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return ds;
}

/// Removes (view, sample) cells at random, keeping every sample observed in
/// some view and every view with at least two observed samples. Draws are
/// repeated up to 1000 times before giving up.
inline MultiViewDataset apply_missingness(const MultiViewDataset& dataset, const MissingMode& mode, std::uint64_t seed) {
  dataset.validate();
  const Index n = dataset.n;
  const int V = dataset.V();
  std::vector<std::vector<char>> base(static_cast<std::size_t>(V), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (int v = 0; v < V; ++v) {
    for (Index i : dataset.masks[static_cast<std::size_t>(v)]) base[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)] = 1;
  }

  Index to_remove = 0;
  if (mode.kind == MissingMode::Kind::per_sample_a) {
    if (mode.a < 0 || mode.a > V - 1) throw argument_error("missingness: a must be in [0, V-1]");
    if (mode.a == 0) return dataset;
  } else {
    if (!(mode.p >= 0.0 && mode.p < 1.0)) throw argument_error("missingness: fraction must be in [0, 1)");
    to_remove = static_cast<Index>(std::floor(mode.p * static_cast<double>(n) * V));
    if (to_remove == 0) return dataset;
  }

  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto observed = base;
    bool ok = true;
    if (mode.kind == MissingMode::Kind::per_sample_a) {
      for (Index i = 0; i < n && ok; ++i) {
        std::vector<int> views;
        for (int v = 0; v < V; ++v) {
          if (observed[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)]) views.push_back(v);
        }
        if (static_cast<int>(views.size()) <= mode.a) {
          ok = false;
          break;
        }
        std::shuffle(views.begin(), views.end(), rng);
        for (int k = 0; k < mode.a; ++k) observed[static_cast<std::size_t>(views[static_cast<std::size_t>(k)])][static_cast<std::size_t>(i)] = 0;
      }
    } else {
      std::vector<std::pair<int, Index>> cells;
      for (int v = 0; v < V; ++v) {
        for (Index i = 0; i < n; ++i) {
          if (observed[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)]) cells.emplace_back(v, i);
        }
      }
      if (static_cast<Index>(cells.size()) < to_remove) {
        ok = false;
      } else {
        for (Index k = 0; k < to_remove; ++k) {
          std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), cells.size() - 1);
          std::swap(cells[static_cast<std::size_t>(k)], cells[pick(rng)]);
          const auto [v, i] = cells[static_cast<std::size_t>(k)];
          observed[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)] = 0;
        }
      }
    }
    if (!ok || !detail::masks_feasible(observed, n)) continue;

    MultiViewDataset out = dataset;
    for (int v = 0; v < V; ++v) {
      IndexSet mask;
      for (Index i = 0; i < n; ++i) {
        if (observed[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)]) mask.push_back(i);
      }
      out.masks[static_cast<std::size_t>(v)] = std::move(mask);
    }
    return with_masked_values(std::move(out));
  }
  throw infeasible_mask_error("no mask satisfying the coverage constraints found after 1000 draws");
}

// ---------------------------------------------------------------------------
// On-disk format: manifest.json + one CSV per view (+ optional labels.csv)

namespace io {

using nlohmann::json;
namespace fs = std::filesystem;

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view field, const std::string& where) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
  if (field == "nan" || field == "NaN" || field == "-nan") return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size() || field.empty()) {
    throw parse_error(where + ": cannot parse '" + std::string(field) + "' as a number");
  }
  return value;
}

inline void write_csv(const fs::path& path, const MatrixXd& M) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(M(i, j));
    }
    out << '\n';
  }
  if (!out) throw io_error("write failed for " + path.string());
}

inline MatrixXd read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::size_t pos = 0;
    std::size_t field_no = 0;
    while (true) {
      ++field_no;
      const std::size_t comma = line.find(',', pos);
      const std::string_view field(line.data() + pos, (comma == std::string::npos ? line.size() : comma) - pos);
      row.push_back(parse_double(field, path.string() + ":" + std::to_string(line_no) + ", field " + std::to_string(field_no)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw parse_error(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(rows.front().size()) +
                        " fields, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  MatrixXd M(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return M;
}

inline json spec_to_json(const KernelSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  if (spec.kind == KernelSpec::Kind::rbf || spec.kind == KernelSpec::Kind::chi2) j["gamma"] = spec.gamma;
  if (spec.kind == KernelSpec::Kind::sum) {
    j["terms"] = json::array();
    for (std::size_t t = 0; t < spec.terms.size(); ++t) {
      j["terms"].push_back({{"weight", spec.weights[t]}, {"spec", spec_to_json(spec.terms[t])}});
    }
  }
  return j;
}

inline KernelSpec spec_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw parse_error(where + ": expected an object with a string 'kind'");
  }
  const std::string kind = j["kind"].get<std::string>();
  auto gamma = [&]() -> double {
    if (!j.contains("gamma")) return 0.0;
    if (!j["gamma"].is_number()) throw parse_error(where + ".gamma: expected a number");
    return j["gamma"].get<double>();
  };
  KernelSpec spec;
  if (kind == "linear") {
    spec = KernelSpec::linear();
  } else if (kind == "rbf") {
    spec = KernelSpec::rbf(gamma());
  } else if (kind == "chi2") {
    spec = KernelSpec::chi2(gamma());
  } else if (kind == "sum") {
    if (!j.contains("terms") || !j["terms"].is_array()) throw parse_error(where + ".terms: expected an array");
    std::vector<KernelSpec> terms;
    std::vector<double> weights;
    for (std::size_t t = 0; t < j["terms"].size(); ++t) {
      const std::string tw = where + ".terms[" + std::to_string(t) + "]";
      const json& term = j["terms"][t];
      if (!term.is_object() || !term.contains("weight") || !term["weight"].is_number() || !term.contains("spec")) {
        throw parse_error(tw + ": expected {weight, spec}");
      }
      weights.push_back(term["weight"].get<double>());
      terms.push_back(spec_from_json(term["spec"], tw + ".spec"));
    }
    spec = KernelSpec::sum(std::move(terms), std::move(weights));
  } else {
    throw parse_error(where + ".kind: unknown kernel kind '" + kind + "'");
  }
  try {
    spec.validate();
  } catch (const argument_error& e) {
    throw parse_error(where + ": " + e.what());
  }
  return spec;
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw parse_error(path.string() + ": line " + std::to_string(line) + ": " + e.what());
  }
}

inline std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int value = 0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), value);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size()) {
      throw parse_error(path.string() + ":" + std::to_string(line_no) + ": cannot parse label '" + line + "'");
    }
    labels.push_back(value);
  }
  return labels;
}

}  // namespace io

inline void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ds.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
  io::json manifest;
  manifest["n"] = ds.n;
  manifest["V"] = ds.V();
  manifest["views"] = io::json::array();
  for (int v = 0; v < ds.V(); ++v) {
    const View& view = ds.views[static_cast<std::size_t>(v)];
    io::json entry;
    const std::string file = "view" + std::to_string(v) + ".csv";
    if (view.kernel) {
      entry["kernel_csv"] = file;
      io::write_csv(dir / file, *view.kernel);
    } else {
      entry["features_csv"] = file;
      io::write_csv(dir / file, *view.features);
    }
    entry["observed"] = ds.masks[static_cast<std::size_t>(v)];
    entry["kernel_spec"] = io::spec_to_json(view.spec);
    manifest["views"].push_back(std::move(entry));
  }
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw io_error("cannot open " + (dir / "manifest.json").string() + " for writing");
    out << manifest.dump(2) << '\n';
  }
  if (ds.labels) {
    std::ofstream out(dir / "labels.csv");
    if (!out) throw io_error("cannot open " + (dir / "labels.csv").string() + " for writing");
    for (int label : *ds.labels) out << label << '\n';
  } else {
    fs::remove(dir / "labels.csv", ec);
  }
}

inline MultiViewDataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = dir / "manifest.json";
  const io::json manifest = io::read_json_file(manifest_path);
  const std::string where = manifest_path.string();
  if (!manifest.is_object()) throw parse_error(where + ": top level must be an object");
  if (!manifest.contains("n") || !manifest["n"].is_number_integer()) throw parse_error(where + ": field 'n' must be an integer");
  if (!manifest.contains("views") || !manifest["views"].is_array()) throw parse_error(where + ": field 'views' must be an array");

  MultiViewDataset ds;
  ds.n = manifest["n"].get<Index>();
  if (manifest.contains("V")) {
    if (!manifest["V"].is_number_integer()) throw parse_error(where + ": field 'V' must be an integer");
    if (manifest["V"].get<std::size_t>() != manifest["views"].size()) {
      throw parse_error(where + ": field 'V' disagrees with the number of views");
    }
  }
  for (std::size_t v = 0; v < manifest["views"].size(); ++v) {
    const io::json& entry = manifest["views"][v];
    const std::string vw = where + ": views[" + std::to_string(v) + "]";
    if (!entry.is_object()) throw parse_error(vw + ": expected an object");
    const bool has_kernel = entry.contains("kernel_csv");
    const bool has_features = entry.contains("features_csv");
    if (has_kernel == has_features) throw parse_error(vw + ": exactly one of kernel_csv or features_csv required");
    const char* key = has_kernel ? "kernel_csv" : "features_csv";
    if (!entry[key].is_string()) throw parse_error(vw + "." + key + ": expected a file name");
    const fs::path file = dir / entry[key].get<std::string>();
    if (!fs::exists(file)) throw io_error(vw + ": referenced file " + file.string() + " does not exist");

    if (!entry.contains("observed") || !entry["observed"].is_array()) throw parse_error(vw + ".observed: expected an array");
    IndexSet mask;
    for (std::size_t k = 0; k < entry["observed"].size(); ++k) {
      const io::json& idx = entry["observed"][k];
      if (!idx.is_number_integer()) throw parse_error(vw + ".observed[" + std::to_string(k) + "]: expected an integer");
      mask.push_back(idx.get<Index>());
    }

    View view;
    if (entry.contains("kernel_spec")) view.spec = io::spec_from_json(entry["kernel_spec"], vw + ".kernel_spec");
    MatrixXd M = io::read_csv(file);
    if (has_kernel) {
      view.kernel = std::move(M);
    } else {
      view.features = std::move(M);
    }
    ds.views.push_back(std::move(view));
    ds.masks.push_back(std::move(mask));
  }
  if (fs::exists(dir / "labels.csv")) ds.labels = io::read_labels(dir / "labels.csv");
  ds.validate();
  return ds;
}

}  // namespace cvkt
