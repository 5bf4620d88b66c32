#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cvkt/dataset.hpp"
#include "cvkt/features.hpp"
#include "cvkt/kernels.hpp"

namespace cvkt {

/// M x r transform on the unit Frobenius sphere.
struct TransferMatrix {
  MatrixXd values;
  int view_id = 0;

  Index r() const { return values.cols(); }
};

struct OptimizerOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;
  double step_init = 1.0;
  double backtrack_factor = 0.5;
  double armijo_c = 1e-4;
  std::uint64_t seed = 0;
  /// Use the Barzilai-Borwein step of the previous move as the next trial step.
  bool bb_steps = false;

  void validate() const {
    if (max_iters < 0) throw config_error("max_iters must be nonnegative");
    if (!(grad_tol > 0.0)) throw config_error("grad_tol must be positive");
    if (!(step_init > 0.0)) throw config_error("step_init must be positive");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) throw config_error("backtrack_factor must be in (0, 1)");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw config_error("armijo_c must be in (0, 1)");
  }
};

struct TracePoint {
  int iteration = 0;
  double value = 0.0;
};

// ---------------------------------------------------------------------------
// Feature assembly

/// Concatenates every block except `target_view` in ascending view order.
/// With `restrict`, only those rows are kept (in the given order).
inline FeatureBlock assemble_psi(const std::vector<FeatureBlock>& features, int target_view,
                                 const std::optional<IndexSet>& restrict = std::nullopt) {
  if (features.size() < 2) throw argument_error("assemble_psi: at least two views required");
  std::vector<const FeatureBlock*> sources;
  bool found = false;
  const Index n = features.front().n();
  for (const auto& f : features) {
    if (f.n() != n) throw dimension_error("assemble_psi: feature blocks disagree on n");
    if (f.view_id == target_view) {
      found = true;
    } else {
      sources.push_back(&f);
    }
  }
  if (!found) throw argument_error("assemble_psi: target view " + std::to_string(target_view) + " not present");
  if (sources.empty()) throw argument_error("assemble_psi: no source views");
  std::stable_sort(sources.begin(), sources.end(), [](auto* a, auto* b) { return a->view_id < b->view_id; });

  const IndexSet rows = restrict ? *restrict : all_indices(n);
  for (Index i : rows) {
    if (i < 0 || i >= n) throw bounds_error("assemble_psi: row index " + std::to_string(i) + " out of range");
  }
  Index width = 0;
  for (auto* f : sources) width += f->m();

  FeatureBlock psi;
  psi.view_id = target_view;
  psi.values.resize(static_cast<Index>(rows.size()), width);
  Index col = 0;
  for (auto* f : sources) {
    psi.values.middleCols(col, f->m()) = f->values(rows, Eigen::all);
    col += f->m();
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const bool covered = std::any_of(sources.begin(), sources.end(), [&](auto* f) {
      return std::binary_search(f->observed.begin(), f->observed.end(), rows[k]);
    });
    if (covered) psi.observed.push_back(static_cast<Index>(k));
  }
  return psi;
}

// ---------------------------------------------------------------------------
// Alignment objective

/// Centered alignment A(K_I, P U (P U)^T) and its Euclidean gradient in U,
/// for fixed features P = Psi_I and target K_I.
class AlignmentObjective {
public:
  AlignmentObjective(const MatrixXd& psi_I, const MatrixXd& K_I) : P_(psi_I), Kc_(center(K_I)) {
    if (K_I.rows() != K_I.cols()) throw dimension_error("objective: target kernel must be square");
    if (P_.rows() != K_I.rows()) throw dimension_error("objective: Psi_I rows must match target kernel size");
    kc_norm_ = Kc_.norm();
    if (kc_norm_ < kDegenerateNorm) throw degenerate_input_error("objective: target kernel is constant after centering");
  }

  Index input_dim() const { return P_.cols(); }

  double value(const MatrixXd& U) const { return evaluate(U, nullptr); }

  double value_and_gradient(const MatrixXd& U, MatrixXd& grad) const { return evaluate(U, &grad); }

private:
  double evaluate(const MatrixXd& U, MatrixXd* grad) const {
    if (U.rows() != P_.cols()) throw dimension_error("objective: U rows must match Psi_I columns");
    MatrixXd Z = P_ * U;
    Z.rowwise() -= Z.colwise().mean();
    // |C Z Z^T C|_F is computed from whichever of Z^T Z (r x r) or Z Z^T is smaller.
    const bool tall = Z.cols() <= Z.rows();
    const MatrixXd gram = tall ? MatrixXd(Z.transpose() * Z) : MatrixXd(Z * Z.transpose());
    const double g_norm = gram.norm();
    if (g_norm < kDegenerateNorm) throw degenerate_transform_error("objective: transfer kernel is (near) zero");
    const MatrixXd KZ = Kc_ * Z;
    const double inner = KZ.cwiseProduct(Z).sum();
    const double f = inner / (kc_norm_ * g_norm);
    if (grad != nullptr) {
      const MatrixXd GZ = tall ? MatrixXd(Z * gram) : MatrixXd(gram * Z);
      const MatrixXd X = (2.0 / (kc_norm_ * g_norm)) * KZ - (2.0 * f / (g_norm * g_norm)) * GZ;
      *grad = P_.transpose() * X;
    }
    return f;
  }

  MatrixXd P_;
  MatrixXd Kc_;
  double kc_norm_ = 0.0;
};

struct ObjectiveValue {
  double value = 0.0;
  MatrixXd grad;
};

inline ObjectiveValue objective_and_gradient(const TransferMatrix& U, const FeatureBlock& psi_I, const MatrixXd& K_I) {
  AlignmentObjective obj(psi_I.values, K_I);
  ObjectiveValue out;
  out.value = obj.value_and_gradient(U.values, out.grad);
  return out;
}

// ---------------------------------------------------------------------------
// Sphere-constrained ascent

struct OptimizationResult {
  TransferMatrix transfer;
  std::vector<TracePoint> trace;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Called with (iteration, U, objective) for the initial point and after every accepted step.
using IterateObserver = std::function<void(int, const MatrixXd&, double)>;

inline MatrixXd random_sphere_point(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd U(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) U(i, j) = normal(rng);
  }
  return U / U.norm();
}

/// Riemannian gradient ascent with Armijo backtracking, starting from `U0`
/// (normalized onto the sphere first). The trial step of each iteration is
/// the Barzilai-Borwein step of the last move when that is positive, else the
/// previous accepted step grown by 1/backtrack_factor.
///
/// The objective depends on U only through Psi_I U, so when Psi_I is wide the
/// iteration runs in an orthonormal basis Q of its row space: U = Q Y + s W0
/// with W0 the initial component orthogonal to Q. Gradients lie in span(Q),
/// hence only Y and the scalar s move; the iterates equal those of the plain
/// update on U.
inline OptimizationResult optimize_transfer(const FeatureBlock& psi_I, const MatrixXd& K_I, MatrixXd U0,
                                            const OptimizerOptions& opts, const IterateObserver& observer = {}) {
  opts.validate();
  const MatrixXd& P = psi_I.values;
  if (U0.rows() != P.cols() || U0.cols() < 1 || U0.cols() > P.cols()) {
    throw argument_error("optimize_transfer: initial U must be M x r with 1 <= r <= M");
  }
  const double u0_norm = U0.norm();
  if (!(u0_norm > 0.0)) throw argument_error("optimize_transfer: initial U is zero");
  U0 /= u0_norm;

  const bool reduce = P.cols() > P.rows();
  MatrixXd Q;
  MatrixXd W0;
  double w0_sq = 0.0;
  MatrixXd Y;
  if (reduce) {
    Eigen::HouseholderQR<MatrixXd> qr(P.transpose());
    Q = qr.householderQ() * MatrixXd::Identity(P.cols(), P.rows());
    Y = Q.transpose() * U0;
    W0 = U0 - Q * Y;
    w0_sq = W0.squaredNorm();
  } else {
    Y = U0;
  }
  const AlignmentObjective objective(reduce ? MatrixXd(P * Q) : P, K_I);
  double s = 1.0;
  auto full_U = [&]() -> MatrixXd { return reduce ? MatrixXd(Q * Y + s * W0) : Y; };
  auto inner = [&](const MatrixXd& a, double as, const MatrixXd& b, double bs) {
    return a.cwiseProduct(b).sum() + as * bs * w0_sq;
  };

  OptimizationResult res;
  MatrixXd h;
  double f = objective.value_and_gradient(Y, h);
  res.trace.push_back({0, f});
  if (observer) observer(0, U0, f);

  // Riemannian gradient: xi = g - <g, U> U, split into its Y part and W0 coefficient.
  auto riemannian = [&](MatrixXd& xi_Y, double& xi_s) {
    const double c = h.cwiseProduct(Y).sum();
    xi_Y = h - c * Y;
    xi_s = -c * s;
  };
  MatrixXd xi_Y;
  double xi_s = 0.0;
  riemannian(xi_Y, xi_s);

  double step = opts.step_init;
  for (int it = 1; it <= opts.max_iters; ++it) {
    const double xi_sq = inner(xi_Y, xi_s, xi_Y, xi_s);
    res.grad_norm = std::sqrt(xi_sq);
    if (res.grad_norm < opts.grad_tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    MatrixXd cand_Y;
    double cand_s = 0.0;
    double f_candidate = f;
    for (int bt = 0; bt < 60; ++bt) {
      cand_Y = Y + step * xi_Y;
      cand_s = s + step * xi_s;
      const double norm = std::sqrt(inner(cand_Y, cand_s, cand_Y, cand_s));
      cand_Y /= norm;
      cand_s /= norm;
      try {
        f_candidate = objective.value(cand_Y);
      } catch (const degenerate_transform_error&) {
        f_candidate = -std::numeric_limits<double>::infinity();
      }
      if (f_candidate >= f + opts.armijo_c * step * xi_sq) {
        accepted = true;
        break;
      }
      step *= opts.backtrack_factor;
    }
    if (!accepted) break;

    const MatrixXd dY = cand_Y - Y;
    const double ds = cand_s - s;
    const MatrixXd old_xi_Y = xi_Y;
    const double old_xi_s = xi_s;
    Y = std::move(cand_Y);
    s = cand_s;
    f = objective.value_and_gradient(Y, h);
    riemannian(xi_Y, xi_s);
    res.iterations = it;
    res.trace.push_back({it, f});
    if (observer) observer(it, full_U(), f);

    const double ss = inner(dY, ds, dY, ds);
    const double sy = inner(dY, ds, xi_Y - old_xi_Y, xi_s - old_xi_s);
    if (opts.bb_steps && sy < 0.0 && ss > 0.0) {
      step = std::clamp(ss / -sy, 1e-12, 1e12);
    } else {
      step /= opts.backtrack_factor;
    }
  }
  if (!res.converged) {
    res.grad_norm = std::sqrt(inner(xi_Y, xi_s, xi_Y, xi_s));
    res.converged = res.grad_norm < opts.grad_tol;
  }
  res.transfer.values = res.iterations == 0 ? std::move(U0) : full_U();
  res.transfer.view_id = psi_I.view_id;
  return res;
}

/// Same, from a seeded standard-normal start.
inline OptimizationResult optimize_transfer(const FeatureBlock& psi_I, const MatrixXd& K_I, Index r,
                                            const OptimizerOptions& opts, const IterateObserver& observer = {}) {
  if (r < 1 || r > psi_I.m()) {
    throw argument_error("optimize_transfer: rank " + std::to_string(r) + " outside [1, " + std::to_string(psi_I.m()) + "]");
  }
  return optimize_transfer(psi_I, K_I, random_sphere_point(psi_I.m(), r, opts.seed), opts, observer);
}

// ---------------------------------------------------------------------------
// Prediction and post-processing

/// Psi U (Psi U)^T over all n samples.
inline KernelMatrix predict_kernel(const FeatureBlock& psi, const TransferMatrix& U) {
  if (psi.m() != U.values.rows()) throw dimension_error("predict_kernel: Psi columns must match U rows");
  const MatrixXd Z = psi.values * U.values;
  MatrixXd K = MatrixXd::Zero(Z.rows(), Z.rows());
  K.selfadjointView<Eigen::Lower>().rankUpdate(Z);
  K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
  return KernelMatrix::full(std::move(K));
}

struct PostprocessResult {
  KernelMatrix kernel;
  bool degenerate = false;
};

/// Which predicted entries define the source range of the rescale.
enum class PostprocessRange {
  /// Predicted entries on the known block, so both ranges cover the same entries.
  known_block,
  /// Every predicted entry, missing rows included.
  full_prediction,
};

inline std::string to_string(PostprocessRange r) { return r == PostprocessRange::known_block ? "known" : "full"; }

inline PostprocessRange parse_postprocess_range(const std::string& s) {
  if (s == "known") return PostprocessRange::known_block;
  if (s == "full") return PostprocessRange::full_prediction;
  throw config_error("unknown postprocess range '" + s + "' (expected known or full)");
}

/// Affine map of the prediction: a rescale taking the predicted range onto
/// the range of the reference's observed block, then a shift making the means
/// over the observed block agree.
inline PostprocessResult postprocess(const KernelMatrix& pred, const KernelMatrix& reference,
                                     PostprocessRange range = PostprocessRange::known_block) {
  if (pred.n() != reference.n()) throw dimension_error("postprocess: size mismatch");
  if (reference.observed.empty()) throw argument_error("postprocess: reference has no observed block");
  const MatrixXd known = reference.observed_block();
  const double known_mean = known.mean();
  PostprocessResult out;
  out.kernel.observed = all_indices(pred.n());
  const MatrixXd pred_known = pred.values(reference.observed, reference.observed);
  const bool full = range == PostprocessRange::full_prediction;
  const double lo = full ? pred.values.minCoeff() : pred_known.minCoeff();
  const double hi = full ? pred.values.maxCoeff() : pred_known.maxCoeff();
  if (!(hi > lo)) {
    out.kernel.values = MatrixXd::Constant(pred.n(), pred.n(), known_mean);
    out.degenerate = true;
    return out;
  }
  const double scale = (known.maxCoeff() - known.minCoeff()) / (hi - lo);
  MatrixXd K = ((pred.values.array() - lo) * scale + known.minCoeff()).matrix();
  const double shift = known_mean - K(reference.observed, reference.observed).mean();
  K.array() += shift;
  out.kernel.values = std::move(K);
  return out;
}

// ---------------------------------------------------------------------------
// Whole-view and whole-dataset completion

struct ViewConfig {
  double landmark_fraction = 1.0;
  /// Absolute rank; 0 derives it from rank_fraction of Psi_I's width.
  Index rank = 0;
  double rank_fraction = 1.0;
};

struct CompletionOptions {
  OptimizerOptions optimizer;
  bool postprocess = true;
  int threads = 1;
  PostprocessRange postprocess_range = PostprocessRange::known_block;
};

struct ViewResult {
  int view_id = 0;
  KernelMatrix predicted;
  /// Post-processing input, kept for PSD diagnostics.
  KernelMatrix raw_prediction;
  bool completed = false;
  double landmark_fraction = 0.0;
  Index rank = 0;
  double train_alignment = std::numeric_limits<double>::quiet_NaN();
  std::vector<TracePoint> trace;
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

struct CompletionReport {
  std::vector<ViewResult> views;

  std::vector<KernelMatrix> predicted() const {
    std::vector<KernelMatrix> out;
    for (const auto& v : views) out.push_back(v.predicted);
    return out;
  }
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Nystrom features of every view except `target`, at a shared landmark fraction.
inline std::vector<FeatureBlock> source_features(const std::vector<KernelMatrix>& kernels, int target,
                                                 double landmark_fraction, std::uint64_t seed) {
  std::vector<FeatureBlock> out;
  for (int w = 0; w < static_cast<int>(kernels.size()); ++w) {
    if (w == target) continue;
    out.push_back(nystrom_features(kernels[static_cast<std::size_t>(w)], landmark_fraction,
                                   derive_seed(seed, static_cast<std::uint64_t>(w)), w));
  }
  return out;
}

inline Index resolve_rank(const ViewConfig& cfg, Index width) {
  if (cfg.rank > 0) return cfg.rank;
  if (!(cfg.rank_fraction > 0.0 && cfg.rank_fraction <= 1.0)) throw config_error("rank_fraction must be in (0, 1]");
  return std::max<Index>(1, landmark_count(cfg.rank_fraction, static_cast<std::size_t>(width)));
}

/// Learns U for `target` from precomputed source features and predicts its full kernel.
inline ViewResult fit_view(const std::vector<FeatureBlock>& sources, const KernelMatrix& target_kernel, int target,
                           const ViewConfig& cfg, const CompletionOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  ViewResult res;
  res.view_id = target;
  res.landmark_fraction = cfg.landmark_fraction;

  // assemble_psi needs the target present; a placeholder block stands in for it.
  std::vector<FeatureBlock> blocks = sources;
  FeatureBlock placeholder;
  placeholder.view_id = target;
  placeholder.values = MatrixXd::Zero(target_kernel.n(), 1);
  blocks.push_back(std::move(placeholder));

  const FeatureBlock psi_I = assemble_psi(blocks, target, target_kernel.observed);
  const FeatureBlock psi = assemble_psi(blocks, target);
  for (const auto& s : sources) {
    if (intersect(s.observed, target_kernel.observed).empty()) {
      res.warnings.push_back("view " + std::to_string(target) + ": source view " + std::to_string(s.view_id) +
                             " shares no observed samples with the target; its features are all zero in training");
    }
  }
  res.rank = resolve_rank(cfg, psi_I.m());
  if (res.rank > psi_I.m()) {
    throw argument_error("rank " + std::to_string(res.rank) + " exceeds feature width " + std::to_string(psi_I.m()));
  }
  const MatrixXd K_I = target_kernel.observed_block();
  const OptimizationResult opt = optimize_transfer(psi_I, K_I, res.rank, opts.optimizer);
  res.trace = opt.trace;
  res.train_alignment = opt.trace.back().value;
  TransferMatrix U = opt.transfer;
  U.view_id = target;
  res.raw_prediction = predict_kernel(psi, U);
  if (opts.postprocess) {
    PostprocessResult pp = postprocess(res.raw_prediction, target_kernel, opts.postprocess_range);
    if (pp.degenerate) res.warnings.push_back("view " + std::to_string(target) + ": constant prediction, post-processing degenerate");
    res.predicted = std::move(pp.kernel);
  } else {
    res.predicted = res.raw_prediction;
  }
  res.completed = true;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Completes one view of a kernel list. Fully observed views are passed through.
inline ViewResult complete_view(const std::vector<KernelMatrix>& kernels, int target, const ViewConfig& cfg,
                                const CompletionOptions& opts) {
  const KernelMatrix& K = kernels.at(static_cast<std::size_t>(target));
  if (K.observed.size() < 2) throw validation_error("view " + std::to_string(target) + " has fewer than 2 observed samples");
  if (K.fully_observed()) {
    ViewResult res;
    res.view_id = target;
    res.predicted = K;
    res.raw_prediction = K;
    res.completed = false;
    return res;
  }
  CompletionOptions view_opts = opts;
  view_opts.optimizer.seed = opts.optimizer.seed + static_cast<std::uint64_t>(target);
  const auto sources = source_features(kernels, target, cfg.landmark_fraction, view_opts.optimizer.seed);
  return fit_view(sources, K, target, cfg, view_opts);
}

/// Runs fn(0..count-1) on up to `threads` workers; the first exception (by
/// index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  const int workers = std::clamp(threads, 1, std::max(count, 1));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Runs the per-view completion over every view of the dataset.
inline CompletionReport complete_all(const MultiViewDataset& dataset, const std::map<int, ViewConfig>& per_view,
                                     const CompletionOptions& opts) {
  dataset.validate();
  opts.optimizer.validate();
  if (dataset.V() < 2) throw validation_error("completion needs at least two views");
  for (int v = 0; v < dataset.V(); ++v) {
    if (!per_view.count(v)) throw config_error("no configuration for view " + std::to_string(v));
  }
  const std::vector<KernelMatrix> kernels = dataset.kernels();
  for (const auto& k : kernels) validate_kernel(k);

  CompletionReport report;
  report.views.resize(kernels.size());
  parallel_for(dataset.V(), opts.threads, [&](int v) {
    report.views[static_cast<std::size_t>(v)] = complete_view(kernels, v, per_view.at(v), opts);
  });
  return report;
}

}  // namespace cvkt
