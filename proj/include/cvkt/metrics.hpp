#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cvkt/kernels.hpp"

namespace cvkt {

struct MetricReport {
  double ca = 0.0;
  std::vector<double> ca_per_view;
  /// NaN for views without missing samples.
  std::vector<double> are_per_view;
  std::vector<double> ssim_per_view;
};

namespace detail {

inline void require_valid(const MatrixXd& M, const char* what) {
  if (!M.allFinite()) throw argument_error(std::string(what) + ": matrix has invalid (non-finite) entries");
}

}  // namespace detail

/// 1 - Tr(K_true K_pred) / (|K_true|_F |K_pred|_F) for one view. Rectangular
/// blocks use the Frobenius inner product in place of the trace.
inline double completion_accuracy_term(const MatrixXd& pred, const MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw dimension_error("completion_accuracy: size mismatch");
  detail::require_valid(pred, "completion_accuracy");
  detail::require_valid(truth, "completion_accuracy");
  const double np = pred.norm();
  const double nt = truth.norm();
  if (np < kDegenerateNorm || nt < kDegenerateNorm) throw degenerate_input_error("completion_accuracy: zero-norm matrix");
  const double inner = truth.rows() == truth.cols() ? (truth * pred).trace() : truth.cwiseProduct(pred).sum();
  return 1.0 - inner / (nt * np);
}

/// Mean over views of the per-view CA term; lower is better.
inline double completion_accuracy(const std::vector<KernelMatrix>& preds, const std::vector<KernelMatrix>& truths) {
  if (preds.size() != truths.size()) throw argument_error("completion_accuracy: list length mismatch");
  if (preds.empty()) throw argument_error("completion_accuracy: no views");
  double acc = 0.0;
  for (std::size_t v = 0; v < preds.size(); ++v) acc += completion_accuracy_term(preds[v].values, truths[v].values);
  return acc / static_cast<double>(preds.size());
}

/// Mean relative l2 error of predicted rows at the missing samples.
inline double average_relative_error(const KernelMatrix& pred, const KernelMatrix& truth, const IndexSet& missing) {
  if (pred.n() != truth.n()) throw dimension_error("average_relative_error: size mismatch");
  if (missing.empty()) throw argument_error("average_relative_error: empty missing set");
  double acc = 0.0;
  for (Index t : missing) {
    if (t < 0 || t >= truth.n()) throw bounds_error("average_relative_error: row index out of range");
    const double denom = truth.values.row(t).norm();
    if (!(denom >= kDegenerateNorm)) {
      throw degenerate_row_error("average_relative_error: truth row " + std::to_string(t) + " has (near) zero norm");
    }
    acc += (pred.values.row(t) - truth.values.row(t)).norm() / denom;
  }
  return acc / static_cast<double>(missing.size());
}

struct SsimOptions {
  Index window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean structural similarity over all w x w windows (stride 1), uniform
/// weights, sample (co)variances. The dynamic range is the range of values
/// over both inputs; a window larger than the matrix shrinks to fit.
inline double ssim(const MatrixXd& pred, const MatrixXd& truth, const SsimOptions& opts = {}) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw dimension_error("ssim: size mismatch");
  if (pred.size() == 0) throw dimension_error("ssim: empty matrix");
  detail::require_valid(pred, "ssim");
  detail::require_valid(truth, "ssim");
  const Index w = std::max<Index>(1, std::min({opts.window, pred.rows(), pred.cols()}));
  double range = std::max(pred.maxCoeff(), truth.maxCoeff()) - std::min(pred.minCoeff(), truth.minCoeff());
  if (!(range > 0.0)) range = 1.0;
  const double c1 = (opts.k1 * range) * (opts.k1 * range);
  const double c2 = (opts.k2 * range) * (opts.k2 * range);
  const double np = static_cast<double>(w * w);
  const double cov_norm = w > 1 ? np / (np - 1.0) : 1.0;

  // Box sums from summed-area tables of mean-shifted data.
  const MatrixXd x = pred.array() - pred.mean();
  const MatrixXd y = truth.array() - truth.mean();
  const double shift_x = pred.mean();
  const double shift_y = truth.mean();
  auto table = [](const MatrixXd& m) {
    MatrixXd s = MatrixXd::Zero(m.rows() + 1, m.cols() + 1);
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) s(i + 1, j + 1) = m(i, j) + s(i, j + 1) + s(i + 1, j) - s(i, j);
    }
    return s;
  };
  const MatrixXd sx = table(x);
  const MatrixXd sy = table(y);
  const MatrixXd sxx = table(x.cwiseProduct(x));
  const MatrixXd syy = table(y.cwiseProduct(y));
  const MatrixXd sxy = table(x.cwiseProduct(y));
  auto box = [w](const MatrixXd& s, Index i, Index j) { return s(i + w, j + w) - s(i, j + w) - s(i + w, j) + s(i, j); };

  double total = 0.0;
  Index count = 0;
  for (Index i = 0; i + w <= pred.rows(); ++i) {
    for (Index j = 0; j + w <= pred.cols(); ++j) {
      const double mx = box(sx, i, j) / np;
      const double my = box(sy, i, j) / np;
      const double vx = cov_norm * (box(sxx, i, j) / np - mx * mx);
      const double vy = cov_norm * (box(syy, i, j) / np - my * my);
      const double vxy = cov_norm * (box(sxy, i, j) / np - mx * my);
      const double ux = mx + shift_x;
      const double uy = my + shift_y;
      total += ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline double ssim(const KernelMatrix& pred, const KernelMatrix& truth, const SsimOptions& opts = {}) {
  return ssim(pred.values, truth.values, opts);
}

/// Each test sample takes the label of the training sample with the largest
/// kernel value (first such training index on ties); returns the hit rate.
inline double kernel_nn_accuracy(const KernelMatrix& K, const std::vector<int>& labels, const IndexSet& train_idx,
                                 const IndexSet& test_idx) {
  if (train_idx.empty() || test_idx.empty()) throw argument_error("kernel_nn_accuracy: empty train or test set");
  if (!intersect(train_idx, test_idx).empty()) throw argument_error("kernel_nn_accuracy: train and test overlap");
  auto check = [&](Index i) {
    if (i < 0 || i >= K.n() || i >= static_cast<Index>(labels.size())) throw bounds_error("kernel_nn_accuracy: index out of range");
  };
  for (Index i : train_idx) check(i);
  int hits = 0;
  for (Index t : test_idx) {
    check(t);
    Index best = train_idx.front();
    double best_value = -std::numeric_limits<double>::infinity();
    for (Index s : train_idx) {
      const double v = K.values(t, s);
      if (v > best_value || (v == best_value && s < best)) {
        best_value = v;
        best = s;
      }
    }
    if (labels[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(t)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_idx.size());
}

}  // namespace cvkt
