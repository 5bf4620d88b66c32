#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cvkt/kernels.hpp"

namespace cvkt {

/// One view: either raw features (n x d, evaluated with `spec`) or a
/// precomputed n x n kernel.
struct View {
  std::optional<MatrixXd> features;
  std::optional<MatrixXd> kernel;
  KernelSpec spec = KernelSpec::rbf();
};

struct MultiViewDataset {
  Index n = 0;
  std::vector<View> views;
  std::vector<IndexSet> masks;
  std::optional<std::vector<int>> labels;

  int V() const { return static_cast<int>(views.size()); }

  /// Kernel of view v with entries outside the mask set to NaN.
  KernelMatrix kernel(int v) const {
    const View& view = views.at(static_cast<std::size_t>(v));
    const IndexSet& mask = masks.at(static_cast<std::size_t>(v));
    if (view.kernel) return KernelMatrix::masked(*view.kernel, mask);
    if (!view.features) throw validation_error("view " + std::to_string(v) + " has neither features nor kernel");
    MatrixXd X = MatrixXd::Constant(view.features->rows(), view.features->cols(), std::numeric_limits<double>::quiet_NaN());
    X(mask, Eigen::all) = (*view.features)(mask, Eigen::all);
    KernelMatrix k = gram_matrix(X, view.spec);
    if (k.observed != mask) throw validation_error("view " + std::to_string(v) + " has non-finite features on observed rows");
    return k;
  }

  std::vector<KernelMatrix> kernels() const {
    std::vector<KernelMatrix> out;
    out.reserve(views.size());
    for (int v = 0; v < V(); ++v) out.push_back(kernel(v));
    return out;
  }

  /// Structural checks plus the coverage constraints: every sample observed
  /// in at least one view, every view with at least two observed samples.
  void validate() const {
    if (n < 1) throw validation_error("dataset has no samples");
    if (views.empty()) throw validation_error("dataset has no views");
    if (masks.size() != views.size()) throw validation_error("one mask per view required");
    std::vector<int> coverage(static_cast<std::size_t>(n), 0);
    for (int v = 0; v < V(); ++v) {
      const View& view = views[static_cast<std::size_t>(v)];
      const std::string tag = "view " + std::to_string(v) + ": ";
      if (view.features.has_value() == view.kernel.has_value()) {
        throw validation_error(tag + "exactly one of features or kernel must be present");
      }
      if (view.kernel && (view.kernel->rows() != n || view.kernel->cols() != n)) {
        throw validation_error(tag + "kernel must be n x n");
      }
      if (view.features && view.features->rows() != n) throw validation_error(tag + "features must have n rows");
      const IndexSet& mask = masks[static_cast<std::size_t>(v)];
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] < 0 || mask[i] >= n) {
          throw validation_error(tag + "mask index " + std::to_string(mask[i]) + " out of range [0, " + std::to_string(n) + ")");
        }
        if (i > 0 && mask[i] <= mask[i - 1]) throw validation_error(tag + "mask must be strictly ascending");
        ++coverage[static_cast<std::size_t>(mask[i])];
      }
      if (mask.size() < 2) throw validation_error(tag + "fewer than 2 observed samples");
    }
    for (Index i = 0; i < n; ++i) {
      if (coverage[static_cast<std::size_t>(i)] == 0) {
        throw validation_error("sample " + std::to_string(i) + " is not observed in any view");
      }
    }
    if (labels && static_cast<Index>(labels->size()) != n) throw validation_error("labels must have n entries");
  }
};

}  // namespace cvkt
