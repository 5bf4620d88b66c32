#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cvkt/errors.hpp"

namespace cvkt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Ascending list of sample indices.
using IndexSet = std::vector<Index>;

inline constexpr double kDegenerateNorm = 1e-12;

inline IndexSet all_indices(Index n) {
  IndexSet out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

inline IndexSet complement(const IndexSet& set, Index n) {
  IndexSet out;
  std::size_t k = 0;
  for (Index i = 0; i < n; ++i) {
    if (k < set.size() && set[k] == i) {
      ++k;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

inline IndexSet intersect(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// Kernel function description. A gamma of zero on rbf/chi2 selects the
/// median heuristic over the observed rows of the input.
struct KernelSpec {
  enum class Kind { linear, rbf, chi2, sum };

  Kind kind = Kind::linear;
  double gamma = 0.0;
  std::vector<KernelSpec> terms;
  std::vector<double> weights;

  static KernelSpec linear() { return {}; }
  static KernelSpec rbf(double gamma = 0.0) { return {Kind::rbf, gamma, {}, {}}; }
  static KernelSpec chi2(double gamma = 0.0) { return {Kind::chi2, gamma, {}, {}}; }
  static KernelSpec sum(std::vector<KernelSpec> terms, std::vector<double> weights) {
    return {Kind::sum, 0.0, std::move(terms), std::move(weights)};
  }

  void validate() const {
    switch (kind) {
      case Kind::linear:
        return;
      case Kind::rbf:
      case Kind::chi2:
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
          throw argument_error("kernel gamma must be positive (or 0 for the median heuristic)");
        }
        return;
      case Kind::sum:
        if (terms.empty()) throw argument_error("sum kernel needs at least one term");
        if (terms.size() != weights.size()) throw argument_error("sum kernel terms/weights length mismatch");
        for (double w : weights) {
          if (!(w >= 0.0)) throw argument_error("sum kernel weights must be nonnegative");
        }
        for (const auto& t : terms) t.validate();
        return;
    }
  }
};

inline std::string to_string(KernelSpec::Kind kind) {
  switch (kind) {
    case KernelSpec::Kind::linear: return "linear";
    case KernelSpec::Kind::rbf: return "rbf";
    case KernelSpec::Kind::chi2: return "chi2";
    case KernelSpec::Kind::sum: return "sum";
  }
  return "unknown";
}

/// Symmetric n x n kernel matrix. Entries outside the observed rows/columns
/// hold NaN and are never read by computations.
struct KernelMatrix {
  MatrixXd values;
  IndexSet observed;

  Index n() const { return values.rows(); }
  bool fully_observed() const { return static_cast<Index>(observed.size()) == n(); }
  IndexSet missing() const { return complement(observed, n()); }
  MatrixXd observed_block() const { return values(observed, observed); }

  static KernelMatrix full(MatrixXd values) {
    KernelMatrix k;
    k.observed = all_indices(values.rows());
    k.values = std::move(values);
    return k;
  }

  /// Keeps `values` on observed x observed and writes NaN everywhere else.
  static KernelMatrix masked(const MatrixXd& values, IndexSet observed) {
    if (values.rows() != values.cols()) throw dimension_error("kernel matrix must be square");
    for (std::size_t i = 0; i < observed.size(); ++i) {
      if (observed[i] < 0 || observed[i] >= values.rows()) throw bounds_error("observed index out of range");
      if (i > 0 && observed[i] <= observed[i - 1]) throw argument_error("observed indices must be strictly ascending");
    }
    KernelMatrix k;
    k.values = MatrixXd::Constant(values.rows(), values.cols(), std::numeric_limits<double>::quiet_NaN());
    k.values(observed, observed) = values(observed, observed);
    k.observed = std::move(observed);
    return k;
  }
};

/// Smallest and largest eigenvalue of a symmetric matrix.
inline std::pair<double, double> eigen_range(const MatrixXd& sym) {
  if (sym.size() == 0) return {0.0, 0.0};
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Checks symmetry (1e-10 relative) and PSD (1e-8 relative) on the observed block.
inline void validate_kernel(const KernelMatrix& k, double sym_tol = 1e-10, double psd_tol = 1e-8) {
  if (k.values.rows() != k.values.cols()) throw validation_error("kernel matrix must be square");
  const MatrixXd block = k.observed_block();
  if (!block.allFinite()) throw validation_error("observed block contains non-finite entries");
  const double scale = std::max(block.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((block - block.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) {
    throw validation_error("observed block is not symmetric");
  }
  const auto [lo, hi] = eigen_range(0.5 * (block + block.transpose()));
  if (lo < -psd_tol * std::max(hi, 0.0)) {
    throw validation_error("observed block is not positive semidefinite (min eigenvalue " + std::to_string(lo) + ")");
  }
}

namespace detail {

inline double squared_distance(const MatrixXd& X, Index i, Index j) {
  return (X.row(i) - X.row(j)).squaredNorm();
}

inline double chi2_distance(const MatrixXd& X, Index i, Index j) {
  double acc = 0.0;
  for (Index c = 0; c < X.cols(); ++c) {
    const double a = X(i, c);
    const double b = X(j, c);
    const double s = a + b;
    if (s != 0.0) acc += (a - b) * (a - b) / s;
  }
  return acc;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

template <class Distance>
double median_gamma(const MatrixXd& X, const IndexSet& rows, Distance dist) {
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) d.push_back(dist(X, rows[a], rows[b]));
  }
  const double med = median(std::move(d));
  if (!(med > 0.0)) return 1.0 / static_cast<double>(X.cols());
  return 1.0 / (static_cast<double>(X.cols()) * med);
}

inline MatrixXd gram_on(const MatrixXd& X, const IndexSet& rows, const KernelSpec& spec) {
  const Index n = X.rows();
  MatrixXd K = MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  switch (spec.kind) {
    case KernelSpec::Kind::linear: {
      const MatrixXd Xo = X(rows, Eigen::all);
      K(rows, rows) = Xo * Xo.transpose();
      break;
    }
    case KernelSpec::Kind::rbf:
    case KernelSpec::Kind::chi2: {
      const bool rbf = spec.kind == KernelSpec::Kind::rbf;
      const auto dist = rbf ? &squared_distance : &chi2_distance;
      const double gamma = spec.gamma > 0.0 ? spec.gamma : median_gamma(X, rows, dist);
      for (std::size_t a = 0; a < rows.size(); ++a) {
        K(rows[a], rows[a]) = 1.0;
        for (std::size_t b = a + 1; b < rows.size(); ++b) {
          const double v = std::exp(-gamma * dist(X, rows[a], rows[b]));
          K(rows[a], rows[b]) = v;
          K(rows[b], rows[a]) = v;
        }
      }
      break;
    }
    case KernelSpec::Kind::sum: {
      MatrixXd acc = MatrixXd::Zero(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
      for (std::size_t t = 0; t < spec.terms.size(); ++t) {
        acc += spec.weights[t] * gram_on(X, rows, spec.terms[t])(rows, rows);
      }
      K(rows, rows) = acc;
      break;
    }
  }
  return K;
}

inline bool uses_chi2(const KernelSpec& spec) {
  if (spec.kind == KernelSpec::Kind::chi2) return true;
  return std::any_of(spec.terms.begin(), spec.terms.end(), uses_chi2);
}

}  // namespace detail

/// Gram matrix of the rows of X. Rows containing NaN are treated as
/// unobserved samples: their kernel rows/columns are NaN and they are left
/// out of the observed set (and of the median bandwidth heuristic).
inline KernelMatrix gram_matrix(const MatrixXd& X, const KernelSpec& spec) {
  if (X.rows() == 0 || X.cols() == 0) throw dimension_error("gram_matrix: empty feature matrix");
  spec.validate();
  IndexSet rows;
  for (Index i = 0; i < X.rows(); ++i) {
    if (X.row(i).allFinite()) rows.push_back(i);
  }
  if (detail::uses_chi2(spec)) {
    for (Index i : rows) {
      if ((X.row(i).array() < 0.0).any()) throw domain_error("chi2 kernel requires nonnegative features");
    }
  }
  KernelMatrix k;
  k.values = detail::gram_on(X, rows, spec);
  k.observed = std::move(rows);
  return k;
}

/// C M C with C = I - 11^T/n, applied as row/column/grand mean corrections.
inline MatrixXd center(const MatrixXd& M) {
  if (M.rows() != M.cols()) throw dimension_error("center: matrix must be square");
  if (M.size() == 0) return M;
  const VectorXd row_means = M.rowwise().mean();
  const Eigen::RowVectorXd col_means = M.colwise().mean();
  const double grand = M.mean();
  MatrixXd out = M;
  out.colwise() -= row_means;
  out.rowwise() -= col_means;
  out.array() += grand;
  return out;
}

/// Centered kernel alignment <M_c, N_c>_F / (|M_c|_F |N_c|_F).
inline double alignment(const MatrixXd& M, const MatrixXd& N) {
  if (M.rows() != M.cols() || N.rows() != N.cols()) throw dimension_error("alignment: matrices must be square");
  if (M.rows() != N.rows()) throw dimension_error("alignment: size mismatch");
  const MatrixXd Mc = center(M);
  const MatrixXd Nc = center(N);
  const double nm = Mc.norm();
  const double nn = Nc.norm();
  if (nm < kDegenerateNorm || nn < kDegenerateNorm) {
    throw degenerate_input_error("alignment: centered matrix has (near) zero norm");
  }
  return std::clamp(Mc.cwiseProduct(Nc).sum() / (nm * nn), -1.0, 1.0);
}

/// Fixed-weight sum of kernels. Only entries observed in every input stay valid.
inline KernelMatrix combine_kernels(const std::vector<KernelMatrix>& kernels, const std::vector<double>& weights) {
  if (kernels.empty()) throw argument_error("combine_kernels: empty kernel list");
  if (kernels.size() != weights.size()) throw argument_error("combine_kernels: kernels/weights length mismatch");
  const Index n = kernels.front().n();
  IndexSet observed = kernels.front().observed;
  for (std::size_t v = 0; v < kernels.size(); ++v) {
    if (kernels[v].values.rows() != n || kernels[v].values.cols() != n) {
      throw dimension_error("combine_kernels: kernel sizes differ");
    }
    if (!(weights[v] >= 0.0)) throw argument_error("combine_kernels: weights must be nonnegative");
    observed = intersect(observed, kernels[v].observed);
  }
  MatrixXd block = MatrixXd::Zero(static_cast<Index>(observed.size()), static_cast<Index>(observed.size()));
  for (std::size_t v = 0; v < kernels.size(); ++v) block += weights[v] * kernels[v].values(observed, observed);
  KernelMatrix out;
  out.values = MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  out.values(observed, observed) = block;
  out.observed = std::move(observed);
  return out;
}

}  // namespace cvkt
