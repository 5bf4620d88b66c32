#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

#include "cvkt/kernels.hpp"

namespace cvkt {

/// Explicit embedding of one view: n x m, rows outside `observed` are zero.
struct FeatureBlock {
  MatrixXd values;
  IndexSet observed;
  int view_id = 0;
  /// Samples whose kernel columns span the embedding (all of `observed` for
  /// the empirical map).
  IndexSet landmarks;

  Index n() const { return values.rows(); }
  Index m() const { return values.cols(); }
};

/// Pseudo-inverse square root V diag(s) V^T of a symmetric PSD matrix, where
/// s_i = 1/sqrt(lambda_i) for lambda_i > rel_tol * lambda_max and 0 otherwise.
inline MatrixXd inv_sqrt_psd(const MatrixXd& M, double rel_tol = 1e-10) {
  if (M.rows() != M.cols()) throw dimension_error("inv_sqrt_psd: matrix must be square");
  if (M.size() == 0) return M;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  if (es.info() != Eigen::Success) throw not_psd_error("inv_sqrt_psd: eigendecomposition failed");
  const VectorXd& lambda = es.eigenvalues();
  const double lmax = lambda.maxCoeff();
  if (lmax <= 0.0) {
    if (lambda.minCoeff() < 0.0) throw not_psd_error("inv_sqrt_psd: matrix is negative definite");
    return MatrixXd::Zero(M.rows(), M.cols());
  }
  if (lambda.minCoeff() < -rel_tol * lmax) {
    throw not_psd_error("inv_sqrt_psd: eigenvalue " + std::to_string(lambda.minCoeff()) + " below tolerance");
  }
  VectorXd s(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) s(i) = lambda(i) > rel_tol * lmax ? 1.0 / std::sqrt(lambda(i)) : 0.0;
  const MatrixXd& V = es.eigenvectors();
  MatrixXd out = V * s.asDiagonal() * V.transpose();
  return 0.5 * (out + out.transpose());
}

/// Empirical feature map K_I (K_I)^{-1/2}, zero-padded to n rows.
inline FeatureBlock empirical_features(const KernelMatrix& K, int view_id = 0) {
  const MatrixXd block = K.observed_block();
  FeatureBlock f;
  f.view_id = view_id;
  f.observed = K.observed;
  f.landmarks = K.observed;
  f.values = MatrixXd::Zero(K.n(), static_cast<Index>(K.observed.size()));
  f.values(K.observed, Eigen::all) = block * inv_sqrt_psd(block);
  return f;
}

/// Nystrom features K_{I,P} [K_{P,P}]^{-1/2} for an explicit landmark list P
/// (a subset of the observed samples), zero-padded to n rows.
inline FeatureBlock nystrom_features(const KernelMatrix& K, const IndexSet& landmarks, int view_id = 0) {
  if (K.observed.empty()) throw argument_error("nystrom_features: no observed samples");
  if (landmarks.empty()) throw argument_error("nystrom_features: empty landmark set");
  for (Index p : landmarks) {
    if (!std::binary_search(K.observed.begin(), K.observed.end(), p)) {
      throw argument_error("nystrom_features: landmark " + std::to_string(p) + " is not observed");
    }
  }
  FeatureBlock f;
  f.view_id = view_id;
  f.observed = K.observed;
  f.landmarks = landmarks;
  f.values = MatrixXd::Zero(K.n(), static_cast<Index>(landmarks.size()));
  f.values(K.observed, Eigen::all) = K.values(K.observed, landmarks) * inv_sqrt_psd(K.values(landmarks, landmarks));
  return f;
}

inline Index landmark_count(double fraction, std::size_t observed) {
  // The small slack keeps products like 0.6 * 5 from rounding up past 3.
  return static_cast<Index>(std::ceil(fraction * static_cast<double>(observed) - 1e-9));
}

/// Uniform sample without replacement of ceil(fraction * |I|) observed
/// samples, returned in ascending order.
inline IndexSet sample_landmarks(const IndexSet& observed, double fraction, std::uint64_t seed) {
  if (observed.empty()) throw argument_error("nystrom_features: no observed samples");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw argument_error("nystrom_features: landmark fraction must be in (0, 1]");
  const Index m = landmark_count(fraction, observed.size());
  if (m < 1) throw argument_error("nystrom_features: landmark fraction selects no samples");
  IndexSet pool = observed;
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(m));
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline FeatureBlock nystrom_features(const KernelMatrix& K, double landmark_fraction, std::uint64_t seed, int view_id = 0) {
  return nystrom_features(K, sample_landmarks(K.observed, landmark_fraction, seed), view_id);
}

}  // namespace cvkt
