#pragma once

#include "cvkt/kernels.hpp"

namespace cvkt {

/// Missing rows/columns set to zero; observed block untouched.
inline KernelMatrix zero_impute(const KernelMatrix& K) {
  KernelMatrix out;
  out.values = MatrixXd::Zero(K.n(), K.n());
  out.values(K.observed, K.observed) = K.values(K.observed, K.observed);
  out.observed = all_indices(K.n());
  return out;
}

/// Missing rows/columns set to the mean of the observed block (diagonal included).
inline KernelMatrix mean_impute(const KernelMatrix& K) {
  if (K.observed.empty()) throw argument_error("mean_impute: empty observed block");
  const MatrixXd block = K.observed_block();
  KernelMatrix out;
  out.values = MatrixXd::Constant(K.n(), K.n(), block.mean());
  out.values(K.observed, K.observed) = block;
  out.observed = all_indices(K.n());
  return out;
}

}  // namespace cvkt
