#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace cvkt;
using namespace cvkt::testing;

namespace {

FeatureBlock block_of(MatrixXd values, int view_id) {
  FeatureBlock f;
  f.observed = all_indices(values.rows());
  f.values = std::move(values);
  f.view_id = view_id;
  return f;
}

}  // namespace

TEST(AssemblePsi, ConcatenatesOtherViewsInOrder) {
  std::mt19937_64 rng(31);
  std::vector<FeatureBlock> blocks{block_of(random_normal(8, 2, rng), 0), block_of(random_normal(8, 3, rng), 1),
                                   block_of(random_normal(8, 4, rng), 2)};
  const FeatureBlock psi = assemble_psi(blocks, 1);
  EXPECT_EQ(psi.m(), 6);
  EXPECT_EQ(psi.n(), 8);
  EXPECT_EQ(psi.values.leftCols(2), blocks[0].values);
  EXPECT_EQ(psi.values.rightCols(4), blocks[2].values);

  // Same result when the blocks arrive out of order.
  std::vector<FeatureBlock> shuffled{blocks[2], blocks[1], blocks[0]};
  EXPECT_EQ(assemble_psi(shuffled, 1).values, psi.values);

  const IndexSet rows{7, 1, 4, 2, 5};
  const FeatureBlock psi_I = assemble_psi(blocks, 1, rows);
  EXPECT_EQ(psi_I.n(), 5);
  for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(psi_I.values.row(static_cast<Index>(k)), psi.values.row(rows[k]));
}

TEST(AssemblePsi, ZeroRowsForMissingSourceSamples) {
  std::mt19937_64 rng(32);
  const MatrixXd K2 = random_full_rank_psd(6, rng);
  std::vector<FeatureBlock> blocks{block_of(random_normal(6, 2, rng), 0), block_of(random_normal(6, 2, rng), 1),
                                   empirical_features(KernelMatrix::masked(K2, {0, 1, 2, 4, 5}), 2)};
  const FeatureBlock psi = assemble_psi(blocks, 0);
  EXPECT_TRUE((psi.values.row(3).rightCols(5).array() == 0.0).all());
}

TEST(AssemblePsi, Errors) {
  std::mt19937_64 rng(33);
  std::vector<FeatureBlock> one{block_of(random_normal(4, 2, rng), 0)};
  EXPECT_THROW(assemble_psi(one, 0), argument_error);
  std::vector<FeatureBlock> two{block_of(random_normal(4, 2, rng), 0), block_of(random_normal(4, 2, rng), 1)};
  EXPECT_THROW(assemble_psi(two, 5), argument_error);
  EXPECT_THROW(assemble_psi(two, 0, IndexSet{0, 4}), bounds_error);
  std::vector<FeatureBlock> ragged{block_of(random_normal(4, 2, rng), 0), block_of(random_normal(5, 2, rng), 1)};
  EXPECT_THROW(assemble_psi(ragged, 0), dimension_error);
}

TEST(Objective, ConstructedOptimumHasValueOne) {
  std::mt19937_64 rng(34);
  const MatrixXd P = random_normal(10, 5, rng);
  MatrixXd W = random_normal(5, 2, rng);
  W /= W.norm();
  const MatrixXd K = P * W * W.transpose() * P.transpose();
  const ObjectiveValue ov = objective_and_gradient({W, 0}, block_of(P, 0), K);
  EXPECT_NEAR(ov.value, 1.0, 1e-10);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(35);
  const MatrixXd P = random_normal(6, 4, rng);
  const MatrixXd K = random_psd(6, 3, rng);
  MatrixXd U = random_normal(4, 2, rng);
  U /= U.norm();
  const ObjectiveValue ov = objective_and_gradient({U, 0}, block_of(P, 0), K);
  EXPECT_NEAR(ov.value, objective_oracle(U, P, K), 1e-12);
  EXPECT_LT(max_relative_error(ov.grad, fd_gradient(U, P, K)), 1e-5);
}

TEST(Objective, GradientMatchesFiniteDifferencesOnWideAndTallShapes) {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 3 + static_cast<Index>(rng() % 28);
    const Index M = 2 + static_cast<Index>(rng() % 11);
    const Index r = 1 + static_cast<Index>(rng() % std::min<Index>(M, 6));
    const MatrixXd P = random_normal(n, M, rng);
    const MatrixXd K = random_psd(n, 1 + static_cast<Index>(rng() % n), rng);
    MatrixXd U = random_normal(M, r, rng);
    U /= U.norm();
    const ObjectiveValue ov = objective_and_gradient({U, 0}, block_of(P, 0), K);
    EXPECT_LT(max_relative_error(ov.grad, fd_gradient(U, P, K)), 1e-5) << "n=" << n << " M=" << M << " r=" << r;
    // Degree-zero homogeneity: the gradient is orthogonal to U.
    EXPECT_NEAR(ov.grad.cwiseProduct(U).sum(), 0.0, 1e-10 * std::max(ov.grad.norm(), 1.0));
  }
}

TEST(Objective, DegenerateTransformAndInput) {
  MatrixXd P = MatrixXd::Zero(4, 3);
  P.leftCols(2) << 1, 0, 0, 1, 1, 1, 0, 2;
  std::mt19937_64 rng(37);
  const MatrixXd K = random_psd(4, 2, rng);
  MatrixXd U = MatrixXd::Zero(3, 1);
  U(2, 0) = 1.0;
  EXPECT_THROW(objective_and_gradient({U, 0}, block_of(P, 0), K), degenerate_transform_error);
  EXPECT_THROW(objective_and_gradient({U, 0}, block_of(P, 0), MatrixXd::Ones(4, 4)), degenerate_input_error);
}

TEST(Optimizer, PlantedLowRankReachesAlignmentOne) {
  std::mt19937_64 rng(38);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXd P = random_normal(30, 8, rng);
    MatrixXd W = random_normal(8, 2, rng);
    W /= W.norm();
    const MatrixXd K = P * W * W.transpose() * P.transpose();
    OptimizerOptions opts;
    opts.seed = static_cast<std::uint64_t>(trial);
    const OptimizationResult res = optimize_transfer(block_of(P, 0), K, 2, opts);
    EXPECT_GE(res.trace.back().value, 0.999);
  }
}

TEST(Optimizer, SquareInvertibleFeaturesReachOne) {
  std::mt19937_64 rng(39);
  const MatrixXd P = random_normal(6, 6, rng);
  const MatrixXd K = P * P.transpose();
  const OptimizationResult res = optimize_transfer(block_of(P, 0), K, 6, OptimizerOptions{});
  EXPECT_GE(res.trace.back().value, 0.999);
  const double at_identity = objective_oracle(MatrixXd::Identity(6, 6) / std::sqrt(6.0), P, K);
  EXPECT_NEAR(at_identity, 1.0, 1e-10);
}

TEST(Optimizer, ZeroIterationsReturnsNormalizedStart) {
  std::mt19937_64 rng(40);
  const MatrixXd P = random_normal(10, 4, rng);
  const MatrixXd K = random_psd(10, 3, rng);
  const MatrixXd U0 = 3.0 * random_normal(4, 2, rng);
  OptimizerOptions opts;
  opts.max_iters = 0;
  const OptimizationResult res = optimize_transfer(block_of(P, 0), K, U0, opts);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_LT((res.transfer.values - U0 / U0.norm()).cwiseAbs().maxCoeff(), 1e-15);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_NEAR(res.trace[0].value, objective_oracle(U0, P, K), 1e-12);
}

TEST(Optimizer, SphereAndMonotoneInvariants) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 4 + static_cast<Index>(rng() % 20);
    const Index M = 2 + static_cast<Index>(rng() % 30);
    const Index r = 1 + static_cast<Index>(rng() % M);
    const MatrixXd P = random_normal(n, M, rng);
    const MatrixXd K = random_psd(n, 1 + static_cast<Index>(rng() % n), rng);
    OptimizerOptions opts;
    opts.max_iters = 100;
    opts.seed = static_cast<std::uint64_t>(trial);
    double worst_sphere = 0.0;
    std::vector<double> observed_values;
    const OptimizationResult res = optimize_transfer(block_of(P, 0), K, r, opts, [&](int, const MatrixXd& U, double f) {
      worst_sphere = std::max(worst_sphere, std::abs(U.norm() - 1.0));
      observed_values.push_back(f);
      EXPECT_NEAR(f, objective_oracle(U, P, K), 1e-9);
    });
    EXPECT_LT(worst_sphere, 1e-10);
    EXPECT_LT(std::abs(res.transfer.values.norm() - 1.0), 1e-10);
    for (std::size_t k = 1; k < res.trace.size(); ++k) EXPECT_GE(res.trace[k].value, res.trace[k - 1].value);
    EXPECT_EQ(observed_values.size(), res.trace.size());
    EXPECT_GE(res.trace.back().value, res.trace.front().value);
  }
}

TEST(Optimizer, ScaleOfTargetDoesNotChangeTrace) {
  std::mt19937_64 rng(42);
  const MatrixXd P = random_normal(15, 6, rng);
  const MatrixXd K = random_psd(15, 4, rng);
  OptimizerOptions opts;
  opts.max_iters = 50;
  const OptimizationResult a = optimize_transfer(block_of(P, 0), K, 3, opts);
  const OptimizationResult b = optimize_transfer(block_of(P, 0), 7.5 * K, 3, opts);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) EXPECT_NEAR(a.trace[k].value, b.trace[k].value, 1e-10);
}

TEST(Optimizer, Errors) {
  std::mt19937_64 rng(43);
  const MatrixXd P = random_normal(5, 3, rng);
  EXPECT_THROW(optimize_transfer(block_of(P, 0), MatrixXd::Constant(5, 5, 2.0), 2, OptimizerOptions{}), degenerate_input_error);
  EXPECT_THROW(optimize_transfer(block_of(P, 0), random_psd(5, 2, rng), 4, OptimizerOptions{}), argument_error);
  EXPECT_THROW(optimize_transfer(block_of(P, 0), random_psd(5, 2, rng), 0, OptimizerOptions{}), argument_error);
  OptimizerOptions bad;
  bad.backtrack_factor = 1.0;
  EXPECT_THROW(optimize_transfer(block_of(P, 0), random_psd(5, 2, rng), 2, bad), config_error);
}

TEST(PredictKernel, Examples) {
  const Index M = 4;
  const KernelMatrix K = predict_kernel(block_of(MatrixXd::Identity(M, M), 0), {MatrixXd::Identity(M, M) / 2.0, 0});
  EXPECT_LT((K.values - MatrixXd::Identity(M, M) / 4.0).cwiseAbs().maxCoeff(), 1e-15);

  std::mt19937_64 rng(44);
  const MatrixXd P = random_normal(5, 3, rng);
  const MatrixXd U = random_normal(3, 2, rng);
  const KernelMatrix pred = predict_kernel(block_of(P, 0), {U, 0});
  const MatrixXd Z = P * U;
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < 2; ++k) acc += Z(i, k) * Z(j, k);
      EXPECT_NEAR(pred.values(i, j), acc, 1e-12);
    }
  }
  EXPECT_EQ(pred.values, pred.values.transpose());
  EXPECT_THROW(predict_kernel(block_of(P, 0), {random_normal(4, 2, rng), 0}), dimension_error);
}

TEST(PredictKernel, AlwaysPsd) {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 30);
    const Index M = 1 + static_cast<Index>(rng() % 10);
    const KernelMatrix pred = predict_kernel(block_of(random_normal(n, M, rng), 0), {random_normal(M, 1 + static_cast<Index>(rng() % M), rng), 0});
    const auto [lo, hi] = eigen_range(pred.values);
    EXPECT_GE(lo, -1e-8 * hi);
  }
}

TEST(Postprocess, AffineIdentity) {
  std::mt19937_64 rng(46);
  const MatrixXd K = random_psd(6, 3, rng);
  const PostprocessResult out = postprocess(KernelMatrix::full(K), KernelMatrix::full(K));
  EXPECT_FALSE(out.degenerate);
  EXPECT_LT((out.kernel.values - K).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Postprocess, InvertsAffineDistortion) {
  std::mt19937_64 rng(47);
  const MatrixXd K = random_psd(8, 3, rng);
  const IndexSet obs{0, 1, 2, 3, 4, 5, 6, 7};
  const PostprocessResult out = postprocess(KernelMatrix::full(2.0 * K + MatrixXd::Constant(8, 8, 3.0)), KernelMatrix::masked(K, obs));
  EXPECT_LT((out.kernel.values(obs, obs) - K(obs, obs)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Postprocess, FullRangeModeMatchesKnownRangeAndMean) {
  std::mt19937_64 rng(48);
  const MatrixXd truth = random_psd(10, 4, rng);
  const KernelMatrix ref = KernelMatrix::masked(truth, {0, 2, 3, 5, 7, 8});
  const MatrixXd pred = random_psd(10, 2, rng);
  const PostprocessResult out = postprocess(KernelMatrix::full(pred), ref, PostprocessRange::full_prediction);
  const MatrixXd known = ref.observed_block();
  EXPECT_NEAR(out.kernel.values(ref.observed, ref.observed).mean(), known.mean(), 1e-12);
  EXPECT_NEAR(out.kernel.values.maxCoeff() - out.kernel.values.minCoeff(), known.maxCoeff() - known.minCoeff(), 1e-12);
  EXPECT_EQ(out.kernel.values, out.kernel.values.transpose());
  EXPECT_TRUE(out.kernel.fully_observed());
}

TEST(Postprocess, KnownBlockModeMatchesRangeOnKnownBlock) {
  std::mt19937_64 rng(52);
  const MatrixXd truth = random_psd(10, 4, rng);
  const KernelMatrix ref = KernelMatrix::masked(truth, {1, 2, 4, 6, 9});
  const MatrixXd pred = random_psd(10, 3, rng);
  const PostprocessResult out = postprocess(KernelMatrix::full(pred), ref);
  const MatrixXd known = ref.observed_block();
  const MatrixXd got = out.kernel.values(ref.observed, ref.observed);
  EXPECT_NEAR(got.mean(), known.mean(), 1e-12);
  EXPECT_NEAR(got.maxCoeff() - got.minCoeff(), known.maxCoeff() - known.minCoeff(), 1e-12);
  EXPECT_EQ(out.kernel.values, out.kernel.values.transpose());
  // Affine in the prediction: entries keep their order.
  EXPECT_EQ(out.kernel.values(0, 3) < out.kernel.values(5, 8), pred(0, 3) < pred(5, 8));
}

TEST(Postprocess, KnownBlockModeInvertsDistortionWithHiddenRows) {
  std::mt19937_64 rng(53);
  const MatrixXd K = random_psd(9, 3, rng);
  const KernelMatrix ref = KernelMatrix::masked(K, {0, 1, 3, 4, 6, 8});
  const PostprocessResult out = postprocess(KernelMatrix::full(2.0 * K + MatrixXd::Constant(9, 9, 3.0)), ref);
  EXPECT_LT((out.kernel.values - K).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(parse_postprocess_range("middle"), config_error);
  EXPECT_EQ(parse_postprocess_range(to_string(PostprocessRange::full_prediction)), PostprocessRange::full_prediction);
}

TEST(Postprocess, ConstantPredictionIsDegenerate) {
  std::mt19937_64 rng(49);
  const MatrixXd truth = random_psd(5, 2, rng);
  const KernelMatrix ref = KernelMatrix::masked(truth, {0, 1, 3});
  const PostprocessResult out = postprocess(KernelMatrix::full(MatrixXd::Constant(5, 5, 0.3)), ref);
  EXPECT_TRUE(out.degenerate);
  EXPECT_LT((out.kernel.values.array() - ref.observed_block().mean()).abs().maxCoeff(), 1e-15);
}

TEST(CompleteAll, FullyObservedPassesThrough) {
  SimConfig cfg;
  cfg.n = 20;
  cfg.V = 3;
  cfg.series_dim = 6;
  const MultiViewDataset ds = simulate_var_multiview(cfg);
  std::map<int, ViewConfig> per_view{{0, {}}, {1, {}}, {2, {}}};
  const CompletionReport rep = complete_all(ds, per_view, CompletionOptions{});
  for (int v = 0; v < 3; ++v) {
    EXPECT_FALSE(rep.views[static_cast<std::size_t>(v)].completed);
    EXPECT_EQ(rep.views[static_cast<std::size_t>(v)].predicted.values, ds.kernel(v).values);
  }
}

TEST(CompleteAll, MissingViewConfigIsConfigError) {
  SimConfig cfg;
  cfg.n = 20;
  cfg.V = 3;
  cfg.series_dim = 6;
  const MultiViewDataset ds = simulate_var_multiview(cfg);
  EXPECT_THROW(complete_all(ds, {{0, {}}, {2, {}}}, CompletionOptions{}), config_error);
}

TEST(CompleteAll, RejectsInvalidDatasets) {
  SimConfig cfg;
  cfg.n = 10;
  cfg.V = 2;
  cfg.series_dim = 5;
  MultiViewDataset ds = simulate_var_multiview(cfg);
  ds.masks[0] = {0, 1, 2, 3, 4};
  ds.masks[1] = {0, 1, 2, 3};
  EXPECT_THROW(complete_all(ds, {{0, {}}, {1, {}}}, CompletionOptions{}), validation_error);
  ds.masks[1] = {5, 6, 7, 8, 9};
  ds.masks[0] = {0};
  EXPECT_THROW(complete_all(ds, {{0, {}}, {1, {}}}, CompletionOptions{}), validation_error);
}

TEST(CompleteAll, PlantedSolutionRecoversHiddenRows) {
  const PlantedProblem p = make_planted_problem(7);
  MultiViewDataset ds;
  ds.n = p.truth[0].n();
  for (const auto& k : p.masked) {
    View v;
    v.kernel = k.values;
    ds.views.push_back(v);
    ds.masks.push_back(k.observed);
  }
  CompletionOptions opts;
  opts.postprocess = false;
  opts.optimizer.seed = p.feature_seed;
  const ViewConfig cfg = p.config();
  const CompletionReport rep = complete_all(ds, {{0, cfg}, {1, cfg}, {2, cfg}}, opts);
  EXPECT_TRUE(rep.views[0].completed);
  EXPECT_GE(rep.views[0].train_alignment, 0.99);
  EXPECT_LE(average_relative_error(rep.views[0].predicted, p.truth[0], p.hidden), 0.05);
  EXPECT_FALSE(rep.views[1].completed);
}

TEST(CompleteAll, WarnsWhenSourceSharesNoSamples) {
  std::mt19937_64 rng(50);
  const Index n = 8;
  std::vector<KernelMatrix> kernels{KernelMatrix::masked(random_full_rank_psd(n, rng), {0, 1, 2, 3}),
                                    KernelMatrix::masked(random_full_rank_psd(n, rng), {4, 5, 6, 7}),
                                    KernelMatrix::full(random_full_rank_psd(n, rng))};
  const ViewResult res = complete_view(kernels, 0, ViewConfig{}, CompletionOptions{});
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("source view 1"), std::string::npos);
}

TEST(CompleteAll, SerialAndParallelAgree) {
  SimConfig cfg;
  cfg.n = 30;
  cfg.V = 4;
  cfg.series_dim = 8;
  const MultiViewDataset ds = apply_missingness(simulate_var_multiview(cfg), MissingMode::per_sample(1), 3);
  CompletionOptions opts;
  opts.optimizer.max_iters = 30;
  std::map<int, ViewConfig> per_view;
  for (int v = 0; v < 4; ++v) per_view[v] = {0.6, 0, 0.4};
  const CompletionReport serial = complete_all(ds, per_view, opts);
  opts.threads = 3;
  const CompletionReport parallel = complete_all(ds, per_view, opts);
  for (int v = 0; v < 4; ++v) {
    EXPECT_EQ(serial.views[static_cast<std::size_t>(v)].predicted.values, parallel.views[static_cast<std::size_t>(v)].predicted.values);
  }
}

TEST(CompleteAll, PermutationEquivariance) {
  // Landmarks are passed explicitly so that landmark k of the permuted problem
  // is the image of landmark k of the original; the seeded start then lines up.
  std::mt19937_64 rng(51);
  const Index n = 18;
  std::vector<MatrixXd> truth;
  for (int v = 0; v < 3; ++v) truth.push_back(rbf_matrix(random_normal(n, 2, rng), 0.7));
  const std::vector<IndexSet> masks{{0, 1, 2, 4, 5, 7, 8, 9, 11, 12, 14, 15, 17}, all_indices(n), {1, 2, 3, 5, 6, 7, 9, 10, 12, 13, 16, 17}};

  std::vector<Index> pi(static_cast<std::size_t>(n));  // new index of old sample i
  std::iota(pi.begin(), pi.end(), 0);
  std::shuffle(pi.begin(), pi.end(), rng);
  std::vector<Index> inv(pi.size());
  for (Index i = 0; i < n; ++i) inv[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])] = i;

  auto run = [&](bool permuted) {
    std::vector<KernelMatrix> kernels;
    std::vector<FeatureBlock> sources;
    for (int v = 0; v < 3; ++v) {
      MatrixXd K = truth[static_cast<std::size_t>(v)];
      IndexSet obs = masks[static_cast<std::size_t>(v)];
      IndexSet landmarks = obs;
      if (permuted) {
        MatrixXd Kp(n, n);
        for (Index i = 0; i < n; ++i) {
          for (Index j = 0; j < n; ++j) Kp(pi[static_cast<std::size_t>(i)], pi[static_cast<std::size_t>(j)]) = K(i, j);
        }
        K = Kp;
        for (auto& l : landmarks) l = pi[static_cast<std::size_t>(l)];
        obs = landmarks;
        std::sort(obs.begin(), obs.end());
      }
      kernels.push_back(KernelMatrix::masked(K, obs));
      if (v != 0) sources.push_back(nystrom_features(kernels.back(), landmarks, v));
    }
    CompletionOptions opts;
    opts.optimizer.max_iters = 200;
    return fit_view(sources, kernels[0], 0, ViewConfig{1.0, 3, 1.0}, opts).predicted.values;
  };
  const MatrixXd base = run(false);
  const MatrixXd perm = run(true);
  double worst = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      worst = std::max(worst, std::abs(perm(pi[static_cast<std::size_t>(i)], pi[static_cast<std::size_t>(j)]) - base(i, j)));
    }
  }
  EXPECT_LT(worst, 1e-8);
}
