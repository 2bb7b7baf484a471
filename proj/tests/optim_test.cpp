#include "rvae/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fd_oracle.hpp"
#include "rvae/data.hpp"

namespace rvae {
namespace {

using testing::random_tensor;

void step(Tensor& p, const Tensor& g, AdamState& s) {
  Tensor* ptrs[] = {&p};
  const Tensor grads[] = {g};
  adam_step(ptrs, grads, s);
}

AdamState state_for(const Tensor& p, AdamOptions o = {}) {
  const Tensor* ptrs[] = {&p};
  return AdamState::zeros_like(ptrs, o);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  std::mt19937_64 rng(1);
  Tensor p = random_tensor({3, 4}, rng);
  const Tensor before = p;
  auto s = state_for(p);
  for (int i = 0; i < 10; ++i) step(p, Tensor::zeros({3, 4}), s);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.t, 10u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::vector({2.0});
  auto s = state_for(p);
  step(p, Tensor::vector({1.0}), s);
  EXPECT_NEAR(2.0 - p[0], 1e-3, 1e-10);
  // Bias correction makes the first step independent of gradient scale.
  Tensor q = Tensor::vector({2.0});
  auto s2 = state_for(q);
  step(q, Tensor::vector({250.0}), s2);
  EXPECT_NEAR(2.0 - q[0], 1e-3, 1e-10);
}

TEST(Adam, MatchesIndependentRecurrence) {
  std::mt19937_64 rng(2);
  const AdamOptions o{0.01, 0.8, 0.99, 1e-6};
  Tensor p = random_tensor({5}, rng);
  std::vector<double> theta(p.values()), m(5, 0.0), v(5, 0.0);
  auto s = state_for(p, o);
  for (int t = 1; t <= 25; ++t) {
    Tensor g = random_tensor({5}, rng, -2, 2);
    step(p, g, s);
    for (int k = 0; k < 5; ++k) {
      m[k] = 0.8 * m[k] + 0.2 * g[k];
      v[k] = 0.99 * v[k] + 0.01 * g[k] * g[k];
      const double mh = m[k] / (1 - std::pow(0.8, t)), vh = v[k] / (1 - std::pow(0.99, t));
      theta[k] -= 0.01 * mh / (std::sqrt(vh) + 1e-6);
    }
  }
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(p[k], theta[k], 1e-12);
  for (const Tensor& vk : s.v) {
    for (double e : vk.data()) EXPECT_GE(e, 0.0);
  }
}

TEST(Adam, MinimizesQuadratic) {
  Tensor p = Tensor::vector({1.0});
  auto s = state_for(p);
  int steps = 0;
  while (std::abs(p[0]) >= 1e-3 && steps < 5000) {
    step(p, Tensor::vector({2.0 * p[0]}), s);
    ++steps;
  }
  EXPECT_LT(std::abs(p[0]), 1e-3);
  EXPECT_LE(steps, 5000);
}

TEST(Adam, RejectsNonFiniteGradient) {
  Tensor p = Tensor::vector({1.0, 2.0});
  auto s = state_for(p);
  EXPECT_THROW(step(p, Tensor::vector({1.0, NAN}), s), NonFiniteError);
  EXPECT_EQ(p, Tensor::vector({1.0, 2.0}));
  EXPECT_EQ(s.t, 0u);
}

TEST(Adam, RejectsShapeMismatch) {
  Tensor p = Tensor::vector({1.0, 2.0});
  auto s = state_for(p);
  EXPECT_THROW(step(p, Tensor::vector({1.0}), s), DimensionError);
}

TrainConfig small_config(std::size_t dim, Divergence div = Divergence::Standard) {
  TrainConfig cfg;
  cfg.arch = Arch{dim, 32, 2, ObsModel::Bernoulli};
  cfg.loss = div == Divergence::Standard ? LossSpec::standard(ObsModel::Bernoulli)
                                         : LossSpec::robust(ObsModel::Bernoulli, 0.01);
  cfg.epochs = 5;
  cfg.batch_size = 50;
  cfg.seed = 12;
  return cfg;
}

Dataset two_cluster(std::size_t n, std::uint64_t seed = 4) {
  return binarize(make_synthetic_clusters(n, 64, seed, ClusterGeometry::Bars));
}

TEST(Train, ZeroLearningRateKeepsInit) {
  auto cfg = small_config(64);
  cfg.adam.lr = 0.0;
  cfg.epochs = 2;
  const auto result = train(cfg, two_cluster(60));
  const auto init = init_params(cfg.arch, cfg.seed);
  auto a = result.params.tensors();
  auto b = init.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(Train, SameSeedSameLogAndParams) {
  const auto data = two_cluster(120);
  auto cfg = small_config(64, Divergence::Beta);
  cfg.epochs = 3;
  const auto r1 = train(cfg, data), r2 = train(cfg, data);
  EXPECT_EQ(r1.log, r2.log);
  EXPECT_EQ(r1.log.to_csv(), r2.log.to_csv());
  auto a = r1.params.tensors();
  auto b = r2.params.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  cfg.seed = 13;
  EXPECT_NE(train(cfg, data).log, r1.log);
}

TEST(Train, StandardLossDecreasesOverFirstEpochs) {
  const auto data = two_cluster(500);
  auto cfg = small_config(64);
  const auto log = train(cfg, data).log;
  ASSERT_EQ(log.epochs.size(), 5u);
  for (std::size_t e = 1; e < log.epochs.size(); ++e) {
    EXPECT_LT(log.epochs[e].total, log.epochs[e - 1].total) << "epoch " << e + 1;
  }
}

TEST(Train, LogColumnsAreConsistent) {
  auto cfg = small_config(64);
  cfg.epochs = 2;
  const auto log = train(cfg, two_cluster(80)).log;
  for (const auto& e : log.epochs) {
    EXPECT_NEAR(e.total, e.recon + e.kl, 1e-9 * std::abs(e.total));
    EXPECT_EQ(e.wall_ms, 0.0);
  }
  EXPECT_EQ(log.to_csv().substr(0, log.to_csv().find('\n')), "epoch,total,recon,kl,wall_ms");
}

TEST(Train, LastPartialBatchIsUsed) {
  const auto data = two_cluster(10);
  auto cfg = small_config(64);
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.shuffle = false;
  const auto full = train(cfg, data);
  const std::vector<std::size_t> first{0, 1, 2, 3, 4, 5, 6, 7};
  const auto head = train(cfg, data.subset(first));
  EXPECT_FALSE(full.params.enc_w1 == head.params.enc_w1);
}

TEST(Train, FinitenessAcrossBetaRange) {
  const auto data = two_cluster(100);
  for (double beta : {1e-5, 1e-3, 0.1, 1.0}) {
    auto cfg = small_config(64);
    cfg.loss = LossSpec::robust(ObsModel::Bernoulli, beta);
    cfg.epochs = 2;
    const auto log = train(cfg, data).log;
    for (const auto& e : log.epochs) EXPECT_TRUE(std::isfinite(e.total)) << beta;
  }
}

TEST(Train, NonFiniteLossReportsEpochAndBatch) {
  const auto data = two_cluster(20);
  auto cfg = small_config(64);
  auto init = init_params(cfg.arch, 0);
  for (double& w : init.enc_w_logvar.data()) w = 1e5;
  try {
    train(cfg, data, &init);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 0"), std::string::npos) << e.what();
  }
}

TEST(Train, DimensionMismatchThrows) {
  auto cfg = small_config(49);
  EXPECT_THROW(train(cfg, two_cluster(20)), ArchMismatchError);
}

TEST(Train, ConfigValidation) {
  auto cfg = small_config(64);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(64);
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(64);
  cfg.loss = LossSpec::standard(ObsModel::Gaussian);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, CheckpointHookFiresOnSchedule) {
  auto cfg = small_config(64);
  cfg.epochs = 5;
  cfg.checkpoint_every = 2;
  std::vector<std::size_t> seen;
  train(cfg, two_cluster(30), nullptr, [&](std::size_t epoch, const VaeParams&) { seen.push_back(epoch); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{2, 4}));
}

TEST(Streams, DistinctPurposesDiffer) {
  auto a = detail::stream(5, detail::kShuffleStream);
  auto b = detail::stream(5, detail::kNoiseStream);
  auto c = detail::stream(5, detail::kShuffleStream);
  const auto x = a();
  EXPECT_NE(x, b());
  EXPECT_EQ(x, c());
}

}  // namespace
}  // namespace rvae
