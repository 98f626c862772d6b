#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace vaeabsa;
using vaeabsa::testing::GradProblemConfig;
using vaeabsa::testing::make_grad_problem;

namespace {

ObjectiveContext context(const TopicLayout& layout, LossWeights w, bool renormalize = false) {
  TrainConfig cfg;
  cfg.weights = w;
  cfg.renormalize_theta_a = renormalize;
  return cfg.objective(layout);
}

GradProblemConfig acceptance_like() {
  GradProblemConfig c;
  c.V = 30;
  c.A = 3;
  c.S = 2;
  c.B = 3;
  c.H = 16;
  c.max_tokens = 5;
  return c;
}

}  // namespace

TEST(LrSchedule, ZeroThenWarmupThenConstant) {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  EXPECT_EQ(lr_schedule(0, 0.0, cfg), 0.0);
  EXPECT_EQ(lr_schedule(0, 0.9, cfg), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(1, 0.5, cfg), 0.5e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(1, 0.0, cfg), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(5, 0.3, cfg), 1e-3);
  cfg.zero_lr_epochs = 0;
  cfg.warmup_epochs = 0;
  EXPECT_DOUBLE_EQ(lr_schedule(0, 0.0, cfg), 1e-3);
}

TEST(Adam, SingleStepMatchesHandFormula) {
  auto g = make_grad_problem({}, 1);
  TrainConfig cfg;
  auto p = g.params;
  auto grad = ModelParams::zeros(g.shape);
  grad.beta(0, 0) = 0.3;
  grad.s_senti(1) = -2.0;
  auto st = AdamState::zeros(g.shape);
  adam_update(p, grad, st, 0.01, cfg);
  // With zero moments the bias-corrected step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.beta(0, 0), g.params.beta(0, 0) - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.s_senti(1), g.params.s_senti(1) + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.beta(1, 0), g.params.beta(1, 0));
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroLearningRateAdvancesMomentsOnly) {
  auto g = make_grad_problem({}, 1);
  TrainConfig cfg;
  auto p = g.params;
  auto grad = ModelParams::zeros(g.shape);
  grad.enc_b1(0) = 1.0;
  auto st = AdamState::zeros(g.shape);
  adam_update(p, grad, st, 0.0, cfg);
  EXPECT_EQ(p, g.params);
  EXPECT_EQ(st.step, 1u);
  EXPECT_NEAR(st.m.enc_b1(0), 0.1, 1e-15);
  EXPECT_NEAR(st.v.enc_b1(0), 0.01, 1e-15);
}

TEST(Gradients, ZeroWeightsGiveZeroGradient) {
  auto g = make_grad_problem({}, 2);
  std::mt19937_64 rng(1);
  const auto r = compute_gradients(g.params, g.shape, g.batch, context(g.shape.layout, {0, 0, 0, 0}), rng);
  visit_tensors(r.grad, [](std::string_view name, std::span<const double> d, Eigen::Index, Eigen::Index) {
    for (double v : d) EXPECT_EQ(v, 0.0) << name;
  });
}

TEST(Gradients, SentimentTopicWeightsOnlyFeelTheirTerm) {
  auto g = make_grad_problem({}, 2);
  std::mt19937_64 rng(1);
  const auto r = compute_gradients(g.params, g.shape, g.batch, context(g.shape.layout, {1, 1, 1, 0}), rng);
  EXPECT_EQ(r.grad.s_senti, Eigen::VectorXd::Zero(2));
  std::mt19937_64 rng2(1);
  const auto r2 = compute_gradients(g.params, g.shape, g.batch, context(g.shape.layout, {0, 0, 0, 1}), rng2);
  EXPECT_NE(r2.grad.s_senti, Eigen::VectorXd::Zero(2));
}

TEST(GradCheck, PassesOnRandomConfigurations) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto g = make_grad_problem(acceptance_like(), seed);
    std::mt19937_64 rng(seed + 100);
    const auto r = grad_check(g.params, g.shape, g.batch, context(g.shape.layout, {1, 1, 1, 1}), 1e-5, rng, 20);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst_tensor;
    EXPECT_EQ(r.per_tensor.size(), 13u);
  }
}

TEST(GradCheck, PassesWithPaperWeightsAndRenormalization) {
  auto g = make_grad_problem(acceptance_like(), 7);
  for (bool renorm : {false, true}) {
    std::mt19937_64 rng(8);
    const auto r = grad_check(g.params, g.shape, g.batch, context(g.shape.layout, LossWeights{}, renorm), 1e-5, rng, 20);
    EXPECT_LT(r.max_rel_error, 1e-4) << "renormalize " << renorm << " worst " << r.worst_tensor;
  }
}

TEST(GradCheck, EachLossTermPassesInIsolation) {
  auto g = make_grad_problem(acceptance_like(), 11);
  const LossWeights terms[] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  for (const auto& w : terms) {
    std::mt19937_64 rng(12);
    const auto r = grad_check(g.params, g.shape, g.batch, context(g.shape.layout, w), 1e-5, rng, 20);
    EXPECT_LT(r.max_rel_error, 1e-4) << "weights " << w.c1 << w.c2 << w.c3 << w.c4 << " worst " << r.worst_tensor;
  }
}

TEST(GradCheck, DetectsOnePercentGradientError) {
  auto g = make_grad_problem(acceptance_like(), 13);
  std::mt19937_64 rng(14);
  const auto r = grad_check(g.params, g.shape, g.batch, context(g.shape.layout, {1, 1, 1, 1}), 1e-5, rng, 20,
                            [](ModelParams& grad) {
                              visit_tensors(grad, [](std::string_view, std::span<double> d, Eigen::Index,
                                                     Eigen::Index) {
                                for (double& v : d) v *= 1.01;
                              });
                            });
  EXPECT_GT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, DetectsASingleCorruptedTensor) {
  auto g = make_grad_problem(acceptance_like(), 15);
  std::mt19937_64 rng(16);
  const auto r = grad_check(g.params, g.shape, g.batch, context(g.shape.layout, {1, 1, 1, 1}), 1e-5, rng, 40,
                            [](ModelParams& grad) { grad.pool *= 1.01; });
  EXPECT_GT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.worst_tensor, "pool");
}

TEST(CentralDifference, CancelsUntouchedTermsExactly) {
  LossBreakdown up{1.0, 100.0, 0.5, 0.25, 0.0, true};
  LossBreakdown down = up;
  down.kl = 1.0 - 2e-6;
  EXPECT_NEAR(central_difference({up}, {down}, LossWeights{1, 1, 1, 1}, 1e-6), 1.0, 1e-9);
  up.rated = down.rated = false;
  up.s_asp_mse = 99.0;
  EXPECT_NEAR(central_difference({up}, {down}, LossWeights{1, 1, 1, 1}, 1e-6), 1.0, 1e-9);
}

TEST(NonFinite, LossRaisesNumericError) {
  auto g = make_grad_problem({}, 3);
  g.params.beta(0, 0) = std::numeric_limits<double>::quiet_NaN();
  std::mt19937_64 rng(1);
  EXPECT_THROW(compute_gradients(g.params, g.shape, g.batch, context(g.shape.layout, {1, 1, 1, 1}), rng),
               NumericError);
}

TEST(Init, DeterministicAndSeeded) {
  const auto data = vaeabsa::testing::make_synthetic_data(200, 10, 10);
  TrainConfig cfg;
  const ModelShape shape{data.vocab.size(), data.train.seeds.layout(), 16, 3, 8, 8, Activation::softplus};
  Rng a(4), b(4);
  const auto ia = init_params(shape, data.train.seeds, data.vocab, SeedingMode::direct, 2.0, a);
  const auto ib = init_params(shape, data.train.seeds, data.vocab, SeedingMode::direct, 2.0, b);
  EXPECT_EQ(ia.params, ib.params);
  EXPECT_EQ(ia.params.s_senti, Eigen::Vector2d(2.0, -2.0));
  EXPECT_TRUE(ia.params.pool.isApprox(Eigen::Vector3d::Constant(1.0 / 3.0)));
  EXPECT_EQ(ia.params.enc_b1, Eigen::VectorXd::Zero(8));
  for (const auto& [k, words] : data.train.seeds.topics()) {
    auto top = top_words(ia.params.beta, data.vocab, k, words->size());
    std::vector<std::string> want;
    for (const auto& w : *words) {
      if (data.vocab.contains(w)) want.push_back(w);
    }
    ASSERT_FALSE(want.empty());
    top.resize(want.size());
    std::sort(top.begin(), top.end());
    std::sort(want.begin(), want.end());
    EXPECT_EQ(top, want) << data.train.seeds.layout().topic_label(k);
  }
  Rng c(4);
  EXPECT_THROW(init_params(shape, data.train.seeds, data.vocab, SeedingMode::bootstrap, 2.0, c), ValidationError);
  auto wrong = shape;
  wrong.vocab_size += 1;
  EXPECT_THROW(init_params(wrong, data.train.seeds, data.vocab, SeedingMode::direct, 2.0, c), ValidationError);
}

TEST(Rng, TextStateRoundTrips) {
  Rng a(77);
  a.discard(1000);
  Rng b = rng_from_string(rng_to_string(a));
  EXPECT_EQ(a(), b());
  EXPECT_THROW(rng_from_string("not a state"), FormatError);
}

class SmallTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { data_ = new vaeabsa::testing::SyntheticData(vaeabsa::testing::make_synthetic_data(300, 20, 20)); }
  static void TearDownTestSuite() {
    delete data_;
    data_ = nullptr;
  }

  static TrainConfig config() {
    auto cfg = vaeabsa::testing::synthetic_train_config(5);
    cfg.epochs = 4;
    cfg.enc_hidden = 12;
    cfg.senti_hidden = 12;
    return cfg;
  }

  static ModelShape shape(const TrainConfig& cfg) {
    return {data_->vocab.size(), data_->train.seeds.layout(), 16, 3, cfg.enc_hidden, cfg.senti_hidden, cfg.activation};
  }

  static TrainReport run(const TrainConfig& cfg) {
    auto init = initial_state(cfg, shape(cfg), data_->train.seeds, data_->vocab);
    return train(cfg, shape(cfg), {&data_->train.documents, &data_->cache}, std::move(init.first));
  }

  static vaeabsa::testing::SyntheticData* data_;
};

vaeabsa::testing::SyntheticData* SmallTraining::data_ = nullptr;

TEST_F(SmallTraining, SameSeedSameHistoryAndParameters) {
  const auto a = run(config());
  const auto b = run(config());
  ASSERT_EQ(a.history.size(), 4u);
  for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].total, b.history[e].total);
  EXPECT_EQ(a.state.params, b.state.params);
  auto other = config();
  other.rng_seed = 6;
  EXPECT_NE(run(other).history.back().total, a.history.back().total);
}

TEST_F(SmallTraining, ResumeMatchesUninterruptedRun) {
  const auto cfg = config();
  const auto full = run(cfg);
  auto half_cfg = cfg;
  half_cfg.epochs = 2;
  const auto half = run(half_cfg);
  const auto rest = train(cfg, shape(cfg), {&data_->train.documents, &data_->cache}, half.state);
  ASSERT_EQ(rest.history.size(), 2u);
  EXPECT_EQ(rest.history[1].total, full.history[3].total);
  EXPECT_EQ(rest.state.params, full.state.params);
  EXPECT_EQ(rest.state.adam.step, full.state.adam.step);
}

TEST_F(SmallTraining, EpochZeroHasZeroLearningRateButMovesMoments) {
  auto cfg = config();
  cfg.epochs = 1;
  const auto init = initial_state(cfg, shape(cfg), data_->train.seeds, data_->vocab);
  const auto r = train(cfg, shape(cfg), {&data_->train.documents, &data_->cache}, init.first);
  EXPECT_EQ(r.history[0].lr, 0.0);
  EXPECT_EQ(r.state.params, init.first.params);
  EXPECT_EQ(r.state.adam.step, (300u + 15u) / 16u);
}

TEST_F(SmallTraining, OnStateSeesEveryEpoch) {
  std::vector<std::size_t> seen;
  auto cfg = config();
  cfg.epochs = 3;
  auto init = initial_state(cfg, shape(cfg), data_->train.seeds, data_->vocab);
  train(cfg, shape(cfg), {&data_->train.documents, &data_->cache}, std::move(init.first), {},
        [&](const TrainState& s) { seen.push_back(s.epochs_completed); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
}

TEST_F(SmallTraining, MissingCacheEntryIsDataErrorAndEmptyDocumentsAreSkipped) {
  auto cfg = config();
  cfg.epochs = 1;
  auto docs = data_->train.documents;
  EmbeddingCache cache(16, 3);
  for (std::size_t i = 1; i < docs.size(); ++i) cache.add(*data_->cache.find(docs[i].id));
  auto init = initial_state(cfg, shape(cfg), data_->train.seeds, data_->vocab);
  EXPECT_THROW(train(cfg, shape(cfg), {&docs, &cache}, init.first), DataError);
  cache.add({docs[0].id, 0, {}});
  const auto r = train(cfg, shape(cfg), {&docs, &cache}, init.first);
  EXPECT_EQ(r.skipped_empty, 1u);
  EmbeddingCache wrong(8, 3);
  EXPECT_THROW(train(cfg, shape(cfg), {&docs, &wrong}, init.first), DataError);
}

TEST(SyntheticTraining, TotalLossStrictlyDecreasesAfterWarmup) {
  const auto data = vaeabsa::testing::make_synthetic_data(2000, 10, 10);
  auto cfg = vaeabsa::testing::synthetic_train_config(3);
  cfg.epochs = 5;
  const ModelShape shape{data.vocab.size(), data.train.seeds.layout(), 16, 3, cfg.enc_hidden, cfg.senti_hidden,
                         cfg.activation};
  auto init = initial_state(cfg, shape, data.train.seeds, data.vocab);
  const auto r = train(cfg, shape, {&data.train.documents, &data.cache}, std::move(init.first));
  ASSERT_EQ(r.history.size(), 5u);
  for (std::size_t e = 3; e < 5; ++e) {
    EXPECT_LT(r.history[e].total, r.history[e - 1].total) << "epoch " << e;
  }
}
