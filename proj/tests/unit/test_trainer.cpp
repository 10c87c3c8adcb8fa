#include <algorithm>

#include <gtest/gtest.h>

#include "semkd/errors.hpp"
#include "semkd/evalsuite.hpp"
#include "semkd/trainer.hpp"
#include "test_support.hpp"

namespace semkd {
namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.u = 6;
  m.num_superclasses = 2;
  m.attention_hidden = 4;
  m.mapping_hidden = {12};
  m.backbone_hidden = {10};
  return m;
}

TrainConfig tiny_train(std::uint64_t seed = 1) {
  TrainConfig t;
  t.epochs = {8, 4, 6, 4};
  t.batch_size = 16;
  t.learning_rate = 5e-3;
  t.seed = seed;
  return t;
}

std::vector<double> flatten(const Backbone& backbone) {
  auto copy = backbone;
  std::vector<double> out;
  visit_params(copy, [&](std::span<double> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

TEST(TrainBase, FreezesBackboneAndFillsMemory) {
  const auto stream = build_synthetic_stream(testing::tiny_stream_config());
  std::vector<std::string> phases;
  const auto state = train_base(stream, tiny_model(), tiny_train(),
                                [&](const LossLogRow& r) { phases.push_back(r.phase); });
  EXPECT_TRUE(state.model.frozen.backbone);
  EXPECT_EQ(state.session_index, 1u);
  EXPECT_EQ(state.memory.size(), stream.task(1).classes.size());
  EXPECT_EQ(state.head.size(), stream.task(1).classes.size());
  EXPECT_EQ(state.superclasses.assignment.size(), stream.task(1).classes.size());
  ASSERT_FALSE(phases.empty());
  EXPECT_EQ(phases.front(), "backbone");
  EXPECT_EQ(phases.back(), "base");
  EXPECT_EQ(std::count(phases.begin(), phases.end(), "embeddings"), 4);
}

TEST(NovelSession, KeepsBackboneAndParameterCount) {
  const auto stream = build_synthetic_stream(testing::tiny_stream_config());
  auto state = train_base(stream, tiny_model(), tiny_train());
  const auto trainable = count_trainable(state.model);
  const auto backbone = flatten(state.model.backbone);
  std::size_t classes = state.head.size();
  for (std::size_t t = 2; t <= stream.num_tasks(); ++t) {
    bool saw_ld = false;
    state = train_novel_session(std::move(state), stream.task(t), stream.semantics, tiny_train(),
                                [&](const LossLogRow& r) { saw_ld |= r.ld > 0.0; });
    classes += stream.task(t).classes.size();
    EXPECT_TRUE(saw_ld);
    EXPECT_EQ(count_trainable(state.model), trainable);
    EXPECT_EQ(state.memory.size(), classes);
    EXPECT_EQ(state.head.size(), classes);
    EXPECT_EQ(flatten(state.model.backbone), backbone);
    EXPECT_EQ(state.session_index, t);
  }
}

TEST(NovelSession, OutOfOrderSessionIsRejected) {
  const auto stream = build_synthetic_stream(testing::tiny_stream_config());
  auto state = train_base(stream, tiny_model(), tiny_train());
  EXPECT_THROW(train_novel_session(state, stream.task(3), stream.semantics, tiny_train()), ProtocolError);
  state = train_novel_session(state, stream.task(2), stream.semantics, tiny_train());
  EXPECT_THROW(train_novel_session(state, stream.task(2), stream.semantics, tiny_train()), ProtocolError);
}

TEST(SnapshotOldScores, OnlyBeforeUpdates) {
  const auto stream = build_synthetic_stream(testing::tiny_stream_config());
  auto state = train_base(stream, tiny_model(), tiny_train());
  std::vector<Vec> feats = {state.memory.entries()[0].prototype};
  const auto ctx = snapshot_old_scores(state, feats);
  EXPECT_EQ(ctx.num_old, state.head.size());
  ASSERT_EQ(ctx.old_scores.size(), 1u);
  EXPECT_EQ(static_cast<std::size_t>(ctx.old_scores[0].size()), ctx.num_old);
  state.session_updates = 3;
  EXPECT_THROW(snapshot_old_scores(state, feats), ProtocolError);
}

TEST(RunFscil, DeterministicForFixedSeed) {
  const auto stream = build_synthetic_stream(testing::tiny_stream_config());
  const auto a = run_fscil(stream, tiny_model(), tiny_train(4));
  const auto b = run_fscil(stream, tiny_model(), tiny_train(4));
  ASSERT_EQ(a.size(), stream.num_tasks());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]), to_json(b[i]));
  EXPECT_FALSE(a[0].acc_novel.has_value());
  EXPECT_TRUE(a[1].acc_novel.has_value());
}

TEST(RunFscil, LearnsBaseClassesAboveChance) {
  auto cfg = testing::tiny_stream_config(6);
  cfg.class_separation = 6.0;
  const auto stream = build_synthetic_stream(cfg);
  auto train = tiny_train(2);
  train.epochs = {40, 10, 40, 10};
  const auto reports = run_fscil(stream, tiny_model(), train);
  EXPECT_GT(reports.front().acc_base, 2.0 / static_cast<double>(cfg.num_base_classes));
}

TEST(TrainBase, SeparableTwentyClassBlobs) {
  SyntheticStreamConfig cfg;  // 20 well separated 16-d classes
  cfg.num_sessions = 1;
  cfg.seed = 11;
  const auto stream = build_synthetic_stream(cfg);
  ModelConfig model;
  model.u = 16;
  model.attention_hidden = 16;
  model.mapping_hidden = {64};
  TrainConfig train;
  train.epochs = {30, 10, 20, 0};
  train.batch_size = 64;
  train.seed = 11;
  const auto state = train_base(stream, model, train);
  const auto report = evaluate_session(state.model, state.head, stream, 1);
  EXPECT_GT(report.acc_base, 0.9);
}

TEST(RunDfsl, ProducesEpisodeAggregate) {
  auto cfg = testing::tiny_stream_config();
  cfg.protocol = Protocol::dfsl;
  cfg.num_sessions = 2;
  cfg.novel_pool_classes = 5;
  cfg.novel_pool_train_per_class = 4;
  const auto stream = build_synthetic_stream(cfg);
  DfslOptions opt{3, 2, 3, 4};
  const auto run = run_dfsl(stream, tiny_model(), tiny_train(), opt);
  EXPECT_EQ(run.episodes.size(), 3u);
  EXPECT_EQ(run.report.episodes, 3u);
  EXPECT_NEAR(run.report.delta, (run.report.delta_b + run.report.delta_n) / 2, 1e-15);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.learning_rate = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Optimizer, AdamAndSgdDescendAQuadratic) {
  for (auto kind : {OptimizerKind::adam, OptimizerKind::sgd}) {
    Dense layer{Mat::Constant(2, 2, 3.0), Vec::Constant(2, -2.0)};
    std::vector<std::span<double>> params;
    visit_params(layer, [&](std::span<double> s) { params.push_back(s); });
    Optimizer opt(kind, params, 0.05, 0.0);
    for (int step = 0; step < 400; ++step) {
      Dense g = layer;  // gradient of 0.5*|theta|^2
      std::vector<std::span<double>> grads;
      visit_params(g, [&](std::span<double> s) { grads.push_back(s); });
      opt.step(grads);
    }
    EXPECT_LT(layer.weight.cwiseAbs().maxCoeff(), 0.1) << to_string(kind);
  }
}

}  // namespace
}  // namespace semkd
