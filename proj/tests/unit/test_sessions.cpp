#include <set>

#include <gtest/gtest.h>

#include "semkd/errors.hpp"
#include "semkd/sessions.hpp"
#include "test_support.hpp"

namespace semkd {
namespace {

TEST(SyntheticStream, ShapesAndCounts) {
  const auto cfg = testing::tiny_stream_config();
  const auto s = build_synthetic_stream(cfg);
  ASSERT_EQ(s.num_tasks(), cfg.num_sessions);
  EXPECT_EQ(s.input_shape.size(), cfg.feature_dim);
  EXPECT_FALSE(s.input_shape.is_image());
  EXPECT_EQ(s.task(1).classes.size(), cfg.num_base_classes);
  EXPECT_EQ(s.task(1).train.size(), cfg.num_base_classes * cfg.samples_per_base_class);
  for (std::size_t t = 2; t <= s.num_tasks(); ++t) {
    EXPECT_EQ(s.task(t).classes.size(), cfg.way);
    EXPECT_EQ(s.task(t).train.size(), cfg.way * cfg.shot);
    EXPECT_EQ(s.task(t).test.size(), cfg.way * cfg.test_per_class);
    for (const auto& smp : s.task(t).train) EXPECT_EQ(smp.task_index, t);
  }
  EXPECT_THROW(s.task(0), IndexError);
  EXPECT_THROW(s.task(cfg.num_sessions + 1), IndexError);
  EXPECT_NO_THROW(validate_stream(s));
}

TEST(SyntheticStream, ClassesAreDisjointAcrossTasks) {
  const auto s = build_synthetic_stream(testing::tiny_stream_config(8));
  std::set<ClassId> seen;
  for (const auto& task : s.tasks) {
    for (const auto& c : task.classes) EXPECT_TRUE(seen.insert(c).second) << c;
  }
  for (const auto& c : seen) EXPECT_TRUE(s.semantics.contains(c));
}

TEST(SyntheticStream, SameSeedSameData) {
  const auto a = build_synthetic_stream(testing::tiny_stream_config(4));
  const auto b = build_synthetic_stream(testing::tiny_stream_config(4));
  const auto c = build_synthetic_stream(testing::tiny_stream_config(5));
  EXPECT_EQ(a.task(2).train[0].input, b.task(2).train[0].input);
  EXPECT_NE(a.task(2).train[0].input, c.task(2).train[0].input);
}

TEST(SyntheticStream, RejectsBadConfig) {
  auto cfg = testing::tiny_stream_config();
  cfg.num_groups = 0;
  EXPECT_THROW(build_synthetic_stream(cfg), ConfigError);
  cfg = testing::tiny_stream_config();
  cfg.blob_spread = -1.0;
  EXPECT_THROW(build_synthetic_stream(cfg), ConfigError);
  cfg = testing::tiny_stream_config();
  cfg.protocol = Protocol::dfsl;  // needs exactly two tasks
  EXPECT_THROW(build_synthetic_stream(cfg), ConfigError);
}

TEST(JointTestSet, GrowsWithSessions) {
  const auto cfg = testing::tiny_stream_config();
  const auto s = build_synthetic_stream(cfg);
  std::size_t expected = 0;
  for (std::size_t t = 1; t <= s.num_tasks(); ++t) {
    expected += s.task(t).test.size();
    EXPECT_EQ(joint_test_set(s, t).size(), expected);
  }
  EXPECT_THROW(joint_test_set(s, 0), IndexError);
}

TEST(DfslEpisode, SamplesFromThePool) {
  auto cfg = testing::tiny_stream_config();
  cfg.protocol = Protocol::dfsl;
  cfg.num_sessions = 2;
  cfg.novel_pool_classes = 6;
  cfg.novel_pool_train_per_class = 5;
  const auto s = build_synthetic_stream(cfg);
  ASSERT_TRUE(s.novel_pool.has_value());
  const auto ep = sample_dfsl_episode(s, 3, 2, 4, 17);
  EXPECT_EQ(ep.index, 2u);
  EXPECT_EQ(ep.classes.size(), 3u);
  EXPECT_EQ(ep.train.size(), 6u);
  EXPECT_EQ(ep.test.size(), 12u);
  const std::set<ClassId> pool(s.novel_pool->classes.begin(), s.novel_pool->classes.end());
  for (const auto& c : ep.classes) EXPECT_TRUE(pool.contains(c));
  const auto again = sample_dfsl_episode(s, 3, 2, 4, 17);
  EXPECT_EQ(again.classes, ep.classes);
  EXPECT_THROW(sample_dfsl_episode(s, 50, 2, 4, 1), ConfigError);

  const auto fscil = build_synthetic_stream(testing::tiny_stream_config());
  EXPECT_THROW(sample_dfsl_episode(fscil, 2, 2, 2, 1), ProtocolError);
}

TEST(ValidateStream, CatchesBrokenStreams) {
  auto s = build_synthetic_stream(testing::tiny_stream_config());
  auto dup = s;
  dup.tasks[1].classes.push_back(dup.tasks[0].classes[0]);
  EXPECT_THROW(validate_stream(dup), DatasetError);
  auto few = s;
  few.tasks[1].train.pop_back();
  EXPECT_THROW(validate_stream(few), DatasetError);
  auto shape = s;
  shape.tasks[0].train[0].input = Vec::Zero(2);
  EXPECT_THROW(validate_stream(shape), ShapeError);
}

TEST(ImageStream, LoadsFolderDataset) {
  testing::TempDir dir("img");
  testing::write_image_fixture(dir.path(), 10, 20, 5, 5);
  ImageStreamConfig cfg;
  cfg.root = dir.path();
  cfg.split_spec = dir / "split.json";
  cfg.way = 5;
  cfg.shot = 3;
  cfg.image.image_size = 16;
  const auto s = build_image_stream(cfg);
  ASSERT_EQ(s.num_tasks(), 2u);
  EXPECT_EQ(s.input_shape, (InputShape{3, 16, 16}));
  EXPECT_TRUE(s.input_shape.is_image());
  EXPECT_EQ(s.semantics.dim(), 6u);
  EXPECT_EQ(s.task(1).train.size(), 5u * 16u);
  EXPECT_EQ(s.task(1).test.size(), 5u * 4u);
  EXPECT_EQ(s.task(2).train.size(), 15u);
  EXPECT_EQ(s.task(2).train[0].input.size(), 3 * 16 * 16);
  // standardized: some values below zero, none absurd
  EXPECT_LT(s.task(1).train[0].input.minCoeff(), 0.0);
  EXPECT_LT(s.task(1).train[0].input.cwiseAbs().maxCoeff(), 10.0);
}

TEST(ImageStream, ReportsMissingPieces) {
  testing::TempDir dir("img");
  testing::write_image_fixture(dir.path(), 10, 4, 5, 5);
  ImageStreamConfig cfg;
  cfg.root = dir.path();
  cfg.split_spec = dir / "split.json";
  cfg.shot = 8;  // only 4 images, 3 for training
  EXPECT_THROW(build_image_stream(cfg), DatasetError);
  cfg.shot = 2;
  cfg.split_spec = dir / "nope.json";
  EXPECT_THROW(build_image_stream(cfg), DatasetError);
  std::filesystem::remove_all(dir / "cls7");
  cfg.split_spec = dir / "split.json";
  EXPECT_THROW(build_image_stream(cfg), DatasetError);
}

}  // namespace
}  // namespace semkd
