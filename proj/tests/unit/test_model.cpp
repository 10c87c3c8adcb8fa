#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "semkd/errors.hpp"
#include "semkd/model.hpp"
#include "test_support.hpp"

namespace semkd {
namespace {

using testing::random_vec;

ModelConfig small_config() {
  ModelConfig c;
  c.u = 6;
  c.num_superclasses = 3;
  c.attention_hidden = 4;
  c.mapping_hidden = {8, 5};
  c.backbone_hidden = {7};
  return c;
}

TEST(Attention, WeightsFormAConvexCombination) {
  std::mt19937_64 rng(1);
  auto state = init_model(small_config(), InputShape{5, 1, 1}, 4, 2);
  for (int i = 0; i < 1000; ++i) {
    const Vec g = random_vec(rng, 6, i % 2 ? 10.0 : 1.0);
    const auto fused = attention_fuse(state, g);
    ASSERT_EQ(fused.alphas.size(), 3);
    EXPECT_NEAR(fused.alphas.sum(), 1.0, 1e-12);
    EXPECT_GE(fused.alphas.minCoeff(), 0.0);
    const auto trace = head_forward(state.head, g);
    Vec manual = Vec::Zero(6);
    for (int k = 0; k < 3; ++k) manual += trace.alphas[k] * trace.modules[static_cast<std::size_t>(k)];
    EXPECT_LT((manual - fused.fused).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Attention, ModulesAreTanhBounded) {
  std::mt19937_64 rng(2);
  const auto state = init_model(small_config(), InputShape{5, 1, 1}, 4, 3);
  const auto trace = head_forward(state.head, random_vec(rng, 6, 50.0));
  for (const auto& e : trace.modules) EXPECT_LE(e.cwiseAbs().maxCoeff(), 1.0);
}

TEST(CosineDistance, StaysInRangeAndMatchesDefinition) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Vec a = random_vec(rng, 4), b = random_vec(rng, 4);
    const double d = cosine_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
    EXPECT_NEAR(d, 1.0 - a.dot(b) / (a.norm() * b.norm()), 1e-12);
  }
  const Vec a = Vec::Unit(3, 0);
  EXPECT_DOUBLE_EQ(cosine_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(cosine_distance(a, -a), 2.0);
  EXPECT_THROW(cosine_distance(a, Vec::Zero(3)), DegenerateVectorError);
}

TEST(CosineDistance, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const Vec s = random_vec(rng, 5);
    Vec y = random_vec(rng, 5);
    const Vec g = cosine_distance_grad(s, y);
    for (int k = 0; k < 5; ++k) {
      Vec yp = y, ym = y;
      yp[k] += 1e-6;
      ym[k] -= 1e-6;
      EXPECT_NEAR(g[k], (cosine_distance(s, yp) - cosine_distance(s, ym)) / 2e-6, 1e-6);
    }
  }
}

double backbone_objective(const ModelState& st, const Vec& x, const Vec& w) {
  return backbone_forward(st, x).dot(w);
}

void check_backbone_gradient(ModelState st, const Vec& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vec w = random_vec(rng, static_cast<Eigen::Index>(st.dims.u));
  Backbone grads = zeros_like(st.backbone);
  std::visit(
      [&](auto& bb) {
        using T = std::decay_t<decltype(bb)>;
        typename T::Trace trace;
        bb.forward(x, &trace);
        bb.backward(trace, w, std::get<T>(grads));
      },
      st.backbone);
  std::vector<double> analytic;
  visit_params(grads, [&](std::span<double> p) { analytic.insert(analytic.end(), p.begin(), p.end()); });
  std::size_t idx = 0;
  double worst = 0.0;
  visit_params(st.backbone, [&](std::span<double> p) {
    for (auto& v : p) {
      const double keep = v;
      v = keep + 1e-5;
      const double up = backbone_objective(st, x, w);
      v = keep - 1e-5;
      const double down = backbone_objective(st, x, w);
      v = keep;
      const double numeric = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(numeric - analytic[idx++]));
    }
  });
  EXPECT_EQ(idx, analytic.size());
  EXPECT_LT(worst, 1e-5);
}

TEST(Backbone, MlpGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto st = init_model(small_config(), InputShape{5, 1, 1}, 4, 6);
  check_backbone_gradient(st, random_vec(rng, 5), 7);
}

TEST(Backbone, ConvGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  auto cfg = small_config();
  cfg.backbone = BackboneKind::cnn;
  cfg.conv_channels = {2, 3, 2};
  auto st = init_model(cfg, InputShape{3, 8, 8}, 4, 9);
  check_backbone_gradient(st, random_vec(rng, 3 * 8 * 8), 10);
}

TEST(InitModel, RejectsBadShapes) {
  auto cfg = small_config();
  EXPECT_THROW(init_model(cfg, InputShape{3, 8, 8}, 4, 0), ConfigError);
  cfg.backbone = BackboneKind::cnn;
  EXPECT_THROW(init_model(cfg, InputShape{3, 4, 4}, 4, 0), ConfigError);
  cfg = small_config();
  cfg.num_superclasses = 0;
  EXPECT_THROW(init_model(cfg, InputShape{5, 1, 1}, 4, 0), ConfigError);
  EXPECT_THROW(backbone_forward(init_model(small_config(), InputShape{5, 1, 1}, 4, 0), Vec::Zero(3)),
               ShapeError);
}

TEST(InitModel, SeedDeterminesWeights) {
  const auto a = init_model(small_config(), InputShape{5, 1, 1}, 4, 11);
  const auto b = init_model(small_config(), InputShape{5, 1, 1}, 4, 11);
  const auto c = init_model(small_config(), InputShape{5, 1, 1}, 4, 12);
  EXPECT_EQ(a.head.mapping[0].weight, b.head.mapping[0].weight);
  EXPECT_NE(a.head.mapping[0].weight, c.head.mapping[0].weight);
}

TEST(ParamCounts, MatchArchitectureAndFreezing) {
  auto st = init_model(small_config(), InputShape{5, 1, 1}, 4, 1);
  // E: 3 x (6*6+6); A: V 4x6 + w 4; M: (12->8) (8->5) (5->4)
  EXPECT_EQ(count_params(st, Component::embeddings), 3u * 42u);
  EXPECT_EQ(count_params(st, Component::attention), 28u);
  EXPECT_EQ(count_params(st, Component::mapping), 12u * 8 + 8 + 8 * 5 + 5 + 5 * 4 + 4);
  EXPECT_EQ(count_params(st, Component::backbone), 5u * 7 + 7 + 7 * 6 + 6);
  const auto all = count_trainable(st);
  st.frozen.backbone = true;
  EXPECT_EQ(count_trainable(st), all - count_params(st, Component::backbone));
}

TEST(ClassifierHead, RegistrationKeepsParameterCount) {
  auto st = init_model(small_config(), InputShape{5, 1, 1}, 4, 1);
  const auto before = count_trainable(st);
  ClassifierHead head;
  SemanticTable t(4, SemanticSource::synthetic);
  std::vector<ClassId> ids;
  for (int i = 0; i < 6; ++i) {
    ids.emplace_back("k" + std::to_string(i));
    t.insert(ids.back(), Vec::Unit(4, i % 4) + Vec::Constant(4, 0.1 * i));
  }
  register_session_classes(head, t, std::span(ids).first(4));
  register_session_classes(head, t, std::span(ids).subspan(4));
  EXPECT_EQ(count_trainable(st), before);
  EXPECT_EQ(head.size(), 6u);
  EXPECT_EQ(head.index_of(ids[5]), 5u);
  EXPECT_THROW(register_session_classes(head, t, std::span(ids).first(1)), DuplicateError);
  EXPECT_THROW(head.index_of(ClassId("zz")), LookupError);
  const auto scores = head.score(Vec::Unit(4, 1));
  EXPECT_NEAR(scores[1], cosine_distance(t.at(ids[1]), Vec::Unit(4, 1)), 1e-15);
}

TEST(ClassifierHead, EmptyHeadAndBadDims) {
  ClassifierHead head;
  EXPECT_THROW(head.score(Vec::Ones(3)), EmptyInputError);
  std::vector<std::pair<ClassId, Vec>> cls = {{ClassId("a"), Vec::Ones(3)}, {ClassId("a"), Vec::Ones(3)}};
  EXPECT_THROW(head.register_classes(cls), DuplicateError);
  std::vector<std::pair<ClassId, Vec>> ok = {{ClassId("a"), Vec::Ones(3)}};
  head.register_classes(ok);
  std::vector<std::pair<ClassId, Vec>> bad = {{ClassId("b"), Vec::Ones(2)}};
  EXPECT_THROW(head.register_classes(bad), ShapeError);
}

TEST(ArgminIndex, LowestIndexWinsTies) {
  Vec d(4);
  d << 0.5, 0.2, 0.2, 0.9;
  EXPECT_EQ(argmin_index(d), 1u);
  const std::vector<std::size_t> allowed = {3, 2};
  EXPECT_EQ(argmin_index(d, allowed), 2u);
  const std::vector<std::size_t> bad = {7};
  EXPECT_THROW(argmin_index(d, bad), IndexError);
  EXPECT_THROW(argmin_index(Vec()), EmptyInputError);
}

TEST(FrozenFlags, ReportPerComponent) {
  FrozenFlags f;
  f.attention = true;
  EXPECT_TRUE(f.is_frozen(Component::attention));
  EXPECT_FALSE(f.is_frozen(Component::mapping));
}

}  // namespace
}  // namespace semkd
