#include <fstream>

#include <gtest/gtest.h>

#include "semkd/config.hpp"
#include "semkd/errors.hpp"
#include "semkd/toml.hpp"
#include "test_support.hpp"

namespace semkd {
namespace {

using nlohmann::json;

TEST(Toml, ParsesTablesArraysAndScalars) {
  const auto j = toml::parse(R"(
seed = 4
name = "x y"
[model]
mapping_hidden = [3, 4]
u = 8
[train.loss]
tau = 2.5
flag = true
)");
  EXPECT_EQ(j.at("seed"), 4);
  EXPECT_EQ(j.at("name"), "x y");
  EXPECT_EQ(j.at("model").at("mapping_hidden"), json::array({3, 4}));
  EXPECT_DOUBLE_EQ(j.at("train").at("loss").at("tau").get<double>(), 2.5);
  EXPECT_TRUE(j.at("train").at("loss").at("flag").get<bool>());
}

TEST(Toml, ErrorsCarryLocation) {
  try {
    toml::parse("a = 1\nb = [1,\n", "cfg.toml");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.toml:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(toml::parse("a = 1\na = 2\n"), ParseError);
  EXPECT_THROW(toml::parse("d = 1979-05-27\n"), ParseError);
}

TEST(Toml, DumpRoundTrips) {
  const auto cfg = default_config();
  json doc = cfg;
  doc["derived_seeds"] = {{"dataset", 123456789012345ULL}, {"train", 1}};
  doc["train"]["learning_rate"] = 0.1 + 0.2;  // not representable in few digits
  const auto back = toml::parse(toml::dump(doc));
  EXPECT_EQ(back, doc);
}

TEST(Toml, ParseValueFallsBackToString) {
  EXPECT_EQ(toml::parse_value("3"), 3);
  EXPECT_EQ(toml::parse_value("0.5"), 0.5);
  EXPECT_EQ(toml::parse_value("[1, 2]"), json::array({1, 2}));
  EXPECT_EQ(toml::parse_value("\"q\""), "q");
  EXPECT_EQ(toml::parse_value("runs/out"), "runs/out");
}

TEST(Config, DefaultsResolve) {
  const auto cfg = resolve_config(json::object());
  EXPECT_EQ(cfg.model.num_superclasses, 3u);
  EXPECT_DOUBLE_EQ(cfg.train.loss.lambda1, 0.7);
  EXPECT_DOUBLE_EQ(cfg.train.loss.lambda2, 1.1);
  EXPECT_DOUBLE_EQ(cfg.train.loss.lambda3, 0.6);
  EXPECT_DOUBLE_EQ(cfg.train.loss.tau, 2.0);
  EXPECT_EQ(cfg.model.mapping_hidden, (std::vector<std::size_t>{512, 728}));
  EXPECT_EQ(cfg.train.batch_size, 128u);
  EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 1e-3);
  EXPECT_EQ(cfg.protocol, Protocol::fscil);
  EXPECT_TRUE(cfg.resolved.at("derived_seeds").contains("train"));
}

TEST(Config, ResolvedDocumentIsAFixedPoint) {
  json user = {{"seed", 9}, {"model", {{"u", 12}}}};
  const auto a = resolve_config(user);
  const auto b = resolve_config(a.resolved);
  EXPECT_EQ(a.resolved, b.resolved);
  EXPECT_EQ(run_id(a.resolved), run_id(b.resolved));
  EXPECT_EQ(run_id(a.resolved).size(), 12u);
}

TEST(Config, DerivedSeedsFollowTheRootSeed) {
  const auto a = resolve_config({{"seed", 1}});
  const auto b = resolve_config({{"seed", 2}});
  EXPECT_NE(a.train.seed, b.train.seed);
  EXPECT_NE(a.synthetic.seed, b.synthetic.seed);
  EXPECT_NE(a.train.seed, a.synthetic.seed);
  const auto c = resolve_config({{"seed", 1}, {"train", {{"loss", {{"lambda2", 0.0}}}}}});
  EXPECT_EQ(a.train.seed, c.train.seed);
}

TEST(Config, CollectsEveryProblem) {
  json user = {{"seed", -1},
               {"bogus", 1},
               {"model", {{"u", "wide"}}}};
  try {
    resolve_config(user);
    FAIL();
  } catch (const ConfigValidationError& e) {
    EXPECT_EQ(e.diagnostics().size(), 2u);  // unknown key + type error stop before range checks
  }
  user = {{"seed", -1},
          {"train", {{"loss", {{"tau", 0.0}}}, {"optimizer", "rmsprop"}}},
          {"dataset", {{"way", 0}}}};
  try {
    resolve_config(user);
    FAIL();
  } catch (const ConfigValidationError& e) {
    EXPECT_GE(e.diagnostics().size(), 4u);
    std::string all;
    for (const auto& d : e.diagnostics()) all += d + "\n";
    EXPECT_NE(all.find("train.loss.tau"), std::string::npos) << all;
    EXPECT_NE(all.find("train.optimizer"), std::string::npos) << all;
    EXPECT_NE(all.find("dataset.way"), std::string::npos) << all;
    EXPECT_NE(all.find("seed"), std::string::npos) << all;
  }
}

TEST(Config, ImageDatasetChecksFiles) {
  json user = {{"dataset", {{"kind", "image"}, {"root", "/nonexistent/x"}, {"split_spec", "/nonexistent/s.json"}}},
               {"model", {{"backbone", "cnn"}}}};
  try {
    resolve_config(user);
    FAIL();
  } catch (const ConfigValidationError& e) {
    EXPECT_EQ(e.diagnostics().size(), 3u);
  }
}

TEST(Config, OverridesAndFiles) {
  testing::TempDir dir("cfg");
  std::ofstream(dir / "c.toml") << "seed = 3\n[model]\nu = 10\n";
  const auto cfg = load_experiment_config(dir / "c.toml", {"model.u=14", "train.loss.lambda2=0", "output_dir=o/p"});
  EXPECT_EQ(cfg.model.u, 14u);
  EXPECT_DOUBLE_EQ(cfg.train.loss.lambda2, 0.0);
  EXPECT_EQ(cfg.output_dir, std::filesystem::path("o/p"));
  EXPECT_THROW(load_experiment_config(dir / "c.toml", {"novalue"}), ConfigValidationError);
  EXPECT_THROW(load_experiment_config(dir / "c.toml", {"model.u.x=3"}), ConfigValidationError);
  EXPECT_THROW(load_experiment_config(dir / "missing.toml"), ConfigValidationError);
  std::ofstream(dir / "bad.toml") << "seed = \n";
  EXPECT_THROW(load_experiment_config(dir / "bad.toml"), ConfigValidationError);
}

TEST(Config, BuildsTheConfiguredStream) {
  const auto cfg = resolve_config({{"dataset", {{"num_base_classes", 4}, {"num_sessions", 2}, {"way", 2}}},
                                   {"model", {{"num_superclasses", 2}}}});
  const auto stream = build_stream(cfg);
  EXPECT_EQ(stream.num_tasks(), 2u);
  EXPECT_EQ(stream.task(1).classes.size(), 4u);
}

}  // namespace
}  // namespace semkd
