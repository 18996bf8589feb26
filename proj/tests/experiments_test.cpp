#include <algorithm>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "pong/errors.hpp"
#include "pong/experiments.hpp"

using namespace pong;

TEST(Presets, BaselineValues) {
  const auto run = resolve_preset("baseline");
  EXPECT_EQ(run.train.hidden, (std::vector<int>{200}));
  EXPECT_EQ(run.train.batch_episodes, 10);
  EXPECT_DOUBLE_EQ(run.train.alpha, 0.001);
  EXPECT_EQ(run.game.ball_diameter, 2);
  EXPECT_EQ(run.train.opponent, OpponentKind::Consistent);
  EXPECT_DOUBLE_EQ(run.train.gamma, 0.99);
}

TEST(Presets, VariantsOverrideOnlyTheirField) {
  EXPECT_DOUBLE_EQ(resolve_preset("lr-high").train.alpha, 0.01);
  EXPECT_EQ(resolve_preset("arch-200-200-100").train.hidden, (std::vector<int>{200, 200, 100}));
  const auto ball = resolve_preset("ball-6");
  EXPECT_EQ(ball.game.ball_diameter, 6);
  EXPECT_EQ(ball.train.hidden, (std::vector<int>{200}));
  EXPECT_EQ(resolve_preset("opp-partial").train.opponent, OpponentKind::Partial);
  const auto drill = resolve_preset("drill");
  EXPECT_EQ(drill.game.mode, GameMode::Drill);
  EXPECT_EQ(drill.train.opponent, OpponentKind::DrillNone);
}

TEST(Presets, EveryPresetResolves) {
  const auto names = preset_names();
  EXPECT_GE(names.size(), 10u);
  for (const auto& n : names) EXPECT_NO_THROW(resolve_preset(n)) << n;
}

TEST(Presets, UnknownNameListsChoices) {
  try {
    resolve_preset("giant");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("baseline"), std::string::npos);
  }
}

TEST(Presets, OverridesApplyLast) {
  const auto run = resolve_preset("lr-high", {{"alpha", "0.5"}, {"max_batches", "50"}});
  EXPECT_DOUBLE_EQ(run.train.alpha, 0.5);
  EXPECT_EQ(run.train.max_batches, 50);
  EXPECT_THROW(resolve_preset("baseline", {{"bogus", "1"}}), ConfigError);
}

TEST(ParseOverride, SplitsAtFirstEquals) {
  EXPECT_EQ(parse_override("hidden=200-100"), (std::pair<std::string, std::string>{"hidden", "200-100"}));
  EXPECT_EQ(parse_override("a=b=c").second, "b=c");
  EXPECT_THROW(parse_override("novalue"), ConfigError);
  EXPECT_THROW(parse_override("=3"), ConfigError);
}

TEST(RunPreset, HeaderRecordsPresetAndOverrides) {
  const auto dir = std::filesystem::temp_directory_path() / "pong_experiments_test";
  std::filesystem::remove_all(dir);
  run_preset("baseline", {{"max_batches", "1"}, {"batch_episodes", "1"}, {"points_to_win", "1"}},
             dir.string());
  std::ifstream in(dir / "metrics.csv");
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(first, "# preset=baseline");
  EXPECT_EQ(second, "# override max_batches=1");
  EXPECT_TRUE(std::filesystem::exists(dir / "weights_final.json"));
  std::filesystem::remove_all(dir);
}
