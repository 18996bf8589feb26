#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pong/errors.hpp"
#include "pong/trainer.hpp"

using namespace pong;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pong_trainer_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

RunConfig tiny_run(std::uint64_t seed) {
  RunConfig run;
  run.train.hidden = {8};
  run.train.batch_episodes = 2;
  run.train.max_batches = 2;
  run.train.seed = seed;
  run.game.points_to_win = 2;
  return run;
}

EpisodeMemory memory_with(const std::vector<Eigen::VectorXd>& probs, const std::vector<int>& actions,
                          const std::vector<double>& rewards) {
  EpisodeMemory m;
  m.probabilities = probs;
  m.actions = actions;
  m.rewards = rewards;
  m.inputs.resize(actions.size());
  return m;
}

}  // namespace

TEST(Discount, WorkedCases) {
  const auto a = discount_rewards(std::vector<double>{0, 0, 1}, 0.99);
  EXPECT_DOUBLE_EQ(a[0], 0.9801);
  EXPECT_DOUBLE_EQ(a[1], 0.99);
  EXPECT_DOUBLE_EQ(a[2], 1.0);
  const auto b = discount_rewards(std::vector<double>{1, 0, 0, -1}, 0.99);
  EXPECT_DOUBLE_EQ(b[0], 1.0);
  EXPECT_DOUBLE_EQ(b[1], -0.9801);
  EXPECT_DOUBLE_EQ(b[2], -0.99);
  EXPECT_DOUBLE_EQ(b[3], -1.0);
}

TEST(Discount, TrailingZerosStayZeroAndEmptyIsEmpty) {
  const auto a = discount_rewards(std::vector<double>{1, 0, 0}, 0.9);
  EXPECT_EQ(a, (std::vector<double>{1, 0, 0}));
  EXPECT_TRUE(discount_rewards(std::vector<double>{}, 0.9).empty());
}

TEST(Discount, MatchesReferenceRecursion) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(rng.uniform_int(0, 300)));
    for (auto& v : r) v = static_cast<double>(rng.uniform_int(-1, 1));
    const double gamma = 0.9;
    EXPECT_EQ(discount_rewards(r, gamma), oracle::discount(r, gamma));
  }
}

TEST(PolicyGradient, OneHotMinusProbTimesReturn) {
  const Eigen::VectorXd p = Eigen::Vector3d(0.2, 0.5, 0.3);
  const auto g = policy_gradient(p, 1, -2.0);
  EXPECT_DOUBLE_EQ(g(0), 0.4);
  EXPECT_DOUBLE_EQ(g(1), -1.0);
  EXPECT_DOUBLE_EQ(g(2), 0.6);
  EXPECT_NEAR(g.sum(), 0.0, 1e-15);
  EXPECT_THROW(policy_gradient(p, 3, 1.0), ArgumentError);
  EXPECT_THROW(policy_gradient(p, -1, 1.0), ArgumentError);
}

TEST(Labels, OneHotWorkedCase) {
  auto m = memory_with({Eigen::Vector2d(0.5, 0.5)}, {0}, {1.0});
  process_episode(m, 0.99);
  const auto labels = make_labels(m, 0.001, LabelBase::OneHot);
  EXPECT_DOUBLE_EQ(labels[0](0), 1.0005);
  EXPECT_DOUBLE_EQ(labels[0](1), -0.0005);
}

TEST(Labels, ProbabilityBaseAddsScaledGradient) {
  auto m = memory_with({Eigen::Vector2d(0.7, 0.3)}, {1}, {-1.0});
  process_episode(m, 0.99);
  const auto labels = make_labels(m, 0.01, LabelBase::Probabilities);
  EXPECT_DOUBLE_EQ(labels[0](0), 0.7 + 0.01 * 0.7);
  EXPECT_DOUBLE_EQ(labels[0](1), 0.3 - 0.01 * 0.7);
}

TEST(Labels, RequireProcessedEpisode) {
  auto m = memory_with({Eigen::Vector2d(0.5, 0.5)}, {0}, {1.0});
  EXPECT_THROW(make_labels(m, 0.001), UsageError);
  process_episode(m, 0.99);
  EXPECT_THROW(process_episode(m, 0.99), UsageError);
}

TEST(Standardize, ZeroMeanUnitVariance) {
  std::vector<double> v{1, 2, 3, 4, 10};
  standardize(v);
  double mean = 0, sq = 0;
  for (double x : v) mean += x;
  mean /= 5;
  for (double x : v) sq += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq / 5, 1.0, 1e-12);
  std::vector<double> flat{-0.5, -0.5};
  standardize(flat);
  EXPECT_EQ(flat, (std::vector<double>{0.0, 0.0}));
}

TEST(TrailingAverage, WindowedMeans) {
  const std::vector<double> v{2, 4, 6, 8};
  EXPECT_EQ(trailing_average(v, 2), (std::vector<double>{2, 3, 5, 7}));
  EXPECT_EQ(trailing_average(v, 10), (std::vector<double>{2, 3, 4, 5}));
}

TEST(ActionSpace, IndicesMapToPaddleActions) {
  EXPECT_EQ(action_count(ActionSpace::UpDown), 2);
  EXPECT_EQ(action_count(ActionSpace::UpDownNone), 3);
  EXPECT_EQ(to_paddle_action(0), PaddleAction::Up);
  EXPECT_EQ(to_paddle_action(1), PaddleAction::Down);
  EXPECT_EQ(to_paddle_action(2), PaddleAction::None);
  EXPECT_THROW(to_paddle_action(3), ArgumentError);
}

TEST(PlayEpisode, RecordsEveryStepAndEndsTheGame) {
  GameConfig game;
  game.points_to_win = 3;
  const auto net = init_network({80 * 96, 10, 2}, 4);
  Rng rng(4);
  const auto m = play_episode(net, game, OpponentKind::Consistent, ActionSpace::UpDown, rng);
  EXPECT_FALSE(m.truncated);
  EXPECT_EQ(std::max(m.agent_score, m.opponent_score), 3);
  EXPECT_EQ(m.inputs.size(), m.size());
  EXPECT_EQ(m.rewards.size(), m.size());
  double agent = 0, opponent = 0;
  for (double r : m.rewards) (r > 0 ? agent : opponent) += r != 0 ? 1 : 0;
  EXPECT_EQ(agent, m.agent_score);
  EXPECT_EQ(opponent, m.opponent_score);
  EXPECT_GT(m.inputs.front().nonZeros(), 0);  // first difference is the whole frame
}

TEST(PlayEpisode, StepCapTruncates) {
  const auto net = init_network({80 * 96, 10, 2}, 4);
  Rng rng(4);
  const auto m = play_episode(net, GameConfig{}, OpponentKind::Consistent, ActionSpace::UpDown, rng, 7);
  EXPECT_EQ(m.size(), 7u);
  EXPECT_TRUE(m.truncated);
}

TEST(PlayEpisode, RejectsMismatchedNetwork) {
  const auto net = init_network({80 * 96, 10, 3}, 4);
  Rng rng(4);
  EXPECT_THROW(play_episode(net, GameConfig{}, OpponentKind::Consistent, ActionSpace::UpDown, rng),
               ArgumentError);
}

TEST(RunConfig, SetAndDescribe) {
  RunConfig run;
  run.set("hidden", "200-200-100");
  run.set("ball_diameter", "6");
  run.set("label_base", "onehot");
  EXPECT_EQ(run.train.hidden, (std::vector<int>{200, 200, 100}));
  EXPECT_EQ(run.game.ball_diameter, 6);
  EXPECT_EQ(run.layer_spec(), (LayerSpec{7680, 200, 200, 100, 2}));
  const auto lines = run.describe();
  EXPECT_NE(std::find(lines.begin(), lines.end(), "hidden=200-200-100"), lines.end());
  EXPECT_NE(std::find(lines.begin(), lines.end(), "label_base=onehot"), lines.end());
  EXPECT_THROW(run.set("nonsense", "1"), ConfigError);
  EXPECT_THROW(run.set("gamma", "abc"), ConfigError);
  EXPECT_THROW(run.set("hidden", "200--1"), ConfigError);
}

TEST(RunConfig, DrillNeedsDrillOpponent) {
  RunConfig run;
  run.set("mode", "drill");
  EXPECT_THROW(run.validate(), ConfigError);
  run.set("opponent", "drill-none");
  EXPECT_NO_THROW(run.validate());
  run.set("mode", "versus");
  EXPECT_THROW(run.validate(), ConfigError);
}

TEST(TrainBatch, ChangesWeightsAndReportsLoss) {
  auto run = tiny_run(1);
  auto net = init_network(run.layer_spec(), 1);
  const auto before = net;
  std::vector<EpisodeMemory> memories;
  for (int e = 0; e < 2; ++e) {
    GameConfig game = run.game;
    game.seed = static_cast<std::uint64_t>(e);
    Rng rng(static_cast<std::uint64_t>(e) + 10);
    memories.push_back(play_episode(net, game, run.train.opponent, run.train.action_space, rng));
  }
  auto opt = run.train.make_optimizer();
  const auto metrics = train_batch(net, memories, run.train, opt);
  EXPECT_GT(metrics.mean_loss, 0.0);
  EXPECT_EQ(metrics.agent_points + metrics.opponent_points,
            memories[0].agent_score + memories[0].opponent_score + memories[1].agent_score +
                memories[1].opponent_score);
  EXPECT_FALSE(net == before);
}

TEST(TrainingLoop, ZeroBatchesWritesOnlyInitialWeights) {
  auto run = tiny_run(3);
  run.train.max_batches = 0;
  const auto dir = fresh_dir("zero");
  const auto summary = training_loop(run, dir.string());
  EXPECT_EQ(summary.batches, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "weights_initial.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "weights_final.json"));
  EXPECT_EQ(load_weights((dir / "weights_initial.json").string()), init_network(run.layer_spec(), 3));
  std::filesystem::remove_all(dir);
}

TEST(TrainingLoop, SameSeedSameBytes) {
  const auto a = fresh_dir("a"), b = fresh_dir("b");
  training_loop(tiny_run(7), a.string());
  training_loop(tiny_run(7), b.string());
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "weights_final.json"), slurp(b / "weights_final.json"));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(TrainingLoop, WorkersDoNotChangeResults) {
  const auto a = fresh_dir("w1"), b = fresh_dir("w2");
  auto run = tiny_run(9);
  training_loop(run, a.string());
  run.train.workers = 2;
  training_loop(run, b.string());
  EXPECT_EQ(slurp(a / "weights_final.json"), slurp(b / "weights_final.json"));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(TrainingLoop, MetricsLayout) {
  const auto dir = fresh_dir("metrics");
  training_loop(tiny_run(5), dir.string(), {"preset=test"});
  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# preset=test");
  while (std::getline(in, line) && line.rfind("# ", 0) == 0) {
  }
  EXPECT_EQ(line, kMetricsHeader);
  int episode_rows = 0, batch_rows = 0;
  while (std::getline(in, line)) {
    const auto first = line.find(',');
    (line[first + 1] == ',' ? batch_rows : episode_rows) += 1;
  }
  EXPECT_EQ(episode_rows, 4);
  EXPECT_EQ(batch_rows, 2);
  std::filesystem::remove_all(dir);
}

TEST(TrainingLoop, PatienceStops) {
  auto run = tiny_run(2);
  run.train.max_batches = 50;
  run.train.stop_patience = 1;
  run.train.step_size = 1e-9;
  const auto dir = fresh_dir("patience");
  const auto summary = training_loop(run, dir.string());
  EXPECT_LT(summary.batches, 50);
  EXPECT_TRUE(summary.stopped_on_patience);
  EXPECT_TRUE(std::filesystem::exists(dir / "weights_final.json"));
  std::filesystem::remove_all(dir);
}

TEST(PlayEpisode, LongRallyIsReplayedWithPenalty) {
  const auto net = init_network({80 * 96, 10, 2}, 4);
  Rng rng(4);
  const auto m =
      play_episode(net, GameConfig{}, OpponentKind::Consistent, ActionSpace::UpDown, rng, 23, 5);
  // a serve needs more than 5 steps to reach a goal, so every rally is cut
  EXPECT_EQ(m.size(), 23u);
  EXPECT_EQ(m.stalls, 4);
  for (std::size_t t = 0; t < m.size(); ++t) {
    EXPECT_EQ(m.rewards[t], (t + 1) % 5 == 0 ? -1.0 : 0.0) << t;
  }
  EXPECT_EQ(m.opponent_score, 0);
  EXPECT_EQ(m.agent_score, 0);
}
