#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pong/errors.hpp"
#include "pong/viz.hpp"

using namespace pong;
using namespace pong::viz;
using nlohmann::json;

namespace {

ExhibitSession small_session(std::uint64_t seed = 1, bool stochastic = false) {
  ExhibitSettings settings;
  settings.seed = seed;
  settings.stochastic = stochastic;
  settings.weight_display_threshold = 0.05;
  settings.activation_threshold = 0.01;
  return ExhibitSession(init_network({80 * 96, 12, 6, 2}, seed), GameConfig{}, settings);
}

// Brute force: retained weights leaving active sources, recomputed from the network.
std::size_t oracle_edges(const Network& net, const ModelInput& input, double weight_threshold,
                         double activation_threshold) {
  const auto x = flatten(input);
  const auto trace = forward(net, x);
  std::size_t count = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& w = net.layers[l].weights;
    for (Eigen::Index src = 0; src < w.cols(); ++src) {
      const bool active = l == 0 ? x(src) != 0.0 : trace.layers[l - 1](src) > activation_threshold;
      if (!active) continue;
      for (Eigen::Index dst = 0; dst < w.rows(); ++dst) count += std::abs(w(dst, src)) >= weight_threshold;
    }
  }
  return count;
}

}  // namespace

TEST(Snapshot, StrictThreshold) {
  Trace trace;
  trace.layers = {Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(2)};
  EXPECT_TRUE(snapshot_activations(trace, 0.0).empty());
  EXPECT_EQ(snapshot_activations(trace, -1.0).size(), 7u);
}

TEST(Snapshot, MatchesFilterAndSortOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Trace trace;
    for (int l = 0; l < 3; ++l) {
      Eigen::VectorXd a(rng.uniform_int(1, 20));
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.coin() ? 0.0 : rng.uniform(0, 1);
      trace.layers.push_back(a);
    }
    const double threshold = rng.uniform(0, 0.8);
    std::vector<ActiveNeuron> expected;
    for (int l = 2; l >= 0; --l) {
      for (Eigen::Index i = trace.layers[l].size() - 1; i >= 0; --i) {
        if (trace.layers[l](i) > threshold) expected.push_back({l, static_cast<int>(i), trace.layers[l](i)});
      }
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
      return std::pair{a.layer, a.index} < std::pair{b.layer, b.index};
    });
    EXPECT_EQ(snapshot_activations(trace, threshold), expected);
  }
}

TEST(SparseInput, NoZerosRowMajor) {
  ModelInput m = ModelInput::Zero(2, 3);
  m(0, 2) = 1;
  m(1, 0) = -1;
  EXPECT_EQ(sparse_input(m), (std::vector<std::pair<int, int>>{{2, 1}, {3, -1}}));
}

TEST(Commands, RoundTrip) {
  const std::vector<ClientCommand> commands{PaddleCommand{PaddleAction::Up}, PauseCommand{},
                                            ResumeCommand{}, ResetCommand{}, SpeedCommand{12.5}};
  for (const auto& c : commands) {
    const auto back = parse_command(to_json(c).dump());
    EXPECT_EQ(back.index(), c.index());
  }
  EXPECT_EQ(std::get<PaddleCommand>(parse_command(R"({"type":"command","command":"paddle","action":"down"})")).action,
            PaddleAction::Down);
  EXPECT_DOUBLE_EQ(std::get<SpeedCommand>(parse_command(R"({"type":"command","command":"set_speed","fps":60})")).fps,
                   60.0);
}

TEST(Commands, UnknownKindIsRejectedMalformedIsViolation) {
  EXPECT_THROW(parse_command(R"({"type":"command","command":"teleport"})"), ArgumentError);
  EXPECT_THROW(parse_command(R"({"type":"command","command":"paddle","action":"left"})"), ArgumentError);
  EXPECT_THROW(parse_command(R"({"type":"command","command":"set_speed","fps":-3})"), ArgumentError);
  EXPECT_THROW(parse_command(R"({"type":"frame"})"), ArgumentError);
  EXPECT_THROW(parse_command("{not json"), ParseError);
  EXPECT_THROW(parse_command("[1,2]"), ParseError);
  EXPECT_THROW(parse_command(R"({"type":"command"})"), ParseError);
}

TEST(Hello, RoundTripsNetworkAndSettings) {
  auto session = small_session();
  const auto hello = session.hello();
  const auto back = hello_from_json(json::parse(to_json(hello).dump()));
  EXPECT_EQ(back.layer_sizes, hello.layer_sizes);
  EXPECT_EQ(back.input_rows, 80);
  EXPECT_EQ(back.input_cols, 96);
  EXPECT_EQ(back.action_labels, (std::vector<std::string>{"up", "down"}));
  ASSERT_EQ(back.layers.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(back.layers[l], session.network().layers[l]);
  EXPECT_EQ(back.inference, "argmax");
  EXPECT_EQ(back.game.ball_diameter, 2);
}

TEST(Exhibit, FallbackPlaysWithoutController) {
  auto session = small_session();
  const double start = session.state().left_paddle_y;
  bool moved = false;
  for (int i = 0; i < 40; ++i) {
    session.advance();
    moved = moved || session.state().left_paddle_y != start;
  }
  EXPECT_TRUE(moved);
  EXPECT_FALSE(session.has_controller());
}

TEST(Exhibit, ActionIsArgmaxOfBroadcastProbabilities) {
  auto session = small_session(5);
  for (int i = 0; i < 100 && !session.game_over(); ++i) {
    const auto u = session.advance();
    const auto best = std::max_element(u.probabilities.begin(), u.probabilities.end()) - u.probabilities.begin();
    ASSERT_EQ(u.action, best);
  }
}

TEST(Exhibit, ControllerUpClampsAtTop) {
  auto session = small_session();
  session.set_controller(true);
  session.apply(PaddleCommand{PaddleAction::Up});
  for (int i = 0; i < 10; ++i) session.advance();
  EXPECT_EQ(session.state().left_paddle_y, 0.0);
  session.set_controller(false);
}

TEST(Exhibit, PauseResumeKeepsSequenceContiguous) {
  auto session = small_session();
  EXPECT_EQ(session.advance().sequence, 1u);
  session.apply(PauseCommand{});
  EXPECT_THROW(session.advance(), UsageError);
  session.apply(ResumeCommand{});
  EXPECT_EQ(session.advance().sequence, 2u);
  session.apply(SpeedCommand{7});
  EXPECT_EQ(session.frame_rate(), 7.0);
}

TEST(Exhibit, ResetStartsFreshGame) {
  auto session = small_session();
  while (!session.game_over()) session.advance();
  EXPECT_THROW(session.advance(), UsageError);
  session.apply(ResetCommand{});
  EXPECT_FALSE(session.game_over());
  EXPECT_EQ(session.state().left_score + session.state().right_score, 0);
}

TEST(Exhibit, RejectsMismatchedNetwork) {
  EXPECT_THROW(ExhibitSession(init_network({100, 4, 2}, 1), GameConfig{}, ExhibitSettings{}), ConfigError);
  ExhibitSettings bad;
  bad.frame_rate = 0;
  EXPECT_THROW(ExhibitSession(init_network({7680, 4, 2}, 1), GameConfig{}, bad), ConfigError);
}

TEST(Exhibit, DefaultWeightThresholdShowsAtMostFivePercentOfBaseline) {
  const auto net = init_network({7680, 200, 2}, 0);
  const double threshold = ExhibitSettings{}.weight_display_threshold;
  std::size_t shown = 0, total = 0;
  for (const auto& l : net.layers) {
    shown += static_cast<std::size_t>((l.weights.array().abs() >= threshold).count());
    total += static_cast<std::size_t>(l.weights.size());
  }
  EXPECT_LE(static_cast<double>(shown) / static_cast<double>(total), 0.05);
  EXPECT_GT(shown, 0u);
}

TEST(PercentLabel, RoundsHalfUp) {
  EXPECT_EQ(percent_label(0.9), "90%");
  EXPECT_EQ(percent_label(0.1), "10%");
  EXPECT_EQ(percent_label(0.125), "13%");
  EXPECT_EQ(percent_label(1.0), "100%");
  EXPECT_EQ(percent_label(0.0), "0%");
}

TEST(Session, RecordedSessionValidatesWithOracleEdgeCounts) {
  auto session = small_session(2);
  std::stringstream recorded;
  record_session(session, 200, recorded);
  const std::string text = recorded.str();
  std::istringstream in(text);
  const auto validator = validate_session(in);
  ASSERT_TRUE(validator.ok()) << validator.violations().front();
  ASSERT_EQ(validator.frames().size(), 200u);

  // replay the same session independently and compare edge counts
  auto replay = small_session(2);
  FramePreprocessor pre(full_field(GameConfig{}));
  Frame frame = render(replay.state());
  for (std::size_t f = 0; f < 200; ++f) {
    if (replay.game_over()) {
      replay.apply(ResetCommand{});
      pre.reset();
      frame = render(replay.state());
    }
    const auto input = pre(frame);
    const auto expected = oracle_edges(replay.network(), input, 0.05, 0.01);
    const auto u = replay.advance();
    frame = render(replay.state());
    ASSERT_EQ(validator.frames()[f].drawn_edges, expected) << "frame " << f;
    ASSERT_EQ(validator.frames()[f].output_labels.size(), 2u);
    ASSERT_EQ(validator.frames()[f].output_labels[0], percent_label(u.probabilities[0]));
  }
}

TEST(Session, StochasticModeValidates) {
  auto session = small_session(4, true);
  std::stringstream recorded;
  record_session(session, 50, recorded);
  const auto validator = validate_session(recorded);
  EXPECT_TRUE(validator.ok());
}

TEST(Validator, FlagsViolations) {
  auto session = small_session(6);
  const auto hello = to_json(session.hello()).dump();
  auto frame = to_json(session.advance());
  {
    ProtocolValidator v;
    EXPECT_FALSE(v.accept(frame.dump()));  // before hello
  }
  auto check = [&](const std::function<void(json&)>& tamper) {
    ProtocolValidator v;
    EXPECT_TRUE(v.accept(hello));
    json f = frame;
    tamper(f);
    return v.accept(f.dump());
  };
  EXPECT_TRUE(check([](json&) {}));
  EXPECT_FALSE(check([](json& f) { f["input"].push_back({7000, 0}); }));
  EXPECT_FALSE(check([](json& f) { f["probabilities"][0] = 0.9; f["probabilities"][1] = 0.9; }));
  EXPECT_FALSE(check([](json& f) { f["action"] = 1 - f["action"].get<int>(); }));
  EXPECT_FALSE(check([](json& f) { f["active"].push_back({0, 0, 0.0}); }));
  EXPECT_FALSE(check([](json& f) { f["game_over"] = true; }));
  EXPECT_FALSE(check([](json& f) { f.erase("scores"); }));

  ProtocolValidator v;
  v.accept(hello);
  EXPECT_FALSE(v.accept(hello));
  v.accept(frame.dump());
  frame["sequence"] = 5;
  EXPECT_FALSE(v.accept(frame.dump()));
  EXPECT_TRUE(v.accept(error_message("x").dump()));
  EXPECT_EQ(v.errors_received(), 1u);
  EXPECT_FALSE(v.accept("garbage"));
}
