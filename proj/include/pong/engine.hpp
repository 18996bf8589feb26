#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "pong/rng.hpp"

namespace pong {

enum class PaddleAction { Up, Down, None };
enum class GameMode { Versus, Drill };

std::string_view to_string(PaddleAction action);
std::string_view to_string(GameMode mode);
PaddleAction parse_paddle_action(std::string_view text);
GameMode parse_game_mode(std::string_view text);

/// Row-major binary raster, one byte per pixel; rows are y, columns are x.
using Frame = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Physics and match constants. Lengths are pixels, speeds pixels per tick.
struct GameConfig {
  int field_height = 160;
  int field_width = 192;
  int paddle_height = 16;
  int paddle_width = 4;
  double paddle_speed = 1.0;
  int paddle_inset = 8;
  int ball_diameter = 2;
  double ball_speed_x = 1.0;
  double max_deflection_vy = 1.0;
  int points_to_win = 21;
  int ticks_per_step = 10;
  GameMode mode = GameMode::Versus;
  std::uint64_t seed = 0;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// x of the left paddle's ball-facing edge and of the right paddle's.
  int left_face() const { return paddle_inset + paddle_width; }
  int right_face() const { return field_width - paddle_inset - paddle_width; }

  bool operator==(const GameConfig&) const = default;
};

/// Sets one field from its config-file key. Returns false for unknown keys;
/// throws ConfigError for unparsable values.
bool apply_game_setting(GameConfig& config, std::string_view key, std::string_view value);

/// Flat `key = value` format, `#` starts a comment. Unknown keys are errors.
GameConfig parse_game_config(std::istream& in);
GameConfig load_game_config(const std::string& path);
std::string game_config_text(const GameConfig& config);

struct GameState {
  GameConfig config;
  double ball_x = 0.0;  // top-left corner of the ball square
  double ball_y = 0.0;
  double ball_vx = 0.0;
  double ball_vy = 0.0;
  double left_paddle_y = 0.0;  // top edge
  double right_paddle_y = 0.0;
  int left_score = 0;
  int right_score = 0;
  std::int64_t tick = 0;
  Rng rng;
  bool done = false;

  bool operator==(const GameState&) const = default;
};

struct TickResult {
  int left_reward = 0;
  int right_reward = 0;
  bool scored() const { return left_reward != 0 || right_reward != 0; }
};

struct StepResult {
  int left_reward = 0;
  int right_reward = 0;
  bool done = false;
  int ticks = 0;  // physics ticks actually simulated
  Frame frame;
};

GameState new_game(const GameConfig& config);

/// Advances one physics tick. Throws UsageError once the game is done.
TickResult tick(GameState& state, PaddleAction left, PaddleAction right);

/// Repeats the actions for config.ticks_per_step ticks, stopping after the
/// first tick that produces a reward, then renders.
StepResult step(GameState& state, PaddleAction left, PaddleAction right);

Frame render(const GameState& state);
void render_into(const GameState& state, Frame& frame);

/// Drill mode only: new ball somewhere on the left half heading right.
void spawn_drill_ball(GameState& state);

/// Abandons the current rally without scoring: a fresh serve in a random
/// direction (Versus) or a new drill ball. Throws UsageError once the game is done.
void replay_point(GameState& state);

/// One newline-free JSON record describing the state after a step.
std::string trajectory_record(const GameState& state, const StepResult& result);

}  // namespace pong
