#include "pong/engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pong/errors.hpp"

namespace pong {

namespace {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return std::string(text.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto text = trim(value);
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + text + "'");
  }
  return out;
}

void move_paddle(double& y, PaddleAction action, const GameConfig& config) {
  if (action == PaddleAction::Up) y -= config.paddle_speed;
  if (action == PaddleAction::Down) y += config.paddle_speed;
  y = std::clamp(y, 0.0, static_cast<double>(config.field_height - config.paddle_height));
}

bool overlaps_vertically(double ball_y, double paddle_y, const GameConfig& config) {
  return ball_y < paddle_y + config.paddle_height && ball_y + config.ball_diameter > paddle_y;
}

double deflection(double ball_y, double paddle_y, const GameConfig& config) {
  const double half = config.paddle_height / 2.0;
  const double offset = (ball_y + config.ball_diameter / 2.0) - (paddle_y + half);
  return config.max_deflection_vy * std::clamp(offset / half, -1.0, 1.0);
}

void serve(GameState& state, int direction) {
  const auto& c = state.config;
  state.ball_x = (c.field_width - c.ball_diameter) / 2.0;
  state.ball_y = (c.field_height - c.ball_diameter) / 2.0;
  state.ball_vx = direction * c.ball_speed_x;
  state.ball_vy = static_cast<double>(state.rng.uniform_int(-1, 1)) * c.max_deflection_vy;
}

void fill_rect(Frame& frame, int y, int x, int height, int width) {
  const int y0 = std::max(y, 0);
  const int x0 = std::max(x, 0);
  const int y1 = std::min<int>(y + height, static_cast<int>(frame.rows()));
  const int x1 = std::min<int>(x + width, static_cast<int>(frame.cols()));
  if (y1 > y0 && x1 > x0) frame.block(y0, x0, y1 - y0, x1 - x0).setOnes();
}

}  // namespace

std::string_view to_string(PaddleAction action) {
  switch (action) {
    case PaddleAction::Up: return "up";
    case PaddleAction::Down: return "down";
    case PaddleAction::None: return "none";
  }
  return "none";
}

std::string_view to_string(GameMode mode) {
  return mode == GameMode::Drill ? "drill" : "versus";
}

PaddleAction parse_paddle_action(std::string_view text) {
  if (text == "up") return PaddleAction::Up;
  if (text == "down") return PaddleAction::Down;
  if (text == "none") return PaddleAction::None;
  throw ArgumentError("unknown paddle action '" + std::string(text) + "'");
}

GameMode parse_game_mode(std::string_view text) {
  if (text == "versus") return GameMode::Versus;
  if (text == "drill") return GameMode::Drill;
  throw ConfigError("unknown game mode '" + std::string(text) + "'");
}

void GameConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid game config: ") + what);
  };
  require(field_height > 0 && field_width > 0, "field dimensions must be positive");
  require(field_height % 2 == 0 && field_width % 2 == 0, "field dimensions must be even");
  require(paddle_height > 0 && paddle_width > 0, "paddle dimensions must be positive");
  require(paddle_height < field_height, "paddle_height must be below field_height");
  require(ball_diameter >= 1 && ball_diameter < field_height, "ball_diameter out of range");
  require(paddle_speed > 0.0 && std::isfinite(paddle_speed), "paddle_speed must be positive");
  require(ball_speed_x > 0.0 && std::isfinite(ball_speed_x), "ball_speed_x must be positive");
  require(max_deflection_vy >= 0.0 && max_deflection_vy < field_height - ball_diameter,
          "max_deflection_vy out of range");
  require(paddle_inset >= 0, "paddle_inset must be non-negative");
  require(right_face() - left_face() > ball_diameter, "paddles leave no room for the ball");
  require(points_to_win >= 1, "points_to_win must be at least 1");
  require(ticks_per_step >= 1, "ticks_per_step must be at least 1");
}

bool apply_game_setting(GameConfig& config, std::string_view key, std::string_view value) {
  if (key == "field_height") config.field_height = parse_number<int>(key, value);
  else if (key == "field_width") config.field_width = parse_number<int>(key, value);
  else if (key == "paddle_height") config.paddle_height = parse_number<int>(key, value);
  else if (key == "paddle_width") config.paddle_width = parse_number<int>(key, value);
  else if (key == "paddle_speed") config.paddle_speed = parse_number<double>(key, value);
  else if (key == "paddle_inset") config.paddle_inset = parse_number<int>(key, value);
  else if (key == "ball_diameter") config.ball_diameter = parse_number<int>(key, value);
  else if (key == "ball_speed_x") config.ball_speed_x = parse_number<double>(key, value);
  else if (key == "max_deflection_vy") config.max_deflection_vy = parse_number<double>(key, value);
  else if (key == "points_to_win") config.points_to_win = parse_number<int>(key, value);
  else if (key == "ticks_per_step") config.ticks_per_step = parse_number<int>(key, value);
  else if (key == "mode") config.mode = parse_game_mode(trim(value));
  else if (key == "seed") config.seed = parse_number<std::uint64_t>(key, value);
  else return false;
  return true;
}

GameConfig parse_game_config(std::istream& in) {
  GameConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = std::string_view(body).substr(eq + 1);
    if (!apply_game_setting(config, key, value)) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

GameConfig load_game_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open game config '" + path + "'");
  return parse_game_config(in);
}

std::string game_config_text(const GameConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "field_height = " << c.field_height << '\n'
      << "field_width = " << c.field_width << '\n'
      << "paddle_height = " << c.paddle_height << '\n'
      << "paddle_width = " << c.paddle_width << '\n'
      << "paddle_speed = " << c.paddle_speed << '\n'
      << "paddle_inset = " << c.paddle_inset << '\n'
      << "ball_diameter = " << c.ball_diameter << '\n'
      << "ball_speed_x = " << c.ball_speed_x << '\n'
      << "max_deflection_vy = " << c.max_deflection_vy << '\n'
      << "points_to_win = " << c.points_to_win << '\n'
      << "ticks_per_step = " << c.ticks_per_step << '\n'
      << "mode = " << to_string(c.mode) << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

GameState new_game(const GameConfig& config) {
  config.validate();
  GameState state;
  state.config = config;
  state.rng = Rng(config.seed);
  state.left_paddle_y = (config.field_height - config.paddle_height) / 2.0;
  state.right_paddle_y = state.left_paddle_y;
  if (config.mode == GameMode::Drill) {
    spawn_drill_ball(state);
  } else {
    serve(state, state.rng.coin() ? 1 : -1);
  }
  return state;
}

void spawn_drill_ball(GameState& state) {
  const auto& c = state.config;
  if (c.mode != GameMode::Drill) throw UsageError("spawn_drill_ball requires drill mode");
  state.ball_x = state.rng.uniform(0.0, c.field_width / 2.0 - c.ball_diameter);
  state.ball_y = state.rng.uniform(0.0, static_cast<double>(c.field_height - c.ball_diameter));
  state.ball_vx = c.ball_speed_x;
  state.ball_vy = state.rng.uniform(-c.max_deflection_vy, c.max_deflection_vy);
}

void replay_point(GameState& state) {
  if (state.done) throw UsageError("game is over");
  if (state.config.mode == GameMode::Drill) {
    spawn_drill_ball(state);
  } else {
    serve(state, state.rng.coin() ? 1 : -1);
  }
}

TickResult tick(GameState& state, PaddleAction left, PaddleAction right) {
  if (state.done) throw UsageError("tick called on a finished game");
  const auto& c = state.config;
  const bool drill = c.mode == GameMode::Drill;

  if (!drill) move_paddle(state.left_paddle_y, left, c);
  move_paddle(state.right_paddle_y, right, c);

  const double prev_x = state.ball_x;
  state.ball_x += state.ball_vx;
  state.ball_y += state.ball_vy;

  const double max_y = c.field_height - c.ball_diameter;
  if (state.ball_y < 0.0) {
    state.ball_y = -state.ball_y;
    state.ball_vy = -state.ball_vy;
  } else if (state.ball_y > max_y) {
    state.ball_y = 2.0 * max_y - state.ball_y;
    state.ball_vy = -state.ball_vy;
  }
  state.ball_y = std::clamp(state.ball_y, 0.0, max_y);

  const double left_face = c.left_face();
  const double right_face = c.right_face();
  const double d = c.ball_diameter;
  if (!drill && state.ball_vx < 0.0 && prev_x >= left_face && state.ball_x < left_face &&
      overlaps_vertically(state.ball_y, state.left_paddle_y, c)) {
    state.ball_x = 2.0 * left_face - state.ball_x;
    state.ball_vx = -state.ball_vx;
    state.ball_vy = deflection(state.ball_y, state.left_paddle_y, c);
  } else if (state.ball_vx > 0.0 && prev_x + d <= right_face && state.ball_x + d > right_face &&
             overlaps_vertically(state.ball_y, state.right_paddle_y, c)) {
    state.ball_x = 2.0 * (right_face - d) - state.ball_x;
    state.ball_vx = -state.ball_vx;
    state.ball_vy = deflection(state.ball_y, state.right_paddle_y, c);
  }

  ++state.tick;
  TickResult result;
  if (state.ball_x < 0.0) {
    result = {-1, +1};
    ++state.right_score;
  } else if (state.ball_x + d > c.field_width) {
    result = {+1, -1};
    ++state.left_score;
  } else {
    return result;
  }

  if (std::max(state.left_score, state.right_score) >= c.points_to_win) {
    state.done = true;
  } else if (drill) {
    spawn_drill_ball(state);
  } else {
    // toward whoever just conceded
    serve(state, result.left_reward < 0 ? -1 : 1);
  }
  return result;
}

StepResult step(GameState& state, PaddleAction left, PaddleAction right) {
  if (state.done) throw UsageError("step called on a finished game");
  StepResult result;
  for (int i = 0; i < state.config.ticks_per_step; ++i) {
    const auto outcome = tick(state, left, right);
    ++result.ticks;
    if (outcome.scored()) {
      result.left_reward = outcome.left_reward;
      result.right_reward = outcome.right_reward;
      break;
    }
  }
  result.done = state.done;
  render_into(state, result.frame);
  return result;
}

Frame render(const GameState& state) {
  Frame frame;
  render_into(state, frame);
  return frame;
}

void render_into(const GameState& state, Frame& frame) {
  const auto& c = state.config;
  frame.resize(c.field_height, c.field_width);
  frame.setZero();
  fill_rect(frame, static_cast<int>(state.ball_y), static_cast<int>(state.ball_x),
            c.ball_diameter, c.ball_diameter);
  if (c.mode != GameMode::Drill) {
    fill_rect(frame, static_cast<int>(state.left_paddle_y), c.paddle_inset, c.paddle_height,
              c.paddle_width);
  }
  fill_rect(frame, static_cast<int>(state.right_paddle_y), c.right_face(), c.paddle_height,
            c.paddle_width);
}

std::string trajectory_record(const GameState& state, const StepResult& result) {
  nlohmann::json record = {
      {"tick", state.tick},
      {"ball", {state.ball_x, state.ball_y, state.ball_vx, state.ball_vy}},
      {"paddles", {state.left_paddle_y, state.right_paddle_y}},
      {"score", {state.left_score, state.right_score}},
      {"reward", {result.left_reward, result.right_reward}},
      {"done", result.done},
      {"pixels", static_cast<int>(result.frame.cast<int>().sum())},
  };
  return record.dump();
}

}  // namespace pong
