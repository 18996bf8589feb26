#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pong/engine.hpp"
#include "pong/rng.hpp"

namespace pong {

enum class Side { Left, Right };

/// Privileged positional view of the game used by scripted paddles.
struct OpponentView {
  double ball_y = 0.0;  // ball center
  int ball_vx_sign = 1;  // +1 moving right, -1 moving left
  double own_paddle_y = 0.0;
  double own_paddle_center = 0.0;
};

OpponentView make_view(const GameState& state, Side side);

/// Follows the ball at all times.
PaddleAction consistently_tracking(const OpponentView& view);

/// Tracks while the ball approaches `side`; otherwise moves up or down at random.
PaddleAction partially_tracking(const OpponentView& view, Rng& rng, Side side = Side::Left);

/// Uniform over {Up, Down}.
PaddleAction random_policy(Rng& rng);

enum class OpponentKind { Consistent, Partial, Random, DrillNone };

OpponentKind parse_opponent(std::string_view name);
std::string_view to_string(OpponentKind kind);
std::vector<std::string> opponent_names();

/// Dispatches to the scripted policy controlling `side`. DrillNone always holds.
PaddleAction opponent_action(OpponentKind kind, const GameState& state, Rng& rng,
                             Side side = Side::Left);

}  // namespace pong
