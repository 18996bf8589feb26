#include "pong/opponents.hpp"

#include "pong/errors.hpp"

namespace pong {

OpponentView make_view(const GameState& state, Side side) {
  const auto& c = state.config;
  OpponentView view;
  view.ball_y = state.ball_y + c.ball_diameter / 2.0;
  view.ball_vx_sign = state.ball_vx < 0.0 ? -1 : 1;
  view.own_paddle_y = side == Side::Left ? state.left_paddle_y : state.right_paddle_y;
  view.own_paddle_center = view.own_paddle_y + c.paddle_height / 2.0;
  return view;
}

PaddleAction consistently_tracking(const OpponentView& view) {
  if (view.ball_y < view.own_paddle_center) return PaddleAction::Up;
  if (view.ball_y > view.own_paddle_center) return PaddleAction::Down;
  return PaddleAction::None;
}

PaddleAction partially_tracking(const OpponentView& view, Rng& rng, Side side) {
  const int toward = side == Side::Left ? -1 : 1;
  if (view.ball_vx_sign == toward) return consistently_tracking(view);
  return random_policy(rng);
}

PaddleAction random_policy(Rng& rng) { return rng.coin() ? PaddleAction::Up : PaddleAction::Down; }

OpponentKind parse_opponent(std::string_view name) {
  if (name == "consistent") return OpponentKind::Consistent;
  if (name == "partial") return OpponentKind::Partial;
  if (name == "random") return OpponentKind::Random;
  if (name == "drill-none") return OpponentKind::DrillNone;
  throw ConfigError("unknown opponent '" + std::string(name) +
                    "' (expected consistent, partial, random or drill-none)");
}

std::string_view to_string(OpponentKind kind) {
  switch (kind) {
    case OpponentKind::Consistent: return "consistent";
    case OpponentKind::Partial: return "partial";
    case OpponentKind::Random: return "random";
    case OpponentKind::DrillNone: return "drill-none";
  }
  return "consistent";
}

std::vector<std::string> opponent_names() {
  return {"consistent", "partial", "random", "drill-none"};
}

PaddleAction opponent_action(OpponentKind kind, const GameState& state, Rng& rng, Side side) {
  switch (kind) {
    case OpponentKind::Consistent: return consistently_tracking(make_view(state, side));
    case OpponentKind::Partial: return partially_tracking(make_view(state, side), rng, side);
    case OpponentKind::Random: return random_policy(rng);
    case OpponentKind::DrillNone: return PaddleAction::None;
  }
  return PaddleAction::None;
}

}  // namespace pong
