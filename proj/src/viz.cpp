#include "pong/viz.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "pong/errors.hpp"

namespace pong::viz {

using nlohmann::json;

namespace {

const char* action_label(int index) {
  switch (index) {
    case 0: return "up";
    case 1: return "down";
    default: return "none";
  }
}

PaddleAction parse_paddle(const std::string& name) {
  if (name == "up") return PaddleAction::Up;
  if (name == "down") return PaddleAction::Down;
  if (name == "none") return PaddleAction::None;
  throw ArgumentError("unknown paddle action '" + name + "'");
}

template <typename T>
T field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::vector<ActiveNeuron> snapshot_activations(const Trace& trace, double threshold) {
  std::vector<ActiveNeuron> out;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& a = trace.layers[l];
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a(i) > threshold) out.push_back({static_cast<int>(l), static_cast<int>(i), a(i)});
    }
  }
  return out;
}

std::vector<std::pair<int, int>> sparse_input(const ModelInput& input) {
  std::vector<std::pair<int, int>> out;
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    const int v = input.data()[i];
    if (v != 0) out.emplace_back(static_cast<int>(i), v);
  }
  return out;
}

void ExhibitSettings::validate() const {
  if (!(frame_rate > 0.0 && frame_rate <= 1000.0)) {
    throw ConfigError("frame rate must lie in (0, 1000]");
  }
  if (!std::isfinite(activation_threshold) || !std::isfinite(weight_display_threshold)) {
    throw ConfigError("display thresholds must be finite");
  }
  if (fallback == OpponentKind::DrillNone) throw ConfigError("fallback opponent must play");
}

json to_json(const ServerHello& hello) {
  json layers = json::array();
  for (const auto& l : hello.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    layers.push_back({{"rows", l.weights.rows()},
                      {"cols", l.weights.cols()},
                      {"weights", std::move(w)},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  const auto& g = hello.game;
  return {{"type", "hello"},
          {"protocol_version", hello.protocol_version},
          {"layer_sizes", hello.layer_sizes},
          {"input_rows", hello.input_rows},
          {"input_cols", hello.input_cols},
          {"action_labels", hello.action_labels},
          {"layers", std::move(layers)},
          {"weight_display_threshold", hello.weight_display_threshold},
          {"activation_threshold", hello.activation_threshold},
          {"frame_rate", hello.frame_rate},
          {"inference", hello.inference},
          {"game",
           {{"field_height", g.field_height},
            {"field_width", g.field_width},
            {"paddle_height", g.paddle_height},
            {"paddle_width", g.paddle_width},
            {"paddle_inset", g.paddle_inset},
            {"ball_diameter", g.ball_diameter},
            {"points_to_win", g.points_to_win}}}};
}

json to_json(const FrameUpdate& u) {
  json input = json::array();
  for (const auto& [i, v] : u.input) input.push_back({i, v});
  json active = json::array();
  for (const auto& a : u.active) active.push_back({a.layer, a.index, a.activation});
  return {{"type", "frame"},
          {"sequence", u.sequence},
          {"input", std::move(input)},
          {"active", std::move(active)},
          {"probabilities", u.probabilities},
          {"action", u.action},
          {"action_label", action_label(u.action)},
          {"scores", {{"left", u.left_score}, {"right", u.right_score}}},
          {"game_over", u.game_over},
          {"ball", {u.ball_x, u.ball_y}},
          {"paddles", {u.left_paddle_y, u.right_paddle_y}},
          {"human", u.human}};
}

json to_json(const ClientCommand& command) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, PaddleCommand>) {
          return {{"type", "command"}, {"command", "paddle"}, {"action", to_string(c.action)}};
        } else if constexpr (std::is_same_v<T, PauseCommand>) {
          return {{"type", "command"}, {"command", "pause"}};
        } else if constexpr (std::is_same_v<T, ResumeCommand>) {
          return {{"type", "command"}, {"command", "resume"}};
        } else if constexpr (std::is_same_v<T, ResetCommand>) {
          return {{"type", "command"}, {"command", "reset"}};
        } else {
          return {{"type", "command"}, {"command", "set_speed"}, {"fps", c.fps}};
        }
      },
      command);
}

json error_message(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

ServerHello hello_from_json(const json& doc) {
  ServerHello h;
  h.protocol_version = field<int>(doc, "protocol_version");
  h.layer_sizes = field<LayerSpec>(doc, "layer_sizes");
  h.input_rows = field<int>(doc, "input_rows");
  h.input_cols = field<int>(doc, "input_cols");
  h.action_labels = field<std::vector<std::string>>(doc, "action_labels");
  h.weight_display_threshold = field<double>(doc, "weight_display_threshold");
  h.activation_threshold = field<double>(doc, "activation_threshold");
  h.frame_rate = field<double>(doc, "frame_rate");
  h.inference = field<std::string>(doc, "inference");
  const auto layers = field<json>(doc, "layers");
  if (!layers.is_array() || layers.size() + 1 != h.layer_sizes.size()) {
    throw ParseError("hello: layer count does not match layer_sizes");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto rows = field<Eigen::Index>(layers[l], "rows");
    const auto cols = field<Eigen::Index>(layers[l], "cols");
    const auto w = field<std::vector<double>>(layers[l], "weights");
    const auto b = field<std::vector<double>>(layers[l], "bias");
    if (rows != h.layer_sizes[l + 1] || cols != h.layer_sizes[l] ||
        static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows) {
      throw ParseError("hello: layer " + std::to_string(l) + " has inconsistent shape");
    }
    DenseLayer<double> layer;
    layer.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), rows, cols);
    layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    h.layers.push_back(std::move(layer));
  }
  const auto game = field<json>(doc, "game");
  h.game.field_height = field<int>(game, "field_height");
  h.game.field_width = field<int>(game, "field_width");
  h.game.paddle_height = field<int>(game, "paddle_height");
  h.game.paddle_width = field<int>(game, "paddle_width");
  h.game.paddle_inset = field<int>(game, "paddle_inset");
  h.game.ball_diameter = field<int>(game, "ball_diameter");
  h.game.points_to_win = field<int>(game, "points_to_win");
  return h;
}

FrameUpdate frame_from_json(const json& doc) {
  FrameUpdate u;
  u.sequence = field<std::uint64_t>(doc, "sequence");
  for (const auto& e : field<json>(doc, "input")) {
    if (!e.is_array() || e.size() != 2) throw ParseError("input entries are [index, value] pairs");
    u.input.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  for (const auto& e : field<json>(doc, "active")) {
    if (!e.is_array() || e.size() != 3) {
      throw ParseError("active entries are [layer, index, activation] triples");
    }
    u.active.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
  }
  u.probabilities = field<std::vector<double>>(doc, "probabilities");
  u.action = field<int>(doc, "action");
  const auto scores = field<json>(doc, "scores");
  u.left_score = field<int>(scores, "left");
  u.right_score = field<int>(scores, "right");
  u.game_over = field<bool>(doc, "game_over");
  const auto ball = field<std::vector<double>>(doc, "ball");
  const auto paddles = field<std::vector<double>>(doc, "paddles");
  if (ball.size() != 2 || paddles.size() != 2) throw ParseError("ball and paddles are pairs");
  u.ball_x = ball[0];
  u.ball_y = ball[1];
  u.left_paddle_y = paddles[0];
  u.right_paddle_y = paddles[1];
  u.human = field<bool>(doc, "human");
  return u;
}

ClientCommand parse_command(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("message is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("message must be an object");
  if (field<std::string>(doc, "type") != "command") {
    throw ArgumentError("clients may only send messages of type 'command'");
  }
  const auto kind = field<std::string>(doc, "command");
  if (kind == "paddle") return PaddleCommand{parse_paddle(field<std::string>(doc, "action"))};
  if (kind == "pause") return PauseCommand{};
  if (kind == "resume") return ResumeCommand{};
  if (kind == "reset") return ResetCommand{};
  if (kind == "set_speed") {
    const double fps = field<double>(doc, "fps");
    if (!(fps > 0.0 && fps <= 1000.0)) throw ArgumentError("fps must lie in (0, 1000]");
    return SpeedCommand{fps};
  }
  throw ArgumentError("unknown command '" + kind + "'");
}

ExhibitSession::ExhibitSession(Network network, GameConfig game, ExhibitSettings settings)
    : network_(std::move(network)),
      game_(game),
      settings_(settings),
      preprocess_(full_field(game)),
      rng_(derive_seed(settings.seed, 4, 0)) {
  game_.validate();
  settings_.validate();
  const auto expected = (game_.field_height / 2) * (game_.field_width / 2);
  if (network_.input_size() != expected) {
    throw ConfigError("network expects " + std::to_string(network_.input_size()) +
                      " inputs but the field downsamples to " + std::to_string(expected));
  }
  if (network_.output_size() != 2 && network_.output_size() != 3) {
    throw ConfigError("network must have 2 or 3 outputs");
  }
  restart();
}

void ExhibitSession::restart() {
  GameConfig g = game_;
  g.seed = derive_seed(settings_.seed, 3, games_++);
  state_ = new_game(g);
  preprocess_.reset();
  frame_ = render(state_);
}

ServerHello ExhibitSession::hello() const {
  ServerHello h;
  h.layer_sizes = network_.layer_sizes;
  h.input_rows = game_.field_height / 2;
  h.input_cols = game_.field_width / 2;
  for (Eigen::Index i = 0; i < network_.output_size(); ++i) {
    h.action_labels.emplace_back(action_label(static_cast<int>(i)));
  }
  h.layers = network_.layers;
  h.weight_display_threshold = settings_.weight_display_threshold;
  h.activation_threshold = settings_.activation_threshold;
  h.frame_rate = settings_.frame_rate;
  h.game = game_;
  h.inference = settings_.stochastic ? "sample" : "argmax";
  return h;
}

void ExhibitSession::apply(const ClientCommand& command) {
  std::visit(
      [this](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, PaddleCommand>) {
          held_ = c.action;
        } else if constexpr (std::is_same_v<T, PauseCommand>) {
          paused_ = true;
        } else if constexpr (std::is_same_v<T, ResumeCommand>) {
          paused_ = false;
        } else if constexpr (std::is_same_v<T, ResetCommand>) {
          restart();
        } else {
          settings_.frame_rate = c.fps;
        }
      },
      command);
}

void ExhibitSession::set_controller(bool connected) {
  controller_ = connected;
  held_ = PaddleAction::None;
}

FrameUpdate ExhibitSession::advance() {
  if (paused_) throw UsageError("exhibit is paused");
  if (state_.done) throw UsageError("game is over; reset to play again");
  const auto input = preprocess_(frame_);
  const auto trace = forward(network_, flatten_sparse(input));
  const auto& probs = trace.probabilities();
  const int action = settings_.stochastic ? sample_action(probs, rng_) : argmax(probs);
  const auto left = controller_ ? held_ : opponent_action(settings_.fallback, state_, rng_, Side::Left);
  auto result = step(state_, left, to_paddle_action(action));
  frame_ = std::move(result.frame);

  FrameUpdate u;
  u.sequence = ++sequence_;
  u.input = sparse_input(input);
  u.active = snapshot_activations(trace, settings_.activation_threshold);
  u.probabilities.assign(probs.data(), probs.data() + probs.size());
  u.action = action;
  u.left_score = state_.left_score;
  u.right_score = state_.right_score;
  u.game_over = state_.done;
  u.ball_x = state_.ball_x;
  u.ball_y = state_.ball_y;
  u.left_paddle_y = state_.left_paddle_y;
  u.right_paddle_y = state_.right_paddle_y;
  u.human = controller_;
  return u;
}

std::string percent_label(double probability) {
  return std::to_string(static_cast<long>(std::floor(probability * 100.0 + 0.5))) + "%";
}

bool ProtocolValidator::fail(const std::string& what) {
  violations_.push_back(what);
  return false;
}

bool ProtocolValidator::accept(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    return fail("message is not valid JSON");
  }
  if (!doc.is_object() || !doc.contains("type") || !doc["type"].is_string()) {
    return fail("message lacks a string 'type'");
  }
  const auto type = doc["type"].get<std::string>();
  const auto before = violations_.size();
  try {
    if (type == "hello") {
      if (hello_) return fail("second hello on one connection");
      hello_ = hello_from_json(doc);
      const auto& h = *hello_;
      if (h.protocol_version != kProtocolVersion) fail("unsupported protocol version");
      if (h.layer_sizes.empty() || h.layer_sizes.front() != h.input_rows * h.input_cols) {
        fail("input size does not match the grid dimensions");
      }
      if (static_cast<int>(h.action_labels.size()) != h.layer_sizes.back()) {
        fail("one action label per output is required");
      }
      retained_from_.clear();
      for (const auto& l : h.layers) {
        std::vector<std::size_t> counts(static_cast<std::size_t>(l.weights.cols()), 0);
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
          counts[static_cast<std::size_t>(c)] = static_cast<std::size_t>(
              (l.weights.col(c).array().abs() >= h.weight_display_threshold).count());
        }
        retained_from_.push_back(std::move(counts));
      }
    } else if (type == "frame") {
      if (!hello_) return fail("frame before hello");
      check_frame(frame_from_json(doc));
    } else if (type == "error") {
      field<std::string>(doc, "message");
      ++errors_;
    } else {
      return fail("unknown message type '" + type + "'");
    }
  } catch (const std::exception& e) {
    return fail(type + ": " + e.what());
  }
  return violations_.size() == before;
}

void ProtocolValidator::check_frame(const FrameUpdate& u) {
  const auto& h = *hello_;
  const std::string at = "frame " + std::to_string(u.sequence) + ": ";
  if (last_sequence_ && u.sequence != *last_sequence_ + 1) {
    fail(at + "sequence does not follow " + std::to_string(*last_sequence_));
  }
  last_sequence_ = u.sequence;

  const int cells = h.input_rows * h.input_cols;
  int previous = -1;
  for (const auto& [i, v] : u.input) {
    if (i <= previous || i >= cells) fail(at + "input indices must increase within the grid");
    if (v != 1 && v != -1) fail(at + "input values must be -1 or +1");
    previous = i;
  }

  const int depth = static_cast<int>(h.layers.size());
  std::vector<std::vector<int>> active_by_layer(static_cast<std::size_t>(depth));
  std::pair<int, int> last{-1, -1};
  for (const auto& a : u.active) {
    if (a.layer < 0 || a.layer >= depth || a.index < 0 ||
        a.index >= h.layer_sizes[static_cast<std::size_t>(a.layer) + 1]) {
      fail(at + "active neuron out of range");
      continue;
    }
    if (std::pair{a.layer, a.index} <= last) fail(at + "active neurons out of order");
    last = {a.layer, a.index};
    if (!(a.activation > h.activation_threshold)) fail(at + "listed neuron is below threshold");
    active_by_layer[static_cast<std::size_t>(a.layer)].push_back(a.index);
  }

  const auto outputs = static_cast<std::size_t>(h.layer_sizes.back());
  if (u.probabilities.size() != outputs) {
    fail(at + "probability count differs from the output size");
    return;
  }
  double total = 0.0;
  for (double p : u.probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) fail(at + "probability outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) fail(at + "probabilities do not sum to 1");
  if (u.action < 0 || static_cast<std::size_t>(u.action) >= outputs) {
    fail(at + "action index out of range");
  } else if (h.inference == "argmax") {
    const auto best = static_cast<std::size_t>(
        std::max_element(u.probabilities.begin(), u.probabilities.end()) - u.probabilities.begin());
    if (best != static_cast<std::size_t>(u.action)) fail(at + "action is not the argmax");
  } else if (u.probabilities[static_cast<std::size_t>(u.action)] <= 0.0) {
    fail(at + "sampled action had zero probability");
  }
  for (const auto& a : u.active) {
    if (a.layer == depth - 1 && a.index >= 0 && static_cast<std::size_t>(a.index) < outputs &&
        a.activation != u.probabilities[static_cast<std::size_t>(a.index)]) {
      fail(at + "output activation differs from its probability");
    }
  }
  const int cap = h.game.points_to_win;
  if (u.left_score < 0 || u.right_score < 0 || u.left_score > cap || u.right_score > cap) {
    fail(at + "score out of range");
  }
  if (u.game_over != (std::max(u.left_score, u.right_score) == cap)) {
    fail(at + "game_over disagrees with the scores");
  }

  FrameSummary s;
  s.sequence = u.sequence;
  for (const auto& [i, v] : u.input) {
    if (i >= 0 && i < cells) s.drawn_edges += retained_from_[0][static_cast<std::size_t>(i)];
  }
  for (int l = 1; l < depth; ++l) {
    for (const int i : active_by_layer[static_cast<std::size_t>(l - 1)]) {
      s.drawn_edges += retained_from_[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
    }
  }
  for (double p : u.probabilities) s.output_labels.push_back(percent_label(p));
  frames_.push_back(std::move(s));
}

void record_session(ExhibitSession& session, std::size_t frames, std::ostream& out) {
  out << to_json(session.hello()).dump() << '\n';
  for (std::size_t f = 0; f < frames; ++f) {
    if (session.game_over()) session.apply(ResetCommand{});
    out << to_json(session.advance()).dump() << '\n';
  }
}

ProtocolValidator validate_session(std::istream& in) {
  ProtocolValidator v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.accept(line);
  }
  return v;
}

}  // namespace pong::viz
