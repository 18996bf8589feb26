#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pong/engine.hpp"
#include "pong/opponents.hpp"
#include "pong/policy.hpp"
#include "pong/preprocess.hpp"
#include "pong/trainer.hpp"

namespace pong::viz {

inline constexpr int kProtocolVersion = 1;

struct ActiveNeuron {
  int layer = 0;  // index into the trace: 0 is the first hidden layer
  int index = 0;
  double activation = 0.0;

  bool operator==(const ActiveNeuron&) const = default;
};

/// Neurons with activation strictly above `threshold`, ordered by (layer, index).
std::vector<ActiveNeuron> snapshot_activations(const Trace& trace, double threshold);

/// Nonzero entries of a model input as (row-major index, value).
std::vector<std::pair<int, int>> sparse_input(const ModelInput& input);

struct ExhibitSettings {
  double frame_rate = 30.0;
  bool stochastic = false;
  double activation_threshold = 0.05;
  double weight_display_threshold = 0.0265;
  OpponentKind fallback = OpponentKind::Consistent;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ServerHello {
  int protocol_version = kProtocolVersion;
  LayerSpec layer_sizes;
  int input_rows = 0;
  int input_cols = 0;
  std::vector<std::string> action_labels;
  std::vector<DenseLayer<double>> layers;
  double weight_display_threshold = 0.0;
  double activation_threshold = 0.0;
  double frame_rate = 0.0;
  GameConfig game;
  std::string inference;  // "argmax" or "sample"
};

struct FrameUpdate {
  std::uint64_t sequence = 0;
  std::vector<std::pair<int, int>> input;
  std::vector<ActiveNeuron> active;
  std::vector<double> probabilities;
  int action = 0;
  int left_score = 0;
  int right_score = 0;
  bool game_over = false;
  double ball_x = 0.0;
  double ball_y = 0.0;
  double left_paddle_y = 0.0;
  double right_paddle_y = 0.0;
  bool human = false;  // left paddle driven by a connected controller
};

struct PaddleCommand {
  PaddleAction action = PaddleAction::None;
};
struct PauseCommand {};
struct ResumeCommand {};
struct ResetCommand {};
struct SpeedCommand {
  double fps = 30.0;
};
using ClientCommand =
    std::variant<PaddleCommand, PauseCommand, ResumeCommand, ResetCommand, SpeedCommand>;

nlohmann::json to_json(const ServerHello& hello);
nlohmann::json to_json(const FrameUpdate& update);
nlohmann::json to_json(const ClientCommand& command);
nlohmann::json error_message(const std::string& message);

ServerHello hello_from_json(const nlohmann::json& doc);
FrameUpdate frame_from_json(const nlohmann::json& doc);

/// Parses a client text message. Malformed documents throw ParseError; a
/// well-formed command of unknown kind throws ArgumentError.
ClientCommand parse_command(const std::string& text);

/// The authoritative exhibit game: agent on the right paddle, controller or
/// fallback opponent on the left. Not thread-safe; one owner drives it.
class ExhibitSession {
 public:
  ExhibitSession(Network network, GameConfig game, ExhibitSettings settings);

  ServerHello hello() const;

  /// Applies a command. Paddle commands hold until replaced.
  void apply(const ClientCommand& command);
  void set_controller(bool connected);
  bool has_controller() const { return controller_; }

  bool paused() const { return paused_; }
  bool game_over() const { return state_.done; }
  double frame_rate() const { return settings_.frame_rate; }

  /// Advances one model step. Throws UsageError while paused or after the game ended.
  FrameUpdate advance();

  const GameState& state() const { return state_; }
  const Network& network() const { return network_; }
  const ExhibitSettings& settings() const { return settings_; }

 private:
  void restart();

  Network network_;
  GameConfig game_;
  ExhibitSettings settings_;
  GameState state_;
  FramePreprocessor preprocess_;
  Frame frame_;
  Rng rng_;
  std::uint64_t sequence_ = 0;
  std::uint64_t games_ = 0;
  PaddleAction held_ = PaddleAction::None;
  bool controller_ = false;
  bool paused_ = false;
};

/// Per-frame numbers a conforming renderer must reproduce.
struct FrameSummary {
  std::uint64_t sequence = 0;
  std::size_t drawn_edges = 0;  // retained weights whose source is active
  std::vector<std::string> output_labels;
};

/// "90%" style label: probability in percent rounded half up.
std::string percent_label(double probability);

/// Headless protocol client: checks every message against the protocol
/// invariants and derives the per-frame rendering summary.
class ProtocolValidator {
 public:
  /// Returns false and records a violation when the message breaks the protocol.
  bool accept(const std::string& text);

  bool ok() const { return violations_.empty(); }
  const std::vector<std::string>& violations() const { return violations_; }
  const std::vector<FrameSummary>& frames() const { return frames_; }
  const std::optional<ServerHello>& hello() const { return hello_; }
  std::size_t errors_received() const { return errors_; }

 private:
  bool fail(const std::string& what);
  void check_frame(const FrameUpdate& update);

  std::optional<ServerHello> hello_;
  // retained-edge count per source neuron, per connection layer
  std::vector<std::vector<std::size_t>> retained_from_;
  std::optional<std::uint64_t> last_sequence_;
  std::vector<FrameSummary> frames_;
  std::vector<std::string> violations_;
  std::size_t errors_ = 0;
};

/// Runs the session offline and writes hello plus `frames` frame messages,
/// one document per line. Starts a new game whenever one ends.
void record_session(ExhibitSession& session, std::size_t frames, std::ostream& out);

/// Feeds every line of a recorded session to a validator.
ProtocolValidator validate_session(std::istream& in);

}  // namespace pong::viz
