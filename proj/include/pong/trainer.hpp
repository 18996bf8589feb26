#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pong/engine.hpp"
#include "pong/opponents.hpp"
#include "pong/policy.hpp"
#include "pong/preprocess.hpp"

namespace pong {

enum class ActionSpace { UpDown, UpDownNone };
enum class LabelBase { OneHot, Probabilities };

int action_count(ActionSpace space);
PaddleAction to_paddle_action(int index);

struct TrainConfig {
  double gamma = 0.99;
  double alpha = 0.001;
  int batch_episodes = 10;
  std::vector<int> hidden = {200};
  OpponentKind opponent = OpponentKind::Consistent;
  ActionSpace action_space = ActionSpace::UpDown;
  LabelBase label_base = LabelBase::Probabilities;
  bool normalize_returns = true;
  int stop_patience = 200;  // <= 0 disables loss-based stopping
  int max_batches = 10000;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::RMSProp;
  double step_size = 1e-3;
  double decay = 0.99;
  std::size_t minibatch_size = 0;  // 0 = full batch
  int checkpoint_every = 100;
  int workers = 1;
  std::int64_t max_episode_steps = 20000;  // 0 = unlimited
  /// A rally this long is replayed from a fresh serve and trains as a conceded
  /// point. 0 = never.
  std::int64_t max_rally_steps = 200;

  void validate() const;
  Optimizer<double> make_optimizer() const;
};

/// Training plus game settings, addressed through one flat key space.
/// `seed` is the master seed; per-episode game seeds derive from it.
struct RunConfig {
  TrainConfig train;
  GameConfig game;

  /// Throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  LayerSpec layer_spec() const;
  /// Every key with its resolved value, one `key=value` per entry, fixed order.
  std::vector<std::string> describe() const;
};

/// Per-timestep experience of the agent (right paddle) over one game.
struct EpisodeMemory {
  std::vector<SparseInput<double>> inputs;
  std::vector<int> actions;
  std::vector<Eigen::VectorXd> probabilities;
  std::vector<double> rewards;     // raw, in {-1, 0, +1}
  std::vector<double> discounted;  // filled by process_episode
  bool processed = false;
  int agent_score = 0;
  int opponent_score = 0;
  bool truncated = false;  // stopped by the step cap before a side won
  int stalls = 0;          // rallies cut by the rally cap

  std::size_t size() const { return actions.size(); }
};

/// Returns the action for the controlled paddle given the game and the
/// agent's latest difference image.
using AgentFn = std::function<PaddleAction(const GameState&, const ModelInput&)>;

struct MatchResult {
  int agent_score = 0;
  int opponent_score = 0;
  std::int64_t steps = 0;
  bool truncated = false;
};

/// Plays one game with the agent on the right paddle and `opponent` on the left.
/// `max_steps` 0 plays until a side wins.
MatchResult play_match(const GameConfig& game, OpponentKind opponent, const AgentFn& agent,
                       Rng& rng, std::int64_t max_steps = 0);

/// Plays one game sampling actions from the policy, recording every timestep.
/// A rally reaching `max_rally_steps` (0 = no cap) is replayed from a fresh
/// serve, with -1 recorded on its last step.
EpisodeMemory play_episode(const Network& params, const GameConfig& game, OpponentKind opponent,
                           ActionSpace space, Rng& rng, std::int64_t max_steps = 0,
                           std::int64_t max_rally_steps = 0);

/// Backward pass replacing each zero reward by gamma times its successor.
std::vector<double> discount_rewards(std::span<const double> rewards, double gamma);

/// (onehot(action) - prob) * discounted_reward.
Eigen::VectorXd policy_gradient(const Eigen::VectorXd& prob, int action, double discounted_reward);

/// Discounts the episode's rewards exactly once; throws UsageError on a second call.
void process_episode(EpisodeMemory& memory, double gamma);

/// Target vector per timestep: base + alpha * policy_gradient.
std::vector<Eigen::VectorXd> make_labels(const EpisodeMemory& memory, double alpha,
                                         LabelBase base = LabelBase::Probabilities);

/// Scales to zero mean and unit variance in place (centers only when constant).
void standardize(std::vector<double>& values);

struct BatchMetrics {
  double mean_loss = 0.0;
  int agent_points = 0;
  int opponent_points = 0;
  std::size_t timesteps = 0;
};

BatchMetrics train_batch(Network& params, std::vector<EpisodeMemory>& memories,
                         const TrainConfig& config, Optimizer<double>& optimizer);

/// Element i is the mean of values[max(0, i - window + 1) ..= i].
std::vector<double> trailing_average(std::span<const double> values, std::size_t window = 100);

struct TrainingSummary {
  int batches = 0;
  int episodes = 0;
  double best_loss = 0.0;
  double final_trailing_score = 0.0;
  std::vector<double> agent_scores;
  std::vector<double> batch_losses;
  bool stopped_on_patience = false;
};

/// Writes metrics.csv, weights_initial.json, checkpoint_latest.json,
/// checkpoint_best.json and weights_final.json into `output_dir`.
/// `header_lines` are emitted as `# ...` comments ahead of the CSV header.
TrainingSummary training_loop(const RunConfig& config, const std::string& output_dir,
                              const std::vector<std::string>& header_lines = {});

inline constexpr std::string_view kMetricsHeader =
    "batch,episode,agent_score,opponent_score,mean_loss,trailing_avg_100";

}  // namespace pong
