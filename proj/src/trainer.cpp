#include "pong/trainer.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include <nlohmann/json.hpp>

#include "pong/errors.hpp"

namespace pong {

namespace {

// Saturated softmax outputs push tiny values through backprop; denormal
// arithmetic on them is very slow on x86.
void flush_denormals() {
#if defined(__SSE2__)
  _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
  _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
}

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return std::string(text.substr(first, last - first + 1));
}

template <typename T>
T parse_value(std::string_view key, std::string_view raw) {
  const auto text = trim(raw);
  T out{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("setting '" + std::string(key) + "': cannot parse '" + text + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view raw) {
  const auto text = trim(raw);
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError("setting '" + std::string(key) + "': expected true or false");
}

std::vector<int> parse_hidden(std::string_view raw) {
  std::vector<int> out;
  const auto text = trim(raw);
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto dash = text.find('-', start);
    const auto piece = text.substr(start, dash == std::string::npos ? std::string::npos
                                                                    : dash - start);
    out.push_back(parse_value<int>("hidden", piece));
    if (dash == std::string::npos) break;
    start = dash + 1;
  }
  return out;
}

std::string hidden_text(const std::vector<int>& hidden) {
  std::string out;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(hidden[i]);
  }
  return out;
}

std::string number(double value) {
  std::ostringstream out;
  out.precision(12);
  out << value;
  return out.str();
}

std::string provenance(const RunConfig& config) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& entry : config.describe()) {
    const auto eq = entry.find('=');
    doc["config"][entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return doc.dump();
}

}  // namespace

int action_count(ActionSpace space) { return space == ActionSpace::UpDown ? 2 : 3; }

PaddleAction to_paddle_action(int index) {
  switch (index) {
    case 0: return PaddleAction::Up;
    case 1: return PaddleAction::Down;
    case 2: return PaddleAction::None;
    default: throw ArgumentError("action index " + std::to_string(index) + " out of range");
  }
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid training config: ") + what);
  };
  require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
  require(std::isfinite(alpha), "alpha must be finite");
  require(batch_episodes >= 1, "batch_episodes must be at least 1");
  require(!hidden.empty(), "at least one hidden layer is required");
  for (const int n : hidden) require(n > 0, "hidden layer sizes must be positive");
  require(max_batches >= 0, "max_batches must be non-negative");
  require(checkpoint_every >= 1, "checkpoint_every must be at least 1");
  require(workers >= 1, "workers must be at least 1");
  require(max_episode_steps >= 0, "max_episode_steps must be non-negative");
  require(max_rally_steps >= 0, "max_rally_steps must be non-negative");
  make_optimizer().validate();
}

Optimizer<double> TrainConfig::make_optimizer() const {
  Optimizer<double> opt;
  opt.kind = optimizer;
  opt.step_size = step_size;
  opt.decay = decay;
  return opt;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  auto& t = train;
  if (key == "gamma") t.gamma = parse_value<double>(key, value);
  else if (key == "alpha") t.alpha = parse_value<double>(key, value);
  else if (key == "batch_episodes") t.batch_episodes = parse_value<int>(key, value);
  else if (key == "hidden") t.hidden = parse_hidden(value);
  else if (key == "opponent") t.opponent = parse_opponent(trim(value));
  else if (key == "action_space") {
    const auto v = trim(value);
    if (v == "updown") t.action_space = ActionSpace::UpDown;
    else if (v == "updownnone") t.action_space = ActionSpace::UpDownNone;
    else throw ConfigError("action_space must be updown or updownnone");
  } else if (key == "label_base") {
    const auto v = trim(value);
    if (v == "onehot") t.label_base = LabelBase::OneHot;
    else if (v == "probs") t.label_base = LabelBase::Probabilities;
    else throw ConfigError("label_base must be onehot or probs");
  } else if (key == "normalize_returns") t.normalize_returns = parse_bool(key, value);
  else if (key == "stop_patience") t.stop_patience = parse_value<int>(key, value);
  else if (key == "max_batches") t.max_batches = parse_value<int>(key, value);
  else if (key == "seed") t.seed = parse_value<std::uint64_t>(key, value);
  else if (key == "optimizer") {
    const auto v = trim(value);
    if (v == "sgd") t.optimizer = OptimizerKind::SGD;
    else if (v == "rmsprop") t.optimizer = OptimizerKind::RMSProp;
    else throw ConfigError("optimizer must be sgd or rmsprop");
  } else if (key == "step_size") t.step_size = parse_value<double>(key, value);
  else if (key == "decay") t.decay = parse_value<double>(key, value);
  else if (key == "minibatch_size") t.minibatch_size = parse_value<std::size_t>(key, value);
  else if (key == "checkpoint_every") t.checkpoint_every = parse_value<int>(key, value);
  else if (key == "workers") t.workers = parse_value<int>(key, value);
  else if (key == "max_episode_steps") t.max_episode_steps = parse_value<std::int64_t>(key, value);
  else if (key == "max_rally_steps") t.max_rally_steps = parse_value<std::int64_t>(key, value);
  else if (!apply_game_setting(game, key, value)) {
    throw ConfigError("unknown setting '" + std::string(key) + "'");
  }
}

void RunConfig::validate() const {
  train.validate();
  game.validate();
  if (game.mode == GameMode::Drill && train.opponent != OpponentKind::DrillNone) {
    throw ConfigError("drill mode requires opponent=drill-none");
  }
  if (game.mode == GameMode::Versus && train.opponent == OpponentKind::DrillNone) {
    throw ConfigError("opponent drill-none requires mode=drill");
  }
}

LayerSpec RunConfig::layer_spec() const {
  LayerSpec spec{(game.field_height / 2) * (game.field_width / 2)};
  spec.insert(spec.end(), train.hidden.begin(), train.hidden.end());
  spec.push_back(action_count(train.action_space));
  return spec;
}

std::vector<std::string> RunConfig::describe() const {
  const auto& t = train;
  const auto& g = game;
  return {
      "gamma=" + number(t.gamma),
      "alpha=" + number(t.alpha),
      "batch_episodes=" + std::to_string(t.batch_episodes),
      "hidden=" + hidden_text(t.hidden),
      "opponent=" + std::string(to_string(t.opponent)),
      std::string("action_space=") + (t.action_space == ActionSpace::UpDown ? "updown" : "updownnone"),
      std::string("label_base=") + (t.label_base == LabelBase::OneHot ? "onehot" : "probs"),
      std::string("normalize_returns=") + (t.normalize_returns ? "true" : "false"),
      "stop_patience=" + std::to_string(t.stop_patience),
      "max_batches=" + std::to_string(t.max_batches),
      "seed=" + std::to_string(t.seed),
      std::string("optimizer=") + (t.optimizer == OptimizerKind::SGD ? "sgd" : "rmsprop"),
      "step_size=" + number(t.step_size),
      "decay=" + number(t.decay),
      "minibatch_size=" + std::to_string(t.minibatch_size),
      "checkpoint_every=" + std::to_string(t.checkpoint_every),
      "max_episode_steps=" + std::to_string(t.max_episode_steps),
      "max_rally_steps=" + std::to_string(t.max_rally_steps),
      "field_height=" + std::to_string(g.field_height),
      "field_width=" + std::to_string(g.field_width),
      "paddle_height=" + std::to_string(g.paddle_height),
      "paddle_width=" + std::to_string(g.paddle_width),
      "paddle_speed=" + number(g.paddle_speed),
      "paddle_inset=" + std::to_string(g.paddle_inset),
      "ball_diameter=" + std::to_string(g.ball_diameter),
      "ball_speed_x=" + number(g.ball_speed_x),
      "max_deflection_vy=" + number(g.max_deflection_vy),
      "points_to_win=" + std::to_string(g.points_to_win),
      "ticks_per_step=" + std::to_string(g.ticks_per_step),
      "mode=" + std::string(to_string(g.mode)),
  };
}

MatchResult play_match(const GameConfig& game, OpponentKind opponent, const AgentFn& agent,
                       Rng& rng, std::int64_t max_steps) {
  auto state = new_game(game);
  FramePreprocessor preprocess(full_field(game));
  Frame frame = render(state);
  MatchResult result;
  while (!state.done) {
    const auto input = preprocess(frame);
    const auto mine = agent(state, input);
    const auto theirs = opponent_action(opponent, state, rng, Side::Left);
    frame = step(state, theirs, mine).frame;
    if (++result.steps == max_steps) break;
  }
  result.truncated = !state.done;
  result.agent_score = state.right_score;
  result.opponent_score = state.left_score;
  return result;
}

EpisodeMemory play_episode(const Network& params, const GameConfig& game, OpponentKind opponent,
                           ActionSpace space, Rng& rng, std::int64_t max_steps,
                           std::int64_t max_rally_steps) {
  if (params.output_size() != action_count(space)) {
    throw ArgumentError("network output size does not match the action space");
  }
  auto state = new_game(game);
  FramePreprocessor preprocess(full_field(game));
  Frame frame = render(state);
  EpisodeMemory memory;
  std::int64_t rally = 0;
  while (!state.done) {
    auto input = flatten_sparse(preprocess(frame));
    auto trace = forward(params, input);
    const int action = sample_action(trace.probabilities(), rng);
    const auto theirs = opponent_action(opponent, state, rng, Side::Left);
    auto result = step(state, theirs, to_paddle_action(action));
    memory.inputs.push_back(std::move(input));
    memory.actions.push_back(action);
    memory.probabilities.push_back(trace.probabilities());
    memory.rewards.push_back(result.right_reward);
    frame = std::move(result.frame);
    rally = result.right_reward != 0 ? 0 : rally + 1;
    if (max_rally_steps > 0 && rally == max_rally_steps && !state.done) {
      memory.rewards.back() = -1.0;
      ++memory.stalls;
      replay_point(state);
      frame = render(state);
      rally = 0;
    }
    if (static_cast<std::int64_t>(memory.size()) == max_steps) break;
  }
  memory.truncated = !state.done;
  memory.agent_score = state.right_score;
  memory.opponent_score = state.left_score;
  return memory;
}

std::vector<double> discount_rewards(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.begin(), rewards.end());
  for (std::size_t t = out.size(); t-- > 1;) {
    if (rewards[t - 1] == 0.0) out[t - 1] = gamma * out[t];
  }
  return out;
}

Eigen::VectorXd policy_gradient(const Eigen::VectorXd& prob, int action, double discounted_reward) {
  if (action < 0 || action >= prob.size()) {
    throw ArgumentError("policy_gradient: action " + std::to_string(action) + " out of range");
  }
  Eigen::VectorXd g = -prob;
  g(action) += 1.0;
  return g * discounted_reward;
}

void process_episode(EpisodeMemory& memory, double gamma) {
  if (memory.processed) throw UsageError("episode rewards were already discounted");
  memory.discounted = discount_rewards(memory.rewards, gamma);
  memory.processed = true;
}

std::vector<Eigen::VectorXd> make_labels(const EpisodeMemory& memory, double alpha,
                                         LabelBase base) {
  if (!memory.processed) throw UsageError("make_labels needs discounted rewards");
  if (memory.probabilities.size() != memory.size() || memory.discounted.size() != memory.size()) {
    throw ArgumentError("make_labels: episode memory lists differ in length");
  }
  std::vector<Eigen::VectorXd> labels;
  labels.reserve(memory.size());
  for (std::size_t t = 0; t < memory.size(); ++t) {
    const auto& prob = memory.probabilities[t];
    Eigen::VectorXd label;
    if (base == LabelBase::OneHot) {
      label = Eigen::VectorXd::Zero(prob.size());
      label(memory.actions[t]) = 1.0;
    } else {
      label = prob;
    }
    label += alpha * policy_gradient(prob, memory.actions[t], memory.discounted[t]);
    labels.push_back(std::move(label));
  }
  return labels;
}

void standardize(std::vector<double>& values) {
  if (values.empty()) return;
  Eigen::Map<Eigen::ArrayXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  v -= v.mean();
  const double sd = std::sqrt(v.square().mean());
  if (sd > 0.0) v /= sd;
}

BatchMetrics train_batch(Network& params, std::vector<EpisodeMemory>& memories,
                         const TrainConfig& config, Optimizer<double>& optimizer) {
  if (memories.empty()) throw ArgumentError("train_batch needs at least one episode");
  BatchMetrics metrics;
  for (auto& m : memories) {
    if (!m.processed) process_episode(m, config.gamma);
    metrics.agent_points += m.agent_score;
    metrics.opponent_points += m.opponent_score;
    metrics.timesteps += m.size();
  }
  if (config.normalize_returns) {
    std::vector<double> all;
    all.reserve(metrics.timesteps);
    for (const auto& m : memories) all.insert(all.end(), m.discounted.begin(), m.discounted.end());
    standardize(all);
    auto it = all.begin();
    for (auto& m : memories) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(m.size()), m.discounted.begin());
      it += static_cast<std::ptrdiff_t>(m.size());
    }
  }
  std::vector<SparseInput<double>> inputs;
  std::vector<Eigen::VectorXd> labels;
  inputs.reserve(metrics.timesteps);
  labels.reserve(metrics.timesteps);
  for (const auto& m : memories) {
    auto episode_labels = make_labels(m, config.alpha, config.label_base);
    inputs.insert(inputs.end(), m.inputs.begin(), m.inputs.end());
    std::move(episode_labels.begin(), episode_labels.end(), std::back_inserter(labels));
  }
  if (inputs.empty()) throw ArgumentError("train_batch: batch holds no timesteps");
  metrics.mean_loss = fit_epoch(params, inputs, labels, optimizer, config.minibatch_size);
  return metrics;
}

std::vector<double> trailing_average(std::span<const double> values, std::size_t window) {
  std::vector<double> out(values.size());
  if (window == 0) return out;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    const std::size_t count = std::min(i + 1, window);
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

TrainingSummary training_loop(const RunConfig& config, const std::string& output_dir,
                              const std::vector<std::string>& header_lines) {
  config.validate();
  flush_denormals();
  namespace fs = std::filesystem;
  const fs::path dir(output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + output_dir + "': " + ec.message());

  const auto metrics_path = (dir / "metrics.csv").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open '" + metrics_path + "' for writing");
  for (const auto& line : header_lines) metrics << "# " << line << '\n';
  for (const auto& line : config.describe()) metrics << "# " << line << '\n';
  metrics << kMetricsHeader << '\n';

  const auto& t = config.train;
  const auto echo = provenance(config);
  auto params = init_network(config.layer_spec(), t.seed);
  save_weights(params, (dir / "weights_initial.json").string(), echo);

  TrainingSummary summary;
  if (t.max_batches == 0) return summary;

  auto optimizer = t.make_optimizer();
  double best_loss = std::numeric_limits<double>::infinity();
  double best_trailing = -std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  // running window for the trailing average
  double window_sum = 0.0;

  for (int batch = 1; batch <= t.max_batches; ++batch) {
    std::vector<EpisodeMemory> memories(static_cast<std::size_t>(t.batch_episodes));
    auto run_episode = [&](std::size_t e) {
      const auto index = static_cast<std::uint64_t>(summary.episodes) + e;
      GameConfig game = config.game;
      game.seed = derive_seed(t.seed, 1, index);
      Rng rng(derive_seed(t.seed, 2, index));
      memories[e] = play_episode(params, game, t.opponent, t.action_space, rng,
                                 t.max_episode_steps, t.max_rally_steps);
    };
    if (t.workers <= 1) {
      for (std::size_t e = 0; e < memories.size(); ++e) run_episode(e);
    } else {
      std::vector<std::thread> pool;
      const auto stride = static_cast<std::size_t>(t.workers);
      for (std::size_t w = 0; w < stride; ++w) {
        pool.emplace_back([&, w] {
          flush_denormals();
          for (std::size_t e = w; e < memories.size(); e += stride) run_episode(e);
        });
      }
      for (auto& th : pool) th.join();
    }

    const auto result = train_batch(params, memories, t, optimizer);
    summary.batch_losses.push_back(result.mean_loss);

    double trailing = 0.0;
    for (const auto& m : memories) {
      const double score = m.agent_score;
      summary.agent_scores.push_back(score);
      window_sum += score;
      const auto n = summary.agent_scores.size();
      if (n > 100) window_sum -= summary.agent_scores[n - 101];
      trailing = window_sum / static_cast<double>(std::min<std::size_t>(n, 100));
      metrics << batch << ',' << summary.episodes + 1 << ',' << m.agent_score << ','
              << m.opponent_score << ',' << number(result.mean_loss) << ',' << number(trailing)
              << '\n';
      ++summary.episodes;
    }
    const double count = static_cast<double>(memories.size());
    metrics << batch << ",," << number(result.agent_points / count) << ','
            << number(result.opponent_points / count) << ',' << number(result.mean_loss) << ','
            << number(trailing) << '\n';
    summary.batches = batch;
    summary.final_trailing_score = trailing;

    if (batch % t.checkpoint_every == 0) {
      save_weights(params, (dir / "checkpoint_latest.json").string(), echo);
    }
    if (trailing > best_trailing && summary.episodes >= 100) {
      best_trailing = trailing;
      save_weights(params, (dir / "checkpoint_best.json").string(), echo);
    }
    if (result.mean_loss < best_loss) {
      best_loss = result.mean_loss;
      since_improvement = 0;
    } else if (t.stop_patience > 0 && ++since_improvement >= t.stop_patience) {
      summary.stopped_on_patience = true;
      break;
    }
  }
  summary.best_loss = best_loss;
  metrics.flush();
  if (!metrics) throw std::runtime_error("failed writing '" + metrics_path + "'");
  save_weights(params, (dir / "weights_final.json").string(), echo);
  return summary;
}

}  // namespace pong
