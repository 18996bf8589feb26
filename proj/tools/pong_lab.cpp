#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pong/errors.hpp"
#include "pong/experiments.hpp"
#include "pong/viz_server.hpp"

using namespace pong;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

void on_signal(int) { g_interrupted = 1; }

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : items) out.push_back(parse_override(s));
  return out;
}

RunConfig game_settings(const std::vector<std::string>& sets) {
  RunConfig config;
  for (const auto& [k, v] : parse_overrides(sets)) config.set(k, v);
  config.validate();
  return config;
}

int cmd_list_presets() {
  for (const auto& p : presets()) std::printf("%-18s %s\n", p.name.c_str(), p.notes.c_str());
  return 0;
}

int cmd_train(const std::string& preset, const std::vector<std::string>& sets, std::string out) {
  if (out.empty()) out = (std::filesystem::path("runs") / preset).string();
  const auto summary = run_preset(preset, parse_overrides(sets), out);
  std::printf("batches=%d episodes=%d trailing_avg_100=%.3f best_loss=%.6f%s\n", summary.batches,
              summary.episodes, summary.final_trailing_score, summary.best_loss,
              summary.stopped_on_patience ? " (stopped on patience)" : "");
  std::printf("outputs in %s\n", out.c_str());
  return 0;
}

int cmd_eval(const std::string& weights, const std::string& opponent, int episodes, std::uint64_t seed,
             bool greedy, const std::vector<std::string>& sets) {
  const auto config = game_settings(sets);
  const auto kind = parse_opponent(opponent);
  const bool random_agent = weights == "random";
  Network net;
  if (!random_agent) net = load_weights(weights);
  double agent_total = 0, opp_total = 0;
  int wins = 0, truncated = 0;
  for (int e = 0; e < episodes; ++e) {
    GameConfig game = config.game;
    game.seed = derive_seed(seed, 1, static_cast<std::uint64_t>(e));
    Rng rng(derive_seed(seed, 2, static_cast<std::uint64_t>(e)));
    AgentFn agent = [&](const GameState&, const ModelInput& input) {
      if (random_agent) return random_policy(rng);
      const auto trace = forward(net, flatten_sparse(input));
      const auto& p = trace.layers.back();
      return to_paddle_action(greedy ? argmax(p) : sample_action(p, rng));
    };
    const auto r = play_match(game, kind, agent, rng, config.train.max_episode_steps);
    agent_total += r.agent_score;
    opp_total += r.opponent_score;
    wins += r.agent_score > r.opponent_score && !r.truncated;
    truncated += r.truncated;
    std::printf("episode %d agent %d opponent %d steps %lld%s\n", e, r.agent_score, r.opponent_score,
                static_cast<long long>(r.steps), r.truncated ? " truncated" : "");
  }
  std::printf("mean agent score %.3f, mean opponent score %.3f, wins %d/%d, truncated %d\n",
              agent_total / episodes, opp_total / episodes, wins, episodes, truncated);
  return 0;
}

viz::ExhibitSession make_session(const std::string& weights, const viz::ExhibitSettings& settings,
                                 const std::vector<std::string>& sets) {
  return viz::ExhibitSession(load_weights(weights), game_settings(sets).game, settings);
}

int cmd_serve(const std::string& weights, const viz::ExhibitSettings& settings, viz::ServerOptions options,
              const std::vector<std::string>& sets) {
  viz::ExhibitServer server(make_session(weights, settings, sets), options);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  std::printf("serving on http://%s:%u/ (websocket /ws, controller /ws?role=controller)\n",
              options.bind_address.c_str(), server.port());
  std::fflush(stdout);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  std::printf("stopped after %llu frames\n", static_cast<unsigned long long>(server.frames_broadcast()));
  return 0;
}

int cmd_record(const std::string& weights, const viz::ExhibitSettings& settings, int frames,
               const std::string& out, const std::vector<std::string>& sets) {
  auto session = make_session(weights, settings, sets);
  std::ofstream file(out);
  if (!file) throw std::runtime_error("cannot write " + out);
  viz::record_session(session, static_cast<std::size_t>(frames), file);
  return 0;
}

int report(const viz::ProtocolValidator& v) {
  std::printf("frames %zu, errors %zu, violations %zu\n", v.frames().size(), v.errors_received(),
              v.violations().size());
  for (const auto& s : v.violations()) std::printf("  %s\n", s.c_str());
  return v.ok() ? 0 : 1;
}

int cmd_validate(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("cannot read " + path);
  return report(viz::validate_session(file));
}

int cmd_watch(const std::string& host, unsigned short port, int frames) {
  viz::ExhibitClient client(host, port, false);
  viz::ProtocolValidator v;
  while (v.frames().size() < static_cast<std::size_t>(frames)) {
    if (!v.accept(client.read())) break;
  }
  client.close();
  return report(v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pong policy-gradient lab"};
  app.require_subcommand(1);

  std::vector<std::string> sets;
  auto add_sets = [&](CLI::App* cmd) {
    cmd->add_option("--set", sets, "key=value override (repeatable)");
  };

  auto* list = app.add_subcommand("list-presets", "List experiment presets");

  std::string preset, out;
  auto* train = app.add_subcommand("train", "Train a policy from a preset");
  train->add_option("--preset", preset, "Preset name")->required();
  train->add_option("--out", out, "Output directory (default runs/<preset>)");
  add_sets(train);

  std::string weights, opponent = "consistent";
  int episodes = 10;
  std::uint64_t seed = 0;
  bool greedy = false;
  auto* eval = app.add_subcommand("eval", "Play saved weights against a scripted opponent");
  eval->add_option("--weights", weights, "Weights file, or 'random' for the random policy")->required();
  eval->add_option("--opponent", opponent, "Opponent name");
  eval->add_option("--episodes", episodes, "Number of games")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Master seed for the games");
  eval->add_flag("--greedy", greedy, "Take the most probable action instead of sampling");
  add_sets(eval);

  viz::ExhibitSettings settings;
  viz::ServerOptions options;
  std::string fallback = "consistent";
  auto add_exhibit = [&](CLI::App* cmd) {
    cmd->add_option("--weights", weights, "Weights file")->required();
    cmd->add_option("--fps", settings.frame_rate, "Model steps per second");
    cmd->add_flag("--stochastic", settings.stochastic, "Sample actions instead of argmax");
    cmd->add_option("--activation-threshold", settings.activation_threshold, "Smallest activation shown as lit");
    cmd->add_option("--weight-threshold", settings.weight_display_threshold, "Smallest |weight| drawn as an edge");
    cmd->add_option("--fallback", fallback, "Opponent used while no controller is connected");
    cmd->add_option("--seed", settings.seed, "Seed for games and sampling");
    add_sets(cmd);
  };
  auto* serve = app.add_subcommand("serve", "Run the live exhibit server");
  add_exhibit(serve);
  serve->add_option("--port", options.port, "TCP port (0 picks one)");
  serve->add_option("--bind", options.bind_address, "Listen address");
  serve->add_option("--static-dir", options.static_dir, "Directory with the frontend bundle");

  int frames = 200;
  std::string session_file;
  auto* record = app.add_subcommand("record-session", "Write a hello plus N frames, one message per line");
  add_exhibit(record);
  record->add_option("--frames", frames, "Frame count")->check(CLI::PositiveNumber);
  record->add_option("--out", session_file, "Output file")->required();

  auto* validate = app.add_subcommand("validate-session", "Check a recorded session against the protocol");
  validate->add_option("file", session_file, "Recorded session")->required();

  std::string host = "127.0.0.1";
  unsigned short port = 8080;
  auto* watch = app.add_subcommand("watch", "Connect as a spectator and validate the live stream");
  watch->add_option("--host", host);
  watch->add_option("--port", port);
  watch->add_option("--frames", frames)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    settings.fallback = parse_opponent(fallback);
    if (*list) return cmd_list_presets();
    if (*train) return cmd_train(preset, sets, out);
    if (*eval) return cmd_eval(weights, opponent, episodes, seed, greedy, sets);
    if (*serve) return cmd_serve(weights, settings, options, sets);
    if (*record) return cmd_record(weights, settings, frames, session_file, sets);
    if (*validate) return cmd_validate(session_file);
    if (*watch) return cmd_watch(host, port, frames);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
