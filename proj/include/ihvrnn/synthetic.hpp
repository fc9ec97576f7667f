#pragma once

// Synthetic scene generators with known ground truth.
//
// Team game: two teams, each following a latent regime (strategy). Team A's
// regime is a Markov chain; team B's regime at t is best_response(A_{t-1}) with
// probability `coupling`, otherwise B takes its own Markov step. Every player
// relaxes toward the target its team's current regime assigns to it:
//
//   x_t = clamp(x_{t-1} + alpha * (target[r_t][i] - x_{t-1}) + noise)
//
// Crossing flows: two pedestrian streams walking in opposite directions along
// a corridor, with a soft pairwise repulsion.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihvrnn/scene.hpp"

namespace ihvrnn {

struct TeamGameConfig {
  int n_per_team = 5;
  int T = 80;
  int regime_count = 4;
  double switch_prob = 0.1;
  double coupling = 1.0;
  double member_noise = 0.5;  // meters, per step
  double alpha = 0.1;
  double arena_length = 105.0;
  double arena_width = 68.0;
  double target_margin = 5.0;  // targets keep this distance from the touchlines
  uint64_t seed = 0;

  // Throws ConfigError naming the offending field (prefix "team_game.").
  void validate() const;
};

// Regime r -> (r + 1) mod regime_count.
int best_response(int regime, int regime_count);

struct ScenarioTruth {
  std::vector<std::array<int, 2>> strategy_sequence;     // [T] (A, B)
  std::vector<std::vector<Vec2>> formation_targets;      // [regime][agent]; agents team A then B
};

struct TeamGame {
  Scene scene;
  ScenarioTruth truth;
};

TeamGame gen_team_game(const TeamGameConfig& config);

// Seed of the k-th scene of a multi-scene team-game dataset (k = 0 keeps the
// base seed).
uint64_t team_game_scene_seed(uint64_t base, int k);

nlohmann::json truth_to_json(const ScenarioTruth& truth, const TeamGameConfig& config);
ScenarioTruth truth_from_json(const nlohmann::json& doc);

struct CrossingFlowsConfig {
  int n_per_stream = 6;
  int T = 40;
  double dt = 0.4;
  double corridor_length = 24.0;
  double corridor_width = 6.0;
  double speed = 1.3;            // preferred walking speed, m/s
  double speed_jitter = 0.1;     // std of per-agent preferred speed
  double noise = 0.02;           // position noise std per frame, meters
  double avoidance_strength = 3.0;
  double avoidance_range = 0.6;  // meters, e-folding length of the repulsion
  uint64_t seed = 0;

  void validate() const;
};

Scene gen_crossing_flows(const CrossingFlowsConfig& config);

// Mean squared error of the Bayes predictor that knows the generator, the
// true positions and the true regimes at the last observed frame. Errors are
// measured on the unit arena (x / length, y / width), the soccer metric units.
struct OracleStats {
  double mse = 0.0;
  double std_error = 0.0;  // of the mean over windows
  int n_windows = 0;
};

// The first n_windows stride-1 windows over scenes 0, 1, ... of the dataset
// seeded by config.seed.
OracleStats oracle_team_game_stats(const TeamGameConfig& config, int t_obs, int t_pre, int n_windows);
double oracle_team_game_mse(const TeamGameConfig& config, int t_obs, int t_pre, int n_windows);

// Oracle prediction for one window beginning at frame `start`: [n][T_pre].
std::vector<std::vector<Vec2>> oracle_team_game_prediction(const TeamGame& game, const TeamGameConfig& config,
                                                           int start, int t_obs, int t_pre);

// Same windows and units with constant-velocity extrapolation.
OracleStats constant_velocity_team_game_stats(const TeamGameConfig& config, int t_obs, int t_pre, int n_windows);

}  // namespace ihvrnn
