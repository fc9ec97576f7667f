#include "ihvrnn/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "ihvrnn/errors.hpp"
#include "ihvrnn/rng.hpp"
#include "ihvrnn/scene_io.hpp"

namespace ihvrnn {

void TeamGameConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) { throw ConfigError("team_game." + field, what); };
  if (n_per_team < 2) fail("n_per_team", "must be >= 2");
  if (T < 2) fail("T", "must be >= 2");
  if (regime_count < 1) fail("regime_count", "must be >= 1");
  if (!(switch_prob >= 0.0 && switch_prob <= 1.0)) fail("switch_prob", "must lie in [0, 1]");
  if (!(coupling >= 0.0 && coupling <= 1.0)) fail("coupling", "must lie in [0, 1]");
  if (!(member_noise >= 0.0) || !std::isfinite(member_noise)) fail("member_noise", "must be a finite value >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail("alpha", "must lie in (0, 1]");
  if (!(arena_length > 0.0) || !std::isfinite(arena_length)) fail("arena_length", "must be positive");
  if (!(arena_width > 0.0) || !std::isfinite(arena_width)) fail("arena_width", "must be positive");
  if (!(target_margin >= 0.0 && 2.0 * target_margin < std::min(arena_length, arena_width))) {
    fail("target_margin", "must be >= 0 and leave a non-empty inner box");
  }
}

int best_response(int regime, int regime_count) { return (regime + 1) % regime_count; }

uint64_t team_game_scene_seed(uint64_t base, int k) {
  return k == 0 ? base : splitmix64(base + static_cast<uint64_t>(k));
}

namespace {

int markov_step(int regime, int regime_count, double switch_prob, Rng& rng) {
  if (regime_count < 2 || !rng.bernoulli(switch_prob)) return regime;
  const int other = rng.uniform_int(regime_count - 1);
  return other >= regime ? other + 1 : other;
}

}  // namespace

TeamGame gen_team_game(const TeamGameConfig& c) {
  c.validate();
  const Rng root(c.seed);
  Rng target_rng = root.derive("targets");
  Rng init_rng = root.derive("init");
  Rng regime_rng = root.derive("regimes");
  Rng noise_rng = root.derive("noise");
  const int n = 2 * c.n_per_team;
  const double lo_x = c.target_margin, hi_x = c.arena_length - c.target_margin;
  const double lo_y = c.target_margin, hi_y = c.arena_width - c.target_margin;

  TeamGame game;
  auto& truth = game.truth;
  truth.formation_targets.assign(c.regime_count, std::vector<Vec2>(n));
  for (int r = 0; r < c.regime_count; ++r)
    for (int i = 0; i < n; ++i) truth.formation_targets[r][i] = {target_rng.uniform(lo_x, hi_x), target_rng.uniform(lo_y, hi_y)};

  truth.strategy_sequence.resize(c.T);
  int a = regime_rng.uniform_int(c.regime_count);
  int b = best_response(a, c.regime_count);
  truth.strategy_sequence[0] = {a, b};
  for (int t = 1; t < c.T; ++t) {
    const int a_prev = a;
    a = markov_step(a_prev, c.regime_count, c.switch_prob, regime_rng);
    if (regime_rng.bernoulli(c.coupling)) {
      b = best_response(a_prev, c.regime_count);
    } else {
      b = markov_step(b, c.regime_count, c.switch_prob, regime_rng);
    }
    truth.strategy_sequence[t] = {a, b};
  }

  Scene& scene = game.scene;
  scene.scene_id = "team_game_" + std::to_string(c.seed);
  scene.frame_rate_hz = kSoccerFrameRateHz;
  scene.arena = BoundingBox{{0.0, 0.0}, {c.arena_length, c.arena_width}};
  scene.agents.resize(n);
  std::vector<Vec2> pos(n);
  for (int i = 0; i < n; ++i) {
    scene.agents[i].agent_id = i;
    scene.agents[i].static_group = i < c.n_per_team ? 0 : 1;
    scene.agents[i].frames.reserve(c.T);
    pos[i] = {init_rng.uniform(lo_x, hi_x), init_rng.uniform(lo_y, hi_y)};
  }
  for (int t = 0; t < c.T; ++t) {
    if (t > 0) {
      for (int i = 0; i < n; ++i) {
        const int regime = truth.strategy_sequence[t][i < c.n_per_team ? 0 : 1];
        const Vec2 target = truth.formation_targets[regime][i];
        Vec2 p = pos[i];
        p.x += c.alpha * (target.x - p.x) + c.member_noise * noise_rng.normal();
        p.y += c.alpha * (target.y - p.y) + c.member_noise * noise_rng.normal();
        pos[i] = {std::clamp(p.x, 0.0, c.arena_length), std::clamp(p.y, 0.0, c.arena_width)};
      }
    }
    for (int i = 0; i < n; ++i) scene.agents[i].frames.push_back({t, pos[i]});
  }
  scene.validate();
  return game;
}

nlohmann::json truth_to_json(const ScenarioTruth& truth, const TeamGameConfig& c) {
  nlohmann::json doc;
  doc["rng_algorithm"] = std::string(Rng::kAlgorithm);
  doc["best_response"] = "(r + 1) mod regime_count";
  doc["config"] = {{"n_per_team", c.n_per_team},     {"T", c.T},
                   {"regime_count", c.regime_count}, {"switch_prob", c.switch_prob},
                   {"coupling", c.coupling},         {"member_noise", c.member_noise},
                   {"alpha", c.alpha},               {"arena_length", c.arena_length},
                   {"arena_width", c.arena_width},   {"target_margin", c.target_margin},
                   {"seed", c.seed}};
  auto seq = nlohmann::json::array();
  for (const auto& ab : truth.strategy_sequence) seq.push_back({ab[0], ab[1]});
  doc["strategy_sequence"] = std::move(seq);
  auto targets = nlohmann::json::array();
  for (const auto& per_agent : truth.formation_targets) {
    auto row = nlohmann::json::array();
    for (const Vec2& p : per_agent) row.push_back({p.x, p.y});
    targets.push_back(std::move(row));
  }
  doc["formation_targets"] = std::move(targets);
  return doc;
}

ScenarioTruth truth_from_json(const nlohmann::json& doc) {
  ScenarioTruth truth;
  try {
    for (const auto& ab : doc.at("strategy_sequence")) truth.strategy_sequence.push_back({ab.at(0).get<int>(), ab.at(1).get<int>()});
    for (const auto& row : doc.at("formation_targets")) {
      std::vector<Vec2> per_agent;
      for (const auto& p : row) per_agent.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      truth.formation_targets.push_back(std::move(per_agent));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("truth file: ") + e.what());
  }
  return truth;
}

void CrossingFlowsConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) { throw ConfigError("crossing_flows." + field, what); };
  if (n_per_stream < 1) fail("n_per_stream", "must be >= 1");
  if (T < 2) fail("T", "must be >= 2");
  if (!(dt > 0.0)) fail("dt", "must be positive");
  if (!(corridor_length > 8.0)) fail("corridor_length", "must exceed 8 m");
  if (!(corridor_width > 1.0)) fail("corridor_width", "must exceed 1 m");
  if (!(speed > 0.0)) fail("speed", "must be positive");
  if (!(speed_jitter >= 0.0)) fail("speed_jitter", "must be >= 0");
  if (!(noise >= 0.0)) fail("noise", "must be >= 0");
  if (!(avoidance_strength >= 0.0)) fail("avoidance_strength", "must be >= 0");
  if (!(avoidance_range > 0.0)) fail("avoidance_range", "must be positive");
}

Scene gen_crossing_flows(const CrossingFlowsConfig& c) {
  c.validate();
  const Rng root(c.seed);
  Rng spawn_rng = root.derive("spawn");
  Rng noise_rng = root.derive("noise");
  const int n = 2 * c.n_per_stream;
  const double spawn_depth = 4.0, edge = 0.3, spawn_spacing = 0.8;
  const double cap = 2.0 * c.speed;
  constexpr int kSubsteps = 10;

  std::vector<Vec2> pos(n), pref(n);
  for (int i = 0; i < n; ++i) {
    const bool east = i < c.n_per_stream;
    Vec2 p;
    for (int attempt = 0;; ++attempt) {
      p.x = east ? spawn_rng.uniform(0.0, spawn_depth) : spawn_rng.uniform(c.corridor_length - spawn_depth, c.corridor_length);
      p.y = spawn_rng.uniform(edge, c.corridor_width - edge);
      bool ok = true;
      for (int j = 0; j < i && ok; ++j) ok = std::hypot(p.x - pos[j].x, p.y - pos[j].y) >= spawn_spacing;
      if (ok || attempt > 1000) break;
    }
    pos[i] = p;
    const double v = std::max(0.3 * c.speed, c.speed + c.speed_jitter * spawn_rng.normal());
    pref[i] = {east ? v : -v, 0.0};
  }

  Scene scene;
  scene.scene_id = "crossing_flows_" + std::to_string(c.seed);
  scene.frame_rate_hz = 1.0 / c.dt;
  scene.arena = BoundingBox{{-c.corridor_length, 0.0}, {2.0 * c.corridor_length, c.corridor_width}};
  scene.agents.resize(n);
  for (int i = 0; i < n; ++i) scene.agents[i].agent_id = i;

  const double h = c.dt / kSubsteps;
  std::vector<Vec2> vel(n);
  for (int t = 0; t < c.T; ++t) {
    if (t > 0) {
      for (int sub = 0; sub < kSubsteps; ++sub) {
        for (int i = 0; i < n; ++i) {
          Vec2 v = pref[i];
          const double heading = pref[i].x > 0 ? 1.0 : -1.0;
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = pos[i].x - pos[j].x, dy = pos[i].y - pos[j].y;
            const double d = std::hypot(dx, dy);
            if (d > 8.0 * c.avoidance_range) continue;
            const double f = c.avoidance_strength * std::exp(-d / c.avoidance_range);
            const double ux = d > 1e-9 ? dx / d : 0.0, uy = d > 1e-9 ? dy / d : 1.0;
            // Push apart, plus a sidestep to the walker's right.
            v.x += f * ux;
            v.y += f * (uy - 0.3 * heading);
          }
          const double s = std::hypot(v.x, v.y);
          if (s > cap) v = {v.x * cap / s, v.y * cap / s};
          vel[i] = v;
        }
        for (int i = 0; i < n; ++i) {
          pos[i].x += h * vel[i].x;
          pos[i].y = std::clamp(pos[i].y + h * vel[i].y, 0.1, c.corridor_width - 0.1);
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      Vec2 p = pos[i];
      p.x += c.noise * noise_rng.normal();
      p.y = std::clamp(p.y + c.noise * noise_rng.normal(), 0.0, c.corridor_width);
      scene.agents[i].frames.push_back({t, p});
    }
  }
  scene.validate();
  return scene;
}

std::vector<std::vector<Vec2>> oracle_team_game_prediction(const TeamGame& game, const TeamGameConfig& c, int start,
                                                           int t_obs, int t_pre) {
  const int R = c.regime_count, n = 2 * c.n_per_team;
  const int last = start + t_obs - 1;
  if (start < 0 || t_obs < 1 || last + t_pre > c.T - 1) throw ContractViolation("oracle: window exceeds the scene");
  const auto& truth = game.truth;
  // Joint distribution over (A, B) regimes, propagated exactly.
  std::vector<double> p(static_cast<std::size_t>(R) * R, 0.0), next(p.size());
  p[static_cast<std::size_t>(truth.strategy_sequence[last][0]) * R + truth.strategy_sequence[last][1]] = 1.0;
  auto markov = [&](int from, int to) {
    if (R < 2) return 1.0;
    return from == to ? 1.0 - c.switch_prob : c.switch_prob / (R - 1);
  };
  std::vector<Vec2> mean(n);
  for (int i = 0; i < n; ++i) mean[i] = game.scene.agents[i].frames[last].position;
  std::vector<std::vector<Vec2>> out(n, std::vector<Vec2>(t_pre));
  for (int k = 0; k < t_pre; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int a = 0; a < R; ++a)
      for (int b = 0; b < R; ++b) {
        const double w = p[static_cast<std::size_t>(a) * R + b];
        if (w == 0.0) continue;
        for (int a2 = 0; a2 < R; ++a2)
          for (int b2 = 0; b2 < R; ++b2) {
            const double tb = c.coupling * (b2 == best_response(a, R) ? 1.0 : 0.0) + (1.0 - c.coupling) * markov(b, b2);
            next[static_cast<std::size_t>(a2) * R + b2] += w * markov(a, a2) * tb;
          }
      }
    p.swap(next);
    std::vector<double> pa(R, 0.0), pb(R, 0.0);
    for (int a = 0; a < R; ++a)
      for (int b = 0; b < R; ++b) {
        pa[a] += p[static_cast<std::size_t>(a) * R + b];
        pb[b] += p[static_cast<std::size_t>(a) * R + b];
      }
    for (int i = 0; i < n; ++i) {
      const auto& marg = i < c.n_per_team ? pa : pb;
      Vec2 target;
      for (int r = 0; r < R; ++r) {
        target.x += marg[r] * truth.formation_targets[r][i].x;
        target.y += marg[r] * truth.formation_targets[r][i].y;
      }
      mean[i].x += c.alpha * (target.x - mean[i].x);
      mean[i].y += c.alpha * (target.y - mean[i].y);
      out[i][k] = mean[i];
    }
  }
  return out;
}

namespace {

template <class Predict>
OracleStats team_game_window_stats(const TeamGameConfig& config, int t_obs, int t_pre, int n_windows, Predict predict) {
  if (t_obs < 2 || t_pre < 1 || n_windows < 1) throw ContractViolation("oracle: need T_obs >= 2, T_pre >= 1, n_windows >= 1");
  if (config.T < t_obs + t_pre) throw ContractViolation("oracle: scene shorter than one window");
  std::vector<double> per_window;
  for (int k = 0; static_cast<int>(per_window.size()) < n_windows; ++k) {
    TeamGameConfig cfg = config;
    cfg.seed = team_game_scene_seed(config.seed, k);
    const TeamGame game = gen_team_game(cfg);
    for (int start = 0; start + t_obs + t_pre <= cfg.T && static_cast<int>(per_window.size()) < n_windows; ++start) {
      const auto pred = predict(game, cfg, start);
      double se = 0.0;
      const int n = static_cast<int>(pred.size());
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < t_pre; ++s) {
          const Vec2 gt = game.scene.agents[i].frames[start + t_obs + s].position;
          const double dx = (pred[i][s].x - gt.x) / cfg.arena_length, dy = (pred[i][s].y - gt.y) / cfg.arena_width;
          se += dx * dx + dy * dy;
        }
      per_window.push_back(se / (static_cast<double>(n) * t_pre));
    }
  }
  OracleStats st;
  st.n_windows = static_cast<int>(per_window.size());
  double sum = 0.0;
  for (double v : per_window) sum += v;
  st.mse = sum / st.n_windows;
  double ss = 0.0;
  for (double v : per_window) ss += (v - st.mse) * (v - st.mse);
  st.std_error = st.n_windows > 1 ? std::sqrt(ss / (st.n_windows - 1) / st.n_windows) : 0.0;
  return st;
}

}  // namespace

OracleStats oracle_team_game_stats(const TeamGameConfig& config, int t_obs, int t_pre, int n_windows) {
  return team_game_window_stats(config, t_obs, t_pre, n_windows, [&](const TeamGame& g, const TeamGameConfig& cfg, int start) {
    return oracle_team_game_prediction(g, cfg, start, t_obs, t_pre);
  });
}

double oracle_team_game_mse(const TeamGameConfig& config, int t_obs, int t_pre, int n_windows) {
  return oracle_team_game_stats(config, t_obs, t_pre, n_windows).mse;
}

OracleStats constant_velocity_team_game_stats(const TeamGameConfig& config, int t_obs, int t_pre, int n_windows) {
  return team_game_window_stats(config, t_obs, t_pre, n_windows, [&](const TeamGame& g, const TeamGameConfig&, int start) {
    const int last = start + t_obs - 1;
    std::vector<std::vector<Vec2>> out(g.scene.agents.size(), std::vector<Vec2>(t_pre));
    for (std::size_t i = 0; i < g.scene.agents.size(); ++i) {
      const Vec2 p = g.scene.agents[i].frames[last].position, q = g.scene.agents[i].frames[last - 1].position;
      for (int s = 0; s < t_pre; ++s) out[i][s] = {p.x + (s + 1) * (p.x - q.x), p.y + (s + 1) * (p.y - q.y)};
    }
    return out;
  });
}

}  // namespace ihvrnn
