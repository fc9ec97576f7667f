#include "ihvrnn/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "ihvrnn/errors.hpp"
#include "ihvrnn/json_fields.hpp"
#include "ihvrnn/scene_io.hpp"
#include "ihvrnn/windows.hpp"

namespace ihvrnn {

namespace {

TeamGameConfig team_game_from_json(const nlohmann::json& j, const std::string& path) {
  TeamGameConfig c;
  JsonFields f(j, path);
  f.read("n_per_team", c.n_per_team);
  f.read("T", c.T);
  f.read("regime_count", c.regime_count);
  f.read("switch_prob", c.switch_prob);
  f.read("coupling", c.coupling);
  f.read("member_noise", c.member_noise);
  f.read("alpha", c.alpha);
  f.read("arena_length", c.arena_length);
  f.read("arena_width", c.arena_width);
  f.read("target_margin", c.target_margin);
  f.read("seed", c.seed);
  f.finish();
  return c;
}

nlohmann::json team_game_to_json(const TeamGameConfig& c) {
  return {{"n_per_team", c.n_per_team},     {"T", c.T},
          {"regime_count", c.regime_count}, {"switch_prob", c.switch_prob},
          {"coupling", c.coupling},         {"member_noise", c.member_noise},
          {"alpha", c.alpha},               {"arena_length", c.arena_length},
          {"arena_width", c.arena_width},   {"target_margin", c.target_margin},
          {"seed", c.seed}};
}

CrossingFlowsConfig crossing_from_json(const nlohmann::json& j, const std::string& path) {
  CrossingFlowsConfig c;
  JsonFields f(j, path);
  f.read("n_per_stream", c.n_per_stream);
  f.read("T", c.T);
  f.read("dt", c.dt);
  f.read("corridor_length", c.corridor_length);
  f.read("corridor_width", c.corridor_width);
  f.read("speed", c.speed);
  f.read("speed_jitter", c.speed_jitter);
  f.read("noise", c.noise);
  f.read("avoidance_strength", c.avoidance_strength);
  f.read("avoidance_range", c.avoidance_range);
  f.read("seed", c.seed);
  f.finish();
  return c;
}

nlohmann::json crossing_to_json(const CrossingFlowsConfig& c) {
  return {{"n_per_stream", c.n_per_stream},
          {"T", c.T},
          {"dt", c.dt},
          {"corridor_length", c.corridor_length},
          {"corridor_width", c.corridor_width},
          {"speed", c.speed},
          {"speed_jitter", c.speed_jitter},
          {"noise", c.noise},
          {"avoidance_strength", c.avoidance_strength},
          {"avoidance_range", c.avoidance_range},
          {"seed", c.seed}};
}

bool all_teams(const std::vector<Scene>& scenes) {
  for (const auto& s : scenes)
    for (const auto& a : s.agents)
      if (!a.static_group) return false;
  return true;
}

bool use_static(const DatasetSpec& spec, const std::vector<Scene>& scenes) {
  if (spec.grouping == "static") return true;
  if (spec.grouping == "dynamic") return false;
  return all_teams(scenes);
}

}  // namespace

void DatasetSpec::validate(const std::string& path) const {
  static const std::vector<std::string> kinds = {"team_game", "crossing_flows", "ped_tsv", "soccer_json"};
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw ConfigError(path + ".kind", "unknown dataset kind '" + kind + "'");
  }
  if (kind == "team_game") {
    try {
      team_game.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(path + "." + e.path(), std::string(e.what()).substr(e.path().size() + 2));
    }
  }
  if (kind == "crossing_flows") {
    try {
      crossing_flows.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(path + "." + e.path(), std::string(e.what()).substr(e.path().size() + 2));
    }
  }
  if ((kind == "ped_tsv" || kind == "soccer_json") && paths.empty()) throw ConfigError(path + ".paths", "at least one file required");
  if (n_scenes < 1) throw ConfigError(path + ".n_scenes", "must be >= 1");
  if (stride < 1) throw ConfigError(path + ".stride", "must be >= 1");
  if (grouping != "auto" && grouping != "static" && grouping != "dynamic") {
    throw ConfigError(path + ".grouping", "expected auto, static or dynamic");
  }
  if (n_groups < 1) throw ConfigError(path + ".n_groups", "must be >= 1");
  if (!(min_speed >= 0.0)) throw ConfigError(path + ".min_speed", "must be >= 0");
}

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json j = {{"kind", kind},   {"n_scenes", n_scenes}, {"paths", paths},         {"stride", stride},
                      {"grouping", grouping}, {"n_groups", n_groups}, {"min_speed", min_speed}};
  if (kind == "team_game") j["team_game"] = team_game_to_json(team_game);
  if (kind == "crossing_flows") j["crossing_flows"] = crossing_to_json(crossing_flows);
  return j;
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j, const std::string& path) {
  DatasetSpec s;
  JsonFields f(j, path);
  f.read("kind", s.kind);
  if (const auto* t = f.child("team_game")) s.team_game = team_game_from_json(*t, f.path_of("team_game"));
  if (const auto* c = f.child("crossing_flows")) s.crossing_flows = crossing_from_json(*c, f.path_of("crossing_flows"));
  f.read("n_scenes", s.n_scenes);
  f.read("paths", s.paths);
  f.read("stride", s.stride);
  f.read("grouping", s.grouping);
  f.read("n_groups", s.n_groups);
  f.read("min_speed", s.min_speed);
  f.finish();
  s.validate(path);
  return s;
}

std::vector<Scene> load_scenes(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Scene> scenes;
  if (spec.kind == "team_game") {
    for (int k = 0; k < spec.n_scenes; ++k) {
      TeamGameConfig c = spec.team_game;
      c.seed = team_game_scene_seed(spec.team_game.seed, k);
      scenes.push_back(gen_team_game(c).scene);
    }
  } else if (spec.kind == "crossing_flows") {
    for (int k = 0; k < spec.n_scenes; ++k) {
      CrossingFlowsConfig c = spec.crossing_flows;
      c.seed = team_game_scene_seed(spec.crossing_flows.seed, k);
      scenes.push_back(gen_crossing_flows(c));
    }
  } else if (spec.kind == "ped_tsv") {
    for (const auto& p : spec.paths)
      for (auto& s : load_ped_tsv(p)) scenes.push_back(std::move(s));
  } else {
    for (const auto& p : spec.paths) scenes.push_back(load_soccer_json(p));
  }
  return scenes;
}

int dataset_groups(const DatasetSpec& spec, const std::vector<Scene>& scenes) {
  return use_static(spec, scenes) ? 2 : spec.n_groups;
}

Dataset build_dataset(const std::vector<Scene>& scenes, const DatasetSpec& spec, int t_obs, int t_pre) {
  Dataset d;
  d.scenes = scenes;
  const bool teams = use_static(spec, scenes);
  if (teams && !all_teams(scenes)) throw DataError("static grouping requested but some tracks carry no team");
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    auto windows = window_segments(scenes[k], t_obs, t_pre, spec.stride);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      SegmentWindow& win = windows[w];
      win.groups = teams ? assign_groups_static(win, 2) : assign_groups_dynamic(win, spec.n_groups, spec.min_speed);
      auto [normalized, tf] = normalize(win);
      if (!normalized.obs.all_finite() || !normalized.pred.all_finite()) throw DataError(scenes[k].scene_id + ": non-finite window");
      d.windows.push_back(std::move(normalized));
      d.scene_of.push_back(static_cast<int>(k));
      d.start_index.push_back(static_cast<int>(w) * spec.stride);
    }
  }
  return d;
}

Dataset build_dataset(const DatasetSpec& spec, int t_obs, int t_pre) {
  return build_dataset(load_scenes(spec), spec, t_obs, t_pre);
}

Split split_holdout(int n_windows, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ContractViolation("split_holdout: fraction must lie in [0, 1)");
  int held = static_cast<int>(std::floor(fraction * n_windows + 1e-9));
  if (fraction > 0.0 && n_windows >= 2) held = std::clamp(held, 1, n_windows - 1);
  Split s;
  for (int i = 0; i < n_windows - held; ++i) s.train.push_back(i);
  for (int i = n_windows - held; i < n_windows; ++i) s.held_out.push_back(i);
  return s;
}

}  // namespace ihvrnn
