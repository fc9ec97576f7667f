#pragma once

// Dataset assembly: scenes from files or generators, cut into normalized,
// grouped windows in scene order.

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ihvrnn/scene.hpp"
#include "ihvrnn/synthetic.hpp"

namespace ihvrnn {

struct DatasetSpec {
  // team_game | crossing_flows | ped_tsv | soccer_json
  std::string kind = "team_game";
  TeamGameConfig team_game;
  int n_scenes = 1;  // generated scenes; scene k uses team_game_scene_seed(seed, k)
  CrossingFlowsConfig crossing_flows;
  std::vector<std::string> paths;  // for the file kinds
  int stride = 1;
  // static (teams) | dynamic (heading sectors) | auto (static when every
  // track carries a team, else dynamic)
  std::string grouping = "auto";
  int n_groups = 4;        // dynamic grouping
  double min_speed = 0.1;  // m/s, dynamic grouping

  void validate(const std::string& path = "data") const;
  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j, const std::string& path = "data");
};

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<SegmentWindow> windows;  // normalized, in scene order
  std::vector<int> scene_of;           // index into scenes, per window
  std::vector<int> start_index;        // window start within the scene's frame grid
};

std::vector<Scene> load_scenes(const DatasetSpec& spec);
Dataset build_dataset(const std::vector<Scene>& scenes, const DatasetSpec& spec, int t_obs, int t_pre);
Dataset build_dataset(const DatasetSpec& spec, int t_obs, int t_pre);

// Number of groups the spec produces (2 for teams, n_groups otherwise).
int dataset_groups(const DatasetSpec& spec, const std::vector<Scene>& scenes);

// Train / held-out split: the last `fraction` of windows (by scene order) are
// held out; at least one window lands on each side when there are >= 2.
struct Split {
  std::vector<int> train;
  std::vector<int> held_out;
};
Split split_holdout(int n_windows, double fraction = 0.2);

}  // namespace ihvrnn
