#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ihvrnn/matrix.hpp"

namespace ihvrnn {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct BoundingBox {
  Vec2 min;
  Vec2 max;
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
};

struct TrackPoint {
  int64_t frame = 0;
  Vec2 position;
};

struct AgentTrack {
  int64_t agent_id = 0;
  std::vector<TrackPoint> frames;  // strictly increasing frame indices
  std::optional<int> static_group;
};

struct Scene {
  std::string scene_id;
  double frame_rate_hz = 2.5;
  std::vector<AgentTrack> agents;
  std::optional<BoundingBox> arena;

  // Throws DataError when an invariant does not hold.
  void validate() const;
};

// Positions of n agents over T consecutive steps.
class TrackArray {
 public:
  TrackArray() = default;
  TrackArray(int n_agents, int steps) : n_(n_agents), t_(steps), data_(static_cast<std::size_t>(n_agents) * steps) {}

  int agents() const { return n_; }
  int steps() const { return t_; }
  Vec2& at(int agent, int step) { return data_[static_cast<std::size_t>(agent) * t_ + step]; }
  Vec2 at(int agent, int step) const { return data_[static_cast<std::size_t>(agent) * t_ + step]; }

  // [n x 2] positions at one step.
  Matrix frame(int step) const;
  void set_frame(int step, const Matrix& positions);
  bool all_finite() const;

  friend bool operator==(const TrackArray&, const TrackArray&) = default;

 private:
  int n_ = 0;
  int t_ = 0;
  std::vector<Vec2> data_;
};

struct NormalizeTransform {
  Vec2 shift;
  double scale = 1.0;

  Vec2 apply(Vec2 p) const { return {(p.x - shift.x) / scale, (p.y - shift.y) / scale}; }
  Vec2 invert(Vec2 p) const { return {p.x * scale + shift.x, p.y * scale + shift.y}; }
  TrackArray apply(const TrackArray& a) const;
  TrackArray invert(const TrackArray& a) const;
};

struct GroupAssignment {
  int n_groups = 1;
  std::vector<std::vector<int>> membership;    // [T][n_agents]
  std::vector<std::vector<uint8_t>> active;  // [T][n_groups]

  // Derives the active flags from membership.
  static GroupAssignment from_membership(int n_groups, std::vector<std::vector<int>> membership);
  int steps() const { return static_cast<int>(membership.size()); }
  // Member lists of every group at step t.
  std::vector<std::vector<int>> members(int t) const;
};

struct SegmentWindow {
  std::string scene_id;
  int64_t start_frame = 0;
  double dt = 0.4;  // seconds per step
  TrackArray obs;   // [n x T_obs]
  TrackArray pred;  // [n x T_pre]
  std::vector<int64_t> agent_ids;
  GroupAssignment groups;  // over T_obs + T_pre steps
  NormalizeTransform normalizer;
  bool normalized = false;
  std::optional<BoundingBox> arena;

  int n_agents() const { return obs.agents(); }
  int t_obs() const { return obs.steps(); }
  int t_pre() const { return pred.steps(); }
};

}  // namespace ihvrnn
