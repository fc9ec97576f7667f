#include "ihvrnn/windows.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "ihvrnn/errors.hpp"

namespace ihvrnn {

std::vector<SegmentWindow> window_segments(const Scene& scene, int t_obs, int t_pre, int stride) {
  if (t_obs < 1 || t_pre < 1 || stride < 1) throw ContractViolation("window_segments: T_obs, T_pre, stride must be >= 1");
  std::set<int64_t> frame_set;
  for (const auto& a : scene.agents)
    for (const auto& f : a.frames) frame_set.insert(f.frame);
  const std::vector<int64_t> grid(frame_set.begin(), frame_set.end());
  const int length = t_obs + t_pre;
  std::vector<SegmentWindow> out;
  if (static_cast<int>(grid.size()) < length) return out;

  // Per agent: frame -> position lookup.
  std::vector<std::map<int64_t, Vec2>> lookup(scene.agents.size());
  for (std::size_t a = 0; a < scene.agents.size(); ++a)
    for (const auto& f : scene.agents[a].frames) lookup[a][f.frame] = f.position;

  for (int start = 0; start + length <= static_cast<int>(grid.size()); start += stride) {
    std::vector<std::size_t> present;
    for (std::size_t a = 0; a < scene.agents.size(); ++a) {
      bool full = true;
      for (int k = 0; k < length && full; ++k) full = lookup[a].count(grid[start + k]) != 0;
      if (full) present.push_back(a);
    }
    if (present.size() < 2) continue;

    SegmentWindow w;
    w.scene_id = scene.scene_id;
    w.start_frame = grid[start];
    w.dt = 1.0 / scene.frame_rate_hz;
    w.arena = scene.arena;
    const int n = static_cast<int>(present.size());
    w.obs = TrackArray(n, t_obs);
    w.pred = TrackArray(n, t_pre);
    bool all_static = true;
    for (int i = 0; i < n; ++i) {
      const std::size_t a = present[i];
      w.agent_ids.push_back(scene.agents[a].agent_id);
      all_static = all_static && scene.agents[a].static_group.has_value();
      for (int k = 0; k < t_obs; ++k) w.obs.at(i, k) = lookup[a].at(grid[start + k]);
      for (int k = 0; k < t_pre; ++k) w.pred.at(i, k) = lookup[a].at(grid[start + t_obs + k]);
    }
    if (all_static) {
      int n_groups = 1;
      std::vector<int> g(n);
      for (int i = 0; i < n; ++i) {
        g[i] = *scene.agents[present[i]].static_group;
        n_groups = std::max(n_groups, g[i] + 1);
      }
      w.groups = GroupAssignment::from_membership(std::max(n_groups, 2), std::vector<std::vector<int>>(length, g));
    } else {
      w.groups = GroupAssignment::from_membership(1, std::vector<std::vector<int>>(length, std::vector<int>(n, 0)));
    }
    out.push_back(std::move(w));
  }
  return out;
}

GroupAssignment assign_groups_static(const SegmentWindow& window, int n_groups) {
  if (window.groups.membership.empty()) throw ContractViolation("assign_groups_static: window has no groups");
  const auto first = window.groups.membership.front();
  for (const auto& row : window.groups.membership)
    if (row != first) throw DataError("assign_groups_static: membership changes over the window");
  return GroupAssignment::from_membership(n_groups, window.groups.membership);
}

namespace {

Vec2 position_at(const SegmentWindow& w, int agent, int t) {
  return t < w.t_obs() ? w.obs.at(agent, t) : w.pred.at(agent, t - w.t_obs());
}

}  // namespace

GroupAssignment assign_groups_dynamic(const SegmentWindow& window, int n_groups, double min_speed) {
  if (n_groups < 1) throw ContractViolation("assign_groups_dynamic: n_groups must be >= 1");
  const int n = window.n_agents();
  const int steps = window.t_obs() + window.t_pre();
  // Speeds are in m/s regardless of whether the window was normalized.
  const double to_meters = window.normalized ? window.normalizer.scale : 1.0;
  const double sector = 2.0 * std::numbers::pi / n_groups;
  std::vector<std::vector<int>> membership(steps, std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i) {
    int previous = 0;
    for (int t = 0; t < steps; ++t) {
      Vec2 d;
      if (steps < 2) {
        d = {0.0, 0.0};
      } else if (t == 0) {
        const Vec2 a = position_at(window, i, 0), b = position_at(window, i, 1);
        d = {b.x - a.x, b.y - a.y};
      } else {
        const Vec2 a = position_at(window, i, t - 1), b = position_at(window, i, t);
        d = {b.x - a.x, b.y - a.y};
      }
      const double speed = std::hypot(d.x, d.y) * to_meters / window.dt;
      int g = previous;
      if (speed >= min_speed) {
        double angle = std::atan2(d.y, d.x);
        if (angle < 0.0) angle += 2.0 * std::numbers::pi;
        g = std::min(n_groups - 1, static_cast<int>(std::floor(angle / sector)));
      }
      membership[t][i] = g;
      previous = g;
    }
  }
  return GroupAssignment::from_membership(n_groups, std::move(membership));
}

std::pair<SegmentWindow, NormalizeTransform> normalize(const SegmentWindow& window) {
  if (window.n_agents() == 0 || window.t_obs() == 0) throw ContractViolation("normalize: empty window");
  if (window.normalized) throw ContractViolation("normalize: window already normalized");
  const int n = window.n_agents(), t_obs = window.t_obs();
  const double count = static_cast<double>(n) * t_obs;
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < t_obs; ++t) {
      sx += window.obs.at(i, t).x;
      sy += window.obs.at(i, t).y;
    }
  NormalizeTransform tf;
  tf.shift = {sx / count, sy / count};
  double ss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < t_obs; ++t) {
      const Vec2 p = window.obs.at(i, t);
      ss += (p.x - tf.shift.x) * (p.x - tf.shift.x) + (p.y - tf.shift.y) * (p.y - tf.shift.y);
    }
  tf.scale = std::max(1e-6, std::sqrt(ss / (2.0 * count)));
  SegmentWindow out = window;
  out.obs = tf.apply(window.obs);
  out.pred = tf.apply(window.pred);
  out.normalizer = tf;
  out.normalized = true;
  return {std::move(out), tf};
}

SegmentWindow denormalize(const SegmentWindow& window) {
  if (!window.normalized) return window;
  SegmentWindow out = window;
  out.obs = window.normalizer.invert(window.obs);
  out.pred = window.normalizer.invert(window.pred);
  out.normalizer = NormalizeTransform{};
  out.normalized = false;
  return out;
}

}  // namespace ihvrnn
