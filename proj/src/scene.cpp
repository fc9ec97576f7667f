#include "ihvrnn/scene.hpp"

#include <cmath>
#include <set>

#include "ihvrnn/errors.hpp"

namespace ihvrnn {

void Scene::validate() const {
  if (!(frame_rate_hz > 0.0)) throw DataError(scene_id + ": frame rate must be positive");
  std::set<int64_t> ids;
  for (const auto& a : agents) {
    if (!ids.insert(a.agent_id).second) {
      throw DataError(scene_id + ": duplicate agent id " + std::to_string(a.agent_id));
    }
    if (a.frames.empty()) throw DataError(scene_id + ": agent " + std::to_string(a.agent_id) + " has no frames");
    for (std::size_t k = 0; k < a.frames.size(); ++k) {
      const Vec2 p = a.frames[k].position;
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw DataError(scene_id + ": non-finite position for agent " + std::to_string(a.agent_id));
      }
      if (k > 0 && a.frames[k].frame <= a.frames[k - 1].frame) {
        throw DataError(scene_id + ": frames of agent " + std::to_string(a.agent_id) + " not increasing");
      }
    }
  }
}

Matrix TrackArray::frame(int step) const {
  Matrix m(n_, 2);
  for (int i = 0; i < n_; ++i) {
    const Vec2 p = at(i, step);
    m(i, 0) = p.x;
    m(i, 1) = p.y;
  }
  return m;
}

void TrackArray::set_frame(int step, const Matrix& positions) {
  if (positions.rows() != n_ || positions.cols() != 2) throw ShapeError("set_frame: expected [n x 2]");
  for (int i = 0; i < n_; ++i) at(i, step) = {positions(i, 0), positions(i, 1)};
}

bool TrackArray::all_finite() const {
  for (const Vec2& p : data_)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  return true;
}

TrackArray NormalizeTransform::apply(const TrackArray& a) const {
  TrackArray out(a.agents(), a.steps());
  for (int i = 0; i < a.agents(); ++i)
    for (int t = 0; t < a.steps(); ++t) out.at(i, t) = apply(a.at(i, t));
  return out;
}

TrackArray NormalizeTransform::invert(const TrackArray& a) const {
  TrackArray out(a.agents(), a.steps());
  for (int i = 0; i < a.agents(); ++i)
    for (int t = 0; t < a.steps(); ++t) out.at(i, t) = invert(a.at(i, t));
  return out;
}

GroupAssignment GroupAssignment::from_membership(int n_groups, std::vector<std::vector<int>> membership) {
  if (n_groups < 1) throw ContractViolation("n_groups must be >= 1");
  GroupAssignment g;
  g.n_groups = n_groups;
  g.active.assign(membership.size(), std::vector<uint8_t>(n_groups, 0));
  for (std::size_t t = 0; t < membership.size(); ++t) {
    for (int grp : membership[t]) {
      if (grp < 0 || grp >= n_groups) throw ContractViolation("group index out of range");
      g.active[t][grp] = 1;
    }
  }
  g.membership = std::move(membership);
  return g;
}

std::vector<std::vector<int>> GroupAssignment::members(int t) const {
  std::vector<std::vector<int>> out(n_groups);
  const auto& row = membership.at(t);
  for (std::size_t i = 0; i < row.size(); ++i) out[row[i]].push_back(static_cast<int>(i));
  return out;
}

}  // namespace ihvrnn
