#pragma once

#include <utility>
#include <vector>

#include "ihvrnn/scene.hpp"

namespace ihvrnn {

// Sliding (observation, prediction) windows over the scene's frame grid (the
// sorted distinct frame indices). An agent joins a window only if it has a
// record at every one of its T_obs + T_pre frames; a window needs >= 2 agents.
// Positions stay in meters. Groups come from static_group when every track in
// the window has one, otherwise everyone is in group 0.
std::vector<SegmentWindow> window_segments(const Scene& scene, int t_obs, int t_pre, int stride);

// Static team membership (N_g = 2 when static groups are present).
GroupAssignment assign_groups_static(const SegmentWindow& window, int n_groups = 2);

// Heading-sector membership: the heading at t is x_t - x_{t-1} (forward
// difference at t = 0); the group is the index of the 2*pi / n_groups sector
// containing it (quadrants for n_groups = 4). Agents slower than min_speed
// (m/s) keep their previous group, and start in group 0.
GroupAssignment assign_groups_dynamic(const SegmentWindow& window, int n_groups, double min_speed);

// Shift = mean of observed positions; scale = max(1e-6, std of all observed
// coordinates). Applied to obs and pred alike.
std::pair<SegmentWindow, NormalizeTransform> normalize(const SegmentWindow& window);
SegmentWindow denormalize(const SegmentWindow& window);

}  // namespace ihvrnn
