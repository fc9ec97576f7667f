#pragma once

// Trajectory plots as SVG documents. Observed segments are solid, predictions
// dashed, ground truth dotted. Group 0 is red, group 1 blue, further groups
// cycle through a fixed palette.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihvrnn/scene.hpp"

namespace ihvrnn {

struct PlotAgent {
  int64_t id = 0;
  int group = 0;
  std::vector<Vec2> observed;
  std::vector<Vec2> predicted;
  std::vector<Vec2> truth;  // drawn only alongside a prediction
};

struct PlotData {
  std::string title;
  std::vector<PlotAgent> agents;
  std::optional<BoundingBox> extent;  // defaults to the bounds of all points
  std::string metadata;               // emitted verbatim (escaped) in <metadata>
};

std::string group_color(int group);

// One <polyline> per non-empty segment per agent; byte-deterministic.
std::string render_svg(const PlotData& data, int width_px = 800);

// A whole scene drawn as observed tracks.
PlotData plot_scene(const Scene& scene);

// Prediction files written by evaluation: {"windows": [{...}, ...]}.
nlohmann::json prediction_window_json(const SegmentWindow& window, const TrackArray& predicted_m);
PlotData plot_prediction_window(const nlohmann::json& window);

}  // namespace ihvrnn
