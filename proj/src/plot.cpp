#include "ihvrnn/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ihvrnn/errors.hpp"

namespace ihvrnn {

namespace {

constexpr std::array<const char*, 8> kPalette = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // Avoid "-0.00".
  if (std::string(buf) == "-0.00") return "0.00";
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<Vec2> points_of(const nlohmann::json& arr, const std::string& what) {
  std::vector<Vec2> out;
  if (!arr.is_array()) throw DataError("prediction window: '" + what + "' must be an array");
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) throw DataError("prediction window: '" + what + "' points must be [x, y]");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

nlohmann::json track_json(const TrackArray& a, int agent) {
  nlohmann::json out = nlohmann::json::array();
  for (int t = 0; t < a.steps(); ++t) out.push_back({a.at(agent, t).x, a.at(agent, t).y});
  return out;
}

}  // namespace

std::string group_color(int group) {
  const int k = static_cast<int>(kPalette.size());
  return kPalette[((group % k) + k) % k];
}

std::string render_svg(const PlotData& data, int width_px) {
  BoundingBox box;
  if (data.extent) {
    box = *data.extent;
  } else {
    const double inf = std::numeric_limits<double>::infinity();
    box = {{inf, inf}, {-inf, -inf}};
    auto grow = [&](const std::vector<Vec2>& pts) {
      for (Vec2 p : pts) {
        box.min = {std::min(box.min.x, p.x), std::min(box.min.y, p.y)};
        box.max = {std::max(box.max.x, p.x), std::max(box.max.y, p.y)};
      }
    };
    for (const auto& a : data.agents) {
      grow(a.observed);
      if (!a.predicted.empty()) {
        grow(a.predicted);
        grow(a.truth);
      }
    }
    if (!std::isfinite(box.min.x)) box = {{0.0, 0.0}, {1.0, 1.0}};
  }
  const double w = std::max(box.width(), 1e-9), h = std::max(box.height(), 1e-9);
  const double margin = 20.0;
  const double sx = (width_px - 2 * margin) / w;
  const double height_px = h * sx + 2 * margin;
  auto px = [&](Vec2 p) { return num(margin + (p.x - box.min.x) * sx) + "," + num(height_px - margin - (p.y - box.min.y) * sx); };

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_px) + "\" height=\"" +
         num(height_px) + "\" viewBox=\"0 0 " + std::to_string(width_px) + " " + num(height_px) + "\">\n";
  if (!data.title.empty()) out += "  <title>" + escape(data.title) + "</title>\n";
  if (!data.metadata.empty()) out += "  <metadata>" + escape(data.metadata) + "</metadata>\n";
  out += "  <rect x=\"0\" y=\"0\" width=\"" + std::to_string(width_px) + "\" height=\"" + num(height_px) +
         "\" fill=\"white\"/>\n";
  auto line = [&](const std::vector<Vec2>& pts, const std::string& cls, const std::string& color, const char* dash,
                  int64_t id) {
    if (pts.empty()) return;
    out += "  <polyline class=\"" + cls + "\" data-agent=\"" + std::to_string(id) + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"";
    if (dash) out += std::string(" stroke-dasharray=\"") + dash + "\"";
    out += " points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k) out += (k ? " " : "") + px(pts[k]);
    out += "\"/>\n";
  };
  for (const auto& a : data.agents) {
    const std::string color = group_color(a.group);
    line(a.observed, "observed", color, nullptr, a.id);
    if (!a.predicted.empty()) {
      line(a.predicted, "predicted", color, "6,4", a.id);
      line(a.truth, "truth", color, "1.5,3", a.id);
    }
  }
  out += "</svg>\n";
  return out;
}

PlotData plot_scene(const Scene& scene) {
  PlotData d;
  d.title = scene.scene_id;
  d.extent = scene.arena;
  for (const auto& t : scene.agents) {
    PlotAgent a;
    a.id = t.agent_id;
    a.group = t.static_group.value_or(0);
    for (const auto& p : t.frames) a.observed.push_back(p.position);
    d.agents.push_back(std::move(a));
  }
  return d;
}

nlohmann::json prediction_window_json(const SegmentWindow& window, const TrackArray& predicted_m) {
  const TrackArray obs = window.normalized ? window.normalizer.invert(window.obs) : window.obs;
  const TrackArray gt = window.normalized ? window.normalizer.invert(window.pred) : window.pred;
  const std::vector<int>& groups = window.groups.membership[window.t_obs() - 1];
  nlohmann::json j;
  j["scene_id"] = window.scene_id;
  j["start_frame"] = window.start_frame;
  if (window.arena) {
    j["arena"] = {{"min", {window.arena->min.x, window.arena->min.y}}, {"max", {window.arena->max.x, window.arena->max.y}}};
  }
  j["agents"] = nlohmann::json::array();
  for (int i = 0; i < window.n_agents(); ++i) {
    nlohmann::json a;
    a["id"] = window.agent_ids[i];
    a["group"] = groups[i];
    a["observed"] = track_json(obs, i);
    a["predicted"] = track_json(predicted_m, i);
    nlohmann::json truth = track_json(gt, i);
    // Only the scored horizon.
    while (truth.size() > a["predicted"].size()) truth.erase(truth.size() - 1);
    a["truth"] = truth;
    j["agents"].push_back(a);
  }
  return j;
}

PlotData plot_prediction_window(const nlohmann::json& window) {
  PlotData d;
  if (!window.is_object() || !window.contains("agents")) throw DataError("prediction window: missing 'agents'");
  d.title = window.value("scene_id", std::string()) + " @" + std::to_string(window.value("start_frame", int64_t{0}));
  if (window.contains("arena")) {
    const auto& a = window["arena"];
    d.extent = BoundingBox{{a["min"][0].get<double>(), a["min"][1].get<double>()},
                           {a["max"][0].get<double>(), a["max"][1].get<double>()}};
  }
  for (const auto& j : window["agents"]) {
    PlotAgent a;
    a.id = j.value("id", int64_t{0});
    a.group = j.value("group", 0);
    a.observed = points_of(j.value("observed", nlohmann::json::array()), "observed");
    a.predicted = points_of(j.value("predicted", nlohmann::json::array()), "predicted");
    a.truth = points_of(j.value("truth", nlohmann::json::array()), "truth");
    d.agents.push_back(std::move(a));
  }
  return d;
}

}  // namespace ihvrnn
