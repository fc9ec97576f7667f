#include "ihvrnn/scene_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ihvrnn/errors.hpp"

namespace ihvrnn {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_real(std::string_view s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

// Integers may be written as integral reals ("780.0"), as some public dumps do.
bool parse_integer(std::string_view s, int64_t& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec == std::errc() && ptr == end) return true;
  double d = 0.0;
  if (!parse_real(s, d) || d != std::floor(d) || std::abs(d) > 9.0e15) return false;
  out = static_cast<int64_t>(d);
  return true;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; };
  while (i < line.size()) {
    while (i < line.size() && is_ws(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_ws(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("short write to " + path.string());
}

Scene parse_ped_tsv(std::string_view text, const std::string& source, const std::string& scene_id) {
  std::map<int64_t, std::map<int64_t, Vec2>> tracks;  // agent -> frame -> position
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fields = split_ws(line);
    if (fields.empty() || fields[0].front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    if (fields.size() != 4) {
      throw ParseError(source, line_no, "expected 4 fields, found " + std::to_string(fields.size()));
    }
    int64_t frame = 0, agent = 0;
    Vec2 p;
    if (!parse_integer(fields[0], frame)) throw ParseError(source, line_no, "bad frame index '" + std::string(fields[0]) + "'");
    if (!parse_integer(fields[1], agent)) throw ParseError(source, line_no, "bad agent id '" + std::string(fields[1]) + "'");
    if (!parse_real(fields[2], p.x)) throw ParseError(source, line_no, "bad x '" + std::string(fields[2]) + "'");
    if (!parse_real(fields[3], p.y)) throw ParseError(source, line_no, "bad y '" + std::string(fields[3]) + "'");
    if (!tracks[agent].emplace(frame, p).second) {
      throw DataError(source + ":" + std::to_string(line_no) + ": duplicate record for frame " +
                      std::to_string(frame) + ", agent " + std::to_string(agent));
    }
    if (nl == text.size()) break;
  }
  if (tracks.empty()) throw DataError(source + ": no tracks");

  Scene scene;
  scene.scene_id = scene_id;
  scene.frame_rate_hz = kPedestrianFrameRateHz;
  for (const auto& [id, frames] : tracks) {
    AgentTrack track;
    track.agent_id = id;
    for (const auto& [f, p] : frames) track.frames.push_back({f, p});
    scene.agents.push_back(std::move(track));
  }
  scene.validate();
  return scene;
}

std::vector<Scene> load_ped_tsv(const std::filesystem::path& path) {
  return {parse_ped_tsv(read_text_file(path), path.string(), path.stem().string())};
}

std::string format_ped_tsv(const Scene& scene) {
  std::vector<std::tuple<int64_t, int64_t, Vec2>> rows;
  for (const auto& a : scene.agents)
    for (const auto& f : a.frames) rows.emplace_back(f.frame, a.agent_id, f.position);
  std::sort(rows.begin(), rows.end(), [](const auto& l, const auto& r) {
    return std::tie(std::get<0>(l), std::get<1>(l)) < std::tie(std::get<0>(r), std::get<1>(r));
  });
  std::string out;
  for (const auto& [frame, id, p] : rows) {
    out += std::to_string(frame) + '\t' + std::to_string(id) + '\t' + fmt17(p.x) + '\t' + fmt17(p.y) + '\n';
  }
  return out;
}

void write_ped_tsv(const Scene& scene, const std::filesystem::path& path) {
  write_text_file(path, format_ped_tsv(scene));
}

Scene parse_soccer_json(std::string_view text, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line number
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ParseError(source, line, e.what());
  }
  Scene scene;
  try {
    scene.scene_id = doc.at("scene_id").get<std::string>();
    scene.frame_rate_hz = doc.at("frame_rate_hz").get<double>();
    const auto& teams = doc.at("teams");
    if (!teams.is_array() || teams.size() != 2) throw DataError(source + ": 'teams' must hold exactly 2 rosters");
    std::map<int64_t, int> team_of;
    std::vector<std::vector<int64_t>> rosters(2);
    for (int g = 0; g < 2; ++g) {
      for (const auto& id : teams[g]) {
        const int64_t aid = id.get<int64_t>();
        if (!team_of.emplace(aid, g).second) throw DataError(source + ": agent " + std::to_string(aid) + " in two rosters");
        rosters[g].push_back(aid);
      }
      if (rosters[g].empty()) throw DataError(source + ": empty roster for team " + std::to_string(g));
    }
    if (doc.contains("arena")) {
      const auto& a = doc.at("arena");
      scene.arena = BoundingBox{{a.at("min").at(0).get<double>(), a.at("min").at(1).get<double>()},
                                {a.at("max").at(0).get<double>(), a.at("max").at(1).get<double>()}};
    }
    std::map<int64_t, AgentTrack> tracks;
    for (const auto& [aid, g] : team_of) {
      tracks[aid].agent_id = aid;
      tracks[aid].static_group = g;
    }
    const auto& frames = doc.at("frames");
    if (!frames.is_array() || frames.empty()) throw DataError(source + ": no frames");
    bool first = true;
    int64_t prev = 0;
    for (const auto& fr : frames) {
      const int64_t f = fr.at("frame").get<int64_t>();
      if (!first && f != prev + 1) {
        throw DataError(source + ": missing frame between " + std::to_string(prev) + " and " + std::to_string(f));
      }
      first = false;
      prev = f;
      std::vector<int> counts(2, 0);
      for (const auto& [key, xy] : fr.at("positions").items()) {
        if (key == "ball") continue;
        int64_t aid = 0;
        if (!parse_integer(key, aid)) throw DataError(source + ": bad agent key '" + key + "' in frame " + std::to_string(f));
        auto it = team_of.find(aid);
        if (it == team_of.end()) throw DataError(source + ": agent " + key + " not on a roster (frame " + std::to_string(f) + ")");
        const Vec2 p{xy.at(0).get<double>(), xy.at(1).get<double>()};
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError(source + ": non-finite position in frame " + std::to_string(f));
        tracks[aid].frames.push_back({f, p});
        ++counts[it->second];
      }
      for (int g = 0; g < 2; ++g) {
        if (counts[g] != static_cast<int>(rosters[g].size())) {
          throw DataError(source + ": team " + std::to_string(g) + " has " + std::to_string(counts[g]) +
                          " players in frame " + std::to_string(f) + ", roster size is " +
                          std::to_string(rosters[g].size()));
        }
      }
    }
    // Roster order: team A then team B, as listed.
    for (int g = 0; g < 2; ++g)
      for (int64_t aid : rosters[g]) scene.agents.push_back(std::move(tracks[aid]));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": " + e.what());
  }
  scene.validate();
  return scene;
}

Scene load_soccer_json(const std::filesystem::path& path) {
  return parse_soccer_json(read_text_file(path), path.string());
}

std::string format_soccer_json(const Scene& scene) {
  std::vector<std::vector<int64_t>> rosters(2);
  std::map<int64_t, std::map<int64_t, Vec2>> by_frame;
  for (const auto& a : scene.agents) {
    if (!a.static_group || *a.static_group < 0 || *a.static_group > 1) {
      throw DataError(scene.scene_id + ": agent " + std::to_string(a.agent_id) + " lacks a team in {0, 1}");
    }
    rosters[*a.static_group].push_back(a.agent_id);
    for (const auto& f : a.frames) by_frame[f.frame][a.agent_id] = f.position;
  }
  std::string out = "{\n  \"scene_id\": " + nlohmann::json(scene.scene_id).dump() +
                    ",\n  \"frame_rate_hz\": " + fmt17(scene.frame_rate_hz) + ",\n  \"teams\": [";
  for (int g = 0; g < 2; ++g) {
    out += g ? ", [" : "[";
    for (std::size_t k = 0; k < rosters[g].size(); ++k) out += (k ? ", " : "") + std::to_string(rosters[g][k]);
    out += "]";
  }
  out += "],\n";
  if (scene.arena) {
    out += "  \"arena\": {\"min\": [" + fmt17(scene.arena->min.x) + ", " + fmt17(scene.arena->min.y) +
           "], \"max\": [" + fmt17(scene.arena->max.x) + ", " + fmt17(scene.arena->max.y) + "]},\n";
  }
  out += "  \"frames\": [\n";
  bool first_frame = true;
  for (const auto& [f, positions] : by_frame) {
    out += first_frame ? "" : ",\n";
    first_frame = false;
    out += "    {\"frame\": " + std::to_string(f) + ", \"positions\": {";
    bool first = true;
    for (int g = 0; g < 2; ++g) {
      for (int64_t aid : rosters[g]) {
        auto it = positions.find(aid);
        if (it == positions.end()) continue;
        out += first ? "" : ", ";
        first = false;
        out += "\"" + std::to_string(aid) + "\": [" + fmt17(it->second.x) + ", " + fmt17(it->second.y) + "]";
      }
    }
    out += "}}";
  }
  out += "\n  ]\n}\n";
  return out;
}

void write_soccer_json(const Scene& scene, const std::filesystem::path& path) {
  write_text_file(path, format_soccer_json(scene));
}

}  // namespace ihvrnn
