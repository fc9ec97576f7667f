#pragma once

// Readers and writers for the two on-disk scene formats.
//
// Pedestrian TSV: one record per line, `frame_index agent_id x y`, any run of
// ASCII whitespace as separator, `#` starts a comment line.
//
// Soccer track file (JSON):
//   {"scene_id": "...", "frame_rate_hz": 10,
//    "teams": [[ids of team A], [ids of team B]],
//    "arena": {"min": [x, y], "max": [x, y]},      (optional)
//    "frames": [{"frame": 0, "positions": {"<id>": [x, y], ...}}, ...]}
// Frames must be consecutive and every rostered player present in every frame.
// A "ball" entry in positions is ignored.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ihvrnn/scene.hpp"

namespace ihvrnn {

inline constexpr double kPedestrianFrameRateHz = 2.5;
inline constexpr double kSoccerFrameRateHz = 10.0;

Scene parse_ped_tsv(std::string_view text, const std::string& source, const std::string& scene_id);
// One Scene per file; the scene id is the file stem.
std::vector<Scene> load_ped_tsv(const std::filesystem::path& path);
std::string format_ped_tsv(const Scene& scene);
void write_ped_tsv(const Scene& scene, const std::filesystem::path& path);

Scene parse_soccer_json(std::string_view text, const std::string& source);
Scene load_soccer_json(const std::filesystem::path& path);
// Requires static_group in {0, 1} on every track and a shared frame range.
std::string format_soccer_json(const Scene& scene);
void write_soccer_json(const Scene& scene, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace ihvrnn
