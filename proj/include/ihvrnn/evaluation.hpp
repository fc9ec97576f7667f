#pragma once

// Single-output evaluation: one deterministic trajectory per agent, scored
// against ground truth in original units.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihvrnn/dataset.hpp"
#include "ihvrnn/model.hpp"
#include "ihvrnn/scene.hpp"
#include "ihvrnn/train.hpp"

namespace ihvrnn {

// Mean Euclidean distance over agents and steps. ShapeError on mismatch.
double ade(const TrackArray& pred, const TrackArray& gt);
// Mean Euclidean distance at the last step.
double fde(const TrackArray& pred, const TrackArray& gt);
// Mean squared Euclidean distance over agents and steps.
double mse(const TrackArray& pred, const TrackArray& gt);

// Filters the observed steps with means at every sampling site, then rolls
// out t_pre steps. Result is in the window's own (possibly normalized) units.
TrackArray predict_window(const ParamTree& params, const ModelConfig& model, const SegmentWindow& window, int t_pre);

enum class MseUnits {
  raw,         // squared meters
  normalized,  // positions divided by the arena extent first
};
std::string to_string(MseUnits u);
MseUnits parse_units(const std::string& name, const std::string& path = "eval.units");

struct EvalProtocol {
  int T_pre = 10;
  MseUnits units = MseUnits::normalized;
  std::string dataset_id;
  std::optional<Variant> expected_variant;
  int threads = 1;
};

struct MetricsReport {
  std::string dataset_id;
  std::string variant;
  int T_pre = 0;
  double ade = 0.0;  // meters
  double fde = 0.0;  // meters
  double mse = 0.0;  // squared meters, or unit-arena units
  std::string mse_units = "raw";
  std::optional<Vec2> arena_extent;  // normalization constants when normalized
  int n_windows = 0;
  std::vector<uint64_t> seeds;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  std::string table() const;
};

// Windows must carry at least protocol.T_pre prediction steps; only the first
// T_pre are scored. Aggregation runs in window order.
MetricsReport evaluate(const Checkpoint& checkpoint, const std::vector<SegmentWindow>& windows, const EvalProtocol& protocol);

// Prediction in meters for every window (same order), for plotting.
std::vector<TrackArray> predict_windows_m(const Checkpoint& checkpoint, const std::vector<SegmentWindow>& windows, int t_pre);

// ---- ablation ----

// One row of the comparison: a variant plus the social-module switches.
struct AblationSetting {
  std::string name;
  Variant variant = Variant::ihvrnn;
  bool use_gat = true;
  bool use_rm = true;

  nlohmann::json to_json() const;
  static AblationSetting from_json(const nlohmann::json& j, const std::string& path);
};

// Settings named after the variants with the base social switches.
std::vector<AblationSetting> settings_for_variants(const std::vector<Variant>& variants, const ModelConfig& base);

struct AblationConfig {
  TrainConfig train;  // base; model.variant / switches are overridden per row
  DatasetSpec data;
  std::vector<AblationSetting> settings;
  std::vector<uint64_t> seeds{0, 1, 2};
  double holdout_fraction = 0.2;
  MseUnits units = MseUnits::normalized;
  std::filesystem::path out_dir;  // cells are stored and reused here when non-empty
};

struct AblationCell {
  std::string setting;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;  // when failed
  MetricsReport report;
  double train_seconds = 0.0;

  nlohmann::json to_json() const;
  static AblationCell from_json(const nlohmann::json& j);
};

struct CellStats {
  int n_ok = 0;
  int n_failed = 0;
  double mse_mean = 0.0, mse_std = 0.0;
  double ade_mean = 0.0, ade_std = 0.0;
  double fde_mean = 0.0, fde_std = 0.0;
};

struct OrderingVerdict {
  std::string better;
  std::string worse;
  bool holds = false;  // mean mse of `better` strictly below `worse`
};

struct AblationTable {
  std::vector<std::string> rows;
  std::vector<uint64_t> seeds;
  std::vector<AblationCell> cells;  // row-major: rows x seeds
  std::vector<CellStats> stats;     // per row; std is the sample std over seeds
  std::vector<OrderingVerdict> verdicts;  // every pair (a before b): does b beat a? List rows worst to best
  std::string mse_units;

  const CellStats& row(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

// Trains every (setting, seed) pair on the same training windows and batch
// order for that seed, evaluates on the shared held-out windows and
// aggregates. A training abort marks the cell failed; the run continues.
AblationTable run_ablation(const AblationConfig& config);

// Aggregates already-computed cells (row-major, rows x seeds).
AblationTable aggregate_cells(const std::vector<std::string>& rows, const std::vector<uint64_t>& seeds,
                              std::vector<AblationCell> cells, const std::string& mse_units);

}  // namespace ihvrnn
