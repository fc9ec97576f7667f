#pragma once

// The single config document behind every command. Sections:
//   seed      master seed; default for train.seed and the generator seeds
//   out_dir   where commands write their outputs
//   data      DatasetSpec
//   model     ModelConfig
//   train     TrainConfig (without the model)
//   eval      T_pre, units, split, holdout_fraction, checkpoint
//   ablation  variants or settings, seeds
// Unknown keys anywhere are ConfigErrors naming the dotted path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihvrnn/dataset.hpp"
#include "ihvrnn/evaluation.hpp"
#include "ihvrnn/model.hpp"
#include "ihvrnn/train.hpp"

namespace ihvrnn {

inline constexpr const char* kToolName = "ihvrnn";
inline constexpr const char* kToolVersion = "0.1.0";

struct EvalSection {
  int T_pre = 10;
  std::string units = "auto";  // auto | raw | normalized (auto: normalized when windows carry an arena)
  std::string split = "held_out";  // held_out | all
  double holdout_fraction = 0.2;
  std::string checkpoint;  // default: <out_dir>/checkpoint.ckpt
};

struct AblationSection {
  std::vector<AblationSetting> settings;  // default: vrnn, hvrnn, ihvrnn
  std::vector<uint64_t> seeds{0, 1, 2};
};

struct RunConfig {
  uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  DatasetSpec data;
  ModelConfig model;
  bool model_sets_groups = false;  // model.n_groups_max given explicitly
  TrainConfig train;
  EvalSection eval;
  AblationSection ablation;
  nlohmann::json document;  // as read, with seed defaults filled in

  static RunConfig parse(const nlohmann::json& doc);
  // ParseError with a line number on malformed JSON.
  static RunConfig load(const std::filesystem::path& path);

  // FNV-1a 64 of the canonical (sorted-key, compact) document, hex.
  std::string hash() const;
  nlohmann::json manifest(const std::string& command) const;
};

// Mean-squared-error units for the given windows under eval.units.
MseUnits resolve_units(const std::string& units, const std::vector<SegmentWindow>& windows);

}  // namespace ihvrnn
