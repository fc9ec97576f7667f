#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihvrnn/errors.hpp"
#include "ihvrnn/model.hpp"
#include "ihvrnn/objective.hpp"
#include "ihvrnn/params.hpp"
#include "ihvrnn/rng.hpp"
#include "ihvrnn/scene.hpp"

namespace ihvrnn {

struct TrainConfig {
  ModelConfig model;
  int T_obs = 20;
  int T_pre = 10;
  int batch_size = 8;
  long steps = 200;
  double learning_rate = 1e-3;
  double grad_clip_norm = 5.0;
  uint64_t seed = 0;
  int log_every = 1;
  int checkpoint_every = 0;  // 0: final checkpoint only
  double beta_ramp_fraction = 0.2;
  int threads = 1;
  // Deterministic mode writes wall_ms = 0 so logs compare bitwise.
  bool deterministic = true;

  void validate(const std::string& path = "train") const;
  // `model` is serialized separately.
  nlohmann::json to_json() const;
  // Reads the train section; the model section is passed in.
  static TrainConfig from_json(const nlohmann::json& j, const ModelConfig& model, const std::string& path = "train");
};

// Disjoint named substreams. Each is Rng(seed).derive(name), so adding a new
// consumer never shifts the others.
struct Streams {
  Rng init;
  Rng batching;
  Rng reparam;
};
Streams seed_everything(uint64_t seed);

// Window indices of optimizer step `step` (0-based): consecutive slices of an
// endless sequence of per-epoch shuffles, so any step can be recomputed.
std::vector<int> batch_indices(const Rng& batching, std::size_t n_windows, int batch_size, long step);

// Reparameterization noise stream for one window slot of one step.
Rng window_noise(const Rng& reparam, long step, int slot);

struct WindowResult {
  LossBreakdown loss;
  ParamTree grads;  // empty when gradients were not requested
};

// Teacher-forced filtering over the observation window followed by a
// prediction rollout. Noise drawn from `noise`; zero noise when null.
WindowResult window_loss(const ParamTree& params, const ModelConfig& model, const SegmentWindow& window, double beta,
                         Rng* noise, bool want_grads);

// Mean loss (and gradient) over a list of windows; the reduction runs in
// window order regardless of thread count.
WindowResult batch_loss(const ParamTree& params, const ModelConfig& model, const std::vector<const SegmentWindow*>& windows,
                        double beta, const std::vector<Rng*>& noise, bool want_grads, int threads = 1);

double global_norm(const ParamTree& grads);
// Rescales in place so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(ParamTree& grads, double max_norm);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  ParamTree m;
  ParamTree v;

  void init(const ParamTree& params);
  void step(ParamTree& params, const ParamTree& grads);
};

struct TrainLogRecord {
  long step = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};
// One JSON line with exactly the log keys.
std::string format_log_record(const TrainLogRecord& r);

struct Checkpoint {
  ParamTree params;
  ModelConfig model;
  long step = 0;
  nlohmann::json meta;         // the extra_meta given at save time (train() adds "train")
  std::optional<Adam> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const ParamTree& params, const ModelConfig& model, long step,
                     const nlohmann::json& extra_meta = nlohmann::json::object(), const Adam* optimizer = nullptr);
// ShapeError when stored arrays disagree with the layout `model` builds;
// VariantMismatch when `expected` is given and differs from the stored variant.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Variant> expected = std::nullopt);

// Thrown when training hits a non-finite value. The last good parameters are
// on disk at checkpoint_path.
class TrainAbort : public NumericError {
 public:
  TrainAbort(const std::string& what, std::filesystem::path checkpoint) : NumericError(what), checkpoint_(std::move(checkpoint)) {}
  const std::filesystem::path& checkpoint_path() const { return checkpoint_; }

 private:
  std::filesystem::path checkpoint_;
};

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
};

struct TrainResult {
  TrainOutputs outputs;
  long steps_done = 0;
  std::vector<TrainLogRecord> records;
  ParamTree params;
};

// Trains on `windows`. With `resume`, parameters, optimizer state and the step
// counter continue from that checkpoint and the log is appended.
TrainResult train(const TrainConfig& config, const std::vector<SegmentWindow>& windows, const TrainOutputs& outputs,
                  const nlohmann::json& extra_meta = nlohmann::json::object(),
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace ihvrnn
