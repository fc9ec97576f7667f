#include "ihvrnn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include "ihvrnn/json_fields.hpp"
#include "ihvrnn/param_io.hpp"

namespace ihvrnn {

namespace {

constexpr const char* kCheckpointFormat = "ihvrnn-checkpoint";
constexpr const char* kAdamM = "adam.m:";
constexpr const char* kAdamV = "adam.v:";

}  // namespace

void TrainConfig::validate(const std::string& path) const {
  auto fail = [&](const std::string& key, const std::string& what) { throw ConfigError(path + "." + key, what); };
  if (T_obs < 1) fail("T_obs", "must be >= 1");
  if (T_pre < 1) fail("T_pre", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (steps < 0) fail("steps", "must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be positive");
  if (!(grad_clip_norm > 0.0)) fail("grad_clip_norm", "must be positive");
  if (log_every < 1) fail("log_every", "must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
  if (!(beta_ramp_fraction >= 0.0 && beta_ramp_fraction <= 1.0)) fail("beta_ramp_fraction", "must lie in [0, 1]");
  if (threads < 1) fail("threads", "must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"T_obs", T_obs},
          {"T_pre", T_pre},
          {"batch_size", batch_size},
          {"steps", steps},
          {"learning_rate", learning_rate},
          {"grad_clip_norm", grad_clip_norm},
          {"seed", seed},
          {"log_every", log_every},
          {"checkpoint_every", checkpoint_every},
          {"beta_ramp_fraction", beta_ramp_fraction},
          {"threads", threads},
          {"deterministic", deterministic}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const ModelConfig& model, const std::string& path) {
  TrainConfig c;
  c.model = model;
  JsonFields f(j, path);
  f.read("T_obs", c.T_obs);
  f.read("T_pre", c.T_pre);
  f.read("batch_size", c.batch_size);
  f.read("steps", c.steps);
  f.read("learning_rate", c.learning_rate);
  f.read("grad_clip_norm", c.grad_clip_norm);
  f.read("seed", c.seed);
  f.read("log_every", c.log_every);
  f.read("checkpoint_every", c.checkpoint_every);
  f.read("beta_ramp_fraction", c.beta_ramp_fraction);
  f.read("threads", c.threads);
  f.read("deterministic", c.deterministic);
  f.finish();
  c.validate(path);
  return c;
}

Streams seed_everything(uint64_t seed) {
  const Rng root(seed);
  return {root.derive("init"), root.derive("batching"), root.derive("reparam")};
}

std::vector<int> batch_indices(const Rng& batching, std::size_t n_windows, int batch_size, long step) {
  if (n_windows == 0) throw ContractViolation("batch_indices: no windows");
  const long n = static_cast<long>(n_windows);
  std::vector<int> out;
  out.reserve(batch_size);
  long cached_epoch = -1;
  std::vector<int> perm(n_windows);
  for (int j = 0; j < batch_size; ++j) {
    const long pos = step * batch_size + j;
    const long epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng r = batching.derive("epoch/" + std::to_string(epoch));
      for (long i = n - 1; i > 0; --i) std::swap(perm[i], perm[r.uniform_int(static_cast<int>(i + 1))]);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

Rng window_noise(const Rng& reparam, long step, int slot) {
  return reparam.derive("step/" + std::to_string(step) + "/slot/" + std::to_string(slot));
}

WindowResult window_loss(const ParamTree& params, const ModelConfig& model, const SegmentWindow& window, double beta,
                         Rng* noise, bool want_grads) {
  const int n = window.n_agents(), G = model.n_groups_max;
  if (window.groups.n_groups != G) {
    throw ContractViolation("window has " + std::to_string(window.groups.n_groups) + " groups, model expects " +
                            std::to_string(G));
  }
  if (window.groups.steps() < window.t_obs()) throw ContractViolation("window group assignment shorter than T_obs");
  ad::Tape tape;
  ParamBinding bind(tape, params);
  ModelState state = init_state(tape, model, window.groups.membership[0], window.normalized ? window.normalizer.scale : 1.0);
  std::vector<StepStats> stats;
  stats.reserve(window.t_obs());
  for (int t = 0; t < window.t_obs(); ++t) {
    const StepNoise eps = noise ? draw_step_noise(model, n, G, *noise) : zero_step_noise(model, n, G);
    FilterResult r = filter_step(bind, model, state, window.obs.frame(t), window.groups.membership[t], eps);
    state = std::move(r.state);
    stats.push_back(std::move(r.stats));
  }
  const std::vector<ad::Var> pred = rollout(bind, model, state, window.t_pre());
  const GenerationTerms gen = generation_loss(stats, n);
  const LossTerms terms{gen.recon_nll, gen.kl_s, gen.kl_z, prediction_loss(pred, window.pred)};
  const ad::Var total = total_loss(terms, beta, beta);
  WindowResult out;
  out.loss = breakdown(terms, beta, beta);
  if (!std::isfinite(out.loss.total)) throw NumericError("non-finite total loss");
  if (want_grads) {
    tape.backward(total);
    out.grads = bind.gradients();
  }
  return out;
}

WindowResult batch_loss(const ParamTree& params, const ModelConfig& model, const std::vector<const SegmentWindow*>& windows,
                        double beta, const std::vector<Rng*>& noise, bool want_grads, int threads) {
  if (windows.empty()) throw ContractViolation("batch_loss: empty batch");
  if (!noise.empty() && noise.size() != windows.size()) throw ContractViolation("batch_loss: one noise stream per window");
  const std::size_t B = windows.size();
  std::vector<WindowResult> slots(B);
  std::vector<std::exception_ptr> errors(B);
  auto run = [&](std::size_t k) {
    try {
      slots[k] = window_loss(params, model, *windows[k], beta, noise.empty() ? nullptr : noise[k], want_grads);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const int workers = std::min<int>(threads, static_cast<int>(B));
  if (workers <= 1) {
    for (std::size_t k = 0; k < B; ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k; (k = next.fetch_add(1)) < B;) run(k);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Reduce in slot order.
  double recon = 0.0, kl_s = 0.0, kl_z = 0.0, pred = 0.0;
  WindowResult out;
  if (want_grads) out.grads = slots[0].grads.zeros_like();
  for (std::size_t k = 0; k < B; ++k) {
    recon += slots[k].loss.recon_nll;
    kl_s += slots[k].loss.kl_s;
    kl_z += slots[k].loss.kl_z;
    pred += slots[k].loss.pred_l2;
    if (want_grads) {
      for (const auto& name : out.grads.names()) {
        auto dst = out.grads.values(name);
        const auto& src = slots[k].grads.at(name).values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(B);
  if (want_grads)
    for (const auto& name : out.grads.names())
      for (double& v : out.grads.values(name)) v *= inv;
  out.loss = total_loss(recon * inv, kl_s * inv, kl_z * inv, pred * inv, beta, beta);
  return out;
}

double global_norm(const ParamTree& grads) {
  double ss = 0.0;
  for (const auto& name : grads.names())
    for (double v : grads.at(name).values()) ss += v * v;
  return std::sqrt(ss);
}

double clip_global_norm(ParamTree& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (std::isfinite(norm) && norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& name : grads.names())
      for (double& v : grads.values(name)) v *= f;
  }
  return norm;
}

void Adam::init(const ParamTree& params) {
  t = 0;
  m = params.zeros_like();
  v = params.zeros_like();
}

void Adam::step(ParamTree& params, const ParamTree& grads) {
  if (!params.same_layout(grads) || !params.same_layout(m)) throw ShapeError("Adam: layout mismatch");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (const auto& name : params.names()) {
    auto p = params.values(name);
    auto mm = m.values(name);
    auto vv = v.values(name);
    const auto& g = grads.at(name).values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
      p[i] -= lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
    }
  }
}

std::string format_log_record(const TrainLogRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["recon_nll"] = r.loss.recon_nll;
  j["kl_s"] = r.loss.kl_s;
  j["kl_z"] = r.loss.kl_z;
  j["pred_l2"] = r.loss.pred_l2;
  j["total"] = r.loss.total;
  j["grad_norm"] = r.grad_norm;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

void save_checkpoint(const std::filesystem::path& path, const ParamTree& params, const ModelConfig& model, long step,
                     const nlohmann::json& extra_meta, const Adam* optimizer) {
  ParamTree all = params;
  nlohmann::json meta = {{"format", kCheckpointFormat},
                         {"version", 1},
                         {"variant", to_string(model.variant)},
                         {"model", model.to_json()},
                         {"step", step},
                         {"rng_algorithm", std::string(Rng::kAlgorithm)},
                         {"run", extra_meta}};
  if (optimizer) {
    for (const auto& name : params.names()) {
      all.add(kAdamM + name, optimizer->m.at(name));
      all.add(kAdamV + name, optimizer->v.at(name));
    }
    meta["adam"] = {{"t", optimizer->t},
                    {"lr", optimizer->lr},
                    {"beta1", optimizer->beta1},
                    {"beta2", optimizer->beta2},
                    {"eps", optimizer->eps}};
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_param_file(path, all, meta);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Variant> expected) {
  ParamFile file = read_param_file(path);
  Checkpoint ck;
  try {
    if (file.meta.at("format").get<std::string>() != kCheckpointFormat) throw CheckpointError(path.string() + ": not a checkpoint");
    ck.model = ModelConfig::from_json(file.meta.at("model"));
    ck.step = file.meta.at("step").get<long>();
    ck.meta = file.meta.value("run", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt manifest (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": corrupt model config (" + e.what() + ")");
  }
  if (expected && *expected != ck.model.variant) {
    throw VariantMismatch(path.string() + ": checkpoint holds variant " + to_string(ck.model.variant) + ", expected " +
                          to_string(*expected));
  }
  Rng layout_rng(0);
  const ParamTree layout = init_params(ck.model, layout_rng);
  for (const auto& name : layout.names()) {
    if (!file.params.contains(name)) throw ShapeError(path.string() + ": missing parameter " + name);
    const Matrix& got = file.params.at(name);
    const Matrix& want = layout.at(name);
    if (!got.same_shape(want)) {
      throw ShapeError(path.string() + ": parameter " + name + " has shape [" + std::to_string(got.rows()) + " x " +
                       std::to_string(got.cols()) + "], model expects [" + std::to_string(want.rows()) + " x " +
                       std::to_string(want.cols()) + "]");
    }
    ck.params.add(name, got);
  }
  if (file.meta.contains("adam")) {
    Adam adam;
    const auto& a = file.meta.at("adam");
    adam.t = a.at("t").get<long>();
    adam.lr = a.at("lr").get<double>();
    adam.beta1 = a.at("beta1").get<double>();
    adam.beta2 = a.at("beta2").get<double>();
    adam.eps = a.at("eps").get<double>();
    for (const auto& name : layout.names()) {
      if (!file.params.contains(kAdamM + name) || !file.params.contains(kAdamV + name)) {
        throw CheckpointError(path.string() + ": optimizer state incomplete for " + name);
      }
      adam.m.add(name, file.params.at(kAdamM + name));
      adam.v.add(name, file.params.at(kAdamV + name));
    }
    if (!adam.m.same_layout(ck.params) || !adam.v.same_layout(ck.params)) throw ShapeError(path.string() + ": optimizer state shape");
    ck.optimizer = std::move(adam);
  }
  return ck;
}

namespace {

bool finite_params(const ParamTree& p) {
  for (const auto& name : p.names())
    if (!p.at(name).all_finite()) return false;
  return true;
}

std::string describe_batch(long step, const std::vector<int>& idx) {
  std::string s = "step " + std::to_string(step + 1) + ", batch windows [";
  for (std::size_t k = 0; k < idx.size(); ++k) s += (k ? "," : "") + std::to_string(idx[k]);
  return s + "]";
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<SegmentWindow>& windows, const TrainOutputs& outputs,
                  const nlohmann::json& extra_meta, const std::optional<std::filesystem::path>& resume) {
  config.validate();
  config.model.validate();
  if (windows.empty()) throw DataError("train: dataset yields no windows");
  for (const auto& w : windows) {
    if (w.t_obs() != config.T_obs || w.t_pre() != config.T_pre) throw DataError("train: window length differs from T_obs/T_pre");
    if (w.groups.n_groups != config.model.n_groups_max) {
      throw ConfigError("model.n_groups_max", "dataset windows carry " + std::to_string(w.groups.n_groups) + " groups");
    }
  }
  nlohmann::json meta = extra_meta;
  meta["train"] = config.to_json();

  const Streams streams = seed_everything(config.seed);
  TrainResult result;
  result.outputs = outputs;
  Adam adam;
  long start = 0;
  if (resume) {
    Checkpoint ck = load_checkpoint(*resume, config.model.variant);
    if (!(ck.model == config.model)) throw CheckpointError(resume->string() + ": model config differs from the run config");
    result.params = std::move(ck.params);
    start = ck.step;
    if (ck.optimizer) {
      adam = std::move(*ck.optimizer);
    } else {
      adam.init(result.params);
    }
  } else {
    Rng init = streams.init;
    result.params = init_params(config.model, init);
    adam.init(result.params);
  }
  adam.lr = config.learning_rate;

  if (outputs.log.has_parent_path()) std::filesystem::create_directories(outputs.log.parent_path());
  std::ofstream log(outputs.log, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write log " + outputs.log.string());

  std::vector<const SegmentWindow*> batch(config.batch_size);
  std::vector<Rng> noise_rngs;
  std::vector<Rng*> noise_ptrs(config.batch_size);
  for (long step = start; step < config.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> idx = batch_indices(streams.batching, windows.size(), config.batch_size, step);
    noise_rngs.clear();
    for (int k = 0; k < config.batch_size; ++k) {
      batch[k] = &windows[idx[k]];
      noise_rngs.push_back(window_noise(streams.reparam, step, k));
    }
    for (int k = 0; k < config.batch_size; ++k) noise_ptrs[k] = &noise_rngs[k];
    const double beta = kl_beta(step, config.steps, config.beta_ramp_fraction);

    auto abort = [&](const std::string& what) {
      save_checkpoint(outputs.checkpoint, result.params, config.model, step, meta, &adam);
      throw TrainAbort(describe_batch(step, idx) + ": " + what + " (last good checkpoint: " + outputs.checkpoint.string() + ")",
                       outputs.checkpoint);
    };
    WindowResult r;
    try {
      r = batch_loss(result.params, config.model, batch, beta, noise_ptrs, true, config.threads);
    } catch (const NumericError& e) {
      abort(e.what());
    }
    const double norm = clip_global_norm(r.grads, config.grad_clip_norm);
    if (!std::isfinite(norm)) abort("non-finite gradient");
    ParamTree before = result.params;
    Adam adam_before = adam;
    adam.step(result.params, r.grads);
    if (!finite_params(result.params)) {
      result.params = std::move(before);
      adam = std::move(adam_before);
      abort("non-finite parameters after the optimizer update");
    }

    TrainLogRecord rec;
    rec.step = step + 1;
    rec.loss = r.loss;
    rec.grad_norm = norm;
    rec.wall_ms = config.deterministic
                      ? 0.0
                      : std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(rec);
    if ((step + 1) % config.log_every == 0) {
      log << format_log_record(rec) << '\n';
      log.flush();
    }
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && step + 1 < config.steps) {
      save_checkpoint(outputs.checkpoint, result.params, config.model, step + 1, meta, &adam);
    }
  }
  result.steps_done = std::max(start, config.steps);
  save_checkpoint(outputs.checkpoint, result.params, config.model, result.steps_done, meta, &adam);
  return result;
}

}  // namespace ihvrnn
