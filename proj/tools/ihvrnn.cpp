// Command-line front end: synth, train, eval, ablate, plot.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort,
// 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ihvrnn/dataset.hpp"
#include "ihvrnn/errors.hpp"
#include "ihvrnn/evaluation.hpp"
#include "ihvrnn/plot.hpp"
#include "ihvrnn/rng.hpp"
#include "ihvrnn/run_config.hpp"
#include "ihvrnn/scene_io.hpp"
#include "ihvrnn/synthetic.hpp"
#include "ihvrnn/train.hpp"

namespace fs = std::filesystem;
using namespace ihvrnn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out) throw DataError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

// Fills model.n_groups_max from the data when the config leaves it open.
void settle_groups(RunConfig& cfg, const std::vector<Scene>& scenes) {
  const int g = dataset_groups(cfg.data, scenes);
  if (!cfg.model_sets_groups) cfg.model.n_groups_max = g;
  cfg.model.validate();
  cfg.train.model = cfg.model;
  if (cfg.model.n_groups_max != g) {
    throw ConfigError("model.n_groups_max", "dataset yields " + std::to_string(g) + " groups, config says " +
                                                std::to_string(cfg.model.n_groups_max));
  }
}

struct Windows {
  Dataset data;
  std::vector<SegmentWindow> train;
  std::vector<SegmentWindow> held_out;
};

Windows load_windows(RunConfig& cfg, int t_obs, int t_pre) {
  Windows w;
  const auto scenes = load_scenes(cfg.data);
  settle_groups(cfg, scenes);
  w.data = build_dataset(scenes, cfg.data, t_obs, t_pre);
  if (w.data.windows.empty()) throw DataError("dataset yields no windows of length T_obs + T_pre");
  const Split split = split_holdout(static_cast<int>(w.data.windows.size()), cfg.eval.holdout_fraction);
  for (int i : split.train) w.train.push_back(w.data.windows[i]);
  for (int i : split.held_out) w.held_out.push_back(w.data.windows[i]);
  return w;
}

int cmd_synth(RunConfig cfg, const std::string& out_override) {
  const fs::path out = out_override.empty() ? cfg.out_dir : fs::path(out_override);
  if (cfg.data.kind != "team_game" && cfg.data.kind != "crossing_flows") {
    throw ConfigError("data.kind", "synth needs a generator kind (team_game | crossing_flows)");
  }
  ensure_dir(out);
  nlohmann::json files = nlohmann::json::array();
  for (int k = 0; k < cfg.data.n_scenes; ++k) {
    if (cfg.data.kind == "team_game") {
      TeamGameConfig c = cfg.data.team_game;
      c.seed = team_game_scene_seed(cfg.data.team_game.seed, k);
      TeamGame g = gen_team_game(c);
      const std::string scene_file = "scene_" + std::to_string(k) + ".json";
      const std::string truth_file = "truth_" + std::to_string(k) + ".json";
      write_soccer_json(g.scene, out / scene_file);
      write_json(out / truth_file, truth_to_json(g.truth, c));
      files.push_back(scene_file);
      files.push_back(truth_file);
    } else {
      CrossingFlowsConfig c = cfg.data.crossing_flows;
      c.seed = team_game_scene_seed(cfg.data.crossing_flows.seed, k);
      const std::string scene_file = "scene_" + std::to_string(k) + ".tsv";
      write_ped_tsv(gen_crossing_flows(c), out / scene_file);
      files.push_back(scene_file);
    }
  }
  nlohmann::json m = cfg.manifest("synth");
  m["generator"] = cfg.data.kind;
  m["generator_version"] = kToolVersion;
  m["rng_algorithm"] = Rng::kAlgorithm;
  m["files"] = files;
  write_json(out / "manifest.json", m);
  std::cout << "wrote " << files.size() << " files to " << out.string() << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& resume) {
  const Windows w = load_windows(cfg, cfg.train.T_obs, cfg.train.T_pre);
  ensure_dir(cfg.out_dir);
  if (w.train.empty()) throw DataError("no training windows after the held-out split");
  const TrainOutputs outs{cfg.out_dir / "checkpoint.ckpt", cfg.out_dir / "train_log.jsonl"};
  nlohmann::json meta = cfg.manifest("train");
  meta["n_train_windows"] = w.train.size();
  meta["n_held_out_windows"] = w.held_out.size();
  std::optional<fs::path> res;
  if (!resume.empty()) res = fs::path(resume);
  const TrainResult r = train(cfg.train, w.train, outs, meta, res);
  write_json(cfg.out_dir / "train_manifest.json", meta);
  if (!r.records.empty()) {
    const auto& last = r.records.back();
    std::cout << "step " << last.step << " total " << last.loss.total << " pred_l2 " << last.loss.pred_l2 << "\n";
  }
  std::cout << "checkpoint " << outs.checkpoint.string() << "\n";
  return 0;
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint, const std::string& units, int t_pre_override) {
  if (!units.empty()) cfg.eval.units = units;
  if (cfg.eval.units != "auto") parse_units(cfg.eval.units);
  if (t_pre_override > 0) cfg.eval.T_pre = t_pre_override;
  const fs::path ck_path = !checkpoint.empty()            ? fs::path(checkpoint)
                           : !cfg.eval.checkpoint.empty() ? fs::path(cfg.eval.checkpoint)
                                                          : cfg.out_dir / "checkpoint.ckpt";
  const Checkpoint ck = load_checkpoint(ck_path);
  int t_obs = cfg.train.T_obs, t_pre = cfg.train.T_pre;
  if (ck.meta.contains("train")) {
    t_obs = ck.meta["train"].value("T_obs", t_obs);
    t_pre = ck.meta["train"].value("T_pre", t_pre);
  }
  if (cfg.eval.T_pre > t_pre) {
    throw ConfigError("eval.T_pre", std::to_string(cfg.eval.T_pre) + " exceeds the dataset windows' " +
                                        std::to_string(t_pre) + " prediction steps");
  }
  cfg.model_sets_groups = true;
  cfg.model = ck.model;
  const Windows w = load_windows(cfg, t_obs, t_pre);
  const std::vector<SegmentWindow>& windows = cfg.eval.split == "all" ? w.data.windows : w.held_out;
  if (windows.empty()) throw DataError("no windows in the " + cfg.eval.split + " split");
  ensure_dir(cfg.out_dir);

  EvalProtocol p;
  p.T_pre = cfg.eval.T_pre;
  p.units = resolve_units(cfg.eval.units, windows);
  p.dataset_id = cfg.data.kind + ":" + cfg.eval.split;
  const MetricsReport report = evaluate(ck, windows, p);

  nlohmann::json out = {{"manifest", cfg.manifest("eval")}, {"checkpoint", ck_path.string()}, {"report", report.to_json()}};
  write_json(cfg.out_dir / "metrics.json", out);
  const auto pred = predict_windows_m(ck, windows, p.T_pre);
  nlohmann::json pj = {{"manifest", cfg.manifest("eval")}, {"windows", nlohmann::json::array()}};
  for (std::size_t k = 0; k < windows.size(); ++k) pj["windows"].push_back(prediction_window_json(windows[k], pred[k]));
  write_json(cfg.out_dir / "predictions.json", pj);
  std::cout << report.table();
  return 0;
}

int cmd_ablate(RunConfig cfg, const std::string& variants) {
  if (!variants.empty()) {
    std::vector<Variant> vs;
    std::stringstream ss(variants);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) vs.push_back(parse_variant(item, "--variants"));
    }
    cfg.ablation.settings = settings_for_variants(vs, cfg.model);
  }
  const auto scenes = load_scenes(cfg.data);
  settle_groups(cfg, scenes);
  ensure_dir(cfg.out_dir);
  AblationConfig a;
  a.train = cfg.train;
  a.data = cfg.data;
  a.settings = cfg.ablation.settings;
  a.seeds = cfg.ablation.seeds;
  a.holdout_fraction = cfg.eval.holdout_fraction;
  const Dataset probe = build_dataset(scenes, cfg.data, cfg.train.T_obs, cfg.train.T_pre);
  a.units = resolve_units(cfg.eval.units, probe.windows);
  a.out_dir = cfg.out_dir / "ablation";
  const AblationTable t = run_ablation(a);
  nlohmann::json out = {{"manifest", cfg.manifest("ablate")}, {"table", t.to_json()}};
  write_json(cfg.out_dir / "ablation.json", out);
  write_text_file(cfg.out_dir / "ablation.txt", t.table());
  std::cout << t.table();
  return 0;
}

int cmd_plot(const std::string& input, const std::string& output, int window) {
  const fs::path in(input);
  PlotData d;
  const std::string text = read_text_file(in);
  if (in.extension() == ".tsv" || in.extension() == ".txt") {
    d = plot_scene(parse_ped_tsv(text, in.string(), in.stem().string()));
  } else {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
      throw DataError(in.string() + ": not a JSON document");
    }
    if (j.is_object() && j.contains("windows")) {
      const auto& ws = j["windows"];
      if (window < 0 || window >= static_cast<int>(ws.size())) {
        throw ConfigError("--window", "index " + std::to_string(window) + " outside [0, " + std::to_string(ws.size()) + ")");
      }
      d = plot_prediction_window(ws[window]);
    } else {
      d = plot_scene(parse_soccer_json(text, in.string()));
    }
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  d.metadata = nlohmann::json({{"tool", kToolName}, {"version", kToolVersion}, {"input_hash", hash},
                               {"window", window}})
                   .dump();
  write_text_file(output, render_svg(d));
  std::cout << "wrote " << output << "\n";
  return 0;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const VariantMismatch& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// The config file is the first thing every command reads; a malformed
// document is a config error rather than a data error.
RunConfig load_config(const std::string& path) {
  try {
    return RunConfig::load(path);
  } catch (const ParseError& e) {
    throw ConfigError(path, e.what());
  } catch (const DataError& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical variational trajectory predictor"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config, out, resume, checkpoint, units, variants, input, output;
  int t_pre = 0, window = 0;

  auto* synth = app.add_subcommand("synth", "Generate synthetic scenes and ground-truth files");
  synth->add_option("-c,--config", config, "Config file")->required();
  synth->add_option("-o,--out", out, "Output directory (default: out_dir)");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("-c,--config", config, "Config file")->required();
  tr->add_option("--resume", resume, "Continue from this checkpoint");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("-c,--config", config, "Config file")->required();
  ev->add_option("--checkpoint", checkpoint, "Checkpoint (default: eval.checkpoint or out_dir/checkpoint.ckpt)");
  ev->add_option("--units", units, "MSE units")->check(CLI::IsMember({"auto", "raw", "normalized"}));
  ev->add_option("--T-pre", t_pre, "Prediction horizon (default: eval.T_pre)");

  auto* ab = app.add_subcommand("ablate", "Run an ablation table");
  ab->add_option("-c,--config", config, "Config file")->required();
  ab->add_option("--variants", variants, "Comma-separated variants, e.g. vrnn,hvrnn,ihvrnn");

  auto* pl = app.add_subcommand("plot", "Render a scene or prediction file as SVG");
  pl->add_option("-i,--input", input, "Scene (.json / .tsv) or predictions.json")->required();
  pl->add_option("-o,--out", output, "Output SVG path")->required();
  pl->add_option("--window", window, "Window index in a predictions file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*synth) return guarded([&] { return cmd_synth(load_config(config), out); });
  if (*tr) return guarded([&] { return cmd_train(load_config(config), resume); });
  if (*ev) return guarded([&] { return cmd_eval(load_config(config), checkpoint, units, t_pre); });
  if (*ab) return guarded([&] { return cmd_ablate(load_config(config), variants); });
  if (*pl) return guarded([&] { return cmd_plot(input, output, window); });
  return 1;
}
