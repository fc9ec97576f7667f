#include "ihvrnn/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ihvrnn/errors.hpp"
#include "ihvrnn/json_fields.hpp"
#include "ihvrnn/windows.hpp"

namespace ihvrnn {

namespace {

void check_shapes(const TrackArray& pred, const TrackArray& gt, const char* what) {
  if (pred.agents() != gt.agents() || pred.steps() != gt.steps()) {
    throw ShapeError(std::string(what) + ": prediction [" + std::to_string(pred.agents()) + " x " +
                     std::to_string(pred.steps()) + "] vs ground truth [" + std::to_string(gt.agents()) + " x " +
                     std::to_string(gt.steps()) + "]");
  }
  if (pred.steps() < 1 || pred.agents() < 1) throw ShapeError(std::string(what) + ": empty trajectories");
}

double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }
double dist2(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

TrackArray first_steps(const TrackArray& a, int t) {
  TrackArray out(a.agents(), t);
  for (int i = 0; i < a.agents(); ++i)
    for (int s = 0; s < t; ++s) out.at(i, s) = a.at(i, s);
  return out;
}

TrackArray scale_axes(const TrackArray& a, Vec2 extent) {
  TrackArray out(a.agents(), a.steps());
  for (int i = 0; i < a.agents(); ++i)
    for (int s = 0; s < a.steps(); ++s) out.at(i, s) = {a.at(i, s).x / extent.x, a.at(i, s).y / extent.y};
  return out;
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

double ade(const TrackArray& pred, const TrackArray& gt) {
  check_shapes(pred, gt, "ade");
  double sum = 0.0;
  for (int i = 0; i < pred.agents(); ++i)
    for (int t = 0; t < pred.steps(); ++t) sum += dist(pred.at(i, t), gt.at(i, t));
  return sum / (static_cast<double>(pred.agents()) * pred.steps());
}

double fde(const TrackArray& pred, const TrackArray& gt) {
  check_shapes(pred, gt, "fde");
  const int last = pred.steps() - 1;
  double sum = 0.0;
  for (int i = 0; i < pred.agents(); ++i) sum += dist(pred.at(i, last), gt.at(i, last));
  return sum / pred.agents();
}

double mse(const TrackArray& pred, const TrackArray& gt) {
  check_shapes(pred, gt, "mse");
  double sum = 0.0;
  for (int i = 0; i < pred.agents(); ++i)
    for (int t = 0; t < pred.steps(); ++t) sum += dist2(pred.at(i, t), gt.at(i, t));
  return sum / (static_cast<double>(pred.agents()) * pred.steps());
}

TrackArray predict_window(const ParamTree& params, const ModelConfig& model, const SegmentWindow& window, int t_pre) {
  const int n = window.n_agents(), G = model.n_groups_max;
  if (window.groups.n_groups != G) {
    throw ConfigError("model.n_groups_max", "window carries " + std::to_string(window.groups.n_groups) +
                                                " groups, model expects " + std::to_string(G));
  }
  ad::Tape tape;
  ParamBinding bind(tape, params);
  ModelState state = init_state(tape, model, window.groups.membership[0], window.normalized ? window.normalizer.scale : 1.0);
  for (int t = 0; t < window.t_obs(); ++t) {
    FilterResult r = filter_step(bind, model, state, window.obs.frame(t), window.groups.membership[t],
                                 zero_step_noise(model, n, G));
    state = std::move(r.state);
  }
  return rollout_positions(rollout(bind, model, state, t_pre));
}

std::string to_string(MseUnits u) { return u == MseUnits::raw ? "raw" : "normalized"; }

MseUnits parse_units(const std::string& name, const std::string& path) {
  if (name == "raw") return MseUnits::raw;
  if (name == "normalized") return MseUnits::normalized;
  throw ConfigError(path, "unknown units '" + name + "' (raw | normalized)");
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = {{"dataset_id", dataset_id}, {"variant", variant}, {"T_pre", T_pre},
                      {"ade", ade},               {"fde", fde},         {"mse", mse},
                      {"mse_units", mse_units},   {"n_windows", n_windows}, {"seeds", seeds}};
  j["arena_extent"] = arena_extent ? nlohmann::json::array({arena_extent->x, arena_extent->y}) : nlohmann::json();
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  JsonFields f(j, "report");
  f.read("dataset_id", r.dataset_id);
  f.read("variant", r.variant);
  f.read("T_pre", r.T_pre);
  f.read("ade", r.ade);
  f.read("fde", r.fde);
  f.read("mse", r.mse);
  f.read("mse_units", r.mse_units);
  f.read("n_windows", r.n_windows);
  f.read("seeds", r.seeds);
  if (const auto* a = f.child("arena_extent"); a && a->is_array() && a->size() == 2) {
    r.arena_extent = Vec2{(*a)[0].get<double>(), (*a)[1].get<double>()};
  }
  f.finish();
  return r;
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(24) << "dataset" << std::setw(10) << "variant" << std::right << std::setw(6) << "T_pre"
     << std::setw(12) << "ADE" << std::setw(12) << "FDE" << std::setw(14) << "MSE" << std::setw(10) << "windows" << '\n';
  os << std::left << std::setw(24) << (dataset_id.empty() ? "-" : dataset_id) << std::setw(10) << variant << std::right
     << std::setw(6) << T_pre << std::setw(12) << fmt(ade) << std::setw(12) << fmt(fde) << std::setw(14) << fmt(mse)
     << std::setw(10) << n_windows << '\n';
  os << "mse units: " << mse_units;
  if (arena_extent) os << " (x / " << fmt(arena_extent->x) << ", y / " << fmt(arena_extent->y) << ")";
  os << '\n';
  return os.str();
}

std::vector<TrackArray> predict_windows_m(const Checkpoint& checkpoint, const std::vector<SegmentWindow>& windows, int t_pre) {
  std::vector<TrackArray> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    TrackArray p = predict_window(checkpoint.params, checkpoint.model, w, t_pre);
    out.push_back(w.normalized ? w.normalizer.invert(p) : p);
  }
  return out;
}

MetricsReport evaluate(const Checkpoint& checkpoint, const std::vector<SegmentWindow>& windows, const EvalProtocol& protocol) {
  if (protocol.expected_variant && *protocol.expected_variant != checkpoint.model.variant) {
    throw VariantMismatch("checkpoint holds variant " + to_string(checkpoint.model.variant) + ", expected " +
                          to_string(*protocol.expected_variant));
  }
  if (protocol.T_pre < 1) throw ConfigError("eval.T_pre", "must be at least 1");
  if (windows.empty()) throw DataError("evaluate: no windows");
  int t_obs = -1;
  if (checkpoint.meta.contains("train") && checkpoint.meta["train"].contains("T_obs"))
    t_obs = checkpoint.meta["train"]["T_obs"].get<int>();
  std::optional<Vec2> extent;
  for (const auto& w : windows) {
    if (w.t_pre() < protocol.T_pre) {
      throw ConfigError("eval.T_pre", std::to_string(protocol.T_pre) + " exceeds the windows' " +
                                          std::to_string(w.t_pre()) + " prediction steps");
    }
    if (t_obs >= 0 && w.t_obs() != t_obs) {
      throw ConfigError("train.T_obs", "checkpoint was trained with T_obs " + std::to_string(t_obs) + ", windows have " +
                                           std::to_string(w.t_obs()));
    }
    if (w.groups.n_groups != checkpoint.model.n_groups_max) {
      throw ConfigError("model.n_groups_max", "windows carry " + std::to_string(w.groups.n_groups) +
                                                  " groups, checkpoint expects " +
                                                  std::to_string(checkpoint.model.n_groups_max));
    }
    if (protocol.units == MseUnits::normalized) {
      if (!w.arena) throw ConfigError("eval.units", "normalized MSE needs an arena on every window");
      const Vec2 e{w.arena->width(), w.arena->height()};
      if (extent && !(*extent == e)) throw DataError("evaluate: windows differ in arena extent");
      extent = e;
    }
  }

  const auto pred = predict_windows_m(checkpoint, windows, protocol.T_pre);
  double sum_ade = 0.0, sum_fde = 0.0, sum_mse = 0.0;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const SegmentWindow& w = windows[k];
    const TrackArray gt = first_steps(w.normalized ? w.normalizer.invert(w.pred) : w.pred, protocol.T_pre);
    if (!pred[k].all_finite()) throw NumericError("evaluate: non-finite prediction in window " + std::to_string(k));
    sum_ade += ade(pred[k], gt);
    sum_fde += fde(pred[k], gt);
    sum_mse += extent ? mse(scale_axes(pred[k], *extent), scale_axes(gt, *extent)) : mse(pred[k], gt);
  }
  const double nw = static_cast<double>(windows.size());
  MetricsReport r;
  r.dataset_id = protocol.dataset_id;
  r.variant = to_string(checkpoint.model.variant);
  r.T_pre = protocol.T_pre;
  r.ade = sum_ade / nw;
  r.fde = sum_fde / nw;
  r.mse = sum_mse / nw;
  r.mse_units = to_string(protocol.units);
  r.arena_extent = extent;
  r.n_windows = static_cast<int>(windows.size());
  if (checkpoint.meta.contains("train") && checkpoint.meta["train"].contains("seed"))
    r.seeds.push_back(checkpoint.meta["train"]["seed"].get<uint64_t>());
  return r;
}

// ---- ablation ----

nlohmann::json AblationSetting::to_json() const {
  return {{"name", name}, {"variant", to_string(variant)}, {"use_gat", use_gat}, {"use_rm", use_rm}};
}

AblationSetting AblationSetting::from_json(const nlohmann::json& j, const std::string& path) {
  AblationSetting s;
  JsonFields f(j, path);
  std::string v = to_string(s.variant);
  f.read("variant", v);
  s.variant = parse_variant(v, f.path_of("variant"));
  s.name = v;
  f.read("name", s.name);
  f.read("use_gat", s.use_gat);
  f.read("use_rm", s.use_rm);
  f.finish();
  if (s.name.empty()) throw ConfigError(f.path_of("name"), "must be non-empty");
  return s;
}

std::vector<AblationSetting> settings_for_variants(const std::vector<Variant>& variants, const ModelConfig& base) {
  std::vector<AblationSetting> out;
  for (Variant v : variants) out.push_back({to_string(v), v, base.use_gat, base.use_rm});
  return out;
}

nlohmann::json AblationCell::to_json() const {
  return {{"setting", setting}, {"seed", seed},     {"ok", ok},
          {"error", error},     {"report", report.to_json()}, {"train_seconds", train_seconds}};
}

AblationCell AblationCell::from_json(const nlohmann::json& j) {
  AblationCell c;
  JsonFields f(j, "cell");
  f.read("setting", c.setting);
  f.read("seed", c.seed);
  f.read("ok", c.ok);
  f.read("error", c.error);
  f.read("train_seconds", c.train_seconds);
  if (const auto* r = f.child("report")) c.report = MetricsReport::from_json(*r);
  f.finish();
  return c;
}

const CellStats& AblationTable::row(const std::string& name) const {
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r] == name) return stats[r];
  throw ContractViolation("ablation table has no row '" + name + "'");
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["mse_units"] = mse_units;
  j["rows"] = nlohmann::json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const CellStats& s = stats[r];
    nlohmann::json row = {{"name", rows[r]},         {"n_ok", s.n_ok},         {"n_failed", s.n_failed},
                          {"mse_mean", s.mse_mean},  {"mse_std", s.mse_std},   {"ade_mean", s.ade_mean},
                          {"ade_std", s.ade_std},    {"fde_mean", s.fde_mean}, {"fde_std", s.fde_std}};
    row["cells"] = nlohmann::json::array();
    for (std::size_t k = 0; k < seeds.size(); ++k) row["cells"].push_back(cells[r * seeds.size() + k].to_json());
    j["rows"].push_back(row);
  }
  j["verdicts"] = nlohmann::json::array();
  for (const auto& v : verdicts) j["verdicts"].push_back({{"better", v.better}, {"worse", v.worse}, {"holds", v.holds}});
  return j;
}

std::string AblationTable::table() const {
  std::ostringstream os;
  os << std::left << std::setw(18) << "setting" << std::right << std::setw(26) << "MSE (mean +- std)" << std::setw(24)
     << "ADE (mean +- std)" << std::setw(24) << "FDE (mean +- std)" << std::setw(8) << "ok" << std::setw(8) << "failed"
     << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const CellStats& s = stats[r];
    auto pm = [](double m, double sd) { return fmt(m, 5) + " +- " + fmt(sd, 3); };
    os << std::left << std::setw(18) << rows[r] << std::right;
    if (s.n_ok == 0) {
      os << std::setw(26) << "failed" << std::setw(24) << "failed" << std::setw(24) << "failed";
    } else {
      os << std::setw(26) << pm(s.mse_mean, s.mse_std) << std::setw(24) << pm(s.ade_mean, s.ade_std) << std::setw(24)
         << pm(s.fde_mean, s.fde_std);
    }
    os << std::setw(8) << s.n_ok << std::setw(8) << s.n_failed << '\n';
  }
  os << "mse units: " << mse_units << '\n';
  for (const auto& v : verdicts) os << v.better << " < " << v.worse << ": " << (v.holds ? "yes" : "no") << '\n';
  return os.str();
}

AblationTable aggregate_cells(const std::vector<std::string>& rows, const std::vector<uint64_t>& seeds,
                              std::vector<AblationCell> cells, const std::string& mse_units) {
  if (cells.size() != rows.size() * seeds.size()) throw ContractViolation("aggregate_cells: cell count");
  AblationTable t;
  t.rows = rows;
  t.seeds = seeds;
  t.cells = std::move(cells);
  t.mse_units = mse_units;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<const MetricsReport*> ok;
    CellStats s;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const AblationCell& c = t.cells[r * seeds.size() + k];
      if (c.ok) {
        ok.push_back(&c.report);
      } else {
        ++s.n_failed;
      }
    }
    s.n_ok = static_cast<int>(ok.size());
    auto stat = [&](auto get, double& mean, double& sd) {
      mean = sd = 0.0;
      if (ok.empty()) return;
      for (const auto* m : ok) mean += get(*m);
      mean /= ok.size();
      if (ok.size() < 2) return;
      for (const auto* m : ok) sd += (get(*m) - mean) * (get(*m) - mean);
      sd = std::sqrt(sd / (ok.size() - 1));
    };
    stat([](const MetricsReport& m) { return m.mse; }, s.mse_mean, s.mse_std);
    stat([](const MetricsReport& m) { return m.ade; }, s.ade_mean, s.ade_std);
    stat([](const MetricsReport& m) { return m.fde; }, s.fde_mean, s.fde_std);
    t.stats.push_back(s);
  }
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      const CellStats &sa = t.stats[a], &sb = t.stats[b];
      t.verdicts.push_back({rows[b], rows[a], sa.n_ok > 0 && sb.n_ok > 0 && sb.mse_mean < sa.mse_mean});
    }
  }
  return t;
}

AblationTable run_ablation(const AblationConfig& config) {
  if (config.settings.size() < 2) throw ConfigError("ablation.settings", "need at least 2 rows");
  if (config.seeds.empty()) throw ConfigError("ablation.seeds", "need at least 1 seed");
  for (std::size_t a = 0; a < config.settings.size(); ++a)
    for (std::size_t b = a + 1; b < config.settings.size(); ++b)
      if (config.settings[a].name == config.settings[b].name)
        throw ConfigError("ablation.settings", "duplicate row name '" + config.settings[a].name + "'");
  config.train.validate();
  config.data.validate();

  const Dataset data = build_dataset(config.data, config.train.T_obs, config.train.T_pre);
  const Split split = split_holdout(static_cast<int>(data.windows.size()), config.holdout_fraction);
  std::vector<SegmentWindow> train_w, held_w;
  for (int i : split.train) train_w.push_back(data.windows[i]);
  for (int i : split.held_out) held_w.push_back(data.windows[i]);

  std::filesystem::path root = config.out_dir;
  if (root.empty()) {
    root = std::filesystem::temp_directory_path() /
           ("ihvrnn-ablation-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  }
  std::filesystem::create_directories(root / "cells");

  std::vector<std::string> rows;
  std::vector<AblationCell> cells;
  for (const auto& setting : config.settings) {
    rows.push_back(setting.name);
    for (uint64_t seed : config.seeds) {
      const std::string key = setting.name + "-seed" + std::to_string(seed);
      const auto cell_path = root / "cells" / (key + ".json");
      if (std::filesystem::exists(cell_path)) {
        std::ifstream in(cell_path);
        AblationCell c = AblationCell::from_json(nlohmann::json::parse(in));
        if (c.ok) {
          cells.push_back(std::move(c));
          continue;
        }
      }
      TrainConfig tc = config.train;
      tc.seed = seed;
      tc.model.variant = setting.variant;
      tc.model.use_gat = setting.use_gat;
      tc.model.use_rm = setting.use_rm;
      AblationCell c;
      c.setting = setting.name;
      c.seed = seed;
      const TrainOutputs outs{root / "runs" / key / "checkpoint.ckpt", root / "runs" / key / "log.jsonl"};
      const auto t0 = std::chrono::steady_clock::now();
      try {
        std::filesystem::create_directories(root / "runs" / key);
        const nlohmann::json meta = {{"data", config.data.to_json()}, {"setting", setting.to_json()}};
        TrainResult tr = train(tc, train_w, outs, meta);
        c.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        Checkpoint ck;
        ck.params = std::move(tr.params);
        ck.model = tc.model;
        ck.step = tr.steps_done;
        ck.meta = {{"train", tc.to_json()}};
        EvalProtocol p;
        p.T_pre = tc.T_pre;
        p.units = config.units;
        p.dataset_id = config.data.kind;
        c.report = evaluate(ck, held_w, p);
        c.report.seeds = {seed};
        c.ok = true;
      } catch (const NumericError& e) {
        c.ok = false;
        c.error = e.what();
      }
      write_json(cell_path, c.to_json());
      cells.push_back(std::move(c));
    }
  }
  return aggregate_cells(rows, config.seeds, std::move(cells), to_string(config.units));
}

}  // namespace ihvrnn
