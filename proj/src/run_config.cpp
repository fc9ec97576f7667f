#include "ihvrnn/run_config.hpp"

#include <algorithm>
#include <cstdio>

#include "ihvrnn/errors.hpp"
#include "ihvrnn/json_fields.hpp"
#include "ihvrnn/rng.hpp"
#include "ihvrnn/scene_io.hpp"

namespace ihvrnn {

namespace {

// Copies the master seed into sections that do not set their own.
void fill_seed(nlohmann::json& doc, uint64_t seed) {
  auto set_default = [&](nlohmann::json& obj, const char* key) {
    if (obj.is_object() && !obj.contains(key)) obj[key] = seed;
  };
  if (!doc.contains("train")) doc["train"] = nlohmann::json::object();
  set_default(doc["train"], "seed");
  if (!doc.contains("data")) doc["data"] = nlohmann::json::object();
  auto& data = doc["data"];
  if (!data.is_object()) return;
  for (const char* gen : {"team_game", "crossing_flows"}) {
    if (!data.contains(gen)) data[gen] = nlohmann::json::object();
    set_default(data[gen], "seed");
  }
}

EvalSection parse_eval(const nlohmann::json& j) {
  EvalSection e;
  JsonFields f(j, "eval");
  f.read("T_pre", e.T_pre);
  f.read("units", e.units);
  f.read("split", e.split);
  f.read("holdout_fraction", e.holdout_fraction);
  f.read("checkpoint", e.checkpoint);
  f.finish();
  if (e.T_pre < 1) throw ConfigError("eval.T_pre", "must be at least 1");
  if (e.units != "auto" && e.units != "raw" && e.units != "normalized") {
    throw ConfigError("eval.units", "must be auto, raw or normalized");
  }
  if (e.split != "held_out" && e.split != "all") throw ConfigError("eval.split", "must be held_out or all");
  if (!(e.holdout_fraction > 0.0 && e.holdout_fraction < 1.0)) {
    throw ConfigError("eval.holdout_fraction", "must lie in (0, 1)");
  }
  return e;
}

AblationSection parse_ablation(const nlohmann::json& j, const ModelConfig& model) {
  AblationSection a;
  JsonFields f(j, "ablation");
  f.read("seeds", a.seeds);
  const nlohmann::json* variants = f.child("variants");
  const nlohmann::json* settings = f.child("settings");
  f.finish();
  if (variants && settings) throw ConfigError("ablation", "give either variants or settings, not both");
  if (variants) {
    if (!variants->is_array()) throw ConfigError("ablation.variants", "expected a list of variant names");
    std::vector<Variant> vs;
    for (std::size_t k = 0; k < variants->size(); ++k) {
      const std::string path = "ablation.variants[" + std::to_string(k) + "]";
      if (!(*variants)[k].is_string()) throw ConfigError(path, "expected a variant name");
      vs.push_back(parse_variant((*variants)[k].get<std::string>(), path));
    }
    a.settings = settings_for_variants(vs, model);
  } else if (settings) {
    if (!settings->is_array()) throw ConfigError("ablation.settings", "expected a list");
    for (std::size_t k = 0; k < settings->size(); ++k) {
      a.settings.push_back(AblationSetting::from_json((*settings)[k], "ablation.settings[" + std::to_string(k) + "]"));
    }
  } else {
    a.settings = settings_for_variants({Variant::vrnn, Variant::hvrnn, Variant::ihvrnn}, model);
  }
  if (a.seeds.empty()) throw ConfigError("ablation.seeds", "need at least one seed");
  return a;
}

}  // namespace

RunConfig RunConfig::parse(const nlohmann::json& input) {
  RunConfig c;
  if (!input.is_object()) throw ConfigError("<root>", "expected an object");
  nlohmann::json doc = input;
  if (doc.contains("seed")) {
    const auto& v = doc["seed"];
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<int64_t>() < 0)) {
      throw ConfigError("seed", "expected a non-negative integer");
    }
    c.seed = v.get<uint64_t>();
  }
  fill_seed(doc, c.seed);
  c.document = doc;

  JsonFields root(doc, "");
  root.read("seed", c.seed);
  std::string out_dir = c.out_dir.string();
  root.read("out_dir", out_dir);
  c.out_dir = out_dir;
  const nlohmann::json empty = nlohmann::json::object();
  const nlohmann::json* data = root.child("data");
  const nlohmann::json* model = root.child("model");
  const nlohmann::json* train = root.child("train");
  const nlohmann::json* eval = root.child("eval");
  const nlohmann::json* ablation = root.child("ablation");
  root.finish();

  c.data = DatasetSpec::from_json(data ? *data : empty, "data");
  c.model = ModelConfig::from_json(model ? *model : empty, "model");
  c.model_sets_groups = model && model->is_object() && model->contains("n_groups_max");
  c.train = TrainConfig::from_json(train ? *train : empty, c.model, "train");
  c.eval = parse_eval(eval ? *eval : empty);
  c.ablation = parse_ablation(ablation ? *ablation : empty, c.model);
  if (c.eval.T_pre > c.train.T_pre) {
    throw ConfigError("eval.T_pre", "exceeds train.T_pre (" + std::to_string(c.train.T_pre) + ")");
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto ? upto - 1 : 0), '\n');
    throw ParseError(path.string(), line, "malformed JSON");
  }
  return parse(doc);
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(document.dump())));
  return buf;
}

nlohmann::json RunConfig::manifest(const std::string& command) const {
  return {{"tool", kToolName}, {"version", kToolVersion}, {"command", command}, {"config_hash", hash()},
          {"seed", seed},      {"config", document}};
}

MseUnits resolve_units(const std::string& units, const std::vector<SegmentWindow>& windows) {
  if (units == "raw") return MseUnits::raw;
  if (units == "normalized") return MseUnits::normalized;
  const bool arenas = !windows.empty() && std::all_of(windows.begin(), windows.end(), [](const SegmentWindow& w) {
    return w.arena.has_value();
  });
  return arenas ? MseUnits::normalized : MseUnits::raw;
}

}  // namespace ihvrnn
