// Acceptance run: one PASS/FAIL line per criterion.
//
//   ihvrnn_acceptance [--only 1,5,9] [--work-dir DIR] [--fixtures DIR]
//
// Exit code 0 when every selected criterion passes, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ihvrnn/dataset.hpp"
#include "ihvrnn/errors.hpp"
#include "ihvrnn/evaluation.hpp"
#include "ihvrnn/grad_check.hpp"
#include "ihvrnn/model.hpp"
#include "ihvrnn/nn.hpp"
#include "ihvrnn/objective.hpp"
#include "ihvrnn/scene_io.hpp"
#include "ihvrnn/synthetic.hpp"
#include "ihvrnn/train.hpp"

namespace fs = std::filesystem;
using namespace ihvrnn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

Matrix random_matrix(int r, int c, Rng& rng, double lo, double hi) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

ParamTree random_params(const ModelConfig& c, Rng& rng, double spread) {
  ParamTree p = init_params(c, rng);
  for (const auto& name : p.names())
    for (double& v : p.values(name)) v = rng.uniform(-spread, spread);
  return p;
}

// ---- 1 ----

Outcome gradient_check() {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.d_h = 8;
  c.d_z = 4;
  c.d_s = 4;
  c.n_groups_max = 2;
  c.K = 3;
  c.d_m = 1.0;
  Rng rng(101);
  const ParamTree params = random_params(c, rng, 0.4);
  const std::vector<int> groups{0, 1};
  const Matrix x0 = random_matrix(2, 2, rng, -1, 1);
  Matrix x1 = x0;
  for (double& v : x1.values()) v += rng.uniform(-0.3, 0.3);
  const StepNoise n0 = draw_step_noise(c, 2, 2, rng), n1 = draw_step_noise(c, 2, 2, rng);
  TrackArray gt(2, 1);
  gt.at(0, 0) = {x1(0, 0) + 0.1, x1(0, 1)};
  gt.at(1, 0) = {x1(1, 0), x1(1, 1) - 0.2};
  // One teacher-forced step (after a warm-up step that gives it a history)
  // plus the one-step prediction term.
  const nn::ScalarFunction f = [&](ad::Tape& tape, ParamBinding& bind) {
    ModelState st = init_state(tape, c, groups);
    FilterResult a = filter_step(bind, c, st, x0, groups, n0);
    FilterResult b = filter_step(bind, c, a.state, x1, groups, n1);
    const GenerationTerms g = generation_loss({a.stats, b.stats}, 2);
    const ad::Var pred = prediction_loss(rollout(bind, c, b.state, 1), gt);
    return total_loss({g.recon_nll, g.kl_s, g.kl_z, pred}, 1.0, 1.0);
  };
  nn::GradCheckOptions opt;
  opt.fraction = 1.0;
  const auto r = nn::grad_check_detailed(f, params, opt);
  const double secs = seconds_since(t0);
  return {r.max_rel_error < 1e-4 && secs < 60.0, "max rel error " + fmt(r.max_rel_error) + " over " +
                                                      std::to_string(r.coords_checked) + " coords, " + fmt(secs, 3) + " s"};
}

// ---- 2 ----

Outcome kl_nll_oracles() {
  Rng rng(202);
  double worst = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    nn::GaussianParams q, p;
    for (int d = 0; d < 3; ++d) {
      q.mean.push_back(rng.uniform(-1, 1));
      p.mean.push_back(rng.uniform(-1, 1));
      q.scale.push_back(rng.uniform(0.5, 1.5));
      p.scale.push_back(rng.uniform(0.5, 1.5));
    }
    const int n = 1000000;
    double acc = 0.0;
    std::vector<double> x(q.mean.size());
    for (int k = 0; k < n; ++k) {
      for (std::size_t d = 0; d < x.size(); ++d) x[d] = q.mean[d] + q.scale[d] * rng.normal();
      acc += nn::gaussian_nll(x, p) - nn::gaussian_nll(x, q);
    }
    const double exact = nn::kl_diag(q, p);
    worst = std::max(worst, std::abs(acc / n - exact) / exact);
  }
  const nn::GaussianParams g{{0.3}, {0.8}};
  const double lo = -10.0, hi = 10.0;
  const int cells = 20000;
  const double h = (hi - lo) / cells;
  double mass = 0.0;
  for (int k = 0; k <= cells; ++k) {
    const double w = (k == 0 || k == cells) ? 0.5 : 1.0;
    mass += w * std::exp(-nn::gaussian_nll(std::vector<double>{lo + k * h}, g));
  }
  mass *= h;
  return {worst < 0.01 && std::abs(mass - 1.0) < 1e-3,
          "worst KL rel deviation " + fmt(worst) + "; density mass " + fmt(mass, 10)};
}

// ---- 3 ----

Outcome mask_properties() {
  Rng rng(303);
  long violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig c;
    c.K = 2 + trial % 4;
    c.d_m = rng.uniform(0.5, 3.0);
    const int n = 2 + rng.uniform_int(10);
    const Matrix pos = random_matrix(n, 2, rng, -8, 8);
    for (bool team : {false, true}) {
      c.team_sports_mode = team;
      const auto m = social_masks(pos, c);
      if (static_cast<int>(m.size()) != c.K) ++violations;
      for (int k = 0; k < c.K; ++k) {
        if (!m[k].symmetric()) ++violations;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            if (i == j && m[k].at(i, j) != 1) ++violations;
            if (k > 0 && m[k - 1].at(i, j) > m[k].at(i, j)) ++violations;
            if ((team || k == c.K - 1) && m[k].at(i, j) != 1) ++violations;
          }
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over 100 position sets"};
}

// ---- 4, 5 ----

struct Fixture {
  std::vector<Matrix> frames;
  std::vector<StepNoise> noise;
  std::vector<int> groups;
};

Fixture random_fixture(const ModelConfig& c, int n, int T, Rng& rng) {
  Fixture f;
  Matrix x = random_matrix(n, 2, rng, -2, 2);
  for (int t = 0; t < T; ++t) {
    for (double& v : x.values()) v += rng.uniform(-0.3, 0.3);
    f.frames.push_back(x);
    f.noise.push_back(draw_step_noise(c, n, c.n_groups_max, rng));
  }
  for (int i = 0; i < n; ++i) f.groups.push_back(rng.uniform_int(c.n_groups_max));
  return f;
}

struct Forward {
  std::vector<double> recon, kl_z;
  TrackArray pred;
};

Forward forward(const ParamTree& p, const ModelConfig& c, const Fixture& f, int t_pre) {
  ad::Tape tape;
  ParamBinding bind(tape, p);
  ModelState st = init_state(tape, c, f.groups);
  Forward out;
  for (std::size_t t = 0; t < f.frames.size(); ++t) {
    FilterResult r = filter_step(bind, c, st, f.frames[t], f.groups, f.noise[t]);
    out.recon.push_back(r.stats.recon.scalar());
    out.kl_z.push_back(r.stats.kl_z.scalar());
    st = std::move(r.state);
  }
  out.pred = rollout_positions(rollout(bind, c, st, t_pre));
  return out;
}

ModelConfig fixture_model(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.d_h = 8;
  c.d_z = 4;
  c.d_s = 4;
  c.n_groups_max = 3;
  c.K = 3;
  c.d_m = 1.0;
  return c;
}

Outcome variant_nesting() {
  Rng rng(404);
  int identical = 0, differ_before = 0;
  for (int k = 0; k < 10; ++k) {
    const ModelConfig iv = fixture_model(Variant::ihvrnn), vr = fixture_model(Variant::vrnn);
    ParamTree p = random_params(iv, rng, 0.5);
    const Fixture f = random_fixture(iv, 3 + k % 4, 6, rng);
    differ_before += !(forward(p, iv, f, 5).pred == forward(p, vr, f, 5).pred);
    zero_consensus_path(p, iv);
    const Forward a = forward(p, iv, f, 5), b = forward(p, vr, f, 5);
    identical += a.recon == b.recon && a.kl_z == b.kl_z && a.pred == b.pred;
  }
  return {identical == 10 && differ_before == 10, std::to_string(identical) + "/10 fixtures bitwise identical (" +
                                                      std::to_string(differ_before) + "/10 differ before zeroing)"};
}

Outcome permutation_equivariance() {
  Rng rng(505);
  int exact = 0;
  for (int k = 0; k < 10; ++k) {
    const ModelConfig c = fixture_model(k % 3 == 0 ? Variant::vrnn : k % 3 == 1 ? Variant::hvrnn : Variant::ihvrnn);
    const ParamTree p = random_params(c, rng, 0.5);
    const int n = 3 + k % 5;
    const Fixture f = random_fixture(c, n, 6, rng);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    Fixture g;
    g.groups.resize(n);
    for (int i = 0; i < n; ++i) g.groups[i] = f.groups[perm[i]];
    for (std::size_t t = 0; t < f.frames.size(); ++t) {
      Matrix x(n, 2);
      StepNoise noise = f.noise[t];
      for (int i = 0; i < n; ++i) {
        for (int d = 0; d < 2; ++d) x(i, d) = f.frames[t](perm[i], d);
        for (int d = 0; d < c.d_z; ++d) noise.z(i, d) = f.noise[t].z(perm[i], d);
      }
      g.frames.push_back(x);
      g.noise.push_back(noise);
    }
    const Forward a = forward(p, c, f, 5), b = forward(p, c, g, 5);
    bool same = true;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < 5; ++t) same = same && b.pred.at(i, t) == a.pred.at(perm[i], t);
    exact += same;
  }
  return {exact == 10, std::to_string(exact) + "/10 fixtures permute rollouts bitwise"};
}

// ---- 6 ----

Outcome metric_oracles() {
  TrackArray gt(3, 5), off(3, 5), last(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 5; ++t) {
      gt.at(i, t) = {0.5 * t + i, -1.0 * i};
      off.at(i, t) = {gt.at(i, t).x + 3.0, gt.at(i, t).y + 4.0};
      last.at(i, t) = gt.at(i, t);
    }
  for (int i = 0; i < 3; ++i) last.at(i, 4).x += 2.0;
  const double a = ade(off, gt), m = mse(off, gt), fd = fde(last, gt), fd0 = fde(gt, gt);
  return {a == 5.0 && m == 25.0 && fd == 2.0 && fd0 == 0.0,
          "ade " + fmt(a, 17) + ", mse " + fmt(m, 17) + ", fde " + fmt(fd, 17)};
}

// ---- 7 ----

TrainConfig tiny_train() {
  TrainConfig c;
  c.model.d_h = 8;
  c.model.d_z = 4;
  c.model.d_s = 4;
  c.model.K = 2;
  c.model.team_sports_mode = true;
  c.T_obs = 8;
  c.T_pre = 4;
  c.batch_size = 4;
  c.steps = 20;
  c.learning_rate = 3e-3;
  c.seed = 11;
  return c;
}

Outcome determinism(const fs::path& work) {
  const TrainConfig c = tiny_train();
  DatasetSpec spec;
  spec.team_game.T = 30;
  spec.team_game.n_per_team = 3;
  spec.team_game.seed = 11;
  const auto windows = build_dataset(spec, c.T_obs, c.T_pre).windows;
  const fs::path dir = work / "determinism";
  fs::create_directories(dir);
  train(c, windows, {dir / "a.ckpt", dir / "a.jsonl"});
  train(c, windows, {dir / "b.ckpt", dir / "b.jsonl"});
  const bool logs = read_text_file(dir / "a.jsonl") == read_text_file(dir / "b.jsonl");
  const bool cks = read_text_file(dir / "a.ckpt") == read_text_file(dir / "b.ckpt");
  return {logs && cks, std::string("logs ") + (logs ? "identical" : "differ") + ", checkpoints " +
                           (cks ? "identical" : "differ") + " (" + std::to_string(c.steps) + " steps)"};
}

// ---- 8 ----

ModelConfig team_model() {
  ModelConfig m;
  m.d_h = 32;
  m.d_z = 8;
  m.d_s = 8;
  m.n_groups_max = 2;
  m.team_sports_mode = true;
  m.use_rm = false;
  return m;
}

Outcome training_progress(const fs::path& work) {
  const auto t0 = Clock::now();
  TrainConfig c;
  c.model = team_model();
  c.T_obs = 20;
  c.T_pre = 10;
  c.steps = 200;
  c.learning_rate = 3e-3;
  const DatasetSpec spec;  // team game defaults: 10 agents, T = 80
  const auto windows = build_dataset(spec, c.T_obs, c.T_pre).windows;
  fs::create_directories(work / "progress");
  const TrainResult r = train(c, windows, {work / "progress" / "ck.ckpt", work / "progress" / "log.jsonl"});
  const double first = r.records.front().loss.total, final_total = r.records.back().loss.total;
  const double secs = seconds_since(t0);
  return {final_total <= 0.8 * first && secs < 600.0,
          "total " + fmt(first) + " at step 1 -> " + fmt(final_total) + " at step " +
              std::to_string(r.records.back().step) + " (" + fmt(100.0 * (1.0 - final_total / first), 3) +
              "% lower), " + fmt(secs, 3) + " s"};
}

// ---- 9, 10 ----

AblationConfig team_ablation(double coupling, const fs::path& out) {
  AblationConfig a;
  a.data.kind = "team_game";
  a.data.n_scenes = 5;
  a.data.team_game.coupling = coupling;
  a.train.model = team_model();
  a.train.T_obs = 20;
  a.train.T_pre = 10;
  a.train.steps = 300;
  a.train.learning_rate = 3e-3;
  a.settings = settings_for_variants({Variant::vrnn, Variant::hvrnn, Variant::ihvrnn}, a.train.model);
  a.seeds = {0, 1, 2};
  a.units = MseUnits::normalized;
  a.out_dir = out;
  return a;
}

struct TeamAblation {
  AblationTable coupled, control;
  double seconds = 0.0;
  bool ran = false;
};

TeamAblation& team_ablation_results(const fs::path& work) {
  static TeamAblation r;
  if (!r.ran) {
    const auto t0 = Clock::now();
    r.coupled = run_ablation(team_ablation(1.0, work / "ablation_coupling1"));
    std::printf("%s", r.coupled.table().c_str());
    r.control = run_ablation(team_ablation(0.0, work / "ablation_coupling0"));
    std::printf("coupling 0 control:\n%s", r.control.table().c_str());
    r.seconds = seconds_since(t0);
    r.ran = true;
  }
  return r;
}

Outcome directional_reproduction(const fs::path& work) {
  const TeamAblation& r = team_ablation_results(work);
  const CellStats &v = r.coupled.row("vrnn"), &h = r.coupled.row("hvrnn"), &i = r.coupled.row("ihvrnn");
  const bool complete = v.n_ok == 3 && h.n_ok == 3 && i.n_ok == 3;
  const bool order = i.mse_mean < h.mse_mean && h.mse_mean < v.mse_mean;
  const bool margin = i.mse_mean <= 0.9 * v.mse_mean;
  const CellStats &h0 = r.control.row("hvrnn"), &i0 = r.control.row("ihvrnn");
  const double pooled = std::sqrt((h0.mse_std * h0.mse_std + i0.mse_std * i0.mse_std) / 2.0);
  const double gap0 = std::abs(i0.mse_mean - h0.mse_mean);
  const bool control = h0.n_ok == 3 && i0.n_ok == 3 && gap0 < pooled;
  const bool fast = r.seconds < 45 * 60;
  return {complete && order && margin && control && fast,
          "coupling 1 mean mse vrnn " + fmt(v.mse_mean) + ", hvrnn " + fmt(h.mse_mean) + ", ihvrnn " +
              fmt(i.mse_mean) + " (ordering " + (order ? "holds" : "fails") + ", ihvrnn/vrnn " +
              fmt(i.mse_mean / v.mse_mean, 3) + "); coupling 0 gap " + fmt(gap0) + " vs pooled std " + fmt(pooled) +
              " (" + (control ? "holds" : "fails") + "); " + fmt(r.seconds, 4) + " s total"};
}

Outcome oracle_floor(const fs::path& work) {
  const TeamAblation& r = team_ablation_results(work);
  TeamGameConfig g;
  g.coupling = 1.0;
  const OracleStats o = oracle_team_game_stats(g, 20, 10, 200);
  const double floor = o.mse - 3.0 * o.std_error;
  double lowest = 1e300;
  int ok = 0;
  for (const auto& c : r.coupled.cells) {
    if (!c.ok) continue;
    ++ok;
    lowest = std::min(lowest, c.report.mse);
  }
  return {ok == static_cast<int>(r.coupled.cells.size()) && lowest >= floor,
          "lowest cell mse " + fmt(lowest) + " vs oracle " + fmt(o.mse) + " - 3 x " + fmt(o.std_error) + " = " +
              fmt(floor)};
}

// ---- 11 ----

bool same_tracks(const Scene& a, const Scene& b) {
  if (a.agents.size() != b.agents.size()) return false;
  for (std::size_t k = 0; k < a.agents.size(); ++k) {
    const auto &x = a.agents[k], &y = b.agents[k];
    if (x.agent_id != y.agent_id || x.static_group != y.static_group || x.frames.size() != y.frames.size()) return false;
    for (std::size_t f = 0; f < x.frames.size(); ++f)
      if (x.frames[f].frame != y.frames[f].frame || !(x.frames[f].position == y.frames[f].position)) return false;
  }
  return true;
}

template <class E>
std::string error_of(const std::function<void()>& f, std::size_t* line = nullptr) {
  try {
    f();
  } catch (const E& e) {
    if constexpr (std::is_same_v<E, ParseError>) {
      if (line) *line = e.line();
    }
    return e.what();
  }
  return "";
}

Outcome parser_golden(const fs::path& fixtures) {
  std::vector<std::string> failures;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };
  const auto ped = load_ped_tsv(fixtures / "three_lines.tsv");
  expect(ped.size() == 1 && ped[0].agents.size() == 2, "three_lines shape");
  const Scene ped_back = parse_ped_tsv(format_ped_tsv(ped[0]), "rt", ped[0].scene_id);
  expect(same_tracks(ped[0], ped_back), "ped tsv round trip");
  expect(format_ped_tsv(ped_back) == format_ped_tsv(ped[0]), "ped tsv text stable");

  const Scene soccer = load_soccer_json(fixtures / "soccer_small.json");
  const Scene soccer_back = parse_soccer_json(format_soccer_json(soccer), "rt");
  expect(same_tracks(soccer, soccer_back) && soccer.scene_id == soccer_back.scene_id, "soccer round trip");
  TeamGameConfig g;
  g.T = 20;
  const Scene synth = gen_team_game(g).scene;
  expect(same_tracks(synth, parse_soccer_json(format_soccer_json(synth), "rt")), "generated soccer round trip");

  std::size_t line = 0;
  std::string msg = error_of<ParseError>([&] { load_ped_tsv(fixtures / "bad_field.tsv"); }, &line);
  expect(line == 4 && msg.find("bad x 'abc'") != std::string::npos, "bad_field.tsv: " + msg);
  msg = error_of<ParseError>([&] { load_ped_tsv(fixtures / "extra_field.tsv"); }, &line);
  expect(line == 3 && msg.find("expected 4 fields, found 5") != std::string::npos, "extra_field.tsv: " + msg);
  msg = error_of<DataError>([&] { load_ped_tsv(fixtures / "duplicate.tsv"); });
  expect(msg.find("duplicate record") != std::string::npos, "duplicate.tsv: " + msg);
  msg = error_of<DataError>([&] { load_ped_tsv(fixtures / "empty.tsv"); });
  expect(msg.find("no tracks") != std::string::npos, "empty.tsv: " + msg);
  msg = error_of<DataError>([&] { load_soccer_json(fixtures / "soccer_shrink.json"); });
  expect(msg.find("team 0 has 2 players") != std::string::npos, "soccer_shrink.json: " + msg);
  msg = error_of<DataError>([&] { load_soccer_json(fixtures / "soccer_gap.json"); });
  expect(msg.find("missing frame between 0 and 2") != std::string::npos, "soccer_gap.json: " + msg);
  msg = error_of<ParseError>([&] { parse_soccer_json("{\n\"scene_id\": \n[1,", "inline"); }, &line);
  expect(line == 3, "malformed soccer json line: " + msg);

  std::string detail = failures.empty() ? "2 round trips and 7 malformed fixtures as expected" : "";
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {failures.empty(), detail};
}

// ---- 12 ----

Outcome scope_ablation(const fs::path& work) {
  const auto t0 = Clock::now();
  AblationConfig a;
  a.data.kind = "crossing_flows";
  a.data.n_scenes = 3;
  a.data.grouping = "dynamic";
  a.data.n_groups = 4;
  a.train.model.d_h = 16;
  a.train.model.d_z = 4;
  a.train.model.d_s = 4;
  a.train.model.n_groups_max = 4;
  a.train.model.K = 3;
  a.train.model.d_m = 2.0;
  a.train.T_obs = 8;
  a.train.T_pre = 12;
  a.train.steps = 150;
  a.train.learning_rate = 3e-3;
  a.settings = {{"IGC+RM", Variant::ihvrnn, true, true},
                {"IGC+GAT", Variant::ihvrnn, true, false},
                {"IGC only", Variant::ihvrnn, false, false}};
  a.seeds = {0, 1, 2};
  a.units = MseUnits::raw;
  a.out_dir = work / "scope_ablation";
  const AblationTable t = run_ablation(a);
  std::printf("%s", t.table().c_str());
  bool complete = t.rows.size() == 3 && t.cells.size() == 9, stable = true;
  for (const auto& name : t.rows) {
    const CellStats& s = t.row(name);
    complete = complete && s.n_ok == 3 && s.n_failed == 0;
    stable = stable && s.mse_std < s.mse_mean;
  }
  return {complete && stable, std::string("table ") + (complete ? "complete" : "incomplete") + ", cell std < mean " +
                                  (stable ? "for every row" : "violated") + ", " + fmt(seconds_since(t0), 4) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ihvrnn acceptance run"};
  std::vector<int> only;
  std::string work_dir = (fs::temp_directory_path() / "ihvrnn_acceptance").string();
  std::string fixtures = IHVRNN_FIXTURES;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--work-dir", work_dir, "scratch directory, cleared first");
  app.add_option("--fixtures", fixtures, "parser fixtures directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_dir;
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_check},
      {"KL / NLL oracles", kl_nll_oracles},
      {"mask properties", mask_properties},
      {"variant nesting", variant_nesting},
      {"permutation equivariance", permutation_equivariance},
      {"metric oracles", metric_oracles},
      {"determinism", [&] { return determinism(work); }},
      {"training progress", [&] { return training_progress(work); }},
      {"directional reproduction", [&] { return directional_reproduction(work); }},
      {"oracle floor", [&] { return oracle_floor(work); }},
      {"parser golden tests", [&] { return parser_golden(fixtures); }},
      {"scope ablation", [&] { return scope_ablation(work); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %-26s %s  %s\n", id, criteria[k].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
