#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "json.hpp"

#include "ihvrnn/errors.hpp"
#include "ihvrnn/scene_io.hpp"
#include "ihvrnn/synthetic.hpp"

using namespace ihvrnn;

namespace {

bool same_scene(const Scene& a, const Scene& b) {
  if (a.scene_id != b.scene_id || a.agents.size() != b.agents.size()) return false;
  for (std::size_t i = 0; i < a.agents.size(); ++i) {
    const auto& fa = a.agents[i].frames;
    const auto& fb = b.agents[i].frames;
    if (a.agents[i].agent_id != b.agents[i].agent_id || fa.size() != fb.size()) return false;
    for (std::size_t k = 0; k < fa.size(); ++k)
      if (fa[k].frame != fb[k].frame || !(fa[k].position == fb[k].position)) return false;
  }
  return true;
}

// Plug-in mutual information (nats) between B_t and A_{t-1}.
double regime_mutual_information(const TeamGameConfig& base, int seeds) {
  const int R = base.regime_count;
  std::vector<double> joint(R * R, 0.0);
  double total = 0.0;
  for (int s = 0; s < seeds; ++s) {
    TeamGameConfig c = base;
    c.seed = static_cast<uint64_t>(s) + 100;
    const auto truth = gen_team_game(c).truth;
    for (std::size_t t = 1; t < truth.strategy_sequence.size(); ++t) {
      joint[truth.strategy_sequence[t - 1][0] * R + truth.strategy_sequence[t][1]] += 1.0;
      total += 1.0;
    }
  }
  std::vector<double> pa(R, 0.0), pb(R, 0.0);
  for (int a = 0; a < R; ++a)
    for (int b = 0; b < R; ++b) {
      pa[a] += joint[a * R + b] / total;
      pb[b] += joint[a * R + b] / total;
    }
  double mi = 0.0;
  for (int a = 0; a < R; ++a)
    for (int b = 0; b < R; ++b) {
      const double p = joint[a * R + b] / total;
      if (p > 0) mi += p * std::log(p / (pa[a] * pb[b]));
    }
  return mi;
}

}  // namespace

TEST_CASE("team game: config validation names the field") {
  TeamGameConfig c;
  c.coupling = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("team_game.coupling"), ConfigError);
  c = {};
  c.n_per_team = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.switch_prob = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(best_response(3, 4) == 0);
  CHECK(best_response(1, 4) == 2);
}

TEST_CASE("team game: deterministic given the seed") {
  TeamGameConfig c;
  c.seed = 42;
  const auto a = gen_team_game(c), b = gen_team_game(c);
  CHECK(same_scene(a.scene, b.scene));
  CHECK(a.truth.strategy_sequence == b.truth.strategy_sequence);
  c.seed = 43;
  CHECK_FALSE(same_scene(a.scene, gen_team_game(c).scene));
  CHECK(team_game_scene_seed(7, 0) == 7);
  CHECK(team_game_scene_seed(7, 1) != team_game_scene_seed(7, 2));
}

TEST_CASE("team game: shapes, teams and arena bounds") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    TeamGameConfig c;
    c.seed = seed;
    c.member_noise = 2.0;
    const auto g = gen_team_game(c);
    REQUIRE(g.scene.arena.has_value());
    CHECK(g.scene.arena->width() == 105.0);
    CHECK(g.scene.arena->height() == 68.0);
    REQUIRE(g.scene.agents.size() == 10);
    CHECK(g.truth.strategy_sequence.size() == 80);
    CHECK(g.truth.formation_targets.size() == 4);
    CHECK(g.scene.frame_rate_hz == 10.0);
    for (std::size_t i = 0; i < g.scene.agents.size(); ++i) {
      CHECK(g.scene.agents[i].static_group == (i < 5 ? 0 : 1));
      CHECK(g.scene.agents[i].frames.size() == 80);
      for (const auto& f : g.scene.agents[i].frames) CHECK(g.scene.arena->contains(f.position));
    }
  }
}

TEST_CASE("team game: noiseless dynamics approach the target monotonically") {
  TeamGameConfig c;
  c.member_noise = 0.0;
  c.switch_prob = 0.0;
  c.seed = 5;
  const auto g = gen_team_game(c);
  for (const auto& st : g.truth.strategy_sequence) CHECK(st == g.truth.strategy_sequence.front());
  for (std::size_t i = 0; i < g.scene.agents.size(); ++i) {
    const int team = i < 5 ? 0 : 1;
    const Vec2 target = g.truth.formation_targets[g.truth.strategy_sequence.front()[team]][i];
    double prev = 1e300;
    for (const auto& f : g.scene.agents[i].frames) {
      const double d = std::hypot(f.position.x - target.x, f.position.y - target.y);
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
  }
}

TEST_CASE("team game: full coupling makes B a best response to A's previous regime") {
  long count = 0, match = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    TeamGameConfig c;
    c.coupling = 1.0;
    c.seed = seed;
    const auto truth = gen_team_game(c).truth;
    for (std::size_t t = 1; t < truth.strategy_sequence.size(); ++t) {
      ++count;
      match += truth.strategy_sequence[t][1] == best_response(truth.strategy_sequence[t - 1][0], c.regime_count);
    }
  }
  CHECK(count > 0);
  CHECK(match == count);
}

TEST_CASE("team game: coupling increases the regime mutual information") {
  TeamGameConfig c;
  c.T = 2000;
  c.n_per_team = 2;
  c.switch_prob = 0.3;
  double prev = -1.0;
  for (double coupling : {0.0, 0.5, 1.0}) {
    c.coupling = coupling;
    const double mi = regime_mutual_information(c, 3);
    CAPTURE(coupling);
    CHECK(mi >= prev);
    prev = mi;
  }
  CHECK(prev > 0.5);
}

TEST_CASE("team game: truth round trips through json") {
  TeamGameConfig c;
  c.T = 10;
  const auto g = gen_team_game(c);
  const nlohmann::json j = truth_to_json(g.truth, c);
  CHECK(j.dump().find("mt19937_64") != std::string::npos);
  const auto back = truth_from_json(j);
  CHECK(back.strategy_sequence == g.truth.strategy_sequence);
  REQUIRE(back.formation_targets.size() == g.truth.formation_targets.size());
  for (std::size_t r = 0; r < back.formation_targets.size(); ++r) CHECK(back.formation_targets[r] == g.truth.formation_targets[r]);
}

TEST_CASE("oracle: zero noise without switching is exact") {
  TeamGameConfig c;
  c.member_noise = 0.0;
  c.switch_prob = 0.0;
  for (double coupling : {0.0, 0.6, 1.0}) {
    c.coupling = coupling;
    CHECK(oracle_team_game_mse(c, 20, 10, 30) < 1e-20);
  }
}

TEST_CASE("oracle: never worse than constant velocity") {
  for (double coupling : {0.0, 1.0}) {
    for (double noise : {0.1, 0.5, 1.5}) {
      TeamGameConfig c;
      c.coupling = coupling;
      c.member_noise = noise;
      const auto o = oracle_team_game_stats(c, 20, 10, 100);
      const auto cv = constant_velocity_team_game_stats(c, 20, 10, 100);
      CAPTURE(coupling);
      CAPTURE(noise);
      CHECK(o.n_windows == 100);
      CHECK(o.mse > 0.0);
      CHECK(o.mse <= cv.mse);
    }
  }
}

TEST_CASE("oracle: default configuration matches the recorded fixture") {
  const auto doc = nlohmann::json::parse(read_text_file(std::filesystem::path(IHVRNN_TEST_FIXTURES) / "oracle_mse.json"));
  const TeamGameConfig c;
  const auto o = oracle_team_game_stats(c, doc.at("T_obs"), doc.at("T_pre"), doc.at("n_windows"));
  const auto cv = constant_velocity_team_game_stats(c, doc.at("T_obs"), doc.at("T_pre"), doc.at("n_windows"));
  CHECK(o.mse == doctest::Approx(doc.at("oracle_mse").get<double>()).epsilon(1e-12));
  CHECK(o.std_error == doctest::Approx(doc.at("oracle_std_error").get<double>()).epsilon(1e-12));
  CHECK(cv.mse == doctest::Approx(doc.at("constant_velocity_mse").get<double>()).epsilon(1e-12));
}

TEST_CASE("oracle prediction: shape and exactness without noise") {
  TeamGameConfig c;
  c.member_noise = 0.0;
  c.switch_prob = 0.0;
  const auto g = gen_team_game(c);
  const auto pred = oracle_team_game_prediction(g, c, 5, 20, 10);
  REQUIRE(pred.size() == 10);
  REQUIRE(pred[0].size() == 10);
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int k = 0; k < 10; ++k) {
      const Vec2 truth = g.scene.agents[i].frames[5 + 20 + k].position;
      CHECK(std::abs(pred[i][k].x - truth.x) < 1e-9);
      CHECK(std::abs(pred[i][k].y - truth.y) < 1e-9);
    }
}

TEST_CASE("crossing flows: deterministic, inside the corridor and heading preserving") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    CrossingFlowsConfig c;
    c.seed = seed;
    const Scene a = gen_crossing_flows(c);
    CHECK(same_scene(a, gen_crossing_flows(c)));
    REQUIRE(a.agents.size() == 12);
    REQUIRE(a.arena.has_value());
    for (std::size_t i = 0; i < a.agents.size(); ++i) {
      const auto& f = a.agents[i].frames;
      REQUIRE(f.size() == 40);
      const double moved = f.back().position.x - f.front().position.x;
      if (i < 6)
        CHECK(moved > -0.5);
      else
        CHECK(moved < 0.5);
      for (const auto& p : f) CHECK(a.arena->contains(p.position));
    }
  }
}

TEST_CASE("crossing flows: walkers keep their distance") {
  double closest = 1e300;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    CrossingFlowsConfig c;
    c.seed = seed;
    const Scene s = gen_crossing_flows(c);
    for (int t = 0; t < c.T; ++t)
      for (std::size_t i = 0; i < s.agents.size(); ++i)
        for (std::size_t j = i + 1; j < s.agents.size(); ++j) {
          const Vec2 p = s.agents[i].frames[t].position, q = s.agents[j].frames[t].position;
          closest = std::min(closest, std::hypot(p.x - q.x, p.y - q.y));
        }
  }
  CHECK(closest > 0.2);
}

TEST_CASE("crossing flows: no avoidance gives straight constant-velocity tracks") {
  CrossingFlowsConfig c;
  c.avoidance_strength = 0.0;
  c.seed = 3;
  const Scene s = gen_crossing_flows(c);
  for (const auto& a : s.agents) {
    // Least-squares line through x(t); y should stay put.
    const int T = static_cast<int>(a.frames.size());
    double st = 0, sx = 0, stt = 0, stx = 0, sy = 0;
    for (const auto& f : a.frames) {
      const double t = static_cast<double>(f.frame);
      st += t;
      sx += f.position.x;
      stt += t * t;
      stx += t * f.position.x;
      sy += f.position.y;
    }
    const double slope = (T * stx - st * sx) / (T * stt - st * st), icpt = (sx - slope * st) / T;
    for (const auto& f : a.frames) {
      CHECK(std::abs(f.position.x - (icpt + slope * static_cast<double>(f.frame))) < 6 * c.noise);
      CHECK(std::abs(f.position.y - sy / T) < 6 * c.noise);
    }
  }
}
