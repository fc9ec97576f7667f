#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracle.hpp"

#include "ihvrnn/errors.hpp"
#include "ihvrnn/model.hpp"

using namespace ihvrnn;
using oracle::Vec;

namespace {

ModelConfig small_config(Variant v = Variant::ihvrnn) {
  ModelConfig c;
  c.variant = v;
  c.d_h = 6;
  c.d_z = 3;
  c.d_s = 2;
  c.K = 2;
  c.n_groups_max = 2;
  c.d_m = 2.0;
  return c;
}

ParamTree random_params(const ModelConfig& c, uint64_t seed, double spread = 0.5) {
  Rng rng(seed);
  ParamTree p = init_params(c, rng);
  for (const auto& name : p.names())
    for (double& v : p.values(name)) v = rng.uniform(-spread, spread);
  return p;
}

ParamTree zero_params(const ModelConfig& c) {
  Rng rng(0);
  return init_params(c, rng).zeros_like();
}

Matrix random_matrix(int r, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

StepNoise random_noise(const ModelConfig& c, int n, Rng& rng) { return draw_step_noise(c, n, c.n_groups_max, rng); }

// Plain-loop reimplementation of one teacher-forced step.
struct OracleState {
  std::vector<Vec> hz, hs, hm, s, z, x_prev;
};

struct OracleStats {
  double kl_s = 0.0, kl_z = 0.0, recon = 0.0;
};

OracleState oracle_init(const ModelConfig& c, int n) {
  OracleState st;
  st.hz.assign(n, Vec(c.d_h, 0.0));
  st.hm.assign(n, Vec(c.d_h, 0.0));
  st.z.assign(n, Vec(c.d_z, 0.0));
  st.hs.assign(c.n_groups_max, Vec(c.d_h, 0.0));
  st.s.assign(c.n_groups_max, Vec(c.d_s, 0.0));
  return st;
}

OracleStats oracle_step(const ParamTree& p, const ModelConfig& c, OracleState& st, const Matrix& xm,
                        const std::vector<int>& group_of, const StepNoise& noise, double meters_per_unit) {
  const int n = xm.rows(), G = c.n_groups_max;
  std::vector<Vec> x(n);
  for (int i = 0; i < n; ++i) x[i] = oracle::row(xm, i);
  std::vector<std::vector<int>> members(G);
  for (int i = 0; i < n; ++i) members[group_of[i]].push_back(i);
  std::vector<bool> active(G);
  for (int g = 0; g < G; ++g) active[g] = !members[g].empty();
  if (st.x_prev.empty()) st.x_prev = x;

  OracleStats out;
  std::vector<Vec> s = st.s;
  if (c.uses_consensus()) {
    for (int g = 0; g < G; ++g) {
      if (!active[g]) continue;
      Vec pooled(c.d_x + c.d_z + c.d_h, 0.0);
      for (int i : members[g]) {
        const Vec f = oracle::cat({x[i], st.z[i], st.hz[i]});
        for (std::size_t k = 0; k < f.size(); ++k) pooled[k] += f[k] / static_cast<double>(members[g].size());
      }
      const auto q = oracle::block(p, "enc_s", oracle::cat({pooled, st.hs[g]}));
      const auto pr = oracle::block(p, "prior_s", st.hs[g]);
      for (int d = 0; d < c.d_s; ++d) s[g][d] = q.mean[d] + q.scale[d] * noise.s(g, d);
      out.kl_s += oracle::kl(q, pr);
    }
  }
  std::vector<Vec> z(n), hz(n);
  for (int i = 0; i < n; ++i) {
    const int g = group_of[i];
    const auto pz = oracle::block(p, "prior_z", oracle::cat({st.hz[i], st.hs[g], s[g]}));
    const auto qz = oracle::block(p, "enc_z", oracle::cat({x[i], st.hz[i]}));
    z[i].resize(c.d_z);
    for (int d = 0; d < c.d_z; ++d) z[i][d] = qz.mean[d] + qz.scale[d] * noise.z(i, d);
    out.kl_z += oracle::kl(qz, pz);
    const auto dec = oracle::block(p, "dec", oracle::cat({z[i], s[g], st.hz[i], st.hs[g], st.hm[i]}));
    out.recon += oracle::nll({x[i][0] - st.x_prev[i][0], x[i][1] - st.x_prev[i][1]}, dec);
    hz[i] = oracle::gru(p, "rnn_z", oracle::cat({x[i], z[i], s[g], st.hs[g]}), st.hz[i]);
  }
  if (c.uses_consensus()) {
    std::vector<Vec> hs = st.hs;
    for (int g = 0; g < G; ++g) {
      if (!active[g]) continue;
      Vec px(c.d_x, 0.0);
      for (int i : members[g])
        for (int d = 0; d < c.d_x; ++d) px[d] += x[i][d] / static_cast<double>(members[g].size());
      Vec others(c.d_s, 0.0);
      if (c.uses_cross_group()) {
        int count = 0;
        for (int o = 0; o < G; ++o) count += (o != g && active[o]) ? 1 : 0;
        for (int o = 0; o < G; ++o)
          if (o != g && active[o])
            for (int d = 0; d < c.d_s; ++d) others[d] += s[o][d] / count;
      }
      hs[g] = oracle::gru(p, "rnn_s", oracle::cat({px, s[g], others}), st.hs[g]);
    }
    st.hs = hs;
  }
  // Social refinement on the updated agent states.
  std::vector<Vec> parts(n);
  for (int k = 0; k < c.scopes(); ++k) {
    nn::BinaryMask mask(n, 1);
    if (c.use_rm && k + 1 < c.K && !c.team_sports_mode)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          const double d = meters_per_unit * std::hypot(x[i][0] - x[j][0], x[i][1] - x[j][1]);
          mask.set(i, j, d <= (k + 1) * c.d_m ? 1 : 0);
        }
    const auto o = oracle::gat(p, "social.gat" + std::to_string(k), hz, mask);
    for (int i = 0; i < n; ++i) parts[i].insert(parts[i].end(), o[i].begin(), o[i].end());
  }
  for (int i = 0; i < n; ++i) st.hm[i] = oracle::affine(parts[i], p.at("social.proj.w"), &p.at("social.proj.b"));
  st.hz = hz;
  st.z = z;
  st.s = s;
  st.x_prev = x;
  return out;
}

double max_diff(const Matrix& m, const std::vector<Vec>& rows) {
  double d = 0.0;
  for (int r = 0; r < m.rows(); ++r) d = std::max(d, oracle::max_abs_diff(oracle::row(m, r), rows[r]));
  return d;
}

struct Trajectory {
  std::vector<Matrix> frames;
  std::vector<StepNoise> noise;
};

Trajectory random_trajectory(const ModelConfig& c, int n, int T, uint64_t seed) {
  Rng rng(seed);
  Trajectory tr;
  Matrix x = random_matrix(n, 2, rng, -2.0, 2.0);
  for (int t = 0; t < T; ++t) {
    for (double& v : x.values()) v += rng.uniform(-0.3, 0.3);
    tr.frames.push_back(x);
    tr.noise.push_back(random_noise(c, n, rng));
  }
  return tr;
}

struct RunOutput {
  std::vector<double> kl_s, kl_z, recon;
  Matrix h_z, h_s, h_m;
  TrackArray pred;
};

RunOutput run(const ParamTree& p, const ModelConfig& c, const Trajectory& tr, const std::vector<int>& group_of,
              int t_pre = 3) {
  ad::Tape tape;
  ParamBinding bind(tape, p);
  ModelState st = init_state(tape, c, group_of);
  RunOutput out;
  for (std::size_t t = 0; t < tr.frames.size(); ++t) {
    auto r = filter_step(bind, c, st, tr.frames[t], group_of, tr.noise[t]);
    out.kl_s.push_back(r.stats.kl_s.scalar());
    out.kl_z.push_back(r.stats.kl_z.scalar());
    out.recon.push_back(r.stats.recon.scalar());
    st = std::move(r.state);
  }
  out.h_z = st.h_z.value();
  out.h_s = st.h_s.value();
  out.h_m = st.h_m.value();
  out.pred = rollout_positions(rollout(bind, c, st, t_pre));
  return out;
}

}  // namespace

TEST_CASE("model config: json round trip and unknown keys") {
  ModelConfig c = small_config();
  c.use_rm = false;
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  auto j = c.to_json();
  j["dropout"] = 0.1;
  CHECK_THROWS_WITH_AS(ModelConfig::from_json(j), doctest::Contains("model.dropout"), ConfigError);
  j = c.to_json();
  j["variant"] = "lstm";
  CHECK_THROWS_AS(ModelConfig::from_json(j), ConfigError);
}

TEST_CASE("init_state: shapes and active groups") {
  ModelConfig c = small_config();
  c.n_groups_max = 3;
  ad::Tape tape;
  const ModelState st = init_state(tape, c, {0, 2, 2, 0});
  CHECK(st.h_z.rows() == 4);
  CHECK(st.h_z.cols() == c.d_h);
  CHECK(st.h_s.rows() == 3);
  CHECK(st.h_m.cols() == c.d_h);
  CHECK(st.s.cols() == c.d_s);
  CHECK(st.z.cols() == c.d_z);
  CHECK_FALSE(st.x_prev.valid());
  CHECK(st.active == std::vector<uint8_t>{1, 0, 1});
  CHECK_THROWS_AS(init_state(tape, c, {0, 3}), ContractViolation);
  CHECK_THROWS_AS(init_state(tape, c, {}), ContractViolation);
}

TEST_CASE("social_masks: scopes grow with the radius") {
  ModelConfig c;
  c.K = 3;
  c.d_m = 2.0;
  const Matrix pos{{0.0, 0.0}, {1.5, 0.0}, {5.0, 0.0}};
  const auto m = social_masks(pos, c);
  REQUIRE(m.size() == 3);
  CHECK(m[0].bits == std::vector<uint8_t>{1, 1, 0, 1, 1, 0, 0, 0, 1});
  CHECK(m[1].bits == std::vector<uint8_t>{1, 1, 0, 1, 1, 1, 0, 1, 1});
  CHECK(m[2].bits == std::vector<uint8_t>(9, 1));
  c.team_sports_mode = true;
  for (const auto& mk : social_masks(pos, c)) CHECK(mk.bits == std::vector<uint8_t>(9, 1));
}

TEST_CASE("social_masks: symmetric, nested, self-connected") {
  Rng rng(3);
  ModelConfig c;
  c.K = 4;
  c.d_m = 1.5;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 7;
    const auto m = social_masks(random_matrix(n, 2, rng, -6, 6), c);
    for (int k = 0; k < c.K; ++k) {
      CHECK(m[k].symmetric());
      for (int i = 0; i < n; ++i) {
        CHECK(m[k].at(i, i) == 1);
        for (int j = 0; j < n; ++j)
          if (k > 0 && m[k - 1].at(i, j)) CHECK(m[k].at(i, j) == 1);
      }
    }
  }
}

TEST_CASE("refine_social: switch combinations") {
  Rng rng(4);
  const Matrix hz = random_matrix(3, 6, rng);
  const Matrix pos{{0.0, 0.0}, {1.0, 0.0}, {9.0, 0.0}};

  SUBCASE("neither switch gives zeros and no social parameters") {
    ModelConfig c = small_config();
    c.use_gat = false;
    c.use_rm = false;
    ParamTree p = random_params(c, 1);
    CHECK_FALSE(p.contains("social.proj.w"));
    ad::Tape tape;
    ParamBinding bind(tape, p);
    CHECK(refine_social(bind, c, tape.constant(hz), social_masks(pos, c)).value() == Matrix(3, 6));
  }
  SUBCASE("masks only average the neighbours uniformly") {
    ModelConfig c = small_config();
    c.use_gat = false;
    ParamTree p = random_params(c, 1);
    CHECK_FALSE(p.contains("social.gat0.w"));
    ad::Tape tape;
    ParamBinding bind(tape, p);
    const Matrix out = refine_social(bind, c, tape.constant(hz), social_masks(pos, c)).value();
    // Scope 1 (2 m): {0,1} together, 2 alone. Scope 2: everyone.
    const Vec r0 = oracle::row(hz, 0), r1 = oracle::row(hz, 1), r2 = oracle::row(hz, 2);
    for (int i = 0; i < 3; ++i) {
      Vec near(6), all(6);
      for (int k = 0; k < 6; ++k) {
        near[k] = i == 2 ? r2[k] : (r0[k] + r1[k]) / 2.0;
        all[k] = (r0[k] + r1[k] + r2[k]) / 3.0;
      }
      const Vec expect = oracle::affine(oracle::cat({near, all}), p.at("social.proj.w"), &p.at("social.proj.b"));
      CHECK(oracle::max_abs_diff(oracle::row(out, i), expect) < 1e-12);
    }
  }
  SUBCASE("attention only uses one layer over the full mask") {
    ModelConfig c = small_config();
    c.use_rm = false;
    ParamTree p = random_params(c, 1);
    CHECK(p.contains("social.gat0.w"));
    CHECK_FALSE(p.contains("social.gat1.w"));
    ad::Tape tape;
    ParamBinding bind(tape, p);
    const Matrix out = refine_social(bind, c, tape.constant(hz), social_masks(pos, c)).value();
    std::vector<Vec> rows{oracle::row(hz, 0), oracle::row(hz, 1), oracle::row(hz, 2)};
    const auto g = oracle::gat(p, "social.gat0", rows, nn::BinaryMask(3, 1));
    for (int i = 0; i < 3; ++i)
      CHECK(oracle::max_abs_diff(oracle::row(out, i),
                                 oracle::affine(g[i], p.at("social.proj.w"), &p.at("social.proj.b"))) < 1e-12);
  }
}

TEST_CASE("zero parameters: priors, posteriors and decoder are standard heads") {
  const ModelConfig c = small_config();
  const ParamTree p = zero_params(c);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  ModelState st = init_state(tape, c, {0, 1, 1});
  Rng rng(0);
  const ad::Var x = tape.constant(random_matrix(3, 2, rng));
  const ad::Var s_agent = per_agent(st.s, st.group_of);
  const std::vector<nn::GaussianVar> heads{
      prior_groups(bind, c, st), prior_group(bind, c, st, 1), prior_agents(bind, c, st, s_agent),
      encode_groups(bind, c, st, x, {{0}, {1, 2}}), encode_agents(bind, c, st, x),
      decode_agents(bind, c, st, st.z, s_agent)};
  for (const auto& g : heads) {
    for (double v : g.mean.value().values()) CHECK(v == 0.0);
    for (double v : g.scale.value().values()) CHECK(v == doctest::Approx(std::log(2.0) + 1e-4).epsilon(1e-14));
  }
}

TEST_CASE("prior_group: rejects inactive groups and vrnn") {
  ModelConfig c = small_config();
  const ParamTree p = random_params(c, 2);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const ModelState st = init_state(tape, c, {1, 1});
  CHECK_THROWS_AS(prior_group(bind, c, st, 0), ContractViolation);
  CHECK_NOTHROW(prior_group(bind, c, st, 1));
  c.variant = Variant::vrnn;
  CHECK_THROWS_AS(prior_group(bind, c, st, 1), ContractViolation);
}

TEST_CASE("update_hidden: inactive groups keep their state") {
  ModelConfig c = small_config();
  c.n_groups_max = 3;
  const ParamTree p = random_params(c, 3);
  Rng rng(5);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  ModelState st = init_state(tape, c, {0, 2});
  st.h_s = tape.constant(random_matrix(3, c.d_h, rng));
  const ad::Var s = tape.constant(random_matrix(3, c.d_s, rng));
  const ModelState next =
      update_hidden(bind, c, st, tape.constant(random_matrix(2, 2, rng)), s, tape.constant(random_matrix(2, c.d_z, rng)));
  CHECK(oracle::row(next.h_s.value(), 1) == oracle::row(st.h_s.value(), 1));
  CHECK(oracle::row(next.h_s.value(), 0) != oracle::row(st.h_s.value(), 0));
  CHECK(oracle::row(next.h_s.value(), 2) != oracle::row(st.h_s.value(), 2));
}

TEST_CASE("update_hidden: cross-group coupling by variant") {
  Rng rng(6);
  const Matrix x = random_matrix(4, 2, rng), z = random_matrix(4, 3, rng), hs = random_matrix(2, 6, rng);
  const Matrix s1 = random_matrix(2, 2, rng);
  Matrix s2 = s1;
  s2(1, 0) += 0.7;  // perturb only the other group's consensus
  auto group0 = [&](const ModelConfig& c, const ParamTree& p, const Matrix& s, const std::vector<int>& groups) {
    ad::Tape tape;
    ParamBinding bind(tape, p);
    ModelState st = init_state(tape, c, groups);
    st.h_s = tape.constant(hs);
    return oracle::row(update_hidden(bind, c, st, tape.constant(x), tape.constant(s), tape.constant(z)).h_s.value(), 0);
  };
  const std::vector<int> both{0, 0, 1, 1};
  const ModelConfig hv = small_config(Variant::hvrnn), iv = small_config(Variant::ihvrnn);
  const ParamTree p = random_params(iv, 7);
  CHECK(group0(hv, p, s1, both) == group0(hv, p, s2, both));
  CHECK(group0(iv, p, s1, both) != group0(iv, p, s2, both));
  // With no other active group the cross-group input is zero.
  const std::vector<int> alone{0, 0, 0, 0};
  CHECK(group0(iv, p, s1, alone) == group0(hv, p, s1, alone));
}

TEST_CASE("filter_step: zero parameters have zero KL") {
  const ModelConfig c = small_config();
  const ParamTree p = zero_params(c);
  const auto tr = random_trajectory(c, 3, 3, 1);
  const auto out = run(p, c, tr, {0, 1, 1});
  for (double v : out.kl_s) CHECK(v == 0.0);
  for (double v : out.kl_z) CHECK(v == 0.0);
}

TEST_CASE("filter_step: vrnn has no consensus KL") {
  const ModelConfig c = small_config(Variant::vrnn);
  const auto tr = random_trajectory(c, 3, 3, 2);
  ad::Tape tape;
  const ParamTree p = random_params(c, 2);
  ParamBinding bind(tape, p);
  ModelState st = init_state(tape, c, {0, 1, 1});
  for (int t = 0; t < 3; ++t) {
    auto r = filter_step(bind, c, st, tr.frames[t], {0, 1, 1}, tr.noise[t]);
    CHECK(r.stats.kl_s.scalar() == 0.0);
    CHECK(r.stats.active_groups == 0);
    CHECK(r.state.h_s.value() == Matrix(2, c.d_h));
    st = std::move(r.state);
  }
}

TEST_CASE("filter_step: matches a plain-loop recomputation") {
  for (Variant v : {Variant::vrnn, Variant::hvrnn, Variant::ihvrnn}) {
    for (bool team : {false, true}) {
      ModelConfig c = small_config(v);
      c.team_sports_mode = team;
      CAPTURE(to_string(v));
      CAPTURE(team);
      const ParamTree p = random_params(c, 11);
      const auto tr = random_trajectory(c, 3, 4, 12);
      const std::vector<int> groups{1, 0, 1};
      const double mpu = 1.7;
      ad::Tape tape;
      ParamBinding bind(tape, p);
      ModelState st = init_state(tape, c, groups, mpu);
      OracleState ost = oracle_init(c, 3);
      for (int t = 0; t < 4; ++t) {
        auto r = filter_step(bind, c, st, tr.frames[t], groups, tr.noise[t]);
        const OracleStats o = oracle_step(p, c, ost, tr.frames[t], groups, tr.noise[t], mpu);
        CHECK(std::abs(r.stats.kl_s.scalar() - o.kl_s) < 1e-10);
        CHECK(std::abs(r.stats.kl_z.scalar() - o.kl_z) < 1e-10);
        CHECK(std::abs(r.stats.recon.scalar() - o.recon) < 1e-10);
        CHECK(max_diff(r.state.h_z.value(), ost.hz) < 1e-10);
        CHECK(max_diff(r.state.h_s.value(), ost.hs) < 1e-10);
        CHECK(max_diff(r.state.h_m.value(), ost.hm) < 1e-10);
        st = std::move(r.state);
      }
    }
  }
}

TEST_CASE("filter_step: membership changes switch which groups are active") {
  const ModelConfig c = small_config();
  const ParamTree p = random_params(c, 13);
  const auto tr = random_trajectory(c, 2, 2, 14);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  ModelState st = init_state(tape, c, {0, 0});
  auto r1 = filter_step(bind, c, st, tr.frames[0], {0, 0}, tr.noise[0]);
  CHECK(r1.stats.active_groups == 1);
  CHECK(oracle::row(r1.state.h_s.value(), 1) == Vec(c.d_h, 0.0));
  auto r2 = filter_step(bind, c, r1.state, tr.frames[1], {0, 1}, tr.noise[1]);
  CHECK(r2.stats.active_groups == 2);
  CHECK(r2.state.active == std::vector<uint8_t>{1, 1});
}

TEST_CASE("filter_step: shape and finiteness errors") {
  const ModelConfig c = small_config();
  const ParamTree p = random_params(c, 15);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const ModelState st = init_state(tape, c, {0, 1});
  const StepNoise noise = zero_step_noise(c, 2, 2);
  CHECK_THROWS_AS(filter_step(bind, c, st, Matrix(3, 2), {0, 1}, noise), ShapeError);
  Matrix bad(2, 2);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(filter_step(bind, c, st, bad, {0, 1}, noise), NumericError);
  CHECK_THROWS_AS(rollout(bind, c, st, 3), ContractViolation);
}

TEST_CASE("rollout: zero parameters predict a stationary agent") {
  const ModelConfig c = small_config();
  const auto tr = random_trajectory(c, 3, 4, 16);
  const auto out = run(zero_params(c), c, tr, {0, 1, 0}, 5);
  const Matrix& last = tr.frames.back();
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 5; ++t) {
      CHECK(out.pred.at(i, t).x == last(i, 0));
      CHECK(out.pred.at(i, t).y == last(i, 1));
    }
}

TEST_CASE("rollout: deterministic and stochastic modes") {
  const ModelConfig c = small_config();
  const ParamTree p = random_params(c, 17);
  const auto tr = random_trajectory(c, 3, 4, 18);
  const auto a = run(p, c, tr, {0, 1, 0}, 6), b = run(p, c, tr, {0, 1, 0}, 6);
  CHECK(a.pred == b.pred);
  CHECK(a.pred.agents() == 3);
  CHECK(a.pred.steps() == 6);

  ad::Tape tape;
  ParamBinding bind(tape, p);
  ModelState st = init_state(tape, c, {0, 1, 0});
  st = filter_step(bind, c, st, tr.frames[0], {0, 1, 0}, tr.noise[0]).state;
  CHECK_THROWS_AS(rollout(bind, c, st, 2, {true, nullptr}), ContractViolation);
  Rng r1(5), r2(5);
  const auto s1 = rollout_positions(rollout(bind, c, st, 4, {true, &r1}));
  const auto s2 = rollout_positions(rollout(bind, c, st, 4, {true, &r2}));
  const auto mean = rollout_positions(rollout(bind, c, st, 4));
  CHECK(s1 == s2);
  CHECK_FALSE(s1 == mean);
  CHECK(rollout(bind, c, st, 0).empty());
}

TEST_CASE("variant nesting: zeroed consensus path reduces to vrnn") {
  const ModelConfig iv = small_config(Variant::ihvrnn), hv = small_config(Variant::hvrnn),
                    vr = small_config(Variant::vrnn);
  ParamTree p = random_params(iv, 19);
  const auto tr = random_trajectory(iv, 4, 4, 20);
  const std::vector<int> groups{0, 1, 1, 0};
  const auto base = run(p, vr, tr, groups, 4);
  zero_consensus_path(p, iv);
  for (const ModelConfig& c : {iv, hv}) {
    const auto out = run(p, c, tr, groups, 4);
    for (std::size_t t = 0; t < base.recon.size(); ++t) {
      CHECK(out.recon[t] == doctest::Approx(base.recon[t]).epsilon(1e-12));
      CHECK(out.kl_z[t] == doctest::Approx(base.kl_z[t]).epsilon(1e-12));
    }
    for (int i = 0; i < 4; ++i)
      for (int t = 0; t < 4; ++t) {
        CHECK(std::abs(out.pred.at(i, t).x - base.pred.at(i, t).x) < 1e-12);
        CHECK(std::abs(out.pred.at(i, t).y - base.pred.at(i, t).y) < 1e-12);
      }
  }
}

TEST_CASE("variant nesting: ihvrnn without cross-group weights equals hvrnn") {
  const ModelConfig iv = small_config(Variant::ihvrnn), hv = small_config(Variant::hvrnn);
  ParamTree p = random_params(iv, 21);
  const auto tr = random_trajectory(iv, 4, 4, 22);
  const std::vector<int> groups{0, 1, 1, 0};
  auto wx = p.values("rnn_s.wx");
  const int cols = p.at("rnn_s.wx").cols();
  for (int r = iv.d_x + iv.d_s; r < iv.d_x + 2 * iv.d_s; ++r)
    for (int k = 0; k < cols; ++k) wx[static_cast<std::size_t>(r) * cols + k] = 0.0;
  const auto a = run(p, iv, tr, groups, 4), b = run(p, hv, tr, groups, 4);
  CHECK(a.recon == b.recon);
  CHECK(a.kl_s == b.kl_s);
  CHECK(a.pred == b.pred);
}

TEST_CASE("permutation equivariance over agents and groups") {
  for (Variant v : {Variant::vrnn, Variant::hvrnn, Variant::ihvrnn}) {
    ModelConfig c = small_config(v);
    c.n_groups_max = 3;
    CAPTURE(to_string(v));
    const ParamTree p = random_params(c, 23);
    const int n = 5;
    const auto tr = random_trajectory(c, n, 4, 24);
    const std::vector<int> groups{0, 2, 1, 2, 0};
    const std::vector<int> perm{3, 0, 4, 1, 2};  // new agent i is old agent perm[i]
    const std::vector<int> gperm{2, 0, 1};       // old group g becomes gperm[g]
    Trajectory pt;
    std::vector<int> pgroups(n);
    for (int i = 0; i < n; ++i) pgroups[i] = gperm[groups[perm[i]]];
    for (std::size_t t = 0; t < tr.frames.size(); ++t) {
      Matrix f(n, 2);
      StepNoise noise = tr.noise[t];
      for (int i = 0; i < n; ++i) {
        for (int d = 0; d < 2; ++d) f(i, d) = tr.frames[t](perm[i], d);
        for (int d = 0; d < c.d_z; ++d) noise.z(i, d) = tr.noise[t].z(perm[i], d);
      }
      for (int g = 0; g < 3; ++g)
        for (int d = 0; d < c.d_s; ++d) noise.s(gperm[g], d) = tr.noise[t].s(g, d);
      pt.frames.push_back(f);
      pt.noise.push_back(noise);
    }
    const auto a = run(p, c, tr, groups, 4), b = run(p, c, pt, pgroups, 4);
    // Scalar totals are sums over agents, so only equal up to rounding.
    for (std::size_t t = 0; t < a.recon.size(); ++t) {
      CHECK(b.recon[t] == doctest::Approx(a.recon[t]).epsilon(1e-13));
      CHECK(b.kl_z[t] == doctest::Approx(a.kl_z[t]).epsilon(1e-13));
      CHECK(b.kl_s[t] == doctest::Approx(a.kl_s[t]).epsilon(1e-13));
    }
    for (int i = 0; i < n; ++i) {
      CHECK(oracle::row(b.h_z, i) == oracle::row(a.h_z, perm[i]));
      CHECK(oracle::row(b.h_m, i) == oracle::row(a.h_m, perm[i]));
      for (int t = 0; t < 4; ++t) CHECK(b.pred.at(i, t) == a.pred.at(perm[i], t));
    }
    for (int g = 0; g < 3; ++g) CHECK(oracle::row(b.h_s, gperm[g]) == oracle::row(a.h_s, g));
  }
}
