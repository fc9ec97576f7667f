#include "ihvrnn/model.hpp"

#include <cmath>

#include "ihvrnn/errors.hpp"
#include "ihvrnn/json_fields.hpp"

namespace ihvrnn {

using ad::Var;
using nn::GaussianVar;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::vrnn: return "vrnn";
    case Variant::hvrnn: return "hvrnn";
    case Variant::ihvrnn: return "ihvrnn";
  }
  return "?";
}

Variant parse_variant(const std::string& name, const std::string& path) {
  if (name == "vrnn") return Variant::vrnn;
  if (name == "hvrnn") return Variant::hvrnn;
  if (name == "ihvrnn") return Variant::ihvrnn;
  throw ConfigError(path, "unknown variant '" + name + "' (expected vrnn, hvrnn or ihvrnn)");
}

void ModelConfig::validate(const std::string& path) const {
  auto fail = [&](const std::string& key, const std::string& what) { throw ConfigError(path + "." + key, what); };
  if (d_x != 2) fail("d_x", "must be 2");
  if (d_z < 1) fail("d_z", "must be >= 1");
  if (d_s < 1) fail("d_s", "must be >= 1");
  if (d_h < 1) fail("d_h", "must be >= 1");
  if (n_groups_max < 1) fail("n_groups_max", "must be >= 1");
  if (K < 1) fail("K", "must be >= 1");
  if (!(d_m > 0.0) || !std::isfinite(d_m)) fail("d_m", "must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", to_string(variant)}, {"d_x", d_x},
          {"d_z", d_z},                    {"d_s", d_s},
          {"d_h", d_h},                    {"n_groups_max", n_groups_max},
          {"K", K},                        {"d_m", d_m},
          {"team_sports_mode", team_sports_mode}, {"use_gat", use_gat},
          {"use_rm", use_rm}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j, const std::string& path) {
  ModelConfig c;
  JsonFields f(j, path);
  std::string variant = to_string(c.variant);
  f.read("variant", variant);
  c.variant = parse_variant(variant, f.path_of("variant"));
  f.read("d_x", c.d_x);
  f.read("d_z", c.d_z);
  f.read("d_s", c.d_s);
  f.read("d_h", c.d_h);
  f.read("n_groups_max", c.n_groups_max);
  f.read("K", c.K);
  f.read("d_m", c.d_m);
  f.read("team_sports_mode", c.team_sports_mode);
  f.read("use_gat", c.use_gat);
  f.read("use_rm", c.use_rm);
  f.finish();
  c.validate(path);
  return c;
}

ParamTree init_params(const ModelConfig& c, Rng& rng) {
  c.validate();
  ParamTree p;
  const int h = c.d_h;
  auto block = [&](const std::string& name, int in, int out) {
    Rng r = rng.derive(name);
    nn::add_mlp(p, name, {in, h, h}, r);
    nn::add_gaussian_head(p, name + ".head", h, out, r);
  };
  block("prior_s", h, c.d_s);
  block("enc_s", c.d_x + c.d_z + h + h, c.d_s);
  block("prior_z", h + h + c.d_s, c.d_z);
  block("enc_z", c.d_x + h, c.d_z);
  block("dec", c.d_z + c.d_s + 3 * h, c.d_x);
  {
    Rng r = rng.derive("rnn_z");
    nn::add_gru(p, "rnn_z", c.d_x + c.d_z + c.d_s + h, h, r);
  }
  {
    Rng r = rng.derive("rnn_s");
    nn::add_gru(p, "rnn_s", c.d_x + 2 * c.d_s, h, r);
  }
  if (c.uses_social()) {
    Rng r = rng.derive("social");
    if (c.use_gat)
      for (int k = 0; k < c.scopes(); ++k) nn::add_gat(p, "social.gat" + std::to_string(k), h, h, r);
    const int in = c.scopes() * h;
    p.add_glorot("social.proj.w", in, h, in, h, r);
    p.add_zeros("social.proj.b", 1, h);
  }
  return p;
}

void zero_consensus_path(ParamTree& params, const ModelConfig& c) {
  const int h = c.d_h;
  for (const std::string& name : params.names()) {
    if (name.starts_with("prior_s.") || name.starts_with("enc_s.") || name.starts_with("rnn_s.")) {
      for (double& v : params.values(name)) v = 0.0;
    }
  }
  auto zero_rows = [&](const std::string& name, int first, int count) {
    const Matrix& m = params.at(name);
    auto values = params.values(name);
    for (int r = first; r < first + count; ++r)
      for (int col = 0; col < m.cols(); ++col) values[static_cast<std::size_t>(r) * m.cols() + col] = 0.0;
  };
  // prior_z input: h_z | h_s | s
  zero_rows("prior_z.l0.w", h, h + c.d_s);
  // dec input: z | s | h_z | h_s | h_m
  zero_rows("dec.l0.w", c.d_z, c.d_s);
  zero_rows("dec.l0.w", c.d_z + c.d_s + h, h);
  // rnn_z input: x | z | s | h_s
  zero_rows("rnn_z.wx", c.d_x + c.d_z, c.d_s + h);
}

ModelState init_state(ad::Tape& tape, const ModelConfig& c, const std::vector<int>& group_of, double meters_per_unit) {
  const int n = static_cast<int>(group_of.size()), G = c.n_groups_max;
  if (n < 1) throw ContractViolation("init_state: no agents");
  if (!(meters_per_unit > 0.0)) throw ContractViolation("init_state: meters_per_unit must be positive");
  ModelState st;
  st.h_z = tape.constant(Matrix(n, c.d_h));
  st.h_s = tape.constant(Matrix(G, c.d_h));
  st.h_m = tape.constant(Matrix(n, c.d_h));
  st.s = tape.constant(Matrix(G, c.d_s));
  st.z = tape.constant(Matrix(n, c.d_z));
  st.group_of = group_of;
  st.active.assign(G, 0);
  for (int g : group_of) {
    if (g < 0 || g >= G) throw ContractViolation("init_state: group index out of range");
    st.active[g] = 1;
  }
  st.meters_per_unit = meters_per_unit;
  return st;
}

std::vector<nn::BinaryMask> social_masks(const Matrix& positions_m, const ModelConfig& c) {
  const int n = positions_m.rows();
  if (positions_m.cols() != 2) throw ShapeError("social_masks: positions must be [n x 2]");
  if (!positions_m.all_finite()) throw NumericError("social_masks: non-finite positions");
  std::vector<nn::BinaryMask> masks(c.K, nn::BinaryMask(n, 1));
  if (c.team_sports_mode) return masks;
  for (int k = 1; k < c.K; ++k) {
    nn::BinaryMask& m = masks[k - 1];
    const double radius = k * c.d_m;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double d = std::hypot(positions_m(i, 0) - positions_m(j, 0), positions_m(i, 1) - positions_m(j, 1));
        m.set(i, j, d <= radius ? 1 : 0);
      }
  }
  return masks;
}

Var refine_social(ParamBinding& bind, const ModelConfig& c, Var h_z, const std::vector<nn::BinaryMask>& masks) {
  ad::Tape& tape = bind.tape();
  const int n = h_z.rows();
  if (!c.uses_social()) return tape.constant(Matrix(n, c.d_h));
  if (static_cast<int>(masks.size()) != c.K) throw ContractViolation("refine_social: expected K masks");
  std::vector<Var> outs;
  for (int k = 0; k < c.scopes(); ++k) {
    const nn::BinaryMask& mask = c.use_rm ? masks[k] : masks.back();
    if (mask.n != n) throw ShapeError("refine_social: mask size");
    if (c.use_gat) {
      outs.push_back(nn::gat_layer(bind, "social.gat" + std::to_string(k), h_z, mask).output);
    } else {
      // Uniform average over the scope's neighbours.
      Var alpha = ad::masked_softmax_rows(tape.constant(Matrix(n, n)), mask.bits);
      outs.push_back(ad::attend(alpha, h_z));
    }
  }
  Var merged = outs.size() == 1 ? outs[0] : ad::concat_cols(outs);
  return ad::linear(merged, bind.get("social.proj.w"), bind.get("social.proj.b"));
}

Var per_agent(Var table, const std::vector<int>& group_of) { return ad::gather_rows(table, group_of); }

namespace {

GaussianVar head_block(ParamBinding& bind, const std::string& name, Var input) {
  return nn::gaussian_head(bind, name + ".head", nn::mlp(bind, name, input));
}

Var cat(std::initializer_list<Var> parts) {
  std::vector<Var> v(parts);
  return ad::concat_cols(v);
}

void check_finite(const Var& v, const char* stage) {
  if (!v.value().all_finite()) throw NumericError(std::string("filter_step: non-finite values in ") + stage);
}

void check_finite(const GaussianVar& g, const char* stage) {
  check_finite(g.mean, stage);
  check_finite(g.scale, stage);
}

std::vector<std::vector<int>> members_of(const std::vector<int>& group_of, int n_groups) {
  std::vector<std::vector<int>> m(n_groups);
  for (std::size_t i = 0; i < group_of.size(); ++i) m[group_of[i]].push_back(static_cast<int>(i));
  return m;
}

Matrix active_column(const std::vector<uint8_t>& active) {
  Matrix m(static_cast<int>(active.size()), 1);
  for (std::size_t g = 0; g < active.size(); ++g) m(static_cast<int>(g), 0) = active[g] ? 1.0 : 0.0;
  return m;
}

ModelState with_membership(const ModelState& state, const std::vector<int>& group_of) {
  if (static_cast<int>(group_of.size()) != state.n_agents()) throw ShapeError("membership size differs from agent count");
  ModelState cur = state;
  cur.group_of = group_of;
  cur.active.assign(state.n_groups(), 0);
  for (int g : group_of) {
    if (g < 0 || g >= state.n_groups()) throw ContractViolation("group index out of range");
    cur.active[g] = 1;
  }
  return cur;
}

Matrix to_meters(const Matrix& x, double meters_per_unit) {
  Matrix m = x;
  for (double& v : m.values()) v *= meters_per_unit;
  return m;
}

}  // namespace

GaussianVar prior_groups(ParamBinding& bind, const ModelConfig&, const ModelState& state) {
  return head_block(bind, "prior_s", state.h_s);
}

GaussianVar prior_group(ParamBinding& bind, const ModelConfig& c, const ModelState& state, int g) {
  if (!c.uses_consensus()) throw ContractViolation("prior_group: consensus disabled under vrnn");
  if (g < 0 || g >= state.n_groups() || !state.active[g]) throw ContractViolation("prior_group: group is not active");
  const int row[1] = {g};
  return head_block(bind, "prior_s", ad::gather_rows(state.h_s, row));
}

GaussianVar prior_agents(ParamBinding& bind, const ModelConfig&, const ModelState& state, Var s_agent) {
  return head_block(bind, "prior_z", cat({state.h_z, per_agent(state.h_s, state.group_of), s_agent}));
}

GaussianVar encode_groups(ParamBinding& bind, const ModelConfig&, const ModelState& state, Var x,
                          const std::vector<std::vector<int>>& members) {
  Var pooled = ad::pool_rows(cat({x, state.z, state.h_z}), members, true);
  return head_block(bind, "enc_s", cat({pooled, state.h_s}));
}

GaussianVar encode_agents(ParamBinding& bind, const ModelConfig&, const ModelState& state, Var x) {
  return head_block(bind, "enc_z", cat({x, state.h_z}));
}

GaussianVar decode_agents(ParamBinding& bind, const ModelConfig&, const ModelState& state, Var z, Var s_agent) {
  return head_block(bind, "dec", cat({z, s_agent, state.h_z, per_agent(state.h_s, state.group_of), state.h_m}));
}

ModelState update_hidden(ParamBinding& bind, const ModelConfig& c, const ModelState& state, Var x, Var s, Var z) {
  ad::Tape& tape = bind.tape();
  ModelState next = state;
  Var s_agent = per_agent(s, state.group_of);
  Var hs_agent = per_agent(state.h_s, state.group_of);
  next.h_z = nn::gru_step(bind, "rnn_z", cat({x, z, s_agent, hs_agent}), state.h_z);
  if (c.uses_consensus()) {
    const int G = state.n_groups();
    Var pooled_x = ad::pool_rows(x, members_of(state.group_of, G), true);
    Var others;
    if (c.uses_cross_group()) {
      Matrix avg(G, G);
      for (int g = 0; g < G; ++g) {
        if (!state.active[g]) continue;
        int count = 0;
        for (int o = 0; o < G; ++o) count += (o != g && state.active[o]) ? 1 : 0;
        for (int o = 0; o < G; ++o)
          if (o != g && state.active[o]) avg(g, o) = 1.0 / count;
      }
      others = ad::matmul(tape.constant(std::move(avg)), s);
    } else {
      others = tape.constant(Matrix(G, c.d_s));
    }
    Var h_s_new = nn::gru_step(bind, "rnn_s", cat({pooled_x, s, others}), state.h_s);
    next.h_s = ad::select_rows(state.active, h_s_new, state.h_s);
  }
  return next;
}

StepNoise draw_step_noise(const ModelConfig& c, int n_agents, int n_groups, Rng& rng) {
  StepNoise noise{Matrix(n_groups, c.d_s), Matrix(n_agents, c.d_z)};
  for (double& v : noise.s.values()) v = rng.normal();
  for (double& v : noise.z.values()) v = rng.normal();
  return noise;
}

StepNoise zero_step_noise(const ModelConfig& c, int n_agents, int n_groups) {
  return {Matrix(n_groups, c.d_s), Matrix(n_agents, c.d_z)};
}

FilterResult filter_step(ParamBinding& bind, const ModelConfig& c, const ModelState& state, const Matrix& x_t,
                         const std::vector<int>& group_of, const StepNoise& noise) {
  ad::Tape& tape = bind.tape();
  const int n = state.n_agents(), G = state.n_groups();
  if (x_t.rows() != n || x_t.cols() != c.d_x) throw ShapeError("filter_step: x_t must be [n x 2]");
  if (!x_t.all_finite()) throw NumericError("filter_step: non-finite observation");
  ModelState cur = with_membership(state, group_of);
  Var x = tape.constant(x_t);
  Var x_prev = state.x_prev.valid() ? state.x_prev : x;

  StepStats st;
  // (1) group consensus
  Var s = cur.s;
  if (c.uses_consensus()) {
    GaussianVar q_s = encode_groups(bind, c, cur, x, members_of(group_of, G));
    GaussianVar p_s = prior_groups(bind, c, cur);
    check_finite(q_s, "group posterior");
    check_finite(p_s, "group prior");
    s = ad::select_rows(cur.active, nn::sample_reparam(q_s, noise.s), cur.s);
    st.kl_s = ad::sum(ad::mul_constant(nn::kl_diag(q_s, p_s), active_column(cur.active)));
    for (uint8_t a : cur.active) st.active_groups += a ? 1 : 0;
  } else {
    st.kl_s = tape.constant(Matrix(1, 1));
  }
  // (2) individual latents
  Var s_agent = per_agent(s, group_of);
  GaussianVar p_z = prior_agents(bind, c, cur, s_agent);
  GaussianVar q_z = encode_agents(bind, c, cur, x);
  check_finite(p_z, "agent prior");
  check_finite(q_z, "agent posterior");
  Var z = nn::sample_reparam(q_z, noise.z);
  st.kl_z = ad::sum(nn::kl_diag(q_z, p_z));
  // (3) reconstruction of the displacement
  st.decoded = decode_agents(bind, c, cur, z, s_agent);
  check_finite(st.decoded, "decoder");
  st.recon = ad::sum(nn::gaussian_nll(ad::sub(x, x_prev), st.decoded));
  check_finite(st.recon, "reconstruction");
  // (4) recurrences, then (5) social refinement on the new h_z
  ModelState next = update_hidden(bind, c, cur, x, s, z);
  check_finite(next.h_z, "agent recurrence");
  check_finite(next.h_s, "group recurrence");
  next.s = s;
  next.z = z;
  next.x_prev = x;
  next.h_m = refine_social(bind, c, next.h_z, social_masks(to_meters(x_t, state.meters_per_unit), c));
  check_finite(next.h_m, "social refinement");
  return {std::move(next), st};
}

std::vector<Var> rollout(ParamBinding& bind, const ModelConfig& c, const ModelState& state, int t_pre,
                         const RolloutOptions& options) {
  if (!state.x_prev.valid()) throw ContractViolation("rollout: state has no observed step");
  if (t_pre < 0) throw ContractViolation("rollout: negative horizon");
  if (options.stochastic && options.rng == nullptr) throw ContractViolation("rollout: stochastic mode needs an rng");
  auto draw = [&](const GaussianVar& g) {
    if (!options.stochastic) return g.mean;
    Matrix eps(g.mean.rows(), g.mean.cols());
    for (double& v : eps.values()) v = options.rng->normal();
    return nn::sample_reparam(g, eps);
  };
  std::vector<Var> out;
  out.reserve(t_pre);
  ModelState cur = state;
  for (int t = 0; t < t_pre; ++t) {
    Var s = cur.s;
    if (c.uses_consensus()) s = ad::select_rows(cur.active, draw(prior_groups(bind, c, cur)), cur.s);
    Var s_agent = per_agent(s, cur.group_of);
    Var z = draw(prior_agents(bind, c, cur, s_agent));
    Var x = ad::add(cur.x_prev, draw(decode_agents(bind, c, cur, z, s_agent)));
    if (!x.value().all_finite()) throw NumericError("rollout: non-finite prediction at step " + std::to_string(t));
    ModelState next = update_hidden(bind, c, cur, x, s, z);
    next.s = s;
    next.z = z;
    next.x_prev = x;
    next.h_m = refine_social(bind, c, next.h_z, social_masks(to_meters(x.value(), cur.meters_per_unit), c));
    cur = std::move(next);
    out.push_back(x);
  }
  return out;
}

TrackArray rollout_positions(const std::vector<Var>& steps) {
  if (steps.empty()) return {};
  const int n = steps.front().rows();
  TrackArray out(n, static_cast<int>(steps.size()));
  for (std::size_t t = 0; t < steps.size(); ++t) out.set_frame(static_cast<int>(t), steps[t].value());
  return out;
}

}  // namespace ihvrnn
