#pragma once

// The hierarchical variational recurrent predictor and its ablation variants.
//
// Per observed step t, for agents i and groups g:
//   consensus prior      p(s_g)      = head(mlp(h_s[g]))
//   consensus posterior  q(s_g)      = head(mlp(mean_{i in g}[x_i, z_i, h_z[i]] ++ h_s[g]))
//   agent prior          p(z_i)      = head(mlp(h_z[i] ++ h_s[g_i] ++ s[g_i]))
//   agent posterior      q(z_i)      = head(mlp(x_i ++ h_z[i]))
//   decoder              p(dx_i)     = head(mlp(z_i ++ s[g_i] ++ h_z[i] ++ h_s[g_i] ++ h_m[i]))
//   agent recurrence     h_z[i]     <- gru(x_i ++ z_i ++ s[g_i] ++ h_s[g_i], h_z[i])
//   group recurrence     h_s[g]     <- gru(mean_{i in g} x_i ++ s[g] ++ mean_{o != g} s[o], h_s[g])
//   social refinement    h_m         = proj(gat_1(M1, h_z) ++ ... ++ gat_K(MK, h_z))
// dx_i is the displacement x_t - x_{t-1}. Only active groups sample s and
// update h_s. The decoder at t sees h_m from t - 1.
//
// hvrnn drops the cross-group term mean_{o != g} s[o]; vrnn fixes s = 0 and
// h_s = 0 throughout. All variants share one parameter layout.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihvrnn/matrix.hpp"
#include "ihvrnn/nn.hpp"
#include "ihvrnn/params.hpp"
#include "ihvrnn/rng.hpp"
#include "ihvrnn/scene.hpp"
#include "ihvrnn/tape.hpp"

namespace ihvrnn {

enum class Variant { vrnn, hvrnn, ihvrnn };

std::string to_string(Variant v);
// Throws ConfigError for unknown names.
Variant parse_variant(const std::string& name, const std::string& path = "model.variant");

struct ModelConfig {
  Variant variant = Variant::ihvrnn;
  int d_x = 2;
  int d_z = 16;
  int d_s = 16;
  int d_h = 64;
  int n_groups_max = 2;
  int K = 3;
  double d_m = 2.0;  // meters
  bool team_sports_mode = false;
  bool use_gat = true;  // graph attention in the social refinement
  bool use_rm = true;   // scope-changing masks; off means one full mask

  bool uses_consensus() const { return variant != Variant::vrnn; }
  bool uses_cross_group() const { return variant == Variant::ihvrnn; }
  bool uses_social() const { return use_gat || use_rm; }
  // Number of social scopes actually used (1 without the mask ladder).
  int scopes() const { return use_rm ? K : 1; }

  void validate(const std::string& path = "model") const;
  nlohmann::json to_json() const;
  // Unknown keys are ConfigErrors naming `path.key`.
  static ModelConfig from_json(const nlohmann::json& j, const std::string& path = "model");
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

ParamTree init_params(const ModelConfig& config, Rng& rng);

// Zeroes every weight through which a consensus (s or h_s) could reach the
// outputs: the group encoder, group prior and group recurrence, plus the
// input rows that feed s and h_s into the agent prior, decoder and agent
// recurrence. The result behaves exactly like vrnn.
void zero_consensus_path(ParamTree& params, const ModelConfig& config);

struct ModelState {
  ad::Var h_z;     // [n x d_h]
  ad::Var h_s;     // [N_g x d_h]
  ad::Var h_m;     // [n x d_h]
  ad::Var s;       // [N_g x d_s]
  ad::Var z;       // [n x d_z]
  ad::Var x_prev;  // [n x 2]; invalid before the first step
  std::vector<int> group_of;
  std::vector<uint8_t> active;
  double meters_per_unit = 1.0;  // model-space distance -> meters, for masks

  int n_agents() const { return static_cast<int>(group_of.size()); }
  int n_groups() const { return static_cast<int>(active.size()); }
};

ModelState init_state(ad::Tape& tape, const ModelConfig& config, const std::vector<int>& group_of,
                      double meters_per_unit = 1.0);

// Positions in meters. M[k] for k = 1..K; M[K] is all ones.
std::vector<nn::BinaryMask> social_masks(const Matrix& positions_m, const ModelConfig& config);

ad::Var refine_social(ParamBinding& bind, const ModelConfig& config, ad::Var h_z, const std::vector<nn::BinaryMask>& masks);

// Priors / posteriors for all rows at once. Group rows of inactive groups are
// computed but unused.
nn::GaussianVar prior_groups(ParamBinding& bind, const ModelConfig& config, const ModelState& state);
// Single active group; ContractViolation when g is inactive or under vrnn.
nn::GaussianVar prior_group(ParamBinding& bind, const ModelConfig& config, const ModelState& state, int g);
nn::GaussianVar prior_agents(ParamBinding& bind, const ModelConfig& config, const ModelState& state, ad::Var s_agent);
nn::GaussianVar encode_groups(ParamBinding& bind, const ModelConfig& config, const ModelState& state, ad::Var x,
                              const std::vector<std::vector<int>>& members);
nn::GaussianVar encode_agents(ParamBinding& bind, const ModelConfig& config, const ModelState& state, ad::Var x);
nn::GaussianVar decode_agents(ParamBinding& bind, const ModelConfig& config, const ModelState& state, ad::Var z,
                              ad::Var s_agent);

// Rows of per-group table `table` gathered by each agent's group.
ad::Var per_agent(ad::Var table, const std::vector<int>& group_of);

// Advances h_z and h_s (active groups only) with this step's x, s and z.
ModelState update_hidden(ParamBinding& bind, const ModelConfig& config, const ModelState& state, ad::Var x,
                         ad::Var s, ad::Var z);

struct StepNoise {
  Matrix s;  // [N_g x d_s]
  Matrix z;  // [n x d_z]
};

StepNoise draw_step_noise(const ModelConfig& config, int n_agents, int n_groups, Rng& rng);
StepNoise zero_step_noise(const ModelConfig& config, int n_agents, int n_groups);

struct StepStats {
  ad::Var kl_s;   // 1 x 1, summed over active groups
  ad::Var kl_z;   // 1 x 1, summed over agents
  ad::Var recon;  // 1 x 1, summed over agents
  int active_groups = 0;
  nn::GaussianVar decoded;  // displacement distribution
};

struct FilterResult {
  ModelState state;
  StepStats stats;
};

// One teacher-forced step on observed positions x_t (model units) with group
// membership `group_of`. NumericError names the stage producing a non-finite
// value.
FilterResult filter_step(ParamBinding& bind, const ModelConfig& config, const ModelState& state, const Matrix& x_t,
                         const std::vector<int>& group_of, const StepNoise& noise);

struct RolloutOptions {
  bool stochastic = false;  // sample priors instead of taking means
  Rng* rng = nullptr;       // required when stochastic
};

// Free-running prediction of T_pre positions, [n x 2] per step. Membership is
// frozen at the state's last assignment. Differentiable.
std::vector<ad::Var> rollout(ParamBinding& bind, const ModelConfig& config, const ModelState& state, int t_pre,
                             const RolloutOptions& options = {});

// Convenience: rollout values as a TrackArray [n x T_pre].
TrackArray rollout_positions(const std::vector<ad::Var>& steps);

}  // namespace ihvrnn
