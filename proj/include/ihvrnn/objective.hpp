#pragma once

// Training objective: negative ELBO over the observed steps plus the squared
// displacement error of the free-running prediction.
//
//   recon_nll = sum_t sum_i nll_t,i      / (T_obs * n)
//   kl_z      = sum_t sum_i KL(q_z || p_z) / (T_obs * n)
//   kl_s      = sum_t sum_{active g} KL(q_s || p_s) / (number of active group-steps)
//   pred_l2   = mean over agents and steps of |pred - gt|^2
//   total     = recon_nll + beta_s * kl_s + beta_z * kl_z + pred_l2

#include <vector>

#include "ihvrnn/model.hpp"
#include "ihvrnn/scene.hpp"
#include "ihvrnn/tape.hpp"

namespace ihvrnn {

struct LossBreakdown {
  double recon_nll = 0.0;
  double kl_s = 0.0;
  double kl_z = 0.0;
  double pred_l2 = 0.0;
  double total = 0.0;
  double beta_s = 1.0;
  double beta_z = 1.0;
};

// Normalized 1 x 1 terms on the tape.
struct LossTerms {
  ad::Var recon_nll;
  ad::Var kl_s;
  ad::Var kl_z;
  ad::Var pred_l2;
};

struct GenerationTerms {
  ad::Var recon_nll;
  ad::Var kl_s;
  ad::Var kl_z;
};

// ContractViolation on empty stats.
GenerationTerms generation_loss(const std::vector<StepStats>& stats, int n_agents);

ad::Var prediction_loss(const std::vector<ad::Var>& pred, const TrackArray& gt);
double prediction_loss(const TrackArray& pred, const TrackArray& gt);

ad::Var total_loss(const LossTerms& terms, double beta_s, double beta_z);
LossBreakdown breakdown(const LossTerms& terms, double beta_s, double beta_z);
LossBreakdown total_loss(double recon_nll, double kl_s, double kl_z, double pred_l2, double beta_s, double beta_z);

// KL weight after `completed` optimizer steps: linear 0 -> 1 over the first
// ramp_fraction * total_steps steps, then 1.
double kl_beta(long completed, long total_steps, double ramp_fraction);

}  // namespace ihvrnn
