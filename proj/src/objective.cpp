#include "ihvrnn/objective.hpp"

#include <algorithm>

#include "ihvrnn/errors.hpp"

namespace ihvrnn {

using ad::Var;

GenerationTerms generation_loss(const std::vector<StepStats>& stats, int n_agents) {
  if (stats.empty()) throw ContractViolation("generation_loss: no step statistics");
  if (n_agents < 1) throw ContractViolation("generation_loss: no agents");
  Var recon = stats[0].recon, kl_z = stats[0].kl_z, kl_s = stats[0].kl_s;
  long group_steps = stats[0].active_groups;
  for (std::size_t t = 1; t < stats.size(); ++t) {
    recon = ad::add(recon, stats[t].recon);
    kl_z = ad::add(kl_z, stats[t].kl_z);
    kl_s = ad::add(kl_s, stats[t].kl_s);
    group_steps += stats[t].active_groups;
  }
  const double per_agent_step = 1.0 / (static_cast<double>(stats.size()) * n_agents);
  return {ad::scale(recon, per_agent_step), group_steps > 0 ? ad::scale(kl_s, 1.0 / group_steps) : kl_s,
          ad::scale(kl_z, per_agent_step)};
}

Var prediction_loss(const std::vector<Var>& pred, const TrackArray& gt) {
  if (pred.empty() || static_cast<int>(pred.size()) != gt.steps()) throw ShapeError("prediction_loss: horizon mismatch");
  ad::Tape& tape = pred.front().tape();
  Var acc;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const Matrix target = gt.frame(static_cast<int>(t));
    if (!pred[t].value().same_shape(target)) throw ShapeError("prediction_loss: agent count mismatch");
    Var se = ad::sum(ad::square(ad::sub(pred[t], tape.constant(target))));
    acc = acc.valid() ? ad::add(acc, se) : se;
  }
  return ad::scale(acc, 1.0 / (static_cast<double>(gt.agents()) * gt.steps()));
}

double prediction_loss(const TrackArray& pred, const TrackArray& gt) {
  if (pred.agents() != gt.agents() || pred.steps() != gt.steps()) throw ShapeError("prediction_loss: shape mismatch");
  if (pred.steps() == 0 || pred.agents() == 0) throw ShapeError("prediction_loss: empty arrays");
  double acc = 0.0;
  for (int i = 0; i < pred.agents(); ++i)
    for (int t = 0; t < pred.steps(); ++t) {
      const double dx = pred.at(i, t).x - gt.at(i, t).x, dy = pred.at(i, t).y - gt.at(i, t).y;
      acc += dx * dx + dy * dy;
    }
  return acc / (static_cast<double>(pred.agents()) * pred.steps());
}

Var total_loss(const LossTerms& t, double beta_s, double beta_z) {
  if (beta_s < 0.0 || beta_z < 0.0) throw ContractViolation("total_loss: betas must be >= 0");
  return ad::add(ad::add(ad::add(t.recon_nll, ad::scale(t.kl_s, beta_s)), ad::scale(t.kl_z, beta_z)), t.pred_l2);
}

LossBreakdown total_loss(double recon_nll, double kl_s, double kl_z, double pred_l2, double beta_s, double beta_z) {
  if (beta_s < 0.0 || beta_z < 0.0) throw ContractViolation("total_loss: betas must be >= 0");
  LossBreakdown b{recon_nll, kl_s, kl_z, pred_l2, 0.0, beta_s, beta_z};
  b.total = recon_nll + beta_s * kl_s + beta_z * kl_z + pred_l2;
  return b;
}

LossBreakdown breakdown(const LossTerms& t, double beta_s, double beta_z) {
  return total_loss(t.recon_nll.scalar(), t.kl_s.scalar(), t.kl_z.scalar(), t.pred_l2.scalar(), beta_s, beta_z);
}

double kl_beta(long completed, long total_steps, double ramp_fraction) {
  const double ramp = ramp_fraction * static_cast<double>(total_steps);
  if (!(ramp > 0.0)) return 1.0;
  return std::min(1.0, static_cast<double>(completed) / ramp);
}

}  // namespace ihvrnn
