#include <cmath>

#include "doctest.h"

#include "ihvrnn/errors.hpp"
#include "ihvrnn/objective.hpp"
#include "ihvrnn/train.hpp"

using namespace ihvrnn;

namespace {

StepStats constant_stats(ad::Tape& tape, double recon, double kl_s, double kl_z, int active_groups) {
  StepStats s;
  s.recon = tape.constant(Matrix(1, 1, recon));
  s.kl_s = tape.constant(Matrix(1, 1, kl_s));
  s.kl_z = tape.constant(Matrix(1, 1, kl_z));
  s.active_groups = active_groups;
  return s;
}

TrackArray filled(int n, int t, Vec2 v) {
  TrackArray a(n, t);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < t; ++k) a.at(i, k) = v;
  return a;
}

SegmentWindow tiny_window() {
  SegmentWindow w;
  w.scene_id = "tiny";
  w.obs = TrackArray(2, 3);
  w.pred = TrackArray(2, 2);
  for (int t = 0; t < 3; ++t) {
    w.obs.at(0, t) = {0.1 * t, 0.05 * t};
    w.obs.at(1, t) = {1.0 - 0.2 * t, 0.3};
  }
  for (int t = 0; t < 2; ++t) {
    w.pred.at(0, t) = {0.1 * (t + 3), 0.05 * (t + 3)};
    w.pred.at(1, t) = {1.0 - 0.2 * (t + 3), 0.3};
  }
  w.agent_ids = {1, 2};
  w.groups = GroupAssignment::from_membership(2, std::vector<std::vector<int>>(5, {0, 1}));
  return w;
}

}  // namespace

TEST_CASE("generation_loss: normalizes per agent-step and per active group-step") {
  ad::Tape tape;
  const std::vector<StepStats> stats{constant_stats(tape, 4.0, 1.0, 2.0, 2), constant_stats(tape, 8.0, 2.0, 6.0, 1)};
  const auto g = generation_loss(stats, 2);
  CHECK(g.recon_nll.scalar() == doctest::Approx(12.0 / 4.0));
  CHECK(g.kl_z.scalar() == doctest::Approx(8.0 / 4.0));
  CHECK(g.kl_s.scalar() == doctest::Approx(3.0 / 3.0));
  CHECK_THROWS_AS(generation_loss({}, 2), ContractViolation);
}

TEST_CASE("generation_loss: single-agent closed-form KL") {
  ad::Tape tape;
  const nn::GaussianVar q{tape.constant(Matrix{{0.0}}), tape.constant(Matrix{{1.0}})};
  const nn::GaussianVar p{tape.constant(Matrix{{1.0}}), tape.constant(Matrix{{1.0}})};
  StepStats s = constant_stats(tape, 0.0, 0.0, 0.0, 0);
  s.kl_z = ad::sum(nn::kl_diag(q, p));
  CHECK(generation_loss({s}, 1).kl_z.scalar() == doctest::Approx(0.5).epsilon(1e-15));
  // No active groups: kl_s stays at its raw (zero) value.
  CHECK(generation_loss({s}, 1).kl_s.scalar() == 0.0);
}

TEST_CASE("prediction_loss: examples") {
  const TrackArray gt = filled(3, 4, {2.0, -1.0});
  CHECK(prediction_loss(gt, gt) == 0.0);
  CHECK(prediction_loss(filled(3, 4, {3.0, -1.0}), gt) == doctest::Approx(1.0));
  CHECK(prediction_loss(filled(3, 4, {5.0, 3.0}), gt) == doctest::Approx(25.0));
  CHECK_THROWS_AS(prediction_loss(filled(3, 3, {0, 0}), gt), ShapeError);
  CHECK_THROWS_AS(prediction_loss(TrackArray(), TrackArray()), ShapeError);
}

TEST_CASE("prediction_loss: symmetric and zero only at equality") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    TrackArray a(3, 5), b(3, 5);
    for (int i = 0; i < 3; ++i)
      for (int t = 0; t < 5; ++t) {
        a.at(i, t) = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        b.at(i, t) = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
      }
    CHECK(prediction_loss(a, b) == prediction_loss(b, a));
    CHECK(prediction_loss(a, b) > 0.0);
  }
}

TEST_CASE("prediction_loss: tape version agrees with the plain version") {
  Rng rng(2);
  TrackArray pred(2, 3), gt(2, 3);
  for (int i = 0; i < 2; ++i)
    for (int t = 0; t < 3; ++t) {
      pred.at(i, t) = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
      gt.at(i, t) = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    }
  ad::Tape tape;
  std::vector<ad::Var> steps;
  for (int t = 0; t < 3; ++t) steps.push_back(tape.constant(pred.frame(t)));
  CHECK(prediction_loss(steps, gt).scalar() == doctest::Approx(prediction_loss(pred, gt)).epsilon(1e-15));
  steps.pop_back();
  CHECK_THROWS_AS(prediction_loss(steps, gt), ShapeError);
}

TEST_CASE("total_loss: invariant, zero betas and linearity in each beta") {
  const auto b0 = total_loss(1.5, 0.25, 0.75, 2.0, 0.0, 0.0);
  CHECK(b0.total == doctest::Approx(3.5));
  const auto b1 = total_loss(1.5, 0.25, 0.75, 2.0, 0.3, 0.4);
  CHECK(b1.total == doctest::Approx(1.5 + 0.3 * 0.25 + 0.4 * 0.75 + 2.0));
  const auto b2 = total_loss(1.5, 0.25, 0.75, 2.0, 0.3, 0.8);
  CHECK(b2.total - b1.total == doctest::Approx(0.4 * 0.75));
  const auto b3 = total_loss(1.5, 0.25, 0.75, 2.0, 0.6, 0.4);
  CHECK(b3.total - b1.total == doctest::Approx(0.3 * 0.25));
  CHECK_THROWS_AS(total_loss(1, 1, 1, 1, -0.1, 0.0), ContractViolation);

  ad::Tape tape;
  const LossTerms terms{tape.constant(Matrix(1, 1, 1.5)), tape.constant(Matrix(1, 1, 0.25)),
                        tape.constant(Matrix(1, 1, 0.75)), tape.constant(Matrix(1, 1, 2.0))};
  CHECK(total_loss(terms, 0.3, 0.4).scalar() == doctest::Approx(b1.total));
  CHECK(breakdown(terms, 0.3, 0.4).total == doctest::Approx(b1.total));
}

TEST_CASE("kl_beta: linear ramp then one") {
  CHECK(kl_beta(0, 100, 0.2) == 0.0);
  CHECK(kl_beta(10, 100, 0.2) == doctest::Approx(0.5));
  CHECK(kl_beta(20, 100, 0.2) == 1.0);
  CHECK(kl_beta(90, 100, 0.2) == 1.0);
  CHECK(kl_beta(0, 100, 0.0) == 1.0);
}

TEST_CASE("window_loss: KL terms non-negative and gradients match finite differences") {
  ModelConfig c;
  c.d_h = 4;
  c.d_z = 2;
  c.d_s = 2;
  c.K = 2;
  const SegmentWindow w = tiny_window();
  Rng init(3);
  ParamTree p = init_params(c, init);
  for (const auto& name : p.names())
    for (double& v : p.values(name)) v = init.uniform(-0.4, 0.4);
  auto loss_at = [&](const ParamTree& q) {
    Rng noise(9);
    return window_loss(q, c, w, 0.7, &noise, false).loss.total;
  };
  Rng noise(9);
  const WindowResult r = window_loss(p, c, w, 0.7, &noise, true);
  CHECK(r.loss.kl_s >= 0.0);
  CHECK(r.loss.kl_z >= 0.0);
  CHECK(r.loss.total == doctest::Approx(loss_at(p)).epsilon(1e-15));
  REQUIRE(r.grads.same_layout(p));
  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.total_size(); k += 7) {
    ParamTree hi = p, lo = p;
    hi.coord(k) += eps;
    lo.coord(k) -= eps;
    const double numeric = (loss_at(hi) - loss_at(lo)) / (2 * eps);
    worst = std::max(worst, std::abs(numeric - r.grads.coord(k)) / std::max(1.0, std::abs(numeric)));
  }
  CHECK(worst < 1e-4);
}
