#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracle.hpp"

#include "ihvrnn/errors.hpp"
#include "ihvrnn/grad_check.hpp"
#include "ihvrnn/nn.hpp"
#include "ihvrnn/tape.hpp"

using namespace ihvrnn;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

oracle::Vec random_vec(int n, Rng& rng) {
  oracle::Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

constexpr double kLn2 = 0.69314718055994530942;

}  // namespace

TEST_CASE("mlp: zero weights give zero output") {
  Rng rng(0);
  ParamTree p;
  nn::add_mlp(p, "m", {3, 5, 2}, rng);
  for (const auto& name : p.names())
    for (double& v : p.values(name)) v = 0.0;
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const Matrix y = nn::mlp(bind, "m", tape.constant(Matrix{{0.3, -2.0, 7.0}})).value();
  CHECK(y == Matrix(1, 2));
}

TEST_CASE("mlp: single identity layer passes the input through") {
  ParamTree p;
  p.add("m.l0.w", Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  p.add_zeros("m.l0.b", 1, 3);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const Matrix x{{0.25, -1.5, 3.0}};
  CHECK(nn::mlp(bind, "m", tape.constant(x)).value() == x);
}

TEST_CASE("mlp: two layers on seed-0 params match plain matrix arithmetic") {
  Rng rng(0);
  ParamTree p;
  nn::add_mlp(p, "m", {4, 6, 3}, rng);
  for (const auto& name : p.names())
    for (double& v : p.values(name)) v = rng.uniform(-1.0, 1.0);
  const oracle::Vec x = random_vec(4, rng);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const Matrix y = nn::mlp(bind, "m", tape.constant(Matrix::row_vector(x))).value();
  CHECK(oracle::max_abs_diff(oracle::row(y, 0), oracle::mlp(p, "m", x)) < 1e-12);
}

TEST_CASE("mlp: input width mismatch is a shape error") {
  Rng rng(0);
  ParamTree p;
  nn::add_mlp(p, "m", {3, 4, 2}, rng);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  CHECK_THROWS_AS(nn::mlp(bind, "m", tape.constant(Matrix(1, 5))), ShapeError);
}

TEST_CASE("gru: saturated update gate keeps the hidden state") {
  Rng rng(1);
  ParamTree p;
  nn::add_gru(p, "g", 3, 4, rng);
  auto b = p.values("g.b");
  for (int j = 0; j < 4; ++j) b[4 + j] = -40.0;
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const Matrix h{{0.5, -0.25, 0.75, 0.1}};
  const Matrix out = nn::gru_step(bind, "g", tape.constant(Matrix{{1.0, -2.0, 0.5}}), tape.constant(h)).value();
  for (int j = 0; j < 4; ++j) CHECK(std::abs(out(0, j) - h(0, j)) < 1e-6);
}

TEST_CASE("gru: zero input, zero hidden and zero weights stay at zero") {
  Rng rng(1);
  ParamTree p;
  nn::add_gru(p, "g", 3, 4, rng);
  for (const auto& name : p.names())
    for (double& v : p.values(name)) v = 0.0;
  ad::Tape tape;
  ParamBinding bind(tape, p);
  CHECK(nn::gru_step(bind, "g", tape.constant(Matrix(1, 3)), tape.constant(Matrix(1, 4))).value() == Matrix(1, 4));
}

TEST_CASE("gru: seed-0 params match an elementwise recomputation") {
  Rng rng(0);
  ParamTree p;
  nn::add_gru(p, "g", 5, 4, rng);
  for (double& v : p.values("g.b")) v = rng.uniform(-0.5, 0.5);
  const oracle::Vec x = random_vec(5, rng), h = random_vec(4, rng);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const Matrix out =
      nn::gru_step(bind, "g", tape.constant(Matrix::row_vector(x)), tape.constant(Matrix::row_vector(h))).value();
  CHECK(oracle::max_abs_diff(oracle::row(out, 0), oracle::gru(p, "g", x, h)) < 1e-12);
}

TEST_CASE("gaussian head: zero params give mean 0 and scale ln 2 + floor") {
  Rng rng(0);
  ParamTree p;
  nn::add_gaussian_head(p, "h", 3, 2, rng);
  for (const auto& name : p.names())
    for (double& v : p.values(name)) v = 0.0;
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const auto g = nn::gaussian_head(bind, "h", tape.constant(Matrix{{1.0, 2.0, 3.0}}));
  for (int d = 0; d < 2; ++d) {
    CHECK(g.mean.value()(0, d) == 0.0);
    CHECK(g.scale.value()(0, d) == doctest::Approx(kLn2 + 1e-4).epsilon(1e-14));
  }
}

TEST_CASE("gaussian head: scale never drops below the floor") {
  Rng rng(7);
  double lowest = 1e300;
  for (int draw = 0; draw < 1000; ++draw) {
    ParamTree p;
    nn::add_gaussian_head(p, "h", 3, 2, rng);
    for (double& v : p.values("h.scale.w")) v = rng.uniform(-50.0, 50.0);
    for (double& v : p.values("h.scale.b")) v = rng.uniform(-50.0, 50.0);
    ad::Tape tape;
    ParamBinding bind(tape, p);
    const auto g = nn::gaussian_head(bind, "h", tape.constant(random_matrix(1, 3, rng, -5.0, 5.0)));
    for (double s : g.scale.value().values()) lowest = std::min(lowest, s);
  }
  CHECK(lowest >= 1e-4);
}

TEST_CASE("gaussian head: mean branch is linear without bias") {
  Rng rng(3);
  ParamTree p;
  nn::add_gaussian_head(p, "h", 4, 3, rng);
  const Matrix f = random_matrix(1, 4, rng);
  Matrix f2 = f;
  for (double& v : f2.values()) v *= 2.5;
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const Matrix m1 = nn::gaussian_head(bind, "h", tape.constant(f)).mean.value();
  const Matrix m2 = nn::gaussian_head(bind, "h", tape.constant(f2)).mean.value();
  for (int d = 0; d < 3; ++d) CHECK(m2(0, d) == doctest::Approx(2.5 * m1(0, d)).epsilon(1e-12));
}

TEST_CASE("sample_reparam: zero noise returns the mean") {
  const nn::GaussianParams g{{0.3, -1.2}, {0.5, 2.0}};
  CHECK(nn::sample_reparam(g, std::vector<double>{0.0, 0.0}) == g.mean);
}

TEST_CASE("sample_reparam: floor-only scale stays at the mean") {
  const nn::GaussianParams g{{0.3, -1.2}, {1e-4, 1e-4}};
  const std::vector<double> noise{2.0, -3.0};
  const auto x = nn::sample_reparam(g, noise);
  const double norm = std::hypot(noise[0], noise[1]);
  CHECK(std::abs(x[0] - g.mean[0]) <= 1e-3 * norm);
  CHECK(std::abs(x[1] - g.mean[1]) <= 1e-3 * norm);
}

TEST_CASE("sample_reparam: sample variance matches scale squared") {
  Rng rng(11);
  const nn::GaussianParams g{{0.5}, {1.7}};
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double e = rng.normal();
    const double x = nn::sample_reparam(g, std::vector<double>{e})[0];
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = (s2 - n * mean * mean) / (n - 1);
  const double target = g.scale[0] * g.scale[0];
  // Standard error of the sample variance of a Gaussian.
  const double se = target * std::sqrt(2.0 / (n - 1));
  CHECK(std::abs(var - target) < 3.0 * se);
}

TEST_CASE("kl_diag: closed-form cases") {
  const nn::GaussianParams a{{0.2, -0.4}, {0.7, 1.3}};
  CHECK(std::abs(nn::kl_diag(a, a)) < 1e-12);
  CHECK(nn::kl_diag(nn::GaussianParams{{0.0}, {1.0}}, nn::GaussianParams{{1.0}, {1.0}}) ==
        doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("kl_diag: non-negative on random pairs and zero only at equality") {
  Rng rng(5);
  for (int k = 0; k < 500; ++k) {
    nn::GaussianParams q, p;
    for (int d = 0; d < 4; ++d) {
      q.mean.push_back(rng.uniform(-3, 3));
      p.mean.push_back(rng.uniform(-3, 3));
      q.scale.push_back(rng.uniform(0.05, 3));
      p.scale.push_back(rng.uniform(0.05, 3));
    }
    CHECK(nn::kl_diag(q, p) > 0.0);
    CHECK(std::abs(nn::kl_diag(q, q)) < 1e-12);
  }
}

TEST_CASE("kl_diag: matches the closed form written out per dimension") {
  Rng rng(6);
  nn::GaussianParams q, p;
  for (int d = 0; d < 4; ++d) {
    q.mean.push_back(rng.uniform(-1, 1));
    p.mean.push_back(rng.uniform(-1, 1));
    q.scale.push_back(rng.uniform(0.3, 2));
    p.scale.push_back(rng.uniform(0.3, 2));
  }
  CHECK(nn::kl_diag(q, p) == doctest::Approx(oracle::kl({q.mean, q.scale}, {p.mean, p.scale})).epsilon(1e-13));
}

TEST_CASE("gaussian_nll: unit scale at the mean equals ln(2 pi) for d = 2") {
  const nn::GaussianParams g{{0.4, -0.1}, {1.0, 1.0}};
  CHECK(nn::gaussian_nll(std::vector<double>{0.4, -0.1}, g) == doctest::Approx(1.8378770664093453).epsilon(1e-14));
}

TEST_CASE("gaussian_nll: minimized at the mean") {
  const nn::GaussianParams g{{0.4, -0.1}, {0.3, 2.0}};
  const double at = nn::gaussian_nll(std::vector<double>{0.4, -0.1}, g);
  for (double dx : {-1e-3, 1e-3})
    for (int d = 0; d < 2; ++d) {
      std::vector<double> x{0.4, -0.1};
      x[d] += dx;
      CHECK(nn::gaussian_nll(x, g) > at);
    }
}

TEST_CASE("gat: identity mask reduces to tanh(W f)") {
  Rng rng(2);
  ParamTree p;
  nn::add_gat(p, "a", 3, 4, rng);
  const Matrix f = random_matrix(3, 3, rng);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const auto out = nn::gat_layer(bind, "a", tape.constant(f), nn::BinaryMask::identity(3));
  for (int i = 0; i < 3; ++i) {
    const auto expect = oracle::map(oracle::affine(oracle::row(f, i), p.at("a.w"), nullptr), oracle::tanh_);
    CHECK(oracle::max_abs_diff(oracle::row(out.output.value(), i), expect) < 1e-15);
    CHECK(out.attention.value()(i, i) == 1.0);
  }
}

TEST_CASE("gat: identical features under a full mask give identical outputs") {
  Rng rng(2);
  ParamTree p;
  nn::add_gat(p, "a", 3, 4, rng);
  Matrix f(4, 3);
  const Matrix row = random_matrix(1, 3, rng);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k) f(i, k) = row(0, k);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const Matrix out = nn::gat_layer(bind, "a", tape.constant(f), nn::BinaryMask(4, 1)).output.value();
  for (int i = 1; i < 4; ++i)
    for (int k = 0; k < 4; ++k) CHECK(out(i, k) == out(0, k));
}

TEST_CASE("gat: n = 3 seed-0 params match a dense recomputation") {
  Rng rng(0);
  ParamTree p;
  nn::add_gat(p, "a", 5, 4, rng);
  const Matrix f = random_matrix(3, 5, rng);
  nn::BinaryMask mask(3, 1);
  mask.set(0, 2, 0);
  mask.set(2, 0, 0);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  const auto out = nn::gat_layer(bind, "a", tape.constant(f), mask);
  std::vector<oracle::Vec> nodes{oracle::row(f, 0), oracle::row(f, 1), oracle::row(f, 2)}, alpha;
  const auto expect = oracle::gat(p, "a", nodes, mask, &alpha);
  for (int i = 0; i < 3; ++i) {
    CHECK(oracle::max_abs_diff(oracle::row(out.output.value(), i), expect[i]) < 1e-12);
    CHECK(oracle::max_abs_diff(oracle::row(out.attention.value(), i), alpha[i]) < 1e-12);
  }
}

TEST_CASE("gat: attention rows sum to one and masked entries are exactly zero") {
  Rng rng(9);
  ParamTree p;
  nn::add_gat(p, "a", 4, 4, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 6;
    nn::BinaryMask mask(n, 0);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const uint8_t b = rng.bernoulli(0.5) ? 1 : 0;
        mask.set(i, j, b);
        mask.set(j, i, b);
      }
    ad::Tape tape;
    ParamBinding bind(tape, p);
    const Matrix a = nn::gat_layer(bind, "a", tape.constant(random_matrix(n, 4, rng, -3, 3)), mask).attention.value();
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        s += a(i, j);
        if (i != j && !mask.at(i, j)) CHECK(a(i, j) == 0.0);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("gat: mask size mismatch is a shape error") {
  Rng rng(0);
  ParamTree p;
  nn::add_gat(p, "a", 2, 2, rng);
  ad::Tape tape;
  ParamBinding bind(tape, p);
  CHECK_THROWS_AS(nn::gat_layer(bind, "a", tape.constant(Matrix(3, 2)), nn::BinaryMask(2, 1)), ShapeError);
}

TEST_CASE("grad_check: quadratic") {
  Rng rng(0);
  ParamTree p;
  p.add("w", random_matrix(3, 4, rng));
  const nn::ScalarFunction f = [](ad::Tape&, ParamBinding& b) { return ad::sum(ad::square(b.get("w"))); };
  nn::GradCheckOptions opt;
  opt.fraction = 1.0;
  CHECK(nn::grad_check_detailed(f, p, opt).max_rel_error < 1e-9);
}

TEST_CASE("grad_check: nll of a gaussian head") {
  Rng rng(4);
  ParamTree p;
  nn::add_gaussian_head(p, "h", 3, 2, rng);
  const Matrix f = random_matrix(2, 3, rng), x = random_matrix(2, 2, rng);
  const nn::ScalarFunction fn = [&](ad::Tape& t, ParamBinding& b) {
    return ad::sum(nn::gaussian_nll(t.constant(x), nn::gaussian_head(b, "h", t.constant(f))));
  };
  nn::GradCheckOptions opt;
  opt.fraction = 1.0;
  CHECK(nn::grad_check_detailed(fn, p, opt).max_rel_error < 1e-6);
}

TEST_CASE("grad_check: non-finite function value is a numeric error") {
  ParamTree p;
  p.add("w", Matrix{{-1.0}});
  const nn::ScalarFunction f = [](ad::Tape&, ParamBinding& b) { return ad::sum(ad::log(b.get("w"))); };
  CHECK_THROWS_AS(nn::grad_check(f, p), NumericError);
}

TEST_CASE("grad_check: every differentiable op") {
  Rng rng(21);
  ParamTree p;
  p.add("a", random_matrix(3, 4, rng, 0.2, 1.5));
  p.add("b", random_matrix(3, 4, rng, 0.2, 1.5));
  p.add("w", random_matrix(4, 5, rng));
  p.add("bias", random_matrix(1, 5, rng));
  p.add("col", random_matrix(3, 1, rng));
  p.add("row", random_matrix(4, 1, rng));
  p.add("col3", random_matrix(3, 1, rng));
  const Matrix c = random_matrix(3, 4, rng);
  auto weighted = [&](ad::Var v) {
    Matrix wm(v.rows(), v.cols());
    for (std::size_t k = 0; k < wm.size(); ++k) wm.values()[k] = std::sin(1.0 + 0.37 * static_cast<double>(k));
    return ad::sum(ad::mul_constant(v, wm));
  };
  const std::vector<std::pair<std::string, nn::ScalarFunction>> cases = {
      {"add", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::add(b.get("a"), b.get("b"))); }},
      {"sub", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::sub(b.get("a"), b.get("b"))); }},
      {"mul", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::mul(b.get("a"), b.get("b"))); }},
      {"div", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::div(b.get("a"), b.get("b"))); }},
      {"affine", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::affine(b.get("a"), -1.7, 0.3)); }},
      {"add_constant", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::add_constant(b.get("a"), c)); }},
      {"mul_constant", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::mul_constant(b.get("a"), c)); }},
      {"tanh", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::tanh(b.get("a"))); }},
      {"sigmoid", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::sigmoid(b.get("a"))); }},
      {"softplus", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::softplus(b.get("a"))); }},
      {"exp", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::exp(b.get("a"))); }},
      {"log", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::log(b.get("a"))); }},
      {"square", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::square(b.get("a"))); }},
      {"leaky_relu",
       [&](ad::Tape&, ParamBinding& b) { return weighted(ad::leaky_relu(ad::affine(b.get("a"), 1.0, -0.8), 0.2)); }},
      {"linear", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::slice_cols(ad::linear(b.get("a"), b.get("w"), b.get("bias")), 0, 4)); }},
      {"matmul", [&](ad::Tape&, ParamBinding& b) { return weighted(ad::slice_cols(ad::matmul(b.get("a"), b.get("w")), 1, 4)); }},
      {"concat/slice",
       [&](ad::Tape&, ParamBinding& b) {
         const ad::Var parts[] = {b.get("a"), b.get("b")};
         return weighted(ad::slice_cols(ad::concat_cols(parts), 2, 4));
       }},
      {"gather_rows",
       [&](ad::Tape&, ParamBinding& b) {
         const int idx[] = {2, 0, 2};
         return weighted(ad::gather_rows(b.get("a"), idx));
       }},
      {"pool_rows",
       [&](ad::Tape&, ParamBinding& b) {
         const ad::Var pooled = ad::pool_rows(b.get("a"), {{0, 2}, {1}, {0, 1, 2}}, true);
         return weighted(pooled);
       }},
      {"select_rows",
       [&](ad::Tape&, ParamBinding& b) { return weighted(ad::select_rows({1, 0, 1}, b.get("a"), b.get("b"))); }},
      {"row_sum",
       [&](ad::Tape&, ParamBinding& b) { return ad::sum(ad::mul(ad::row_sum(b.get("a")), b.get("col"))); }},
      {"outer_add",
       [&](ad::Tape&, ParamBinding& b) {
         return weighted(ad::outer_add(b.get("col"), b.get("row")));
       }},
      {"masked_softmax/attend",
       [&](ad::Tape&, ParamBinding& b) {
         const std::vector<uint8_t> mask{1, 1, 0, 1, 1, 1, 0, 1, 1};
         const ad::Var e = ad::outer_add(b.get("col"), b.get("col3"));
         return weighted(ad::attend(ad::masked_softmax_rows(e, mask), b.get("a")));
       }},
      {"kl_diag_rows",
       [&](ad::Tape&, ParamBinding& b) {
         return ad::sum(ad::kl_diag_rows(ad::slice_cols(b.get("a"), 0, 2), ad::slice_cols(b.get("a"), 2, 2),
                                         ad::slice_cols(b.get("b"), 0, 2),
                                         ad::slice_cols(b.get("b"), 2, 2)));
       }},
      {"gaussian_nll_rows",
       [&](ad::Tape&, ParamBinding& b) {
         return ad::sum(ad::gaussian_nll_rows(ad::slice_cols(b.get("a"), 0, 2), ad::slice_cols(b.get("a"), 2, 2),
                                              ad::slice_cols(b.get("b"), 0, 2)));
       }},
  };
  nn::GradCheckOptions opt;
  opt.fraction = 1.0;
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    CHECK(nn::grad_check_detailed(f, p, opt).max_rel_error < 1e-4);
  }
}

TEST_CASE("grad_check: gru and gat") {
  Rng rng(8);
  ParamTree p;
  nn::add_gru(p, "g", 3, 4, rng);
  nn::add_gat(p, "a", 4, 3, rng);
  const Matrix x = random_matrix(3, 3, rng), h = random_matrix(3, 4, rng);
  nn::BinaryMask mask(3, 1);
  mask.set(0, 1, 0);
  mask.set(1, 0, 0);
  const nn::ScalarFunction f = [&](ad::Tape& t, ParamBinding& b) {
    const ad::Var hn = nn::gru_step(b, "g", t.constant(x), t.constant(h));
    return ad::sum(ad::square(nn::gat_layer(b, "a", hn, mask).output));
  };
  nn::GradCheckOptions opt;
  opt.fraction = 1.0;
  CHECK(nn::grad_check_detailed(f, p, opt).max_rel_error < 1e-4);
}

TEST_CASE("kl_diag: agrees with a Monte Carlo estimate") {
  Rng rng(13);
  for (int pair = 0; pair < 20; ++pair) {
    nn::GaussianParams q, p;
    for (int d = 0; d < 2; ++d) {
      q.mean.push_back(rng.uniform(-1, 1));
      p.mean.push_back(rng.uniform(-1, 1));
      q.scale.push_back(rng.uniform(0.5, 1.5));
      p.scale.push_back(rng.uniform(0.5, 1.5));
    }
    const int n = 1000000;
    double acc = 0.0;
    std::vector<double> x(2);
    for (int k = 0; k < n; ++k) {
      for (int d = 0; d < 2; ++d) x[d] = q.mean[d] + q.scale[d] * rng.normal();
      acc += nn::gaussian_nll(x, p) - nn::gaussian_nll(x, q);
    }
    const double exact = nn::kl_diag(q, p);
    CAPTURE(pair);
    CHECK(std::abs(acc / n - exact) < 0.01 * exact);
  }
}

TEST_CASE("gaussian_nll: density integrates to one in 1-D") {
  const nn::GaussianParams g{{0.3}, {0.8}};
  const double lo = -10.0, hi = 10.0;
  const int n = 20000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    s += w * std::exp(-nn::gaussian_nll(std::vector<double>{x}, g));
  }
  CHECK(std::abs(s * h - 1.0) < 1e-3);
}
