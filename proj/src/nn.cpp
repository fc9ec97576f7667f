#include "ihvrnn/nn.hpp"

#include <cmath>

#include "ihvrnn/errors.hpp"

namespace ihvrnn::nn {

void add_mlp(ParamTree& params, const std::string& prefix, const std::vector<int>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw ContractViolation("mlp needs at least input and output sizes");
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const std::string layer = prefix + ".l" + std::to_string(k);
    params.add_glorot(layer + ".w", sizes[k], sizes[k + 1], sizes[k], sizes[k + 1], rng);
    params.add_zeros(layer + ".b", 1, sizes[k + 1]);
  }
}

ad::Var mlp(ParamBinding& bind, const std::string& prefix, ad::Var input) {
  ad::Var h = input;
  for (int k = 0;; ++k) {
    const std::string layer = prefix + ".l" + std::to_string(k);
    if (!bind.params().contains(layer + ".w")) {
      if (k == 0) throw ShapeError("no mlp named " + prefix);
      return h;
    }
    if (k > 0) h = ad::tanh(h);
    h = ad::linear(h, bind.get(layer + ".w"), bind.get(layer + ".b"));
  }
}

void add_gru(ParamTree& params, const std::string& prefix, int input_dim, int hidden_dim, Rng& rng) {
  // Each gate block is initialized with its own fan-out.
  Matrix wx(input_dim, 3 * hidden_dim);
  Matrix uh(hidden_dim, 2 * hidden_dim);
  Matrix uc(hidden_dim, hidden_dim);
  const double lx = std::sqrt(6.0 / static_cast<double>(input_dim + hidden_dim));
  const double lh = std::sqrt(6.0 / static_cast<double>(2 * hidden_dim));
  for (double& v : wx.values()) v = rng.uniform(-lx, lx);
  for (double& v : uh.values()) v = rng.uniform(-lh, lh);
  for (double& v : uc.values()) v = rng.uniform(-lh, lh);
  params.add(prefix + ".wx", std::move(wx));
  params.add(prefix + ".uh", std::move(uh));
  params.add(prefix + ".uc", std::move(uc));
  params.add_zeros(prefix + ".b", 1, 3 * hidden_dim);
}

ad::Var gru_step(ParamBinding& bind, const std::string& prefix, ad::Var input, ad::Var hidden) {
  const int h = hidden.cols();
  ad::Var gx = ad::linear(input, bind.get(prefix + ".wx"), bind.get(prefix + ".b"));
  ad::Var gh = ad::linear(hidden, bind.get(prefix + ".uh"));
  ad::Var reset = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, h), ad::slice_cols(gh, 0, h)));
  ad::Var update = ad::sigmoid(ad::add(ad::slice_cols(gx, h, h), ad::slice_cols(gh, h, h)));
  ad::Var cand = ad::tanh(ad::add(ad::slice_cols(gx, 2 * h, h),
                                  ad::linear(ad::mul(reset, hidden), bind.get(prefix + ".uc"))));
  // (1 - u) * h + u * c
  return ad::add(ad::mul(ad::affine(update, -1.0, 1.0), hidden), ad::mul(update, cand));
}

void add_gaussian_head(ParamTree& params, const std::string& prefix, int in, int out, Rng& rng) {
  params.add_glorot(prefix + ".mean.w", in, out, in, out, rng);
  params.add_zeros(prefix + ".mean.b", 1, out);
  params.add_glorot(prefix + ".scale.w", in, out, in, out, rng);
  params.add_zeros(prefix + ".scale.b", 1, out);
}

GaussianVar gaussian_head(ParamBinding& bind, const std::string& prefix, ad::Var features) {
  ad::Var mean = ad::linear(features, bind.get(prefix + ".mean.w"), bind.get(prefix + ".mean.b"));
  ad::Var raw = ad::linear(features, bind.get(prefix + ".scale.w"), bind.get(prefix + ".scale.b"));
  return {mean, ad::affine(ad::softplus(raw), 1.0, kScaleFloor)};
}

ad::Var sample_reparam(const GaussianVar& g, const Matrix& noise) {
  if (!g.mean.value().same_shape(noise)) throw ShapeError("sample_reparam: noise shape");
  return ad::add(g.mean, ad::mul_constant(g.scale, noise));
}

namespace {

GaussianVar to_var(ad::Tape& tape, const GaussianParams& g) {
  if (g.mean.size() != g.scale.size()) throw ShapeError("gaussian mean/scale size mismatch");
  return {tape.constant(Matrix::row_vector(g.mean)), tape.constant(Matrix::row_vector(g.scale))};
}

}  // namespace

std::vector<double> sample_reparam(const GaussianParams& g, std::span<const double> noise) {
  if (noise.size() != g.mean.size()) throw ShapeError("sample_reparam: noise size");
  ad::Tape tape;
  ad::Var s = sample_reparam(to_var(tape, g), Matrix::row_vector(noise));
  return {s.value().values().begin(), s.value().values().end()};
}

ad::Var kl_diag(const GaussianVar& q, const GaussianVar& p) {
  return ad::kl_diag_rows(q.mean, q.scale, p.mean, p.scale);
}

double kl_diag(const GaussianParams& q, const GaussianParams& p) {
  if (q.mean.size() != p.mean.size()) throw ShapeError("kl_diag: dimension mismatch");
  ad::Tape tape;
  return kl_diag(to_var(tape, q), to_var(tape, p)).value()(0, 0);
}

ad::Var gaussian_nll(ad::Var x, const GaussianVar& g) {
  return ad::gaussian_nll_rows(x, g.mean, g.scale);
}

double gaussian_nll(std::span<const double> x, const GaussianParams& g) {
  if (x.size() != g.mean.size()) throw ShapeError("gaussian_nll: dimension mismatch");
  ad::Tape tape;
  return gaussian_nll(tape.constant(Matrix::row_vector(x)), to_var(tape, g)).value()(0, 0);
}

BinaryMask BinaryMask::identity(int size) {
  BinaryMask m(size, 0);
  for (int i = 0; i < size; ++i) m.set(i, i, 1);
  return m;
}

bool BinaryMask::symmetric() const {
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (at(i, j) != at(j, i)) return false;
  return true;
}

void add_gat(ParamTree& params, const std::string& prefix, int in, int out, Rng& rng) {
  params.add_glorot(prefix + ".w", in, out, in, out, rng);
  params.add_glorot(prefix + ".a_src", out, 1, 2 * out, 1, rng);
  params.add_glorot(prefix + ".a_dst", out, 1, 2 * out, 1, rng);
}

GatOutput gat_layer(ParamBinding& bind, const std::string& prefix, ad::Var nodes, const BinaryMask& mask) {
  const int n = nodes.rows();
  if (mask.n != n) throw ShapeError("gat_layer: mask size does not match node count");
  BinaryMask m = mask;
  for (int i = 0; i < n; ++i) m.set(i, i, 1);
  ad::Var wf = ad::linear(nodes, bind.get(prefix + ".w"));
  ad::Var src = ad::linear(wf, bind.get(prefix + ".a_src"));
  ad::Var dst = ad::linear(wf, bind.get(prefix + ".a_dst"));
  ad::Var scores = ad::leaky_relu(ad::outer_add(src, dst), kLeakySlope);
  ad::Var alpha = ad::masked_softmax_rows(scores, m.bits);
  return {ad::tanh(ad::attend(alpha, wf)), alpha};
}

}  // namespace ihvrnn::nn
