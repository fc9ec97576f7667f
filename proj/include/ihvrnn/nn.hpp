#pragma once

// Differentiable building blocks: feed-forward maps, the gated recurrent cell,
// diagonal Gaussian heads, reparameterized sampling, closed-form KL / NLL and a
// masked single-head graph-attention layer.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ihvrnn/matrix.hpp"
#include "ihvrnn/params.hpp"
#include "ihvrnn/rng.hpp"
#include "ihvrnn/tape.hpp"

namespace ihvrnn::nn {

inline constexpr double kScaleFloor = 1e-4;
inline constexpr double kLeakySlope = 0.2;

// Diagonal Gaussian as plain values: mean and standard deviation per dim.
struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> scale;
};

// Row-batched diagonal Gaussian on a tape; one distribution per row.
struct GaussianVar {
  ad::Var mean;
  ad::Var scale;
};

// ---- feed-forward ----------------------------------------------------------

// sizes = {in, h1, ..., out}; entries `<prefix>.l<k>.w` [in x out] and `.b`.
void add_mlp(ParamTree& params, const std::string& prefix, const std::vector<int>& sizes, Rng& rng);
// Affine maps with tanh between them; the last map has no nonlinearity.
ad::Var mlp(ParamBinding& bind, const std::string& prefix, ad::Var input);

// ---- gated recurrent cell --------------------------------------------------

// `<prefix>.wx` [in x 3h] (reset | update | candidate), `.uh` [h x 2h],
// `.uc` [h x h], `.b` [1 x 3h].
void add_gru(ParamTree& params, const std::string& prefix, int input_dim, int hidden_dim, Rng& rng);
// r = sig(x Wr + h Ur + br), u = sig(x Wu + h Uu + bu),
// c = tanh(x Wc + (r * h) Uc + bc), h' = (1 - u) * h + u * c.
ad::Var gru_step(ParamBinding& bind, const std::string& prefix, ad::Var input, ad::Var hidden);

// ---- Gaussian heads --------------------------------------------------------

// `<prefix>.mean.{w,b}` and `<prefix>.scale.{w,b}`.
void add_gaussian_head(ParamTree& params, const std::string& prefix, int in, int out, Rng& rng);
// mean = affine(f), scale = softplus(affine(f)) + 1e-4.
GaussianVar gaussian_head(ParamBinding& bind, const std::string& prefix, ad::Var features);

// mean + scale * noise; noise has the distribution's shape.
ad::Var sample_reparam(const GaussianVar& g, const Matrix& noise);
std::vector<double> sample_reparam(const GaussianParams& g, std::span<const double> noise);

// KL(q || p) per row, [n x 1].
ad::Var kl_diag(const GaussianVar& q, const GaussianVar& p);
double kl_diag(const GaussianParams& q, const GaussianParams& p);

// -log N(x | mean, diag(scale^2)) per row, [n x 1].
ad::Var gaussian_nll(ad::Var x, const GaussianVar& g);
double gaussian_nll(std::span<const double> x, const GaussianParams& g);

// ---- graph attention -------------------------------------------------------

// Square 0/1 adjacency with row-major bits.
struct BinaryMask {
  int n = 0;
  std::vector<uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int size, uint8_t fill) : n(size), bits(static_cast<std::size_t>(size) * size, fill) {}
  static BinaryMask identity(int size);

  uint8_t at(int i, int j) const { return bits[static_cast<std::size_t>(i) * n + j]; }
  void set(int i, int j, uint8_t v) { bits[static_cast<std::size_t>(i) * n + j] = v; }
  bool symmetric() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// `<prefix>.w` [in x out], `<prefix>.a_src` [out x 1], `<prefix>.a_dst` [out x 1].
void add_gat(ParamTree& params, const std::string& prefix, int in, int out, Rng& rng);

struct GatOutput {
  ad::Var output;     // [n x out]
  ad::Var attention;  // [n x n], rows sum to 1 over unmasked entries
};

// e_ij = leaky_relu(a_src . W f_i + a_dst . W f_j) where mask_ij = 1,
// alpha = row softmax, output_i = tanh(sum_j alpha_ij W f_j).
// Self-edges are added to the mask when absent.
GatOutput gat_layer(ParamBinding& bind, const std::string& prefix, ad::Var nodes, const BinaryMask& mask);

}  // namespace ihvrnn::nn
