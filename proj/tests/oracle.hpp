#pragma once

// Straight-line reference arithmetic on plain vectors. Nothing here touches the
// tape; tests compare the library against these loops.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ihvrnn/nn.hpp"
#include "ihvrnn/params.hpp"

namespace oracle {

using Vec = std::vector<double>;
using ihvrnn::Matrix;
using ihvrnn::ParamTree;

inline Vec affine(const Vec& x, const Matrix& w, const Matrix* b) {
  Vec y(w.cols(), 0.0);
  for (int o = 0; o < w.cols(); ++o) {
    double acc = b ? (*b)(0, o) : 0.0;
    for (int k = 0; k < w.rows(); ++k) acc += x[k] * w(k, o);
    y[o] = acc;
  }
  return y;
}

inline Vec map(const Vec& x, double (*f)(double)) {
  Vec y = x;
  for (double& v : y) v = f(v);
  return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
inline double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
inline double tanh_(double v) { return std::tanh(v); }

inline Vec cat(std::initializer_list<Vec> parts) {
  Vec out;
  for (const Vec& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Vec mlp(const ParamTree& p, const std::string& prefix, Vec x) {
  for (int k = 0;; ++k) {
    const std::string l = prefix + ".l" + std::to_string(k);
    if (!p.contains(l + ".w")) return x;
    if (k > 0) x = map(x, tanh_);
    x = affine(x, p.at(l + ".w"), &p.at(l + ".b"));
  }
}

struct Gauss {
  Vec mean;
  Vec scale;
};

inline Gauss head(const ParamTree& p, const std::string& prefix, const Vec& f) {
  Gauss g;
  g.mean = affine(f, p.at(prefix + ".mean.w"), &p.at(prefix + ".mean.b"));
  g.scale = affine(f, p.at(prefix + ".scale.w"), &p.at(prefix + ".scale.b"));
  for (double& v : g.scale) v = softplus(v) + 1e-4;
  return g;
}

inline Gauss block(const ParamTree& p, const std::string& name, const Vec& in) { return head(p, name + ".head", mlp(p, name, in)); }

inline Vec gru(const ParamTree& p, const std::string& prefix, const Vec& x, const Vec& h) {
  const int d = static_cast<int>(h.size());
  const Matrix& wx = p.at(prefix + ".wx");
  const Matrix& uh = p.at(prefix + ".uh");
  const Matrix& uc = p.at(prefix + ".uc");
  const Matrix& b = p.at(prefix + ".b");
  Vec out(d);
  Vec rh(d);
  Vec u(d);
  for (int j = 0; j < d; ++j) {
    double ar = b(0, j), au = b(0, d + j);
    for (std::size_t k = 0; k < x.size(); ++k) {
      ar += x[k] * wx(static_cast<int>(k), j);
      au += x[k] * wx(static_cast<int>(k), d + j);
    }
    for (int k = 0; k < d; ++k) {
      ar += h[k] * uh(k, j);
      au += h[k] * uh(k, d + j);
    }
    rh[j] = sigmoid(ar) * h[j];
    u[j] = sigmoid(au);
  }
  for (int j = 0; j < d; ++j) {
    double ac = b(0, 2 * d + j);
    for (std::size_t k = 0; k < x.size(); ++k) ac += x[k] * wx(static_cast<int>(k), 2 * d + j);
    for (int k = 0; k < d; ++k) ac += rh[k] * uc(k, j);
    out[j] = (1.0 - u[j]) * h[j] + u[j] * std::tanh(ac);
  }
  return out;
}

inline double kl(const Gauss& q, const Gauss& p) {
  double s = 0.0;
  for (std::size_t d = 0; d < q.mean.size(); ++d) {
    const double dm = q.mean[d] - p.mean[d];
    s += std::log(p.scale[d] / q.scale[d]) + (q.scale[d] * q.scale[d] + dm * dm) / (2.0 * p.scale[d] * p.scale[d]) - 0.5;
  }
  return s;
}

inline double nll(const Vec& x, const Gauss& g) {
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double r = (x[d] - g.mean[d]) / g.scale[d];
    s += 0.5 * std::log(2.0 * std::numbers::pi) + std::log(g.scale[d]) + 0.5 * r * r;
  }
  return s;
}

// Rows of `nodes` in, rows out; attention written to `alpha` when given.
inline std::vector<Vec> gat(const ParamTree& p, const std::string& prefix, const std::vector<Vec>& nodes,
                            const ihvrnn::nn::BinaryMask& mask, std::vector<Vec>* alpha = nullptr) {
  const int n = static_cast<int>(nodes.size());
  const Matrix& w = p.at(prefix + ".w");
  const Matrix& as = p.at(prefix + ".a_src");
  const Matrix& ad = p.at(prefix + ".a_dst");
  std::vector<Vec> wf(n);
  for (int i = 0; i < n; ++i) wf[i] = affine(nodes[i], w, nullptr);
  Vec src(n, 0.0), dst(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < w.cols(); ++k) {
      src[i] += wf[i][k] * as(k, 0);
      dst[i] += wf[i][k] * ad(k, 0);
    }
  std::vector<Vec> out(n, Vec(w.cols(), 0.0));
  if (alpha) alpha->assign(n, Vec(n, 0.0));
  for (int i = 0; i < n; ++i) {
    Vec e(n, 0.0);
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      if (!(mask.at(i, j) || i == j)) continue;
      const double v = src[i] + dst[j];
      e[j] = v > 0 ? v : 0.2 * v;
      mx = std::max(mx, e[j]);
    }
    double z = 0.0;
    Vec a(n, 0.0);
    for (int j = 0; j < n; ++j) {
      if (!(mask.at(i, j) || i == j)) continue;
      a[j] = std::exp(e[j] - mx);
      z += a[j];
    }
    for (int j = 0; j < n; ++j) a[j] /= z;
    for (int k = 0; k < w.cols(); ++k) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += a[j] * wf[j][k];
      out[i][k] = std::tanh(acc);
    }
    if (alpha) (*alpha)[i] = a;
  }
  return out;
}

inline Vec row(const Matrix& m, int r) { return Vec(m.row(r).begin(), m.row(r).end()); }

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace oracle
