#include "ihvrnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ihvrnn/errors.hpp"

namespace ihvrnn::ad {

const Matrix& Var::value() const {
  if (!tape_) throw ContractViolation("use of an unbound Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar() on a non 1x1 Var");
  return v(0, 0);
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Matrix Tape::grad_of(Var v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward root must be 1x1");
  for (auto& n : nodes_) {
    if (n.has_grad) n.grad.fill(0.0);
  }
  grad(root.id())(0, 0) = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, id);
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

bool needs(const Var& v) { return v.tape().requires_grad(v.id()); }

// Unary elementwise op given f(x) and df/dx expressed through (x, y).
template <class F, class D>
Var unary(Var a, F f, D dfdx) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) y.data()[i] = f(x.data()[i]);
  const int ia = a.id();
  return a.tape().record(std::move(y), needs(a), [ia, dfdx](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Matrix& xv = t.value(ia);
    const Matrix& yv = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    const std::size_t m = g.size();
    for (std::size_t i = 0; i < m; ++i) ga.data()[i] += g.data()[i] * dfdx(xv.data()[i], yv.data()[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Matrix y = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += bv.data()[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), needs(a) || needs(b), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (int id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Matrix& gi = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi.data()[i] += g.data()[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Matrix y = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] -= bv.data()[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), needs(a) || needs(b), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
    }
    if (t.requires_grad(ib)) {
      Matrix& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Matrix y = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= bv.data()[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), needs(a) || needs(b), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      const Matrix& bv = t.value(ib);
      Matrix& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * bv.data()[i];
    }
    if (t.requires_grad(ib)) {
      const Matrix& av = t.value(ia);
      Matrix& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * av.data()[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  Matrix y = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] /= bv.data()[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), needs(a) || needs(b), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] / bv.data()[i];
    }
    if (t.requires_grad(ib)) {
      const Matrix& yv = t.value(self);
      Matrix& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i)
        gb.data()[i] -= g.data()[i] * yv.data()[i] / bv.data()[i];
    }
  });
}

Var affine(Var a, double alpha, double beta) {
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = alpha * y.data()[i] + beta;
  const int ia = a.id();
  return a.tape().record(std::move(y), needs(a), [ia, alpha](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += alpha * g.data()[i];
  });
}

Var add_constant(Var a, const Matrix& c) {
  if (!a.value().same_shape(c)) throw ShapeError("add_constant: shape mismatch");
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += c.data()[i];
  const int ia = a.id();
  return a.tape().record(std::move(y), needs(a), [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
  });
}

Var mul_constant(Var a, const Matrix& c) {
  if (!a.value().same_shape(c)) throw ShapeError("mul_constant: shape mismatch");
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= c.data()[i];
  const int ia = a.id();
  return a.tape().record(std::move(y), needs(a), [ia, c](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * c.data()[i];
  });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var linear(Var x, Var w, Var b) {
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  const int n = xv.rows(), in = xv.cols(), out = wv.cols();
  if (wv.rows() != in) {
    throw ShapeError("linear: input width " + std::to_string(in) + " vs weight rows " +
                     std::to_string(wv.rows()));
  }
  if (b.valid() && (b.rows() != 1 || b.cols() != out)) throw ShapeError("linear: bias shape");
  Matrix y(n, out);
  for (int i = 0; i < n; ++i) {
    double* __restrict yi = y.row(i).data();
    if (b.valid()) {
      const double* bv = b.value().data();
      for (int o = 0; o < out; ++o) yi[o] = bv[o];
    }
    const double* xi = xv.row(i).data();
    for (int k = 0; k < in; ++k) {
      const double a = xi[k];
      const double* __restrict wk = wv.row(k).data();
      for (int o = 0; o < out; ++o) yi[o] += a * wk[o];
    }
  }
  const int ix = x.id(), iw = w.id(), ib = b.valid() ? b.id() : -1;
  const bool rg = needs(x) || needs(w) || (b.valid() && needs(b));
  return x.tape().record(std::move(y), rg, [ix, iw, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = t.value(ix);
    const Matrix& wv = t.value(iw);
    const int n = xv.rows(), in = xv.cols(), out = wv.cols();
    if (t.requires_grad(ix)) {
      Matrix& gx = t.grad(ix);
      for (int i = 0; i < n; ++i) {
        const double* gi = g.row(i).data();
        double* gxi = gx.row(i).data();
        for (int k = 0; k < in; ++k) {
          const double* wk = wv.row(k).data();
          double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
          int o = 0;
          for (; o + 4 <= out; o += 4) {
            a0 += gi[o] * wk[o];
            a1 += gi[o + 1] * wk[o + 1];
            a2 += gi[o + 2] * wk[o + 2];
            a3 += gi[o + 3] * wk[o + 3];
          }
          for (; o < out; ++o) a0 += gi[o] * wk[o];
          gxi[k] += (a0 + a1) + (a2 + a3);
        }
      }
    }
    if (t.requires_grad(iw)) {
      Matrix& gw = t.grad(iw);
      for (int i = 0; i < n; ++i) {
        const double* xi = xv.row(i).data();
        const double* __restrict gi = g.row(i).data();
        for (int k = 0; k < in; ++k) {
          const double a = xi[k];
          if (a == 0.0) continue;
          double* __restrict gwk = gw.row(k).data();
          for (int o = 0; o < out; ++o) gwk[o] += a * gi[o];
        }
      }
    }
    if (ib >= 0 && t.requires_grad(ib)) {
      Matrix& gb = t.grad(ib);
      for (int i = 0; i < n; ++i) {
        const double* gi = g.row(i).data();
        for (int o = 0; o < out; ++o) gb.data()[o] += gi[o];
      }
    }
  });
}

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimension mismatch");
  const int n = av.rows(), k_dim = av.cols(), m = bv.cols();
  Matrix y(n, m);
  for (int i = 0; i < n; ++i) {
    double* __restrict yi = y.row(i).data();
    for (int k = 0; k < k_dim; ++k) {
      const double s = av(i, k);
      const double* __restrict bk = bv.row(k).data();
      for (int j = 0; j < m; ++j) yi[j] += s * bk[j];
    }
  }
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), needs(a) || needs(b), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    const int n = av.rows(), k_dim = av.cols(), m = bv.cols();
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad(ia);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < k_dim; ++k) {
          double acc = 0.0;
          for (int j = 0; j < m; ++j) acc += g(i, j) * bv(k, j);
          ga(i, k) += acc;
        }
    }
    if (t.requires_grad(ib)) {
      Matrix& gb = t.grad(ib);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < k_dim; ++k) {
          const double s = av(i, k);
          for (int j = 0; j < m; ++j) gb(k, j) += s * g(i, j);
        }
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const int n = parts[0].rows();
  int total = 0;
  bool rg = false;
  std::vector<int> ids, widths;
  for (const Var& p : parts) {
    if (p.rows() != n) throw ShapeError("concat_cols: row count mismatch");
    total += p.cols();
    rg = rg || needs(p);
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix y(n, total);
  int offset = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (int i = 0; i < n; ++i) std::copy(pv.row(i).begin(), pv.row(i).end(), y.row(i).begin() + offset);
    offset += pv.cols();
  }
  return parts[0].tape().record(std::move(y), rg, [ids, widths](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    int offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (t.requires_grad(ids[p])) {
        Matrix& gp = t.grad(ids[p]);
        for (int i = 0; i < g.rows(); ++i)
          for (int c = 0; c < widths[p]; ++c) gp(i, c) += g(i, offset + c);
      }
      offset += widths[p];
    }
  });
}

Var slice_cols(Var a, int first, int count) {
  const Matrix& av = a.value();
  if (first < 0 || count < 0 || first + count > av.cols()) throw ShapeError("slice_cols: out of range");
  Matrix y(av.rows(), count);
  for (int i = 0; i < av.rows(); ++i)
    for (int c = 0; c < count; ++c) y(i, c) = av(i, first + c);
  const int ia = a.id();
  return a.tape().record(std::move(y), needs(a), [ia, first, count](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (int i = 0; i < g.rows(); ++i)
      for (int c = 0; c < count; ++c) ga(i, first + c) += g(i, c);
  });
}

Var gather_rows(Var a, std::span<const int> index) {
  const Matrix& av = a.value();
  Matrix y(static_cast<int>(index.size()), av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy(av.row(index[r]).begin(), av.row(index[r]).end(), y.row(static_cast<int>(r)).begin());
  }
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return a.tape().record(std::move(y), needs(a), [ia, idx](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < g.cols(); ++c) ga(idx[r], c) += g(static_cast<int>(r), c);
  });
}

Var pool_rows(Var a, const std::vector<std::vector<int>>& groups, bool mean) {
  const Matrix& av = a.value();
  Matrix y(static_cast<int>(groups.size()), av.cols());
  std::vector<double> terms;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    if (members.empty()) continue;
    for (int c = 0; c < av.cols(); ++c) {
      terms.clear();
      for (int i : members) {
        if (i < 0 || i >= av.rows()) throw ShapeError("pool_rows: member index out of range");
        terms.push_back(av(i, c));
      }
      const double s = order_free_sum(terms);
      y(static_cast<int>(g), c) = mean ? s / static_cast<double>(members.size()) : s;
    }
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), needs(a), [ia, groups, mean](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& members = groups[gi];
      if (members.empty()) continue;
      const double w = mean ? 1.0 / static_cast<double>(members.size()) : 1.0;
      for (int i : members)
        for (int c = 0; c < g.cols(); ++c) ga(i, c) += w * g(static_cast<int>(gi), c);
    }
  });
}

Var select_rows(const std::vector<uint8_t>& take_first, Var a, Var b) {
  require_same_shape(a, b, "select_rows");
  if (static_cast<int>(take_first.size()) != a.rows()) throw ShapeError("select_rows: flag count");
  Matrix y = b.value();
  const Matrix& av = a.value();
  for (int r = 0; r < y.rows(); ++r)
    if (take_first[r]) std::copy(av.row(r).begin(), av.row(r).end(), y.row(r).begin());
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), needs(a) || needs(b), [ia, ib, take_first](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (int r = 0; r < g.rows(); ++r) {
      const int target = take_first[r] ? ia : ib;
      if (!t.requires_grad(target)) continue;
      Matrix& gt = t.grad(target);
      for (int c = 0; c < g.cols(); ++c) gt(r, c) += g(r, c);
    }
  });
}

Var sum(Var a) {
  const Matrix& av = a.value();
  double acc = 0.0;
  for (double v : av.values()) acc += v;
  const int ia = a.id();
  return a.tape().record(Matrix(1, 1, acc), needs(a), [ia](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    Matrix& ga = t.grad(ia);
    for (double& v : ga.values()) v += g;
  });
}

Var row_sum(Var a) {
  const Matrix& av = a.value();
  Matrix y(av.rows(), 1);
  for (int i = 0; i < av.rows(); ++i) {
    double acc = 0.0;
    for (double v : av.row(i)) acc += v;
    y(i, 0) = acc;
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), needs(a), [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (int i = 0; i < ga.rows(); ++i)
      for (int c = 0; c < ga.cols(); ++c) ga(i, c) += g(i, 0);
  });
}

Var outer_add(Var u, Var v) {
  const Matrix& uv = u.value();
  const Matrix& vv = v.value();
  if (uv.cols() != 1 || vv.cols() != 1) throw ShapeError("outer_add expects column vectors");
  Matrix y(uv.rows(), vv.rows());
  for (int i = 0; i < uv.rows(); ++i)
    for (int j = 0; j < vv.rows(); ++j) y(i, j) = uv(i, 0) + vv(j, 0);
  const int iu = u.id(), iv = v.id();
  return u.tape().record(std::move(y), needs(u) || needs(v), [iu, iv](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(iu)) {
      Matrix& gu = t.grad(iu);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) gu(i, 0) += g(i, j);
    }
    if (t.requires_grad(iv)) {
      Matrix& gv = t.grad(iv);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) gv(j, 0) += g(i, j);
    }
  });
}

Var masked_softmax_rows(Var e, std::span<const uint8_t> mask) {
  const Matrix& ev = e.value();
  if (mask.size() != ev.size()) throw ShapeError("masked_softmax_rows: mask size");
  Matrix y(ev.rows(), ev.cols());
  std::vector<double> terms;
  for (int i = 0; i < ev.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int j = 0; j < ev.cols(); ++j) {
      if (mask[static_cast<std::size_t>(i) * ev.cols() + j]) {
        mx = std::max(mx, ev(i, j));
        any = true;
      }
    }
    if (!any) throw ContractViolation("masked_softmax_rows: row " + std::to_string(i) + " fully masked");
    terms.clear();
    for (int j = 0; j < ev.cols(); ++j) {
      if (mask[static_cast<std::size_t>(i) * ev.cols() + j]) {
        y(i, j) = std::exp(ev(i, j) - mx);
        terms.push_back(y(i, j));
      }
    }
    const double denom = order_free_sum(terms);
    for (int j = 0; j < ev.cols(); ++j) y(i, j) /= denom;
  }
  const int ie = e.id();
  return e.tape().record(std::move(y), needs(e), [ie](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& yv = t.value(self);
    Matrix& ge = t.grad(ie);
    for (int i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (int j = 0; j < g.cols(); ++j) dot += yv(i, j) * g(i, j);
      for (int j = 0; j < g.cols(); ++j) ge(i, j) += yv(i, j) * (g(i, j) - dot);
    }
  });
}

Var attend(Var alpha, Var v) {
  const Matrix& av = alpha.value();
  const Matrix& vv = v.value();
  if (av.cols() != vv.rows()) throw ShapeError("attend: inner dimension mismatch");
  Matrix y(av.rows(), vv.cols());
  std::vector<double> terms;
  std::vector<int> nz;
  for (int i = 0; i < av.rows(); ++i) {
    nz.clear();
    for (int j = 0; j < av.cols(); ++j)
      if (av(i, j) != 0.0) nz.push_back(j);
    for (int c = 0; c < vv.cols(); ++c) {
      terms.clear();
      for (int j : nz) terms.push_back(av(i, j) * vv(j, c));
      y(i, c) = order_free_sum(terms);
    }
  }
  const int ia = alpha.id(), iv = v.id();
  return alpha.tape().record(std::move(y), needs(alpha) || needs(v), [ia, iv](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(ia);
    const Matrix& vv = t.value(iv);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad(ia);
      for (int i = 0; i < av.rows(); ++i)
        for (int j = 0; j < av.cols(); ++j) {
          double acc = 0.0;
          for (int c = 0; c < vv.cols(); ++c) acc += g(i, c) * vv(j, c);
          ga(i, j) += acc;
        }
    }
    if (t.requires_grad(iv)) {
      Matrix& gv = t.grad(iv);
      for (int i = 0; i < av.rows(); ++i)
        for (int j = 0; j < av.cols(); ++j) {
          const double a = av(i, j);
          if (a == 0.0) continue;
          for (int c = 0; c < vv.cols(); ++c) gv(j, c) += a * g(i, c);
        }
    }
  });
}

Var kl_diag_rows(Var q_mean, Var q_scale, Var p_mean, Var p_scale) {
  require_same_shape(q_mean, q_scale, "kl_diag_rows");
  require_same_shape(q_mean, p_mean, "kl_diag_rows");
  require_same_shape(q_mean, p_scale, "kl_diag_rows");
  const Matrix& qm = q_mean.value();
  const Matrix& qs = q_scale.value();
  const Matrix& pm = p_mean.value();
  const Matrix& ps = p_scale.value();
  Matrix y(qm.rows(), 1);
  for (int i = 0; i < qm.rows(); ++i) {
    double acc = 0.0;
    for (int d = 0; d < qm.cols(); ++d) {
      const double diff = qm(i, d) - pm(i, d);
      const double q_var = qs(i, d) * qs(i, d);
      const double p_var = ps(i, d) * ps(i, d);
      const double numer = q_var + diff * diff;
      acc += std::log(ps(i, d) / qs(i, d)) + numer / (2.0 * p_var) - 0.5;
    }
    y(i, 0) = acc;
  }
  const int iqm = q_mean.id(), iqs = q_scale.id(), ipm = p_mean.id(), ips = p_scale.id();
  const bool rg = needs(q_mean) || needs(q_scale) || needs(p_mean) || needs(p_scale);
  return q_mean.tape().record(std::move(y), rg, [iqm, iqs, ipm, ips](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& qm = t.value(iqm);
    const Matrix& qs = t.value(iqs);
    const Matrix& pm = t.value(ipm);
    const Matrix& ps = t.value(ips);
    Matrix* gqm = t.requires_grad(iqm) ? &t.grad(iqm) : nullptr;
    Matrix* gqs = t.requires_grad(iqs) ? &t.grad(iqs) : nullptr;
    Matrix* gpm = t.requires_grad(ipm) ? &t.grad(ipm) : nullptr;
    Matrix* gps = t.requires_grad(ips) ? &t.grad(ips) : nullptr;
    for (int i = 0; i < qm.rows(); ++i) {
      const double gi = g(i, 0);
      for (int d = 0; d < qm.cols(); ++d) {
        const double diff = qm(i, d) - pm(i, d);
        const double p_var = ps(i, d) * ps(i, d);
        if (gqm) (*gqm)(i, d) += gi * diff / p_var;
        if (gpm) (*gpm)(i, d) -= gi * diff / p_var;
        if (gqs) (*gqs)(i, d) += gi * (qs(i, d) / p_var - 1.0 / qs(i, d));
        if (gps) {
          const double numer = qs(i, d) * qs(i, d) + diff * diff;
          (*gps)(i, d) += gi * (1.0 / ps(i, d) - numer / (p_var * ps(i, d)));
        }
      }
    }
  });
}

Var gaussian_nll_rows(Var x, Var mean, Var scale) {
  require_same_shape(x, mean, "gaussian_nll_rows");
  require_same_shape(x, scale, "gaussian_nll_rows");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Matrix& xv = x.value();
  const Matrix& mv = mean.value();
  const Matrix& sv = scale.value();
  Matrix y(xv.rows(), 1);
  for (int i = 0; i < xv.rows(); ++i) {
    double acc = 0.0;
    for (int d = 0; d < xv.cols(); ++d) {
      const double diff = xv(i, d) - mv(i, d);
      acc += half_log_2pi + std::log(sv(i, d)) + diff * diff / (2.0 * sv(i, d) * sv(i, d));
    }
    y(i, 0) = acc;
  }
  const int ix = x.id(), im = mean.id(), is = scale.id();
  const bool rg = needs(x) || needs(mean) || needs(scale);
  return x.tape().record(std::move(y), rg, [ix, im, is](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = t.value(ix);
    const Matrix& mv = t.value(im);
    const Matrix& sv = t.value(is);
    Matrix* gx = t.requires_grad(ix) ? &t.grad(ix) : nullptr;
    Matrix* gm = t.requires_grad(im) ? &t.grad(im) : nullptr;
    Matrix* gs = t.requires_grad(is) ? &t.grad(is) : nullptr;
    for (int i = 0; i < xv.rows(); ++i) {
      const double gi = g(i, 0);
      for (int d = 0; d < xv.cols(); ++d) {
        const double diff = xv(i, d) - mv(i, d);
        const double var = sv(i, d) * sv(i, d);
        if (gx) (*gx)(i, d) += gi * diff / var;
        if (gm) (*gm)(i, d) -= gi * diff / var;
        if (gs) (*gs)(i, d) += gi * (1.0 / sv(i, d) - diff * diff / (var * sv(i, d)));
      }
    }
  });
}

}  // namespace ihvrnn::ad
