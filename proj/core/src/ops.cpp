#include "lumamba/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lumamba {
namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap as_mat(Array& a, std::size_t rows, std::size_t cols) {
  return MatMap(a.data().data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}
ConstMatMap as_mat(const Array& a, std::size_t rows, std::size_t cols) {
  return ConstMatMap(a.data().data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}
MatMap as_mat(Real* p, std::size_t rows, std::size_t cols) {
  return MatMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap as_mat(const Real* p, std::size_t rows, std::size_t cols) {
  return ConstMatMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) +
                              " and " + shape_string(b));
}

void check_tapes(const char* op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": vars on different tapes");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for shape " + shape_string(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Sums a gradient of the long operand's shape down to the suffix shape.
void reduce_into(const Array& g, Array& dst) {
  const std::size_t n = dst.size();
  auto out = dst.data();
  auto in = g.data();
  if (n == in.size()) {
    for (std::size_t i = 0; i < n; ++i) out[i] += in[i];
    return;
  }
  std::vector<double> acc(n, 0.0);
  for (std::size_t i = 0; i < in.size(); ++i) acc[i % n] += in[i];
  for (std::size_t i = 0; i < n; ++i) out[i] += static_cast<Real>(acc[i]);
}

enum class BinOp { add, sub, mul, div };

Var binary(BinOp op, Var a, Var b, const char* name) {
  check_tapes(name, a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool swap = false;
  if (!is_suffix(sb, sa)) {
    if (is_suffix(sa, sb)) {
      swap = true;
    } else {
      shape_error(name, sa, sb);
    }
  }
  const Array& va = a.value();
  const Array& vb = b.value();
  const Shape& out_shape = swap ? sb : sa;
  Array out(out_shape);
  const std::size_t n = out.size();
  const std::size_t na = va.size();
  const std::size_t nb = vb.size();
  auto o = out.data();
  auto pa = va.data();
  auto pb = vb.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Real x = pa[i % na];
    const Real y = pb[i % nb];
    switch (op) {
      case BinOp::add: o[i] = x + y; break;
      case BinOp::sub: o[i] = x - y; break;
      case BinOp::mul: o[i] = x * y; break;
      case BinOp::div: o[i] = x / y; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [op, ia, ib, na, nb](Tape& t, std::size_t self) {
    const Array& g = t.grad(self);
    const std::size_t n = g.size();
    auto gd = g.data();
    auto pa = t.value(ia).data();
    auto pb = t.value(ib).data();
    auto scatter = [&](std::size_t id, std::size_t m, auto&& term) {
      Array& dst = t.grad(id);
      auto d = dst.data();
      if (m == n) {
        for (std::size_t i = 0; i < n; ++i) d[i] += term(i);
      } else {
        std::vector<double> acc(m, 0.0);
        for (std::size_t i = 0; i < n; ++i) acc[i % m] += term(i);
        for (std::size_t i = 0; i < m; ++i) d[i] += static_cast<Real>(acc[i]);
      }
    };
    if (t.requires_grad(ia)) {
      switch (op) {
        case BinOp::add:
        case BinOp::sub: scatter(ia, na, [&](std::size_t i) { return gd[i]; }); break;
        case BinOp::mul: scatter(ia, na, [&](std::size_t i) { return gd[i] * pb[i % nb]; }); break;
        case BinOp::div: scatter(ia, na, [&](std::size_t i) { return gd[i] / pb[i % nb]; }); break;
      }
    }
    if (t.requires_grad(ib)) {
      switch (op) {
        case BinOp::add: scatter(ib, nb, [&](std::size_t i) { return gd[i]; }); break;
        case BinOp::sub: scatter(ib, nb, [&](std::size_t i) { return -gd[i]; }); break;
        case BinOp::mul: scatter(ib, nb, [&](std::size_t i) { return gd[i] * pa[i % na]; }); break;
        case BinOp::div:
          scatter(ib, nb, [&](std::size_t i) {
            const Real y = pb[i % nb];
            return -gd[i] * pa[i % na] / (y * y);
          });
          break;
      }
    }
  });
}

// Elementwise unary op; `deriv(x, y)` gives dy/dx from input and output.
template <class F, class D>
Var unary(Var x, F f, D deriv) {
  const Array& vx = x.value();
  Array out(vx.shape());
  auto o = out.data();
  auto in = vx.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, deriv](Tape& t, std::size_t self) {
    const Array& g = t.grad(self);
    auto xv = t.value(ix).data();
    auto yv = t.value(self).data();
    auto gd = g.data();
    auto d = t.grad(ix).data();
    for (std::size_t i = 0; i < gd.size(); ++i) d[i] += gd[i] * deriv(xv[i], yv[i]);
  });
}

Real stable_sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

Var add(Var a, Var b) { return binary(BinOp::add, a, b, "add"); }
Var sub(Var a, Var b) { return binary(BinOp::sub, a, b, "sub"); }
Var mul(Var a, Var b) { return binary(BinOp::mul, a, b, "mul"); }
Var div(Var a, Var b) { return binary(BinOp::div, a, b, "div"); }

Var add_scalar(Var x, Real c) {
  return unary(x, [c](Real v) { return v + c; }, [](Real, Real) { return Real(1); });
}

Var scale(Var x, Real c) {
  return unary(x, [c](Real v) { return v * c; }, [c](Real, Real) { return c; });
}

Var div_scalar(Var x, Real c) {
  return unary(x, [c](Real v) { return v / c; }, [c](Real, Real) { return Real(1) / c; });
}

Var rsub_scalar(Real c, Var x) {
  return unary(x, [c](Real v) { return c - v; }, [](Real, Real) { return Real(-1); });
}

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](Real, Real y) { return y * (Real(1) - y); });
}

Var silu(Var x) {
  return unary(
      x, [](Real v) { return v * stable_sigmoid(v); },
      [](Real v, Real) {
        const Real s = stable_sigmoid(v);
        return s * (Real(1) + v * (Real(1) - s));
      });
}

Var exp(Var x) {
  return unary(x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Var log(Var x) {
  return unary(x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

Var softplus(Var x) {
  return unary(
      x, [](Real v) { return v > Real(20) ? v : std::log1p(std::exp(v)); },
      [](Real v, Real) { return stable_sigmoid(v); });
}

Var sqrt(Var x) {
  return unary(x, [](Real v) { return std::sqrt(v); },
               [](Real, Real y) { return Real(0.5) / y; });
}

Var square(Var x) {
  return unary(x, [](Real v) { return v * v; }, [](Real v, Real) { return Real(2) * v; });
}

Var matmul(Var a, Var b) {
  check_tapes("matmul", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error("matmul", sa, sb);
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Array out(Shape{m, n});
  as_mat(out, m, n).noalias() = as_mat(a.value(), m, k) * as_mat(b.value(), k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    auto g = as_mat(t.grad(self), m, n);
    if (t.requires_grad(ia)) {
      as_mat(t.grad(ia), m, k).noalias() += g * as_mat(t.value(ib), k, n).transpose();
    }
    if (t.requires_grad(ib)) {
      as_mat(t.grad(ib), k, n).noalias() += as_mat(t.value(ia), m, k).transpose() * g;
    }
  });
}

Var bmm(Var a, Var b, bool transpose_b) {
  check_tapes("bmm", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) shape_error("bmm", sa, sb);
  const std::size_t batch = sa[0], m = sa[1], k = sa[2];
  const std::size_t n = transpose_b ? sb[1] : sb[2];
  const std::size_t kb = transpose_b ? sb[2] : sb[1];
  if (kb != k) shape_error("bmm", sa, sb);
  Array out(Shape{batch, m, n});
  const Real* pa = a.value().data().data();
  const Real* pb = b.value().data().data();
  Real* po = out.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    auto A = as_mat(pa + i * m * k, m, k);
    auto O = as_mat(po + i * m * n, m, n);
    if (transpose_b) {
      O.noalias() = A * as_mat(pb + i * n * k, n, k).transpose();
    } else {
      O.noalias() = A * as_mat(pb + i * k * n, k, n);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Real* g = t.grad(self).data().data();
    const Real* va = t.value(ia).data().data();
    const Real* vb = t.value(ib).data().data();
    Real* ga = t.requires_grad(ia) ? t.grad(ia).data().data() : nullptr;
    Real* gb = t.requires_grad(ib) ? t.grad(ib).data().data() : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      auto G = as_mat(g + i * m * n, m, n);
      auto A = as_mat(va + i * m * k, m, k);
      if (transpose_b) {
        auto B = as_mat(vb + i * n * k, n, k);
        if (ga) as_mat(ga + i * m * k, m, k).noalias() += G * B;
        if (gb) as_mat(gb + i * n * k, n, k).noalias() += G.transpose() * A;
      } else {
        auto B = as_mat(vb + i * k * n, k, n);
        if (ga) as_mat(ga + i * m * k, m, k).noalias() += G * B.transpose();
        if (gb) as_mat(gb + i * k * n, k, n).noalias() += A.transpose() * G;
      }
    }
  });
}

Var linear(Var x, Var w) {
  const Shape& sx = x.shape();
  if (sx.empty() || w.rank() != 2 || sx.back() != w.dim(0)) shape_error("linear", sx, w.shape());
  const std::size_t k = sx.back();
  const std::size_t rows = x.value().size() / k;
  Var y = matmul(reshape(x, Shape{rows, k}), w);
  Shape out = sx;
  out.back() = w.dim(1);
  return reshape(y, std::move(out));
}

Var linear(Var x, Var w, Var b) { return add(linear(x, w), b); }

Var conv1d(Var x, Var w, Var b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 3 || sw.size() != 3 || sx[2] != sw[1]) shape_error("conv1d", sx, sw);
  if (b.rank() != 1 || b.dim(0) != sw[2]) shape_error("conv1d", sw, b.shape());
  const std::size_t n = sx[0], len = sx[1], cin = sx[2];
  const std::size_t ks = sw[0], cout = sw[2];
  const std::size_t pad = (ks - 1) / 2;
  const std::size_t rows = n * len, cols_w = ks * cin;

  // im2col: cols[(n,l), (k,c)] = x[n, l + k - pad, c]
  auto cols = std::make_shared<Array>(Shape{rows, cols_w});
  const Real* px = x.value().data().data();
  Real* pc = cols->data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < len; ++l) {
      Real* row = pc + (i * len + l) * cols_w;
      for (std::size_t k = 0; k < ks; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + k) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        std::copy_n(px + (i * len + static_cast<std::size_t>(src)) * cin, cin, row + k * cin);
      }
    }
  }
  Array out(Shape{n, len, cout});
  auto O = as_mat(out, rows, cout);
  O.noalias() = as_mat(*cols, rows, cols_w) * as_mat(w.value(), cols_w, cout);
  O.rowwise() += as_mat(b.value(), 1, cout).row(0);

  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape().record(std::move(out), {x, w, b}, [=](Tape& t, std::size_t self) {
    auto G = as_mat(t.grad(self), rows, cout);
    if (t.requires_grad(iw)) {
      as_mat(t.grad(iw), cols_w, cout).noalias() += as_mat(*cols, rows, cols_w).transpose() * G;
    }
    if (t.requires_grad(ib)) {
      as_mat(t.grad(ib), 1, cout).row(0) += G.colwise().sum();
    }
    if (t.requires_grad(ix)) {
      RowMat dcols = G * as_mat(t.value(iw), cols_w, cout).transpose();
      Real* gx = t.grad(ix).data().data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < len; ++l) {
          const Real* row = dcols.data() + (i * len + l) * cols_w;
          for (std::size_t k = 0; k < ks; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + k) - static_cast<std::ptrdiff_t>(pad);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            Real* dst = gx + (i * len + static_cast<std::size_t>(src)) * cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += row[k * cin + c];
          }
        }
      }
    }
  });
}

Var softmax(Var x) {
  const Array& vx = x.value();
  if (vx.rank() == 0) throw std::invalid_argument("softmax: scalar input");
  const std::size_t k = vx.shape().back();
  const std::size_t rows = vx.size() / k;
  Array out(vx.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = vx.data().data() + r * k;
    Real* o = out.data().data() + r * k;
    const Real mx = *std::max_element(in, in + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] = static_cast<Real>(o[j] / s);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Real* g = t.grad(self).data().data();
    const Real* y = t.value(self).data().data();
    Real* gx = t.grad(ix).data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        gx[r * k + j] += static_cast<Real>(y[r * k + j] * (g[r * k + j] - dot));
      }
    }
  });
}

Var log_softmax(Var x) {
  const Array& vx = x.value();
  if (vx.rank() == 0) throw std::invalid_argument("log_softmax: scalar input");
  const std::size_t k = vx.shape().back();
  const std::size_t rows = vx.size() / k;
  Array out(vx.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = vx.data().data() + r * k;
    Real* o = out.data().data() + r * k;
    const Real mx = *std::max_element(in, in + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(in[j] - mx));
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) o[j] = static_cast<Real>(in[j] - lse);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Real* g = t.grad(self).data().data();
    const Real* y = t.value(self).data().data();
    Real* gx = t.grad(ix).data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < k; ++j) gs += g[r * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        gx[r * k + j] += static_cast<Real>(g[r * k + j] - std::exp(static_cast<double>(y[r * k + j])) * gs);
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, Real eps) {
  const Array& vx = x.value();
  if (vx.rank() == 0) throw std::invalid_argument("layer_norm: scalar input");
  const std::size_t k = vx.shape().back();
  if (gamma.shape() != Shape{k}) shape_error("layer_norm", vx.shape(), gamma.shape());
  if (beta.shape() != Shape{k}) shape_error("layer_norm", vx.shape(), beta.shape());
  const std::size_t rows = vx.size() / k;
  auto xhat = std::make_shared<Array>(vx.shape());
  auto inv_std = std::make_shared<std::vector<Real>>(rows);
  Array out(vx.shape());
  const Real* g = gamma.value().data().data();
  const Real* bt = beta.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = vx.data().data() + r * k;
    double mu = 0.0;
    for (std::size_t j = 0; j < k; ++j) mu += in[j];
    mu /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double d = in[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(k);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = static_cast<Real>(is);
    Real* xh = xhat->data().data() + r * k;
    Real* o = out.data().data() + r * k;
    for (std::size_t j = 0; j < k; ++j) {
      xh[j] = static_cast<Real>((in[j] - mu) * is);
      o[j] = xh[j] * g[j] + bt[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(std::move(out), {x, gamma, beta}, [=](Tape& t, std::size_t self) {
    const Real* gy = t.grad(self).data().data();
    const Real* gm = t.value(ig).data().data();
    const Real* xh = xhat->data().data();
    if (t.requires_grad(ig) || t.requires_grad(ib)) {
      std::vector<double> dg(k, 0.0), db(k, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          dg[j] += gy[r * k + j] * xh[r * k + j];
          db[j] += gy[r * k + j];
        }
      }
      if (t.requires_grad(ig)) {
        Real* d = t.grad(ig).data().data();
        for (std::size_t j = 0; j < k; ++j) d[j] += static_cast<Real>(dg[j]);
      }
      if (t.requires_grad(ib)) {
        Real* d = t.grad(ib).data().data();
        for (std::size_t j = 0; j < k; ++j) d[j] += static_cast<Real>(db[j]);
      }
    }
    if (t.requires_grad(ix)) {
      Real* gx = t.grad(ix).data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const double gh = static_cast<double>(gy[r * k + j]) * gm[j];
          m1 += gh;
          m2 += gh * xh[r * k + j];
        }
        m1 /= static_cast<double>(k);
        m2 /= static_cast<double>(k);
        const double is = (*inv_std)[r];
        for (std::size_t j = 0; j < k; ++j) {
          const double gh = static_cast<double>(gy[r * k + j]) * gm[j];
          gx[r * k + j] += static_cast<Real>(is * (gh - m1 - xh[r * k + j] * m2));
        }
      }
    }
  });
}

Var sum(Var x, std::size_t axis) {
  const auto sp = split_axis(x.shape(), axis, "sum");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const Real* in = x.value().data().data();
  std::vector<Real> out(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double s = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) s += in[(o * sp.len + l) * sp.inner + i];
      out[o * sp.inner + i] = static_cast<Real>(s);
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(Array(std::move(out_shape), std::move(out)), {x},
                         [ix, sp](Tape& t, std::size_t self) {
                           const Real* g = t.grad(self).data().data();
                           Real* gx = t.grad(ix).data().data();
                           for (std::size_t o = 0; o < sp.outer; ++o)
                             for (std::size_t l = 0; l < sp.len; ++l)
                               for (std::size_t i = 0; i < sp.inner; ++i)
                                 gx[(o * sp.len + l) * sp.inner + i] += g[o * sp.inner + i];
                         });
}

Var mean(Var x, std::size_t axis) {
  const auto n = x.shape().at(axis);
  return scale(sum(x, axis), Real(1) / static_cast<Real>(n));
}

Var sum_all(Var x) {
  double s = 0.0;
  for (Real v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return x.tape().record(Array::scalar(static_cast<Real>(s)), {x}, [ix](Tape& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (Real& d : t.grad(ix).data()) d += g;
  });
}

Var mean_all(Var x) {
  const auto n = x.value().size();
  return scale(sum_all(x), Real(1) / static_cast<Real>(n));
}

Var reshape(Var x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto d = t.grad(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Array permute_array(const Array& x, std::span<const std::size_t> perm) {
  const Shape& s = x.shape();
  if (perm.size() != s.size()) throw std::invalid_argument("permute: rank mismatch");
  std::vector<bool> seen(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= s.size() || seen[perm[i]]) throw std::invalid_argument("permute: invalid permutation");
    seen[perm[i]] = true;
    out_shape[i] = s[perm[i]];
  }
  std::vector<std::size_t> in_strides(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];
  // Stride in the input for each output axis.
  std::vector<std::size_t> strides(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) strides[i] = in_strides[perm[i]];
  Array out(out_shape);
  std::vector<std::size_t> idx(s.size(), 0);
  const Real* in = x.data().data();
  Real* o = out.data().data();
  std::size_t src = 0;
  for (std::size_t n = 0; n < out.size(); ++n) {
    o[n] = in[src];
    for (std::size_t a = s.size(); a-- > 0;) {
      if (++idx[a] < out_shape[a]) {
        src += strides[a];
        break;
      }
      src -= strides[a] * (out_shape[a] - 1);
      idx[a] = 0;
    }
  }
  return out;
}

Var permute(Var x, std::vector<std::size_t> perm) {
  Array out = permute_array(x.value(), perm);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, inverse](Tape& t, std::size_t self) {
    Array back = permute_array(t.grad(self), inverse);
    auto d = t.grad(ix).data();
    auto b = back.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += b[i];
  });
}

Var transpose(Var x, std::size_t axis_a, std::size_t axis_b) {
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (axis_a >= perm.size() || axis_b >= perm.size()) throw std::invalid_argument("transpose: axis out of range");
  std::swap(perm[axis_a], perm[axis_b]);
  return permute(x, std::move(perm));
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  Shape out_shape = s0;
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const Var& v : xs) {
    check_tapes("concat", xs[0], v);
    const Shape& s = v.shape();
    if (s.size() != s0.size() || axis >= s.size()) shape_error("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) shape_error("concat", s0, s);
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  out_shape[axis] = total;
  const auto sp = split_axis(out_shape, axis, "concat");
  Array out(out_shape);
  Real* o = out.data().data();
  std::size_t offset = 0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const Real* in = xs[j].value().data().data();
    const std::size_t chunk = lens[j] * sp.inner;
    for (std::size_t a = 0; a < sp.outer; ++a) {
      std::copy_n(in + a * chunk, chunk, o + a * sp.len * sp.inner + offset * sp.inner);
    }
    offset += lens[j];
  }
  std::vector<std::size_t> ids;
  for (const Var& v : xs) ids.push_back(v.id());
  return xs[0].tape().record(std::move(out), xs, [ids, lens, sp](Tape& t, std::size_t self) {
    const Real* g = t.grad(self).data().data();
    std::size_t offset = 0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const std::size_t chunk = lens[j] * sp.inner;
      if (t.requires_grad(ids[j])) {
        Real* d = t.grad(ids[j]).data().data();
        for (std::size_t a = 0; a < sp.outer; ++a) {
          const Real* src = g + a * sp.len * sp.inner + offset * sp.inner;
          for (std::size_t i = 0; i < chunk; ++i) d[a * chunk + i] += src[i];
        }
      }
      offset += lens[j];
    }
  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = split_axis(x.shape(), axis, "slice");
  if (begin >= end || end > sp.len) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") invalid for shape " + shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  Array out(out_shape);
  const std::size_t chunk = (end - begin) * sp.inner;
  const Real* in = x.value().data().data();
  Real* o = out.data().data();
  for (std::size_t a = 0; a < sp.outer; ++a) {
    std::copy_n(in + (a * sp.len + begin) * sp.inner, chunk, o + a * chunk);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Real* g = t.grad(self).data().data();
    Real* d = t.grad(ix).data().data();
    for (std::size_t a = 0; a < sp.outer; ++a) {
      Real* dst = d + (a * sp.len + begin) * sp.inner;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[a * chunk + i];
    }
  });
}

Var reverse(Var x, std::size_t axis) {
  const auto sp = split_axis(x.shape(), axis, "reverse");
  auto flip = [sp](const Real* in, Real* out, bool accumulate) {
    for (std::size_t a = 0; a < sp.outer; ++a)
      for (std::size_t l = 0; l < sp.len; ++l) {
        const Real* s = in + (a * sp.len + l) * sp.inner;
        Real* d = out + (a * sp.len + (sp.len - 1 - l)) * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) d[i] = accumulate ? d[i] + s[i] : s[i];
      }
  };
  Array out(x.shape());
  flip(x.value().data().data(), out.data().data(), false);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, flip](Tape& t, std::size_t self) {
    flip(t.grad(self).data().data(), t.grad(ix).data().data(), true);
  });
}

Var broadcast_to(Var x, Shape shape) {
  if (!is_suffix(x.shape(), shape)) shape_error("broadcast_to", x.shape(), shape);
  Array out(shape);
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i % in.size()];
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    reduce_into(t.grad(self), t.grad(ix));
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw std::invalid_argument("cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  Array pick(Shape{rows, k});
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
    pick.at({r, static_cast<std::size_t>(labels[r])}) = Real(-1) / static_cast<Real>(rows);
  }
  Var lp = log_softmax(logits);
  return sum_all(mul(lp, logits.tape().constant(std::move(pick))));
}

}  // namespace lumamba
