#include "lumamba/scan.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lumamba {
namespace {

struct Dims {
  std::size_t batch, len, d, n;
};

Dims check_shapes(const Shape& u, const Shape& delta, const Shape& a, const Shape& b, const Shape& c,
                  const Shape& skip) {
  auto fail = [](const Shape& x, const Shape& y) {
    throw std::invalid_argument("selective_scan: shape mismatch " + shape_string(x) + " vs " + shape_string(y));
  };
  if (u.size() != 3) fail(u, delta);
  if (delta != u) fail(u, delta);
  const Dims dims{u[0], u[1], u[2], a.size() == 2 ? a[1] : 0};
  if (a.size() != 2 || a[0] != dims.d) fail(u, a);
  if (b != Shape{dims.batch, dims.len, dims.n}) fail(a, b);
  if (c != b) fail(b, c);
  if (skip != Shape{dims.d}) fail(u, skip);
  return dims;
}

[[noreturn]] void non_finite(std::size_t step) {
  throw std::runtime_error("selective_scan: non-finite value at step " + std::to_string(step));
}

void sequential(const Dims& dm, const Real* u, const Real* dl, const Real* a, const Real* b, const Real* c,
                const Real* skip, Real* y, Real* states, std::uint64_t& macs) {
  std::vector<Real> h(dm.d * dm.n);
  for (std::size_t bi = 0; bi < dm.batch; ++bi) {
    std::fill(h.begin(), h.end(), Real(0));
    for (std::size_t t = 0; t < dm.len; ++t) {
      const std::size_t row = bi * dm.len + t;
      const Real* bt = b + row * dm.n;
      const Real* ct = c + row * dm.n;
      bool finite = true;
      for (std::size_t d = 0; d < dm.d; ++d) {
        const Real step = dl[row * dm.d + d];
        const Real x = u[row * dm.d + d];
        Real* hd = h.data() + d * dm.n;
        const Real* ad = a + d * dm.n;
        Real acc = 0;
        for (std::size_t n = 0; n < dm.n; ++n) {
          hd[n] = std::exp(step * ad[n]) * hd[n] + step * bt[n] * x;
          acc += ct[n] * hd[n];
        }
        const Real out = acc + skip[d] * x;
        macs += 5 * dm.n + 1;
        finite = finite && std::isfinite(out);
        y[row * dm.d + d] = out;
      }
      if (!finite) non_finite(t);
      if (states != nullptr) std::copy(h.begin(), h.end(), states + row * dm.d * dm.n);
    }
  }
}

// Hillis-Steele inclusive scan over the affine maps h -> alpha * h + beta,
// composed as (a1, b1) then (a2, b2) = (a1 a2, a2 b1 + b2).
void associative(const Dims& dm, const Real* u, const Real* dl, const Real* a, const Real* b, const Real* c,
                 const Real* skip, Real* y, Real* states, std::uint64_t& macs) {
  std::vector<Real> alpha(dm.len), beta(dm.len);
  const std::size_t total = dm.batch * dm.len * dm.d;
  std::fill(y, y + total, Real(0));
  for (std::size_t bi = 0; bi < dm.batch; ++bi) {
    for (std::size_t d = 0; d < dm.d; ++d) {
      for (std::size_t n = 0; n < dm.n; ++n) {
        for (std::size_t t = 0; t < dm.len; ++t) {
          const std::size_t row = bi * dm.len + t;
          const Real step = dl[row * dm.d + d];
          alpha[t] = std::exp(step * a[d * dm.n + n]);
          beta[t] = step * b[row * dm.n + n] * u[row * dm.d + d];
        }
        macs += 3 * dm.len;
        for (std::size_t offset = 1; offset < dm.len; offset *= 2) {
          for (std::size_t t = dm.len; t-- > offset;) {
            beta[t] = alpha[t] * beta[t - offset] + beta[t];
            alpha[t] = alpha[t - offset] * alpha[t];
          }
          macs += 2 * (dm.len - offset);
        }
        for (std::size_t t = 0; t < dm.len; ++t) {
          const std::size_t row = bi * dm.len + t;
          y[row * dm.d + d] += c[row * dm.n + n] * beta[t];
          ++macs;
          if (states != nullptr) states[(row * dm.d + d) * dm.n + n] = beta[t];
        }
      }
    }
  }
  for (std::size_t i = 0; i < total; ++i) {
    y[i] += skip[i % dm.d] * u[i];
    ++macs;
    if (!std::isfinite(y[i])) non_finite((i / dm.d) % dm.len);
  }
}

}  // namespace

Array scan_forward(const Array& u, const Array& delta, const Array& a, const Array& b, const Array& c,
                   const Array& skip, ScanKernel kernel, Array* states, ScanStats* stats) {
  const Dims dm = check_shapes(u.shape(), delta.shape(), a.shape(), b.shape(), c.shape(), skip.shape());
  Array y(u.shape());
  Real* hs = nullptr;
  if (states != nullptr) {
    *states = Array(Shape{dm.batch, dm.len, dm.d, dm.n});
    hs = states->data().data();
  }
  const auto run = kernel == ScanKernel::sequential ? sequential : associative;
  std::uint64_t macs = 0;
  run(dm, u.data().data(), delta.data().data(), a.data().data(), b.data().data(), c.data().data(),
      skip.data().data(), y.data().data(), hs, macs);
  if (stats != nullptr) stats->macs += macs;
  return y;
}

Var selective_scan(Var u, Var delta, Var a, Var b, Var c, Var skip, ScanKernel kernel, ScanStats* stats) {
  for (const Var* v : {&delta, &a, &b, &c, &skip}) {
    if (&v->tape() != &u.tape()) throw std::invalid_argument("selective_scan: inputs live on different tapes");
  }
  auto states = std::make_shared<Array>();
  Array y = scan_forward(u.value(), delta.value(), a.value(), b.value(), c.value(), skip.value(), kernel,
                         states.get(), stats);
  const Dims dm{u.dim(0), u.dim(1), u.dim(2), a.dim(1)};
  const std::size_t iu = u.id(), idl = delta.id(), ia = a.id(), ib = b.id(), ic = c.id(), is = skip.id();

  return u.tape().record(std::move(y), {u, delta, a, b, c, skip}, [=](Tape& t, std::size_t self) {
    const Real* gy = t.grad(self).data().data();
    const Real* uv = t.value(iu).data().data();
    const Real* dl = t.value(idl).data().data();
    const Real* av = t.value(ia).data().data();
    const Real* bv = t.value(ib).data().data();
    const Real* cv = t.value(ic).data().data();
    const Real* sv = t.value(is).data().data();
    const Real* hs = states->data().data();

    std::vector<Real> gu(dm.batch * dm.len * dm.d), gdl(gu.size());
    std::vector<Real> gb(dm.batch * dm.len * dm.n), gc(gb.size());
    std::vector<double> ga(dm.d * dm.n), gs(dm.d);
    std::vector<Real> gh(dm.d * dm.n);

    for (std::size_t bi = 0; bi < dm.batch; ++bi) {
      std::fill(gh.begin(), gh.end(), Real(0));
      for (std::size_t t_ = dm.len; t_-- > 0;) {
        const std::size_t row = bi * dm.len + t_;
        const Real* bt = bv + row * dm.n;
        const Real* ct = cv + row * dm.n;
        Real* gbt = gb.data() + row * dm.n;
        Real* gct = gc.data() + row * dm.n;
        for (std::size_t d = 0; d < dm.d; ++d) {
          const std::size_t i = row * dm.d + d;
          const Real g = gy[i];
          const Real x = uv[i];
          const Real step = dl[i];
          const Real* h = hs + i * dm.n;
          const Real* hprev = t_ > 0 ? hs + (i - dm.d) * dm.n : nullptr;
          const Real* ad = av + d * dm.n;
          Real* ghd = gh.data() + d * dm.n;
          gs[d] += static_cast<double>(g) * x;
          Real gx = g * sv[d];
          Real gstep = 0;
          for (std::size_t n = 0; n < dm.n; ++n) {
            gct[n] += g * h[n];
            const Real ghn = ghd[n] + g * ct[n];
            const Real decay = std::exp(step * ad[n]);
            if (hprev != nullptr) {
              const Real gdecay = ghn * hprev[n] * decay;
              gstep += gdecay * ad[n];
              ga[d * dm.n + n] += static_cast<double>(gdecay) * step;
            }
            gstep += ghn * bt[n] * x;
            gbt[n] += ghn * step * x;
            gx += ghn * step * bt[n];
            ghd[n] = ghn * decay;
          }
          gu[i] += gx;
          gdl[i] += gstep;
        }
      }
    }

    auto accumulate = [&t](std::size_t id, const auto& src) {
      if (!t.requires_grad(id)) return;
      Real* dst = t.grad(id).data().data();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] += static_cast<Real>(src[k]);
    };
    accumulate(iu, gu);
    accumulate(idl, gdl);
    accumulate(ia, ga);
    accumulate(ib, gb);
    accumulate(ic, gc);
    accumulate(is, gs);
  });
}

}  // namespace lumamba
