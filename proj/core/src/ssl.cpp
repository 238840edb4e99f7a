#include "lumamba/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "lumamba/encoder.hpp"
#include "lumamba/ops.hpp"

namespace lumamba {
namespace {

const double kSqrtTwoThirds = std::sqrt(2.0 / 3.0);
const double kSqrtHalf = std::sqrt(0.5);
constexpr double kStdEps = 1e-8;

// dT/dz for the closed-form statistic.
void epps_pulley_grad(std::span<const double> z, std::span<double> out) {
  const std::size_t m = z.size();
  const double md = static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j) {
    double pair = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double d = z[j] - z[k];
      pair += d * std::exp(-d * d / 4.0);
    }
    out[j] = -pair / (md * md) + (2.0 / md) * kSqrtTwoThirds * (z[j] / 3.0) * std::exp(-z[j] * z[j] / 6.0);
  }
}

}  // namespace

std::size_t MaskPlan::masked_count(std::size_t window) const {
  std::size_t n = 0;
  for (std::size_t s = 0; s < patches; ++s) n += at(window, s) ? 1 : 0;
  return n;
}

std::size_t MaskPlan::total_masked() const {
  return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), std::uint8_t{1}));
}

MaskPlan mask_patches(std::size_t windows, std::size_t patches, double ratio, const Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("mask_patches: ratio must lie in (0, 1)");
  if (patches < 2) throw std::invalid_argument("mask_patches: need at least 2 patches per window");
  const auto count = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(patches)));
  if (count == 0 || count == patches) {
    throw std::invalid_argument("mask_patches: ratio " + std::to_string(ratio) + " masks " + std::to_string(count) +
                                " of " + std::to_string(patches) + " patches");
  }
  MaskPlan plan{windows, patches, ratio, std::vector<std::uint8_t>(windows * patches, 0)};
  std::vector<std::size_t> order(patches);
  for (std::size_t b = 0; b < windows; ++b) {
    Rng r = rng.stream(b);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(order[i], order[i + r.below(patches - i)]);
      plan.masked[b * patches + order[i]] = 1;
    }
  }
  return plan;
}

Var recon_loss(Var pred, const Array& target, const MaskPlan& plan) {
  if (pred.shape() != target.shape() || pred.rank() != 3) {
    throw std::invalid_argument("recon_loss: prediction " + shape_string(pred.shape()) + " vs target " +
                                shape_string(target.shape()));
  }
  if (pred.dim(0) != plan.masked.size()) throw std::invalid_argument("recon_loss: mask does not match patch rows");
  const std::size_t rows = plan.total_masked();
  if (rows == 0) throw std::invalid_argument("recon_loss: empty mask");
  const std::size_t stride = pred.dim(1) * pred.dim(2);
  Array weight(pred.shape());
  for (std::size_t r = 0; r < plan.masked.size(); ++r) {
    if (!plan.masked[r]) continue;
    std::fill_n(weight.data().begin() + static_cast<std::ptrdiff_t>(r * stride), stride, Real(1));
  }
  Tape& tape = pred.tape();
  Var sq = square(sub(pred, tape.constant(target)));
  return div_scalar(sum_all(mul(sq, tape.constant(std::move(weight)))), static_cast<Real>(rows * stride));
}

std::size_t default_global_length(std::size_t window, std::size_t patch) { return (window * 3 / 4) / patch * patch; }
std::size_t default_local_length(std::size_t window, std::size_t patch) { return (window / 4) / patch * patch; }

ViewSet sample_views(std::size_t windows, std::size_t window_length, std::size_t patch, std::size_t global_length,
                     std::size_t local_length, const Rng& rng, std::size_t n_global, std::size_t n_local) {
  if (patch == 0 || global_length % patch != 0 || local_length % patch != 0 || local_length == 0) {
    throw std::invalid_argument("sample_views: view lengths " + std::to_string(global_length) + "/" +
                                std::to_string(local_length) + " must be positive multiples of patch " +
                                std::to_string(patch));
  }
  if (!(local_length < global_length && global_length <= window_length)) {
    throw std::invalid_argument("sample_views: need local < global <= window length");
  }
  ViewSet views{global_length, local_length, {}, {}};
  auto draw = [&](const std::string& kind, std::size_t count, std::size_t length) {
    std::vector<std::vector<std::size_t>> out(count);
    for (std::size_t v = 0; v < count; ++v) {
      Rng r = rng.stream(kind + "/" + std::to_string(v));
      for (std::size_t b = 0; b < windows; ++b) out[v].push_back(r.below(window_length - length + 1));
    }
    return out;
  };
  views.global_offsets = draw("global", n_global, global_length);
  views.local_offsets = draw("local", n_local, local_length);
  return views;
}

Array crop(const Array& windows, std::span<const std::size_t> offsets, std::size_t length) {
  const std::size_t b = windows.dim(0), c = windows.dim(1), t = windows.dim(2);
  if (offsets.size() != b) throw std::invalid_argument("crop: one offset per window required");
  Array out(Shape{b, c, length});
  for (std::size_t bi = 0; bi < b; ++bi) {
    if (offsets[bi] + length > t) throw std::invalid_argument("crop: view exceeds the window");
    for (std::size_t ci = 0; ci < c; ++ci) {
      const Real* src = windows.data().data() + (bi * c + ci) * t + offsets[bi];
      std::copy(src, src + length, out.data().data() + (bi * c + ci) * length);
    }
  }
  return out;
}

Var embed_view(Tape& tape, Model& model, const Array& view, const Montage& montage, SsmOptions options) {
  return mean(model.encode(tape, view, montage, nullptr, options).features, 1);
}

Var jepa_pred_loss(Var locals, Var globals) {
  if (locals.rank() != 3 || globals.rank() != 3 || locals.dim(1) != globals.dim(1) ||
      locals.dim(2) != globals.dim(2)) {
    throw std::invalid_argument("jepa_pred_loss: locals " + shape_string(locals.shape()) + " vs globals " +
                                shape_string(globals.shape()));
  }
  Var center = mean(globals, 0);
  const auto n = static_cast<Real>(locals.dim(0) * locals.dim(1));
  return div_scalar(sum_all(square(sub(locals, center))), n);
}

double epps_pulley(std::span<const double> z) {
  const std::size_t m = z.size();
  if (m == 0) throw std::invalid_argument("epps_pulley: no samples");
  const double md = static_cast<double>(m);
  double pair = 0.0, single = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < m; ++k) {
      const double d = z[j] - z[k];
      pair += std::exp(-d * d / 4.0);
    }
    single += std::exp(-z[j] * z[j] / 6.0);
  }
  return pair / (md * md) - (2.0 / md) * kSqrtTwoThirds * single + kSqrtHalf;
}

Var epps_pulley_columns(Var projections) {
  if (projections.rank() != 2) {
    throw std::invalid_argument("epps_pulley_columns: expected M x K, got " + shape_string(projections.shape()));
  }
  const std::size_t m = projections.dim(0), k = projections.dim(1);
  const double md = static_cast<double>(m);
  // Centered columns and their scales, kept for the backward pass.
  auto centered = std::make_shared<std::vector<double>>(m * k);
  auto sigma = std::make_shared<std::vector<double>>(k);
  Array out(Shape{k});
  std::vector<double> z(m);
  const Real* p = projections.value().data().data();
  for (std::size_t col = 0; col < k; ++col) {
    double mu = 0.0;
    for (std::size_t i = 0; i < m; ++i) mu += p[i * k + col];
    mu /= md;
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double c = p[i * k + col] - mu;
      (*centered)[col * m + i] = c;
      var += c * c;
    }
    (*sigma)[col] = std::sqrt(var / md);
    const double s = (*sigma)[col] + kStdEps;
    for (std::size_t i = 0; i < m; ++i) z[i] = (*centered)[col * m + i] / s;
    out[col] = static_cast<Real>(epps_pulley(z));
  }
  const std::size_t ip = projections.id();
  return projections.tape().record(std::move(out), {projections}, [=](Tape& t, std::size_t self) {
    if (!t.requires_grad(ip)) return;
    const Real* g = t.grad(self).data().data();
    Real* gp = t.grad(ip).data().data();
    std::vector<double> zc(m), gz(m), gc(m);
    for (std::size_t col = 0; col < k; ++col) {
      const double sig = (*sigma)[col], s = sig + kStdEps;
      const double* c = centered->data() + col * m;
      for (std::size_t i = 0; i < m; ++i) zc[i] = c[i] / s;
      epps_pulley_grad(zc, gz);
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        gz[i] *= g[col];
        dot += gz[i] * c[i];
      }
      double mean_gc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        gc[i] = gz[i] / s;
        if (sig > 0.0) gc[i] -= dot * c[i] / (md * sig * s * s);
        mean_gc += gc[i];
      }
      mean_gc /= md;
      for (std::size_t i = 0; i < m; ++i) gp[i * k + col] += static_cast<Real>(gc[i] - mean_gc);
    }
  });
}

Array random_directions(std::size_t dim, std::size_t slices, const Rng& rng) {
  if (dim == 0 || slices == 0) throw std::invalid_argument("random_directions: need positive sizes");
  Array dirs(Shape{dim, slices});
  for (std::size_t s = 0; s < slices; ++s) {
    Rng r = rng.stream(s);
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
      x = r.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim; ++i) dirs.at({i, s}) = static_cast<Real>(v[i] / norm);
  }
  return dirs;
}

Var sigreg(Var embeddings, std::size_t slices, const Rng& rng) {
  if (embeddings.rank() != 2) throw std::invalid_argument("sigreg: expected M x F embeddings");
  if (embeddings.dim(0) < 8) {
    throw std::invalid_argument("sigreg: need at least 8 embeddings, got " + std::to_string(embeddings.dim(0)));
  }
  if (slices == 0) throw std::invalid_argument("sigreg: need at least one slice");
  Var dirs = embeddings.tape().constant(random_directions(embeddings.dim(1), slices, rng));
  return mean_all(epps_pulley_columns(matmul(embeddings, dirs)));
}

Regime parse_regime(const std::string& name) {
  if (name == "recon") return Regime::recon;
  if (name == "lejepa") return Regime::lejepa;
  if (name == "mixed") return Regime::mixed;
  throw std::invalid_argument("unknown regime '" + name + "' (expected recon, lejepa or mixed)");
}

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::recon: return "recon";
    case Regime::lejepa: return "lejepa";
    case Regime::mixed: return "mixed";
  }
  return "?";
}

LossReport mixed_loss(double recon, double jepa_pred, double sig, double lambda, Regime regime) {
  if (lambda < 0.0) throw std::invalid_argument("mixed_loss: lambda must be non-negative");
  LossReport r{recon, jepa_pred, sig, lambda, 0.0};
  switch (regime) {
    case Regime::recon: r.total = recon; break;
    case Regime::lejepa: r.total = lambda * (jepa_pred + sig); break;
    case Regime::mixed: r.total = recon + lambda * (jepa_pred + sig); break;
  }
  return r;
}

SslStep ssl_objective(Tape& tape, Model& model, const Array& windows, const Montage& montage, const SslConfig& config,
                      const Rng& rng, SsmOptions options) {
  if (config.lambda < 0.0) throw std::invalid_argument("ssl_objective: lambda must be non-negative");
  const ModelConfig& cfg = model.config();
  const std::size_t batch = windows.dim(0), length = windows.dim(2);
  SslStep step;
  step.report.lambda = config.lambda;

  Var recon;
  if (config.regime != Regime::lejepa) {
    const Array patches = tokenize(windows, cfg.patch);
    const MaskPlan plan = mask_patches(batch, length / cfg.patch, config.mask_ratio, rng.stream("mask"));
    auto enc = model.encode(tape, windows, montage, &plan.masked, options);
    recon = recon_loss(model.reconstruct(tape, enc.features, montage), patches, plan);
    step.report.recon = recon.value()[0];
  }

  Var joint;
  if (config.regime != Regime::recon) {
    const std::size_t g_len = config.global_length ? config.global_length : default_global_length(length, cfg.patch);
    const std::size_t l_len = config.local_length ? config.local_length : default_local_length(length, cfg.patch);
    const ViewSet views = sample_views(batch, length, cfg.patch, g_len, l_len, rng.stream("views"), config.n_global,
                                       config.n_local);
    auto stacked = [&](const std::vector<std::vector<std::size_t>>& offsets, std::size_t len) {
      std::vector<Array> crops;
      for (const auto& o : offsets) crops.push_back(crop(windows, o, len));
      Array all(Shape{offsets.size() * batch, windows.dim(1), len});
      std::size_t at = 0;
      for (const auto& c : crops) {
        std::copy(c.data().begin(), c.data().end(), all.data().begin() + static_cast<std::ptrdiff_t>(at));
        at += c.size();
      }
      return embed_view(tape, model, all, montage, options);
    };
    const std::size_t f = cfg.latent_dim();
    Var g = stacked(views.global_offsets, g_len);
    Var l = stacked(views.local_offsets, l_len);
    Var jepa = jepa_pred_loss(reshape(l, Shape{config.n_local, batch, f}), reshape(g, Shape{config.n_global, batch, f}));
    const Var pooled[] = {g, l};
    Var sig = sigreg(concat(pooled, 0), config.slices, rng.stream("slices"));
    step.report.jepa_pred = jepa.value()[0];
    step.report.sigreg = sig.value()[0];
    joint = scale(add(jepa, sig), static_cast<Real>(config.lambda));
  }

  switch (config.regime) {
    case Regime::recon: step.total = recon; break;
    case Regime::lejepa: step.total = joint; break;
    case Regime::mixed: step.total = add(recon, joint); break;
  }
  step.report.total = step.total.value()[0];
  return step;
}

}  // namespace lumamba
