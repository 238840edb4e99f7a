#include "lumamba/bimamba.hpp"

#include <cmath>
#include <stdexcept>

#include "lumamba/layers.hpp"
#include "lumamba/ops.hpp"

namespace lumamba {

void add_ssm_params(ParamStore& store, const std::string& prefix, std::size_t d, std::size_t n, std::size_t expand,
                    const Rng& init) {
  const std::size_t inner = d * expand, rank = dt_rank(d);
  add_linear(store, prefix + ".in", d, 2 * inner, init, false);
  add_linear(store, prefix + ".x", inner, rank + 2 * n, init, false);
  add_uniform(store, prefix + ".dt.w", Shape{rank, inner}, 1.0 / std::sqrt(static_cast<double>(rank)), init);
  // softplus(bias) = 0.01 at start.
  add_constant(store, prefix + ".dt.b", Shape{inner}, static_cast<Real>(std::log(std::expm1(0.01))));
  Array a_log(Shape{inner, n});
  for (std::size_t i = 0; i < inner; ++i)
    for (std::size_t k = 0; k < n; ++k) a_log.at({i, k}) = static_cast<Real>(std::log(static_cast<double>(k + 1)));
  store.add(prefix + ".a_log", std::move(a_log));
  add_constant(store, prefix + ".skip", Shape{inner}, 1);
  add_linear(store, prefix + ".out", inner, d, init, false);
}

Var ssm_branch(Tape& tape, ParamStore& store, const std::string& prefix, Var x, SsmOptions options) {
  const Parameter& a_log = store.get(prefix + ".a_log");
  const std::size_t inner = a_log.value.dim(0), n = a_log.value.dim(1);
  if (x.rank() != 3) throw std::invalid_argument("ssm_branch: expected B x L x D, got " + shape_string(x.shape()));
  const std::size_t rank = store.get(prefix + ".dt.w").value.dim(0);

  Var xz = apply_linear(tape, store, prefix + ".in", x);
  Var u = silu(slice(xz, 2, 0, inner));
  Var z = slice(xz, 2, inner, 2 * inner);
  Var sel = apply_linear(tape, store, prefix + ".x", u);
  Var dt = slice(sel, 2, 0, rank);
  Var b = slice(sel, 2, rank, rank + n);
  Var c = slice(sel, 2, rank + n, rank + 2 * n);
  Var delta = softplus(apply_linear(tape, store, prefix + ".dt", dt));
  Var a = scale(exp(tape.param(store.get(prefix + ".a_log"))), Real(-1));
  Var y = selective_scan(u, delta, a, b, c, tape.param(store.get(prefix + ".skip")), options.kernel, options.stats);
  return apply_linear(tape, store, prefix + ".out", mul(y, silu(z)));
}

void add_bimamba_params(ParamStore& store, const std::string& prefix, std::size_t d, std::size_t n,
                        std::size_t expand, const Rng& init) {
  add_layer_norm(store, prefix + ".ln", d);
  add_ssm_params(store, prefix + ".fwd", d, n, expand, init);
  add_ssm_params(store, prefix + ".bwd", d, n, expand, init);
  add_linear(store, prefix + ".gate", 2 * d, d, init);
}

Var bimamba_block(Tape& tape, ParamStore& store, const std::string& prefix, Var x, SsmOptions options) {
  Var xn = apply_layer_norm(tape, store, prefix + ".ln", x);
  Var yf = ssm_branch(tape, store, prefix + ".fwd", xn, options);
  Var yb = reverse(ssm_branch(tape, store, prefix + ".bwd", reverse(xn, 1), options), 1);
  const Var both[] = {yf, yb};
  Var g = sigmoid(apply_linear(tape, store, prefix + ".gate", concat(both, 2)));
  return add(x, add(mul(g, yf), mul(rsub_scalar(1, g), yb)));
}

void add_backbone_params(ParamStore& store, const ModelConfig& cfg, const Rng& init) {
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    add_bimamba_params(store, "backbone." + std::to_string(i), cfg.latent_dim(), cfg.state, cfg.expand, init);
  }
}

Var backbone(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var latents, std::size_t batch,
             SsmOptions options) {
  if (latents.rank() != 3 || latents.dim(1) != cfg.queries || latents.dim(2) != cfg.embed || batch == 0 ||
      latents.dim(0) % batch != 0) {
    throw std::invalid_argument("backbone: latents " + shape_string(latents.shape()) + " do not split into " +
                                std::to_string(batch) + " x S x " + std::to_string(cfg.queries) + " x " +
                                std::to_string(cfg.embed));
  }
  Var h = reshape(latents, Shape{batch, latents.dim(0) / batch, cfg.latent_dim()});
  for (std::size_t i = 0; i < cfg.blocks; ++i) h = bimamba_block(tape, store, "backbone." + std::to_string(i), h, options);
  return h;
}

void add_head_params(ParamStore& store, const ModelConfig& cfg, const Rng& init) {
  add_linear(store, "head.proj", cfg.latent_dim(), cfg.embed, init, false);
  add_layer_norm(store, "head.ln", cfg.embed);
  add_ssm_params(store, "head.ssm", cfg.embed, cfg.state, cfg.expand, init);
  add_linear(store, "head.out", cfg.embed, cfg.classes, init);
}

Var classifier_head(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var features, SsmOptions options) {
  if (features.rank() != 3 || features.dim(2) != cfg.latent_dim()) {
    throw std::invalid_argument("classifier_head: expected B x S x " + std::to_string(cfg.latent_dim()) + ", got " +
                                shape_string(features.shape()));
  }
  const std::size_t b = features.dim(0), s = features.dim(1);
  Var h = apply_linear(tape, store, "head.proj", features);
  h = add(h, ssm_branch(tape, store, "head.ssm", apply_layer_norm(tape, store, "head.ln", h), options));
  Var last = reshape(slice(h, 1, s - 1, s), Shape{b, cfg.embed});
  return apply_linear(tape, store, "head.out", last);
}

}  // namespace lumamba
