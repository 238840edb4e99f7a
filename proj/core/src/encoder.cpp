#include "lumamba/encoder.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lumamba/layers.hpp"
#include "lumamba/ops.hpp"

namespace lumamba {
namespace {

Var feed_forward(Tape& tape, ParamStore& store, const std::string& prefix, Var h) {
  Var n = apply_layer_norm(tape, store, prefix + ".ln2", h);
  Var f = apply_linear(tape, store, prefix + ".ffn2", silu(apply_linear(tape, store, prefix + ".ffn1", n)));
  return add(h, f);
}

void add_attention(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, const Rng& init) {
  const std::size_t e = cfg.embed;
  add_layer_norm(store, prefix + ".ln1", e);
  add_linear(store, prefix + ".q", e, e, init, false);
  add_linear(store, prefix + ".k", e, e, init);
  add_linear(store, prefix + ".v", e, e, init);
  add_linear(store, prefix + ".o", e, e, init);
  add_layer_norm(store, prefix + ".ln2", e);
  add_linear(store, prefix + ".ffn1", e, cfg.ffn_hidden, init);
  add_linear(store, prefix + ".ffn2", cfg.ffn_hidden, e, init);
}

// Single-head cross-attention from base queries (R,E) to a set (BS,M,E),
// followed by a residual feed-forward layer. Returns (BS,R,E) and weights (BS,R,M).
std::pair<Var, Var> cross_attend(Tape& tape, ParamStore& store, const std::string& prefix, Var base,
                                 Var set) {
  const std::size_t rows = set.dim(0), r = base.dim(0), e = base.dim(1);
  Var kv_in = apply_layer_norm(tape, store, prefix + ".ln1", set);
  Var k = apply_linear(tape, store, prefix + ".k", kv_in);
  Var v = apply_linear(tape, store, prefix + ".v", kv_in);
  Var q = broadcast_to(apply_linear(tape, store, prefix + ".q", base), Shape{rows, r, e});
  Var scores = scale(bmm(q, k, true), static_cast<Real>(1.0 / std::sqrt(static_cast<double>(e))));
  Var attn = softmax(scores);
  Var ctx = bmm(attn, v);
  Var h = add(broadcast_to(base, Shape{rows, r, e}), apply_linear(tape, store, prefix + ".o", ctx));
  return {feed_forward(tape, store, prefix, h), attn};
}

}  // namespace

Array tokenize(const Array& windows, std::size_t patch) {
  if (windows.rank() != 3) throw std::invalid_argument("tokenize: expected B x C x T, got " + shape_string(windows.shape()));
  const std::size_t b = windows.dim(0), c = windows.dim(1), t = windows.dim(2);
  if (patch == 0 || t % patch != 0) {
    throw std::invalid_argument("tokenize: window length " + std::to_string(t) + " is not divisible by patch " +
                                std::to_string(patch));
  }
  const std::size_t s = t / patch;
  Array out(Shape{b * s, c, patch});
  const Real* in = windows.data().data();
  Real* o = out.data().data();
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t si = 0; si < s; ++si)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < patch; ++p)
          o[((bi * s + si) * c + ci) * patch + p] = in[(bi * c + ci) * t + si * patch + p];
  return out;
}

Array untokenize(const Array& patches, std::size_t batch) {
  if (patches.rank() != 3 || batch == 0 || patches.dim(0) % batch != 0) {
    throw std::invalid_argument("untokenize: cannot split " + shape_string(patches.shape()) + " into " +
                                std::to_string(batch) + " windows");
  }
  const std::size_t s = patches.dim(0) / batch, c = patches.dim(1), patch = patches.dim(2);
  Array out(Shape{batch, c, s * patch});
  const Real* in = patches.data().data();
  Real* o = out.data().data();
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t si = 0; si < s; ++si)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < patch; ++p)
          o[(bi * c + ci) * s * patch + si * patch + p] = in[((bi * s + si) * c + ci) * patch + p];
  return out;
}

Array spectral_features(const Array& patches) {
  const std::size_t p = patches.shape().back();
  const std::size_t bins = p / 2 + 1;
  const std::size_t rows = patches.size() / p;
  std::vector<double> cs(p * bins), sn(p * bins);
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t t = 0; t < p; ++t) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>((k * t) % p) / static_cast<double>(p);
      cs[k * p + t] = std::cos(w);
      sn[k * p + t] = std::sin(w);
    }
  }
  Shape shape = patches.shape();
  shape.back() = bins;
  Array out(shape);
  const Real* in = patches.data().data();
  Real* o = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = in + r * p;
    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0, im = 0;
      for (std::size_t t = 0; t < p; ++t) {
        re += x[t] * cs[k * p + t];
        im -= x[t] * sn[k * p + t];
      }
      o[r * bins + k] = static_cast<Real>(std::log1p(std::hypot(re, im)));
    }
  }
  return out;
}

void add_encoder_params(ParamStore& store, const ModelConfig& cfg, const Rng& init, bool mask_token) {
  cfg.validate();
  const std::size_t k = cfg.conv_kernel, f1 = cfg.conv_channels;
  add_uniform(store, "encoder.conv1.w", Shape{k, 1, f1}, 1.0 / std::sqrt(static_cast<double>(k)), init);
  add_constant(store, "encoder.conv1.b", Shape{f1}, 0);
  add_uniform(store, "encoder.conv2.w", Shape{k, f1, cfg.temporal_dim}, 1.0 / std::sqrt(static_cast<double>(k * f1)),
              init);
  add_constant(store, "encoder.conv2.b", Shape{cfg.temporal_dim}, 0);
  add_linear(store, "encoder.spectral", cfg.spectral_bins(), cfg.spectral_dim, init);
  add_linear(store, "encoder.pos1", 3, cfg.positional_hidden, init);
  add_linear(store, "encoder.pos2", cfg.positional_hidden, cfg.positional_dim, init);
  add_linear(store, "encoder.fuse", cfg.temporal_dim + cfg.spectral_dim + cfg.positional_dim, cfg.embed, init);
  if (mask_token) add_normal(store, "encoder.mask_token", Shape{cfg.embed}, 0.02, init);

  add_normal(store, "unify.queries", Shape{cfg.queries, cfg.embed}, 0.5, init);
  add_attention(store, "unify", cfg, init);
}

void add_decoder_params(ParamStore& store, const ModelConfig& cfg, const Rng& init) {
  cfg.validate();
  add_linear(store, "decoder.pos1", 3, cfg.positional_hidden, init);
  add_linear(store, "decoder.pos2", cfg.positional_hidden, cfg.embed, init);
  add_normal(store, "decoder.base_query", Shape{cfg.embed}, 0.5, init);
  add_attention(store, "decoder", cfg, init);
  add_layer_norm(store, "decoder.ln_out", cfg.embed);
  add_linear(store, "decoder.head", cfg.embed, cfg.patch, init);
}

Var embed(Tape& tape, ParamStore& store, const ModelConfig& cfg, const Array& patches, const Montage& montage,
          const std::vector<std::uint8_t>* mask) {
  if (patches.rank() != 3 || patches.dim(2) != cfg.patch || patches.dim(1) != montage.channels()) {
    throw std::invalid_argument("embed: patches " + shape_string(patches.shape()) + " do not match " +
                                std::to_string(montage.channels()) + " channels of length " +
                                std::to_string(cfg.patch));
  }
  const std::size_t rows = patches.dim(0), c = patches.dim(1), p = cfg.patch;

  Var x = tape.constant(patches.reshaped(Shape{rows * c, p, 1}));
  Var h1 = silu(conv1d(x, tape.param(store.get("encoder.conv1.w")), tape.param(store.get("encoder.conv1.b"))));
  Var h2 = silu(conv1d(h1, tape.param(store.get("encoder.conv2.w")), tape.param(store.get("encoder.conv2.b"))));
  Var temporal = reshape(mean(h2, 1), Shape{rows, c, cfg.temporal_dim});

  Var spectral = apply_linear(tape, store, "encoder.spectral", tape.constant(spectral_features(patches)));

  Var coords = tape.constant(montage.coord_array());
  Var pos = apply_linear(tape, store, "encoder.pos2", silu(apply_linear(tape, store, "encoder.pos1", coords)));
  pos = broadcast_to(pos, Shape{rows, c, cfg.positional_dim});

  const Var parts[] = {temporal, spectral, pos};
  Var tokens = apply_linear(tape, store, "encoder.fuse", concat(parts, 2));

  if (mask != nullptr) {
    if (mask->size() != rows) throw std::invalid_argument("embed: mask length does not match patch rows");
    Array keep(Shape{rows, c, cfg.embed}, 1);
    Array drop(Shape{rows, c, cfg.embed}, 0);
    const std::size_t stride = c * cfg.embed;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!(*mask)[r]) continue;
      for (std::size_t i = 0; i < stride; ++i) {
        keep[r * stride + i] = 0;
        drop[r * stride + i] = 1;
      }
    }
    Var token = tape.param(store.get("encoder.mask_token"));
    tokens = add(mul(tokens, tape.constant(std::move(keep))), mul(tape.constant(std::move(drop)), token));
  }
  return tokens;
}

Unified unify(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var tokens) {
  if (tokens.rank() != 3 || tokens.dim(2) != cfg.embed) {
    throw std::invalid_argument("unify: expected (B*S) x C x " + std::to_string(cfg.embed) + ", got " +
                                shape_string(tokens.shape()));
  }
  auto [latents, attn] = cross_attend(tape, store, "unify", tape.param(store.get("unify.queries")), tokens);
  return {latents, attn};
}

Decoded decode(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var latents, const Montage& montage) {
  if (latents.rank() != 3 || latents.dim(1) != cfg.queries || latents.dim(2) != cfg.embed) {
    throw std::invalid_argument("decode: expected (B*S) x " + std::to_string(cfg.queries) + " x " +
                                std::to_string(cfg.embed) + ", got " + shape_string(latents.shape()));
  }
  Var coords = tape.constant(montage.coord_array());
  Var base = apply_linear(tape, store, "decoder.pos2", silu(apply_linear(tape, store, "decoder.pos1", coords)));
  base = add(base, tape.param(store.get("decoder.base_query")));
  auto [h, attn] = cross_attend(tape, store, "decoder", base, latents);
  Var out = apply_linear(tape, store, "decoder.head", apply_layer_norm(tape, store, "decoder.ln_out", h));
  return {out, attn};
}

}  // namespace lumamba
