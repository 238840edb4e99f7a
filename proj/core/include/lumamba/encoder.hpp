#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lumamba/array.hpp"
#include "lumamba/model_config.hpp"
#include "lumamba/montage.hpp"
#include "lumamba/rng.hpp"
#include "lumamba/tape.hpp"

namespace lumamba {

// Windows B x C x T -> patches (B*S) x C x P with S = T / P.
Array tokenize(const Array& windows, std::size_t patch);
// Inverse of tokenize for a known batch size.
Array untokenize(const Array& patches, std::size_t batch);

// log(1 + |DFT_k|) for k = 0..P/2 of every patch: (..., P) -> (..., P/2 + 1).
Array spectral_features(const Array& patches);

// encoder.* (patch embedding, optionally the mask token) and unify.* parameters.
void add_encoder_params(ParamStore& store, const ModelConfig& cfg, const Rng& init, bool mask_token = true);
// decoder.* parameters.
void add_decoder_params(ParamStore& store, const ModelConfig& cfg, const Rng& init);

// Fused temporal/spectral/positional tokens (B*S) x C x E. When `mask` is given
// (one 0/1 entry per patch row, length B*S), masked rows are replaced by the
// learned mask token on every channel.
Var embed(Tape& tape, ParamStore& store, const ModelConfig& cfg, const Array& patches, const Montage& montage,
          const std::vector<std::uint8_t>* mask = nullptr);

struct Unified {
  Var latents;    // (B*S) x Q x E
  Var attention;  // (B*S) x Q x C, rows sum to one
};
Unified unify(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var tokens);

struct Decoded {
  Var patches;    // (B*S) x C x P
  Var attention;  // (B*S) x C x Q
};
// latents (B*S) x Q x E -> reconstructed patches for the given montage.
Decoded decode(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var latents, const Montage& montage);

}  // namespace lumamba
