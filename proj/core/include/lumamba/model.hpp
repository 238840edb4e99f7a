#pragma once

#include <cstdint>
#include <vector>

#include "lumamba/bimamba.hpp"
#include "lumamba/encoder.hpp"
#include "lumamba/model_config.hpp"
#include "lumamba/montage.hpp"
#include "lumamba/tape.hpp"

namespace lumamba {

struct ModelParts {
  bool decoder = true;  // reconstruction decoder plus mask token
  bool head = false;    // classifier head
};

// Encoder, unification, BiMamba backbone and optional decoder/head over one
// parameter store.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed, ModelParts parts = {});

  const ModelConfig& config() const { return config_; }
  const ModelParts& parts() const { return parts_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct Encoded {
    Var tokens;     // (B*S, C, E)
    Var latents;    // (B*S, Q, E) from unification
    Var attention;  // (B*S, Q, C)
    Var features;   // (B, S, Q*E) after the backbone
  };
  // windows (B, C, T); mask holds one 0/1 entry per patch row (B*S) or is null.
  Encoded encode(Tape& tape, const Array& windows, const Montage& montage,
                 const std::vector<std::uint8_t>* mask = nullptr, SsmOptions options = {});
  // features (B, S, Q*E) -> patches (B*S, C, P)
  Var reconstruct(Tape& tape, Var features, const Montage& montage);
  // features (B, S, Q*E) -> logits (B, K)
  Var classify(Tape& tape, Var features, SsmOptions options = {});

  std::size_t parameter_count() const { return params_.element_count(); }
  std::size_t head_parameter_count() const { return params_.element_count("head."); }

 private:
  ModelConfig config_;
  ModelParts parts_;
  ParamStore params_;
};

}  // namespace lumamba
