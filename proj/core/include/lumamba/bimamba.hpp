#pragma once

#include <cstddef>
#include <string>

#include "lumamba/model_config.hpp"
#include "lumamba/rng.hpp"
#include "lumamba/scan.hpp"
#include "lumamba/tape.hpp"

namespace lumamba {

// Options shared by the forward functions below.
struct SsmOptions {
  ScanKernel kernel = ScanKernel::sequential;
  ScanStats* stats = nullptr;
};

// Conv-free selective SSM branch of input width d, expansion `expand`, state n:
//   prefix.in (d -> 2*d*expand), prefix.x (-> dt_rank + 2n), prefix.dt (-> d*expand),
//   prefix.a_log, prefix.skip, prefix.out (d*expand -> d).
void add_ssm_params(ParamStore& store, const std::string& prefix, std::size_t d, std::size_t n, std::size_t expand,
                    const Rng& init);
// x (B,L,d) -> (B,L,d)
Var ssm_branch(Tape& tape, ParamStore& store, const std::string& prefix, Var x, SsmOptions options = {});

// prefix.ln, prefix.fwd.*, prefix.bwd.*, prefix.gate
void add_bimamba_params(ParamStore& store, const std::string& prefix, std::size_t d, std::size_t n,
                        std::size_t expand, const Rng& init);
// x + g*fwd(LN x) + (1-g)*rev(bwd(rev(LN x))), g = sigmoid(gate([yf; yb])).
Var bimamba_block(Tape& tape, ParamStore& store, const std::string& prefix, Var x, SsmOptions options = {});

// backbone.0 .. backbone.{blocks-1}
void add_backbone_params(ParamStore& store, const ModelConfig& cfg, const Rng& init);
// latents (B*S, Q, E) -> (B, S, Q*E)
Var backbone(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var latents, std::size_t batch,
             SsmOptions options = {});

// head.proj (Q*E -> E), head.ln, head.ssm.* (width E), head.out (E -> K)
void add_head_params(ParamStore& store, const ModelConfig& cfg, const Rng& init);
// features (B, S, Q*E) -> logits (B, K) from the last step of a unidirectional scan.
Var classifier_head(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var features, SsmOptions options = {});

}  // namespace lumamba
