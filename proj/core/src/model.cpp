#include "lumamba/model.hpp"

#include <stdexcept>

#include "lumamba/ops.hpp"

namespace lumamba {

Model::Model(ModelConfig config, std::uint64_t seed, ModelParts parts) : config_(config), parts_(parts) {
  config_.validate();
  const Rng init(seed, "init");
  add_encoder_params(params_, config_, init, parts_.decoder);
  add_backbone_params(params_, config_, init);
  if (parts_.decoder) add_decoder_params(params_, config_, init);
  if (parts_.head) add_head_params(params_, config_, init);
}

Model::Encoded Model::encode(Tape& tape, const Array& windows, const Montage& montage,
                             const std::vector<std::uint8_t>* mask, SsmOptions options) {
  if (mask != nullptr && !parts_.decoder) throw std::logic_error("encode: masking requires the mask token");
  const std::size_t batch = windows.dim(0);
  const Array patches = tokenize(windows, config_.patch);
  Encoded out;
  out.tokens = embed(tape, params_, config_, patches, montage, mask);
  Unified u = unify(tape, params_, config_, out.tokens);
  out.latents = u.latents;
  out.attention = u.attention;
  out.features = backbone(tape, params_, config_, u.latents, batch, options);
  return out;
}

Var Model::reconstruct(Tape& tape, Var features, const Montage& montage) {
  if (!parts_.decoder) throw std::logic_error("reconstruct: model has no decoder");
  const std::size_t rows = features.dim(0) * features.dim(1);
  Var latents = reshape(features, Shape{rows, config_.queries, config_.embed});
  return decode(tape, params_, config_, latents, montage).patches;
}

Var Model::classify(Tape& tape, Var features, SsmOptions options) {
  if (!parts_.head) throw std::logic_error("classify: model has no classifier head");
  return classifier_head(tape, params_, config_, features, options);
}

}  // namespace lumamba
