#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lumamba/array.hpp"
#include "lumamba/model.hpp"
#include "lumamba/rng.hpp"
#include "lumamba/tape.hpp"

namespace lumamba {

// Patch masking shared across channels: entry b*S + s is 1 when patch s of
// window b is hidden (the row order of tokenize).
struct MaskPlan {
  std::size_t windows = 0;
  std::size_t patches = 0;  // S
  double ratio = 0.6;
  std::vector<std::uint8_t> masked;

  bool at(std::size_t window, std::size_t patch) const { return masked[window * patches + patch] != 0; }
  std::size_t masked_count(std::size_t window) const;
  std::size_t total_masked() const;
};

// Exactly round(ratio * S) patches per window, uniformly at random.
MaskPlan mask_patches(std::size_t windows, std::size_t patches, double ratio, const Rng& rng);

// Mean squared error over the masked patches (all channels); pred is (B*S, C, P).
Var recon_loss(Var pred, const Array& target, const MaskPlan& plan);

struct ViewSet {
  std::size_t global_length = 0;
  std::size_t local_length = 0;
  // offsets[v][b]: start sample of view v in window b; global views first.
  std::vector<std::vector<std::size_t>> global_offsets;
  std::vector<std::vector<std::size_t>> local_offsets;
};

// Defaults for the view lengths: 0.75 and 0.25 of the window, rounded down to a multiple of P.
std::size_t default_global_length(std::size_t window, std::size_t patch);
std::size_t default_local_length(std::size_t window, std::size_t patch);

ViewSet sample_views(std::size_t windows, std::size_t window_length, std::size_t patch, std::size_t global_length,
                     std::size_t local_length, const Rng& rng, std::size_t n_global = 2, std::size_t n_local = 4);

// windows (B, C, T) -> (B, C, length) starting at offsets[b].
Array crop(const Array& windows, std::span<const std::size_t> offsets, std::size_t length);

// Encoder, unification and backbone, then the mean over S: (B, Q*E).
Var embed_view(Tape& tape, Model& model, const Array& view, const Montage& montage, SsmOptions options = {});

// (1/N_local) sum_i ||mean_g(v_global) - v_local,i||^2, averaged over the batch.
// locals (N_l, B, F), globals (N_g, B, F).
Var jepa_pred_loss(Var locals, Var globals);

// Closed-form Epps-Pulley statistic of already standardized samples.
double epps_pulley(std::span<const double> z);
// Per-column statistic of projections (M, K) after standardizing each column
// by its mean and (population) standard deviation + 1e-8. Returns (K).
Var epps_pulley_columns(Var projections);
// K random unit directions in `dim` dimensions, as a (dim, K) matrix.
Array random_directions(std::size_t dim, std::size_t slices, const Rng& rng);
// Mean statistic over slices of embeddings (M, F); M >= 8.
Var sigreg(Var embeddings, std::size_t slices, const Rng& rng);

enum class Regime { recon, lejepa, mixed };
Regime parse_regime(const std::string& name);
std::string regime_name(Regime regime);

struct LossReport {
  double recon = 0;
  double jepa_pred = 0;
  double sigreg = 0;
  double lambda = 0;
  double total = 0;
};

// recon-only: total = recon; lejepa: lambda*(jepa + sigreg); mixed: recon + lambda*(jepa + sigreg).
LossReport mixed_loss(double recon, double jepa_pred, double sigreg, double lambda, Regime regime = Regime::mixed);

struct SslConfig {
  Regime regime = Regime::mixed;
  double lambda = 0.5;
  std::size_t slices = 60;
  double mask_ratio = 0.6;
  std::size_t n_global = 2;
  std::size_t n_local = 4;
  std::size_t global_length = 0;  // 0 selects the default
  std::size_t local_length = 0;
};

struct SslStep {
  Var total;
  LossReport report;
};

// Builds the selected objective on one batch of windows (B, C, T). `rng` supplies
// the "mask", "views" and "slices" streams.
SslStep ssl_objective(Tape& tape, Model& model, const Array& windows, const Montage& montage, const SslConfig& config,
                      const Rng& rng, SsmOptions options = {});

}  // namespace lumamba
