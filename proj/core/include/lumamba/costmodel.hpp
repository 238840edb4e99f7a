#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lumamba/model_config.hpp"

namespace lumamba {

enum class Family { ssm_unified, attention_per_token, attention_flattened };
std::string family_name(Family f);
Family parse_family(const std::string& name);

struct ArchSpec {
  std::string name;
  Family family = Family::ssm_unified;
  std::size_t embed = 64;      // E
  std::size_t queries = 4;     // Q (ssm-unified and per-token latent width Q*E)
  std::size_t state = 16;      // N
  std::size_t expand = 2;
  std::size_t layers = 2;      // BiMamba blocks or transformer layers
  std::size_t heads = 4;
  std::size_t channels = 20;   // C
  std::size_t patch = 64;      // P
  std::size_t ffn_hidden = 128;
  std::size_t conv_channels = 8;
  std::size_t conv_kernel = 5;
  std::size_t temporal_dim = 16;
  std::size_t spectral_dim = 16;
  std::size_t positional_dim = 16;
  std::size_t positional_hidden = 32;
  std::size_t parameters = 0;  // resident parameter count
  std::string notes;
};

// Component names shared by all families, in CSV column order.
const std::vector<std::string>& cost_components();

struct FlopsProfile {
  std::size_t seq_len = 0;         // S, patches per channel
  std::vector<double> components;  // aligned with cost_components()
  double total = 0;
  double peak_memory_bytes = 0;    // largest activation + parameters, batch 1, 4-byte floats
  double component(const std::string& name) const;
};

// FLOPs count a multiply-accumulate as two.
FlopsProfile count_flops(const ArchSpec& spec, std::size_t seq_len);

// Multiply-accumulates of the selective scans alone: blocks x 2 directions x S x D_inner x (5N + 1).
std::uint64_t backbone_scan_macs(const ArchSpec& spec, std::size_t seq_len);

// The library model at a given config and channel count.
ArchSpec lumamba_spec(const ModelConfig& config, std::size_t channels);
// Desk-scale stand-ins sharing E, P and C with `reference`.
ArchSpec attention_per_token_spec(const ArchSpec& reference);
ArchSpec attention_flattened_spec(const ArchSpec& reference);

// Smallest S whose peak memory exceeds budget_bytes (searched up to 2^40).
std::optional<std::size_t> memory_crossing(const ArchSpec& spec, double budget_bytes);

// Powers of two from lo to hi inclusive (lo rounded up, hi rounded down).
std::vector<std::size_t> log_sweep(std::size_t lo, std::size_t hi);

// Least-squares slope of log(total FLOPs) on log(S) over S >= max(S) / 10.
double loglog_slope(const ArchSpec& spec, std::span<const std::size_t> seq_lens);

inline constexpr double kDefaultMemoryBudget = 64.0 * 1024 * 1024 * 1024;

// spec,family,S,flops_total,<components>,peak_mem_bytes,mem_crossing_S; one row per (spec, S).
std::string scaling_sweep_csv(std::span<const ArchSpec> specs, std::span<const std::size_t> seq_lens,
                              double budget_bytes = kDefaultMemoryBudget);

}  // namespace lumamba
