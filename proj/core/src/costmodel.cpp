#include "lumamba/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lumamba/model.hpp"

namespace lumamba {
namespace {

enum Component { kTokenization, kUnification, kProjections, kScan, kAttention, kFfn, kCount };

double d(std::size_t v) { return static_cast<double>(v); }

// MACs of the per-patch embedding shared by every family.
double tokenization_macs(const ArchSpec& a, double rows) {
  const double p = d(a.patch), k = d(a.conv_kernel), bins = d(a.patch / 2 + 1);
  const double conv = p * k * d(a.conv_channels) + p * k * d(a.conv_channels) * d(a.temporal_dim);
  const double spectral = p * bins + bins * d(a.spectral_dim);
  const double position = 3 * d(a.positional_hidden) + d(a.positional_hidden) * d(a.positional_dim);
  const double fuse = d(a.temporal_dim + a.spectral_dim + a.positional_dim) * d(a.embed);
  return rows * d(a.channels) * (conv + spectral + position + fuse);
}

std::size_t ssm_dt_rank(const ArchSpec& a) { return dt_rank(a.queries * a.embed); }

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::ssm_unified: return "ssm-unified";
    case Family::attention_per_token: return "attention-per-token";
    case Family::attention_flattened: return "attention-flattened";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  for (Family f : {Family::ssm_unified, Family::attention_per_token, Family::attention_flattened})
    if (family_name(f) == name) return f;
  throw std::invalid_argument("unknown architecture family '" + name + "'");
}

const std::vector<std::string>& cost_components() {
  static const std::vector<std::string> names{"tokenization", "unification", "projections", "scan", "attention", "ffn"};
  return names;
}

double FlopsProfile::component(const std::string& name) const {
  const auto& names = cost_components();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown cost component '" + name + "'");
  return components[static_cast<std::size_t>(it - names.begin())];
}

std::uint64_t backbone_scan_macs(const ArchSpec& a, std::size_t s) {
  if (a.family != Family::ssm_unified) return 0;
  const std::uint64_t inner = a.expand * a.queries * a.embed;
  return static_cast<std::uint64_t>(a.layers) * 2 * s * inner * (5 * a.state + 1);
}

FlopsProfile count_flops(const ArchSpec& a, std::size_t s) {
  if (s == 0) throw std::invalid_argument("count_flops: S must be at least 1");
  if (a.embed == 0 || a.channels == 0 || a.patch == 0 || a.layers == 0 || a.heads == 0) {
    throw std::invalid_argument("count_flops: dimensions must be positive");
  }
  std::vector<double> macs(kCount, 0.0);
  const double e = d(a.embed), c = d(a.channels), f = d(a.ffn_hidden), ss = d(s);
  double largest = 0;  // elements
  switch (a.family) {
    case Family::ssm_unified: {
      const double q = d(a.queries), dm = q * e, inner = d(a.expand) * dm, n = d(a.state), r = d(ssm_dt_rank(a));
      macs[kTokenization] = tokenization_macs(a, ss);
      // Keys/values per channel token, scores and mixing per query, output and FFN per latent.
      macs[kUnification] = ss * (c * 2 * e * e + 2 * q * c * e + q * e * e + q * 2 * e * f);
      const double per_branch = dm * 2 * inner + inner * (r + 2 * n) + r * inner + inner * dm + inner;
      macs[kProjections] = d(a.layers) * ss * (2 * per_branch + 2 * dm * dm);
      macs[kScan] = static_cast<double>(backbone_scan_macs(a, s));
      largest = std::max({ss * c * d(a.patch) * d(a.temporal_dim), ss * inner * n, ss * c * e});
      break;
    }
    case Family::attention_per_token: {
      const double dm = d(a.queries) * e;
      macs[kTokenization] = tokenization_macs(a, ss);
      macs[kUnification] = ss * (c * 2 * e * e + 2 * d(a.queries) * c * e + d(a.queries) * e * e);
      macs[kProjections] = d(a.layers) * ss * 4 * dm * dm;
      macs[kAttention] = d(a.layers) * 2 * ss * ss * dm;
      macs[kFfn] = d(a.layers) * ss * 2 * dm * f;
      largest = std::max({ss * c * d(a.patch) * d(a.temporal_dim), d(a.heads) * ss * ss, ss * f});
      break;
    }
    case Family::attention_flattened: {
      const double tokens = ss * c;
      macs[kTokenization] = tokenization_macs(a, ss);
      macs[kProjections] = d(a.layers) * tokens * 4 * e * e;
      macs[kAttention] = d(a.layers) * 2 * tokens * tokens * e;
      macs[kFfn] = d(a.layers) * tokens * 2 * e * f;
      largest = std::max({ss * c * d(a.patch) * d(a.temporal_dim), d(a.heads) * tokens * tokens, tokens * f});
      break;
    }
  }
  FlopsProfile p;
  p.seq_len = s;
  for (double m : macs) {
    p.components.push_back(2 * m);
    p.total += 2 * m;
  }
  p.peak_memory_bytes = 4 * (largest + d(a.parameters));
  return p;
}

ArchSpec lumamba_spec(const ModelConfig& cfg, std::size_t channels) {
  ArchSpec a;
  a.name = "lumamba";
  a.family = Family::ssm_unified;
  a.embed = cfg.embed;
  a.queries = cfg.queries;
  a.state = cfg.state;
  a.expand = cfg.expand;
  a.layers = cfg.blocks;
  a.heads = 1;
  a.channels = channels;
  a.patch = cfg.patch;
  a.ffn_hidden = cfg.ffn_hidden;
  a.conv_channels = cfg.conv_channels;
  a.conv_kernel = cfg.conv_kernel;
  a.temporal_dim = cfg.temporal_dim;
  a.spectral_dim = cfg.spectral_dim;
  a.positional_dim = cfg.positional_dim;
  a.positional_hidden = cfg.positional_hidden;
  a.parameters = Model(cfg, 0, {.decoder = false, .head = true}).parameter_count();
  a.notes = "channel unification + BiMamba backbone";
  return a;
}

ArchSpec attention_per_token_spec(const ArchSpec& ref) {
  ArchSpec a = ref;
  a.name = "per-token-transformer";
  a.family = Family::attention_per_token;
  a.heads = 4;
  a.layers = 2;
  a.ffn_hidden = 4 * ref.queries * ref.embed;
  const double dm = d(ref.queries * ref.embed);
  a.parameters = static_cast<std::size_t>(d(a.layers) * (4 * dm * dm + 2 * dm * d(a.ffn_hidden)));
  a.notes = "unified latents, full self-attention over S (desk-scale stand-in)";
  return a;
}

ArchSpec attention_flattened_spec(const ArchSpec& ref) {
  ArchSpec a = ref;
  a.name = "flattened-transformer";
  a.family = Family::attention_flattened;
  a.heads = 4;
  a.layers = 2;
  a.ffn_hidden = 4 * ref.embed;
  const double e = d(ref.embed);
  a.parameters = static_cast<std::size_t>(d(a.layers) * (4 * e * e + 2 * e * d(a.ffn_hidden)));
  a.notes = "self-attention over all S*C patch tokens (desk-scale stand-in)";
  return a;
}

std::optional<std::size_t> memory_crossing(const ArchSpec& spec, double budget) {
  const std::size_t limit = std::size_t{1} << 40;
  if (count_flops(spec, 1).peak_memory_bytes > budget) return 1;
  std::size_t hi = 2;
  while (count_flops(spec, hi).peak_memory_bytes <= budget) {
    if (hi >= limit) return std::nullopt;
    hi *= 2;
  }
  std::size_t lo = hi / 2;  // lo fits, hi does not
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (count_flops(spec, mid).peak_memory_bytes > budget ? hi : lo) = mid;
  }
  return hi;
}

std::vector<std::size_t> log_sweep(std::size_t lo, std::size_t hi) {
  if (lo == 0 || hi < lo) throw std::invalid_argument("log_sweep: need 1 <= lo <= hi");
  std::vector<std::size_t> out;
  std::size_t v = 1;
  while (v < lo) v *= 2;
  for (; v <= hi; v *= 2) out.push_back(v);
  if (out.empty()) throw std::invalid_argument("log_sweep: no power of two in range");
  return out;
}

double loglog_slope(const ArchSpec& spec, std::span<const std::size_t> seq_lens) {
  if (seq_lens.empty()) throw std::invalid_argument("loglog_slope: empty sweep");
  const double top = d(*std::max_element(seq_lens.begin(), seq_lens.end()));
  std::vector<double> xs, ys;
  for (std::size_t s : seq_lens) {
    if (d(s) < top / 10) continue;
    xs.push_back(std::log(d(s)));
    ys.push_back(std::log(count_flops(spec, s).total));
  }
  if (xs.size() < 2) throw std::invalid_argument("loglog_slope: need two points in the top decade");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= d(xs.size());
  my /= d(xs.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

std::string scaling_sweep_csv(std::span<const ArchSpec> specs, std::span<const std::size_t> seq_lens, double budget) {
  std::ostringstream os;
  os.precision(17);
  os << "spec,family,S,flops_total";
  for (const auto& c : cost_components()) os << ",flops_" << c;
  os << ",peak_mem_bytes,mem_crossing_S\n";
  for (const ArchSpec& spec : specs) {
    const auto crossing = memory_crossing(spec, budget);
    for (std::size_t s : seq_lens) {
      const FlopsProfile p = count_flops(spec, s);
      os << spec.name << "," << family_name(spec.family) << "," << s << "," << p.total;
      for (double v : p.components) os << "," << v;
      os << "," << p.peak_memory_bytes << ",";
      if (crossing) os << *crossing;
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace lumamba
