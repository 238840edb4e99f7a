#include "lumamba/model_config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace lumamba {

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> fields[] = {
      {"patch", patch},           {"embed", embed},
      {"queries", queries},       {"conv_channels", conv_channels},
      {"conv_kernel", conv_kernel}, {"temporal_dim", temporal_dim},
      {"spectral_dim", spectral_dim}, {"positional_dim", positional_dim},
      {"positional_hidden", positional_hidden}, {"ffn_hidden", ffn_hidden},
      {"state", state},           {"expand", expand},
      {"blocks", blocks},         {"classes", classes}};
  for (const auto& [name, value] : fields) {
    if (value == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
  }
  if (patch < 2) throw std::invalid_argument("model config: patch must be at least 2 samples");
  if (conv_kernel % 2 == 0) throw std::invalid_argument("model config: conv_kernel must be odd");
  if (classes < 2) throw std::invalid_argument("model config: classes must be at least 2");
}

std::string ModelConfig::describe() const {
  std::ostringstream os;
  os << "patch = " << patch << "\nembed = " << embed << "\nqueries = " << queries
     << "\nconv_channels = " << conv_channels << "\nconv_kernel = " << conv_kernel
     << "\ntemporal_dim = " << temporal_dim << "\nspectral_dim = " << spectral_dim
     << "\npositional_dim = " << positional_dim << "\npositional_hidden = " << positional_hidden
     << "\nffn_hidden = " << ffn_hidden << "\nstate = " << state << "\nexpand = " << expand
     << "\nblocks = " << blocks << "\nclasses = " << classes << "\n";
  return os.str();
}

bool ModelConfig::set(std::string_view key, std::string_view value) {
  std::size_t* const fields[] = {&patch, &embed, &queries, &conv_channels, &conv_kernel, &temporal_dim,
                                 &spectral_dim, &positional_dim, &positional_hidden, &ffn_hidden,
                                 &state, &expand, &blocks, &classes};
  const char* const names[] = {"patch", "embed", "queries", "conv_channels", "conv_kernel", "temporal_dim",
                               "spectral_dim", "positional_dim", "positional_hidden", "ffn_hidden",
                               "state", "expand", "blocks", "classes"};
  for (std::size_t i = 0; i < std::size(names); ++i) {
    if (key != names[i]) continue;
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || end != value.data() + value.size()) {
      throw std::invalid_argument("model config: " + std::string(key) + " expects a non-negative integer, got '" +
                                  std::string(value) + "'");
    }
    *fields[i] = v;
    return true;
  }
  return false;
}

}  // namespace lumamba
