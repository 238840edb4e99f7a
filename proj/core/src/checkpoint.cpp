#include "lumamba/checkpoint.hpp"

#include <sstream>
#include <stdexcept>

#include "lumamba/binary_io.hpp"
#include "lumamba/keyvalue.hpp"

namespace lumamba {
namespace {

constexpr std::string_view kMagic = "LUMC";

std::string echo_text(const std::map<std::string, std::string>& echo) {
  std::string out;
  for (const auto& [k, v] : echo) out += k + " = " + v + "\n";
  return out;
}

void put_tensor(ByteWriter& w, const std::string& name, const Array& a) {
  if (name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: tensor name too long");
  w.str16(name);
  w.u8(static_cast<std::uint8_t>(a.rank()));
  for (std::size_t d : a.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (Real v : a.data()) w.f32(static_cast<float>(v));
}

}  // namespace

const Array* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, a] : tensors)
    if (n == name) return &a;
  return nullptr;
}

const std::string& Checkpoint::get(const std::string& key) const {
  auto it = echo.find(key);
  if (it == echo.end()) throw std::invalid_argument("checkpoint: missing '" + key + "' in config echo");
  return it->second;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kMagic);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, a] : ckpt.tensors) put_tensor(w, name, a);
  w.str32(echo_text(ckpt.echo));
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.raw(4) != kMagic) throw std::runtime_error("checkpoint: bad magic (not a LUMC file)");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str16();
    Shape shape(r.u8());
    for (auto& d : shape) d = r.u32();
    const std::size_t n = shape_size(shape);
    if (n * 4 > r.remaining()) throw std::runtime_error("checkpoint: truncated tensor " + name);
    Array a(shape);
    for (std::size_t k = 0; k < n; ++k) a[k] = static_cast<Real>(r.f32());
    ckpt.tensors.emplace_back(std::move(name), std::move(a));
  }
  ckpt.echo = parse_key_values(r.str32());
  if (r.remaining() != 0) throw std::runtime_error("checkpoint: trailing bytes after config echo");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint capture(const Model& model, const AdamW* optimizer, const std::map<std::string, std::string>& extra) {
  Checkpoint ckpt;
  for (const Parameter* p : model.params().all()) ckpt.tensors.emplace_back(p->name, p->value);
  ckpt.echo = parse_key_values(model.config().describe());
  ckpt.echo["parts.decoder"] = model.parts().decoder ? "1" : "0";
  ckpt.echo["parts.head"] = model.parts().head ? "1" : "0";
  if (optimizer != nullptr) {
    for (const auto& [name, m] : optimizer->first_moments()) ckpt.tensors.emplace_back("adam.m/" + name, m);
    for (const auto& [name, v] : optimizer->second_moments()) ckpt.tensors.emplace_back("adam.v/" + name, v);
    ckpt.echo["optimizer.steps"] = std::to_string(optimizer->steps());
  }
  for (const auto& [k, v] : extra) ckpt.echo[k] = v;
  return ckpt;
}

ModelConfig checkpoint_model_config(const Checkpoint& ckpt) {
  ModelConfig cfg;
  for (const auto& [k, v] : ckpt.echo) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

ModelParts checkpoint_parts(const Checkpoint& ckpt) {
  return {.decoder = ckpt.get("parts.decoder") == "1", .head = ckpt.get("parts.head") == "1"};
}

void load_parameters(ParamStore& store, const Checkpoint& ckpt) {
  std::ostringstream problems;
  bool bad = false;
  for (Parameter* p : store.all()) {
    const Array* a = ckpt.find(p->name);
    if (a == nullptr) {
      problems << "\n  " << p->name << ": missing";
      bad = true;
    } else if (a->shape() != p->value.shape()) {
      problems << "\n  " << p->name << ": checkpoint " << shape_string(a->shape()) << " vs model "
               << shape_string(p->value.shape());
      bad = true;
    }
  }
  if (bad) throw std::invalid_argument("checkpoint does not match the model:" + problems.str());
  for (Parameter* p : store.all()) p->value = *ckpt.find(p->name);
}

Model restore_model(const Checkpoint& ckpt) {
  Model model(checkpoint_model_config(ckpt), 0, checkpoint_parts(ckpt));
  load_parameters(model.params(), ckpt);
  return model;
}

void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt) {
  optimizer.first_moments().clear();
  optimizer.second_moments().clear();
  for (const auto& [name, a] : ckpt.tensors) {
    if (name.starts_with("adam.m/")) optimizer.first_moments()[name.substr(7)] = a;
    if (name.starts_with("adam.v/")) optimizer.second_moments()[name.substr(7)] = a;
  }
  auto it = ckpt.echo.find("optimizer.steps");
  optimizer.set_steps(it == ckpt.echo.end() ? 0 : std::stoull(it->second));
}

}  // namespace lumamba
