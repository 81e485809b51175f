#include "sltgen/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "sltgen/error.hpp"

namespace sltgen {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(TensorRole role) {
  switch (role) {
    case TensorRole::weight: return "weight";
    case TensorRole::score: return "score";
    case TensorRole::mask: return "mask";
    case TensorRole::moment: return "moment";
  }
  return "?";
}

TensorRole parse_tensor_role(std::string_view name) {
  for (auto r : {TensorRole::weight, TensorRole::score, TensorRole::mask, TensorRole::moment}) {
    if (to_string(r) == name) return r;
  }
  throw FormatError("checkpoint: unknown tensor role '" + std::string(name) + "'");
}

const CheckpointTensor* Checkpoint::find(std::string_view name, TensorRole role) const {
  for (const auto& t : tensors) {
    if (t.role == role && t.name == name) return &t;
  }
  return nullptr;
}

bool Checkpoint::has_role(TensorRole role) const {
  for (const auto& t : tensors) {
    if (t.role == role) return true;
  }
  return false;
}

namespace {

std::vector<std::uint8_t> encode_f32(const Tensor& t) {
  std::vector<std::uint8_t> out(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
    for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

Tensor decode_f32(const Shape& shape, const std::vector<std::uint8_t>& bytes) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[4 * i + b]} << (8 * b);
    t[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return t;
}

std::vector<std::uint8_t> encode_bits(const Tensor& mask) {
  std::vector<std::uint8_t> out((mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

Tensor decode_bits(const Shape& shape, const std::vector<std::uint8_t>& bytes) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (bytes[i / 8] >> (i % 8)) & 1u ? 1.0 : 0.0;
  return t;
}

std::size_t encoded_size(TensorRole role, std::size_t count) {
  return role == TensorRole::mask ? (count + 7) / 8 : count * 4;
}

std::string file_for(const CheckpointTensor& t) {
  return std::string(to_string(t.role)) + "/" + t.name + (t.role == TensorRole::mask ? ".bits" : ".f32");
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: missing tensor file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string mismatch(const std::string& what) { return "checkpoint/architecture mismatch: " + what; }

// Copies tensors of `role` into the generator field selected by `field`,
// requiring a one-to-one match by name and shape.
template <typename Field>
void restore_role(Generator& generator, const Checkpoint& checkpoint, TensorRole role, Field field) {
  std::size_t stored = 0;
  for (const auto& t : checkpoint.tensors) stored += t.role == role ? 1 : 0;
  if (stored != generator.params().size()) {
    throw ConfigError(mismatch("checkpoint holds " + std::to_string(stored) + " " + std::string(to_string(role)) +
                               " tensors, generator has " + std::to_string(generator.params().size()) + " params"));
  }
  for (auto& p : generator.params()) {
    const auto* t = checkpoint.find(p.name, role);
    if (t == nullptr) throw ConfigError(mismatch("no " + std::string(to_string(role)) + " for '" + p.name + "'"));
    if (t->value.shape() != p.weight.shape()) {
      throw ConfigError(mismatch("'" + p.name + "' is " + shape_string(t->value.shape()) + " in checkpoint, " +
                                 shape_string(p.weight.shape()) + " in generator"));
    }
    field(p) = t->value;
  }
}

void add_adam(Checkpoint& c, const std::string& name, const AdamState& s) {
  c.tensors.push_back({name + ".adam_m", TensorRole::moment, s.m});
  c.tensors.push_back({name + ".adam_v", TensorRole::moment, s.v});
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  fs::create_directories(dir);
  json listing = json::array();
  for (const auto& t : checkpoint.tensors) {
    const auto file = file_for(t);
    fs::create_directories((dir / file).parent_path());
    write_bytes(dir / file, t.role == TensorRole::mask ? encode_bits(t.value) : encode_f32(t.value));
    listing.push_back({{"name", t.name},
                       {"role", to_string(t.role)},
                       {"shape", t.value.shape()},
                       {"file", file},
                       {"bytes", encoded_size(t.role, t.value.size())}});
  }
  json manifest{{"format_version", Checkpoint::kFormatVersion},
                {"config_hash", checkpoint.config_hash},
                {"step", checkpoint.step},
                {"moment_steps", checkpoint.moment_steps},
                {"config", checkpoint.config.empty() ? json::object() : json::parse(checkpoint.config)},
                {"tensors", listing}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("checkpoint: no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw FormatError(std::string("checkpoint manifest: ") + ex.what());
  }
  Checkpoint c;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != Checkpoint::kFormatVersion) {
      throw FormatError("checkpoint: unsupported format_version " + std::to_string(version));
    }
    c.config_hash = manifest.at("config_hash").get<std::string>();
    c.step = manifest.at("step").get<std::uint64_t>();
    c.moment_steps = manifest.at("moment_steps").get<std::uint64_t>();
    const auto& cfg = manifest.at("config");
    c.config = cfg.empty() ? std::string() : cfg.dump(2) + "\n";
    for (const auto& entry : manifest.at("tensors")) {
      CheckpointTensor t;
      t.name = entry.at("name").get<std::string>();
      t.role = parse_tensor_role(entry.at("role").get<std::string>());
      const auto shape = entry.at("shape").get<Shape>();
      const auto file = entry.at("file").get<std::string>();
      const auto declared = entry.at("bytes").get<std::size_t>();
      if (declared != encoded_size(t.role, numel(shape))) {
        throw FormatError("checkpoint: '" + t.name + "' declares " + std::to_string(declared) + " bytes for shape " +
                          shape_string(shape));
      }
      const auto bytes = read_bytes(dir / file);
      if (bytes.size() != declared) {
        throw FormatError("checkpoint: " + file + " has " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                          std::to_string(declared));
      }
      t.value = t.role == TensorRole::mask ? decode_bits(shape, bytes) : decode_f32(shape, bytes);
      c.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& ex) {
    throw FormatError(std::string("checkpoint manifest: ") + ex.what());
  }
  return c;
}

Checkpoint capture_checkpoint(const Generator& generator, const MomentBank* moments, const CaptureOptions& options,
                              std::uint64_t step, const std::string& config_json, const std::string& config_hash) {
  Checkpoint c;
  c.config_hash = config_hash;
  c.step = step;
  c.config = config_json;
  for (const auto& p : generator.params()) c.tensors.push_back({p.name, TensorRole::weight, p.weight});
  if (options.scores) {
    for (const auto& p : generator.params()) {
      if (p.score.size() != p.weight.size()) throw ConfigError("capture_checkpoint: '" + p.name + "' has no scores");
      c.tensors.push_back({p.name, TensorRole::score, p.score});
    }
  }
  if (options.masks) {
    for (const auto& p : generator.params()) c.tensors.push_back({p.name, TensorRole::mask, p.mask});
  }
  if (moments != nullptr) {
    c.moment_steps = moments->mean_state.empty() ? 0 : moments->mean_state.front().step_count;
    for (std::size_t j = 0; j < moments->mean.size(); ++j) {
      const std::string tap = "tap" + std::to_string(j);
      c.tensors.push_back({tap + ".mean", TensorRole::moment, moments->mean[j]});
      c.tensors.push_back({tap + ".stddev", TensorRole::moment, moments->stddev[j]});
      add_adam(c, tap + ".mean", moments->mean_state[j]);
      add_adam(c, tap + ".stddev", moments->stddev_state[j]);
    }
  }
  return c;
}

void restore_weights(Generator& generator, const Checkpoint& checkpoint) {
  restore_role(generator, checkpoint, TensorRole::weight, [](PrunableParam& p) -> Tensor& { return p.weight; });
}

void restore_scores(Generator& generator, const Checkpoint& checkpoint) {
  restore_role(generator, checkpoint, TensorRole::score, [](PrunableParam& p) -> Tensor& { return p.score; });
}

void restore_masks(Generator& generator, const Checkpoint& checkpoint) {
  restore_role(generator, checkpoint, TensorRole::mask, [](PrunableParam& p) -> Tensor& { return p.mask; });
  for (auto& p : generator.params()) p.freeze_layer = false;
}

std::optional<MomentBank> checkpoint_moments(const Checkpoint& checkpoint, double beta1, double beta2,
                                             double ema_lr) {
  std::vector<std::size_t> widths;
  while (const auto* t = checkpoint.find("tap" + std::to_string(widths.size()) + ".mean", TensorRole::moment)) {
    widths.push_back(t->value.size());
  }
  if (widths.empty()) return std::nullopt;
  MomentBank bank = MomentBank::zeros(widths, beta1, beta2, ema_lr);
  auto fetch = [&](const std::string& name, std::size_t width) {
    const auto* t = checkpoint.find(name, TensorRole::moment);
    if (t == nullptr || t->value.size() != width) throw FormatError("checkpoint: moment tensor '" + name + "' missing");
    return t->value;
  };
  for (std::size_t j = 0; j < widths.size(); ++j) {
    const std::string tap = "tap" + std::to_string(j);
    bank.mean[j] = fetch(tap + ".mean", widths[j]);
    bank.stddev[j] = fetch(tap + ".stddev", widths[j]);
    bank.mean_state[j].m = fetch(tap + ".mean.adam_m", widths[j]);
    bank.mean_state[j].v = fetch(tap + ".mean.adam_v", widths[j]);
    bank.stddev_state[j].m = fetch(tap + ".stddev.adam_m", widths[j]);
    bank.stddev_state[j].v = fetch(tap + ".stddev.adam_v", widths[j]);
    bank.mean_state[j].step_count = checkpoint.moment_steps;
    bank.stddev_state[j].step_count = checkpoint.moment_steps;
  }
  return bank;
}

}  // namespace sltgen
