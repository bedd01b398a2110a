#include "mtvssl/checkpoint.hpp"

#include <fstream>
#include <map>
#include <set>

#include "mtvssl/binary_io.hpp"

namespace mtvssl {

namespace {

constexpr char kMagic[4] = {'M', 'T', 'V', 'C'};
// Guards against allocating absurd amounts on corrupt headers.
constexpr std::uint64_t kMaxMetadataBytes = 64ull << 20;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

Precision precision_from_string(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f32 or f64)");
}

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

const CheckpointArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void Checkpoint::add(const std::string& name, const Tensor& value, Precision dtype) {
  if (find(name)) throw std::invalid_argument("duplicate checkpoint array '" + name + "'");
  arrays.push_back({name, dtype, value});
}

void Checkpoint::add_parameters(const std::string& prefix,
                                const std::vector<ConstNamedParam>& params, Precision dtype) {
  for (const auto& p : params) add(prefix + p.name, p.param->value, dtype);
}

std::vector<const CheckpointArray*> Checkpoint::with_prefix(const std::string& prefix) const {
  std::vector<const CheckpointArray*> out;
  for (const auto& a : arrays) {
    if (a.name.compare(0, prefix.size(), prefix) == 0) out.push_back(&a);
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write beside the target and rename so an interrupted save never leaves a
  // truncated file under the final name.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(kMagic, 4);
    binary::write_le<std::uint32_t>(os, kCheckpointVersion);
    const std::string meta = checkpoint.metadata.dump();
    binary::write_le<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(checkpoint.arrays.size()));
    for (const auto& a : checkpoint.arrays) {
      binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
      os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      binary::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(a.dtype));
      binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.value.rank()));
      for (std::size_t d : a.value.shape()) binary::write_le<std::uint64_t>(os, d);
      if (a.dtype == Precision::f32) {
        for (double v : a.value.values()) binary::write_le<float>(os, static_cast<float>(v));
      } else {
        for (double v : a.value.values()) binary::write_le<double>(os, v);
      }
    }
    os.flush();
    if (!os) throw std::runtime_error("failed writing " + tmp.string() + " (disk full?)");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  Checkpoint ck;
  try {
    char magic[4];
    binary::read_bytes(is, magic, 4, "magic");
    if (std::string(magic, 4) != std::string(kMagic, 4)) {
      throw CheckpointError("not a checkpoint file (bad magic)", 0);
    }
    const auto version_at = binary::tell(is);
    const auto version = binary::read_le<std::uint32_t>(is, "format version");
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    const auto meta_at = binary::tell(is);
    const auto meta_len = binary::read_le<std::uint64_t>(is, "metadata length");
    if (meta_len > kMaxMetadataBytes) throw CheckpointError("metadata length too large", meta_at);
    std::string meta(meta_len, '\0');
    binary::read_bytes(is, meta.data(), meta.size(), "metadata");
    try {
      ck.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("metadata is not valid JSON: ") + e.what(), meta_at + 8);
    }
    const auto count = binary::read_le<std::uint32_t>(is, "array count");
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto entry_at = binary::tell(is);
      const auto name_len = binary::read_le<std::uint32_t>(is, "array name length");
      if (name_len > 4096) throw CheckpointError("array name too long", entry_at);
      std::string name(name_len, '\0');
      binary::read_bytes(is, name.data(), name.size(), "array name");
      const auto dtype_at = binary::tell(is);
      const auto dtype = binary::read_le<std::uint8_t>(is, "array dtype");
      if (dtype > 1) throw CheckpointError("unknown dtype code for '" + name + "'", dtype_at);
      const auto rank = binary::read_le<std::uint32_t>(is, "array rank");
      if (rank > kMaxRank) throw CheckpointError("rank too large for '" + name + "'", dtype_at + 1);
      Shape shape(rank);
      for (auto& d : shape) d = binary::read_le<std::uint64_t>(is, "array dims");
      std::vector<double> data(shape_numel(shape));
      if (dtype == 0) {
        for (auto& v : data) v = binary::read_le<float>(is, "array data");
      } else {
        for (auto& v : data) v = binary::read_le<double>(is, "array data");
      }
      if (ck.find(name)) throw CheckpointError("duplicate array '" + name + "'", entry_at);
      ck.arrays.push_back({name, static_cast<Precision>(dtype), Tensor(shape, std::move(data))});
    }
  } catch (const binary::TruncatedError& e) {
    throw CheckpointError(std::string("truncated checkpoint ") + path.string() + ": " +
                              std::string(e.what()).substr(0, std::string(e.what()).rfind(" at byte")),
                          e.offset());
  }
  return ck;
}

void load_parameters(const Checkpoint& checkpoint, const std::string& prefix,
                     const std::vector<NamedParam>& params) {
  std::set<std::string> stored;
  for (const auto* a : checkpoint.with_prefix(prefix)) stored.insert(a->name.substr(prefix.size()));
  std::set<std::string> expected;
  for (const auto& p : params) expected.insert(p.name);
  if (stored != expected) {
    std::string missing, extra;
    for (const auto& n : expected) {
      if (!stored.count(n)) missing += " " + n;
    }
    for (const auto& n : stored) {
      if (!expected.count(n)) extra += " " + n;
    }
    throw std::invalid_argument("checkpoint parameter set mismatch under '" + prefix + "'" +
                                (missing.empty() ? "" : "; missing:" + missing) +
                                (extra.empty() ? "" : "; unexpected:" + extra));
  }
  for (const auto& p : params) {
    const auto* a = checkpoint.find(prefix + p.name);
    if (a->value.shape() != p.param->value.shape()) {
      throw std::invalid_argument("shape mismatch for '" + p.name + "': checkpoint " +
                                  shape_to_string(a->value.shape()) + ", model " +
                                  shape_to_string(p.param->value.shape()));
    }
    p.param->value = a->value;
  }
}

}  // namespace mtvssl
