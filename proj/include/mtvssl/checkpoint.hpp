#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtvssl/layers.hpp"
#include "mtvssl/tensor.hpp"

namespace mtvssl {

// Container layout (all integers little-endian):
//   "MTVC" | u32 format version | u64 metadata length | metadata JSON (UTF-8)
//   u32 array count, then per array:
//     u32 name length | name | u8 dtype (0 = f32, 1 = f64) | u32 rank | u64 dims[rank] | data
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

Precision precision_from_string(const std::string& name);
std::string to_string(Precision p);

struct CheckpointArray {
  std::string name;
  Precision dtype = Precision::f32;
  Tensor value;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointArray> arrays;

  const CheckpointArray* find(const std::string& name) const;
  void add(const std::string& name, const Tensor& value, Precision dtype);
  // Every parameter as "<prefix><name>".
  void add_parameters(const std::string& prefix, const std::vector<ConstNamedParam>& params,
                      Precision dtype);
  std::vector<const CheckpointArray*> with_prefix(const std::string& prefix) const;
};

// Raised for malformed files; carries the byte offset where parsing failed.
class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies "<prefix><name>" arrays into params. The set of names under prefix
// must match exactly, and every shape must agree.
void load_parameters(const Checkpoint& checkpoint, const std::string& prefix,
                     const std::vector<NamedParam>& params);

}  // namespace mtvssl
