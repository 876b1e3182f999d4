#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tunet/model.hpp"

namespace tunet::io {

// Little-endian layout:
//   "TUNW" | u32 version | u64 config bytes | config text (key = value lines)
//   | u64 record count | records
// record: u32 name bytes | name | u8 dtype | u32 rank | u64 dims[rank] | raw data
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

struct Record {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::uint64_t> shape;
  std::vector<unsigned char> bytes;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  KeyValues config;
  std::vector<Record> records;

  const Record* find(const std::string& name) const;

  template <typename T>
  void add(const std::string& name, const ad::Tensor<T>& t);
  template <typename T>
  void add(const std::string& name, const std::vector<T>& values);
  // Copies into an existing tensor; dtype and shape must match exactly.
  template <typename T>
  void read_into(const std::string& name, ad::Tensor<T>& t) const;
  template <typename T>
  std::vector<T> read_vector(const std::string& name) const;

  std::vector<unsigned char> serialize() const;
  static Checkpoint deserialize(const std::vector<unsigned char>& bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Parameters under "param.<name>", buffers under "buffer.<name>"; the model
// config fills the config block, followed by `extra_config`.
template <typename T>
Checkpoint model_checkpoint(const model::TUNet<T>& net, const KeyValues& extra_config = {});

// Restores every parameter and buffer; errors name a missing or mismatched record.
template <typename T>
void load_model_state(const Checkpoint& ckpt, model::TUNet<T>& net);

// Model config from a checkpoint's config block; non-model keys are skipped.
model::TUNetConfig model_config(const Checkpoint& ckpt);

}  // namespace tunet::io
