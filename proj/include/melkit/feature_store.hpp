#pragma once
// Binary embedding store. External encoder adapters write this format; the
// trainer and CLI read it. Bit-exact round trip is part of the contract.
//
// Layout (all integers little-endian):
//   ┌──────────────────────────────────────────────┐
//   │ magic   "MELF"            4 bytes            │
//   │ version u32 (= 1)                            │
//   │ dim     u32                                  │
//   │ count   u64                                  │
//   │ record × count:                              │
//   │   id_len u32, id bytes (UTF-8), dim × f32    │
//   └──────────────────────────────────────────────┘

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mel {

inline constexpr char kFeatureStoreMagic[4] = {'M', 'E', 'L', 'F'};
inline constexpr std::uint32_t kFeatureStoreVersion = 1;

class FeatureStoreError : public std::runtime_error {
 public:
  enum class Code { bad_magic, bad_version, dim_mismatch, truncated, duplicate_id, io };

  FeatureStoreError(Code code, const std::string& what, std::size_t record_index = 0)
      : std::runtime_error(what), code_(code), record_index_(record_index) {}

  Code code() const { return code_; }
  std::size_t record_index() const { return record_index_; }

 private:
  Code code_;
  std::size_t record_index_;
};

using FeatureMap = std::map<std::string, std::vector<float>>;

// All vectors must share one dimension (> 0 unless the map is empty).
void write_feature_store(const FeatureMap& entries, const std::filesystem::path& path);

// expect_dim, when given, must match the header dim.
FeatureMap read_feature_store(const std::filesystem::path& path,
                              std::uint32_t expect_dim = 0);

// Reads several stores into one map; duplicate ids across files are an error.
FeatureMap read_feature_stores(const std::vector<std::filesystem::path>& paths);

// Key scheme tying samples and entities to stored vectors (see docs/data-formats.md).
std::string mention_key(const std::string& sample_id);
std::string text_key(const std::string& sample_id);
std::string image_key(const std::string& sample_id);
std::string object_key(const std::string& sample_id, int index);
std::string face_key(const std::string& sample_id, int index);
std::string identity_key(const std::string& sample_id, int index);
std::string entity_key(const std::string& qid);

}  // namespace mel
