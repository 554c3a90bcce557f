#include "melkit/feature_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mel {

namespace {

static_assert(sizeof(float) == 4, "requires 32-bit IEEE floats");

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.append(reinterpret_cast<char*>(buf), sizeof(T));
}

void put_f32_le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_le<std::uint32_t>(out, bits);
}

class Reader {
 public:
  Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw FeatureStoreError(FeatureStoreError::Code::io, "cannot open " + path.string());
  }

  bool read_raw(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }

  template <typename T>
  bool read_le(T& out) {
    unsigned char buf[sizeof(T)];
    if (!read_raw(buf, sizeof(T))) return false;
    out = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) out |= static_cast<T>(buf[i]) << (8 * i);
    return true;
  }

 private:
  std::ifstream in_;
};

}  // namespace

void write_feature_store(const FeatureMap& entries, const std::filesystem::path& path) {
  std::size_t dim = 0;
  for (const auto& [id, vec] : entries) {
    if (dim == 0) dim = vec.size();
    if (vec.empty() || vec.size() != dim)
      throw FeatureStoreError(FeatureStoreError::Code::dim_mismatch,
                              "non-uniform vector dimension at id '" + id + "'");
  }

  std::string out;
  out.append(kFeatureStoreMagic, 4);
  put_le<std::uint32_t>(out, kFeatureStoreVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(entries.size()));
  for (const auto& [id, vec] : entries) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.append(id);
    for (float f : vec) put_f32_le(out, f);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FeatureStoreError(FeatureStoreError::Code::io, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FeatureStoreError(FeatureStoreError::Code::io, "short write to " + path.string());
}

FeatureMap read_feature_store(const std::filesystem::path& path, std::uint32_t expect_dim) {
  Reader r(path);

  char magic[4];
  if (!r.read_raw(magic, 4))
    throw FeatureStoreError(FeatureStoreError::Code::truncated, "truncated header in " + path.string());
  if (std::memcmp(magic, kFeatureStoreMagic, 4) != 0)
    throw FeatureStoreError(FeatureStoreError::Code::bad_magic, "bad magic in " + path.string());

  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  if (!r.read_le(version) || !r.read_le(dim) || !r.read_le(count))
    throw FeatureStoreError(FeatureStoreError::Code::truncated, "truncated header in " + path.string());
  if (version != kFeatureStoreVersion)
    throw FeatureStoreError(FeatureStoreError::Code::bad_version,
                            "unsupported version " + std::to_string(version) + " in " + path.string());
  if (expect_dim != 0 && dim != expect_dim)
    throw FeatureStoreError(FeatureStoreError::Code::dim_mismatch,
                            "store dim " + std::to_string(dim) + " != expected " + std::to_string(expect_dim));
  if (count > 0 && dim == 0)
    throw FeatureStoreError(FeatureStoreError::Code::dim_mismatch, "zero dim with nonzero count");

  FeatureMap map;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t id_len = 0;
    if (!r.read_le(id_len))
      throw FeatureStoreError(FeatureStoreError::Code::truncated,
                              "truncated at record " + std::to_string(i), i);
    std::string id(id_len, '\0');
    if (!r.read_raw(id.data(), id_len))
      throw FeatureStoreError(FeatureStoreError::Code::truncated,
                              "truncated id at record " + std::to_string(i), i);
    std::vector<float> vec(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      std::uint32_t bits = 0;
      if (!r.read_le(bits))
        throw FeatureStoreError(FeatureStoreError::Code::truncated,
                                "truncated payload at record " + std::to_string(i), i);
      std::memcpy(&vec[j], &bits, 4);
    }
    auto [it, inserted] = map.emplace(std::move(id), std::move(vec));
    if (!inserted)
      throw FeatureStoreError(FeatureStoreError::Code::duplicate_id,
                              "duplicate id '" + it->first + "' at record " + std::to_string(i), i);
  }
  return map;
}

FeatureMap read_feature_stores(const std::vector<std::filesystem::path>& paths) {
  FeatureMap all;
  for (const auto& p : paths) {
    FeatureMap one = read_feature_store(p);
    for (auto& [id, vec] : one) {
      auto [it, inserted] = all.emplace(id, std::move(vec));
      if (!inserted)
        throw FeatureStoreError(FeatureStoreError::Code::duplicate_id,
                                "id '" + it->first + "' appears in more than one store (" + p.string() + ")");
    }
  }
  return all;
}

std::string mention_key(const std::string& sample_id) { return "m:" + sample_id; }
std::string text_key(const std::string& sample_id) { return "t:" + sample_id; }
std::string image_key(const std::string& sample_id) { return "v:" + sample_id; }
std::string object_key(const std::string& sample_id, int index) {
  return "d:" + sample_id + ":" + std::to_string(index);
}
std::string face_key(const std::string& sample_id, int index) {
  return "f:" + sample_id + ":" + std::to_string(index);
}
std::string identity_key(const std::string& sample_id, int index) {
  return "s:" + sample_id + ":" + std::to_string(index);
}
std::string entity_key(const std::string& qid) { return "e:" + qid; }

}  // namespace mel
