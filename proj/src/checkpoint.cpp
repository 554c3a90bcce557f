#include "melkit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace mel {

namespace {

constexpr char kMagic[4] = {'M', 'E', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(buf), sizeof(T));
}

void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_le<std::uint64_t>(out, bits);
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_le<std::uint64_t>(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

std::string get_string(std::istream& in) {
  const std::uint32_t len = get_le<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw CheckpointError("truncated checkpoint");
  return s;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, ckpt.signature);
  put_string(out, ckpt.config_text);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.step));
  put_f64(out, ckpt.dev_t1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.d_in));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.d));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.att_shared.heads));

  std::uint32_t count = 0;
  const_cast<ModelParams<double>&>(ckpt.params).for_each_tensor([&](const std::string&, Mat<double>&) { ++count; });
  put_le<std::uint32_t>(out, count);
  const_cast<ModelParams<double>&>(ckpt.params).for_each_tensor([&](const std::string& name, Mat<double>& t) {
    put_string(out, name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) put_f64(out, t(i, j));
  });
  if (!out) throw CheckpointError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expect_signature) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("bad checkpoint magic in " + path.string());
  const std::uint32_t version = get_le<std::uint32_t>(in);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.signature = get_le<std::uint64_t>(in);
  if (expect_signature != 0 && ckpt.signature != expect_signature)
    throw CheckpointError("checkpoint model signature does not match the current config");
  ckpt.config_text = get_string(in);
  ckpt.step = static_cast<long>(get_le<std::uint64_t>(in));
  ckpt.dev_t1 = get_f64(in);
  const int d_in = static_cast<int>(get_le<std::uint32_t>(in));
  const int d = static_cast<int>(get_le<std::uint32_t>(in));
  const int heads = static_cast<int>(get_le<std::uint32_t>(in));

  ckpt.params = init_params<double>(d_in, d, heads, 0);
  const std::uint32_t count = get_le<std::uint32_t>(in);
  std::uint32_t seen = 0;
  ckpt.params.for_each_tensor([&](const std::string& name, Mat<double>& t) {
    if (seen >= count) throw CheckpointError("checkpoint is missing tensors");
    const std::string stored = get_string(in);
    if (stored != name)
      throw CheckpointError("checkpoint tensor order mismatch: expected " + name + ", found " + stored);
    const auto rows = get_le<std::uint32_t>(in);
    const auto cols = get_le<std::uint32_t>(in);
    if (rows != static_cast<std::uint32_t>(t.rows()) || cols != static_cast<std::uint32_t>(t.cols()))
      throw CheckpointError("checkpoint tensor shape mismatch for " + name);
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = get_f64(in);
    ++seen;
  });
  if (seen != count) throw CheckpointError("checkpoint has extra tensors");
  return ckpt;
}

}  // namespace mel
