#pragma once
// Versioned checkpoint container: every parameter tensor with shape metadata,
// the training step, dev T@1, and the model signature + resolved config of the
// run that produced it. Loading rejects signature or shape mismatches.

#include <cstdint>
#include <filesystem>
#include <string>

#include "melkit/config.hpp"
#include "melkit/params.hpp"

namespace mel {

struct Checkpoint {
  ModelParams<double> params;  // stored at double width regardless of training scalar
  long step = 0;
  double dev_t1 = 0.0;
  std::uint64_t signature = 0;
  std::string config_text;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// expect_signature 0 skips the compatibility check.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expect_signature = 0);

}  // namespace mel
