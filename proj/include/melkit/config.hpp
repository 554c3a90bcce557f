#pragma once
// Run configuration: flat `key = value` text with documented keys. Every run
// writes its resolved config next to its outputs; checkpoints embed a model
// signature so shape-incompatible loads fail fast.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "melkit/objectives.hpp"

namespace mel {

struct RunConfig {
  // model dimensions
  int d_in = 512;  // raw encoder dimension (all modalities)
  int d = 512;     // shared/model dimension (also the joint dimension)
  int heads = 8;

  // training
  double dropout = 0.4;
  double lr = 5e-5;
  double weight_decay = 1e-3;
  int batch_size = 64;
  int epochs = 300;
  long max_steps = 0;  // 0 = bounded by epochs only
  int eval_every = 2000;
  int patience = 20;  // dev evaluations without a new best before stopping
  LossConfig loss;

  // retrieval / evaluation
  int lambda = 100;
  std::string retrieval = "plain";  // plain | typed
  double dev_fraction = 0.2;
  std::vector<std::size_t> topk = {1, 5, 10, 20};

  std::uint64_t seed = 42;

  // paths
  std::string samples;
  std::string dev_samples;  // optional; otherwise dev_fraction splits `samples`
  std::string entities;
  std::string feature_stores;  // comma-separated store files
  std::string out_dir = "out";
  std::string attributes;  // attribute fixture file, for `prepare`
  double identity_threshold = 0.5;
  std::size_t max_er_tokens = 256;

  // enhancement clients
  int min_client_interval_ms = 0;  // 0 = no rate limiting
  std::string kb_fixture;
  std::string llm_fixture;
  std::string refusal_patterns = "data/refusal_patterns.txt";
  std::string cache_dir;

  std::vector<std::filesystem::path> feature_store_paths() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical serialization: sorted keys, one `key = value` per line.
std::string serialize_config(const RunConfig& cfg);

// Hash of the shape-determining subset (d_in, d, heads); checkpoints must
// match it to load.
std::uint64_t model_signature(const RunConfig& cfg);

}  // namespace mel
