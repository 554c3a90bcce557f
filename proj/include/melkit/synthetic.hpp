#pragma once
// Synthetic desk-scale benchmarks: entities with random unit ER embeddings and
// samples whose raw features are the gold embedding plus Gaussian noise. The
// paired-text mode makes pairs of entities share their mention/text signal so
// that only object features can disambiguate them.

#include <cstdint>
#include <vector>

#include "melkit/datamodel.hpp"
#include "melkit/feature_store.hpp"

namespace mel {

struct SyntheticSpec {
  int n_entities = 200;
  int d = 32;
  double sigma = 0.3;
  int objects_per_image = 3;
  int train_per_entity = 4;
  int heldout_per_entity = 1;
  bool paired_text = false;  // pairs (2i, 2i+1) share the mention/text signal
  std::uint64_t seed = 7;
};

struct SyntheticData {
  std::vector<EntityRecord> entities;
  std::vector<MentionSample> train;
  std::vector<MentionSample> heldout;
  FeatureMap features;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace mel
