#pragma once
// Assembles per-sample RawBundles from feature-store vectors. Visual features
// are keyed by image_ref (shared between samples showing the same image);
// mention, text, and prompt vectors are keyed by sample_id because their text
// embeds the mention.

#include <string>

#include "melkit/datamodel.hpp"
#include "melkit/feature_store.hpp"
#include "melkit/fusion.hpp"

namespace mel {

class MissingFeatureError : public std::runtime_error {
 public:
  explicit MissingFeatureError(const std::string& key)
      : std::runtime_error("missing feature key '" + key + "'"), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

template <typename S>
Mat<S> feature_row(const FeatureMap& features, const std::string& key, int d_in) {
  auto it = features.find(key);
  if (it == features.end()) throw MissingFeatureError(key);
  if (static_cast<int>(it->second.size()) != d_in)
    throw std::runtime_error("feature '" + key + "' has dimension " +
                             std::to_string(it->second.size()) + ", expected " +
                             std::to_string(d_in));
  Mat<S> row(1, d_in);
  for (int j = 0; j < d_in; ++j) row(0, j) = static_cast<S>(it->second[j]);
  return row;
}

template <typename S>
RawBundle<S> build_bundle(const FeatureMap& features, const MentionSample& sample, int d_in) {
  RawBundle<S> raw;
  raw.m = feature_row<S>(features, mention_key(sample.sample_id), d_in);
  raw.t = feature_row<S>(features, text_key(sample.sample_id), d_in);

  int l = 0;
  if (sample.image_ref.has_value()) {
    const std::string& img = *sample.image_ref;
    if (features.contains(image_key(img))) raw.v = feature_row<S>(features, image_key(img), d_in);
    while (features.contains(object_key(img, l))) ++l;
    raw.objects.resize(l, d_in);
    for (int k = 0; k < l; ++k)
      raw.objects.row(k) = feature_row<S>(features, object_key(img, k), d_in).row(0);
  } else {
    raw.objects.resize(0, d_in);
  }

  std::vector<Mat<S>> face_rows;
  for (int k = 0; k < l; ++k) {
    if (!features.contains(face_key(sample.sample_id, k))) continue;
    face_rows.push_back(feature_row<S>(features, face_key(sample.sample_id, k), d_in));
    raw.face_obj.push_back(k);
  }
  raw.faces.resize(static_cast<Eigen::Index>(face_rows.size()), d_in);
  for (std::size_t i = 0; i < face_rows.size(); ++i) raw.faces.row(static_cast<Eigen::Index>(i)) = face_rows[i].row(0);

  std::vector<Mat<S>> ident_rows;
  for (int k = -1; k < l; ++k) {
    if (!features.contains(identity_key(sample.sample_id, k))) continue;
    ident_rows.push_back(feature_row<S>(features, identity_key(sample.sample_id, k), d_in));
  }
  raw.identities.resize(static_cast<Eigen::Index>(ident_rows.size()), d_in);
  for (std::size_t i = 0; i < ident_rows.size(); ++i)
    raw.identities.row(static_cast<Eigen::Index>(i)) = ident_rows[i].row(0);

  return raw;
}

// Entity-side raw ER embedding.
template <typename S>
Mat<S> entity_feature(const FeatureMap& features, const std::string& qid, int d_in) {
  return feature_row<S>(features, entity_key(qid), d_in);
}

}  // namespace mel
