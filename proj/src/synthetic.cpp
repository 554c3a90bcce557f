#include "melkit/synthetic.hpp"

#include <Eigen/Dense>
#include <set>
#include <stdexcept>

#include "melkit/rng.hpp"

namespace mel {

namespace {

Eigen::VectorXd random_unit(RngStream& rng, int d) {
  Eigen::VectorXd v(d);
  for (;;) {
    for (int j = 0; j < d; ++j) v[j] = rng.next_gaussian();
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

std::vector<float> to_f32(const Eigen::VectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  return out;
}

Eigen::VectorXd noisy(const Eigen::VectorXd& base, double sigma, RngStream& rng) {
  Eigen::VectorXd v = base;
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += sigma * rng.next_gaussian();
  return v;
}

std::string random_name(RngStream& rng, std::set<std::string>& used) {
  for (;;) {
    std::string name;
    for (int i = 0; i < 8; ++i) name.push_back(static_cast<char>('a' + rng.next_below(26)));
    if (used.insert(name).second) return name;
  }
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.paired_text && spec.n_entities % 2 != 0)
    throw std::invalid_argument("make_synthetic: paired_text needs an even entity count");

  SyntheticData data;
  RngStream rng = RngStream::tagged(spec.seed, "synthetic");
  std::set<std::string> used_names;

  std::vector<Eigen::VectorXd> er(spec.n_entities);
  std::vector<Eigen::VectorXd> text_signal(spec.n_entities);
  std::string pair_base;
  for (int k = 0; k < spec.n_entities; ++k) {
    er[k] = random_unit(rng, spec.d);
    EntityRecord e;
    e.qid = "Q" + std::to_string(k);
    if (spec.paired_text) {
      // Pair members get near-identical names so fuzzy retrieval always puts
      // the confusable partner into the candidate set.
      if (k % 2 == 0) pair_base = random_name(rng, used_names);
      e.name = pair_base + (k % 2 == 0 ? "a" : "b");
    } else {
      e.name = random_name(rng, used_names);
    }
    e.type_tag = "person";
    e.er_text = "synthetic entity " + e.name;
    e.er_source = ErSource::static_page;
    data.entities.push_back(std::move(e));
    data.features[entity_key(data.entities.back().qid)] = to_f32(er[k]);
  }
  for (int k = 0; k < spec.n_entities; ++k) {
    if (spec.paired_text) {
      // Both members of a pair see the same ambiguous text signal.
      const int base = k - (k % 2);
      text_signal[k] = ((er[base] + er[base + 1]) * 0.5).normalized();
    } else {
      text_signal[k] = er[k];
    }
  }

  int next_sample = 0;
  auto add_sample = [&](int k, bool heldout) {
    const std::string sid = "s" + std::to_string(next_sample++);
    const std::string img = "img-" + sid;
    MentionSample s;
    s.sample_id = sid;
    s.mention = data.entities[static_cast<std::size_t>(k)].name;
    s.text = "about " + s.mention;
    s.image_ref = img;
    s.gold_qid = data.entities[static_cast<std::size_t>(k)].qid;

    data.features[mention_key(sid)] = to_f32(noisy(text_signal[k], spec.sigma, rng));
    data.features[text_key(sid)] = to_f32(noisy(text_signal[k], spec.sigma, rng));
    data.features[image_key(img)] = to_f32(noisy(er[k], spec.sigma, rng));
    for (int o = 0; o < spec.objects_per_image; ++o)
      data.features[object_key(img, o)] = to_f32(noisy(er[k], spec.sigma, rng));

    if (heldout) {
      data.heldout.push_back(std::move(s));
    } else {
      data.train.push_back(std::move(s));
    }
  };

  for (int k = 0; k < spec.n_entities; ++k) {
    for (int i = 0; i < spec.train_per_entity; ++i) add_sample(k, false);
    for (int i = 0; i < spec.heldout_per_entity; ++i) add_sample(k, true);
  }
  return data;
}

}  // namespace mel
