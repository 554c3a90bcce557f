#pragma once
// Training loop (AdamW over the tape gradients), evaluation, and single-sample
// linking. Training is single-threaded and fully determined by (config, seed,
// data); evaluation may fan out over samples with ordered collection.

#include <cstdio>
#include <ostream>
#include <span>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "melkit/config.hpp"
#include "melkit/datamodel.hpp"
#include "melkit/features.hpp"
#include "melkit/fusion.hpp"
#include "melkit/objectives.hpp"
#include "melkit/params.hpp"
#include "melkit/retrieval.hpp"

namespace mel {

struct LinkedDataset {
  std::vector<MentionSample> train;
  std::vector<MentionSample> dev;
  std::vector<EntityRecord> entities;
  std::unordered_map<std::string, EntityRecord> entity_by_qid;
  std::unordered_map<std::string, CandidateSet> candidates;  // by sample_id
};

// Splits samples into train/dev (explicit dev file wins over dev_fraction),
// builds the name index, and precomputes the candidate set of every sample.
inline LinkedDataset prepare_dataset(const RunConfig& cfg, std::vector<MentionSample> samples,
                                     std::vector<MentionSample> dev_samples,
                                     std::vector<EntityRecord> entities) {
  LinkedDataset data;
  data.entities = std::move(entities);
  data.entity_by_qid = entity_map(data.entities);

  if (!dev_samples.empty()) {
    data.train = std::move(samples);
    data.dev = std::move(dev_samples);
  } else {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream split_rng = RngStream::tagged(cfg.seed, "split");
    split_rng.shuffle(order);
    const std::size_t n_dev =
        static_cast<std::size_t>(std::llround(cfg.dev_fraction * static_cast<double>(samples.size())));
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < n_dev) {
        data.dev.push_back(samples[order[i]]);
      } else {
        data.train.push_back(samples[order[i]]);
      }
    }
  }

  const bool typed = cfg.retrieval == "typed";
  EntityIndex index(data.entities, typed);
  auto make_candidates = [&](const MentionSample& s) {
    CandidateSet cands;
    if (typed) {
      std::string type_tag;
      if (auto it = data.entity_by_qid.find(s.gold_qid); it != data.entity_by_qid.end())
        type_tag = it->second.type_tag;
      cands = generate_candidates_typed(
          s.mention, type_tag, s.provided_candidates.value_or(std::vector<std::string>{}), index,
          static_cast<std::size_t>(cfg.lambda));
    } else {
      cands = generate_candidates(s.mention, index, static_cast<std::size_t>(cfg.lambda));
    }
    cands.sample_id = s.sample_id;
    return cands;
  };
  for (const auto& s : data.train) data.candidates.emplace(s.sample_id, make_candidates(s));
  for (const auto& s : data.dev) data.candidates.emplace(s.sample_id, make_candidates(s));
  return data;
}

// Entity encoding without a tape, op-for-op identical to encode_entity.
template <typename S>
Mat<S> encode_entity_plain(const Mat<S>& raw_er, const ModelParams<S>& p) {
  const auto& proj = p.projection(Modality::entity);
  Mat<S> y = raw_er * proj.W;
  y = y.rowwise() + proj.b.row(0);
  y = y.array().tanh().matrix();
  const S n = y.row(0).norm();
  if (n < S(1e-30)) return Mat<S>::Zero(1, y.cols());
  return y / n;
}

struct EvalMetrics {
  std::map<std::size_t, double> topk;
  std::size_t n = 0;
};

template <typename S>
Mat<S> query_embedding(const ModelParams<S>& params, const RawBundle<S>& raw) {
  Tape<S> tape;
  BoundParams<S> bound = bind_params(tape, params);
  FusionConfig<S> fcfg;
  fcfg.train = false;
  FusionVars<S> f = fusion_forward(tape, raw, bound, fcfg);
  return tape.value(f.g);
}

template <typename S>
EvalMetrics evaluate(const ModelParams<S>& params, const RunConfig& cfg,
                     std::span<const MentionSample> samples, const FeatureMap& features,
                     const std::unordered_map<std::string, CandidateSet>& candidates,
                     int workers = 1, std::vector<RankResult>* out_results = nullptr) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");

  // Encode each distinct candidate entity once.
  std::unordered_map<std::string, Mat<S>> entity_embeddings;
  for (const auto& s : samples) {
    for (const auto& qid : candidates.at(s.sample_id).qids) {
      if (entity_embeddings.contains(qid)) continue;
      entity_embeddings.emplace(qid,
                                encode_entity_plain(entity_feature<S>(features, qid, cfg.d_in), params));
    }
  }

  std::vector<RankResult> results(samples.size());
  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const MentionSample& s = samples[i];
      const RawBundle<S> raw = build_bundle<S>(features, s, cfg.d_in);
      const Mat<S> g = query_embedding(params, raw);
      const CandidateSet& cands = candidates.at(s.sample_id);
      std::vector<double> cosines(cands.qids.size());
      for (std::size_t c = 0; c < cands.qids.size(); ++c)
        cosines[c] = score(g, entity_embeddings.at(cands.qids[c])).value;
      results[i] = rank(cands.qids, cosines, s.gold_qid);
      results[i].sample_id = s.sample_id;
    }
  };

  if (workers <= 1) {
    run_range(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (samples.size() + workers - 1) / static_cast<std::size_t>(workers);
    for (int w = 0; w < workers; ++w) {
      const std::size_t begin = static_cast<std::size_t>(w) * per;
      const std::size_t end = std::min(samples.size(), begin + per);
      if (begin >= end) break;
      pool.emplace_back(run_range, begin, end);
    }
    for (auto& t : pool) t.join();
  }

  EvalMetrics metrics;
  metrics.n = samples.size();
  metrics.topk = topk_accuracy(results, cfg.topk);
  if (out_results) *out_results = std::move(results);
  return metrics;
}

template <typename S>
struct TrainOutcome {
  ModelParams<S> best_params;
  long best_step = 0;
  double best_t1 = 0.0;
  long steps_run = 0;
  std::string loss_log;  // append-only structured lines, bit-stable given seed
  double first_loss = 0.0;
  double last_loss = 0.0;
};

namespace detail {

template <typename S>
class AdamW {
 public:
  AdamW(double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {}

  void step(ModelParams<S>& params, const std::vector<Mat<S>>& grads) {
    std::vector<Mat<S>*> tensors;
    params.for_each_tensor([&](const std::string&, Mat<S>& t) { tensors.push_back(&t); });
    if (tensors.size() != grads.size()) throw std::logic_error("AdamW: grad count mismatch");
    if (m_.empty()) {
      for (auto* t : tensors) {
        m_.push_back(Mat<S>::Zero(t->rows(), t->cols()));
        v_.push_back(Mat<S>::Zero(t->rows(), t->cols()));
      }
    }
    ++t_;
    const S b1 = S(0.9), b2 = S(0.999), eps = S(1e-8);
    const S bc1 = S(1) - static_cast<S>(std::pow(0.9, static_cast<double>(t_)));
    const S bc2 = S(1) - static_cast<S>(std::pow(0.999, static_cast<double>(t_)));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      m_[i] = b1 * m_[i] + (S(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (S(1) - b2) * grads[i].cwiseProduct(grads[i]);
      const Mat<S> m_hat = m_[i] / bc1;
      const Mat<S> v_hat = v_[i] / bc2;
      const Mat<S> denom = (v_hat.array().sqrt() + eps).matrix();
      *tensors[i] -= static_cast<S>(lr_) *
                     (m_hat.cwiseQuotient(denom) + static_cast<S>(wd_) * (*tensors[i]));
    }
  }

 private:
  double lr_, wd_;
  long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// One optimizer step over a batch; returns the loss components.
struct StepLosses {
  double total = 0, fine = 0, coarse = 0, triplet = 0;
  bool fine_skipped = false;
};

template <typename S>
StepLosses train_step(ModelParams<S>& params, detail::AdamW<S>& opt, const RunConfig& cfg,
                         const LinkedDataset& data, const FeatureMap& features,
                         std::span<const std::size_t> batch_indices, RngStream& dropout_rng,
                         RngStream& negative_rng) {
  Tape<S> tape;
  BoundParams<S> bound = bind_params(tape, params);
  FusionConfig<S> fcfg;
  fcfg.train = true;
  fcfg.dropout = static_cast<S>(cfg.dropout);

  std::vector<std::string> batch_golds;
  batch_golds.reserve(batch_indices.size());
  for (std::size_t idx : batch_indices) batch_golds.push_back(data.train[idx].gold_qid);

  std::vector<FusionVars<S>> fused;
  fused.reserve(batch_indices.size());
  std::unordered_map<std::string, Var> entity_nodes;
  auto entity_node = [&](const std::string& qid) {
    auto it = entity_nodes.find(qid);
    if (it != entity_nodes.end()) return it->second;
    Var node = encode_entity(tape, entity_feature<S>(features, qid, cfg.d_in), bound);
    entity_nodes.emplace(qid, node);
    return node;
  };

  Var triplet_sum;
  std::size_t triplet_samples = 0;
  for (std::size_t pos = 0; pos < batch_indices.size(); ++pos) {
    const MentionSample& s = data.train[batch_indices[pos]];
    const RawBundle<S> raw = build_bundle<S>(features, s, cfg.d_in);
    fused.push_back(fusion_forward(tape, raw, bound, fcfg, &dropout_rng));

    const CandidateSet& cands = data.candidates.at(s.sample_id);
    const NegativeSet negs =
        sample_negatives(s.gold_qid, cands.qids, batch_golds, cfg.loss, negative_rng);
    std::vector<Var> neg_nodes;
    for (const auto& qid : negs.hard) neg_nodes.push_back(entity_node(qid));
    for (const auto& qid : negs.in_batch) neg_nodes.push_back(entity_node(qid));
    if (neg_nodes.empty()) continue;

    Var pos_node = entity_node(s.gold_qid);
    Var t = triplet_loss_node(tape, fused.back().g, pos_node, neg_nodes,
                              static_cast<S>(cfg.loss.margin));
    triplet_sum = triplet_sum.valid() ? tape.add(triplet_sum, t) : t;
    ++triplet_samples;
  }

  Var coarse = coarse_loss_node(tape, std::span<const FusionVars<S>>(fused),
                                static_cast<S>(cfg.loss.tau));
  bool fine_skipped = false;
  Var fine = fine_loss_node(tape, std::span<const FusionVars<S>>(fused),
                            static_cast<S>(cfg.loss.tau), &fine_skipped);
  Var triplet = triplet_samples > 0
                    ? tape.scale(triplet_sum, S(1) / static_cast<S>(triplet_samples))
                    : tape.scalar(S(0));
  Var total = total_loss_node(tape, fine, coarse, triplet, cfg.loss);

  StepLosses losses;
  losses.total = static_cast<double>(tape.value(total)(0, 0));
  losses.fine = static_cast<double>(tape.value(fine)(0, 0));
  losses.coarse = static_cast<double>(tape.value(coarse)(0, 0));
  losses.triplet = static_cast<double>(tape.value(triplet)(0, 0));
  losses.fine_skipped = fine_skipped;
  if (!std::isfinite(losses.total))
    throw std::runtime_error("non-finite training loss (fine=" + std::to_string(losses.fine) +
                             ", coarse=" + std::to_string(losses.coarse) +
                             ", triplet=" + std::to_string(losses.triplet) + ")");

  tape.backward(total);
  std::vector<Mat<S>> grads;
  for_each_bound(bound, [&](const std::string&, Var v) { grads.push_back(tape.grad(v)); });
  opt.step(params, grads);
  return losses;
}

template <typename S>
TrainOutcome<S> train_model(const RunConfig& cfg, const LinkedDataset& data,
                            const FeatureMap& features, std::ostream* log_stream = nullptr) {
  if (data.train.size() < static_cast<std::size_t>(cfg.batch_size))
    throw std::runtime_error("train: fewer training samples than one batch");

  ModelParams<S> params = init_params<S>(cfg.d_in, cfg.d, cfg.heads, cfg.seed);
  detail::AdamW<S> opt(cfg.lr, cfg.weight_decay);
  RngStream shuffle_rng = RngStream::tagged(cfg.seed, "shuffle");
  RngStream dropout_rng = RngStream::tagged(cfg.seed, "dropout");
  RngStream negative_rng = RngStream::tagged(cfg.seed, "negatives");

  TrainOutcome<S> out;
  out.best_params = params;
  long step = 0;
  long evals_since_best = 0;
  bool have_best = false;
  bool stop = false;

  auto log_line = [&](const std::string& line) {
    out.loss_log += line;
    out.loss_log += '\n';
    if (log_stream) (*log_stream) << line << '\n';
  };

  auto run_dev_eval = [&]() {
    if (data.dev.empty()) return;
    const EvalMetrics m = evaluate(params, cfg, std::span<const MentionSample>(data.dev), features,
                                   data.candidates, 1);
    std::string line = "eval step=" + std::to_string(step);
    for (const auto& [k, acc] : m.topk)
      line += " t" + std::to_string(k) + "=" + detail::format_g17(acc);
    log_line(line);
    const double t1 = m.topk.at(1);
    if (!have_best || t1 > out.best_t1) {  // earliest step wins ties
      have_best = true;
      out.best_t1 = t1;
      out.best_step = step;
      out.best_params = params;
      evals_since_best = 0;
    } else {
      ++evals_since_best;
      if (cfg.patience > 0 && evals_since_best >= cfg.patience) stop = true;
    }
  };

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    shuffle_rng.shuffle(order);
    const std::size_t batches = order.size() / static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t b = 0; b < batches && !stop; ++b) {
      std::span<const std::size_t> batch(order.data() + b * cfg.batch_size,
                                         static_cast<std::size_t>(cfg.batch_size));
      const StepLosses losses =
          train_step(params, opt, cfg, data, features, batch, dropout_rng, negative_rng);
      ++step;
      if (step == 1) out.first_loss = losses.total;
      out.last_loss = losses.total;
      log_line("step=" + std::to_string(step) + " loss=" + detail::format_g17(losses.total) +
               " fine=" + detail::format_g17(losses.fine) +
               " coarse=" + detail::format_g17(losses.coarse) +
               " triplet=" + detail::format_g17(losses.triplet));
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) run_dev_eval();
      if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
    }
  }
  // Final evaluation so a best checkpoint exists even for short runs.
  if (!data.dev.empty() && (!have_best || (cfg.eval_every > 0 && step % cfg.eval_every != 0)))
    run_dev_eval();
  if (!have_best) out.best_params = params;
  out.steps_run = step;
  return out;
}

struct LinkEntry {
  std::string qid;
  std::string name;
  double cosine = 0.0;
};

// Single-sample inference: ranked candidates, best first.
template <typename S>
std::vector<LinkEntry> link_sample(const ModelParams<S>& params, const RunConfig& cfg,
                                   const MentionSample& sample, const FeatureMap& features,
                                   const CandidateSet& cands,
                                   const std::unordered_map<std::string, EntityRecord>& entities,
                                   std::size_t top_k = 5) {
  const RawBundle<S> raw = build_bundle<S>(features, sample, cfg.d_in);
  const Mat<S> g = query_embedding(params, raw);
  std::vector<double> cosines(cands.qids.size());
  for (std::size_t c = 0; c < cands.qids.size(); ++c) {
    const Mat<S> e = encode_entity_plain(entity_feature<S>(features, cands.qids[c], cfg.d_in), params);
    cosines[c] = score(g, e).value;
  }
  RankResult ranked = rank(cands.qids, cosines, sample.gold_qid);
  std::vector<LinkEntry> out;
  for (std::size_t i = 0; i < ranked.ranked.size() && i < top_k; ++i) {
    LinkEntry entry;
    entry.qid = ranked.ranked[i].first;
    entry.cosine = ranked.ranked[i].second;
    if (auto it = entities.find(entry.qid); it != entities.end()) entry.name = it->second.name;
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace mel
