#pragma once
// Training objectives: mean-shifted contrastive loss at coarse (text/vision)
// and fine (face/object) granularity, triplet ranking loss over candidate
// entities, their weighted total, and negative sampling.

#include <span>
#include <string>
#include <vector>

#include "melkit/autograd.hpp"
#include "melkit/fusion.hpp"
#include "melkit/rng.hpp"

namespace mel {

struct LossConfig {
  double tau = 0.1;     // contrastive temperature
  double alpha = 1.0;   // coarse-loss weight
  double beta = 10.0;   // triplet weight
  double margin = 0.5;  // triplet margin
  int n_hard = 4;       // hard negatives per sample
  int n_inbatch = 1;    // in-batch negatives per sample
};

// Mean-shifted contrastive loss over paired rows. a_rows and b_rows are B×d
// with positives a_k <-> b_k. The 2B stacked rows are shifted by the batch
// mean and L2-normalized; each anchor contrasts its partner against the other
// 2B-2 rows at temperature tau. Rows whose shifted norm falls below 1e-8 get
// a deterministic jitter before normalizing.
template <typename S>
Var msc_loss_node(Tape<S>& tape, Var a_rows, Var b_rows, S tau) {
  const Eigen::Index b = tape.value(a_rows).rows();
  if (b < 2) throw std::invalid_argument("msc_loss: batch size must be >= 2");
  if (tape.value(b_rows).rows() != b || tape.value(b_rows).cols() != tape.value(a_rows).cols())
    throw std::invalid_argument("msc_loss: paired matrices must share shape");
  if (!(tau > S(0))) throw std::invalid_argument("msc_loss: tau must be > 0");

  const Eigen::Index n = 2 * b;
  Var stacked = tape.vconcat({a_rows, b_rows});
  Var shifted = tape.mean_shift_rows(stacked);

  const Mat<S>& sv = tape.value(shifted);
  bool needs_jitter = false;
  for (Eigen::Index i = 0; i < n; ++i)
    if (sv.row(i).norm() < S(1e-8)) needs_jitter = true;
  if (needs_jitter) {
    Mat<S> jitter = Mat<S>::Zero(n, sv.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sv.row(i).norm() >= S(1e-8)) continue;
      RngStream rng(mix64(0x6d5c0a11u ^ static_cast<std::uint64_t>(i)));
      for (Eigen::Index j = 0; j < sv.cols(); ++j)
        jitter(i, j) = static_cast<S>(1e-4 * rng.next_symmetric());
    }
    shifted = tape.add(shifted, tape.leaf(std::move(jitter)));
  }

  Var unit = tape.normalize_rows(shifted);
  Var sims = tape.scale(tape.matmul(unit, tape.transpose(unit)), S(1) / tau);

  // Self-similarities never enter the denominator.
  Mat<S> diag_mask = Mat<S>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) diag_mask(i, i) = S(-1e9);
  Var denom = tape.logsumexp_rows(tape.add(sims, tape.leaf(std::move(diag_mask))));

  Mat<S> partner = Mat<S>::Zero(n, n);
  for (Eigen::Index i = 0; i < b; ++i) {
    partner(i, b + i) = S(1);
    partner(b + i, i) = S(1);
  }
  Var positives = tape.rowwise_sum(tape.cmul(sims, tape.leaf(std::move(partner))));

  return tape.mean_all(tape.sub(denom, positives));
}

// Value-only convenience wrapper.
template <typename S>
S msc_loss(const Mat<S>& a_rows, const Mat<S>& b_rows, S tau) {
  Tape<S> tape;
  Var loss = msc_loss_node(tape, tape.leaf(a_rows), tape.leaf(b_rows), tau);
  return tape.value(loss)(0, 0);
}

// Coarse-level loss: MSC over the batch's (m_t, m_v) rows.
template <typename S>
Var coarse_loss_node(Tape<S>& tape, std::span<const FusionVars<S>> batch, S tau) {
  if (batch.size() < 2) throw std::invalid_argument("coarse_loss: batch size must be >= 2");
  std::vector<Var> mt, mv;
  mt.reserve(batch.size());
  mv.reserve(batch.size());
  for (const auto& f : batch) {
    mt.push_back(f.m_t);
    mv.push_back(f.m_v);
  }
  return msc_loss_node(tape, tape.vconcat(mt), tape.vconcat(mv), tau);
}

// Fine-level loss: MSC over (face row, matched object row) pairs pooled across
// the batch. Fewer than 2 pairs contributes a constant 0 (skipped != nullptr
// reports that).
template <typename S>
Var fine_loss_node(Tape<S>& tape, std::span<const FusionVars<S>> batch, S tau,
                   bool* skipped = nullptr) {
  std::vector<Var> face_rows, object_rows;
  for (const auto& f : batch) {
    for (const auto& [face, object] : f.fine_pairs) {
      face_rows.push_back(face);
      object_rows.push_back(object);
    }
  }
  if (face_rows.size() < 2) {
    if (skipped) *skipped = true;
    return tape.scalar(S(0));
  }
  if (skipped) *skipped = false;
  return msc_loss_node(tape, tape.vconcat(face_rows), tape.vconcat(object_rows), tau);
}

// Triplet ranking loss: mean over negatives of
//   max(cos(g, neg) - cos(g, pos) + margin, 0),
// so the minimizer pushes cos(g, pos) above every cos(g, neg) by the margin.
template <typename S>
Var triplet_loss_node(Tape<S>& tape, Var g, Var positive, std::span<const Var> negatives,
                      S margin) {
  if (negatives.empty()) throw std::invalid_argument("triplet_loss: needs at least one negative");
  Var cos_pos = cosine_node(tape, g, positive);
  Var margin_node = tape.scalar(margin);
  Var total;
  for (Var neg : negatives) {
    Var cos_neg = cosine_node(tape, g, neg);
    Var term = tape.relu(tape.add(tape.sub(cos_neg, cos_pos), margin_node));
    total = total.valid() ? tape.add(total, term) : term;
  }
  return tape.scale(total, S(1) / static_cast<S>(negatives.size()));
}

// L = L_fine + alpha · L_coarse + beta · L_triplet.
template <typename S>
Var total_loss_node(Tape<S>& tape, Var fine, Var coarse, Var triplet, const LossConfig& cfg) {
  return tape.add(fine, tape.add(tape.scale(coarse, static_cast<S>(cfg.alpha)),
                                 tape.scale(triplet, static_cast<S>(cfg.beta))));
}

struct NegativeSet {
  std::vector<std::string> hard;      // from the candidate set, gold excluded
  std::vector<std::string> in_batch;  // golds of other batch members
};

// Hard negatives: uniform sample without replacement of n_hard from the
// candidate qids minus the gold (all of them when fewer). In-batch negatives:
// n_inbatch golds of other batch members, never equal to this sample's gold.
inline NegativeSet sample_negatives(const std::string& gold_qid,
                                    const std::vector<std::string>& candidate_qids,
                                    const std::vector<std::string>& batch_golds,
                                    const LossConfig& cfg, RngStream& rng) {
  NegativeSet out;
  std::vector<std::string> pool;
  pool.reserve(candidate_qids.size());
  for (const auto& qid : candidate_qids)
    if (qid != gold_qid) pool.push_back(qid);
  out.hard = rng.sample_without_replacement(std::move(pool),
                                            static_cast<std::size_t>(std::max(cfg.n_hard, 0)));

  std::vector<std::string> others;
  others.reserve(batch_golds.size());
  for (const auto& qid : batch_golds)
    if (qid != gold_qid) others.push_back(qid);
  out.in_batch = rng.sample_without_replacement(
      std::move(others), static_cast<std::size_t>(std::max(cfg.n_inbatch, 0)));
  return out;
}

}  // namespace mel
