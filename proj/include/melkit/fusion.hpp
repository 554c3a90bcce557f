#pragma once
// The model core: non-linear projection into the shared space, cross-attention
// enhancer units, gated fusion producing the joint query embedding g, entity
// encoding, and cosine scoring.

#include <optional>
#include <vector>

#include "melkit/autograd.hpp"
#include "melkit/params.hpp"
#include "melkit/rng.hpp"

namespace mel {

// Raw (pre-projection) per-sample features, as read from the feature store.
template <typename S>
struct RawBundle {
  Mat<S> m;                   // 1 × d_in mention embedding
  Mat<S> t;                   // 1 × d_in text embedding
  std::optional<Mat<S>> v;    // 1 × d_in whole-image embedding
  Mat<S> objects;             // l × d_in detected-object rows (l may be 0)
  Mat<S> faces;               // nf × d_in encoded face prompts
  std::vector<int> face_obj;  // object index per face row, |face_obj| == nf
  Mat<S> identities;          // ns × d_in encoded identity prompts
};

template <typename S>
struct FusionConfig {
  S dropout = S(0.4);
  bool train = false;
};

// Node handles for one sample's forward pass.
template <typename S>
struct FusionVars {
  Var m, m_t, m_v, m_f, m_s;  // 1 × d
  Var g_m;                    // 1 × d
  Var g;                      // 1 × d_m
  // Projected fine-grained rows for the fine-level contrastive loss:
  // (face row, matching object row), pooled across the batch by the caller.
  std::vector<std::pair<Var, Var>> fine_pairs;
};

// tanh(X·W + b), row-wise.
template <typename S>
Var project(Tape<S>& tape, Var x, const typename BoundParams<S>::Proj& p) {
  return tape.tanh_(tape.add_rowvec(tape.matmul(x, p.W), p.b));
}

// Multi-head scaled dot-product attention of a single query row over X.
// No residual and no layer norm inside the unit; the residual is applied in
// gated_fuse. X must have at least one row.
template <typename S>
Var cross_att(Tape<S>& tape, Var q, Var X, const typename BoundParams<S>::Att& att) {
  const Eigen::Index d = tape.value(q).cols();
  if (tape.value(X).rows() < 1) throw std::invalid_argument("cross_att: empty key set");
  if (tape.value(X).cols() != d) throw std::invalid_argument("cross_att: shape mismatch");
  if (d % att.heads != 0) throw std::invalid_argument("cross_att: heads must divide d");
  const Eigen::Index dh = d / att.heads;

  Var Q = tape.matmul(q, att.Wq);
  Var K = tape.matmul(X, att.Wk);
  Var V = tape.matmul(X, att.Wv);

  std::vector<Var> heads;
  heads.reserve(att.heads);
  const S inv_sqrt = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
  for (int h = 0; h < att.heads; ++h) {
    Var qh = tape.slice_cols(Q, h * dh, dh);
    Var kh = tape.slice_cols(K, h * dh, dh);
    Var vh = tape.slice_cols(V, h * dh, dh);
    Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    Var weights = tape.softmax_rows(scores);
    heads.push_back(tape.matmul(weights, vh));
  }
  Var concat = att.heads == 1 ? heads[0] : tape.hconcat(heads);
  return tape.matmul(concat, att.Wo);
}

namespace detail {

// Inverted dropout as a constant mask; a nullptr rng (eval mode) is identity.
template <typename S>
Var dropout_row(Tape<S>& tape, Var x, S rate, bool train, RngStream* rng) {
  if (!train || rate <= S(0) || rng == nullptr) return x;
  const Eigen::Index cols = tape.value(x).cols();
  Mat<S> mask(1, cols);
  const S keep = S(1) - rate;
  for (Eigen::Index j = 0; j < cols; ++j)
    mask(0, j) = rng->next_unit() < static_cast<double>(rate) ? S(0) : S(1) / keep;
  return tape.cmul(x, tape.leaf(std::move(mask)));
}

}  // namespace detail

// Projects every modality into the shared space, runs the three enhancer
// units (text unit separate; vision/face/identity share one unit), and applies
// the degenerate-input fallbacks: no objects -> attend over the whole-image
// embedding if present, else zero; no faces / no identities -> zero.
template <typename S>
FusionVars<S> enhance_all(Tape<S>& tape, const RawBundle<S>& raw, const BoundParams<S>& params,
                          const FusionConfig<S>& cfg, RngStream* dropout_rng = nullptr) {
  const int d = params.d;
  FusionVars<S> out;

  out.m = project(tape, tape.leaf(raw.m), params.projection(Modality::mention));
  Var t = project(tape, tape.leaf(raw.t), params.projection(Modality::text));

  Var m_t = cross_att(tape, out.m, t, params.att_text);

  Var m_v;
  Var objects_proj;
  const bool has_objects = raw.objects.rows() > 0;
  if (has_objects) {
    objects_proj = project(tape, tape.leaf(raw.objects), params.projection(Modality::object));
    m_v = cross_att(tape, out.m, objects_proj, params.att_shared);
  } else if (raw.v.has_value()) {
    Var v = project(tape, tape.leaf(*raw.v), params.projection(Modality::image));
    m_v = cross_att(tape, out.m, v, params.att_shared);
  } else {
    m_v = tape.leaf(Mat<S>::Zero(1, d));
  }

  Var m_f;
  Var faces_proj;
  if (raw.faces.rows() > 0) {
    faces_proj = project(tape, tape.leaf(raw.faces), params.projection(Modality::face));
    m_f = cross_att(tape, out.m, faces_proj, params.att_shared);
  } else {
    m_f = tape.leaf(Mat<S>::Zero(1, d));
  }

  Var m_s;
  if (raw.identities.rows() > 0) {
    Var idents = project(tape, tape.leaf(raw.identities), params.projection(Modality::identity));
    m_s = cross_att(tape, out.m, idents, params.att_shared);
  } else {
    m_s = tape.leaf(Mat<S>::Zero(1, d));
  }

  out.m_t = detail::dropout_row(tape, m_t, cfg.dropout, cfg.train, dropout_rng);
  out.m_v = detail::dropout_row(tape, m_v, cfg.dropout, cfg.train, dropout_rng);
  out.m_f = detail::dropout_row(tape, m_f, cfg.dropout, cfg.train, dropout_rng);
  out.m_s = detail::dropout_row(tape, m_s, cfg.dropout, cfg.train, dropout_rng);

  if (has_objects && raw.faces.rows() > 0) {
    for (std::size_t k = 0; k < raw.face_obj.size(); ++k) {
      const int obj = raw.face_obj[k];
      if (obj < 0 || obj >= raw.objects.rows()) continue;
      out.fine_pairs.emplace_back(tape.slice_rows(faces_proj, static_cast<Eigen::Index>(k), 1),
                                  tape.slice_rows(objects_proj, obj, 1));
    }
  }
  return out;
}

// g_m = m + m_t + m_v; g = concat((1-eps)·g_m, eps·(m_f + m_s)) · W_g + b_g
// with eps = sigmoid(gate_logit). The concatenated reading is the one
// consistent with a 2d × d_m gate weight; a stacked-identity W_g collapses it
// to the plain scalar mix.
template <typename S>
void gated_fuse(Tape<S>& tape, FusionVars<S>& f, const BoundParams<S>& params) {
  f.g_m = tape.add(tape.add(f.m, f.m_t), f.m_v);
  Var attr = tape.add(f.m_f, f.m_s);
  Var eps = tape.sigmoid_(params.gate_logit);
  Var one_minus_eps = tape.sub(tape.scalar(S(1)), eps);
  Var fused = tape.hconcat({tape.scale_by(f.g_m, one_minus_eps), tape.scale_by(attr, eps)});
  f.g = tape.add_rowvec(tape.matmul(fused, params.gate_Wg), params.gate_bg);
}

// Full query-side forward pass for one sample.
template <typename S>
FusionVars<S> fusion_forward(Tape<S>& tape, const RawBundle<S>& raw, const BoundParams<S>& params,
                             const FusionConfig<S>& cfg, RngStream* dropout_rng = nullptr) {
  FusionVars<S> f = enhance_all(tape, raw, params, cfg, dropout_rng);
  gated_fuse(tape, f, params);
  return f;
}

// Entity side: project the raw ER embedding and L2-normalize. 1 × d unit row.
template <typename S>
Var encode_entity(Tape<S>& tape, const Mat<S>& raw_er, const BoundParams<S>& params) {
  return tape.normalize_rows(project(tape, tape.leaf(raw_er), params.projection(Modality::entity)));
}

// Cosine of two tape rows, as a 1×1 node.
template <typename S>
Var cosine_node(Tape<S>& tape, Var a, Var b) {
  return tape.sum_all(tape.cmul(tape.normalize_rows(a), tape.normalize_rows(b)));
}

struct CosineScore {
  double value = 0.0;
  bool degenerate = false;  // a zero-norm input forced the score to 0
};

// Plain cosine for ranking paths that do not need gradients.
template <typename S>
CosineScore score(const Mat<S>& a, const Mat<S>& b) {
  const double na = a.template cast<double>().norm();
  const double nb = b.template cast<double>().norm();
  if (na < 1e-30 || nb < 1e-30) return {0.0, true};
  const double dot = (a.template cast<double>().array() * b.template cast<double>().array()).sum();
  return {dot / (na * nb), false};
}

}  // namespace mel
