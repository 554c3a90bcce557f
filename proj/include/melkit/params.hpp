#pragma once
// Trainable parameter tensors: per-modality projections into the shared
// space, two cross-attention units (the visual unit is shared by the object,
// face, and identity paths), and the gated-fusion weights.

#include <array>
#include <string>

#include "melkit/autograd.hpp"
#include "melkit/rng.hpp"

namespace mel {

enum class Modality { mention = 0, text, image, object, face, identity, entity };

inline constexpr int kModalityCount = 7;
inline constexpr const char* kModalityNames[kModalityCount] = {
    "mention", "text", "image", "object", "face", "identity", "entity"};

template <typename S>
struct ProjectionParams {
  Mat<S> W;  // d_in × d_m
  Mat<S> b;  // 1 × d_m
};

template <typename S>
struct AttentionParams {
  Mat<S> Wq, Wk, Wv, Wo;  // d × d
  int heads = 1;
};

template <typename S>
struct GateParams {
  Mat<S> Wg;          // 2d × d_m
  Mat<S> bg;          // 1 × d_m
  Mat<S> gate_logit;  // 1 × 1; mixing scalar is sigmoid(gate_logit)
};

template <typename S>
struct ModelParams {
  int d_in = 0;
  int d = 0;  // shared/model dimension; also the joint dimension d_m
  std::array<ProjectionParams<S>, kModalityCount> proj;
  AttentionParams<S> att_shared;  // vision/face/identity unit
  AttentionParams<S> att_text;
  GateParams<S> gate;

  const ProjectionParams<S>& projection(Modality m) const { return proj[static_cast<int>(m)]; }
  ProjectionParams<S>& projection(Modality m) { return proj[static_cast<int>(m)]; }

  // Visits every trainable tensor in a fixed order; the checkpoint format and
  // the optimizer state both rely on this order being stable.
  template <typename F>
  void for_each_tensor(F&& f) {
    for (int i = 0; i < kModalityCount; ++i) {
      f(std::string("proj.") + kModalityNames[i] + ".W", proj[i].W);
      f(std::string("proj.") + kModalityNames[i] + ".b", proj[i].b);
    }
    f("att.shared.Wq", att_shared.Wq);
    f("att.shared.Wk", att_shared.Wk);
    f("att.shared.Wv", att_shared.Wv);
    f("att.shared.Wo", att_shared.Wo);
    f("att.text.Wq", att_text.Wq);
    f("att.text.Wk", att_text.Wk);
    f("att.text.Wv", att_text.Wv);
    f("att.text.Wo", att_text.Wo);
    f("gate.Wg", gate.Wg);
    f("gate.bg", gate.bg);
    f("gate.logit", gate.gate_logit);
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& name, Mat<S>& t) { f(name, const_cast<const Mat<S>&>(t)); });
  }
};

namespace detail {

template <typename S>
Mat<S> xavier(int rows, int cols, RngStream& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat<S> w(rows, cols);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = static_cast<S>(a * rng.next_symmetric());
  return w;
}

}  // namespace detail

// Deterministic initialization. The gate logit starts at -2 so the attribute
// channel (face + identity) opens at sigmoid(-2) ≈ 0.12.
template <typename S>
ModelParams<S> init_params(int d_in, int d, int heads, std::uint64_t seed) {
  if (d % heads != 0) throw std::invalid_argument("init_params: d must be divisible by heads");
  RngStream rng = RngStream::tagged(seed, "init");
  ModelParams<S> p;
  p.d_in = d_in;
  p.d = d;
  for (int i = 0; i < kModalityCount; ++i) {
    p.proj[i].W = detail::xavier<S>(d_in, d, rng);
    p.proj[i].b = Mat<S>::Zero(1, d);
  }
  for (AttentionParams<S>* att : {&p.att_shared, &p.att_text}) {
    att->Wq = detail::xavier<S>(d, d, rng);
    att->Wk = detail::xavier<S>(d, d, rng);
    att->Wv = detail::xavier<S>(d, d, rng);
    att->Wo = detail::xavier<S>(d, d, rng);
    att->heads = heads;
  }
  p.gate.Wg = detail::xavier<S>(2 * d, d, rng);
  p.gate.bg = Mat<S>::Zero(1, d);
  p.gate.gate_logit = Mat<S>::Constant(1, 1, S(-2));
  return p;
}

// Tape handles for one forward/backward pass, mirroring ModelParams.
template <typename S>
struct BoundParams {
  struct Proj {
    Var W, b;
  };
  struct Att {
    Var Wq, Wk, Wv, Wo;
    int heads = 1;
  };
  int d_in = 0;
  int d = 0;
  std::array<Proj, kModalityCount> proj;
  Att att_shared, att_text;
  Var gate_Wg, gate_bg, gate_logit;

  const Proj& projection(Modality m) const { return proj[static_cast<int>(m)]; }
};

template <typename S>
BoundParams<S> bind_params(Tape<S>& tape, const ModelParams<S>& p) {
  BoundParams<S> b;
  b.d_in = p.d_in;
  b.d = p.d;
  for (int i = 0; i < kModalityCount; ++i) {
    b.proj[i].W = tape.leaf(p.proj[i].W);
    b.proj[i].b = tape.leaf(p.proj[i].b);
  }
  auto bind_att = [&](const AttentionParams<S>& a, typename BoundParams<S>::Att& out) {
    out.Wq = tape.leaf(a.Wq);
    out.Wk = tape.leaf(a.Wk);
    out.Wv = tape.leaf(a.Wv);
    out.Wo = tape.leaf(a.Wo);
    out.heads = a.heads;
  };
  bind_att(p.att_shared, b.att_shared);
  bind_att(p.att_text, b.att_text);
  b.gate_Wg = tape.leaf(p.gate.Wg);
  b.gate_bg = tape.leaf(p.gate.bg);
  b.gate_logit = tape.leaf(p.gate.gate_logit);
  return b;
}

// Visits the bound vars in the same order as ModelParams::for_each_tensor.
template <typename S, typename F>
void for_each_bound(const BoundParams<S>& b, F&& f) {
  for (int i = 0; i < kModalityCount; ++i) {
    f(std::string("proj.") + kModalityNames[i] + ".W", b.proj[i].W);
    f(std::string("proj.") + kModalityNames[i] + ".b", b.proj[i].b);
  }
  f("att.shared.Wq", b.att_shared.Wq);
  f("att.shared.Wk", b.att_shared.Wk);
  f("att.shared.Wv", b.att_shared.Wv);
  f("att.shared.Wo", b.att_shared.Wo);
  f("att.text.Wq", b.att_text.Wq);
  f("att.text.Wk", b.att_text.Wk);
  f("att.text.Wv", b.att_text.Wv);
  f("att.text.Wo", b.att_text.Wo);
  f("gate.Wg", b.gate_Wg);
  f("gate.bg", b.gate_bg);
  f("gate.logit", b.gate_logit);
}

template <typename S, typename T>
ModelParams<T> cast_params(const ModelParams<S>& p) {
  ModelParams<T> out;
  out.d_in = p.d_in;
  out.d = p.d;
  for (int i = 0; i < kModalityCount; ++i) {
    out.proj[i].W = p.proj[i].W.template cast<T>();
    out.proj[i].b = p.proj[i].b.template cast<T>();
  }
  auto cast_att = [](const AttentionParams<S>& a) {
    AttentionParams<T> r;
    r.Wq = a.Wq.template cast<T>();
    r.Wk = a.Wk.template cast<T>();
    r.Wv = a.Wv.template cast<T>();
    r.Wo = a.Wo.template cast<T>();
    r.heads = a.heads;
    return r;
  };
  out.att_shared = cast_att(p.att_shared);
  out.att_text = cast_att(p.att_text);
  out.gate.Wg = p.gate.Wg.template cast<T>();
  out.gate.bg = p.gate.bg.template cast<T>();
  out.gate.gate_logit = p.gate.gate_logit.template cast<T>();
  return out;
}

}  // namespace mel
