#include <catch2/catch_amalgamated.hpp>

#include "melkit/fusion.hpp"
#include "testutil.hpp"

using namespace mel;
using mel::test::gradcheck;
using mel::test::random_matrix;

namespace {

// Single-unit attention parameters with explicit weight matrices.
template <typename S>
typename BoundParams<S>::Att bind_att(Tape<S>& tape, const Mat<S>& wq, const Mat<S>& wk,
                                      const Mat<S>& wv, const Mat<S>& wo, int heads) {
  typename BoundParams<S>::Att att;
  att.Wq = tape.leaf(wq);
  att.Wk = tape.leaf(wk);
  att.Wv = tape.leaf(wv);
  att.Wo = tape.leaf(wo);
  att.heads = heads;
  return att;
}

template <typename S>
typename BoundParams<S>::Att identity_att(Tape<S>& tape, int d, int heads = 1) {
  const Mat<S> eye = Mat<S>::Identity(d, d);
  return bind_att<S>(tape, eye, eye, eye, eye, heads);
}

RawBundle<double> full_bundle(int d_in, RngStream& rng, int objects = 3, int faces = 2,
                              int identities = 2) {
  RawBundle<double> raw;
  raw.m = random_matrix(1, d_in, rng);
  raw.t = random_matrix(1, d_in, rng);
  raw.v = random_matrix(1, d_in, rng);
  raw.objects = random_matrix(objects, d_in, rng);
  raw.faces = random_matrix(faces, d_in, rng);
  for (int k = 0; k < faces; ++k) raw.face_obj.push_back(k % std::max(objects, 1));
  raw.identities = random_matrix(identities, d_in, rng);
  return raw;
}

}  // namespace

TEST_CASE("project - zero weights give the zero vector") {
  Tape<double> tape;
  typename BoundParams<double>::Proj proj{tape.leaf(Mat<double>::Zero(4, 3)),
                                          tape.leaf(Mat<double>::Zero(1, 3))};
  Mat<double> x = Mat<double>::Ones(1, 4);
  CHECK(tape.value(project(tape, tape.leaf(x), proj)).isZero());
}

TEST_CASE("project - scaled identity matches tanh(0.1)") {
  Tape<double> tape;
  const int d = 3;
  typename BoundParams<double>::Proj proj{tape.leaf(Mat<double>(0.1 * Mat<double>::Identity(d, d))),
                                          tape.leaf(Mat<double>::Zero(1, d))};
  Mat<double> e1 = Mat<double>::Zero(1, d);
  e1(0, 0) = 1.0;
  const Mat<double> y = tape.value(project(tape, tape.leaf(e1), proj));
  CHECK(y(0, 0) == Catch::Approx(0.099667994624955819).margin(1e-15));  // tanh(0.1), oracle
  CHECK(y(0, 1) == 0.0);
}

TEST_CASE("project - outputs stay inside the tanh range") {
  RngStream rng(4);
  Tape<double> tape;
  typename BoundParams<double>::Proj proj{tape.leaf(random_matrix(6, 5, rng, 0.4)),
                                          tape.leaf(random_matrix(1, 5, rng, 0.4))};
  const Mat<double> y = tape.value(project(tape, tape.leaf(random_matrix(4, 6, rng)), proj));
  CHECK((y.array().abs() < 1.0).all());
}

TEST_CASE("project - gradient matches finite differences") {
  RngStream rng(5);
  Mat<double> W = random_matrix(4, 3, rng, 0.5);
  Mat<double> b = random_matrix(1, 3, rng, 0.1);
  const Mat<double> x = random_matrix(1, 4, rng);

  auto loss = [&]() {
    Tape<double> tape;
    typename BoundParams<double>::Proj proj{tape.leaf(W), tape.leaf(b)};
    Var y = project(tape, tape.leaf(x), proj);
    return tape.value(tape.sum_all(tape.cmul(y, y)))(0, 0);
  };
  auto analytic = [&]() {
    Tape<double> tape;
    typename BoundParams<double>::Proj proj{tape.leaf(W), tape.leaf(b)};
    Var y = project(tape, tape.leaf(x), proj);
    tape.backward(tape.sum_all(tape.cmul(y, y)));
    return std::vector<Mat<double>>{tape.grad(proj.W), tape.grad(proj.b)};
  };
  CHECK(gradcheck({&W, &b}, loss, analytic) < 1e-4);
}

TEST_CASE("cross_att - single key with identity weights is the identity") {
  Tape<double> tape;
  const int d = 4;
  auto att = identity_att<double>(tape, d);
  RngStream rng(7);
  Mat<double> v = random_matrix(1, d, rng);
  Var out = cross_att(tape, tape.leaf(random_matrix(1, d, rng)), tape.leaf(v), att);
  CHECK((tape.value(out) - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_att - two identical rows still return that row") {
  Tape<double> tape;
  const int d = 4;
  auto att = identity_att<double>(tape, d);
  RngStream rng(8);
  Mat<double> v = random_matrix(1, d, rng);
  Mat<double> X(2, d);
  X.row(0) = v.row(0);
  X.row(1) = v.row(0);
  Var out = cross_att(tape, tape.leaf(random_matrix(1, d, rng)), tape.leaf(X), att);
  CHECK((tape.value(out) - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_att - d=2 oracle case") {
  // softmax(1/sqrt(2), 0) from tests/oracles/formula_oracle.py
  Tape<double> tape;
  auto att = identity_att<double>(tape, 2);
  Mat<double> q(1, 2), X(2, 2);
  q << 1, 0;
  X << 1, 0, 0, 1;
  const Mat<double> out = tape.value(cross_att(tape, tape.leaf(q), tape.leaf(X), att));
  CHECK(out(0, 0) == Catch::Approx(0.66976154932665688).margin(1e-12));
  CHECK(out(0, 1) == Catch::Approx(0.33023845067334312).margin(1e-12));
}

TEST_CASE("cross_att - permuting key rows leaves the output unchanged") {
  RngStream rng(9);
  const int d = 8;
  Mat<double> q = random_matrix(1, d, rng);
  Mat<double> X = random_matrix(5, d, rng);
  Mat<double> wq = random_matrix(d, d, rng, 0.4), wk = random_matrix(d, d, rng, 0.4),
              wv = random_matrix(d, d, rng, 0.4), wo = random_matrix(d, d, rng, 0.4);

  auto run = [&](const Mat<double>& keys) {
    Tape<double> tape;
    auto att = bind_att<double>(tape, wq, wk, wv, wo, 2);
    return Mat<double>(tape.value(cross_att(tape, tape.leaf(q), tape.leaf(keys), att)));
  };
  Mat<double> permuted(5, d);
  const int order[5] = {3, 0, 4, 2, 1};
  for (int i = 0; i < 5; ++i) permuted.row(i) = X.row(order[i]);
  CHECK((run(X) - run(permuted)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_att - output lies in the span of value-projected rows") {
  RngStream rng(10);
  const int d = 4;
  Mat<double> q = random_matrix(1, d, rng);
  Mat<double> X = random_matrix(2, d, rng);
  Mat<double> wq = random_matrix(d, d, rng, 0.5), wk = random_matrix(d, d, rng, 0.5),
              wv = random_matrix(d, d, rng, 0.5), wo = random_matrix(d, d, rng, 0.5);
  Tape<double> tape;
  auto att = bind_att<double>(tape, wq, wk, wv, wo, 1);
  const Mat<double> out = tape.value(cross_att(tape, tape.leaf(q), tape.leaf(X), att));

  // out must be a convex combination of the rows of (X Wv) Wo.
  const Mat<double> basis = (X * wv) * wo;  // 2 × d
  Eigen::MatrixXd A(d, 2);
  A.col(0) = basis.row(0).transpose();
  A.col(1) = basis.row(1).transpose();
  const Eigen::VectorXd coeff = A.colPivHouseholderQr().solve(out.row(0).transpose());
  CHECK((A * coeff - out.row(0).transpose()).norm() < 1e-10);
  CHECK(coeff.sum() == Catch::Approx(1.0).margin(1e-10));
  CHECK(coeff.minCoeff() >= -1e-12);
}

TEST_CASE("cross_att - rejects empty key sets and bad shapes") {
  Tape<double> tape;
  auto att = identity_att<double>(tape, 4);
  Var q = tape.leaf(Mat<double>::Ones(1, 4));
  CHECK_THROWS_AS(cross_att(tape, q, tape.leaf(Mat<double>(0, 4)), att), std::invalid_argument);
  CHECK_THROWS_AS(cross_att(tape, q, tape.leaf(Mat<double>::Ones(2, 3)), att),
                  std::invalid_argument);
}

TEST_CASE("enhance_all - degenerate channels produce zero vectors") {
  const int d = 6;
  ModelParams<double> params = init_params<double>(d, d, 2, 3);
  RngStream rng(11);
  RawBundle<double> raw;
  raw.m = random_matrix(1, d, rng);
  raw.t = random_matrix(1, d, rng);
  raw.objects = Mat<double>(0, d);
  raw.faces = Mat<double>(0, d);
  raw.identities = Mat<double>(0, d);

  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  FusionConfig<double> cfg;
  const FusionVars<double> f = enhance_all(tape, raw, bound, cfg);
  CHECK(tape.value(f.m_v).isZero());  // no objects, no whole image
  CHECK(tape.value(f.m_f).isZero());
  CHECK(tape.value(f.m_s).isZero());
  CHECK_FALSE(tape.value(f.m_t).isZero());
  CHECK(f.fine_pairs.empty());

  raw.v = random_matrix(1, d, rng);
  Tape<double> tape2;
  BoundParams<double> bound2 = bind_params(tape2, params);
  const FusionVars<double> f2 = enhance_all(tape2, raw, bound2, cfg);
  CHECK_FALSE(tape2.value(f2.m_v).isZero());  // falls back to the whole image
}

TEST_CASE("enhance_all - parameter sharing ties the three visual paths") {
  const int d = 8;
  RngStream rng(12);
  RawBundle<double> raw = full_bundle(d, rng);
  ModelParams<double> params = init_params<double>(d, d, 2, 13);

  auto outputs = [&](const ModelParams<double>& p) {
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, p);
    FusionConfig<double> cfg;
    const FusionVars<double> f = enhance_all(tape, raw, bound, cfg);
    return std::array<Mat<double>, 4>{tape.value(f.m_t), tape.value(f.m_v), tape.value(f.m_f),
                                      tape.value(f.m_s)};
  };
  const auto base = outputs(params);
  ModelParams<double> mutated = params;
  mutated.att_shared.Wq.array() += 0.05;
  const auto changed = outputs(mutated);
  CHECK((base[0] - changed[0]).cwiseAbs().maxCoeff() == 0.0);  // text unit untouched
  CHECK((base[1] - changed[1]).cwiseAbs().maxCoeff() > 0.0);
  CHECK((base[2] - changed[2]).cwiseAbs().maxCoeff() > 0.0);
  CHECK((base[3] - changed[3]).cwiseAbs().maxCoeff() > 0.0);

  // The text unit sees a single key row, so only its value/output weights can
  // move the output.
  ModelParams<double> text_mutated = params;
  text_mutated.att_text.Wv.array() += 0.05;
  const auto text_changed = outputs(text_mutated);
  CHECK((base[0] - text_changed[0]).cwiseAbs().maxCoeff() > 0.0);
  CHECK((base[1] - text_changed[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gated_fuse - stacked identity collapses to the scalar mix") {
  const int d = 5;
  RngStream rng(14);
  ModelParams<double> params = init_params<double>(d, d, 1, 15);
  params.gate.Wg.setZero();
  params.gate.Wg.topRows(d) = Mat<double>::Identity(d, d);
  params.gate.Wg.bottomRows(d) = Mat<double>::Identity(d, d);
  params.gate.bg.setZero();

  RawBundle<double> raw = full_bundle(d, rng);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  FusionConfig<double> cfg;
  FusionVars<double> f = fusion_forward(tape, raw, bound, cfg);

  const double eps = 1.0 / (1.0 + std::exp(2.0));  // sigmoid(-2)
  const Mat<double> expected =
      (1 - eps) * (tape.value(f.m) + tape.value(f.m_t) + tape.value(f.m_v)) +
      eps * (tape.value(f.m_f) + tape.value(f.m_s));
  CHECK((tape.value(f.g) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gated_fuse - large negative logit shuts the attribute channel") {
  const int d = 5;
  RngStream rng(16);
  ModelParams<double> params = init_params<double>(d, d, 1, 17);
  params.gate.Wg.setZero();
  params.gate.Wg.topRows(d) = Mat<double>::Identity(d, d);
  params.gate.Wg.bottomRows(d) = Mat<double>::Identity(d, d);
  params.gate.bg.setZero();
  params.gate.gate_logit(0, 0) = -40.0;  // eps -> 0

  RawBundle<double> raw = full_bundle(d, rng);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  FusionConfig<double> cfg;
  FusionVars<double> f = fusion_forward(tape, raw, bound, cfg);
  CHECK((tape.value(f.g) - tape.value(f.g_m)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode_entity - unit norm and determinism") {
  const int d = 6;
  ModelParams<double> params = init_params<double>(d, d, 2, 19);
  RngStream rng(20);
  const Mat<double> raw = random_matrix(1, d, rng);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  const Mat<double> a = tape.value(encode_entity(tape, raw, bound));
  const Mat<double> b = tape.value(encode_entity(tape, raw, bound));
  CHECK(a == b);
  CHECK(std::abs(a.norm() - 1.0) < 1e-6);
}

TEST_CASE("score - cosine basics and degenerate flag") {
  Mat<double> u(1, 3), w(1, 3), z(1, 3);
  u << 1, 0, 0;
  w << 0, 1, 0;
  z << 0, 0, 0;
  CHECK(score(u, u).value == Catch::Approx(1.0));
  CHECK(score(u, w).value == Catch::Approx(0.0));
  CHECK(score(u, z).degenerate);
  CHECK(score(u, z).value == 0.0);

  // scale invariance for positive scalings
  Mat<double> a(1, 3), b(1, 3);
  a << 0.3, -0.2, 0.9;
  b << -0.1, 0.8, 0.4;
  CHECK(score(Mat<double>(2.5 * a), Mat<double>(0.3 * b)).value ==
        Catch::Approx(score(a, b).value).margin(1e-12));
}

TEST_CASE("score - argmax picks the strongest candidate") {
  // cosines 0.47, 0.81, 0.13 -> the second candidate wins
  const std::vector<double> cos{0.47, 0.81, 0.13};
  const std::size_t best = static_cast<std::size_t>(
      std::max_element(cos.begin(), cos.end()) - cos.begin());
  CHECK(best == 1);
}

TEST_CASE("fusion - full forward matches a plain recomputation") {
  // Cross-check the tape forward against a straight Eigen evaluation on a
  // small case with h=1 so the formula is easy to restate.
  const int d = 4;
  RngStream rng(21);
  ModelParams<double> params = init_params<double>(d, d, 1, 22);
  RawBundle<double> raw = full_bundle(d, rng, 2, 1, 1);

  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  FusionConfig<double> cfg;
  FusionVars<double> f = fusion_forward(tape, raw, bound, cfg);

  auto proj = [&](const Mat<double>& x, Modality mo) {
    const auto& p = params.projection(mo);
    return Mat<double>(((x * p.W).rowwise() + p.b.row(0)).array().tanh().matrix());
  };
  auto att = [&](const Mat<double>& q, const Mat<double>& X, const AttentionParams<double>& a) {
    Eigen::RowVectorXd scores =
        (q * a.Wq) * (X * a.Wk).transpose() / std::sqrt(static_cast<double>(d));
    Eigen::RowVectorXd w = (scores.array() - scores.maxCoeff()).exp();
    w /= w.sum();
    return Mat<double>((w * (X * a.Wv)) * a.Wo);
  };
  const Mat<double> m = proj(raw.m, Modality::mention);
  const Mat<double> mt = att(m, proj(raw.t, Modality::text), params.att_text);
  const Mat<double> mv = att(m, proj(raw.objects, Modality::object), params.att_shared);
  const Mat<double> mf = att(m, proj(raw.faces, Modality::face), params.att_shared);
  const Mat<double> ms = att(m, proj(raw.identities, Modality::identity), params.att_shared);
  const Mat<double> gm = m + mt + mv;
  const double eps = 1.0 / (1.0 + std::exp(-params.gate.gate_logit(0, 0)));
  Mat<double> cat(1, 2 * d);
  cat << (1 - eps) * gm, eps * (mf + ms);
  const Mat<double> g = (cat * params.gate.Wg).rowwise() + params.gate.bg.row(0);

  CHECK((tape.value(f.m_t) - mt).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((tape.value(f.m_v) - mv).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((tape.value(f.m_f) - mf).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((tape.value(f.m_s) - ms).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((tape.value(f.g) - g).cwiseAbs().maxCoeff() < 1e-12);
}
