#include <catch2/catch_amalgamated.hpp>
#include <fstream>
#include <map>

#include "melkit/checkpoint.hpp"
#include "melkit/config.hpp"
#include "testutil.hpp"

using namespace mel;
using mel::test::TempDir;

TEST_CASE("config - defaults mirror the documented hyperparameters") {
  const RunConfig cfg = parse_config_text("");
  CHECK(cfg.d == 512);
  CHECK(cfg.heads == 8);
  CHECK(cfg.dropout == 0.4);
  CHECK(cfg.epochs == 300);
  CHECK(cfg.eval_every == 2000);
  CHECK(cfg.weight_decay == 1e-3);
  CHECK(cfg.loss.margin == 0.5);
  CHECK(cfg.lr == 5e-5);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.lambda == 100);
  CHECK(cfg.loss.alpha == 1.0);
  CHECK(cfg.loss.beta == 10.0);
  CHECK(cfg.loss.n_inbatch == 1);
}

TEST_CASE("config - parses keys, comments, and whitespace") {
  const RunConfig cfg = parse_config_text(
      "# comment\n"
      "d = 32\n"
      "  d_in=32\n"
      "heads = 2\n"
      "tau = 0.2\n"
      "samples = data/s.jsonl\n"
      "feature_stores = a.fstore,b.fstore\n"
      "\n"
      "seed = 9\n");
  CHECK(cfg.d == 32);
  CHECK(cfg.heads == 2);
  CHECK(cfg.loss.tau == 0.2);
  CHECK(cfg.seed == 9);
  REQUIRE(cfg.feature_store_paths().size() == 2);
  CHECK(cfg.feature_store_paths()[1] == "b.fstore");
}

TEST_CASE("config - rejects unknown keys and invalid values") {
  CHECK_THROWS(parse_config_text("mystery = 1\n"));
  CHECK_THROWS(parse_config_text("d = twelve\n"));
  CHECK_THROWS(parse_config_text("d = 30\nheads = 4\n"));   // heads must divide d
  CHECK_THROWS(parse_config_text("tau = 0\n"));
  CHECK_THROWS(parse_config_text("retrieval = sometimes\n"));
  CHECK_THROWS(parse_config_text("no equals sign\n"));
}

TEST_CASE("config - serialize/parse round trip is canonical") {
  RunConfig cfg = parse_config_text("d = 64\nd_in = 48\nheads = 4\nlr = 0.001\nseed = 5\n");
  cfg.samples = "x.jsonl";
  const std::string text = serialize_config(cfg);
  const RunConfig reparsed = parse_config_text(text);
  CHECK(serialize_config(reparsed) == text);
  CHECK(reparsed.d == 64);
  CHECK(reparsed.lr == 0.001);
  CHECK(reparsed.samples == "x.jsonl");
}

TEST_CASE("config - model signature tracks only shape keys") {
  RunConfig a = parse_config_text("d = 64\nd_in = 64\nheads = 4\n");
  RunConfig b = a;
  b.lr = 123.0;
  b.samples = "other.jsonl";
  CHECK(model_signature(a) == model_signature(b));
  RunConfig c = a;
  c.d = 32;
  CHECK(model_signature(a) != model_signature(c));
}

TEST_CASE("checkpoint - save/load round trip is exact") {
  TempDir dir("ckpt");
  RunConfig cfg = parse_config_text("d = 16\nd_in = 12\nheads = 2\nseed = 3\n");
  Checkpoint ckpt;
  ckpt.params = init_params<double>(cfg.d_in, cfg.d, cfg.heads, cfg.seed);
  ckpt.step = 1234;
  ckpt.dev_t1 = 0.875;
  ckpt.signature = model_signature(cfg);
  ckpt.config_text = serialize_config(cfg);
  save_checkpoint(ckpt, dir.file("model.ckpt"));

  Checkpoint loaded = load_checkpoint(dir.file("model.ckpt"), model_signature(cfg));
  CHECK(loaded.step == 1234);
  CHECK(loaded.dev_t1 == 0.875);
  CHECK(loaded.config_text == ckpt.config_text);

  std::map<std::string, Mat<double>> got, want;
  loaded.params.for_each_tensor([&](const std::string& n, Mat<double>& t) { got[n] = t; });
  ckpt.params.for_each_tensor([&](const std::string& n, Mat<double>& t) { want[n] = t; });
  REQUIRE(got.size() == want.size());
  for (const auto& [n, t] : want) CHECK(got.at(n) == t);
}

TEST_CASE("checkpoint - rejects signature mismatches") {
  TempDir dir("ckpt");
  RunConfig cfg = parse_config_text("d = 16\nd_in = 16\nheads = 2\n");
  Checkpoint ckpt;
  ckpt.params = init_params<double>(cfg.d_in, cfg.d, cfg.heads, 1);
  ckpt.signature = model_signature(cfg);
  ckpt.config_text = serialize_config(cfg);
  save_checkpoint(ckpt, dir.file("model.ckpt"));

  const RunConfig other = parse_config_text("d = 32\nd_in = 16\nheads = 2\n");
  CHECK_THROWS_AS(load_checkpoint(dir.file("model.ckpt"), model_signature(other)), CheckpointError);
  CHECK_NOTHROW(load_checkpoint(dir.file("model.ckpt")));  // unchecked load
}

TEST_CASE("checkpoint - corrupted files are rejected") {
  TempDir dir("ckpt");
  {
    std::ofstream out(dir.file("junk.ckpt"), std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(dir.file("junk.ckpt")), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir.file("absent.ckpt")), CheckpointError);
}

TEST_CASE("params - float/double casts round trip exactly") {
  ModelParams<float> p = init_params<float>(8, 8, 2, 11);
  ModelParams<double> d = cast_params<float, double>(p);
  ModelParams<float> back = cast_params<double, float>(d);
  std::map<std::string, Mat<float>> got, want;
  p.for_each_tensor([&](const std::string& n, Mat<float>& t) { want[n] = t; });
  back.for_each_tensor([&](const std::string& n, Mat<float>& t) { got[n] = t; });
  REQUIRE(got.size() == want.size());
  for (const auto& [n, t] : want) CHECK(got.at(n) == t);
}
