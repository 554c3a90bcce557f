#include <catch2/catch_amalgamated.hpp>
#include <fstream>

#include "melkit/datamodel.hpp"
#include "melkit/rng.hpp"
#include "testutil.hpp"

using namespace mel;
using mel::test::TempDir;

namespace {

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("load_samples - empty file yields empty list") {
  TempDir dir("dm");
  write_lines(dir.file("s.jsonl"), {});
  CHECK(load_samples(dir.file("s.jsonl").string()).empty());
}

TEST_CASE("load_samples - valid fixture preserves file order") {
  TempDir dir("dm");
  write_lines(dir.file("s.jsonl"),
              {R"({"sample_id":"a","mention":"Trump","text":"Trump at the ball","gold_qid":"Q1"})",
               R"({"sample_id":"b","mention":"Lula","text":"Lula in Brazil","gold_qid":"Q2","image_ref":"img1","provided_candidates":["Q2","Q3"]})"});
  const auto samples = load_samples(dir.file("s.jsonl").string());
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].sample_id == "a");
  CHECK_FALSE(samples[0].image_ref.has_value());
  CHECK(samples[1].sample_id == "b");
  CHECK(samples[1].image_ref == "img1");
  REQUIRE(samples[1].provided_candidates.has_value());
  CHECK(samples[1].provided_candidates->size() == 2);
}

TEST_CASE("load_samples - duplicate sample_id names the duplicate") {
  TempDir dir("dm");
  write_lines(dir.file("s.jsonl"),
              {R"({"sample_id":"a","mention":"x","text":"t","gold_qid":"Q1"})",
               R"({"sample_id":"b","mention":"y","text":"t","gold_qid":"Q1"})",
               R"({"sample_id":"a","mention":"z","text":"t","gold_qid":"Q1"})"});
  try {
    load_samples(dir.file("s.jsonl").string());
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    REQUIRE(e.issues().size() == 1);
    CHECK(e.issues()[0].line == 3);
    CHECK(e.issues()[0].field == "sample_id");
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }
}

TEST_CASE("load_samples - malformed line names line number and field") {
  TempDir dir("dm");
  write_lines(dir.file("s.jsonl"),
              {R"({"sample_id":"a","mention":"x","text":"t","gold_qid":"Q1"})",
               R"({"sample_id":"b","mention":7,"text":"t","gold_qid":"Q1"})", "not json"});
  try {
    load_samples(dir.file("s.jsonl").string());
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    REQUIRE(e.issues().size() == 2);
    CHECK(e.issues()[0].line == 2);
    CHECK(e.issues()[0].field == "mention");
    CHECK(e.issues()[1].line == 3);
  }
}

TEST_CASE("samples - load/serialize/load round trip") {
  TempDir dir("dm");
  std::vector<MentionSample> samples;
  RngStream rng(11);
  for (int i = 0; i < 40; ++i) {
    MentionSample s;
    s.sample_id = "s" + std::to_string(i);
    s.mention = "mention " + std::to_string(rng.next_below(1000));
    s.text = "text with \"quotes\" and \\ slashes " + std::to_string(i);
    if (rng.next_bernoulli(0.5)) s.image_ref = "img" + std::to_string(i);
    s.gold_qid = "Q" + std::to_string(rng.next_below(50));
    if (rng.next_bernoulli(0.3)) s.provided_candidates = std::vector<std::string>{"Q1", "Q2"};
    samples.push_back(std::move(s));
  }
  save_samples(samples, dir.file("s.jsonl").string());
  const auto loaded = load_samples(dir.file("s.jsonl").string());
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].sample_id == samples[i].sample_id);
    CHECK(loaded[i].mention == samples[i].mention);
    CHECK(loaded[i].text == samples[i].text);
    CHECK(loaded[i].image_ref == samples[i].image_ref);
    CHECK(loaded[i].gold_qid == samples[i].gold_qid);
    CHECK(loaded[i].provided_candidates == samples[i].provided_candidates);
  }
}

TEST_CASE("load_entities - duplicate qid and bad er_source rejected") {
  TempDir dir("dm");
  write_lines(dir.file("e.jsonl"),
              {R"({"qid":"Q1","name":"Donald Trump","er_text":"x","er_source":"static"})",
               R"({"qid":"Q1","name":"Other","er_text":"y","er_source":"weird"})"});
  try {
    load_entities(dir.file("e.jsonl").string());
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    REQUIRE(e.issues().size() == 1);
    CHECK(e.issues()[0].field == "er_source");
  }
  write_lines(dir.file("e2.jsonl"),
              {R"({"qid":"Q1","name":"A","er_text":"x","er_source":"static"})",
               R"({"qid":"Q1","name":"B","er_text":"y","er_source":"dynamic"})"});
  CHECK_THROWS_AS(load_entities(dir.file("e2.jsonl").string()), DatasetError);
}

TEST_CASE("validate_dataset - clean dataset reports zero issues") {
  std::vector<EntityRecord> entities{{"Q1", "A", "", "text", ErSource::static_page}};
  std::vector<MentionSample> samples{{"s1", "A", "about A", std::nullopt, "Q1", std::nullopt}};
  const ValidationReport r = validate_dataset(samples, entities);
  CHECK(r.clean());
}

TEST_CASE("validate_dataset - names the sample with a missing gold") {
  std::vector<EntityRecord> entities{{"Q1", "A", "", "text", ErSource::static_page}};
  std::vector<MentionSample> samples{{"s1", "A", "t", std::nullopt, "Q1", std::nullopt},
                                     {"s2", "B", "t", std::nullopt, "Q404", std::nullopt}};
  const ValidationReport r = validate_dataset(samples, entities);
  CHECK(r.missing_gold_count == 1);
  REQUIRE(r.samples_with_missing_gold.size() == 1);
  CHECK(r.samples_with_missing_gold[0] == "s2");
}

TEST_CASE("validate_dataset - empty static ER flagged for drop") {
  std::vector<EntityRecord> entities{{"Q1", "A", "", "", ErSource::static_page},
                                     {"Q2", "B", "", "", ErSource::property},
                                     {"Q3", "C", "", "ok", ErSource::dynamic_llm}};
  const ValidationReport r = validate_dataset({}, entities);
  REQUIRE(r.entities_with_empty_er.size() == 1);
  CHECK(r.entities_with_empty_er[0] == "Q1");
}

TEST_CASE("validate_dataset - flags exactly the constructed defects") {
  RngStream rng(3);
  std::vector<EntityRecord> entities;
  for (int i = 0; i < 30; ++i)
    entities.push_back({"Q" + std::to_string(i), "name" + std::to_string(i), "",
                        rng.next_bernoulli(0.2) ? "" : "er", ErSource::static_page});
  std::vector<MentionSample> samples;
  for (int i = 0; i < 50; ++i) {
    const bool broken = rng.next_bernoulli(0.3);
    samples.push_back({"s" + std::to_string(i), "m", "t", std::nullopt,
                       broken ? "missing" + std::to_string(i) : "Q" + std::to_string(i % 30),
                       std::nullopt});
  }
  const ValidationReport r = validate_dataset(samples, entities);
  std::size_t expected_missing = 0;
  for (const auto& s : samples)
    if (s.gold_qid.rfind("missing", 0) == 0) ++expected_missing;
  std::size_t expected_empty = 0;
  for (const auto& e : entities)
    if (e.er_text.empty()) ++expected_empty;
  CHECK(r.missing_gold_count == expected_missing);
  CHECK(r.empty_er_count == expected_empty);
}

TEST_CASE("compute_stats - empty dataset") {
  const DatasetStats s = compute_stats({}, {});
  CHECK(s.samples == 0);
  CHECK(s.entities == 0);
  CHECK(s.mentions == 0);
  CHECK(s.mean_text_len == 0.0);
}

TEST_CASE("compute_stats - token counts use the toolkit tokenizer") {
  // 4 and 6 tokens -> mean 5.0
  std::vector<MentionSample> samples{
      {"s1", "m", "one two three four", std::nullopt, "Q1", std::nullopt},
      {"s2", "m", "a b c d e f", std::nullopt, "Q1", std::nullopt}};
  const DatasetStats s = compute_stats(samples, {});
  CHECK(s.mentions == 2);
  CHECK(s.samples == 2);
  CHECK(s.mean_text_len == 5.0);
}

TEST_CASE("compute_stats - distinct (text, image) pairs count as one sample") {
  std::vector<MentionSample> samples{
      {"s1", "Golding", "Golding with Lula", "img1", "Q1", std::nullopt},
      {"s2", "Lula", "Golding with Lula", "img1", "Q2", std::nullopt}};
  const DatasetStats s = compute_stats(samples, {});
  CHECK(s.samples == 1);
  CHECK(s.mentions == 2);
}

TEST_CASE("documented format - bundled demo corpus loads") {
  const auto demo = std::filesystem::path(MELKIT_DATA_DIR) / "demo";
  const auto samples = load_samples((demo / "samples.jsonl").string());
  const auto entities = load_entities((demo / "entities.jsonl").string());
  REQUIRE(samples.size() == 8);
  REQUIRE(entities.size() == 8);
  CHECK(samples[0].mention == "Trump");
  CHECK(samples[0].image_ref == "img1");
  CHECK(validate_dataset(samples, entities).clean());
  CHECK(compute_stats(samples, entities).mentions == 8);
  // two sample pairs share their (text, image) context
  CHECK(compute_stats(samples, entities).samples == 6);
}

TEST_CASE("compute_stats - permutation invariant") {
  std::vector<MentionSample> samples;
  for (int i = 0; i < 20; ++i)
    samples.push_back({"s" + std::to_string(i), "m", "text " + std::to_string(i % 7), std::nullopt,
                       "Q1", std::nullopt});
  const DatasetStats a = compute_stats(samples, {});
  RngStream rng(5);
  rng.shuffle(samples);
  const DatasetStats b = compute_stats(samples, {});
  CHECK(a.samples == b.samples);
  CHECK(a.mentions == b.mentions);
  CHECK(a.mean_text_len == b.mean_text_len);
}
