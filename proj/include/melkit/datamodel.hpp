#pragma once
// Core records and dataset I/O. Samples and entities live in newline-delimited
// JSON files; see docs/data-formats.md for the exact key names.

#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mel {

enum class ErSource { property, static_page, dynamic_llm };

std::string to_string(ErSource s);
std::optional<ErSource> er_source_from_string(const std::string& s);

// One knowledge-base entity with its representation text (ER).
struct EntityRecord {
  std::string qid;
  std::string name;
  std::string type_tag;  // empty = untyped
  std::string er_text;
  ErSource er_source = ErSource::property;
};

// One linking instance. image_ref is an opaque key into the feature store.
struct MentionSample {
  std::string sample_id;
  std::string mention;
  std::string text;
  std::optional<std::string> image_ref;
  std::string gold_qid;
  std::optional<std::vector<std::string>> provided_candidates;
};

struct DatasetStats {
  std::size_t samples = 0;   // distinct (text, image_ref) pairs
  std::size_t entities = 0;
  std::size_t mentions = 0;  // one per record
  double mean_text_len = 0.0;  // tokenizer tokens, rounded to 1 decimal
};

// Parse or semantic problems found in a dataset file; line is 1-based.
struct DatasetIssue {
  std::size_t line = 0;
  std::string field;
  std::string message;
};

class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::string what, std::vector<DatasetIssue> issues)
      : std::runtime_error(std::move(what)), issues_(std::move(issues)) {}
  const std::vector<DatasetIssue>& issues() const { return issues_; }

 private:
  std::vector<DatasetIssue> issues_;
};

// Throws DatasetError listing every malformed line (line number + field) and
// any duplicate sample_id. Order of the returned list follows the file.
std::vector<MentionSample> load_samples(const std::string& path);
std::vector<EntityRecord> load_entities(const std::string& path);

void save_samples(const std::vector<MentionSample>& samples, const std::string& path);
void save_entities(const std::vector<EntityRecord>& entities, const std::string& path);

struct ValidationReport {
  std::vector<std::string> samples_with_missing_gold;  // sample_ids
  std::vector<std::string> entities_with_empty_er;     // qids, flagged for drop
  std::size_t missing_gold_count = 0;
  std::size_t empty_er_count = 0;

  bool clean() const { return missing_gold_count == 0 && empty_er_count == 0; }
};

// Report-only: never throws.
ValidationReport validate_dataset(const std::vector<MentionSample>& samples,
                                  const std::vector<EntityRecord>& entities);

DatasetStats compute_stats(const std::vector<MentionSample>& samples,
                           const std::vector<EntityRecord>& entities);

std::unordered_map<std::string, EntityRecord> entity_map(const std::vector<EntityRecord>& entities);

}  // namespace mel
