#pragma once
// Candidate generation by normalized-Levenshtein name similarity (plain and
// type-partitioned), cosine ranking of candidates, and the T@k metric.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "melkit/datamodel.hpp"

namespace mel {

std::size_t levenshtein(std::string_view a, std::string_view b);

// 1 - levenshtein(casefold(a), casefold(b)) / max(len(a), len(b));
// two empty strings score 1.
double name_similarity(std::string_view a, std::string_view b);

class EntityIndex {
 public:
  struct Entry {
    std::string qid;
    std::string folded_name;
    std::string type_tag;
  };

  explicit EntityIndex(const std::vector<EntityRecord>& entities, bool partition_by_type = false);

  const std::vector<Entry>& entries() const { return entries_; }
  bool partitioned() const { return partitioned_; }
  bool empty() const { return entries_.empty(); }

  // Indices of entries with this type tag; nullptr when unknown.
  const std::vector<std::size_t>* partition(const std::string& type_tag) const;

 private:
  std::vector<Entry> entries_;
  bool partitioned_ = false;
  std::map<std::string, std::vector<std::size_t>> partitions_;
};

struct CandidateSet {
  std::string sample_id;
  std::vector<std::string> qids;  // best-first
  std::vector<double> scores;     // name similarity, aligned to qids

  bool contains(const std::string& qid) const;
};

// Top-lambda entities by name similarity to the mention; ties break by
// ascending qid, which makes the ordering total and insertion-order free.
CandidateSet generate_candidates(const std::string& mention, const EntityIndex& index,
                                 std::size_t lambda = 100);

// Dataset-provided candidates come first (order preserved); the remainder is
// fuzzy fill from the mention's type partition, deduplicated against the
// provided list. An unknown type falls back to the whole index and reports a
// warning through `warning` when given.
CandidateSet generate_candidates_typed(const std::string& mention, const std::string& type_tag,
                                       const std::vector<std::string>& provided,
                                       const EntityIndex& index, std::size_t lambda = 100,
                                       std::string* warning = nullptr);

struct RankResult {
  std::string sample_id;
  std::vector<std::pair<std::string, double>> ranked;  // (qid, cosine), best-first
  std::optional<std::size_t> gold_rank;                // 1-based; nullopt = gold absent
};

// Sorts candidates by cosine descending, ties by ascending qid.
RankResult rank(const std::vector<std::string>& candidate_qids,
                const std::vector<double>& cosines, const std::string& gold_qid);

// accuracy_k = (1/N) · #{gold_rank <= k}; an absent gold counts as rank ∞.
std::map<std::size_t, double> topk_accuracy(const std::vector<RankResult>& results,
                                            const std::vector<std::size_t>& ks);

}  // namespace mel
