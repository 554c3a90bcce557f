#include "melkit/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace mel {

namespace {

std::string casefold(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::size_t n = a.size();
  if (n == 0) return b.size();
  std::vector<std::size_t> col(n + 1);
  std::iota(col.begin(), col.end(), std::size_t{0});
  for (std::size_t x = 1; x <= b.size(); ++x) {
    col[0] = x;
    std::size_t last = x - 1;
    for (std::size_t y = 1; y <= n; ++y) {
      const std::size_t save = col[y];
      col[y] = std::min({
          col[y] + 1,                                // deletion
          col[y - 1] + 1,                            // insertion
          last + (a[y - 1] == b[x - 1] ? 0 : 1)      // substitution
      });
      last = save;
    }
  }
  return col[n];
}

double name_similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  const std::string fa = casefold(a);
  const std::string fb = casefold(b);
  const std::size_t dist = levenshtein(fa, fb);
  const std::size_t max_len = std::max(fa.size(), fb.size());
  return 1.0 - static_cast<double>(dist) / static_cast<double>(max_len);
}

EntityIndex::EntityIndex(const std::vector<EntityRecord>& entities, bool partition_by_type)
    : partitioned_(partition_by_type) {
  entries_.reserve(entities.size());
  for (const auto& e : entities) entries_.push_back({e.qid, casefold(e.name), e.type_tag});
  if (partition_by_type) {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      partitions_[entries_[i].type_tag].push_back(i);
  }
}

const std::vector<std::size_t>* EntityIndex::partition(const std::string& type_tag) const {
  auto it = partitions_.find(type_tag);
  return it == partitions_.end() ? nullptr : &it->second;
}

bool CandidateSet::contains(const std::string& qid) const {
  return std::find(qids.begin(), qids.end(), qid) != qids.end();
}

namespace {

// Top-k entry indices by (similarity desc, qid asc), excluding `skip`.
CandidateSet fuzzy_top(const std::string& mention, const EntityIndex& index,
                       const std::vector<std::size_t>* subset, std::size_t k,
                       const std::unordered_set<std::string>* skip) {
  const std::string folded_mention = casefold(mention);
  struct Scored {
    double sim;
    const EntityIndex::Entry* entry;
  };
  std::vector<Scored> scored;
  auto consider = [&](const EntityIndex::Entry& entry) {
    if (skip && skip->contains(entry.qid)) return;
    double sim;
    if (folded_mention.empty() && entry.folded_name.empty()) {
      sim = 1.0;
    } else {
      const std::size_t dist = levenshtein(folded_mention, entry.folded_name);
      const std::size_t max_len = std::max(folded_mention.size(), entry.folded_name.size());
      sim = 1.0 - static_cast<double>(dist) / static_cast<double>(max_len);
    }
    scored.push_back({sim, &entry});
  };
  if (subset) {
    for (std::size_t i : *subset) consider(index.entries()[i]);
  } else {
    for (const auto& entry : index.entries()) consider(entry);
  }

  auto better = [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.entry->qid < b.entry->qid;
  };
  if (scored.size() > k) {
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                      scored.end(), better);
    scored.resize(k);
  } else {
    std::sort(scored.begin(), scored.end(), better);
  }

  CandidateSet out;
  out.qids.reserve(scored.size());
  out.scores.reserve(scored.size());
  for (const auto& s : scored) {
    out.qids.push_back(s.entry->qid);
    out.scores.push_back(s.sim);
  }
  return out;
}

}  // namespace

CandidateSet generate_candidates(const std::string& mention, const EntityIndex& index,
                                 std::size_t lambda) {
  if (index.empty()) throw std::invalid_argument("generate_candidates: empty index");
  return fuzzy_top(mention, index, nullptr, lambda, nullptr);
}

CandidateSet generate_candidates_typed(const std::string& mention, const std::string& type_tag,
                                       const std::vector<std::string>& provided,
                                       const EntityIndex& index, std::size_t lambda,
                                       std::string* warning) {
  if (index.empty()) throw std::invalid_argument("generate_candidates_typed: empty index");
  if (!index.partitioned())
    throw std::invalid_argument("generate_candidates_typed: index is not partitioned");

  CandidateSet out;
  std::unordered_set<std::string> seen;
  for (const auto& qid : provided) {
    if (out.qids.size() >= lambda) break;
    if (!seen.insert(qid).second) continue;
    out.qids.push_back(qid);
    out.scores.push_back(1.0);  // dataset-provided; ranked ahead of fuzzy fill
  }

  const std::vector<std::size_t>* part = index.partition(type_tag);
  if (part == nullptr && warning)
    *warning = "unknown type_tag '" + type_tag + "'; falling back to whole-index fuzzy fill";
  if (out.qids.size() < lambda) {
    CandidateSet fill = fuzzy_top(mention, index, part, lambda - out.qids.size(), &seen);
    out.qids.insert(out.qids.end(), fill.qids.begin(), fill.qids.end());
    out.scores.insert(out.scores.end(), fill.scores.begin(), fill.scores.end());
  }
  return out;
}

RankResult rank(const std::vector<std::string>& candidate_qids,
                const std::vector<double>& cosines, const std::string& gold_qid) {
  if (candidate_qids.size() != cosines.size())
    throw std::invalid_argument("rank: qids and cosines must align");
  RankResult out;
  out.ranked.reserve(candidate_qids.size());
  for (std::size_t i = 0; i < candidate_qids.size(); ++i)
    out.ranked.emplace_back(candidate_qids[i], cosines[i]);
  std::sort(out.ranked.begin(), out.ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t i = 0; i < out.ranked.size(); ++i) {
    if (out.ranked[i].first == gold_qid) {
      out.gold_rank = i + 1;
      break;
    }
  }
  return out;
}

std::map<std::size_t, double> topk_accuracy(const std::vector<RankResult>& results,
                                            const std::vector<std::size_t>& ks) {
  if (results.empty()) throw std::invalid_argument("topk_accuracy: no results");
  std::map<std::size_t, double> acc;
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (const auto& r : results)
      if (r.gold_rank.has_value() && *r.gold_rank <= k) ++hits;
    acc[k] = static_cast<double>(hits) / static_cast<double>(results.size());
  }
  return acc;
}

}  // namespace mel
