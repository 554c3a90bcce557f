#include "melkit/datamodel.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "melkit/tokenize.hpp"

namespace mel {

using nlohmann::json;

std::string to_string(ErSource s) {
  switch (s) {
    case ErSource::property: return "property";
    case ErSource::static_page: return "static";
    case ErSource::dynamic_llm: return "dynamic";
  }
  return "property";
}

std::optional<ErSource> er_source_from_string(const std::string& s) {
  if (s == "property") return ErSource::property;
  if (s == "static") return ErSource::static_page;
  if (s == "dynamic") return ErSource::dynamic_llm;
  return std::nullopt;
}

namespace {

[[noreturn]] void raise(const std::string& path, std::vector<DatasetIssue> issues) {
  std::ostringstream msg;
  msg << path << ": " << issues.size() << " problem(s)";
  for (const auto& issue : issues) {
    msg << "\n  line " << issue.line;
    if (!issue.field.empty()) msg << ", field '" << issue.field << "'";
    msg << ": " << issue.message;
  }
  throw DatasetError(msg.str(), std::move(issues));
}

std::optional<std::string> get_string(const json& j, const char* key, bool required,
                                      std::size_t line, std::vector<DatasetIssue>& issues) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) issues.push_back({line, key, "missing required field"});
    return std::nullopt;
  }
  if (!it->is_string()) {
    issues.push_back({line, key, "expected a string"});
    return std::nullopt;
  }
  return it->get<std::string>();
}

template <typename RecordFn>
void for_each_record(const std::string& path, std::vector<DatasetIssue>& issues, RecordFn&& fn) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path, {});
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      issues.push_back({lineno, "", "not a JSON object"});
      continue;
    }
    fn(lineno, j);
  }
}

}  // namespace

std::vector<MentionSample> load_samples(const std::string& path) {
  std::vector<MentionSample> samples;
  std::vector<DatasetIssue> issues;
  std::unordered_map<std::string, std::size_t> seen_ids;

  for_each_record(path, issues, [&](std::size_t lineno, const json& j) {
    MentionSample s;
    const std::size_t before = issues.size();
    s.sample_id = get_string(j, "sample_id", true, lineno, issues).value_or("");
    s.mention = get_string(j, "mention", true, lineno, issues).value_or("");
    s.text = get_string(j, "text", true, lineno, issues).value_or("");
    s.gold_qid = get_string(j, "gold_qid", true, lineno, issues).value_or("");
    s.image_ref = get_string(j, "image_ref", false, lineno, issues);
    if (auto it = j.find("provided_candidates"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) {
        issues.push_back({lineno, "provided_candidates", "expected an array of strings"});
      } else {
        std::vector<std::string> cands;
        for (const auto& c : *it) {
          if (!c.is_string()) {
            issues.push_back({lineno, "provided_candidates", "expected an array of strings"});
            break;
          }
          cands.push_back(c.get<std::string>());
        }
        s.provided_candidates = std::move(cands);
      }
    }
    if (issues.size() != before) return;
    if (s.sample_id.empty()) {
      issues.push_back({lineno, "sample_id", "must be non-empty"});
      return;
    }
    auto [it, inserted] = seen_ids.emplace(s.sample_id, lineno);
    if (!inserted) {
      issues.push_back({lineno, "sample_id",
                        "duplicate sample_id '" + s.sample_id + "' (first seen at line " +
                            std::to_string(it->second) + ")"});
      return;
    }
    samples.push_back(std::move(s));
  });

  if (!issues.empty()) raise(path, std::move(issues));
  return samples;
}

std::vector<EntityRecord> load_entities(const std::string& path) {
  std::vector<EntityRecord> entities;
  std::vector<DatasetIssue> issues;
  std::unordered_map<std::string, std::size_t> seen_qids;

  for_each_record(path, issues, [&](std::size_t lineno, const json& j) {
    EntityRecord e;
    const std::size_t before = issues.size();
    e.qid = get_string(j, "qid", true, lineno, issues).value_or("");
    e.name = get_string(j, "name", true, lineno, issues).value_or("");
    e.type_tag = get_string(j, "type_tag", false, lineno, issues).value_or("");
    e.er_text = get_string(j, "er_text", false, lineno, issues).value_or("");
    const auto source = get_string(j, "er_source", false, lineno, issues).value_or("property");
    if (auto parsed = er_source_from_string(source)) {
      e.er_source = *parsed;
    } else {
      issues.push_back({lineno, "er_source", "expected one of property|static|dynamic"});
    }
    if (issues.size() != before) return;
    if (e.qid.empty()) {
      issues.push_back({lineno, "qid", "must be non-empty"});
      return;
    }
    auto [it, inserted] = seen_qids.emplace(e.qid, lineno);
    if (!inserted) {
      issues.push_back({lineno, "qid", "duplicate qid '" + e.qid + "' (first seen at line " +
                                           std::to_string(it->second) + ")"});
      return;
    }
    entities.push_back(std::move(e));
  });

  if (!issues.empty()) raise(path, std::move(issues));
  return entities;
}

namespace {

json sample_to_json(const MentionSample& s) {
  json j{{"sample_id", s.sample_id}, {"mention", s.mention}, {"text", s.text}, {"gold_qid", s.gold_qid}};
  if (s.image_ref) j["image_ref"] = *s.image_ref;
  if (s.provided_candidates) j["provided_candidates"] = *s.provided_candidates;
  return j;
}

json entity_to_json(const EntityRecord& e) {
  json j{{"qid", e.qid}, {"name", e.name}, {"er_text", e.er_text}, {"er_source", to_string(e.er_source)}};
  if (!e.type_tag.empty()) j["type_tag"] = e.type_tag;
  return j;
}

template <typename T, typename Fn>
void write_jsonl(const std::vector<T>& records, const std::string& path, Fn&& to_json_fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path + " for writing", {});
  for (const auto& r : records) out << to_json_fn(r).dump() << '\n';
}

}  // namespace

void save_samples(const std::vector<MentionSample>& samples, const std::string& path) {
  write_jsonl(samples, path, sample_to_json);
}

void save_entities(const std::vector<EntityRecord>& entities, const std::string& path) {
  write_jsonl(entities, path, entity_to_json);
}

ValidationReport validate_dataset(const std::vector<MentionSample>& samples,
                                  const std::vector<EntityRecord>& entities) {
  ValidationReport report;
  std::unordered_set<std::string> qids;
  for (const auto& e : entities) qids.insert(e.qid);

  for (const auto& s : samples) {
    if (!qids.contains(s.gold_qid)) report.samples_with_missing_gold.push_back(s.sample_id);
  }
  for (const auto& e : entities) {
    const bool enhanced = e.er_source == ErSource::static_page || e.er_source == ErSource::dynamic_llm;
    if (enhanced && e.er_text.empty()) report.entities_with_empty_er.push_back(e.qid);
  }
  report.missing_gold_count = report.samples_with_missing_gold.size();
  report.empty_er_count = report.entities_with_empty_er.size();
  return report;
}

DatasetStats compute_stats(const std::vector<MentionSample>& samples,
                           const std::vector<EntityRecord>& entities) {
  DatasetStats stats;
  stats.entities = entities.size();
  stats.mentions = samples.size();

  std::set<std::pair<std::string, std::string>> distinct;
  std::size_t total_tokens = 0;
  for (const auto& s : samples) {
    distinct.emplace(s.text, s.image_ref.value_or(""));
    total_tokens += tokenize(s.text).content_size();
  }
  stats.samples = distinct.size();
  if (!samples.empty()) {
    const double mean = static_cast<double>(total_tokens) / static_cast<double>(samples.size());
    stats.mean_text_len = std::round(mean * 10.0) / 10.0;
  }
  return stats;
}

std::unordered_map<std::string, EntityRecord> entity_map(const std::vector<EntityRecord>& entities) {
  std::unordered_map<std::string, EntityRecord> map;
  map.reserve(entities.size());
  for (const auto& e : entities) map.emplace(e.qid, e);
  return map;
}

}  // namespace mel
