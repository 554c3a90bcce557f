#include "melkit/erpipeline.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "melkit/tokenize.hpp"

namespace mel {

using nlohmann::json;

std::string clean_text(const std::string& raw, std::size_t max_tokens) {
  std::string stripped;
  stripped.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    if (raw[i] == '[') {
      // Reference markers: '[' digits ']'
      std::size_t j = i + 1;
      while (j < raw.size() && raw[j] >= '0' && raw[j] <= '9') ++j;
      if (j > i + 1 && j < raw.size() && raw[j] == ']') {
        i = j + 1;
        continue;
      }
    }
    const unsigned char c = static_cast<unsigned char>(raw[i]);
    if (c >= 0x20 || c == '\t' || c == '\n' || c == '\r') stripped.push_back(raw[i]);
    ++i;
  }

  std::string collapsed;
  collapsed.reserve(stripped.size());
  bool in_space = false;
  for (char ch : stripped) {
    const bool space = ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r';
    if (space) {
      in_space = true;
      continue;
    }
    if (in_space && !collapsed.empty()) collapsed.push_back(' ');
    in_space = false;
    collapsed.push_back(ch);
  }

  const std::size_t cut = end_of_nth_token(collapsed, max_tokens);
  collapsed.resize(cut);
  while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  return collapsed;
}

FixtureKbClient::FixtureKbClient(const std::filesystem::path& fixture_file) {
  std::ifstream in(fixture_file);
  if (!in) throw std::runtime_error("cannot open KB fixture " + fixture_file.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw std::runtime_error(fixture_file.string() + ":" + std::to_string(lineno) +
                               ": not a JSON object");
    const std::string title = j.at("title").get<std::string>();
    if (j.value("found", true)) {
      extracts_[title] = j.at("extract").get<std::string>();
    } else {
      extracts_[title] = std::nullopt;
    }
  }
}

std::optional<std::vector<std::string>> FixtureKbClient::fetch_extract(const std::string& title) {
  ++calls_;
  auto it = extracts_.find(title);
  if (it == extracts_.end() || !it->second.has_value()) return std::nullopt;

  // Paragraph boundary: blank-line separated block of the recorded extract.
  std::vector<std::string> paragraphs;
  std::string current;
  std::istringstream stream(*it->second);
  std::string line;
  auto flush = [&] {
    if (!current.empty()) paragraphs.push_back(current);
    current.clear();
  };
  while (std::getline(stream, line)) {
    if (line.empty()) {
      flush();
    } else {
      if (!current.empty()) current.push_back('\n');
      current += line;
    }
  }
  flush();
  return paragraphs;
}

FixtureLlmClient::FixtureLlmClient(const std::filesystem::path& fixture_file) {
  std::ifstream in(fixture_file);
  if (!in) throw std::runtime_error("cannot open LLM fixture " + fixture_file.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw std::runtime_error(fixture_file.string() + ":" + std::to_string(lineno) +
                               ": not a JSON object");
    responses_[j.at("match_user").get<std::string>()] = j.at("response").get<std::string>();
  }
}

std::string FixtureLlmClient::chat(const std::vector<ChatMessage>& messages) {
  ++calls_;
  call_log_.push_back(messages);
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == "user") {
      auto found = responses_.find(it->content);
      if (found == responses_.end())
        throw std::runtime_error("LLM fixture has no response for user turn: " + it->content);
      return found->second;
    }
  }
  throw std::runtime_error("LLM fixture chat called without a user turn");
}

RetryingLlmClient::RetryingLlmClient(LlmClient& inner, int max_attempts,
                                     std::chrono::milliseconds initial_backoff, SleepFn sleep_fn)
    : inner_(inner),
      max_attempts_(max_attempts),
      initial_backoff_(initial_backoff),
      sleep_fn_(std::move(sleep_fn)) {
  if (!sleep_fn_) sleep_fn_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string RetryingLlmClient::chat(const std::vector<ChatMessage>& messages) {
  std::chrono::milliseconds backoff = initial_backoff_;
  for (int attempt = 1;; ++attempt) {
    try {
      return inner_.chat(messages);
    } catch (const ClientTransportError&) {
      if (attempt >= max_attempts_) throw;
      sleep_fn_(backoff);
      backoff *= 2;
    }
  }
}

CallThrottle::CallThrottle(std::chrono::milliseconds min_interval, SleepFn sleep_fn,
                           ClockFn clock_fn)
    : min_interval_(min_interval), sleep_fn_(std::move(sleep_fn)), clock_fn_(std::move(clock_fn)) {
  if (!sleep_fn_) sleep_fn_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (!clock_fn_) clock_fn_ = [] { return std::chrono::steady_clock::now(); };
  next_allowed_ = clock_fn_();
}

void CallThrottle::acquire() {
  if (min_interval_.count() <= 0) return;
  std::chrono::milliseconds wait(0);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto now = clock_fn_();
    if (now < next_allowed_)
      wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_allowed_ - now);
    next_allowed_ = std::max(now, next_allowed_) + min_interval_;
  }
  if (wait.count() > 0) sleep_fn_(wait);
}

bool RefusalDetector::matches(const std::string& response) const {
  std::string folded = response;
  for (char& c : folded)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  for (const auto& p : patterns)
    if (!p.empty() && folded.find(p) != std::string::npos) return true;
  return false;
}

RefusalDetector RefusalDetector::load(const std::filesystem::path& pattern_file) {
  std::ifstream in(pattern_file);
  if (!in) throw std::runtime_error("cannot open refusal pattern file " + pattern_file.string());
  RefusalDetector d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& c : line)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    d.patterns.push_back(line);
  }
  if (d.patterns.empty())
    throw std::runtime_error("refusal pattern file " + pattern_file.string() + " is empty");
  return d;
}

namespace {

json rounds_to_json(const std::vector<ErRound>& rounds) {
  json out = json::array();
  for (const auto& r : rounds) {
    json prompt = json::array();
    for (const auto& m : r.prompt) prompt.push_back({{"role", m.role}, {"content", m.content}});
    out.push_back({{"prompt", prompt}, {"response", r.response}});
  }
  return out;
}

std::vector<ErRound> rounds_from_json(const json& j) {
  std::vector<ErRound> rounds;
  for (const auto& r : j) {
    ErRound round;
    for (const auto& m : r.at("prompt"))
      round.prompt.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    round.response = r.at("response").get<std::string>();
    rounds.push_back(std::move(round));
  }
  return rounds;
}

std::string sanitize_for_filename(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
        c == '_') {
      out.push_back(static_cast<char>(c));
    } else {
      static const char* hex = "0123456789abcdef";
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xf]);
    }
  }
  return out;
}

}  // namespace

ErCache::ErCache(const std::filesystem::path& dir) : dir_(dir) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ErCache::entry_path(const std::string& qid, const std::string& mode) const {
  return dir_ / (mode + "-v" + std::to_string(kErPipelineVersion) + "-" +
                 sanitize_for_filename(qid) + ".json");
}

std::optional<ErResult> ErCache::lookup(const std::string& qid, const std::string& mode) const {
  const auto path = entry_path(qid, mode);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  ErResult r;
  r.dropped = j.at("dropped").get<bool>();
  r.er_text = j.value("er_text", "");
  r.drop_reason = j.value("drop_reason", "");
  r.rounds = rounds_from_json(j.value("rounds", json::array()));
  r.from_cache = true;
  return r;
}

void ErCache::store(const std::string& qid, const std::string& mode, const ErResult& result) const {
  json j{{"qid", qid},
         {"mode", mode},
         {"pipeline_version", kErPipelineVersion},
         {"dropped", result.dropped},
         {"er_text", result.er_text},
         {"drop_reason", result.drop_reason},
         {"rounds", rounds_to_json(result.rounds)}};
  const auto path = entry_path(qid, mode);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache entry " + tmp);
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::optional<std::string> static_description(const EntityRecord& entity, KbClient& kb,
                                              std::size_t max_tokens) {
  auto paragraphs = kb.fetch_extract(entity.name);
  if (!paragraphs.has_value()) return std::nullopt;
  std::string joined;
  for (std::size_t i = 0; i < paragraphs->size() && i < 2; ++i) {
    if (!joined.empty()) joined.push_back(' ');
    joined += (*paragraphs)[i];
  }
  const std::string cleaned = clean_text(joined, max_tokens);
  if (cleaned.empty()) return std::nullopt;
  return cleaned;
}

}  // namespace

ErResult build_static_er(const EntityRecord& entity, KbClient& kb, std::size_t max_tokens,
                         const ErCache* cache) {
  if (entity.name.empty()) throw std::invalid_argument("build_static_er: entity has no name");
  if (cache) {
    if (auto hit = cache->lookup(entity.qid, "static")) return *hit;
  }
  ErResult result;
  auto description = static_description(entity, kb, max_tokens);
  if (!description.has_value()) {
    result.dropped = true;
    result.drop_reason = "no usable description in knowledge base";
  } else {
    result.er_text = *description;
  }
  if (cache) cache->store(entity.qid, "static", result);
  return result;
}

ErResult build_dynamic_er(const EntityRecord& entity, LlmClient& llm, KbClient& kb,
                          const RefusalDetector& detector, std::size_t max_tokens,
                          const ErCache* cache) {
  if (entity.name.empty()) throw std::invalid_argument("build_dynamic_er: entity has no name");
  if (cache) {
    if (auto hit = cache->lookup(entity.qid, "dynamic")) return *hit;
  }

  ErResult result;
  std::vector<ChatMessage> conversation{{"system", std::string(kIntroSystemPrompt)},
                                        {"user", entity.name}};
  ErRound round1;
  round1.prompt = conversation;
  round1.response = llm.chat(conversation);
  result.rounds.push_back(round1);

  std::string final_response = round1.response;
  if (detector.matches(round1.response)) {
    std::string follow_up;
    if (auto context = static_description(entity, kb, max_tokens)) {
      follow_up = *context + " " + std::string(kFollowUpSuffix);
    } else {
      follow_up = std::string(kFollowUpSuffix);
    }
    conversation.push_back({"assistant", round1.response});
    conversation.push_back({"user", follow_up});
    ErRound round2;
    round2.prompt = conversation;
    round2.response = llm.chat(conversation);
    result.rounds.push_back(round2);
    final_response = round2.response;

    if (detector.matches(final_response)) {
      result.dropped = true;
      result.drop_reason = "refusal persisted after second round";
      if (cache) cache->store(entity.qid, "dynamic", result);
      return result;
    }
  }

  result.er_text = clean_text(final_response, max_tokens);
  if (result.er_text.empty()) {
    result.dropped = true;
    result.drop_reason = "empty response after cleaning";
  }
  if (cache) cache->store(entity.qid, "dynamic", result);
  return result;
}

std::string EnhancementReport::to_json() const {
  json j{{"mode", mode},         {"total", total},
         {"built", built},       {"dropped", dropped},
         {"second_round", second_round}, {"from_cache", from_cache}};
  return j.dump();
}

namespace {

EnhancementRun run_enhancement(const std::vector<EntityRecord>& entities, const std::string& mode,
                               const std::function<ErResult(const EntityRecord&)>& build,
                               ErSource source) {
  EnhancementRun run;
  run.report.mode = mode;
  run.report.total = entities.size();
  for (const auto& entity : entities) {
    ErResult r = build(entity);
    if (r.from_cache) ++run.report.from_cache;
    if (r.rounds.size() > 1) ++run.report.second_round;
    if (r.dropped) {
      ++run.report.dropped;
      continue;
    }
    ++run.report.built;
    EntityRecord updated = entity;
    updated.er_text = r.er_text;
    updated.er_source = source;
    run.entities.push_back(std::move(updated));
  }
  return run;
}

}  // namespace

EnhancementRun run_static_enhancement(const std::vector<EntityRecord>& entities, KbClient& kb,
                                      std::size_t max_tokens, const ErCache* cache) {
  return run_enhancement(
      entities, "static",
      [&](const EntityRecord& e) { return build_static_er(e, kb, max_tokens, cache); },
      ErSource::static_page);
}

EnhancementRun run_dynamic_enhancement(const std::vector<EntityRecord>& entities, LlmClient& llm,
                                       KbClient& kb, const RefusalDetector& detector,
                                       std::size_t max_tokens, const ErCache* cache) {
  return run_enhancement(
      entities, "dynamic",
      [&](const EntityRecord& e) {
        return build_dynamic_er(e, llm, kb, detector, max_tokens, cache);
      },
      ErSource::dynamic_llm);
}

}  // namespace mel
