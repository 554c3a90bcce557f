#pragma once
// Entity-representation enhancement: static (knowledge-base page extract,
// cleaned) and dynamic (multi-round chat querying with refusal detection),
// with an atomic replay cache and drop accounting.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "melkit/datamodel.hpp"

namespace mel {

// Reference markers like [3] stripped, control characters removed, whitespace
// collapsed, trimmed, truncated to max_tokens whole tokens. Idempotent.
std::string clean_text(const std::string& raw, std::size_t max_tokens = 256);

// Transport failures are retryable and distinct from NOT_FOUND.
class ClientTransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Page-extract contract: title in, plaintext paragraphs out. nullopt = page
// not found in the knowledge base.
class KbClient {
 public:
  virtual ~KbClient() = default;
  virtual std::optional<std::vector<std::string>> fetch_extract(const std::string& title) = 0;
};

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

// Chat-completion contract: ordered role/content messages in, text out.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string chat(const std::vector<ChatMessage>& messages) = 0;
};

// Replays recorded extracts from a JSONL file; paragraphs are the blank-line
// separated blocks of the recorded extract.
class FixtureKbClient : public KbClient {
 public:
  explicit FixtureKbClient(const std::filesystem::path& fixture_file);
  std::optional<std::vector<std::string>> fetch_extract(const std::string& title) override;

  std::size_t calls() const { return calls_; }

 private:
  std::map<std::string, std::optional<std::string>> extracts_;
  std::size_t calls_ = 0;
};

// Replays recorded responses keyed by the exact content of the last user turn.
class FixtureLlmClient : public LlmClient {
 public:
  explicit FixtureLlmClient(const std::filesystem::path& fixture_file);
  std::string chat(const std::vector<ChatMessage>& messages) override;

  std::size_t calls() const { return calls_; }
  const std::vector<std::vector<ChatMessage>>& call_log() const { return call_log_; }

 private:
  std::map<std::string, std::string> responses_;
  std::size_t calls_ = 0;
  std::vector<std::vector<ChatMessage>> call_log_;
};

// Retries transport failures with exponential backoff. sleep_fn is injectable
// so tests exercise the schedule without waiting.
class RetryingLlmClient : public LlmClient {
 public:
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  RetryingLlmClient(LlmClient& inner, int max_attempts = 3,
                    std::chrono::milliseconds initial_backoff = std::chrono::milliseconds(250),
                    SleepFn sleep_fn = nullptr);
  std::string chat(const std::vector<ChatMessage>& messages) override;

 private:
  LlmClient& inner_;
  int max_attempts_;
  std::chrono::milliseconds initial_backoff_;
  SleepFn sleep_fn_;
};

// Per-client rate limiting: spaces calls at least min_interval apart.
// Thread-safe, so bounded-parallel entity builds share one throttle.
class CallThrottle {
 public:
  using SleepFn = std::function<void(std::chrono::milliseconds)>;
  using ClockFn = std::function<std::chrono::steady_clock::time_point()>;

  explicit CallThrottle(std::chrono::milliseconds min_interval, SleepFn sleep_fn = nullptr,
                        ClockFn clock_fn = nullptr);
  void acquire();

 private:
  std::chrono::milliseconds min_interval_;
  SleepFn sleep_fn_;
  ClockFn clock_fn_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_allowed_;
};

class ThrottledLlmClient : public LlmClient {
 public:
  ThrottledLlmClient(LlmClient& inner, CallThrottle& throttle) : inner_(inner), throttle_(throttle) {}
  std::string chat(const std::vector<ChatMessage>& messages) override {
    throttle_.acquire();
    return inner_.chat(messages);
  }

 private:
  LlmClient& inner_;
  CallThrottle& throttle_;
};

class ThrottledKbClient : public KbClient {
 public:
  ThrottledKbClient(KbClient& inner, CallThrottle& throttle) : inner_(inner), throttle_(throttle) {}
  std::optional<std::vector<std::string>> fetch_extract(const std::string& title) override {
    throttle_.acquire();
    return inner_.fetch_extract(title);
  }

 private:
  KbClient& inner_;
  CallThrottle& throttle_;
};

// Casefolded-substring refusal detection. The pattern list ships as data
// (one casefolded substring per line, # comments allowed).
struct RefusalDetector {
  std::vector<std::string> patterns;

  bool matches(const std::string& response) const;
  static RefusalDetector load(const std::filesystem::path& pattern_file);
};

inline constexpr std::string_view kIntroSystemPrompt =
    "You are a helpful assistant designed to give a comprehensive introduction about people. "
    "Who is this one?";
inline constexpr std::string_view kFollowUpSuffix = "Please provide more detailed information.";

struct ErRound {
  std::vector<ChatMessage> prompt;
  std::string response;
};

struct ErResult {
  bool dropped = false;
  std::string er_text;      // cleaned; empty iff dropped
  std::string drop_reason;  // set iff dropped
  std::vector<ErRound> rounds;
  bool from_cache = false;
};

inline constexpr int kErPipelineVersion = 1;

// One JSON file per (qid, mode, pipeline version); writes are atomic
// (write-then-rename), so replays are idempotent and a run is resumable.
class ErCache {
 public:
  explicit ErCache(const std::filesystem::path& dir);

  std::optional<ErResult> lookup(const std::string& qid, const std::string& mode) const;
  void store(const std::string& qid, const std::string& mode, const ErResult& result) const;

 private:
  std::filesystem::path entry_path(const std::string& qid, const std::string& mode) const;
  std::filesystem::path dir_;
};

// First two paragraphs of the page extract, cleaned. NOT_FOUND or empty after
// cleaning -> dropped.
ErResult build_static_er(const EntityRecord& entity, KbClient& kb, std::size_t max_tokens = 256,
                         const ErCache* cache = nullptr);

// Round 1 asks for an introduction of the entity by name. If the refusal
// detector matches, round 2 supplies the static description as context
// followed by the fixed follow-up sentence. Still refused -> dropped.
ErResult build_dynamic_er(const EntityRecord& entity, LlmClient& llm, KbClient& kb,
                          const RefusalDetector& detector, std::size_t max_tokens = 256,
                          const ErCache* cache = nullptr);

struct EnhancementReport {
  std::string mode;  // static | dynamic
  std::size_t total = 0;
  std::size_t built = 0;
  std::size_t dropped = 0;
  std::size_t second_round = 0;
  std::size_t from_cache = 0;

  std::string to_json() const;
};

struct EnhancementRun {
  std::vector<EntityRecord> entities;  // built entities, er_text replaced
  EnhancementReport report;
};

EnhancementRun run_static_enhancement(const std::vector<EntityRecord>& entities, KbClient& kb,
                                      std::size_t max_tokens = 256, const ErCache* cache = nullptr);
EnhancementRun run_dynamic_enhancement(const std::vector<EntityRecord>& entities, LlmClient& llm,
                                       KbClient& kb, const RefusalDetector& detector,
                                       std::size_t max_tokens = 256,
                                       const ErCache* cache = nullptr);

}  // namespace mel
