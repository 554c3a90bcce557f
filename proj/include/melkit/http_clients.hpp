#pragma once
// HTTP-backed implementations of the enhancement client contracts. The wire
// shapes are documented in docs/data-formats.md:
//   POST {base}/extract  {"title": ...}    -> {"found": bool, "paragraphs": [...]}
//   POST {base}/chat     {"messages": [...]} -> {"content": ...}
// Credentials come from the environment only (MELKIT_KB_TOKEN,
// MELKIT_LLM_TOKEN), sent as bearer tokens when set.

#include <string>

#include "melkit/erpipeline.hpp"

namespace mel {

class HttpKbClient : public KbClient {
 public:
  explicit HttpKbClient(std::string base_url);
  std::optional<std::vector<std::string>> fetch_extract(const std::string& title) override;

 private:
  std::string base_url_;
};

class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(std::string base_url);
  std::string chat(const std::vector<ChatMessage>& messages) override;

 private:
  std::string base_url_;
};

}  // namespace mel
