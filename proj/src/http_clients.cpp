#include "melkit/http_clients.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

namespace mel {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string host_port;
  std::string path_prefix;
};

SplitUrl split_url(const std::string& base_url) {
  std::string rest = base_url;
  const auto scheme = rest.find("://");
  std::string prefix = "http://";
  if (scheme != std::string::npos) {
    prefix = rest.substr(0, scheme + 3);
    rest = rest.substr(scheme + 3);
  }
  const auto slash = rest.find('/');
  SplitUrl out;
  out.host_port = prefix + (slash == std::string::npos ? rest : rest.substr(0, slash));
  out.path_prefix = slash == std::string::npos ? "" : rest.substr(slash);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

json post_json(const std::string& base_url, const std::string& endpoint, const json& body,
               const char* token_env) {
  const SplitUrl url = split_url(base_url);
  httplib::Client client(url.host_port);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  httplib::Headers headers;
  if (const char* token = std::getenv(token_env); token != nullptr && *token != '\0')
    headers.emplace("Authorization", std::string("Bearer ") + token);

  const auto res = client.Post(url.path_prefix + endpoint, headers, body.dump(),
                               "application/json");
  if (!res)
    throw ClientTransportError("transport failure contacting " + base_url + endpoint + ": " +
                               httplib::to_string(res.error()));
  if (res->status >= 500)
    throw ClientTransportError("server error " + std::to_string(res->status) + " from " +
                               base_url + endpoint);
  if (res->status != 200)
    throw std::runtime_error("unexpected status " + std::to_string(res->status) + " from " +
                             base_url + endpoint);
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded())
    throw std::runtime_error("malformed JSON response from " + base_url + endpoint);
  return parsed;
}

}  // namespace

HttpKbClient::HttpKbClient(std::string base_url) : base_url_(std::move(base_url)) {}

std::optional<std::vector<std::string>> HttpKbClient::fetch_extract(const std::string& title) {
  const json response = post_json(base_url_, "/extract", json{{"title", title}}, "MELKIT_KB_TOKEN");
  if (!response.value("found", false)) return std::nullopt;
  std::vector<std::string> paragraphs;
  for (const auto& p : response.at("paragraphs")) paragraphs.push_back(p.get<std::string>());
  return paragraphs;
}

HttpLlmClient::HttpLlmClient(std::string base_url) : base_url_(std::move(base_url)) {}

std::string HttpLlmClient::chat(const std::vector<ChatMessage>& messages) {
  json body{{"messages", json::array()}};
  for (const auto& m : messages)
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  return post_json(base_url_, "/chat", body, "MELKIT_LLM_TOKEN").at("content").get<std::string>();
}

}  // namespace mel
