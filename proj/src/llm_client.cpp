#include "activeanno/llm_client.hpp"

#include <cstdlib>
#include <regex>

#include <httplib.h>

namespace activeanno {

void LlmClientConfig::validate() const {
  if (temperature < 0.0) throw ValidationError("annotator.llm.temperature must be >= 0");
  if (max_retries < 0) throw ValidationError("annotator.llm.max_retries must be >= 0");
  if (concurrency < 1) throw ValidationError("annotator.llm.concurrency must be >= 1");
  if (!(timeout_seconds > 0.0))
    throw ValidationError("annotator.llm.timeout_seconds must be > 0");
  if (backoff_ms < 0) throw ValidationError("annotator.llm.backoff_ms must be >= 0");
}

nlohmann::json chat_request_body(const LlmClientConfig& config,
                                 const std::string& prompt) {
  return {{"model", config.model},
          {"temperature", config.temperature},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
}

std::string extract_chat_content(const std::string& response_body) {
  const auto j = nlohmann::json::parse(response_body, nullptr, false);
  if (j.is_discarded()) throw TransportError("reply is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("reply has no choices[0].message.content");
  }
}

HttpChatClient::HttpChatClient(LlmClientConfig config) : config_(std::move(config)) {
  config_.validate();
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url))
    throw ValidationError("annotator.llm.endpoint '" + config_.endpoint +
                          "' is not an http(s) URL");
  origin_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (origin_.rfind("https://", 0) == 0)
    throw ValidationError("https endpoints need a build with OpenSSL");
#endif
}

std::string HttpChatClient::complete(const std::string& prompt) const {
  httplib::Client client(origin_);
  const auto seconds = static_cast<time_t>(config_.timeout_seconds);
  client.set_connection_timeout(seconds, 0);
  client.set_read_timeout(seconds, 0);
  client.set_write_timeout(seconds, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv(config_.auth_env.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);

  const auto res = client.Post(path_, headers, chat_request_body(config_, prompt).dump(),
                               "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError("HTTP " + std::to_string(res->status), res->status);
  return extract_chat_content(res->body);
}

}  // namespace activeanno
