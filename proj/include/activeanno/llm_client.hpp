#pragma once

#include <string>

#include <json.hpp>

#include "activeanno/error.hpp"

namespace activeanno {

struct LlmClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_retries = 2;
  double timeout_seconds = 60.0;
  int concurrency = 4;
  // Name of the environment variable holding the bearer token.
  std::string auth_env = "OPENAI_API_KEY";
  // First retry delay; doubles on every further attempt.
  int backoff_ms = 500;

  void validate() const;
};

// Network failure or a non-200 reply.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the assistant message text; throws TransportError.
  virtual std::string complete(const std::string& prompt) const = 0;
};

// Chat-completions request body: one user message holding the prompt.
nlohmann::json chat_request_body(const LlmClientConfig& config,
                                 const std::string& prompt);
// choices[0].message.content of a chat-completions reply.
std::string extract_chat_content(const std::string& response_body);

class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(LlmClientConfig config);
  std::string complete(const std::string& prompt) const override;

 private:
  LlmClientConfig config_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
};

}  // namespace activeanno
