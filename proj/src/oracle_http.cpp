#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "cyclevla/json_io.hpp"
#include "cyclevla/oracle.hpp"
#include "httplib.h"

namespace cyclevla::oracle {

using io::Json;

namespace {

// endpoint "http://host:port" -> (host, port); https is rejected up front
// because this client is deliberately plain-HTTP (local relays only).
std::pair<std::string, int> split_endpoint(const std::string& endpoint) {
  const std::string prefix = "http://";
  if (endpoint.rfind("https://", 0) == 0)
    throw std::invalid_argument(
        "oracle http client: https endpoints are not supported; use a local http relay");
  if (endpoint.rfind(prefix, 0) != 0)
    throw std::invalid_argument("oracle http client: endpoint must start with http://");
  std::string rest = endpoint.substr(prefix.size());
  if (!rest.empty() && rest.back() == '/') rest.pop_back();
  const std::size_t colon = rest.find(':');
  if (colon == std::string::npos) return {rest, 80};
  const std::string host = rest.substr(0, colon);
  const int port = std::stoi(rest.substr(colon + 1));
  if (host.empty() || port <= 0 || port > 65535)
    throw std::invalid_argument("oracle http client: malformed endpoint " + endpoint);
  return {host, port};
}

Json build_request_body(const OracleClientConfig& cfg, const ChatRequest& req) {
  Json body;
  body["model"] = req.model.empty() ? cfg.model : req.model;
  body["temperature"] = req.temperature;
  Json message;
  message["role"] = "user";
  if (req.images.empty()) {
    message["content"] = req.prompt;
  } else {
    Json parts = Json::array();
    Json text_part;
    text_part["type"] = "text";
    text_part["text"] = req.prompt;
    parts.push_back(text_part);
    for (const auto& img : req.images) {
      Json part;
      part["type"] = "image_url";
      part["image_url"] = Json{{"url", img.url}};
      parts.push_back(part);
    }
    message["content"] = parts;
  }
  body["messages"] = Json::array({message});
  return body;
}

std::string extract_content(const std::string& raw) {
  Json parsed;
  try {
    parsed = Json::parse(raw);
  } catch (const Json::parse_error& e) {
    throw OracleError(std::string("endpoint returned invalid JSON: ") + e.what());
  }
  if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
      parsed["choices"].empty())
    throw OracleError("endpoint response has no choices");
  const Json& msg = parsed["choices"][0];
  if (!msg.contains("message") || !msg["message"].contains("content") ||
      !msg["message"]["content"].is_string())
    throw OracleError("endpoint response has no message content");
  return msg["message"]["content"].get<std::string>();
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

// ==========================================================================
// transcripts
// ==========================================================================

void append_transcript(const std::string& path, int seq, const std::string& backend,
                       const ChatRequest& req, const std::string& response) {
  Json row;
  row["seq"] = seq;
  row["backend"] = backend;
  row["model"] = req.model;
  row["temperature"] = req.temperature;
  row["prompt"] = req.prompt;
  if (!req.images.empty()) {
    Json imgs = Json::array();
    for (const auto& img : req.images) imgs.push_back(Json{{"tag", img.tag}, {"url", img.url}});
    row["images"] = imgs;
  }
  row["response"] = response;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open transcript for append: " + path);
  out << row.dump() << "\n";
}

// ==========================================================================
// HTTP client
// ==========================================================================

HttpChatClient::HttpChatClient(OracleClientConfig cfg) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  split_endpoint(cfg_.endpoint);  // fail fast on malformed endpoints
}

std::string HttpChatClient::complete(const ChatRequest& req) {
  const auto [host, port] = split_endpoint(cfg_.endpoint);
  httplib::Client client(host, port);
  client.set_connection_timeout(static_cast<int>(cfg_.timeout_sec), 0);
  client.set_read_timeout(static_cast<int>(cfg_.timeout_sec), 0);

  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = build_request_body(cfg_, req).dump();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay =
          std::chrono::milliseconds(static_cast<long long>(cfg_.backoff_base_ms) << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
    auto res = client.Post(cfg_.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      const std::string content = extract_content(res->body);
      if (!cfg_.transcript_path.empty())
        append_transcript(cfg_.transcript_path, seq_++, "http", req, content);
      return content;
    }
    last_error = "status " + std::to_string(res->status) + ": " + res->body;
    if (!retryable_status(res->status)) break;
  }
  throw OracleError("chat completion failed after " + std::to_string(cfg_.max_retries + 1) +
                    " attempt(s); last error: " + last_error);
}

// ==========================================================================
// replay client
// ==========================================================================

ReplayChatClient::ReplayChatClient(const std::string& transcript_path) {
  for (const Json& row : io::read_jsonl(transcript_path)) {
    if (!row.contains("prompt") || !row.contains("response"))
      throw std::runtime_error("transcript row missing prompt/response: " + transcript_path);
    entries_.push_back(
        Entry{row["prompt"].get<std::string>(), row["response"].get<std::string>()});
  }
}

std::string ReplayChatClient::complete(const ChatRequest& req) {
  if (next_ >= entries_.size())
    throw OracleError("replay transcript exhausted after " + std::to_string(entries_.size()) +
                      " exchange(s)");
  const Entry& entry = entries_[next_];
  if (entry.prompt != req.prompt)
    throw OracleError("replay mismatch at exchange " + std::to_string(next_) +
                      ": prompt differs from the recording");
  ++next_;
  return entry.response;
}

}  // namespace cyclevla::oracle
