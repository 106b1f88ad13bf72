// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sipreward/errors.hpp"
#include "sipreward/judge.hpp"

namespace sipreward {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("judge base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

HttpJudgeConfig HttpJudgeConfig::from_env(HttpJudgeConfig defaults) {
  if (const char* url = std::getenv("JUDGE_BASE_URL"); url && *url) defaults.base_url = url;
  if (const char* key = std::getenv("JUDGE_API_KEY"); key && *key) defaults.api_key = key;
  return defaults;
}

HttpJudgeConfig HttpJudgeConfig::from_env() { return from_env(HttpJudgeConfig{}); }

HttpJudgeBackend::HttpJudgeBackend(HttpJudgeConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ConfigError("judge endpoint is not configured (set --judge-endpoint or JUDGE_BASE_URL)");
  if (config_.model.empty()) throw ConfigError("judge model is not configured (set --judge-model)");
  split_url(config_.base_url);
}

std::string HttpJudgeBackend::id() const { return "http:" + config_.base_url; }

std::string HttpJudgeBackend::complete(const ChatRequest& request) {
  const auto url = split_url(config_.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  const json body = {{"model", config_.model},
                     {"messages", messages},
                     {"temperature", request.sampling.temperature},
                     {"max_tokens", request.sampling.max_tokens}};
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  spdlog::debug("judge POST {}{}/chat/completions (Authorization: {}) body={}", url.origin, url.path,
                config_.api_key.empty() ? "none" : "Bearer ***", payload);

  auto res = client.Post(url.path + "/chat/completions", headers, payload, "application/json");
  if (!res) throw BackendUnavailable("request to " + url.origin + " failed: " + httplib::to_string(res.error()));
  spdlog::debug("judge reply status={} body={}", res->status, res->body);
  if (res->status != 200) {
    throw BackendUnavailable("judge endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    throw UnparseableVerdict(std::string("malformed chat-completion body: ") + e.what(), res->body);
  }
}

}  // namespace sipreward
