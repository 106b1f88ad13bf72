// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <mutex>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sipreward/errors.hpp"
#include "sipreward/judge.hpp"

namespace sipreward {
namespace {

using nlohmann::json;

// Local chat-completion endpoint returning a configurable status and body.
class FakeEndpoint {
 public:
  FakeEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      res.status = status_;
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() { server_.stop(); }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  void respond(int status, std::string body) {
    std::lock_guard lock(mu_);
    status_ = status;
    body_ = std::move(body);
  }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  json last_body() {
    std::lock_guard lock(mu_);
    return json::parse(last_body_);
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::mutex mu_;
  int status_ = 200;
  std::string body_;
  std::string last_auth_;
  std::string last_body_;
  std::jthread thread_;
};

std::string completion(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

ChatRequest hello() { return {JudgeKind::Content, {{"system", "grade"}, {"user", "hello"}}, {0.0, 64}, nullptr}; }

TEST(HttpJudge, ReturnsAssistantContent) {
  FakeEndpoint ep;
  ep.respond(200, completion("0.65"));
  HttpJudgeBackend backend({ep.base_url(), "secret-key", "judge-model", std::chrono::seconds(5)});
  EXPECT_EQ(backend.complete(hello()), "0.65");
  EXPECT_EQ(ep.last_auth(), "Bearer secret-key");
  const auto body = ep.last_body();
  EXPECT_EQ(body.at("model"), "judge-model");
  EXPECT_EQ(body.at("messages").size(), 2u);
  EXPECT_EQ(body.at("messages")[1].at("content"), "hello");
  EXPECT_EQ(body.at("max_tokens"), 64);
}

TEST(HttpJudge, NoAuthHeaderWithoutKey) {
  FakeEndpoint ep;
  ep.respond(200, completion("x"));
  HttpJudgeBackend backend({ep.base_url(), "", "m", std::chrono::seconds(5)});
  backend.complete(hello());
  EXPECT_EQ(ep.last_auth(), "");
}

TEST(HttpJudge, ServerErrorIsBackendUnavailable) {
  FakeEndpoint ep;
  ep.respond(500, "oops");
  HttpJudgeBackend backend({ep.base_url(), "", "m", std::chrono::seconds(5)});
  EXPECT_THROW(backend.complete(hello()), BackendUnavailable);
}

TEST(HttpJudge, MalformedBodyIsUnparseable) {
  FakeEndpoint ep;
  ep.respond(200, R"({"choices": []})");
  HttpJudgeBackend backend({ep.base_url(), "", "m", std::chrono::seconds(5)});
  try {
    backend.complete(hello());
    FAIL();
  } catch (const UnparseableVerdict& e) {
    EXPECT_EQ(e.raw_response(), R"({"choices": []})");
  }
}

TEST(HttpJudge, UnreachableEndpoint) {
  HttpJudgeBackend backend({"http://127.0.0.1:1/v1", "", "m", std::chrono::seconds(2)});
  EXPECT_THROW(backend.complete(hello()), BackendUnavailable);
}

TEST(HttpJudge, ConfigValidation) {
  EXPECT_THROW(HttpJudgeBackend({"", "", "m", std::chrono::seconds(1)}), ConfigError);
  EXPECT_THROW(HttpJudgeBackend({"http://x", "", "", std::chrono::seconds(1)}), ConfigError);
  EXPECT_THROW(HttpJudgeBackend({"no-scheme", "", "m", std::chrono::seconds(1)}), ConfigError);
}

TEST(HttpJudge, ClientRetriesServerErrorsThenCaches) {
  FakeEndpoint ep;
  ep.respond(200, completion(R"({"score": 0.4, "tier": "InterpretationFailure"})"));
  HttpJudgeBackend backend({ep.base_url(), "", "m", std::chrono::seconds(5)});
  JudgeClientOptions o;
  o.retry.initial_backoff = std::chrono::milliseconds(1);
  JudgeClient client(backend, std::make_shared<JudgeCache>(), o);
  EXPECT_EQ(parse_content_verdict(client.ask(hello())).score, 0.4);
  EXPECT_EQ(parse_content_verdict(client.ask(hello())).score, 0.4);
  EXPECT_EQ(client.backend_calls(), 1u);
}

}  // namespace
}  // namespace sipreward
