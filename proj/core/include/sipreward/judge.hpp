// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "sipreward/core.hpp"
#include "sipreward/trajectory.hpp"

namespace sipreward {

enum class JudgeKind { Structural, Content, Segmentation };

std::string_view to_string(JudgeKind kind) noexcept;

/// Content judging either compares against a reference stage-wise rationale
/// or scores the candidate on its own.
enum class RubricMode { ReferenceCompared, ReferenceFree };

struct JudgeRequest {
  JudgeKind kind = JudgeKind::Structural;
  Instance instance;
  ParsedTrajectory trajectory;
  std::optional<std::string> reference_rationale;
};

enum class SipStage { Encoding, Interpretation, Goal, Response };

struct StructuralVerdict {
  std::array<bool, 4> stage_present{};
  bool in_order = false;
  bool premature_conclusion = false;
  double score = 0.0;
};

/// 0.25 per stage present, halved when out of order, halved again for a
/// premature conclusion.
double structural_score_from(const std::array<bool, 4>& stage_present, bool in_order,
                             bool premature_conclusion) noexcept;

enum class ContentTier { PerceptionFailure, InterpretationFailure, GoalFailure, HighQuality };

std::string_view to_string(ContentTier tier) noexcept;
std::optional<ContentTier> parse_content_tier(std::string_view name) noexcept;

/// Upper score bound a tier permits (0.2, 0.5, 0.7, 1.0).
double tier_cap(ContentTier tier) noexcept;

/// Rubric band of a bare score: <= 0.2, <= 0.5, <= 0.7, above.
ContentTier tier_for_score(double score) noexcept;

struct ContentVerdict {
  double score = 0.0;
  ContentTier tier = ContentTier::PerceptionFailure;
  /// True when the backend's own tier label forced a lower score.
  bool clamped = false;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct SamplingParams {
  double temperature = 0.0;
  int max_tokens = 512;
};

/// What a backend receives. `context` lets in-process backends (the mock)
/// see the structured request; wire backends only use the messages.
struct ChatRequest {
  JudgeKind purpose = JudgeKind::Structural;
  std::vector<ChatMessage> messages;
  SamplingParams sampling;
  const JudgeRequest* context = nullptr;
};

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string model() const = 0;
  /// Returns the assistant reply text. Throws BackendUnavailable on transport
  /// or service failure.
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Digest of (backend id, model, prompt messages, sampling params).
struct JudgeCacheKey {
  std::string digest;

  static JudgeCacheKey of(const JudgeBackend& backend, const ChatRequest& request);
  friend bool operator==(const JudgeCacheKey&, const JudgeCacheKey&) = default;
};

/// Reply cache keyed by JudgeCacheKey. With a directory, each entry is one
/// file named after the digest; without one it is memory-only. Safe for
/// concurrent use.
class JudgeCache {
 public:
  JudgeCache() = default;
  explicit JudgeCache(std::filesystem::path directory);

  std::optional<std::string> get(const JudgeCacheKey& key);
  void put(const JudgeCacheKey& key, const std::string& reply);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> memory_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  /// Wall-clock cap for one request, retries included.
  std::chrono::milliseconds max_total{std::chrono::seconds(60)};
};

struct JudgeClientOptions {
  RetryPolicy retry;
  SamplingParams sampling;
  std::size_t max_in_flight = 4;
  RubricMode rubric = RubricMode::ReferenceFree;
  /// Fall back to positional quartiles when segmentation fails or is declined.
  bool segmentation_fallback = true;
};

/// Cache, retry, and concurrency limit in front of a backend. Identical
/// requests issued concurrently share one backend call.
class JudgeClient {
 public:
  JudgeClient(JudgeBackend& backend, std::shared_ptr<JudgeCache> cache, JudgeClientOptions options = {});

  std::string ask(const ChatRequest& request);

  JudgeBackend& backend() const noexcept { return backend_; }
  const JudgeClientOptions& options() const noexcept { return options_; }
  std::size_t backend_calls() const noexcept { return backend_calls_.load(); }

 private:
  std::string call_with_retry(const ChatRequest& request);

  JudgeBackend& backend_;
  std::shared_ptr<JudgeCache> cache_;
  JudgeClientOptions options_;
  std::counting_semaphore<1024> in_flight_;
  std::mutex pending_mu_;
  std::map<std::string, std::shared_future<std::string>> pending_;
  std::atomic<std::size_t> backend_calls_{0};
};

// Prompt builders. Each returns the system + user messages for one request.
std::vector<ChatMessage> structural_prompt(const JudgeRequest& req);
std::vector<ChatMessage> content_prompt(const JudgeRequest& req, RubricMode mode);
std::vector<ChatMessage> segmentation_prompt(const JudgeRequest& req, const Tokenizer& tokenizer);

// Reply parsers: a structured (JSON) pass, then a key/scalar fallback.
// Both throw UnparseableVerdict with the raw reply attached.
StructuralVerdict parse_structural_verdict(std::string_view reply);
ContentVerdict parse_content_verdict(std::string_view reply);
/// nullopt when the reply declines or is not a valid partition of `length`.
std::optional<StageRanges> parse_segmentation(std::string_view reply, std::size_t length);

StructuralVerdict structural_score(const JudgeRequest& req, JudgeClient& client);
ContentVerdict content_score(const JudgeRequest& req, JudgeClient& client);
StageRanges segment_stages(const JudgeRequest& req, JudgeClient& client,
                           const Tokenizer& tokenizer = default_tokenizer());

/// Words the mock treats as evidence that a stage is present.
const std::array<std::vector<std::string_view>, 4>& mock_stage_cues();

struct MockJudgeOptions {
  /// Probability of flipping each structural boolean.
  double structural_noise = 0.05;
  /// Extra content score granted to long traces, scaled by min(1, L / 4000).
  double verbosity_bias = 0.0;
  /// Probability that the reported tier label ignores the score band.
  double rubric_violation_rate = 0.1;
  /// Probability of declining a segmentation request.
  double decline_rate = 0.0;
  /// Fail this many calls with BackendUnavailable before answering.
  std::size_t fail_first = 0;
};

/// Deterministic backend for offline runs. Every reply is a pure function
/// of (seed, request): randomness is drawn from the prompt digest, and when
/// the structured request is attached the verdict also reflects the trace
/// (stage cue words, early option mentions, answer correctness).
class MockJudge final : public JudgeBackend {
 public:
  explicit MockJudge(std::uint64_t seed, MockJudgeOptions options = {});

  std::string id() const override;
  std::string model() const override { return "mock"; }
  std::string complete(const ChatRequest& request) override;

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::uint64_t seed_;
  MockJudgeOptions options_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> failures_left_;
};

std::unique_ptr<JudgeBackend> mock_judge(std::uint64_t seed, MockJudgeOptions options = {});

struct HttpJudgeConfig {
  /// e.g. "https://api.example.com/v1"; requests go to <base>/chat/completions.
  std::string base_url;
  std::string api_key;
  std::string model;
  std::chrono::seconds timeout{60};

  /// base_url from JUDGE_BASE_URL and api_key from JUDGE_API_KEY, when set.
  static HttpJudgeConfig from_env(HttpJudgeConfig defaults);
  static HttpJudgeConfig from_env();
};

/// Chat-completion client.
class HttpJudgeBackend final : public JudgeBackend {
 public:
  explicit HttpJudgeBackend(HttpJudgeConfig config);

  std::string id() const override;
  std::string model() const override { return config_.model; }
  std::string complete(const ChatRequest& request) override;

 private:
  HttpJudgeConfig config_;
};

}  // namespace sipreward
