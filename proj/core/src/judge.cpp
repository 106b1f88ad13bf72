// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "sipreward/errors.hpp"
#include "sipreward/random.hpp"

namespace sipreward {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kStageKeys = {"encoding", "interpretation", "goal", "response"};
constexpr std::array<std::string_view, 4> kTierNames = {"PerceptionFailure", "InterpretationFailure", "GoalFailure",
                                                        "HighQuality"};

std::string options_block(const Instance& inst) {
  std::string out;
  for (const auto& o : inst.options) {
    out += o.label;
    out += ". ";
    out += o.text;
    out += '\n';
  }
  return out;
}

std::string case_block(const JudgeRequest& req) {
  std::string out;
  out += "[Story]\n" + req.instance.story + "\n\n";
  out += "[Question]\n" + req.instance.question + "\n\n";
  out += "[Options]\n" + options_block(req.instance) + "\n";
  out += "[Candidate reasoning]\n" + req.trajectory.thinking.value_or("") + "\n\n";
  out += "[Candidate answer]\n";
  out += req.trajectory.answer_label ? std::string(1, *req.trajectory.answer_label) : std::string("(none)");
  out += '\n';
  return out;
}

// Locates the outermost {...} (or [...]) span and parses it.
std::optional<json> embedded_json(std::string_view reply, char open, char close) {
  const auto b = reply.find(open);
  const auto e = reply.rfind(close);
  if (b == std::string_view::npos || e == std::string_view::npos || e < b) return std::nullopt;
  try {
    return json::parse(reply.substr(b, e - b + 1));
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

std::optional<bool> as_bool(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<int>() != 0;
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "yes") return true;
    if (s == "false" || s == "no") return false;
  }
  return std::nullopt;
}

std::optional<double> as_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    try {
      std::size_t used = 0;
      const std::string s = j.get<std::string>();
      double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::uint64_t digest_word(const std::string& hex) { return std::stoull(hex.substr(0, 16), nullptr, 16); }

// Length-prefixed, so distinct message lists never collide.
std::string prompt_text(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += std::to_string(m.role.size()) + ':' + m.role + std::to_string(m.content.size()) + ':';
    out += m.content;
  }
  return out;
}

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

std::string_view to_string(JudgeKind kind) noexcept {
  switch (kind) {
    case JudgeKind::Structural:
      return "structural";
    case JudgeKind::Content:
      return "content";
    case JudgeKind::Segmentation:
      return "segmentation";
  }
  return "unknown";
}

double structural_score_from(const std::array<bool, 4>& stage_present, bool in_order,
                             bool premature_conclusion) noexcept {
  double score = 0.25 * static_cast<double>(std::count(stage_present.begin(), stage_present.end(), true));
  if (!in_order) score *= 0.5;
  if (premature_conclusion) score *= 0.5;
  return std::clamp(score, 0.0, 1.0);
}

std::string_view to_string(ContentTier tier) noexcept { return kTierNames[static_cast<std::size_t>(tier)]; }

std::optional<ContentTier> parse_content_tier(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kTierNames.size(); ++i) {
    if (kTierNames[i] == name) return static_cast<ContentTier>(i);
  }
  return std::nullopt;
}

double tier_cap(ContentTier tier) noexcept {
  switch (tier) {
    case ContentTier::PerceptionFailure:
      return 0.2;
    case ContentTier::InterpretationFailure:
      return 0.5;
    case ContentTier::GoalFailure:
      return 0.7;
    case ContentTier::HighQuality:
      return 1.0;
  }
  return 1.0;
}

ContentTier tier_for_score(double score) noexcept {
  if (score <= 0.2) return ContentTier::PerceptionFailure;
  if (score <= 0.5) return ContentTier::InterpretationFailure;
  if (score <= 0.7) return ContentTier::GoalFailure;
  return ContentTier::HighQuality;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = kHex[md[i] >> 4];
    out[2 * i + 1] = kHex[md[i] & 0xf];
  }
  return out;
}

JudgeCacheKey JudgeCacheKey::of(const JudgeBackend& backend, const ChatRequest& request) {
  json j;
  j["backend"] = backend.id();
  j["model"] = backend.model();
  j["prompt"] = prompt_text(request.messages);
  j["temperature"] = request.sampling.temperature;
  j["max_tokens"] = request.sampling.max_tokens;
  return {sha256_hex(j.dump())};
}

// ---- cache -----------------------------------------------------------------

JudgeCache::JudgeCache(std::filesystem::path directory) : dir_(std::move(directory)) {
  std::filesystem::create_directories(*dir_);
}

std::optional<std::string> JudgeCache::get(const JudgeCacheKey& key) {
  std::lock_guard lock(mu_);
  if (auto it = memory_.find(key.digest); it != memory_.end()) return it->second;
  if (!dir_) return std::nullopt;
  std::ifstream in(*dir_ / (key.digest + ".json"), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    json j = json::parse(in);
    auto reply = j.at("reply").get<std::string>();
    memory_.emplace(key.digest, reply);
    return reply;
  } catch (const std::exception& e) {
    spdlog::warn("ignoring corrupt judge cache entry {}: {}", key.digest, e.what());
    return std::nullopt;
  }
}

void JudgeCache::put(const JudgeCacheKey& key, const std::string& reply) {
  std::lock_guard lock(mu_);
  memory_[key.digest] = reply;
  if (!dir_) return;
  const auto final_path = *dir_ / (key.digest + ".json");
  const auto tmp_path = *dir_ / (key.digest + ".json.tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write judge cache entry " + tmp_path.string());
    out << json{{"reply", reply}}.dump() << '\n';
  }
  std::filesystem::rename(tmp_path, final_path);
}

std::size_t JudgeCache::size() const {
  std::lock_guard lock(mu_);
  return memory_.size();
}

// ---- client ----------------------------------------------------------------

JudgeClient::JudgeClient(JudgeBackend& backend, std::shared_ptr<JudgeCache> cache, JudgeClientOptions options)
    : backend_(backend),
      cache_(std::move(cache)),
      options_(options),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options.max_in_flight, 1, 1024))) {}

std::string JudgeClient::ask(const ChatRequest& request) {
  if (!cache_) return call_with_retry(request);
  const auto key = JudgeCacheKey::of(backend_, request);
  if (cache_) {
    if (auto hit = cache_->get(key)) return *hit;
  }

  std::promise<std::string> promise;
  {
    std::unique_lock lock(pending_mu_);
    if (auto it = pending_.find(key.digest); it != pending_.end()) {
      auto fut = it->second;
      lock.unlock();
      return fut.get();
    }
    if (cache_) {
      if (auto hit = cache_->get(key)) return *hit;
    }
    pending_.emplace(key.digest, promise.get_future().share());
  }

  try {
    std::string reply = call_with_retry(request);
    if (cache_) cache_->put(key, reply);
    promise.set_value(reply);
    std::lock_guard lock(pending_mu_);
    pending_.erase(key.digest);
    return reply;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(pending_mu_);
    pending_.erase(key.digest);
    throw;
  }
}

std::string JudgeClient::call_with_retry(const ChatRequest& request) {
  SemaphoreGuard slot(in_flight_);
  const auto start = std::chrono::steady_clock::now();
  auto backoff = options_.retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      backend_calls_.fetch_add(1);
      return backend_.complete(request);
    } catch (const BackendUnavailable& e) {
      const auto elapsed = std::chrono::steady_clock::now() - start;
      if (attempt >= options_.retry.max_attempts || elapsed + backoff > options_.retry.max_total) {
        throw BackendUnavailable(backend_.id() + " failed after " + std::to_string(attempt) +
                                 " attempt(s): " + e.what());
      }
      spdlog::debug("judge attempt {} failed ({}), retrying in {} ms", attempt, e.what(), backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

// ---- prompts ---------------------------------------------------------------

std::vector<ChatMessage> structural_prompt(const JudgeRequest& req) {
  static const std::string kSystem =
      "You audit the structure of social reasoning. A sound trace moves through four stages of social "
      "information processing, in this order:\n"
      "1. encoding: it identifies the social cues actually present in the story;\n"
      "2. interpretation: it infers the characters' mental states from those cues;\n"
      "3. goal: it clarifies what the characters want or intend;\n"
      "4. response: only then does it select the answer.\n"
      "Mark a stage present only if the trace performs it explicitly. Mark premature_conclusion when the "
      "trace commits to an option before the cues have been encoded and interpreted, or builds its "
      "argument from the options instead of the story.\n"
      "Reply with one JSON object and nothing else:\n"
      "{\"encoding\": bool, \"interpretation\": bool, \"goal\": bool, \"response\": bool, "
      "\"in_order\": bool, \"premature_conclusion\": bool}";
  return {{"system", kSystem}, {"user", case_block(req)}};
}

std::vector<ChatMessage> content_prompt(const JudgeRequest& req, RubricMode mode) {
  static const std::string kSystem =
      "You grade the content of social reasoning on a 0.0 to 1.0 scale. Judge the stages in order "
      "(encoding, interpretation, goal, response); an early mistake bounds the whole grade.\n"
      "- PerceptionFailure (0.0-0.2): cues are invented, contradicted, or key facts are missed. "
      "Never above 0.2.\n"
      "- InterpretationFailure (0.3-0.5): cues are right but mental states or the social dynamic are "
      "misread. Never above 0.5.\n"
      "- GoalFailure (0.6-0.7): understanding is right but the link from goal to action is weak. "
      "Never above 0.7.\n"
      "- HighQuality (0.8-1.0): every stage is grounded and justifies the action; 1.0 for a flawless "
      "match, 0.8-0.9 for correct logic with some redundancy.\n"
      "Reply with JSON: {\"score\": number, \"tier\": one of PerceptionFailure, InterpretationFailure, "
      "GoalFailure, HighQuality}.";
  std::string user = case_block(req);
  user += "\n[Gold answer]\n";
  user += req.instance.answer;
  user += '\n';
  if (mode == RubricMode::ReferenceCompared) {
    if (!req.reference_rationale) {
      throw DataError("reference-compared content judging requires a reference rationale for " + req.instance.id);
    }
    user += "\n[Reference stage-wise analysis]\n" + *req.reference_rationale + '\n';
  }
  return {{"system", kSystem}, {"user", std::move(user)}};
}

std::vector<ChatMessage> segmentation_prompt(const JudgeRequest& req, const Tokenizer& tokenizer) {
  static const std::string kSystem =
      "Split the reasoning trace into the four social information processing stages (encoding, "
      "interpretation, goal, response). Tokens are numbered from 0. Reply with JSON "
      "{\"stages\": [[b0,e0],[b1,e1],[b2,e2],[b3,e3]]} where the half-open ranges are contiguous, in "
      "order, may be empty, and cover every token. Reply DECLINE if the trace cannot be segmented.";
  const auto tokens = tokenizer.split(req.trajectory.thinking.value_or(""));
  std::string numbered;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    numbered += std::to_string(i);
    numbered += ':';
    numbered.append(tokens[i]);
    numbered += ' ';
  }
  std::string user = "[Token count]\n" + std::to_string(tokens.size()) + "\n\n[Tokens]\n" + numbered + '\n';
  return {{"system", kSystem}, {"user", std::move(user)}};
}

// ---- parsers ---------------------------------------------------------------

StructuralVerdict parse_structural_verdict(std::string_view reply) {
  constexpr std::array<std::string_view, 6> kKeys = {"encoding", "interpretation", "goal",
                                                     "response", "in_order",       "premature_conclusion"};
  std::array<std::optional<bool>, 6> values{};

  if (auto j = embedded_json(reply, '{', '}'); j && j->is_object()) {
    for (std::size_t i = 0; i < kKeys.size(); ++i) {
      if (auto it = j->find(std::string(kKeys[i])); it != j->end()) values[i] = as_bool(*it);
    }
  }
  if (std::any_of(values.begin(), values.end(), [](const auto& v) { return !v; })) {
    static const std::regex kLine(
        R"((encoding|interpretation|goal|response|in_order|premature_conclusion)\s*["']?\s*[:=]\s*["']?(true|false|yes|no))",
        std::regex::icase);
    const std::string text(reply);
    for (std::sregex_iterator it(text.begin(), text.end(), kLine), end; it != end; ++it) {
      const std::string key = lower((*it)[1].str());
      const std::string val = lower((*it)[2].str());
      for (std::size_t i = 0; i < kKeys.size(); ++i) {
        if (kKeys[i] == key && !values[i]) values[i] = (val == "true" || val == "yes");
      }
    }
  }
  for (std::size_t i = 0; i < kKeys.size(); ++i) {
    if (!values[i]) throw UnparseableVerdict("structural verdict lacks \"" + std::string(kKeys[i]) + "\"", std::string(reply));
  }
  StructuralVerdict v;
  for (std::size_t i = 0; i < 4; ++i) v.stage_present[i] = *values[i];
  v.in_order = *values[4];
  v.premature_conclusion = *values[5];
  v.score = structural_score_from(v.stage_present, v.in_order, v.premature_conclusion);
  return v;
}

ContentVerdict parse_content_verdict(std::string_view reply) {
  std::optional<double> score;
  std::optional<ContentTier> reported;

  if (auto j = embedded_json(reply, '{', '}'); j && j->is_object()) {
    if (auto it = j->find("score"); it != j->end()) score = as_number(*it);
    if (auto it = j->find("tier"); it != j->end() && it->is_string()) reported = parse_content_tier(it->get<std::string>());
  }
  if (!score) {
    static const std::regex kLabelled(R"(score\s*["']?\s*[:=]?\s*([0-9]*\.?[0-9]+))", std::regex::icase);
    static const std::regex kBare(R"((^|[^0-9.])([0-9]*\.?[0-9]+))");
    const std::string text(reply);
    std::smatch m;
    if (std::regex_search(text, m, kLabelled)) {
      score = std::stod(m[1].str());
    } else if (std::regex_search(text, m, kBare)) {
      score = std::stod(m[2].str());
    }
  }
  if (!score) throw UnparseableVerdict("no score in content verdict", std::string(reply));
  if (!(*score >= 0.0 && *score <= 1.0)) {
    throw UnparseableVerdict("content score " + std::to_string(*score) + " outside [0, 1]", std::string(reply));
  }

  ContentVerdict v;
  v.score = *score;
  v.tier = tier_for_score(*score);
  if (reported && *reported < v.tier) {
    spdlog::debug("content judge reported tier {} with score {}; clamping to {}", to_string(*reported), *score,
                 tier_cap(*reported));
    v.tier = *reported;
    v.score = tier_cap(*reported);
    v.clamped = true;
  }
  return v;
}

std::optional<StageRanges> parse_segmentation(std::string_view reply, std::size_t length) {
  std::optional<json> j = embedded_json(reply, '{', '}');
  json stages;
  if (j && j->is_object() && j->contains("stages")) {
    stages = (*j)["stages"];
  } else if (auto arr = embedded_json(reply, '[', ']'); arr && arr->is_array()) {
    stages = *arr;
  } else {
    return std::nullopt;
  }
  if (!stages.is_array() || stages.size() != 4) return std::nullopt;
  StageRanges out{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = stages[i];
    if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() || !r[1].is_number_unsigned()) {
      return std::nullopt;
    }
    out[i] = {r[0].get<std::size_t>(), r[1].get<std::size_t>()};
  }
  if (!is_partition(out, length)) return std::nullopt;
  return out;
}

// ---- operations ------------------------------------------------------------

StructuralVerdict structural_score(const JudgeRequest& req, JudgeClient& client) {
  if (req.kind != JudgeKind::Structural) throw DataError("structural_score needs a Structural request");
  if (!req.trajectory.thinking) throw MissingThinking("structural judging needs a reasoning segment");
  ChatRequest chat{JudgeKind::Structural, structural_prompt(req), client.options().sampling, &req};
  return parse_structural_verdict(client.ask(chat));
}

ContentVerdict content_score(const JudgeRequest& req, JudgeClient& client) {
  if (req.kind != JudgeKind::Content) throw DataError("content_score needs a Content request");
  ChatRequest chat{JudgeKind::Content, content_prompt(req, client.options().rubric), client.options().sampling, &req};
  return parse_content_verdict(client.ask(chat));
}

StageRanges segment_stages(const JudgeRequest& req, JudgeClient& client, const Tokenizer& tokenizer) {
  if (req.kind != JudgeKind::Segmentation) throw DataError("segment_stages needs a Segmentation request");
  if (!req.trajectory.thinking) throw MissingThinking("segmentation needs a reasoning segment");
  const std::size_t length = tokenizer.split(*req.trajectory.thinking).size();
  const bool fallback = client.options().segmentation_fallback;
  ChatRequest chat{JudgeKind::Segmentation, segmentation_prompt(req, tokenizer), client.options().sampling, &req};
  std::string reply;
  try {
    reply = client.ask(chat);
  } catch (const BackendUnavailable&) {
    if (!fallback) throw;
    spdlog::debug("segmentation backend unavailable for {}; using quartiles", req.instance.id);
    return quartile_ranges(length);
  }
  if (auto ranges = parse_segmentation(reply, length)) return *ranges;
  if (!fallback) throw UnparseableVerdict("segmentation reply is not a valid 4-way partition", reply);
  return quartile_ranges(length);
}

// ---- mock backend ----------------------------------------------------------

const std::array<std::vector<std::string_view>, 4>& mock_stage_cues() {
  static const std::array<std::vector<std::string_view>, 4> kCues = {{
      {"cue", "cues", "notice", "notices", "observe", "observes", "detail", "details"},
      {"feel", "feels", "believe", "believes", "mental", "interpret", "interprets", "emotion"},
      {"goal", "goals", "wants", "intend", "intends", "intention", "aims"},
      {"therefore", "respond", "response", "conclude", "concludes"},
  }};
  return kCues;
}

MockJudge::MockJudge(std::uint64_t seed, MockJudgeOptions options)
    : seed_(seed), options_(options), failures_left_(options.fail_first) {}

std::string MockJudge::id() const { return "mock:" + std::to_string(seed_); }

std::string MockJudge::complete(const ChatRequest& request) {
  calls_.fetch_add(1);
  for (std::size_t left = failures_left_.load(); left > 0;) {
    if (failures_left_.compare_exchange_weak(left, left - 1)) throw BackendUnavailable("mock: injected failure");
  }

  Rng rng(derive_seed({seed_, digest_word(sha256_hex(prompt_text(request.messages)))}));
  const JudgeRequest* ctx = request.context;
  std::vector<std::string_view> tokens;
  if (ctx && ctx->trajectory.thinking) tokens = default_tokenizer().split(*ctx->trajectory.thinking);

  switch (request.purpose) {
    case JudgeKind::Structural: {
      std::array<bool, 6> flags{};
      if (ctx) {
        const auto& cues = mock_stage_cues();
        std::array<std::size_t, 4> first{};
        first.fill(SIZE_MAX);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
          std::string w = lower(tokens[i]);
          w.erase(std::remove_if(w.begin(), w.end(), [](unsigned char c) { return std::ispunct(c); }), w.end());
          for (std::size_t s = 0; s < 4; ++s) {
            if (first[s] == SIZE_MAX && std::find(cues[s].begin(), cues[s].end(), w) != cues[s].end()) first[s] = i;
          }
        }
        bool ordered = true;
        std::size_t last = 0;
        for (std::size_t s = 0; s < 4; ++s) {
          flags[s] = first[s] != SIZE_MAX;
          if (flags[s]) {
            if (first[s] < last) ordered = false;
            last = first[s];
          }
        }
        flags[4] = ordered;
        if (ctx->trajectory.thinking) {
          const auto profile = count_option_mentions(ctx->trajectory, ctx->instance.options);
          flags[5] = profile.per_quartile_counts[0] > 0;
        }
        for (bool& f : flags) {
          if (rng.uniform01() < options_.structural_noise) f = !f;
        }
      } else {
        for (bool& f : flags) f = rng.uniform01() < 0.7;
      }
      json j;
      for (std::size_t s = 0; s < 4; ++s) j[std::string(kStageKeys[s])] = flags[s];
      j["in_order"] = flags[4];
      j["premature_conclusion"] = flags[5];
      return j.dump();
    }
    case JudgeKind::Content: {
      double score = rng.uniform01();
      if (ctx) {
        const bool correct = ctx->trajectory.answer_label && *ctx->trajectory.answer_label == ctx->instance.answer;
        const double lo = correct ? 0.5 : 0.0;
        const double hi = correct ? 0.95 : 0.45;
        score = lo + (hi - lo) * score;
        score += options_.verbosity_bias * std::min(1.0, static_cast<double>(tokens.size()) / 4000.0);
        score = std::clamp(score, 0.0, 1.0);
      }
      ContentTier tier = tier_for_score(score);
      if (rng.uniform01() < options_.rubric_violation_rate) tier = static_cast<ContentTier>(rng.uniform_index(4));
      return json{{"score", score}, {"tier", std::string(to_string(tier))}}.dump();
    }
    case JudgeKind::Segmentation: {
      if (rng.uniform01() < options_.decline_rate) return "DECLINE";
      const std::size_t n = tokens.size();
      std::array<std::size_t, 3> cuts{rng.uniform_index(n + 1), rng.uniform_index(n + 1), rng.uniform_index(n + 1)};
      std::sort(cuts.begin(), cuts.end());
      json stages = json::array({json::array({0, cuts[0]}), json::array({cuts[0], cuts[1]}),
                                 json::array({cuts[1], cuts[2]}), json::array({cuts[2], n})});
      return json{{"stages", stages}}.dump();
    }
  }
  throw BackendUnavailable("mock: unknown request purpose");
}

std::unique_ptr<JudgeBackend> mock_judge(std::uint64_t seed, MockJudgeOptions options) {
  return std::make_unique<MockJudge>(seed, options);
}

}  // namespace sipreward
