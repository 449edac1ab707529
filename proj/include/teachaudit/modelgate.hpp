#pragma once

// Uniform access to chat-completion models: OpenAI-compatible HTTP
// endpoints, a content-addressed write-once response cache, and a seeded
// biased-oracle mock (endpoint "mock:").

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachaudit/digest.hpp"
#include "teachaudit/promptkit.hpp"

namespace teachaudit::gate {

inline constexpr const char* kApiKeyEnv = "MODELGATE_API_KEY";

/// Behaviour of the mock model. Keys of `offsets` and `refusal` are matched
/// as substrings of the candidate phrase; the longest matching key wins, so
/// "female" beats "male".
struct OracleProfile {
  double base_level = 3.0;
  std::map<std::string, double> offsets;
  std::map<std::string, double> refusal;  // probability of a full refusal
  double jitter = 0.0;                    // sd of per-request Gaussian level noise
  std::uint64_t seed = 0;
  std::string refusal_text = "I cannot make assumptions about a student's abilities based on their background.";
  /// Generation replies: text i is emitted for level i + 1.
  std::vector<std::string> generation_texts;

  static OracleProfile from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

struct ModelConfig {
  std::string model_id = "mock-teacher";
  std::string endpoint = "mock:";
  double temperature = 0.0;
  int max_output_tokens = 512;
  bool safety_filters_off = true;
  std::chrono::milliseconds request_timeout{60000};
  int max_retries = 4;
  std::chrono::milliseconds backoff_base{500};
  double rate_limit_rps = 0.0;  // 0 = unlimited
  unsigned concurrency = 4;
  bool offline = false;  // cache only
  nlohmann::json provider_options = nlohmann::json::object();
  std::optional<OracleProfile> oracle;

  bool is_mock() const { return endpoint.rfind("mock:", 0) == 0; }
  void validate() const;

  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct ModelResponse {
  std::string text;
  std::string finish_reason;
  std::chrono::milliseconds latency{0};
  bool from_cache = false;
  Digest request_hash;
};

/// Canonical JSON over (model_id, system, user, temperature, max_output_tokens).
std::string canonical_request(const ModelConfig& cfg, const prompt::PromptPair& p);
Digest request_hash(const ModelConfig& cfg, const prompt::PromptPair& p);

/// Deterministic biased oracle. With a presentation (ranking) it answers with
/// the letter of level clamp(round(base + offset + noise), 1, L); without one
/// it returns generation text for the same level computed over the text pool.
/// The refusal draw and the noise are seeded by the request hash.
ModelResponse oracle_complete(const prompt::PromptPair& p, const OracleProfile& profile,
                              const prompt::RankingPresentation* presentation, std::string_view candidate,
                              const Digest& hash);

struct CachedEntry {
  nlohmann::json request;
  std::string text;
  std::string finish_reason;
};

/// Directory of `<hex digest>.json` files. Writes are atomic and write-once:
/// a second write of the same key with a different body throws CacheConflict.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<CachedEntry> get(const Digest& key) const;
  bool contains(const Digest& key) const;
  void put(const Digest& key, const std::string& canonical_request, const ModelResponse& response);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const Digest& key) const;

  std::filesystem::path dir_;
  mutable std::array<std::mutex, 16> stripes_;
};

struct HttpReply {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string error;
};

/// Swappable HTTP layer; the default uses cpp-httplib.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post_json(const std::string& url, const std::string& body,
                              const std::map<std::string, std::string>& headers,
                              std::chrono::milliseconds timeout) = 0;
};

std::unique_ptr<Transport> make_http_transport();

/// One request to the gateway. `candidate` and `presentation` are only
/// consulted by the mock.
struct ModelRequest {
  prompt::PromptPair prompt;
  std::string candidate;
  std::optional<prompt::RankingPresentation> presentation;
};

/// Thread-safe: complete() may be called concurrently.
class Gateway {
 public:
  Gateway(ModelConfig cfg, std::optional<std::filesystem::path> cache_dir,
          std::unique_ptr<Transport> transport = nullptr);
  ~Gateway();

  ModelResponse complete(const ModelRequest& request);
  const ModelConfig& config() const { return cfg_; }
  const ResponseCache* cache() const { return cache_ ? &*cache_ : nullptr; }

  /// Request body sent to the chat-completions endpoint.
  static nlohmann::json wire_request(const ModelConfig& cfg, const prompt::PromptPair& p);
  /// "<endpoint>/chat/completions" unless the endpoint already names it.
  static std::string completions_url(const std::string& endpoint);

 private:
  ModelResponse call_live(const prompt::PromptPair& p, const Digest& hash);
  void throttle();

  ModelConfig cfg_;
  std::optional<ResponseCache> cache_;
  std::unique_ptr<Transport> transport_;
  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

/// Convenience: one-shot call without a cache.
ModelResponse complete(const prompt::PromptPair& p, const ModelConfig& cfg);

}  // namespace teachaudit::gate
