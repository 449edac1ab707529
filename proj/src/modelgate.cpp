#include "teachaudit/modelgate.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "teachaudit/errors.hpp"
#include "teachaudit/rng.hpp"

namespace teachaudit::gate {

using nlohmann::json;
using std::chrono::milliseconds;

namespace {

// Longest key of `table` that occurs in `haystack`.
template <typename Map>
const typename Map::mapped_type* longest_match(const Map& table, std::string_view haystack) {
  const typename Map::mapped_type* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& [key, value] : table) {
    if (!key.empty() && key.size() > best_len && haystack.find(key) != std::string_view::npos) {
      best = &value;
      best_len = key.size();
    }
  }
  return best;
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

class HttplibTransport final : public Transport {
 public:
  HttpReply post_json(const std::string& url, const std::string& body,
                      const std::map<std::string, std::string>& headers, milliseconds timeout) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, {}, "endpoint URL lacks a scheme: " + url};
    const auto path_begin = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }
};

}  // namespace

// --------------------------------------------------------------- configuration

OracleProfile OracleProfile::from_json(const json& j) {
  OracleProfile p;
  p.base_level = j.value("base_level", p.base_level);
  if (j.contains("offsets")) p.offsets = j.at("offsets").get<std::map<std::string, double>>();
  if (j.contains("refusal")) p.refusal = j.at("refusal").get<std::map<std::string, double>>();
  p.jitter = j.value("jitter", p.jitter);
  p.seed = j.value("seed", p.seed);
  p.refusal_text = j.value("refusal_text", p.refusal_text);
  if (j.contains("generation_texts")) p.generation_texts = j.at("generation_texts").get<std::vector<std::string>>();
  p.validate();
  return p;
}

json OracleProfile::to_json() const {
  return {{"base_level", base_level}, {"offsets", offsets},   {"refusal", refusal},
          {"jitter", jitter},         {"seed", seed},         {"refusal_text", refusal_text},
          {"generation_texts", generation_texts}};
}

void OracleProfile::validate() const {
  if (!std::isfinite(base_level)) throw PreconditionError("oracle base_level must be finite");
  for (const auto& [k, v] : offsets) {
    if (!std::isfinite(v)) throw PreconditionError("oracle offset for '" + k + "' must be finite");
  }
  for (const auto& [k, v] : refusal) {
    if (!(v >= 0 && v <= 1)) throw PreconditionError("oracle refusal probability for '" + k + "' outside [0,1]");
  }
  if (!(jitter >= 0) || !std::isfinite(jitter)) throw PreconditionError("oracle jitter must be >= 0");
}

void ModelConfig::validate() const {
  if (model_id.empty()) throw PreconditionError("model_id must be set");
  if (endpoint.empty()) throw PreconditionError("endpoint must be set");
  if (!(temperature >= 0)) throw PreconditionError("temperature must be >= 0");
  if (max_output_tokens < 1) throw PreconditionError("max_output_tokens must be >= 1");
  if (max_retries < 0) throw PreconditionError("max_retries must be >= 0");
  if (rate_limit_rps < 0) throw PreconditionError("rate_limit_rps must be >= 0");
  if (oracle) oracle->validate();
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.model_id = j.value("model_id", c.model_id);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
    c.safety_filters_off = j.value("safety_filters_off", c.safety_filters_off);
    c.request_timeout = milliseconds(j.value("request_timeout_ms", c.request_timeout.count()));
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_base = milliseconds(j.value("backoff_base_ms", c.backoff_base.count()));
    c.rate_limit_rps = j.value("rate_limit_rps", c.rate_limit_rps);
    c.concurrency = j.value("concurrency", c.concurrency);
    if (j.contains("provider_options")) c.provider_options = j.at("provider_options");
    if (j.contains("oracle") && !j.at("oracle").is_null()) c.oracle = OracleProfile::from_json(j.at("oracle"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model config " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json ModelConfig::to_json() const {
  json j = {{"model_id", model_id},
            {"endpoint", endpoint},
            {"temperature", temperature},
            {"max_output_tokens", max_output_tokens},
            {"safety_filters_off", safety_filters_off},
            {"request_timeout_ms", request_timeout.count()},
            {"max_retries", max_retries},
            {"backoff_base_ms", backoff_base.count()},
            {"rate_limit_rps", rate_limit_rps},
            {"concurrency", concurrency},
            {"provider_options", provider_options}};
  j["oracle"] = oracle ? oracle->to_json() : json(nullptr);
  return j;
}

// -------------------------------------------------------------------- hashing

std::string canonical_request(const ModelConfig& cfg, const prompt::PromptPair& p) {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  json j = {{"model_id", cfg.model_id},
            {"system", p.system},
            {"user", p.user},
            {"temperature", cfg.temperature},
            {"max_output_tokens", cfg.max_output_tokens}};
  return j.dump();
}

Digest request_hash(const ModelConfig& cfg, const prompt::PromptPair& p) {
  return sha256(canonical_request(cfg, p));
}

// --------------------------------------------------------------------- oracle

ModelResponse oracle_complete(const prompt::PromptPair& p, const OracleProfile& profile,
                              const prompt::RankingPresentation* presentation, std::string_view candidate,
                              const Digest& hash) {
  const std::string_view who = candidate.empty() ? std::string_view(p.user) : candidate;
  const double* offset = longest_match(profile.offsets, who);
  const double* refusal = longest_match(profile.refusal, who);

  Rng rng(derive_seed(profile.seed, hash.prefix64()));
  const double refusal_draw = rng.uniform01();
  const double noise = profile.jitter > 0 ? profile.jitter * rng.normal() : 0.0;

  ModelResponse r;
  r.finish_reason = "stop";
  r.request_hash = hash;
  if (refusal && refusal_draw < *refusal) {
    r.text = profile.refusal_text;
    return r;
  }
  const double target = profile.base_level + (offset ? *offset : 0.0) + noise;
  auto level_in = [&](int count) {
    return static_cast<int>(std::clamp<long>(std::lround(target), 1L, static_cast<long>(count)));
  };
  if (presentation) {
    r.text = std::string(1, presentation->letter_for_level(level_in(presentation->level_count())));
  } else if (!profile.generation_texts.empty()) {
    const int count = static_cast<int>(profile.generation_texts.size());
    r.text = profile.generation_texts[static_cast<std::size_t>(level_in(count) - 1)];
  } else {
    r.text = "Here is an explanation of the topic. It covers the main idea in plain words.";
  }
  return r;
}

// ---------------------------------------------------------------------- cache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::filesystem::path ResponseCache::path_for(const Digest& key) const { return dir_ / (key.hex() + ".json"); }

std::optional<CachedEntry> ResponseCache::get(const Digest& key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    const auto j = json::parse(in);
    return CachedEntry{j.at("request"), j.at("response").at("text").get<std::string>(),
                       j.at("response").at("finish_reason").get<std::string>()};
  } catch (const json::exception& e) {
    throw ParseError("corrupt cache entry " + path_for(key).string() + ": " + e.what());
  }
}

bool ResponseCache::contains(const Digest& key) const { return std::filesystem::exists(path_for(key)); }

void ResponseCache::put(const Digest& key, const std::string& canonical, const ModelResponse& response) {
  std::lock_guard lock(stripes_[key.bytes[0] % stripes_.size()]);
  if (auto existing = get(key)) {
    if (existing->text != response.text || existing->finish_reason != response.finish_reason) {
      throw CacheConflict("cache entry " + key.hex() + " already holds a different response");
    }
    return;
  }
  json body = {{"request", json::parse(canonical)},
               {"response", {{"text", response.text}, {"finish_reason", response.finish_reason}}}};
  const auto final_path = path_for(key);
  auto tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache entry " + tmp.string());
    out << body.dump(2) << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
  if (ec) throw IoError("cannot commit cache entry " + final_path.string() + ": " + ec.message());
}

// -------------------------------------------------------------------- gateway

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

Gateway::Gateway(ModelConfig cfg, std::optional<std::filesystem::path> cache_dir,
                 std::unique_ptr<Transport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  cfg_.validate();
  if (cache_dir) cache_.emplace(*cache_dir);
  if (!transport_) transport_ = make_http_transport();
}

Gateway::~Gateway() = default;

json Gateway::wire_request(const ModelConfig& cfg, const prompt::PromptPair& p) {
  json j = {{"model", cfg.model_id},
            {"messages",
             json::array({{{"role", "system"}, {"content", p.system}}, {{"role", "user"}, {"content", p.user}}})},
            {"temperature", cfg.temperature},
            {"max_tokens", cfg.max_output_tokens}};
  if (cfg.provider_options.is_object()) {
    for (const auto& [k, v] : cfg.provider_options.items()) j[k] = v;
  }
  return j;
}

std::string Gateway::completions_url(const std::string& endpoint) {
  static constexpr std::string_view kSuffix = "/chat/completions";
  std::string base = endpoint;
  while (!base.empty() && base.back() == '/') base.pop_back();
  if (base.size() >= kSuffix.size() && base.compare(base.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
    return base;
  }
  return base + std::string(kSuffix);
}

void Gateway::throttle() {
  if (cfg_.rate_limit_rps <= 0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / cfg_.rate_limit_rps));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(rate_mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

ModelResponse Gateway::call_live(const prompt::PromptPair& p, const Digest& hash) {
  const char* key = std::getenv(kApiKeyEnv);
  if (key == nullptr || *key == '\0') throw AuthError(std::string(kApiKeyEnv) + " is not set");
  const auto url = completions_url(cfg_.endpoint);
  const auto body = wire_request(cfg_, p).dump();
  const std::map<std::string, std::string> headers = {{"Authorization", std::string("Bearer ") + key}};

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff_base * (1 << std::min(attempt - 1, 10)));
    throttle();
    const auto started = std::chrono::steady_clock::now();
    const auto reply = transport_->post_json(url, body, headers, cfg_.request_timeout);
    const auto latency = std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - started);

    if (reply.status == 200) {
      try {
        const auto j = json::parse(reply.body);
        const auto& choice = j.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        if (!content.is_string()) throw EndpointError("response message has no text content");
        ModelResponse r;
        r.text = content.get<std::string>();
        r.finish_reason = choice.value("finish_reason", std::string());
        r.latency = latency;
        r.request_hash = hash;
        return r;
      } catch (const json::exception& e) {
        throw EndpointError(std::string("malformed chat-completions response: ") + e.what());
      }
    }
    if (reply.status == 401 || reply.status == 403) {
      throw AuthError("endpoint rejected credential (HTTP " + std::to_string(reply.status) + ")");
    }
    if (!retryable(reply.status)) {
      throw EndpointError("HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 300));
    }
    last_error = reply.status == 0 ? reply.error : "HTTP " + std::to_string(reply.status);
  }
  throw NetworkError("giving up after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

ModelResponse Gateway::complete(const ModelRequest& request) {
  const auto hash = request_hash(cfg_, request.prompt);
  if (cache_) {
    if (auto hit = cache_->get(hash)) {
      ModelResponse r;
      r.text = std::move(hit->text);
      r.finish_reason = std::move(hit->finish_reason);
      r.from_cache = true;
      r.request_hash = hash;
      return r;
    }
  }
  if (cfg_.offline) throw NetworkError("offline mode and no cached response for " + hash.hex());

  ModelResponse r;
  if (cfg_.is_mock()) {
    static const OracleProfile kNeutral;
    const auto& profile = cfg_.oracle ? *cfg_.oracle : kNeutral;
    r = oracle_complete(request.prompt, profile, request.presentation ? &*request.presentation : nullptr,
                        request.candidate, hash);
  } else {
    r = call_live(request.prompt, hash);
  }
  r.request_hash = hash;
  if (cache_) cache_->put(hash, canonical_request(cfg_, request.prompt), r);
  return r;
}

ModelResponse complete(const prompt::PromptPair& p, const ModelConfig& cfg) {
  Gateway gateway(cfg, std::nullopt);
  return gateway.complete({p, {}, std::nullopt});
}

}  // namespace teachaudit::gate
