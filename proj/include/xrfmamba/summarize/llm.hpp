#pragma once

// Chat-style LLM client: one POST per prompt with a JSON body holding the
// model name and a single user message. Requests are capped in flight,
// spaced by a minimum interval, retried on failure and logged (without the
// credential) to an append-only transcript.

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

// <resolv.h>, reached through httplib, defines a `_res` macro that collides
// with Eigen parameter names, so Eigen has to be parsed first.
#include <Eigen/Core>

#include "httplib.h"
#include "json.hpp"
#include "xrfmamba/errors.hpp"
#include "xrfmamba/util/json_strict.hpp"

namespace xrf::summarize {

using json = nlohmann::json;

struct LLMEndpointConfig {
  std::string name = "default";  // label recorded in responses
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key_env = "";  // empty: no Authorization header
  double timeout_s = 60.0;
  std::size_t max_concurrent = 2;
  std::size_t max_retries = 3;  // attempts after the first
  double retry_backoff_s = 1.0;
  double min_interval_s = 0.0;  // spacing between request starts
  double temperature = 0.0;

  void validate() const {
    if (base_url.empty() || model.empty()) throw ConfigError("llm: base_url and model are required");
    if (!(timeout_s > 0.0)) throw ConfigError("llm: timeout_s must be positive");
    if (max_concurrent == 0) throw ConfigError("llm: max_concurrent must be positive");
    if (retry_backoff_s < 0.0 || min_interval_s < 0.0) throw ConfigError("llm: backoff and interval must be >= 0");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base_url.rfind("https://", 0) == 0) throw ConfigError("llm: https endpoints need a build with OpenSSL");
#endif
  }
};

inline LLMEndpointConfig endpoint_from_json(const json& j, const std::string& where) {
  util::reject_unknown_keys(j,
                            {"name", "base_url", "path", "model", "api_key_env", "timeout_s", "max_concurrent",
                             "max_retries", "retry_backoff_s", "min_interval_s", "temperature"},
                            where);
  LLMEndpointConfig c;
  util::read_opt(j, "name", c.name, where);
  util::read_opt(j, "base_url", c.base_url, where);
  util::read_opt(j, "path", c.path, where);
  util::read_opt(j, "model", c.model, where);
  util::read_opt(j, "api_key_env", c.api_key_env, where);
  util::read_opt(j, "timeout_s", c.timeout_s, where);
  util::read_opt(j, "max_concurrent", c.max_concurrent, where);
  util::read_opt(j, "max_retries", c.max_retries, where);
  util::read_opt(j, "retry_backoff_s", c.retry_backoff_s, where);
  util::read_opt(j, "min_interval_s", c.min_interval_s, where);
  util::read_opt(j, "temperature", c.temperature, where);
  c.validate();
  return c;
}

inline json to_json(const LLMEndpointConfig& c) {
  return json{{"name", c.name},
              {"base_url", c.base_url},
              {"path", c.path},
              {"model", c.model},
              {"api_key_env", c.api_key_env},
              {"timeout_s", c.timeout_s},
              {"max_concurrent", c.max_concurrent},
              {"max_retries", c.max_retries},
              {"retry_backoff_s", c.retry_backoff_s},
              {"min_interval_s", c.min_interval_s},
              {"temperature", c.temperature}};
}

/// Every attempt failed. `attempts` counts the requests actually sent.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::size_t attempts) : Error(what), attempts_(attempts) {}
  std::size_t attempts() const { return attempts_; }

 private:
  std::size_t attempts_;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Thread-safe append-only JSON-lines writer.
class JsonlAppender {
 public:
  explicit JsonlAppender(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  }
  void append(const json& j) {
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to " + path_.string());
    out << j.dump() << '\n';
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

class LlmClient {
 public:
  explicit LlmClient(LLMEndpointConfig cfg, std::optional<std::filesystem::path> transcript = std::nullopt)
      : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!cfg_.api_key_env.empty()) {
      const char* v = std::getenv(cfg_.api_key_env.c_str());
      if (v == nullptr || *v == '\0') {
        throw ConfigError("llm: environment variable " + cfg_.api_key_env + " is not set");
      }
      api_key_ = v;
    }
    if (transcript) transcript_.emplace(*transcript);
  }

  const LLMEndpointConfig& config() const { return cfg_; }

  /// Blocks until a slot is free, then sends the prompt with retries.
  std::string query(const std::string& prompt, const std::string& tag = "") {
    Slot slot(*this);
    std::string last_error;
    const std::size_t attempts = cfg_.max_retries + 1;
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
      wait_for_interval();
      const json body{{"model", cfg_.model},
                      {"temperature", cfg_.temperature},
                      {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
      json record{{"timestamp", utc_timestamp()}, {"endpoint", cfg_.name}, {"url", cfg_.base_url + cfg_.path},
                  {"tag", tag},                   {"attempt", attempt},    {"request", body}};
      auto outcome = send(body.dump());
      record["status"] = outcome.status;
      record["response"] = outcome.body;
      if (!outcome.error.empty()) record["error"] = outcome.error;
      if (transcript_) transcript_->append(record);
      if (outcome.error.empty()) return outcome.text;
      last_error = outcome.error;
      if (attempt < attempts && cfg_.retry_backoff_s > 0.0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(cfg_.retry_backoff_s * static_cast<double>(attempt)));
      }
    }
    throw TransportError("llm " + cfg_.name + ": " + last_error + " after " + std::to_string(attempts) + " attempts",
                         attempts);
  }

 private:
  struct Outcome {
    int status = 0;
    std::string body;
    std::string text;
    std::string error;
  };

  // Counting slot over max_concurrent.
  struct Slot {
    explicit Slot(LlmClient& c) : c_(c) {
      std::unique_lock<std::mutex> lock(c_.mu_);
      c_.cv_.wait(lock, [&] { return c_.in_flight_ < c_.cfg_.max_concurrent; });
      ++c_.in_flight_;
    }
    ~Slot() {
      {
        std::lock_guard<std::mutex> lock(c_.mu_);
        --c_.in_flight_;
      }
      c_.cv_.notify_one();
    }
    LlmClient& c_;
  };

  void wait_for_interval() {
    if (cfg_.min_interval_s <= 0.0) return;
    std::chrono::steady_clock::time_point at;
    {
      std::lock_guard<std::mutex> lock(interval_mu_);
      const auto now = std::chrono::steady_clock::now();
      at = std::max(now, next_start_);
      next_start_ = at + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                             std::chrono::duration<double>(cfg_.min_interval_s));
    }
    std::this_thread::sleep_until(at);
  }

  Outcome send(const std::string& body) const {
    Outcome o;
    httplib::Client cli(cfg_.base_url);
    const auto to = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(cfg_.timeout_s));
    cli.set_connection_timeout(to);
    cli.set_read_timeout(to);
    cli.set_write_timeout(to);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = cli.Post(cfg_.path, headers, body, "application/json");
    if (!res) {
      o.error = "transport failure: " + httplib::to_string(res.error());
      return o;
    }
    o.status = res->status;
    o.body = res->body;
    if (res->status < 200 || res->status >= 300) {
      o.error = "HTTP " + std::to_string(res->status);
      return o;
    }
    try {
      const json j = json::parse(res->body);
      o.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      o.error = std::string("malformed response: ") + e.what();
      return o;
    }
    if (o.text.empty()) o.error = "empty assistant message";
    return o;
  }

  LLMEndpointConfig cfg_;
  std::string api_key_;
  std::optional<JsonlAppender> transcript_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::mutex interval_mu_;
  std::chrono::steady_clock::time_point next_start_{};
};

/// Runs `jobs` with up to max_concurrent worker threads. The first exception
/// thrown by a job is rethrown after all workers stop.
inline void run_bounded(std::size_t workers, std::size_t n_jobs, const std::function<void(std::size_t)>& job) {
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (failure || next >= n_jobs) return;
        i = next++;
      }
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < std::max<std::size_t>(1, std::min(workers, n_jobs)); ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace xrf::summarize
