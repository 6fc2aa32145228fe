#pragma once

// Client for OpenAI-compatible chat-completions servers (vLLM and friends).
// Requires cpp-httplib; define CPPHTTPLIB_OPENSSL_SUPPORT for https endpoints.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <memory>
#include <mutex>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "uizoom/backend.hpp"

namespace uizoom {

struct OpenAIConfig {
    std::string endpoint = "http://localhost:8000/v1";
    std::string model;
    std::string api_key;  // sent as a bearer token when non-empty
    double timeout_s = 120.0;
    int max_concurrency = 8;
    int retry_budget = 3;          // retries after the first attempt
    double backoff_base_ms = 500.0;
    double backoff_max_ms = 16000.0;
    int max_tokens = 128;
    bool split_n = false;          // n single-completion requests instead of one n-way request

    void validate() const {
        if (endpoint.find("://") == std::string::npos) throw Error(errc::kConfig, "endpoint must be an http(s) URL");
        if (max_concurrency < 1 || max_concurrency > 1024) throw Error(errc::kConfig, "max concurrency out of range");
        if (retry_budget < 0) throw Error(errc::kConfig, "retry budget must be >= 0");
        if (!(timeout_s > 0.0)) throw Error(errc::kConfig, "timeout must be positive");
    }
};

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // full request path
};

inline SplitUrl split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    const auto path_start = endpoint.find('/', scheme_end + 3);
    SplitUrl u;
    u.origin = endpoint.substr(0, path_start);
    std::string base = path_start == std::string::npos ? "" : endpoint.substr(path_start);
    while (!base.empty() && base.back() == '/') base.pop_back();
    const std::string suffix = "/chat/completions";
    const bool complete = base.size() >= suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0;
    u.path = complete ? base : base + suffix;
    return u;
}

}  // namespace detail

class OpenAIBackend final : public Backend {
public:
    explicit OpenAIBackend(OpenAIConfig cfg)
        : cfg_(std::move(cfg)),
          url_(detail::split_endpoint(cfg_.endpoint)),
          slots_(std::make_shared<std::counting_semaphore<1024>>(cfg_.max_concurrency)) {
        cfg_.validate();
    }

    const OpenAIConfig& config() const { return cfg_; }

    /// Chat-completions body for `req`; exposed for inspection and tests.
    nlohmann::json request_body(const SampleRequest& req, int n, const std::string& image_b64) const {
        nlohmann::json content = nlohmann::json::array();
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + image_b64}}}});
        content.push_back({{"type", "text"}, {"text", req.prompt}});
        nlohmann::json body = {
            {"model", cfg_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
            {"temperature", req.temperature},
            {"n", n},
            {"max_tokens", cfg_.max_tokens},
        };
        if (req.want_logprobs) body["logprobs"] = true;
        if (req.seed) body["seed"] = *req.seed;
        return body;
    }

    /// Completions from a chat-completions response, ordered by choice index.
    static std::vector<CompletionRecord> parse_response(const std::string& payload) {
        const auto doc = nlohmann::json::parse(payload, nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array())
            throw BackendError(BackendError::Kind::protocol, "response has no choices array");
        std::vector<std::pair<int, CompletionRecord>> indexed;
        int position = 0;
        for (const auto& choice : doc["choices"]) {
            CompletionRecord rec;
            const auto& msg = choice.value("message", nlohmann::json::object());
            if (!msg.contains("content") || !msg["content"].is_string())
                throw BackendError(BackendError::Kind::protocol, "choice without string content");
            rec.text = msg["content"].get<std::string>();
            if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
                const auto& lp = choice["logprobs"];
                if (lp.contains("content") && lp["content"].is_array()) {
                    for (const auto& tok : lp["content"])
                        if (tok.contains("logprob") && tok["logprob"].is_number())
                            rec.token_logprobs.push_back(tok["logprob"].get<double>());
                }
            }
            const int idx = choice.contains("index") && choice["index"].is_number_integer() ? choice["index"].get<int>()
                                                                                            : position;
            indexed.emplace_back(idx, std::move(rec));
            ++position;
        }
        std::stable_sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<CompletionRecord> out;
        for (auto& [i, rec] : indexed) out.push_back(std::move(rec));
        return out;
    }

    SampleResult sample(const SampleRequest& req) override {
        const std::string b64 = encode(req.image);
        SampleResult out;
        if (!cfg_.split_n) {
            out.completions = post_with_retry(request_body(req, req.n, b64));
            return out;
        }
        std::vector<std::future<std::vector<CompletionRecord>>> parts;
        for (int k = 0; k < req.n; ++k) {
            SampleRequest one = req;
            if (one.seed) one.seed = *one.seed + static_cast<std::uint64_t>(k);
            parts.push_back(std::async(std::launch::async, [this, body = request_body(one, 1, b64)] {
                return post_with_retry(body);
            }));
        }
        std::string last_error;
        for (int k = 0; k < req.n; ++k) {
            try {
                for (auto& rec : parts[static_cast<std::size_t>(k)].get()) out.completions.push_back(std::move(rec));
            } catch (const Error& e) {
                last_error = e.code();
                out.errors.push_back("completion " + std::to_string(k) + ": " + e.what());
            }
        }
        if (out.completions.empty() && !out.errors.empty())
            throw BackendError(last_error == errc::kProtocol    ? BackendError::Kind::protocol
                               : last_error == errc::kCapacity ? BackendError::Kind::capacity
                                                               : BackendError::Kind::transport,
                               out.errors.back());
        return out;
    }

    CompletionRecord infer_deterministic(const SampleRequest& req) override {
        SampleRequest one = req;
        one.temperature = 0.0;
        auto recs = post_with_retry(request_body(one, 1, encode(req.image)));
        if (recs.empty()) throw BackendError(BackendError::Kind::protocol, "response carried no completion");
        return recs.front();
    }

    std::string name() const override { return "openai"; }

private:
    static std::string encode(const Screenshot& img) {
        const auto png = encode_png(img);
        return httplib::detail::base64_encode(std::string(png.begin(), png.end()));
    }

    std::vector<CompletionRecord> post_once(const std::string& body) const {
        slots_->acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{*slots_};

        httplib::Client cli(url_.origin);
        const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
        cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        httplib::Headers headers;
        if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

        auto res = cli.Post(url_.path, headers, body, "application/json");
        if (!res) throw BackendError(BackendError::Kind::transport, "request failed: " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status == 503)
            throw BackendError(BackendError::Kind::capacity, "server busy (HTTP " + std::to_string(res->status) + ")");
        if (res->status >= 500)
            throw BackendError(BackendError::Kind::transport, "server error (HTTP " + std::to_string(res->status) + ")");
        if (res->status != 200)
            throw BackendError(BackendError::Kind::protocol,
                               "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
        return parse_response(res->body);
    }

    // Exponential backoff with full jitter; protocol errors are final.
    std::vector<CompletionRecord> post_with_retry(const nlohmann::json& body) const {
        const std::string payload = body.dump();
        for (int attempt = 0;; ++attempt) {
            try {
                return post_once(payload);
            } catch (const BackendError& e) {
                if (!e.retriable() || attempt >= cfg_.retry_budget) throw;
                const double cap = std::min(cfg_.backoff_max_ms, cfg_.backoff_base_ms * std::pow(2.0, attempt));
                double wait_ms = 0.0;
                {
                    std::lock_guard lock(jitter_mu_);
                    wait_ms = std::uniform_real_distribution<double>(0.0, cap)(jitter_);
                }
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait_ms));
            }
        }
    }

    OpenAIConfig cfg_;
    detail::SplitUrl url_;
    std::shared_ptr<std::counting_semaphore<1024>> slots_;
    mutable std::mutex jitter_mu_;
    mutable std::mt19937_64 jitter_{std::random_device{}()};
};

}  // namespace uizoom
