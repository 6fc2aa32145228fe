#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "uizoom/error.hpp"
#include "uizoom/geometry.hpp"
#include "uizoom/imaging.hpp"
#include "uizoom/parsing.hpp"

namespace uizoom {

/// How the image sent to the model relates to the full screenshot: the
/// sent raster is `window` (full-image pixels) scaled by (sx, sy).
struct ViewFrame {
    PixelBox window;
    double sx = 1.0;
    double sy = 1.0;
    ImageDims full_dims;
};

struct SampleRequest {
    Screenshot image;  // raster exactly as the model should see it
    ViewFrame view;
    std::string prompt;
    double temperature = 0.9;
    int n = 1;
    bool want_logprobs = true;
    std::optional<std::uint64_t> seed;
};

struct SampleResult {
    std::vector<CompletionRecord> completions;  // ordered by completion index
    std::vector<std::string> errors;            // per-completion failures
};

class BackendError : public Error {
public:
    enum class Kind { transport, protocol, capacity };

    BackendError(Kind kind, const std::string& message)
        : Error(kind == Kind::transport  ? errc::kTransport
                : kind == Kind::capacity ? errc::kCapacity
                                         : errc::kProtocol,
                message),
          kind_(kind) {}

    Kind kind() const noexcept { return kind_; }
    bool retriable() const noexcept { return kind_ != Kind::protocol; }

private:
    Kind kind_;
};

/// The two model touches of the grounding procedure.
class Backend {
public:
    virtual ~Backend() = default;

    /// Draws `req.n` stochastic completions.
    virtual SampleResult sample(const SampleRequest& req) = 0;

    /// One temperature-0 completion.
    virtual CompletionRecord infer_deterministic(const SampleRequest& req) = 0;

    virtual std::string name() const = 0;
};

/// Memo of backend answers shared across sweep grid points, so points that
/// agree on (instance, n, temperature, seed, view) see identical samples.
class SampleCache {
public:
    using Key = std::string;

    std::optional<SampleResult> find(const Key& k) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(k);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(const Key& k, SampleResult v) {
        std::lock_guard lock(mu_);
        entries_.emplace(k, std::move(v));
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    mutable std::mutex mu_;
    std::map<Key, SampleResult> entries_;
};

class CachingBackend final : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<SampleCache> cache, std::string instance_key)
        : inner_(std::move(inner)), cache_(std::move(cache)), instance_(std::move(instance_key)) {}

    SampleResult sample(const SampleRequest& req) override {
        const auto key = make_key(req, false);
        if (auto hit = cache_->find(key)) return *hit;
        SampleResult r = inner_->sample(req);
        cache_->put(key, r);
        return r;
    }

    CompletionRecord infer_deterministic(const SampleRequest& req) override {
        const auto key = make_key(req, true);
        if (auto hit = cache_->find(key)) return hit->completions.front();
        CompletionRecord r = inner_->infer_deterministic(req);
        cache_->put(key, SampleResult{{r}, {}});
        return r;
    }

    std::string name() const override { return inner_->name(); }

private:
    SampleCache::Key make_key(const SampleRequest& req, bool deterministic) const {
        char buf[256];
        std::snprintf(buf, sizeof buf, "|%d|%.17g|%llu|%d|%d|%dx%d|%.17g,%.17g,%.17g,%.17g", req.n,
                      deterministic ? 0.0 : req.temperature, static_cast<unsigned long long>(req.seed.value_or(0)),
                      req.seed.has_value() ? 1 : 0, deterministic ? 1 : 0, req.image.dims().width,
                      req.image.dims().height, req.view.window.x1, req.view.window.y1, req.view.window.x2,
                      req.view.window.y2);
        return instance_ + "\n" + req.prompt + "\n" + (req.want_logprobs ? "lp" : "nolp") + buf;
    }

    std::shared_ptr<Backend> inner_;
    std::shared_ptr<SampleCache> cache_;
    std::string instance_;
};

}  // namespace uizoom
