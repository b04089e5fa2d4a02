#pragma once

// HTTP clients for remote scoring and captioning models.
//
//   POST /embed_image   body: PNG              -> {"v": [f32, ...]}
//   POST /embed_text    body: {"t": string}    -> {"v": [f32, ...]}
//   POST /detect_text   body: PNG              -> {"boxes": [{"x","y","w","h"}, ...]}
//   POST /caption       body: PNG (one frame) or {"frames": [base64 PNG, ...]}
//                                              -> {"text": string}
//   POST /summarize     body: {"captions": [a, b], "prompt": string}
//                                              -> {"text": string}
//
// Each call is attempted up to `attempts` times; a failed attempt (transport
// error or non-2xx status) waits backoff, 2*backoff, ... before the next.

#include <chrono>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vidcurate/error.hpp"
#include "vidcurate/frame_scoring.hpp"
#include "vidcurate/png.hpp"

namespace vidcurate {

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};
  std::chrono::seconds timeout{10};
};

inline std::string base64_encode(const std::string& in) {
  static constexpr char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t n = (static_cast<unsigned char>(in[i]) << 16) | (static_cast<unsigned char>(in[i + 1]) << 8) |
                            static_cast<unsigned char>(in[i + 2]);
    out += {tbl[(n >> 18) & 63], tbl[(n >> 12) & 63], tbl[(n >> 6) & 63], tbl[n & 63]};
  }
  if (i + 1 == in.size()) {
    const std::uint32_t n = static_cast<unsigned char>(in[i]) << 16;
    out += {tbl[(n >> 18) & 63], tbl[(n >> 12) & 63], '=', '='};
  } else if (i + 2 == in.size()) {
    const std::uint32_t n = (static_cast<unsigned char>(in[i]) << 16) | (static_cast<unsigned char>(in[i + 1]) << 8);
    out += {tbl[(n >> 18) & 63], tbl[(n >> 12) & 63], tbl[(n >> 6) & 63], '='};
  }
  return out;
}

// Thin JSON-over-HTTP caller with retries. One httplib client per call keeps
// it safe to share across worker threads.
class HttpCaller {
 public:
  explicit HttpCaller(std::string base_url, RetryPolicy policy = {})
      : base_url_(std::move(base_url)), policy_(policy) {}

  nlohmann::json post(const std::string& path, const std::string& body, const std::string& content_type) const {
    std::string last_error = "no attempt made";
    auto wait = policy_.backoff;
    for (int attempt = 0; attempt < std::max(1, policy_.attempts); ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(wait);
        wait *= 2;
      }
      httplib::Client cli(base_url_);
      cli.set_connection_timeout(policy_.timeout);
      cli.set_read_timeout(policy_.timeout);
      cli.set_write_timeout(policy_.timeout);
      auto res = cli.Post(path, body, content_type);
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("bad response body: ") + e.what();
      }
    }
    throw ProviderError(base_url_ + path + ": " + last_error);
  }

  const std::string& base_url() const noexcept { return base_url_; }

 private:
  std::string base_url_;
  RetryPolicy policy_;
};

namespace detail {

inline Embedding parse_vector(const nlohmann::json& j) {
  if (!j.contains("v") || !j["v"].is_array()) throw ProviderError("response lacks vector 'v'");
  Embedding e;
  for (const auto& x : j["v"]) {
    if (!x.is_number()) throw ProviderError("non-numeric embedding entry");
    e.push_back(x.get<float>());
  }
  if (e.empty()) throw ProviderError("empty embedding");
  const double n = l2_norm(e);
  if (std::fabs(n - 1.0) > 1e-5) {
    if (n == 0) throw ProviderError("zero embedding");
    normalize_in_place(e);
  }
  return e;
}

inline std::string parse_text(const nlohmann::json& j) {
  if (!j.contains("text") || !j["text"].is_string()) throw ProviderError("response lacks 'text'");
  return j["text"].get<std::string>();
}

}  // namespace detail

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string base_url, std::size_t dim, RetryPolicy policy = {})
      : http_(std::move(base_url), policy), dim_(dim) {}

  std::size_t dim() const override { return dim_; }

  Embedding embed_image(const RgbImage& img) override {
    return checked(detail::parse_vector(http_.post("/embed_image", encode_png(img), "image/png")));
  }
  Embedding embed_text(const std::string& text) override {
    return checked(detail::parse_vector(http_.post("/embed_text", nlohmann::json{{"t", text}}.dump(), "application/json")));
  }

 private:
  Embedding checked(Embedding e) const {
    if (e.size() != dim_) throw ProviderError("embedding dimension " + std::to_string(e.size()) + " != " + std::to_string(dim_));
    return e;
  }

  HttpCaller http_;
  std::size_t dim_;
};

class HttpTextDetector final : public TextDetector {
 public:
  explicit HttpTextDetector(std::string base_url, RetryPolicy policy = {}) : http_(std::move(base_url), policy) {}

  std::vector<TextBox> detect(const RgbImage& img) override {
    const auto j = http_.post("/detect_text", encode_png(img), "image/png");
    if (!j.contains("boxes") || !j["boxes"].is_array()) throw ProviderError("response lacks 'boxes'");
    std::vector<TextBox> out;
    try {
      for (const auto& b : j["boxes"])
        out.push_back({b.at("x").get<std::int32_t>(), b.at("y").get<std::int32_t>(), b.at("w").get<std::int32_t>(),
                       b.at("h").get<std::int32_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("bad text box: ") + e.what());
    }
    return out;
  }

 private:
  HttpCaller http_;
};

}  // namespace vidcurate
