#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>

#include "dclone/error.hpp"
#include "dclone/generation.hpp"
#include "dclone/hash.hpp"

namespace dclone {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string base_path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorCode::kInvalidArgument, "backend URL needs a scheme: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
  HttpBackendConfig c;
  if (const char* url = std::getenv("DATASETCLONE_BACKEND_URL")) c.url = url;
  if (const char* token = std::getenv("DATASETCLONE_BACKEND_TOKEN")) c.token = token;
  if (const char* timeout = std::getenv("DATASETCLONE_BACKEND_TIMEOUT")) c.timeout_s = std::atof(timeout);
  return c;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) {
    fail(ErrorCode::kInvalidArgument, "HTTP backend needs a URL (DATASETCLONE_BACKEND_URL)");
  }
  parse_url(config_.url);
}

HttpBackend::~HttpBackend() = default;

BackendCapabilities HttpBackend::capabilities() const {
  return {config_.max_width, config_.max_height, config_.max_concurrency};
}

nlohmann::ordered_json make_generate_request(const std::string& prompt, std::uint64_t seed,
                                             const GenParams& params) {
  nlohmann::ordered_json j;
  j["prompt"] = prompt;
  j["seed"] = seed;
  j["num_inference_steps"] = params.steps;
  j["guidance_scale"] = params.guidance;
  j["width"] = params.width;
  j["height"] = params.height;
  return j;
}

ImageResult parse_generate_response(const std::string& body, const std::string& backend_id) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBackendFatal, std::string("response is not JSON: ") + ex.what());
  }
  if (!j.is_object() || !j.contains("image_base64") || !j["image_base64"].is_string()) {
    fail(ErrorCode::kBackendFatal, "response lacks string field image_base64");
  }
  ImageResult out;
  try {
    const auto bytes = base64_decode(j["image_base64"].get<std::string>());
    out.image = decode_image(bytes);
    // Stored bytes are always a canonical 8-bit RGB PNG.
    out.png = encode_png(out.image);
  } catch (const Error& ex) {
    fail(ErrorCode::kBackendFatal, std::string("bad image payload: ") + ex.what());
  }
  out.meta.backend_id = backend_id;
  if (j.contains("safety_flagged")) {
    if (!j["safety_flagged"].is_boolean()) fail(ErrorCode::kBackendFatal, "safety_flagged must be bool");
    out.meta.safety_flagged = j["safety_flagged"].get<bool>();
  }
  if (j.contains("sampler") && j["sampler"].is_string()) out.meta.sampler = j["sampler"].get<std::string>();
  return out;
}

ImageResult HttpBackend::generate(const std::string& prompt, std::uint64_t seed,
                                  const GenParams& params) {
  const auto start = std::chrono::steady_clock::now();
  const ParsedUrl url = parse_url(config_.url);
  httplib::Client client(url.scheme_host_port);
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((timeout.count() - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  const std::string body = make_generate_request(prompt, seed, params).dump();
  auto res = client.Post(url.base_path + "/generate", headers, body, "application/json");
  if (!res) {
    fail(ErrorCode::kBackendRetryable, "HTTP request failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    fail(ErrorCode::kBackendRetryable, "HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    fail(ErrorCode::kBackendFatal, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  ImageResult out = parse_generate_response(res->body, id());
  out.meta.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace dclone
