#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dclone/image.hpp"
#include "dclone/prompt.hpp"
#include "dclone/store.hpp"

namespace dclone {

struct BackendCapabilities {
  int max_width = 0;
  int max_height = 0;
  // 0 means any number of concurrent generate() calls.
  int max_concurrency = 0;
};

struct ImageMeta {
  std::string backend_id;
  double elapsed_ms = 0.0;
  bool safety_flagged = false;
  std::optional<std::string> sampler;
};

struct ImageResult {
  Image image;
  std::vector<std::uint8_t> png;
  ImageMeta meta;
};

// A text-to-image generator x = g(prompt). Implementations throw Error with
// kBackendRetryable for transient failures and kBackendFatal otherwise.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual BackendCapabilities capabilities() const = 0;
  virtual ImageResult generate(const std::string& prompt, std::uint64_t seed,
                               const GenParams& params) = 0;
};

// Checks params against capabilities, calls the backend and checks the
// decoded image is exactly width x height x 3.
ImageResult generate(Backend& backend, const std::string& prompt, std::uint64_t seed,
                     const GenParams& params);

// Procedural stand-in for a diffusion model. The image is a function of
// SHA-256(prompt) and the seed only: a flat background colored from the
// background token (text after " inside "), a centered shape whose hue,
// saturation, value and kind come from the class token (the first name in the
// prompt) with a smaller concentric core in a second class-derived hue, plus
// seed-driven position/size jitter and background speckles.
ImageResult mock_generate(const std::string& prompt, std::uint64_t seed, const GenParams& params);

struct MockTokens {
  std::string class_token;
  std::string background_token;
};
MockTokens mock_tokens(const std::string& prompt);

struct MockStyle {
  double hue_degrees = 0.0;
  double saturation = 0.0;
  double value = 0.0;
  double accent_hue_degrees = 0.0;
  int shape = 0;  // 0 circle, 1 square, 2 diamond, 3 triangle
  std::array<std::uint8_t, 3> foreground{};
  std::array<std::uint8_t, 3> accent{};  // core color, about a fifth of the shape
  std::array<std::uint8_t, 3> background{};
};
MockStyle mock_style(const std::string& prompt);

class MockBackend final : public Backend {
 public:
  std::string id() const override { return "mock"; }
  BackendCapabilities capabilities() const override { return {4096, 4096, 0}; }
  ImageResult generate(const std::string& prompt, std::uint64_t seed,
                       const GenParams& params) override {
    return mock_generate(prompt, seed, params);
  }
};

struct HttpBackendConfig {
  std::string url;  // e.g. "http://127.0.0.1:7860" or "http://host/api"
  std::string token;
  double timeout_s = 300.0;
  int max_concurrency = 4;
  int max_width = 2048;
  int max_height = 2048;

  // DATASETCLONE_BACKEND_URL, DATASETCLONE_BACKEND_TOKEN and
  // DATASETCLONE_BACKEND_TIMEOUT (seconds).
  static HttpBackendConfig from_env();
};

// Client for a remote diffusion service:
//   POST {url}/generate  {"prompt","seed","num_inference_steps","guidance_scale","width","height"}
//   200 -> {"image_base64": <PNG>, "safety_flagged": bool}
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  std::string id() const override { return "http"; }
  BackendCapabilities capabilities() const override;
  ImageResult generate(const std::string& prompt, std::uint64_t seed,
                       const GenParams& params) override;

 private:
  HttpBackendConfig config_;
};

nlohmann::ordered_json make_generate_request(const std::string& prompt, std::uint64_t seed,
                                             const GenParams& params);
// Parses a 200 response body; throws kBackendFatal when malformed.
ImageResult parse_generate_response(const std::string& body, const std::string& backend_id);

struct RetryPolicy {
  // Delay before each retry; only retryable errors are retried.
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500),
                                                 std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(8000)};
};

struct RunOptions {
  int workers = 1;
  bool resume = false;
  ImageFormat format = ImageFormat::kPng;
  int jpeg_quality = 95;
  RetryPolicy retry;
  // Called after each record finishes (completed or failed); for progress.
  std::function<void(std::size_t done, std::size_t total)> on_progress;
};

struct RunReport {
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
};

// Generates every plan record into the store. With resume, records whose key
// is already in the manifest with status ok are skipped and previously failed
// ones are retried. Per-record backend failures are recorded as failed
// entries; store failures abort the run.
RunReport run_plan(const GenerationPlan& plan, Backend& backend, DatasetStore& store,
                   const RunOptions& options);

ManifestHeader manifest_header_for(const GenerationPlan& plan, const ClassCatalog* catalog);

}  // namespace dclone
