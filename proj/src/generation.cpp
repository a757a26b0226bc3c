#include "dclone/generation.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <variant>

#include "dclone/error.hpp"
#include "dclone/hash.hpp"

namespace dclone {

ImageResult generate(Backend& backend, const std::string& prompt, std::uint64_t seed,
                     const GenParams& params) {
  validate(params);
  const auto caps = backend.capabilities();
  if (params.width > caps.max_width || params.height > caps.max_height) {
    fail(ErrorCode::kInvalidArgument,
         "requested " + std::to_string(params.width) + "x" + std::to_string(params.height) +
             " exceeds backend '" + backend.id() + "' limit " + std::to_string(caps.max_width) +
             "x" + std::to_string(caps.max_height));
  }
  ImageResult result = backend.generate(prompt, seed, params);
  if (result.image.width != params.width || result.image.height != params.height ||
      result.image.rgb.size() != static_cast<std::size_t>(params.width) * params.height * 3) {
    fail(ErrorCode::kBackendFatal,
         "backend returned " + std::to_string(result.image.width) + "x" +
             std::to_string(result.image.height) + " image, expected " +
             std::to_string(params.width) + "x" + std::to_string(params.height));
  }
  return result;
}

ManifestHeader manifest_header_for(const GenerationPlan& plan, const ClassCatalog* catalog) {
  ManifestHeader h;
  h.plan_seed = plan.plan_seed;
  h.catalog_name = plan.catalog_name;
  if (catalog != nullptr) {
    for (const auto& e : catalog->entries()) {
      if (static_cast<std::size_t>(e.class_index) >= h.classes.size()) h.classes.resize(e.class_index + 1);
      h.classes[static_cast<std::size_t>(e.class_index)] = e.wnid;
    }
  } else {
    for (const auto& r : plan.records) {
      if (static_cast<std::size_t>(r.class_index) >= h.classes.size()) h.classes.resize(r.class_index + 1);
      h.classes[static_cast<std::size_t>(r.class_index)] = r.wnid;
    }
  }
  return h;
}

namespace {

ManifestEntry entry_for(const PromptRecord& r, const GenParams& p, const std::string& backend_id) {
  ManifestEntry e;
  e.wnid = r.wnid;
  e.class_index = r.class_index;
  e.templ = std::string(template_id(r.templ));
  e.background = r.background;
  e.prompt = r.prompt;
  e.seed = r.seed;
  e.index_in_class = r.index_in_class;
  e.steps = p.steps;
  e.guidance = p.guidance;
  e.width = p.width;
  e.height = p.height;
  e.backend_id = backend_id;
  return e;
}

// Returns the image or the reason it could not be produced.
std::variant<ImageResult, std::string> generate_with_retries(Backend& backend,
                                                             const PromptRecord& r,
                                                             const GenParams& params,
                                                             const RetryPolicy& retry) {
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return generate(backend, r.prompt, r.seed, params);
    } catch (const Error& ex) {
      if (ex.code() == ErrorCode::kBackendRetryable && attempt < retry.backoff.size()) {
        spdlog::debug("retrying {}#{} after: {}", r.wnid, r.index_in_class, ex.what());
        std::this_thread::sleep_for(retry.backoff[attempt]);
        continue;
      }
      return std::string(error_code_name(ex.code())) + ": " + ex.what();
    } catch (const std::exception& ex) {
      return std::string("E_BACKEND_FATAL: ") + ex.what();
    }
  }
}

}  // namespace

RunReport run_plan(const GenerationPlan& plan, Backend& backend, DatasetStore& store,
                   const RunOptions& options) {
  if (!options.resume && store.entry_count() > 0) {
    fail(ErrorCode::kRefuseOverwrite, "store already has entries; pass resume to continue");
  }
  validate(plan.gen_params);

  RunReport report;
  std::vector<const PromptRecord*> pending;
  std::vector<bool> retrying;
  for (const auto& r : plan.records) {
    const auto status = store.status_of(key_of(r));
    if (status == EntryStatus::kOk) {
      ++report.skipped;
      continue;
    }
    pending.push_back(&r);
    retrying.push_back(status.has_value());
  }

  int workers = std::max(1, options.workers);
  if (const int cap = backend.capabilities().max_concurrency; cap > 0) workers = std::min(workers, cap);
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                   std::max<std::size_t>(1, pending.size())));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex mu;
  std::exception_ptr fatal;
  std::size_t done = 0;

  auto work = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      const PromptRecord& r = *pending[i];
      try {
        ManifestEntry entry = entry_for(r, plan.gen_params, backend.id());
        auto outcome = generate_with_retries(backend, r, plan.gen_params, options.retry);
        if (auto* result = std::get_if<ImageResult>(&outcome)) {
          const auto bytes = options.format == ImageFormat::kPng
                                 ? std::move(result->png)
                                 : encode_jpeg(result->image, options.jpeg_quality);
          const auto rel = DatasetStore::relative_image_path(r, options.format);
          store.write_image(rel, bytes);
          entry.file_path = rel.generic_string();
          entry.sha256 = sha256_hex(bytes);
          entry.status = EntryStatus::kOk;
          entry.safety_flagged = result->meta.safety_flagged;
        } else {
          entry.file_path = std::get<std::string>(outcome);
          entry.status = EntryStatus::kFailed;
          spdlog::warn("generation failed for {}#{}: {}", r.wnid, r.index_in_class, entry.file_path);
        }
        store.append(entry, retrying[i]);
        std::lock_guard lock(mu);
        if (entry.status == EntryStatus::kOk) {
          ++report.completed;
        } else {
          ++report.failed;
        }
        ++done;
        if (options.on_progress) options.on_progress(done, pending.size());
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        abort.store(true);
        return;
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (fatal) std::rethrow_exception(fatal);
  return report;
}

}  // namespace dclone
