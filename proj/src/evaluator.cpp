#include "dclone/evaluator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <thread>

#include <spdlog/spdlog.h>

#include "dclone/catalog.hpp"
#include "dclone/error.hpp"
#include "dclone/io.hpp"

namespace dclone {

using nlohmann::json;
using nlohmann::ordered_json;

ClassMask::ClassMask(std::vector<int> classes, int num_classes) : allowed(std::move(classes)) {
  std::sort(allowed.begin(), allowed.end());
  allowed.erase(std::unique(allowed.begin(), allowed.end()), allowed.end());
  if (allowed.empty()) fail(ErrorCode::kInvalidArgument, "class mask is empty");
  if (allowed.front() < 0 || allowed.back() >= num_classes) {
    fail(ErrorCode::kMaskMismatch, "class mask refers to classes outside [0, " +
                                       std::to_string(num_classes) + ")");
  }
}

bool ClassMask::contains(int c) const { return std::binary_search(allowed.begin(), allowed.end(), c); }

ClassMask ClassMask::all(int num_classes) {
  std::vector<int> v(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < num_classes; ++i) v[static_cast<std::size_t>(i)] = i;
  return ClassMask(std::move(v), num_classes);
}

ClassMask read_class_mask(const std::filesystem::path& path, const std::vector<std::string>& classes) {
  std::vector<int> ids;
  for (const auto& raw : read_lines(path)) {
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string tok = split(line, ' ').front();
    if (is_valid_wnid(tok)) {
      const auto it = std::find(classes.begin(), classes.end(), tok);
      if (it == classes.end()) fail(ErrorCode::kMaskMismatch, "mask class " + tok + " is not in the model");
      ids.push_back(static_cast<int>(it - classes.begin()));
    } else {
      try {
        std::size_t pos = 0;
        ids.push_back(std::stoi(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        fail(ErrorCode::kParse, "class mask: cannot read '" + tok + "'");
      }
    }
  }
  return ClassMask(std::move(ids), static_cast<int>(classes.size()));
}

std::map<int, double> topk_accuracy(std::span<const float> logits, int num_classes,
                                    std::span<const int> labels, std::span<const int> ks,
                                    const ClassMask* mask, bool mask_logits) {
  require(num_classes > 0, "topk: num_classes must be positive");
  require(logits.size() == labels.size() * static_cast<std::size_t>(num_classes),
          "topk: logits shape does not match labels");
  for (int k : ks) {
    if (k < 1) fail(ErrorCode::kInvalidArgument, "topk: k must be >= 1");
  }
  std::vector<char> candidate(static_cast<std::size_t>(num_classes), 1);
  if (mask != nullptr && mask_logits) {
    std::fill(candidate.begin(), candidate.end(), 0);
    for (int c : mask->allowed) {
      require(c >= 0 && c < num_classes, "topk: mask class out of range");
      candidate[static_cast<std::size_t>(c)] = 1;
    }
  }
  std::map<int, std::size_t> hits;
  for (int k : ks) hits[k] = 0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) fail(ErrorCode::kInvalidArgument, "topk: label out of range");
    if (mask != nullptr && !mask->contains(y)) {
      fail(ErrorCode::kMaskMismatch, "test label " + std::to_string(y) + " is outside the class mask");
    }
    const float* z = logits.data() + i * static_cast<std::size_t>(num_classes);
    int rank = 0;
    for (int j = 0; j < num_classes; ++j) {
      if (!candidate[static_cast<std::size_t>(j)] || j == y) continue;
      if (z[j] > z[y] || (z[j] == z[y] && j < y)) ++rank;
    }
    for (auto& [k, h] : hits) {
      if (rank < k) ++h;
    }
    ++scored;
  }
  std::map<int, double> out;
  for (const auto& [k, h] : hits) {
    out[k] = scored == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(scored);
  }
  return out;
}

ordered_json to_json(const EvalReport& r) {
  ordered_json j;
  j["kind"] = "eval";
  j["dataset"] = r.dataset;
  j["model"] = r.model;
  for (const auto& [k, acc] : r.accuracy) j["top" + std::to_string(k)] = acc;
  j["num_samples"] = r.num_samples;
  j["resolution"] = r.resolution;
  if (r.mask) {
    j["mask"] = *r.mask;
  } else {
    j["mask"] = nullptr;
  }
  j["mask_logits"] = r.mask_logits;
  return j;
}

EvalReport evaluate_topk(Checkpoint& checkpoint, const DatasetView& dataset, const EvalOptions& o) {
  const DatasetView view = dataset.remapped(checkpoint.classes);
  if (view.empty()) fail(ErrorCode::kInvalidArgument, "evaluation set is empty");
  const int res = o.resolution > 0 ? o.resolution : checkpoint.config.effective_eval_size();
  const int nc = checkpoint.num_classes();
  if (o.mask != nullptr) {
    for (const auto& item : view.items()) {
      if (!o.mask->contains(item.label)) {
        fail(ErrorCode::kMaskMismatch,
             "test label " + item.class_name + " is outside the class mask");
      }
    }
  }
  std::vector<float> logits;
  std::vector<int> labels;
  logits.reserve(view.size() * static_cast<std::size_t>(nc));
  const auto batch = static_cast<std::size_t>(std::max(1, o.batch_size));
  for (std::size_t start = 0; start < view.size(); start += batch) {
    const std::size_t end = std::min(view.size(), start + batch);
    std::vector<Planar> imgs;
    for (std::size_t i = start; i < end; ++i) {
      imgs.push_back(eval_view(to_planar(load_image(view.items()[i].path)), res,
                               checkpoint.config.augment));
      labels.push_back(view.items()[i].label);
    }
    std::vector<const Planar*> ptrs;
    for (const auto& p : imgs) ptrs.push_back(&p);
    const nn::Tensor out = checkpoint.model.logits(stack(ptrs));
    logits.insert(logits.end(), out.data.begin(), out.data.end());
  }
  EvalReport r;
  r.accuracy = topk_accuracy(logits, nc, labels, o.ks, o.mask, o.mask_logits);
  r.num_samples = labels.size();
  r.resolution = res;
  r.mask_logits = o.mask_logits;
  if (o.mask != nullptr) r.mask = o.mask->allowed;
  return r;
}

int FeatureMatrix::num_classes() const {
  int m = -1;
  for (auto l : labels) m = std::max(m, static_cast<int>(l));
  return m + 1;
}

void FeatureMatrix::validate() const {
  if (x.size() != n * d || labels.size() != n) {
    fail(ErrorCode::kContractViolation, "feature matrix: sizes do not match n and d");
  }
  for (float v : x) {
    if (!std::isfinite(v)) fail(ErrorCode::kContractViolation, "feature matrix holds NaN or Inf");
  }
  for (auto l : labels) {
    if (l < 0) fail(ErrorCode::kContractViolation, "feature matrix: negative label");
  }
}

namespace {

constexpr char kFeatMagic[8] = {'F', 'E', 'A', 'T', 'M', 'A', 'T', '1'};

}  // namespace

std::vector<std::uint8_t> encode_feature_matrix(const FeatureMatrix& m) {
  static_assert(std::endian::native == std::endian::little);
  m.validate();
  json header{{"n", m.n}, {"d", m.d}, {"dtype", "f32"}, {"normalized", m.normalized}, {"meta", m.meta}};
  const std::string h = header.dump();
  const auto hlen = static_cast<std::uint32_t>(h.size());
  std::vector<std::uint8_t> out(8 + 4 + h.size() + m.x.size() * 4 + m.labels.size() * 4);
  std::uint8_t* p = out.data();
  std::memcpy(p, kFeatMagic, 8);
  p += 8;
  std::memcpy(p, &hlen, 4);
  p += 4;
  std::memcpy(p, h.data(), h.size());
  p += h.size();
  std::memcpy(p, m.x.data(), m.x.size() * 4);
  p += m.x.size() * 4;
  std::memcpy(p, m.labels.data(), m.labels.size() * 4);
  return out;
}

FeatureMatrix decode_feature_matrix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kFeatMagic, 8) != 0) {
    fail(ErrorCode::kParse, "feature matrix: bad magic");
  }
  std::uint32_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + 8, 4);
  if (12 + static_cast<std::size_t>(hlen) > bytes.size()) fail(ErrorCode::kParse, "feature matrix: truncated header");
  FeatureMatrix m;
  try {
    const json h = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
    if (h.at("dtype").get<std::string>() != "f32") fail(ErrorCode::kUnsupported, "feature matrix: dtype must be f32");
    m.n = h.at("n").get<std::size_t>();
    m.d = h.at("d").get<std::size_t>();
    m.normalized = h.at("normalized").get<bool>();
    m.meta = h.value("meta", json::object());
  } catch (const json::exception& ex) {
    fail(ErrorCode::kParse, std::string("feature matrix header: ") + ex.what());
  }
  const std::size_t body = 12 + hlen;
  if (bytes.size() != body + m.n * m.d * 4 + m.n * 4) {
    fail(ErrorCode::kParse, "feature matrix: payload size does not match header");
  }
  m.x.resize(m.n * m.d);
  m.labels.resize(m.n);
  std::memcpy(m.x.data(), bytes.data() + body, m.x.size() * 4);
  std::memcpy(m.labels.data(), bytes.data() + body + m.x.size() * 4, m.n * 4);
  m.validate();
  return m;
}

void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
  write_file_atomic(path, encode_feature_matrix(m));
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  return decode_feature_matrix(read_file_bytes(path));
}

FeatureMatrix extract_features(const Checkpoint& checkpoint, const DatasetView& dataset,
                               const ExtractOptions& o) {
  require(o.resolution > 0, "probe resolution must be positive");
  const std::size_t n = dataset.size();
  const auto d = static_cast<std::size_t>(checkpoint.model.feature_dim());
  std::vector<float> rows(n * d, 0.0f);
  std::vector<char> ok(n, 0);
  std::vector<std::string> errors(n);

  const unsigned workers = std::max(1u, std::min<unsigned>(o.workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  const std::size_t chunk = (n + workers - 1) / workers;
  auto work = [&](std::size_t lo, std::size_t hi) {
    Model model = checkpoint.model;
    const auto batch = static_cast<std::size_t>(std::max(1, o.batch_size));
    for (std::size_t start = lo; start < hi; start += batch) {
      const std::size_t end = std::min(hi, start + batch);
      std::vector<Planar> imgs;
      std::vector<std::size_t> idx;
      for (std::size_t i = start; i < end; ++i) {
        try {
          imgs.push_back(eval_view(to_planar(load_image(dataset.items()[i].path)), o.resolution,
                                   checkpoint.config.augment));
          idx.push_back(i);
        } catch (const std::exception& ex) {
          errors[i] = ex.what();
        }
      }
      if (imgs.empty()) continue;
      std::vector<const Planar*> ptrs;
      for (const auto& p : imgs) ptrs.push_back(&p);
      const nn::Tensor f = model.features(stack(ptrs));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        std::copy_n(f.sample(static_cast<int>(j)), d, rows.begin() + static_cast<std::ptrdiff_t>(idx[j] * d));
        ok[idx[j]] = 1;
      }
    }
  };
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t lo = std::min(n, w * chunk);
      pool.emplace_back(work, lo, std::min(n, lo + chunk));
    }
  }

  FeatureMatrix m;
  m.d = d;
  json skipped = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!ok[i]) {
      spdlog::warn("skipping {}: {}", dataset.items()[i].path.string(), errors[i]);
      skipped.push_back({{"path", dataset.items()[i].path.string()}, {"error", errors[i]}});
      continue;
    }
    m.x.insert(m.x.end(), rows.begin() + static_cast<std::ptrdiff_t>(i * d),
               rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    m.labels.push_back(dataset.items()[i].label);
    ++m.n;
  }
  m.meta = {{"source_dataset", dataset.root().string()},
            {"encoder_id", checkpoint.model.encoder_config().arch},
            {"classes", dataset.class_names()},
            {"resolution", o.resolution},
            {"skipped", skipped}};
  return m;
}

}  // namespace dclone
