#include "dclone/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <tuple>

#include "dclone/error.hpp"
#include "dclone/hash.hpp"
#include "dclone/io.hpp"

namespace dclone {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

EntryKey key_of(const PromptRecord& record) {
  return {record.wnid, std::string(template_id(record.templ)), record.background,
          record.index_in_class};
}

ordered_json to_json(const ManifestEntry& e) {
  ordered_json j;
  j["wnid"] = e.wnid;
  j["class_index"] = e.class_index;
  j["template"] = e.templ;
  j["background"] = e.background ? ordered_json(*e.background) : ordered_json(nullptr);
  j["prompt"] = e.prompt;
  j["seed"] = e.seed;
  j["index_in_class"] = e.index_in_class;
  j["steps"] = e.steps;
  j["guidance"] = e.guidance;
  j["width"] = e.width;
  j["height"] = e.height;
  j["backend_id"] = e.backend_id;
  j["file_path"] = e.file_path;
  j["sha256"] = e.sha256;
  j["status"] = e.status == EntryStatus::kOk ? "ok" : "failed";
  j["safety_flagged"] = e.safety_flagged;
  return j;
}

ManifestEntry entry_from_json(const json& j) {
  ManifestEntry e;
  e.wnid = j.at("wnid").get<std::string>();
  e.class_index = j.at("class_index").get<int>();
  e.templ = j.at("template").get<std::string>();
  if (!j.at("background").is_null()) e.background = j.at("background").get<std::string>();
  e.prompt = j.at("prompt").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.index_in_class = j.at("index_in_class").get<int>();
  e.steps = j.at("steps").get<int>();
  e.guidance = j.at("guidance").get<double>();
  e.width = j.at("width").get<int>();
  e.height = j.at("height").get<int>();
  e.backend_id = j.at("backend_id").get<std::string>();
  e.file_path = j.at("file_path").get<std::string>();
  e.sha256 = j.at("sha256").get<std::string>();
  const auto status = j.at("status").get<std::string>();
  if (status == "ok") {
    e.status = EntryStatus::kOk;
  } else if (status == "failed") {
    e.status = EntryStatus::kFailed;
  } else {
    fail(ErrorCode::kParse, "unknown status '" + status + "'");
  }
  e.safety_flagged = j.value("safety_flagged", false);
  return e;
}

namespace {

ordered_json header_to_json(const ManifestHeader& h) {
  ordered_json j;
  j["format_version"] = h.format_version;
  j["plan_seed"] = h.plan_seed;
  j["catalog_name"] = h.catalog_name;
  j["classes"] = h.classes;
  return j;
}

ManifestHeader header_from_json(const json& j) {
  ManifestHeader h;
  h.format_version = j.at("format_version").get<int>();
  if (h.format_version != 1) {
    fail(ErrorCode::kParse, "unsupported manifest format_version " + std::to_string(h.format_version));
  }
  h.plan_seed = j.at("plan_seed").get<std::uint64_t>();
  h.catalog_name = j.value("catalog_name", std::string{});
  if (j.contains("classes")) h.classes = j.at("classes").get<std::vector<std::string>>();
  return h;
}

// Cuts an unterminated final line, left behind when a writer dies mid-append.
void repair_torn_tail(const fs::path& path) {
  const auto size = fs::file_size(path);
  if (size == 0) return;
  std::ifstream in(path, std::ios::binary);
  std::string data(size, '\0');
  in.read(data.data(), static_cast<std::streamsize>(size));
  if (data.back() == '\n') return;
  const auto nl = data.find_last_of('\n');
  fs::resize_file(path, nl == std::string::npos ? 0 : nl + 1);
}

}  // namespace

ManifestContents read_manifest(const fs::path& manifest_path) {
  ManifestContents out;
  const auto lines = read_lines(manifest_path);
  bool have_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        out.header = header_from_json(j);
        have_header = true;
      } else {
        out.entries.push_back(entry_from_json(j));
      }
    } catch (const std::exception& ex) {
      if (!have_header) fail(ErrorCode::kParse, manifest_path.string() + ": bad header: " + ex.what());
      out.parse_errors.push_back({i + 1, ex.what()});
    }
  }
  if (!have_header) fail(ErrorCode::kParse, manifest_path.string() + ": missing header line");
  return out;
}

std::vector<ManifestEntry> effective_entries(const std::vector<ManifestEntry>& entries) {
  std::map<EntryKey, std::size_t> slot;
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    auto [it, inserted] = slot.emplace(e.key(), out.size());
    if (inserted) {
      out.push_back(e);
    } else {
      out[it->second] = e;
    }
  }
  return out;
}

struct DatasetStore::State {
  fs::path root;
  ManifestHeader header;
  mutable std::mutex mutex;
  std::ofstream out;
  std::map<EntryKey, EntryStatus> status;
  std::vector<ManifestEntry> entries;
};

DatasetStore::DatasetStore(std::unique_ptr<State> state) : state_(std::move(state)) {}
DatasetStore::DatasetStore(DatasetStore&&) noexcept = default;
DatasetStore& DatasetStore::operator=(DatasetStore&&) noexcept = default;
DatasetStore::~DatasetStore() = default;

DatasetStore DatasetStore::create(const fs::path& root, const ManifestHeader& header) {
  const fs::path manifest = root / kManifestName;
  if (fs::exists(manifest) && fs::file_size(manifest) > 0) {
    fail(ErrorCode::kRefuseOverwrite,
         "manifest already exists at " + manifest.string() + " (use resume)");
  }
  fs::create_directories(root);
  auto state = std::make_unique<State>();
  state->root = root;
  state->header = header;
  state->out.open(manifest, std::ios::binary | std::ios::trunc);
  if (!state->out) fail(ErrorCode::kIo, "cannot create " + manifest.string());
  state->out << header_to_json(header).dump() << '\n';
  state->out.flush();
  if (!state->out) fail(ErrorCode::kIo, "cannot write " + manifest.string());
  return DatasetStore(std::move(state));
}

DatasetStore DatasetStore::open(const fs::path& root) {
  const fs::path manifest = root / kManifestName;
  if (!fs::exists(manifest)) fail(ErrorCode::kIo, "no manifest at " + manifest.string());
  repair_torn_tail(manifest);
  auto contents = read_manifest(manifest);
  auto state = std::make_unique<State>();
  state->root = root;
  state->header = contents.header;
  state->entries = effective_entries(contents.entries);
  for (const auto& e : state->entries) state->status[e.key()] = e.status;
  state->out.open(manifest, std::ios::binary | std::ios::app);
  if (!state->out) fail(ErrorCode::kIo, "cannot append to " + manifest.string());
  return DatasetStore(std::move(state));
}

const fs::path& DatasetStore::root() const { return state_->root; }
const ManifestHeader& DatasetStore::header() const { return state_->header; }
fs::path DatasetStore::manifest_path() const { return state_->root / kManifestName; }

fs::path DatasetStore::relative_image_path(const PromptRecord& record, ImageFormat format) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d", record.index_in_class);
  fs::path p = fs::path("images") / record.wnid / std::string(template_id(record.templ)) / name;
  p += std::string(image_format_extension(format));
  return p;
}

void DatasetStore::write_image(const fs::path& relative, const std::vector<std::uint8_t>& bytes) {
  write_file_atomic(state_->root / relative, bytes);
}

void DatasetStore::append(const ManifestEntry& entry, bool overwrite) {
  const std::string line = to_json(entry).dump();
  std::lock_guard lock(state_->mutex);
  const auto key = entry.key();
  const auto it = state_->status.find(key);
  if (it != state_->status.end() && !overwrite) {
    fail(ErrorCode::kDuplicateKey, "manifest already has " + entry.wnid + "/" + entry.templ + "/" +
                                       std::to_string(entry.index_in_class));
  }
  state_->out << line << '\n';
  state_->out.flush();
  if (!state_->out) fail(ErrorCode::kIo, "manifest append failed at " + manifest_path().string());
  if (it == state_->status.end()) {
    state_->entries.push_back(entry);
  } else {
    for (auto& e : state_->entries) {
      if (e.key() == key) e = entry;
    }
  }
  state_->status[key] = entry.status;
}

std::optional<EntryStatus> DatasetStore::status_of(const EntryKey& key) const {
  std::lock_guard lock(state_->mutex);
  const auto it = state_->status.find(key);
  if (it == state_->status.end()) return std::nullopt;
  return it->second;
}

std::size_t DatasetStore::entry_count() const {
  std::lock_guard lock(state_->mutex);
  return state_->entries.size();
}

std::vector<ManifestEntry> DatasetStore::entries() const {
  std::lock_guard lock(state_->mutex);
  return state_->entries;
}

VerifyReport verify(const fs::path& root) {
  const auto contents = read_manifest(root / kManifestName);
  VerifyReport report;
  report.parse_errors = contents.parse_errors;
  for (const auto& e : effective_entries(contents.entries)) {
    ++report.total;
    if (e.status != EntryStatus::kOk) {
      ++report.failed;
      continue;
    }
    const fs::path file = root / e.file_path;
    if (!fs::exists(file)) {
      report.missing_files.push_back(e.file_path);
      continue;
    }
    if (sha256_file_hex(file) != e.sha256) {
      report.checksum_mismatches.push_back(e.file_path);
      continue;
    }
    ++report.ok;
    ++report.count_by_class[e.wnid];
  }
  return report;
}

ordered_json to_json(const VerifyReport& r) {
  ordered_json j;
  j["total"] = r.total;
  j["ok"] = r.ok;
  j["failed"] = r.failed;
  j["missing_files"] = r.missing_files;
  j["checksum_mismatches"] = r.checksum_mismatches;
  auto errs = ordered_json::array();
  for (const auto& e : r.parse_errors) errs.push_back({{"line", e.line}, {"message", e.message}});
  j["parse_errors"] = errs;
  j["count_by_class"] = r.count_by_class;
  j["integrity_errors"] = r.integrity_errors();
  return j;
}

DatasetView::DatasetView(fs::path root, std::vector<std::string> class_names,
                         std::vector<DatasetItem> items)
    : root_(std::move(root)), class_names_(std::move(class_names)), items_(std::move(items)) {
  for (const auto& item : items_) {
    if (item.label < 0 || static_cast<std::size_t>(item.label) >= class_names_.size()) {
      fail(ErrorCode::kContractViolation, "label out of range for " + item.path.string());
    }
  }
}

DatasetView DatasetView::from_store(const fs::path& root) {
  const auto contents = read_manifest(root / kManifestName);
  std::vector<std::string> names = contents.header.classes;
  // Plan order, so the view does not depend on the order workers finished in.
  auto entries = effective_entries(contents.entries);
  std::sort(entries.begin(), entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return std::tie(a.class_index, a.index_in_class, a.templ, a.background) <
           std::tie(b.class_index, b.index_in_class, b.templ, b.background);
  });
  std::vector<DatasetItem> items;
  for (const auto& e : entries) {
    if (e.status != EntryStatus::kOk) continue;
    if (static_cast<std::size_t>(e.class_index) >= names.size()) names.resize(e.class_index + 1);
    auto& slot = names[static_cast<std::size_t>(e.class_index)];
    if (slot.empty()) {
      slot = e.wnid;
    } else if (slot != e.wnid) {
      fail(ErrorCode::kContractViolation, "class_index " + std::to_string(e.class_index) +
                                              " maps to both " + slot + " and " + e.wnid);
    }
    items.push_back({root / e.file_path, e.class_index, e.wnid});
  }
  return DatasetView(root, std::move(names), std::move(items));
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

DatasetView DatasetView::from_image_folder(const fs::path& root,
                                           const std::vector<std::string>* class_names) {
  if (!fs::is_directory(root)) fail(ErrorCode::kIo, "dataset directory not found: " + root.string());
  std::vector<std::string> dirs;
  for (const auto& d : fs::directory_iterator(root)) {
    if (d.is_directory()) dirs.push_back(d.path().filename().string());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<std::string> names = class_names ? *class_names : dirs;
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = static_cast<int>(i);

  std::vector<DatasetItem> items;
  for (const auto& dir : dirs) {
    const auto it = index.find(dir);
    if (it == index.end()) {
      fail(ErrorCode::kMaskMismatch, "dataset class '" + dir + "' is not a known class");
    }
    std::vector<fs::path> files;
    for (const auto& f : fs::recursive_directory_iterator(root / dir)) {
      if (f.is_regular_file() && has_image_extension(f.path())) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) items.push_back({std::move(f), it->second, dir});
  }
  return DatasetView(root, std::move(names), std::move(items));
}

DatasetView DatasetView::open(const fs::path& root, const std::vector<std::string>* class_names) {
  if (fs::exists(root / kManifestName)) {
    auto view = from_store(root);
    return class_names ? view.remapped(*class_names) : view;
  }
  return from_image_folder(root, class_names);
}

std::map<std::string, int> DatasetView::counts_by_class() const {
  std::map<std::string, int> out;
  for (const auto& item : items_) ++out[item.class_name];
  return out;
}

DatasetView DatasetView::remapped(const std::vector<std::string>& class_names) const {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < class_names.size(); ++i) index[class_names[i]] = static_cast<int>(i);
  std::vector<DatasetItem> items = items_;
  for (auto& item : items) {
    const auto it = index.find(item.class_name);
    if (it == index.end()) {
      fail(ErrorCode::kMaskMismatch, "dataset class '" + item.class_name + "' is not a known class");
    }
    item.label = it->second;
  }
  return DatasetView(root_, class_names, std::move(items));
}

}  // namespace dclone
