#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dclone/image.hpp"
#include "dclone/prompt.hpp"

namespace dclone {

enum class EntryStatus { kOk, kFailed };

struct EntryKey {
  std::string wnid;
  std::string templ;
  std::optional<std::string> background;
  int index_in_class = 0;

  auto operator<=>(const EntryKey&) const = default;
  bool operator==(const EntryKey&) const = default;
};

EntryKey key_of(const PromptRecord& record);

struct ManifestEntry {
  std::string wnid;
  int class_index = 0;
  std::string templ;
  std::optional<std::string> background;
  std::string prompt;
  std::uint64_t seed = 0;
  int index_in_class = 0;
  int steps = 0;
  double guidance = 0.0;
  int width = 0;
  int height = 0;
  std::string backend_id;
  // Relative image path when ok; the error message when failed.
  std::string file_path;
  std::string sha256;
  EntryStatus status = EntryStatus::kOk;
  bool safety_flagged = false;

  EntryKey key() const { return {wnid, templ, background, index_in_class}; }
  bool operator==(const ManifestEntry&) const = default;
};

nlohmann::ordered_json to_json(const ManifestEntry& entry);
ManifestEntry entry_from_json(const nlohmann::json& j);

struct ManifestHeader {
  int format_version = 1;
  std::uint64_t plan_seed = 0;
  std::string catalog_name;
  // wnids by class_index, when known.
  std::vector<std::string> classes;
};

struct ManifestParseError {
  std::size_t line = 0;
  std::string message;
};

struct ManifestContents {
  ManifestHeader header;
  std::vector<ManifestEntry> entries;  // file order
  std::vector<ManifestParseError> parse_errors;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

ManifestContents read_manifest(const std::filesystem::path& manifest_path);

// Later lines for the same key supersede earlier ones (a failed record that
// succeeded on resume); the result is in first-appearance order.
std::vector<ManifestEntry> effective_entries(const std::vector<ManifestEntry>& entries);

// Append-only manifest plus images under
// `images/{wnid}/{template}/{index_in_class:06d}.{png,jpg}`.
// Appends are serialized; any number of threads may call append.
class DatasetStore {
 public:
  // Fresh store. Refuses if a manifest with entries already exists.
  static DatasetStore create(const std::filesystem::path& root, const ManifestHeader& header);
  // Existing store; a torn trailing line (from a killed writer) is cut off.
  static DatasetStore open(const std::filesystem::path& root);

  DatasetStore(DatasetStore&&) noexcept;
  DatasetStore& operator=(DatasetStore&&) noexcept;
  ~DatasetStore();

  const std::filesystem::path& root() const;
  const ManifestHeader& header() const;
  std::filesystem::path manifest_path() const;

  static std::filesystem::path relative_image_path(const PromptRecord& record, ImageFormat format);
  // Atomic write of image bytes at root/relative.
  void write_image(const std::filesystem::path& relative, const std::vector<std::uint8_t>& bytes);

  // Rejects a key already present unless overwrite is set.
  void append(const ManifestEntry& entry, bool overwrite = false);

  std::optional<EntryStatus> status_of(const EntryKey& key) const;
  std::size_t entry_count() const;
  std::vector<ManifestEntry> entries() const;

 private:
  struct State;
  explicit DatasetStore(std::unique_ptr<State> state);
  std::unique_ptr<State> state_;
};

struct VerifyReport {
  std::size_t total = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::vector<std::string> missing_files;
  std::vector<std::string> checksum_mismatches;
  std::vector<ManifestParseError> parse_errors;
  std::map<std::string, int> count_by_class;

  std::size_t integrity_errors() const {
    return missing_files.size() + checksum_mismatches.size() + parse_errors.size();
  }
};

VerifyReport verify(const std::filesystem::path& root);
nlohmann::ordered_json to_json(const VerifyReport& report);

struct DatasetItem {
  std::filesystem::path path;
  int label = 0;
  std::string class_name;
};

// Labeled images: either the ok entries of a store (label = class_index) or
// an ImageFolder tree `root/<class>/<image>`.
class DatasetView {
 public:
  static DatasetView from_store(const std::filesystem::path& root);
  // With class_names, directory names map through it and unknown ones are
  // rejected; otherwise labels follow sorted directory order.
  static DatasetView from_image_folder(const std::filesystem::path& root,
                                       const std::vector<std::string>* class_names = nullptr);
  // Store when root holds a manifest, ImageFolder otherwise.
  static DatasetView open(const std::filesystem::path& root,
                          const std::vector<std::string>* class_names = nullptr);

  DatasetView(std::filesystem::path root, std::vector<std::string> class_names,
              std::vector<DatasetItem> items);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<DatasetItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t num_classes() const { return class_names_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::map<std::string, int> counts_by_class() const;

  // Relabels items through another class list (by name); throws on names
  // missing from it.
  DatasetView remapped(const std::vector<std::string>& class_names) const;

 private:
  std::filesystem::path root_;
  std::vector<std::string> class_names_;
  std::vector<DatasetItem> items_;
};

}  // namespace dclone
