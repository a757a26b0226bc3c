#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dclone {

// One WordNet synset used as a class.
struct ClassEntry {
  std::string wnid;
  int class_index = 0;
  std::vector<std::string> lemmas;
  std::vector<std::string> hypernym_lemmas;
  std::string definition;

  bool operator==(const ClassEntry&) const = default;
};

// Throws ErrorCode::kContractViolation describing the first violated rule.
void validate(const ClassEntry& entry);
bool is_valid_wnid(std::string_view wnid);

class ClassCatalog {
 public:
  ClassCatalog() = default;
  ClassCatalog(std::string name, std::vector<ClassEntry> entries);

  const std::string& name() const { return name_; }
  const std::vector<ClassEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const ClassEntry* find(std::string_view wnid) const;
  const ClassEntry& at(std::string_view wnid) const;
  std::vector<std::string> wnids() const;

 private:
  std::string name_;
  std::vector<ClassEntry> entries_;
};

// Scene names used as backgrounds; normalized to lowercase with underscores
// replaced by spaces.
class BackgroundSet {
 public:
  explicit BackgroundSet(std::vector<std::string> scenes);

  const std::vector<std::string>& scenes() const { return scenes_; }
  std::size_t size() const { return scenes_.size(); }

  static BackgroundSet load(const std::filesystem::path& path);
  // Accepts "airfield", "air_field", and Places-style "/a/apartment_building/outdoor 8".
  static std::string normalize(std::string_view raw);

 private:
  std::vector<std::string> scenes_;
};

// Builds a catalog from pre-extracted WordNet metadata (JSON array of
// {"wnid","lemmas","hypernym_lemmas","definition"}), in class_list order.
ClassCatalog load_catalog(const nlohmann::json& source, const std::vector<std::string>& class_list,
                          std::string name = {});
ClassCatalog load_catalog(const std::filesystem::path& source,
                          const std::vector<std::string>& class_list, std::string name = {});

// Catalog file: JSON array of full ClassEntry objects. The name is taken from
// the file stem unless given.
ClassCatalog read_catalog(const std::filesystem::path& path, std::optional<std::string> name = {});
nlohmann::ordered_json catalog_to_json(const ClassCatalog& catalog);
ClassCatalog catalog_from_json(const nlohmann::json& array, std::string name);
void write_catalog(const ClassCatalog& catalog, const std::filesystem::path& path);

// Reads a class list file: one wnid per line, '#' comments and blank lines ignored.
std::vector<std::string> read_class_list(const std::filesystem::path& path);

std::string lemmas_string(const ClassEntry& entry);
std::string hypernym_string(const ClassEntry& entry);
std::string definition_string(const ClassEntry& entry);

}  // namespace dclone
