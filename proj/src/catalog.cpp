#include "dclone/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_map>

#include "dclone/error.hpp"
#include "dclone/io.hpp"

namespace dclone {

using nlohmann::json;

bool is_valid_wnid(std::string_view wnid) {
  if (wnid.size() != 9 || wnid[0] != 'n') return false;
  return std::all_of(wnid.begin() + 1, wnid.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

void validate(const ClassEntry& entry) {
  if (!is_valid_wnid(entry.wnid)) {
    fail(ErrorCode::kContractViolation, "malformed wnid '" + entry.wnid + "'");
  }
  if (entry.lemmas.empty()) fail(ErrorCode::kContractViolation, entry.wnid + ": no lemmas");
  for (const auto& lemma : entry.lemmas) {
    if (trim(lemma).empty()) fail(ErrorCode::kContractViolation, entry.wnid + ": empty lemma");
  }
  if (entry.class_index < 0) {
    fail(ErrorCode::kContractViolation, entry.wnid + ": negative class_index");
  }
}

ClassCatalog::ClassCatalog(std::string name, std::vector<ClassEntry> entries)
    : name_(std::move(name)), entries_(std::move(entries)) {
  std::set<std::string> seen_wnid;
  std::set<int> seen_index;
  for (const auto& e : entries_) {
    validate(e);
    if (!seen_wnid.insert(e.wnid).second) fail(ErrorCode::kDuplicateKey, "duplicate wnid " + e.wnid);
    if (!seen_index.insert(e.class_index).second) {
      fail(ErrorCode::kDuplicateKey, "duplicate class_index " + std::to_string(e.class_index));
    }
  }
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const auto& a, const auto& b) { return a.class_index < b.class_index; });
}

const ClassEntry* ClassCatalog::find(std::string_view wnid) const {
  for (const auto& e : entries_) {
    if (e.wnid == wnid) return &e;
  }
  return nullptr;
}

const ClassEntry& ClassCatalog::at(std::string_view wnid) const {
  if (const auto* e = find(wnid)) return *e;
  fail(ErrorCode::kMissingClass, "class " + std::string(wnid) + " not in catalog");
}

std::vector<std::string> ClassCatalog::wnids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.wnid);
  return out;
}

std::string BackgroundSet::normalize(std::string_view raw) {
  std::string s = trim(raw);
  // Places category files carry a trailing integer label.
  if (const auto sp = s.find_last_of(' '); sp != std::string::npos) {
    const std::string tail = s.substr(sp + 1);
    if (!tail.empty() && std::all_of(tail.begin(), tail.end(), [](char c) {
          return std::isdigit(static_cast<unsigned char>(c)) != 0;
        })) {
      s = trim(s.substr(0, sp));
    }
  }
  // "/a/abbey" -> "abbey"
  if (s.size() > 3 && s[0] == '/' && s[2] == '/') s = s.substr(3);
  for (char& c : s) {
    if (c == '_' || c == '/') c = ' ';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return trim(s);
}

BackgroundSet::BackgroundSet(std::vector<std::string> scenes) {
  std::set<std::string> seen;
  for (const auto& raw : scenes) {
    std::string scene = normalize(raw);
    if (scene.empty()) continue;
    if (!seen.insert(scene).second) fail(ErrorCode::kDuplicateKey, "duplicate scene '" + scene + "'");
    scenes_.push_back(std::move(scene));
  }
  if (scenes_.empty()) fail(ErrorCode::kContractViolation, "background set is empty");
}

BackgroundSet BackgroundSet::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kMissingBackgrounds, "background file not found: " + path.string());
  }
  return BackgroundSet(read_lines(path));
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key, const std::string& wnid) {
  if (!j.contains(key)) return {};
  if (!j.at(key).is_array()) fail(ErrorCode::kParse, wnid + ": field '" + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
  return out;
}

ClassEntry entry_from_json(const json& j) {
  ClassEntry e;
  e.wnid = j.at("wnid").get<std::string>();
  e.class_index = j.value("class_index", 0);
  e.lemmas = string_list(j, "lemmas", e.wnid);
  e.hypernym_lemmas = string_list(j, "hypernym_lemmas", e.wnid);
  e.definition = j.value("definition", std::string{});
  return e;
}

}  // namespace

ClassCatalog load_catalog(const json& source, const std::vector<std::string>& class_list,
                          std::string name) {
  if (!source.is_array()) fail(ErrorCode::kParse, "WordNet metadata must be a JSON array");
  std::unordered_map<std::string, const json*> by_wnid;
  for (const auto& obj : source) by_wnid.emplace(obj.at("wnid").get<std::string>(), &obj);

  std::vector<ClassEntry> entries;
  entries.reserve(class_list.size());
  for (std::size_t i = 0; i < class_list.size(); ++i) {
    const auto& wnid = class_list[i];
    const auto it = by_wnid.find(wnid);
    if (it == by_wnid.end()) fail(ErrorCode::kMissingClass, "wnid not found in metadata: " + wnid);
    ClassEntry e = entry_from_json(*it->second);
    e.class_index = static_cast<int>(i);
    if (trim(e.definition).empty()) {
      fail(ErrorCode::kEmptyDefinition, "empty definition for " + wnid);
    }
    entries.push_back(std::move(e));
  }
  return ClassCatalog(std::move(name), std::move(entries));
}

ClassCatalog load_catalog(const std::filesystem::path& source,
                          const std::vector<std::string>& class_list, std::string name) {
  json j;
  try {
    j = json::parse(read_file_text(source));
  } catch (const json::exception& ex) {
    fail(ErrorCode::kParse, source.string() + ": " + ex.what());
  }
  return load_catalog(j, class_list, std::move(name));
}

nlohmann::ordered_json catalog_to_json(const ClassCatalog& catalog) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : catalog.entries()) {
    nlohmann::ordered_json o;
    o["wnid"] = e.wnid;
    o["class_index"] = e.class_index;
    o["lemmas"] = e.lemmas;
    o["hypernym_lemmas"] = e.hypernym_lemmas;
    o["definition"] = e.definition;
    arr.push_back(std::move(o));
  }
  return arr;
}

ClassCatalog catalog_from_json(const json& array, std::string name) {
  if (!array.is_array()) fail(ErrorCode::kParse, "catalog must be a JSON array");
  std::vector<ClassEntry> entries;
  for (const auto& obj : array) {
    if (!obj.contains("class_index")) fail(ErrorCode::kParse, "catalog entry lacks class_index");
    entries.push_back(entry_from_json(obj));
  }
  return ClassCatalog(std::move(name), std::move(entries));
}

ClassCatalog read_catalog(const std::filesystem::path& path, std::optional<std::string> name) {
  json j;
  try {
    j = json::parse(read_file_text(path));
  } catch (const json::exception& ex) {
    fail(ErrorCode::kParse, path.string() + ": " + ex.what());
  }
  return catalog_from_json(j, name.value_or(path.stem().string()));
}

void write_catalog(const ClassCatalog& catalog, const std::filesystem::path& path) {
  write_file_atomic(path, catalog_to_json(catalog).dump(2) + "\n");
}

std::vector<std::string> read_class_list(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for (const auto& raw : read_lines(path)) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    // Allow "n01440764 tench" style lines.
    if (const auto sp = line.find_first_of(" \t"); sp != std::string::npos) line = line.substr(0, sp);
    out.push_back(line);
  }
  return out;
}

std::string lemmas_string(const ClassEntry& entry) { return join(entry.lemmas, ", "); }

std::string hypernym_string(const ClassEntry& entry) { return join(entry.hypernym_lemmas, ", "); }

std::string definition_string(const ClassEntry& entry) { return trim(entry.definition); }

}  // namespace dclone
