#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dclone/catalog.hpp"

namespace dclone {

enum class PromptTemplate {
  kName,                    // "{c}"
  kNameHypernym,            // "{c}, {h}"
  kNameDefinition,          // "{c}, {d}"
  kMultiHypernym,           // "a photo of multiple {c}, {h}"
  kMultiDifferentHypernym,  // "a photo of multiple different {c}, {h}"
  kHypernymBackground,      // "{c}, {h} inside {b}"
};

// Canonical id, e.g. "NAME_HYPERNYM". Used in plan files, seeds and paths.
std::string_view template_id(PromptTemplate t);
// CLI short name, e.g. "name_hyper".
std::string_view template_short_name(PromptTemplate t);
PromptTemplate parse_template_id(std::string_view id);
PromptTemplate parse_template_short_name(std::string_view name);
// Comma-separated CLI short names.
std::vector<PromptTemplate> parse_template_list(std::string_view csv);
const std::vector<PromptTemplate>& all_templates();
bool needs_background(PromptTemplate t);

struct GenParams {
  int steps = 50;
  double guidance = 7.5;
  int width = 512;
  int height = 384;
  bool safety_filter = false;

  bool operator==(const GenParams&) const = default;
};

void validate(const GenParams& params);

struct PromptRecord {
  std::string wnid;
  int class_index = 0;
  PromptTemplate templ = PromptTemplate::kName;
  std::optional<std::string> background;
  std::string prompt;
  std::uint64_t seed = 0;
  int index_in_class = 0;

  bool operator==(const PromptRecord&) const = default;
};

struct GenerationPlan {
  std::uint64_t plan_seed = 0;
  std::vector<PromptRecord> records;
  GenParams gen_params;
  std::string catalog_name;
};

std::string render_prompt(const ClassEntry& entry, PromptTemplate templ,
                          const std::optional<std::string>& background = std::nullopt);

// Low 64 bits (first 8 digest bytes, little-endian) of
// SHA-256("{plan_seed}|{wnid}|{template_id}|{background}|{index_in_class}").
std::uint64_t derive_seed(std::uint64_t plan_seed, std::string_view wnid,
                          std::string_view template_id, std::string_view background,
                          std::int64_t index_in_class);

using ClassCounts = std::map<std::string, int>;

ClassCounts uniform_counts(const ClassCatalog& catalog, int per_class);
// JSON object {"wnid": count} or whitespace-separated "wnid count" lines.
ClassCounts read_counts_file(const std::filesystem::path& path);

// Records per class cycle `templates` round-robin; background records walk a
// per-class seeded permutation of the background set.
GenerationPlan build_plan(const ClassCatalog& catalog, const std::vector<PromptTemplate>& templates,
                          const ClassCounts& per_class_counts, const BackgroundSet* backgrounds,
                          std::uint64_t plan_seed, const GenParams& gen_params);

std::map<std::string, int> counts_by_class(const GenerationPlan& plan);

// JSON Lines: header object, then one record per line.
std::string serialize_plan(const GenerationPlan& plan);
GenerationPlan parse_plan(std::string_view text);
void write_plan(const GenerationPlan& plan, const std::filesystem::path& path);
GenerationPlan read_plan(const std::filesystem::path& path);

}  // namespace dclone
