#include "dclone/prompt.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "dclone/error.hpp"
#include "dclone/hash.hpp"
#include "dclone/io.hpp"
#include "dclone/random.hpp"

namespace dclone {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct TemplateNames {
  PromptTemplate templ;
  std::string_view id;
  std::string_view short_name;
};

constexpr std::array<TemplateNames, 6> kTemplates{{
    {PromptTemplate::kName, "NAME", "name"},
    {PromptTemplate::kNameHypernym, "NAME_HYPERNYM", "name_hyper"},
    {PromptTemplate::kNameDefinition, "NAME_DEFINITION", "name_def"},
    {PromptTemplate::kMultiHypernym, "MULTI_HYPERNYM", "multi"},
    {PromptTemplate::kMultiDifferentHypernym, "MULTI_DIFFERENT_HYPERNYM", "multi_diff"},
    {PromptTemplate::kHypernymBackground, "HYPERNYM_BACKGROUND", "hyper_bg"},
}};

const TemplateNames& names_of(PromptTemplate t) {
  for (const auto& n : kTemplates) {
    if (n.templ == t) return n;
  }
  fail(ErrorCode::kUnknownTemplate, "unknown template enum value");
}

}  // namespace

std::string_view template_id(PromptTemplate t) { return names_of(t).id; }
std::string_view template_short_name(PromptTemplate t) { return names_of(t).short_name; }

PromptTemplate parse_template_id(std::string_view id) {
  for (const auto& n : kTemplates) {
    if (n.id == id) return n.templ;
  }
  fail(ErrorCode::kUnknownTemplate, "unknown template id '" + std::string(id) + "'");
}

PromptTemplate parse_template_short_name(std::string_view name) {
  for (const auto& n : kTemplates) {
    if (n.short_name == name) return n.templ;
  }
  fail(ErrorCode::kUnknownTemplate, "unknown template name '" + std::string(name) + "'");
}

std::vector<PromptTemplate> parse_template_list(std::string_view csv) {
  std::vector<PromptTemplate> out;
  for (const auto& part : split(csv, ',')) {
    const std::string name = trim(part);
    if (name.empty()) continue;
    out.push_back(parse_template_short_name(name));
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "template list is empty");
  return out;
}

const std::vector<PromptTemplate>& all_templates() {
  static const std::vector<PromptTemplate> all = [] {
    std::vector<PromptTemplate> v;
    for (const auto& n : kTemplates) v.push_back(n.templ);
    return v;
  }();
  return all;
}

bool needs_background(PromptTemplate t) { return t == PromptTemplate::kHypernymBackground; }

void validate(const GenParams& p) {
  if (p.steps <= 0) fail(ErrorCode::kInvalidArgument, "steps must be positive");
  if (!(p.guidance > 0.0)) fail(ErrorCode::kInvalidArgument, "guidance must be positive");
  if (p.width <= 0 || p.height <= 0) fail(ErrorCode::kInvalidArgument, "image size must be positive");
}

std::string render_prompt(const ClassEntry& entry, PromptTemplate templ,
                          const std::optional<std::string>& background) {
  if (needs_background(templ) != background.has_value()) {
    fail(ErrorCode::kContractViolation,
         std::string("template ") + std::string(template_id(templ)) +
             (background ? " does not take a background" : " requires a background"));
  }
  const std::string c = lemmas_string(entry);
  switch (templ) {
    case PromptTemplate::kName:
      return c;
    case PromptTemplate::kNameHypernym:
      return c + ", " + hypernym_string(entry);
    case PromptTemplate::kNameDefinition:
      return c + ", " + definition_string(entry);
    case PromptTemplate::kMultiHypernym:
      return "a photo of multiple " + c + ", " + hypernym_string(entry);
    case PromptTemplate::kMultiDifferentHypernym:
      return "a photo of multiple different " + c + ", " + hypernym_string(entry);
    case PromptTemplate::kHypernymBackground:
      return c + ", " + hypernym_string(entry) + " inside " + *background;
  }
  fail(ErrorCode::kUnknownTemplate, "unhandled template");
}

std::uint64_t derive_seed(std::uint64_t plan_seed, std::string_view wnid,
                          std::string_view template_id, std::string_view background,
                          std::int64_t index_in_class) {
  std::string key = std::to_string(plan_seed);
  key += '|';
  key += wnid;
  key += '|';
  key += template_id;
  key += '|';
  key += background;
  key += '|';
  key += std::to_string(index_in_class);
  return low64_le(sha256(key));
}

ClassCounts uniform_counts(const ClassCatalog& catalog, int per_class) {
  ClassCounts out;
  for (const auto& e : catalog.entries()) out[e.wnid] = per_class;
  return out;
}

ClassCounts read_counts_file(const std::filesystem::path& path) {
  const std::string text = read_file_text(path);
  ClassCounts out;
  const std::string head = trim(text);
  if (!head.empty() && head[0] == '{') {
    try {
      for (const auto& [k, v] : json::parse(text).items()) out[k] = v.get<int>();
    } catch (const json::exception& ex) {
      fail(ErrorCode::kParse, path.string() + ": " + ex.what());
    }
    return out;
  }
  std::istringstream in(text);
  std::string wnid;
  long long count = 0;
  while (in >> wnid >> count) out[wnid] = static_cast<int>(count);
  return out;
}

GenerationPlan build_plan(const ClassCatalog& catalog, const std::vector<PromptTemplate>& templates,
                          const ClassCounts& per_class_counts, const BackgroundSet* backgrounds,
                          std::uint64_t plan_seed, const GenParams& gen_params) {
  validate(gen_params);
  if (templates.empty()) fail(ErrorCode::kInvalidArgument, "no templates given");
  const bool wants_bg = std::any_of(templates.begin(), templates.end(), needs_background);
  if (wants_bg && backgrounds == nullptr) {
    fail(ErrorCode::kMissingBackgrounds, "hyper_bg template requires a background set");
  }
  for (const auto& [wnid, count] : per_class_counts) {
    if (catalog.find(wnid) == nullptr) {
      fail(ErrorCode::kMissingClass, "count requested for class not in catalog: " + wnid);
    }
    if (count <= 0) fail(ErrorCode::kInvalidArgument, "non-positive count for " + wnid);
  }

  GenerationPlan plan;
  plan.plan_seed = plan_seed;
  plan.gen_params = gen_params;
  plan.catalog_name = catalog.name();

  for (const auto& entry : catalog.entries()) {
    const auto it = per_class_counts.find(entry.wnid);
    if (it == per_class_counts.end()) continue;
    const int count = it->second;

    std::vector<std::size_t> bg_order;
    if (wants_bg) {
      bg_order.resize(backgrounds->size());
      std::iota(bg_order.begin(), bg_order.end(), std::size_t{0});
      Rng rng(derive_seed(plan_seed, entry.wnid, "BG_ORDER", "", 0));
      rng.shuffle(std::span<std::size_t>(bg_order));
    }

    std::size_t bg_cursor = 0;
    for (int i = 0; i < count; ++i) {
      PromptRecord r;
      r.wnid = entry.wnid;
      r.class_index = entry.class_index;
      r.templ = templates[static_cast<std::size_t>(i) % templates.size()];
      if (needs_background(r.templ)) {
        r.background = backgrounds->scenes()[bg_order[bg_cursor % bg_order.size()]];
        ++bg_cursor;
      }
      r.prompt = render_prompt(entry, r.templ, r.background);
      r.index_in_class = i;
      r.seed = derive_seed(plan_seed, r.wnid, template_id(r.templ), r.background.value_or(""), i);
      plan.records.push_back(std::move(r));
    }
  }
  return plan;
}

std::map<std::string, int> counts_by_class(const GenerationPlan& plan) {
  std::map<std::string, int> out;
  for (const auto& r : plan.records) ++out[r.wnid];
  return out;
}

namespace {

ordered_json params_to_json(const GenParams& p) {
  ordered_json j;
  j["steps"] = p.steps;
  j["guidance"] = p.guidance;
  j["width"] = p.width;
  j["height"] = p.height;
  j["safety_filter"] = p.safety_filter;
  return j;
}

GenParams params_from_json(const json& j) {
  GenParams p;
  p.steps = j.at("steps").get<int>();
  p.guidance = j.at("guidance").get<double>();
  p.width = j.at("width").get<int>();
  p.height = j.at("height").get<int>();
  p.safety_filter = j.value("safety_filter", false);
  return p;
}

}  // namespace

std::string serialize_plan(const GenerationPlan& plan) {
  std::string out;
  ordered_json header;
  header["plan_seed"] = plan.plan_seed;
  header["gen_params"] = params_to_json(plan.gen_params);
  header["catalog_name"] = plan.catalog_name;
  out += header.dump();
  out += '\n';
  for (const auto& r : plan.records) {
    ordered_json j;
    j["wnid"] = r.wnid;
    j["class_index"] = r.class_index;
    j["template"] = template_id(r.templ);
    j["background"] = r.background ? ordered_json(*r.background) : ordered_json(nullptr);
    j["prompt"] = r.prompt;
    j["seed"] = r.seed;
    j["index_in_class"] = r.index_in_class;
    out += j.dump();
    out += '\n';
  }
  return out;
}

GenerationPlan parse_plan(std::string_view text) {
  GenerationPlan plan;
  std::size_t line_no = 0;
  bool have_header = false;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      if (!have_header) {
        plan.plan_seed = j.at("plan_seed").get<std::uint64_t>();
        plan.gen_params = params_from_json(j.at("gen_params"));
        plan.catalog_name = j.value("catalog_name", std::string{});
        have_header = true;
        continue;
      }
      PromptRecord r;
      r.wnid = j.at("wnid").get<std::string>();
      r.class_index = j.at("class_index").get<int>();
      r.templ = parse_template_id(j.at("template").get<std::string>());
      if (!j.at("background").is_null()) r.background = j.at("background").get<std::string>();
      r.prompt = j.at("prompt").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.index_in_class = j.at("index_in_class").get<int>();
      plan.records.push_back(std::move(r));
    } catch (const json::exception& ex) {
      fail(ErrorCode::kParse, "plan line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  if (!have_header) fail(ErrorCode::kParse, "plan has no header line");
  return plan;
}

void write_plan(const GenerationPlan& plan, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_plan(plan));
}

GenerationPlan read_plan(const std::filesystem::path& path) {
  return parse_plan(read_file_text(path));
}

}  // namespace dclone
