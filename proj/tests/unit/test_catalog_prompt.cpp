#include <doctest.h>

#include <algorithm>
#include <set>

#include "dclone/catalog.hpp"
#include "dclone/error.hpp"
#include "dclone/io.hpp"
#include "dclone/prompt.hpp"
#include "dclone/random.hpp"
#include "support.hpp"

using namespace dclone;
using dclone::testing::TempDir;
using dclone::testing::data_dir;

namespace {

ClassCatalog fixture_catalog(const std::vector<std::string>& wnids) {
  return load_catalog(data_dir() / "wordnet_meta.json", wnids, "fixture");
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("catalog entries come verbatim from the metadata") {
  const auto cat = fixture_catalog({"n02086910", "n03947888", "n01558993", "n02086240"});
  REQUIRE(cat.size() == 4);
  const auto& papillon = cat.at("n02086910");
  CHECK(papillon.class_index == 0);
  CHECK(papillon.lemmas == std::vector<std::string>{"papillon"});
  CHECK(papillon.hypernym_lemmas == std::vector<std::string>{"toy spaniel"});
  CHECK(papillon.definition ==
        "small slender toy spaniel with erect ears and a black-spotted brown to white coat");
  const auto& pirate = cat.at("n03947888");
  CHECK(pirate.lemmas == std::vector<std::string>{"pirate", "pirate ship"});
  CHECK(hypernym_string(pirate) == "ship");
  CHECK(definition_string(pirate) == "a ship that is manned by pirates");
  CHECK(lemmas_string(papillon) == "papillon");
  CHECK(lemmas_string(pirate) == "pirate, pirate ship");
  CHECK(lemmas_string(cat.at("n01558993")) == "robin, American robin, Turdus migratorius");
  CHECK(hypernym_string(cat.at("n02086240")) == "toy dog");
  CHECK(hypernym_string(papillon) == "toy spaniel");
}

TEST_CASE("catalog errors and edge cases") {
  CHECK(fixture_catalog({}).empty());
  CHECK(code_of([] { fixture_catalog({"n99999999"}); }) == ErrorCode::kMissingClass);
  const nlohmann::json src = nlohmann::json::parse(
      R"([{"wnid":"n00000001","lemmas":["x"],"hypernym_lemmas":["y"],"definition":"  "}])");
  CHECK(code_of([&] { load_catalog(src, {"n00000001"}); }) == ErrorCode::kEmptyDefinition);
  CHECK(is_valid_wnid("n02086910"));
  CHECK_FALSE(is_valid_wnid("n0208691"));
  CHECK_FALSE(is_valid_wnid("x02086910"));
  CHECK_FALSE(is_valid_wnid("n0208691a"));
  ClassEntry dup{"n00000001", 0, {"a"}, {"b"}, "c"};
  ClassEntry dup2{"n00000001", 1, {"a"}, {"b"}, "c"};
  CHECK(code_of([&] { ClassCatalog("x", {dup, dup2}); }) == ErrorCode::kDuplicateKey);
}

TEST_CASE("lemma strings contain len-1 separators") {
  const auto cat = fixture_catalog({"n01440764", "n01443537", "n01558993", "n02086910", "n04037443"});
  for (const auto& e : cat.entries()) {
    const auto s = lemmas_string(e);
    std::size_t count = 0;
    for (std::size_t pos = s.find(", "); pos != std::string::npos; pos = s.find(", ", pos + 1)) ++count;
    CHECK(count == e.lemmas.size() - 1);
  }
}

TEST_CASE("catalog round-trips through its file format") {
  TempDir tmp("cat");
  const auto cat = fixture_catalog({"n07747607", "n02086910", "n09472597"});
  write_catalog(cat, tmp / "c.json");
  const auto back = read_catalog(tmp / "c.json", std::string("fixture"));
  CHECK(back.entries() == cat.entries());
  CHECK(back.name() == "fixture");
  CHECK(back.entries()[0].wnid == "n07747607");
}

TEST_CASE("background names are normalized") {
  CHECK(BackgroundSet::normalize("/a/apartment_building/outdoor 8") == "apartment building outdoor");
  CHECK(BackgroundSet::normalize("Bedroom") == "bedroom");
  CHECK(BackgroundSet::normalize("forest_path") == "forest path");
  const auto bg = BackgroundSet::load(data_dir() / "backgrounds.txt");
  CHECK(bg.size() == 10);
  CHECK(bg.scenes()[1] == "bedroom");
  CHECK_THROWS_AS(BackgroundSet({"a", "A"}), Error);
  CHECK_THROWS_AS(BackgroundSet({}), Error);
  CHECK(code_of([] { BackgroundSet::load("/nonexistent/bg.txt"); }) == ErrorCode::kMissingBackgrounds);
}

TEST_CASE("render_prompt produces the exact template strings") {
  const auto cat = fixture_catalog({"n02086910", "n03947888"});
  const auto& papillon = cat.at("n02086910");
  const auto& pirate = cat.at("n03947888");
  CHECK(render_prompt(papillon, PromptTemplate::kName) == "papillon");
  CHECK(render_prompt(papillon, PromptTemplate::kNameHypernym) == "papillon, toy spaniel");
  CHECK(render_prompt(papillon, PromptTemplate::kNameDefinition) ==
        "papillon, small slender toy spaniel with erect ears and a black-spotted brown to white coat");
  CHECK(render_prompt(papillon, PromptTemplate::kMultiHypernym) ==
        "a photo of multiple papillon, toy spaniel");
  CHECK(render_prompt(papillon, PromptTemplate::kMultiDifferentHypernym) ==
        "a photo of multiple different papillon, toy spaniel");
  CHECK(render_prompt(pirate, PromptTemplate::kHypernymBackground, std::string("bedroom")) ==
        "pirate, pirate ship, ship inside bedroom");
  CHECK(render_prompt(pirate, PromptTemplate::kName) == lemmas_string(pirate));
  CHECK(code_of([&] { render_prompt(pirate, PromptTemplate::kName, std::string("bedroom")); }) ==
        ErrorCode::kContractViolation);
  CHECK(code_of([&] { render_prompt(pirate, PromptTemplate::kHypernymBackground); }) ==
        ErrorCode::kContractViolation);
}

TEST_CASE("template names parse both ways") {
  for (auto t : all_templates()) {
    CHECK(parse_template_id(template_id(t)) == t);
    CHECK(parse_template_short_name(template_short_name(t)) == t);
  }
  CHECK(parse_template_list("name,name_hyper,name_def,multi,multi_diff,hyper_bg") == all_templates());
  CHECK(code_of([] { parse_template_list("name,bogus"); }) == ErrorCode::kUnknownTemplate);
}

TEST_CASE("derive_seed golden values") {
  // Pinned from an independent SHA-256 implementation (Python hashlib).
  CHECK(derive_seed(0, "n02086910", "NAME", "", 0) == 8953604122376564484ULL);
  CHECK(derive_seed(0, "n02086910", "NAME", "", 1) == 6768510778130614335ULL);
  CHECK(derive_seed(42, "n03947888", "HYPERNYM_BACKGROUND", "bedroom", 7) == 9581648547516798155ULL);
  CHECK(derive_seed(0, "n02086910", "NAME", "", 0) == derive_seed(0, "n02086910", "NAME", "", 0));
}

TEST_CASE("build_plan preserves counts and cycles templates") {
  const auto cat = fixture_catalog({"n02086910", "n03947888"});
  const auto bg = BackgroundSet::load(data_dir() / "backgrounds.txt");
  SUBCASE("imbalanced counts") {
    const auto plan = build_plan(cat, {PromptTemplate::kName}, {{"n02086910", 3}, {"n03947888", 2}},
                                 nullptr, 5, {});
    CHECK(plan.records.size() == 5);
    CHECK(counts_by_class(plan) == std::map<std::string, int>{{"n02086910", 3}, {"n03947888", 2}});
  }
  SUBCASE("six templates once each") {
    const auto plan = build_plan(cat, all_templates(), {{"n02086910", 6}}, &bg, 5, {});
    REQUIRE(plan.records.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(plan.records[i].templ == all_templates()[i]);
    CHECK(plan.records[5].background.has_value());
    CHECK_FALSE(plan.records[0].background.has_value());
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { build_plan(cat, {PromptTemplate::kName}, {{"n01440764", 1}}, nullptr, 0, {}); }) ==
          ErrorCode::kMissingClass);
    CHECK(code_of([&] { build_plan(cat, all_templates(), {{"n02086910", 6}}, nullptr, 0, {}); }) ==
          ErrorCode::kMissingBackgrounds);
    CHECK(code_of([&] { build_plan(cat, {PromptTemplate::kName}, {{"n02086910", 0}}, nullptr, 0, {}); }) ==
          ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("plan fuzz: counts, uniqueness, ordering, purity, byte determinism") {
  const auto cat = load_catalog(data_dir() / "wordnet_meta.json",
                                {"n01440764", "n01443537", "n01530575", "n01558993", "n02086240",
                                 "n02086910", "n02123045", "n02504458"},
                                "fuzz");
  const auto bg = BackgroundSet::load(data_dir() / "backgrounds.txt");
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    ClassCounts counts;
    for (const auto& e : cat.entries()) {
      if (rng.bernoulli(0.7)) counts[e.wnid] = 1 + static_cast<int>(rng.below(40));
    }
    if (counts.empty()) counts[cat.entries().front().wnid] = 1;
    std::vector<PromptTemplate> templates = all_templates();
    rng.shuffle(std::span<PromptTemplate>(templates));
    templates.resize(1 + rng.below(templates.size()));
    const std::uint64_t seed = rng.next_u64();
    const bool with_bg = rng.bernoulli(0.8);
    const bool has_bg_template = std::find(templates.begin(), templates.end(),
                                           PromptTemplate::kHypernymBackground) != templates.end();
    if (has_bg_template && !with_bg) {
      CHECK(code_of([&] { build_plan(cat, templates, counts, nullptr, seed, {}); }) ==
            ErrorCode::kMissingBackgrounds);
      continue;
    }
    const auto plan = build_plan(cat, templates, counts, with_bg ? &bg : nullptr, seed, {});
    CHECK(counts_by_class(plan) == std::map<std::string, int>(counts.begin(), counts.end()));
    std::set<std::tuple<std::string, int, std::string, int>> keys;
    for (std::size_t i = 0; i < plan.records.size(); ++i) {
      const auto& r = plan.records[i];
      keys.insert({r.wnid, static_cast<int>(r.templ), r.background.value_or(""), r.index_in_class});
      CHECK(r.prompt == render_prompt(cat.at(r.wnid), r.templ, r.background));
      CHECK(r.seed == derive_seed(seed, r.wnid, template_id(r.templ), r.background.value_or(""), r.index_in_class));
      if (i > 0) {
        const auto& p = plan.records[i - 1];
        CHECK(std::pair(p.class_index, p.index_in_class) < std::pair(r.class_index, r.index_in_class));
      }
    }
    CHECK(keys.size() == plan.records.size());
    const auto again = build_plan(cat, templates, counts, with_bg ? &bg : nullptr, seed, {});
    CHECK(serialize_plan(again) == serialize_plan(plan));
    const auto parsed = parse_plan(serialize_plan(plan));
    CHECK(parsed.records == plan.records);
    CHECK(parsed.gen_params == plan.gen_params);
  }
}

TEST_CASE("background coverage when every record uses a background") {
  const auto cat = fixture_catalog({"n02086910"});
  const auto bg = BackgroundSet::load(data_dir() / "backgrounds.txt");
  for (int count : {10, 25, 37}) {
    const auto plan = build_plan(cat, {PromptTemplate::kHypernymBackground}, {{"n02086910", count}}, &bg, 9, {});
    std::map<std::string, int> seen;
    for (const auto& r : plan.records) ++seen[*r.background];
    for (const auto& s : bg.scenes()) CHECK(seen[s] >= count / static_cast<int>(bg.size()));
  }
}

TEST_CASE("plan files round-trip and are byte-identical across writes") {
  TempDir tmp("plan");
  const auto cat = fixture_catalog({"n02086910", "n03947888"});
  const auto bg = BackgroundSet::load(data_dir() / "backgrounds.txt");
  const auto plan = build_plan(cat, all_templates(), uniform_counts(cat, 12), &bg, 77, {});
  write_plan(plan, tmp / "a.jsonl");
  write_plan(build_plan(cat, all_templates(), uniform_counts(cat, 12), &bg, 77, {}), tmp / "b.jsonl");
  CHECK(read_file_text(tmp / "a.jsonl") == read_file_text(tmp / "b.jsonl"));
  const auto back = read_plan(tmp / "a.jsonl");
  CHECK(back.records == plan.records);
  CHECK(back.plan_seed == 77);
  const GenParams defaults;
  CHECK(defaults.steps == 50);
  CHECK(defaults.guidance == 7.5);
  CHECK(defaults.width == 512);
  CHECK(defaults.height == 384);
  CHECK_FALSE(defaults.safety_filter);
}
