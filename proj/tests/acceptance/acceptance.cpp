// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dclone/analysis.hpp"
#include "dclone/catalog.hpp"
#include "dclone/error.hpp"
#include "dclone/evaluator.hpp"
#include "dclone/generation.hpp"
#include "dclone/io.hpp"
#include "dclone/prompt.hpp"
#include "dclone/random.hpp"
#include "dclone/store.hpp"
#include "dclone/trainer.hpp"
#include "oracles.hpp"
#include "stub_server.hpp"
#include "support.hpp"

extern char** environ;

namespace {

using namespace dclone;
using dclone::testing::data_dir;
using dclone::testing::TempDir;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed checks so one line can say what went wrong.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  bool ok() const { return failed_ == 0; }
  Outcome outcome(const std::string& summary) const {
    if (ok()) return {true, fmt::format("{} ({} checks)", summary, total_)};
    std::string msg = fmt::format("{} of {} checks failed:", failed_, total_);
    for (const auto& f : failures_) msg += " [" + f + "]";
    return {false, msg};
  }

 private:
  std::size_t total_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::string> failures_;
};

ClassCatalog fixture_catalog(const std::vector<std::string>& wnids, const std::string& name = "fixture") {
  return load_catalog(data_dir() / "wordnet_meta.json", wnids, name);
}

// ---------------------------------------------------------------------------

Outcome prompt_fidelity() {
  Checks c;
  const auto cat = fixture_catalog({"n02086910", "n03947888"});
  const auto& papillon = cat.at("n02086910");
  const auto& pirate = cat.at("n03947888");
  const auto eq = [&](const std::string& got, const std::string& want) {
    c.expect(got == want, "'" + got + "' != '" + want + "'");
  };
  eq(render_prompt(papillon, PromptTemplate::kNameHypernym), "papillon, toy spaniel");
  eq(render_prompt(papillon, PromptTemplate::kNameDefinition),
     "papillon, small slender toy spaniel with erect ears and a black-spotted brown to white coat");
  eq(render_prompt(pirate, PromptTemplate::kHypernymBackground, std::string("bedroom")),
     "pirate, pirate ship, ship inside bedroom");
  eq(render_prompt(papillon, PromptTemplate::kName), lemmas_string(papillon));
  eq(render_prompt(pirate, PromptTemplate::kName), "pirate, pirate ship");
  eq(render_prompt(papillon, PromptTemplate::kMultiHypernym), "a photo of multiple papillon, toy spaniel");
  eq(render_prompt(papillon, PromptTemplate::kMultiDifferentHypernym),
     "a photo of multiple different papillon, toy spaniel");
  return c.outcome("papillon/pirate template strings match");
}

Outcome plan_determinism() {
  Checks c;
  const auto cat = fixture_catalog(read_class_list(data_dir() / "classes10.txt"), "clone10");
  const auto bg = BackgroundSet::load(data_dir() / "backgrounds.txt");
  Rng rng(2024);
  std::size_t records = 0;
  for (int run = 0; run < 1000; ++run) {
    ClassCounts counts;
    for (const auto& w : cat.wnids()) {
      if (rng.bernoulli(0.7)) counts[w] = 1 + static_cast<int>(rng.below(25));
    }
    if (counts.empty()) counts[cat.wnids()[rng.below(cat.size())]] = 1;
    std::vector<PromptTemplate> templates;
    for (auto t : all_templates()) {
      if (rng.bernoulli(0.5)) templates.push_back(t);
    }
    if (templates.empty()) templates.push_back(all_templates()[rng.below(6)]);
    const std::uint64_t seed = rng.next_u64();
    GenParams gp;
    const auto a = build_plan(cat, templates, counts, &bg, seed, gp);
    const auto b = build_plan(cat, templates, counts, &bg, seed, gp);
    records += a.records.size();
    c.expect(counts_by_class(a) == counts, fmt::format("run {}: counts differ", run));
    c.expect(serialize_plan(a) == serialize_plan(b), fmt::format("run {}: plans differ", run));
    // Independent recount from the serialized form.
    std::map<std::string, int> recount;
    for (const auto& r : parse_plan(serialize_plan(a)).records) ++recount[r.wnid];
    c.expect(recount == counts, fmt::format("run {}: parsed counts differ", run));
  }
  return c.outcome(fmt::format("1000 random count maps, {} records", records));
}

Outcome metric_oracles() {
  using dclone::testing::logdet_oracle;
  using dclone::testing::naive_intra;
  using dclone::testing::naive_redundancy;
  Checks c;
  c.expect(coding_length(RowMatrix::Zero(4, 6)) == 0.0, "coding(0) != 0");
  {
    const RowMatrix id = RowMatrix::Identity(2, 2);
    // Eigenvalues of I^T I are {1, 1}: R = 0.5 * 2 * log(1 + 2).
    c.expect(std::abs(coding_length(id, 0.5) - std::log(3.0)) <= 1e-9, "coding(I2) != log 3");
  }
  {
    RowMatrix x(4, 2);
    x << 1, 0, 0, 1, -1, 0, 0, -1;
    c.expect(std::abs(feature_redundancy(x) - 0.5) <= 1e-12, "redundancy(+-e) != 0.5");
  }
  {
    RowMatrix x(4, 3);
    x << 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0;
    const std::vector<std::int32_t> labels{0, 0, 1, 1};
    c.expect(std::abs(intra_class_distance(x, labels) - std::sqrt(2.0)) <= 1e-12, "intra(orthonormal) != sqrt 2");
  }
  {
    RowMatrix x = RowMatrix::Zero(5, 512);
    for (int i = 0; i < 5; ++i) x(i, 100 * i) = 1.0;
    c.expect(sparsity_ratio(x) == 511.0 / 512.0, "sparsity(one-hot) != (d-1)/d");
  }
  Rng rng(99);
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng.below(7));
    const int d = 1 + static_cast<int>(rng.below(8));
    RowMatrix x(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = rng.bernoulli(0.2) ? 0.0 : rng.normal();
    }
    l2_normalize_rows(x);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(3));
    labels[1] = labels[0];

    int zeros = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) zeros += std::abs(x(i, j)) < 1e-5 ? 1 : 0;
    }
    c.expect(sparsity_ratio(x) == static_cast<double>(zeros) / (n * d), fmt::format("case {}: sparsity", t));
    c.expect(std::abs(intra_class_distance(x, labels) - naive_intra(x, labels)) <= 1e-12,
             fmt::format("case {}: intra", t));
    c.expect(std::abs(feature_redundancy(x) - naive_redundancy(x)) <= 1e-12, fmt::format("case {}: redundancy", t));
    c.expect(std::abs(coding_length(x) - 0.5 * logdet_oracle(x, d / (n * 0.5))) <= 1e-9,
             fmt::format("case {}: coding", t));
  }
  return c.outcome("point values and 1000 random matrices match brute force");
}

Outcome lr_schedule() {
  Checks c;
  for (const std::int64_t total : {1000LL, 5000LL, 10LL * 1000}) {
    const double base = 0.1;
    const auto w = warmup_steps(total, 0.1);
    c.expect(std::abs(lr_at(w - 1, total, base, 0.1) - base) <= 1e-12, "peak != base");
    c.expect(std::abs(lr_at(total, total, base, 0.1)) <= 1e-12, "end != 0");
    c.expect((total - w) % 2 == 0, "midpoint not on a step");
    c.expect(std::abs(lr_at(w + (total - w) / 2, total, base, 0.1) - 0.5 * base) <= 1e-12, "midpoint != base/2");
    double prev = 0.0;
    bool up = true, down = true;
    for (std::int64_t s = 0; s <= total; ++s) {
      const double lr = lr_at(s, total, base, 0.1);
      if (s < w && !(lr > prev)) up = false;
      if (s >= w && !(lr <= prev)) down = false;
      prev = lr;
    }
    c.expect(up, "warmup not strictly increasing");
    c.expect(down, "decay not monotone");
  }
  return c.outcome("peak, end and cosine midpoint exact; up then down");
}

Outcome multicrop_contract() {
  Checks c;
  const auto img = to_planar(mock_generate("papillon", 3, GenParams{}).image);
  Rng rng(5);
  for (const auto& [g, l] : std::vector<std::pair<int, int>>{{32, 16}, {224, 96}}) {
    MultiCropConfig mc;
    mc.num_global = 1;
    mc.num_local = 8;
    mc.global_size = g;
    mc.local_size = l;
    const auto views = multicrop_views(img, mc, AugmentConfig{}, rng);
    c.expect(views.size() == 9, fmt::format("{} views", views.size()));
    for (std::size_t i = 0; i < views.size(); ++i) {
      const int want = i == 0 ? g : l;
      c.expect(views[i].width == want && views[i].height == want && views[i].channels == 3,
               fmt::format("view {} is {}x{}", i, views[i].width, views[i].height));
    }
  }
  return c.outcome("1 global + 8 local views at 32/16 and 224/96");
}

DatasetView small_mock_store(const fs::path& root, int per_class, std::uint64_t seed) {
  const auto cat = fixture_catalog({"n01443537", "n02086910", "n03947888", "n09472597"}, "four");
  GenParams gp;
  gp.width = 40;
  gp.height = 32;
  const auto plan = build_plan(cat, {PromptTemplate::kName}, uniform_counts(cat, per_class), nullptr, seed, gp);
  MockBackend mock;
  auto store = DatasetStore::create(root, manifest_header_for(plan, &cat));
  run_plan(plan, mock, store, {});
  return DatasetView::from_store(root);
}

Outcome equal_iteration() {
  Checks c;
  TempDir tmp("accept6");
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.base_lr = 0.05;
  cfg.encoder.widths = {4, 8};
  cfg.multicrop.global_size = 12;
  cfg.multicrop.local_size = 6;
  std::string summary;
  // 32 images divide the batch exactly; 28 leave a partial last batch.
  for (const int per_class : {8, 7}) {
    const auto one = small_mock_store(tmp / fmt::format("x1_{}", per_class), per_class, 1);
    const auto ten = small_mock_store(tmp / fmt::format("x10_{}", per_class), per_class * 10, 2);
    c.expect(ten.size() == 10 * one.size(), "10x dataset size");
    auto cfg1 = cfg;
    cfg1.epochs = 100;
    auto cfg10 = cfg;
    cfg10.epochs = 10;
    std::int64_t epochs1 = 0, epochs10 = 0;
    const auto a = train(one, cfg1, {[&](int, double, double) { ++epochs1; }});
    const auto b = train(ten, cfg10, {[&](int, double, double) { ++epochs10; }});
    const auto s1 = static_cast<std::int64_t>(a.history.step_lr.size());
    const auto s10 = static_cast<std::int64_t>(b.history.step_lr.size());
    c.expect(epochs1 == 100 && epochs10 == 10, "epoch counts");
    c.expect(s1 == a.history.total_steps && s10 == b.history.total_steps, "executed steps != planned");
    c.expect(std::llabs(s1 - s10) <= cfg1.epochs, fmt::format("steps {} vs {}", s1, s10));
    if (one.size() % static_cast<std::size_t>(cfg.batch_size) == 0) c.expect(s1 == s10, "divisible case not exact");
    summary += fmt::format("{}x100ep={} / {}x10ep={} steps; ", one.size(), s1, ten.size(), s10);
  }
  summary.resize(summary.size() - 2);
  return c.outcome(summary);
}

Outcome masked_evaluation() {
  using dclone::testing::brute_topk;
  Checks c;
  {
    const std::vector<float> logits{5, 1, 3, 0};
    const std::vector<int> labels{2};
    const std::vector<int> ks{1};
    const ClassMask mask({1, 2, 3}, 4);
    c.expect(topk_accuracy(logits, 4, labels, ks, &mask)[1] == 1.0, "constructed masked top-1 != 1");
    c.expect(topk_accuracy(logits, 4, labels, ks)[1] == 0.0, "constructed unmasked top-1 != 0");
  }
  Rng rng(7);
  const std::vector<int> ks{1, 5};
  for (int t = 0; t < 2000; ++t) {
    const int nc = t < 1000 ? 4 : 1 + static_cast<int>(rng.below(10));
    const int n = 1 + static_cast<int>(rng.below(100));
    std::vector<float> logits(static_cast<std::size_t>(n) * nc);
    for (auto& v : logits) v = t % 2 ? static_cast<float>(rng.below(4)) : static_cast<float>(rng.normal());
    std::vector<int> allowed;
    for (int k = 0; k < nc; ++k) {
      if (rng.bernoulli(0.6)) allowed.push_back(k);
    }
    if (allowed.empty()) allowed.push_back(0);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = allowed[rng.below(allowed.size())];
    const ClassMask mask(allowed, nc);
    const ClassMask all = ClassMask::all(nc);
    c.expect(topk_accuracy(logits, nc, labels, ks, &mask, true) == brute_topk(logits, nc, labels, ks, &allowed, true),
             fmt::format("case {}: masked", t));
    c.expect(topk_accuracy(logits, nc, labels, ks, &mask, false) == brute_topk(logits, nc, labels, ks, &allowed, false),
             fmt::format("case {}: sample-only mask", t));
    const auto plain = topk_accuracy(logits, nc, labels, ks);
    c.expect(plain == brute_topk(logits, nc, labels, ks, nullptr, false), fmt::format("case {}: unmasked", t));
    c.expect(topk_accuracy(logits, nc, labels, ks, &all, true) == plain, fmt::format("case {}: mask=all", t));
  }
  return c.outcome("2000 fuzz cases (1000 with 4 classes) match brute force; mask=all is exact");
}

FeatureMatrix gaussians(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix m;
  m.d = 2;
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      m.x.push_back(static_cast<float>(rng.normal(c == 0 ? -3.0 : 3.0, 0.5)));
      m.x.push_back(static_cast<float>(rng.normal(0.0, 0.5)));
      m.labels.push_back(c);
    }
  }
  m.n = m.labels.size();
  return m;
}

Outcome linear_probe_check() {
  Checks c;
  ProbeOptions o;
  o.n_trials = 25;
  o.seed = 11;
  const auto r = linear_probe(gaussians(100, 21), gaussians(100, 22), o);
  c.expect(r.accuracy >= 0.99, fmt::format("accuracy {}", r.accuracy));
  c.expect(r.trials.size() >= 25, fmt::format("{} trials", r.trials.size()));
  c.expect(to_json(r)["trials"].size() == r.trials.size(), "trials not logged");
  return c.outcome(fmt::format("accuracy {:.4f} with {} trials ({})", r.accuracy, r.trials.size(), r.solver));
}

// --- end to end --------------------------------------------------------------

using EntrySet = std::set<std::tuple<EntryKey, std::string, std::uint64_t, std::string, std::string>>;

EntrySet entry_set(const fs::path& root) {
  EntrySet s;
  for (const auto& e : effective_entries(read_manifest(root / kManifestName).entries)) {
    s.emplace(e.key(), e.prompt, e.seed, e.file_path, e.status == EntryStatus::kOk ? e.sha256 : "FAILED");
  }
  return s;
}

std::size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

pid_t spawn_cli(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::string exe = DCLONE_CLI_PATH;
  argv.push_back(exe.data());
  std::vector<std::string> copy = args;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 1, "/dev/null", O_WRONLY, 0);
  posix_spawn_file_actions_addopen(&fa, 2, "/dev/null", O_WRONLY, 0);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, exe.c_str(), &fa, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  if (rc != 0) throw std::runtime_error(std::string("posix_spawn: ") + std::strerror(rc));
  return pid;
}

int wait_exit(pid_t pid, bool* signaled = nullptr) {
  int status = 0;
  waitpid(pid, &status, 0);
  if (signaled) *signaled = WIFSIGNALED(status);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end() {
  Checks c;
  TempDir tmp("accept9");
  const auto cat = fixture_catalog(read_class_list(data_dir() / "classes10.txt"), "clone10");
  const auto bg = BackgroundSet::load(data_dir() / "backgrounds.txt");
  c.expect(cat.size() == 10, "catalog size");
  const GenParams gp;  // 512x384, 50 steps, guidance 7.5
  const auto plan = build_plan(cat, all_templates(), uniform_counts(cat, 100), &bg, 1, gp);
  c.expect(plan.records.size() == 1000, "plan size");
  write_plan(plan, tmp / "plan.jsonl");

  MockBackend mock;
  RunOptions ro;
  ro.workers = 2;
  {
    auto store = DatasetStore::create(tmp / "a", manifest_header_for(plan, &cat));
    const auto rep = run_plan(plan, mock, store, ro);
    c.expect(rep.completed == 1000 && rep.failed == 0, "generation incomplete");
  }
  const auto va = verify(tmp / "a");
  c.expect(va.integrity_errors() == 0 && va.ok == 1000, fmt::format("verify: {} integrity errors", va.integrity_errors()));

  const auto held_plan = build_plan(cat, all_templates(), uniform_counts(cat, 20), &bg, 999, gp);
  {
    auto store = DatasetStore::create(tmp / "held", manifest_header_for(held_plan, &cat));
    run_plan(held_plan, mock, store, ro);
  }

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.base_lr = 0.1;
  cfg.seed = 1;
  // Mock classes are told apart by color, so color augmentations are off here.
  cfg.augment.jitter_p = 0.0;
  cfg.augment.grayscale_p = 0.0;
  cfg.augment.solarize_p = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  Checkpoint ck = train(DatasetView::from_store(tmp / "a"), cfg);
  const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(ck, tmp / "ckpt");
  Checkpoint loaded = load_checkpoint(tmp / "ckpt");
  EvalOptions eo;
  eo.ks = {1, 5};
  const auto ev = evaluate_topk(loaded, DatasetView::from_store(tmp / "held"), eo);
  c.expect(ev.num_samples == 200, "held-out size");
  c.expect(ev.accuracy.at(1) >= 0.95, fmt::format("top-1 {:.3f}", ev.accuracy.at(1)));

  // Same plan with 8 workers.
  {
    RunOptions r8;
    r8.workers = 8;
    auto store = DatasetStore::create(tmp / "b", manifest_header_for(plan, &cat));
    run_plan(plan, mock, store, r8);
  }
  c.expect(verify(tmp / "b").integrity_errors() == 0, "verify b");
  c.expect(entry_set(tmp / "b") == entry_set(tmp / "a"), "workers=8 entry set differs");

  // Kill a CLI run part way, then resume it.
  const auto gen_args = std::vector<std::string>{"generate", "--plan", (tmp / "plan.jsonl").string(), "--backend",
                                                 "mock", "--workers", "8", "--out-dir", (tmp / "c").string()};
  const pid_t pid = spawn_cli(gen_args);
  const auto manifest = tmp / "c" / kManifestName;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  while (std::chrono::steady_clock::now() < deadline && (!fs::exists(manifest) || line_count(manifest) < 400)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  kill(pid, SIGKILL);
  bool signaled = false;
  wait_exit(pid, &signaled);
  const std::size_t at_kill = fs::exists(manifest) ? line_count(manifest) : 0;
  c.expect(signaled, "generator finished before it could be killed");
  auto resume_args = gen_args;
  resume_args.push_back("--resume");
  c.expect(wait_exit(spawn_cli(resume_args)) == 0, "resume exit code");
  c.expect(verify(tmp / "c").integrity_errors() == 0, "verify c");
  c.expect(entry_set(tmp / "c") == entry_set(tmp / "a"), "resumed entry set differs");

  return c.outcome(fmt::format("top-1 {:.3f} top-5 {:.3f} on 200 held-out; train {:.0f} s; killed at {} manifest lines",
                               ev.accuracy.at(1), ev.accuracy.at(5), train_s, at_kill));
}

Outcome wire_and_format() {
  Checks c;
  dclone::testing::StubServer stub;
  HttpBackendConfig hc;
  hc.url = stub.url("/v1");
  hc.token = "t0ken";
  hc.timeout_s = 10;
  HttpBackend backend(hc);
  GenParams gp;
  gp.width = 64;
  gp.height = 48;
  const auto r = generate(backend, "pirate, pirate ship, ship inside bedroom", 9581648547516798155ull, gp);
  const auto body = nlohmann::json::parse(stub.last_body());
  const std::set<std::string> want{"prompt", "seed", "num_inference_steps", "guidance_scale", "width", "height"};
  std::set<std::string> got;
  for (const auto& [k, v] : body.items()) got.insert(k);
  c.expect(got == want, "request field set");
  c.expect(body["prompt"] == "pirate, pirate ship, ship inside bedroom", "prompt");
  c.expect(body["seed"].get<std::uint64_t>() == 9581648547516798155ull, "seed");
  c.expect(body["num_inference_steps"] == 50 && body["guidance_scale"] == 7.5, "steps/guidance");
  c.expect(body["width"] == 64 && body["height"] == 48, "size");
  c.expect(stub.last_path() == "/v1/generate", "path " + stub.last_path());
  c.expect(stub.last_auth() == "Bearer t0ken", "auth header");
  c.expect(r.image.rgb == dclone::testing::gradient_image(64, 48).rgb, "decoded image");
  c.expect(!r.meta.safety_flagged, "safety flag");

  TempDir tmp("accept10");
  Rng rng(3);
  FeatureMatrix m;
  m.n = 50;
  m.d = 17;
  for (std::size_t i = 0; i < m.n * m.d; ++i) m.x.push_back(static_cast<float>(rng.normal() * 1e3));
  m.x[0] = -0.0f;
  m.x[1] = 1e-40f;
  for (std::size_t i = 0; i < m.n; ++i) m.labels.push_back(static_cast<std::int32_t>(rng.below(7)));
  m.meta = {{"source_dataset", "syn"}, {"encoder_id", "none"}};
  write_feature_matrix(m, tmp / "f.bin");
  const auto back = read_feature_matrix(tmp / "f.bin");
  c.expect(back.n == m.n && back.d == m.d, "shape");
  c.expect(std::memcmp(back.x.data(), m.x.data(), m.x.size() * sizeof(float)) == 0, "payload bits");
  c.expect(back.labels == m.labels, "labels");
  c.expect(back.meta == m.meta, "meta");
  c.expect(encode_feature_matrix(back) == read_file_bytes(tmp / "f.bin"), "re-encoded bytes");
  return c.outcome("stub round-trip fields exact; FeatureMatrix bit-exact");
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no stated limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<Criterion> criteria{
      {1, "prompt fidelity", 1.0, prompt_fidelity},
      {2, "plan determinism and imbalance", 30.0, plan_determinism},
      {3, "metric oracles", 60.0, metric_oracles},
      {4, "lr schedule", 1.0, lr_schedule},
      {5, "multicrop contract", 0.0, multicrop_contract},
      {6, "equal-iteration scaling", 0.0, equal_iteration},
      {7, "masked evaluation", 0.0, masked_evaluation},
      {8, "linear probe", 120.0, linear_probe_check},
      {9, "end-to-end mock pipeline", 300.0, end_to_end},
      {10, "wire and format conformance", 0.0, wire_and_format},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& cr : criteria) {
    if (!only.empty() && !only.contains(cr.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.budget_s > 0 && secs > cr.budget_s) {
      o.pass = false;
      o.detail += fmt::format("; over the {:.0f} s budget", cr.budget_s);
    }
    if (!o.pass) ++failed;
    std::cout << fmt::format("{} {:>2} {}: {} [{:.2f} s]", o.pass ? "PASS" : "FAIL", cr.id, cr.name, o.detail, secs)
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
