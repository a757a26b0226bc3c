// `clone`: command-line driver for the dataset-clone pipeline.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "dclone/analysis.hpp"
#include "dclone/catalog.hpp"
#include "dclone/error.hpp"
#include "dclone/evaluator.hpp"
#include "dclone/generation.hpp"
#include "dclone/io.hpp"
#include "dclone/kernels.hpp"
#include "dclone/prompt.hpp"
#include "dclone/report.hpp"
#include "dclone/store.hpp"
#include "dclone/trainer.hpp"

namespace fs = std::filesystem;
using namespace dclone;
using nlohmann::ordered_json;

namespace {

std::string template_help() {
  std::string s = "Comma-separated template short names:";
  for (auto t : all_templates()) {
    s += "\n  " + std::string(template_short_name(t)) + " = " + std::string(template_id(t));
  }
  return s;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (const auto& part : split(csv, ',')) {
    const auto t = trim(part);
    if (t.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(t, &pos));
      if (pos != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "not an integer list: " + csv);
    }
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "empty list: " + csv);
  return out;
}

std::string label_of(const fs::path& p) {
  fs::path q = p;
  if (!q.has_filename()) q = q.parent_path();
  if (fs::is_regular_file(q)) q = q.parent_path();
  return q.filename().string();
}

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

struct Invocation {
  RunManifest manifest;
  fs::path out;
  std::function<void(Invocation&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build, train on and evaluate synthetic clones of image classification datasets."};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error")->capture_default_str();

  Invocation inv;
  for (int i = 0; i < argc; ++i) inv.manifest.argv.emplace_back(argv[i]);

  // catalog
  auto* c_catalog = app.add_subcommand("catalog", "Build a class catalog from WordNet metadata");
  fs::path wordnet_meta, classes_file, catalog_out;
  std::string catalog_name;
  c_catalog->add_option("--wordnet-meta", wordnet_meta, "JSON array of synset records")->required();
  c_catalog->add_option("--classes", classes_file, "One wnid per line, in class index order")->required();
  c_catalog->add_option("--out", catalog_out, "Output catalog.json")->required();
  c_catalog->add_option("--name", catalog_name, "Catalog name (default: classes file stem)");
  c_catalog->callback([&] {
    inv.out = catalog_out;
    inv.manifest.inputs = {wordnet_meta, classes_file};
    inv.run = [&](Invocation& self) {
      const auto list = read_class_list(classes_file);
      const auto cat = load_catalog(wordnet_meta, list,
                                    catalog_name.empty() ? classes_file.stem().string() : catalog_name);
      write_catalog(cat, catalog_out);
      self.manifest.config = {{"name", cat.name()}, {"classes", cat.size()}};
      spdlog::info("catalog {} with {} classes -> {}", cat.name(), cat.size(), catalog_out.string());
    };
  });

  // plan
  auto* c_plan = app.add_subcommand("plan", "Compile prompts and seeds into a generation plan");
  fs::path plan_catalog, counts_file, backgrounds_file, plan_out;
  std::string templates_csv = "name";
  int per_class = 0;
  std::uint64_t plan_seed = 0;
  GenParams gp;
  c_plan->add_option("--catalog", plan_catalog, "catalog.json")->required();
  c_plan->add_option("--templates", templates_csv, template_help())->capture_default_str();
  auto* o_per = c_plan->add_option("--per-class", per_class, "Images per class");
  auto* o_counts = c_plan->add_option("--counts", counts_file, "Per-class counts (JSON or 'wnid count' lines)");
  o_per->excludes(o_counts);
  c_plan->add_option("--backgrounds", backgrounds_file, "Scene list for hyper_bg");
  c_plan->add_option("--seed", plan_seed, "Plan seed")->capture_default_str();
  c_plan->add_option("--steps", gp.steps, "Diffusion steps")->capture_default_str();
  c_plan->add_option("--guidance", gp.guidance, "Guidance scale")->capture_default_str();
  c_plan->add_option("--width", gp.width, "Image width")->capture_default_str();
  c_plan->add_option("--height", gp.height, "Image height")->capture_default_str();
  c_plan->add_option("--out", plan_out, "Output plan.jsonl")->required();
  c_plan->callback([&] {
    inv.out = plan_out;
    inv.manifest.inputs = {plan_catalog};
    if (!counts_file.empty()) inv.manifest.inputs.push_back(counts_file);
    if (!backgrounds_file.empty() && fs::exists(backgrounds_file)) inv.manifest.inputs.push_back(backgrounds_file);
    inv.run = [&, o_per, o_counts](Invocation& self) {
      const auto templates = parse_template_list(templates_csv);
      const auto cat = read_catalog(plan_catalog);
      ClassCounts counts;
      if (o_counts->count() > 0) {
        counts = read_counts_file(counts_file);
      } else if (o_per->count() > 0) {
        counts = uniform_counts(cat, per_class);
      } else {
        fail(ErrorCode::kInvalidArgument, "one of --per-class or --counts is required");
      }
      std::optional<BackgroundSet> bg;
      if (!backgrounds_file.empty()) bg = BackgroundSet::load(backgrounds_file);
      const auto plan = build_plan(cat, templates, counts, bg ? &*bg : nullptr, plan_seed, gp);
      write_plan(plan, plan_out);
      self.manifest.config = {{"templates", templates_csv}, {"seed", plan_seed},
                              {"steps", gp.steps}, {"guidance", gp.guidance},
                              {"width", gp.width}, {"height", gp.height},
                              {"records", plan.records.size()}};
      spdlog::info("plan with {} records -> {}", plan.records.size(), plan_out.string());
    };
  });

  // generate
  auto* c_gen = app.add_subcommand("generate", "Render a plan into a dataset store");
  fs::path gen_plan, gen_out, gen_catalog;
  std::string backend_name = "mock";
  std::string format_name = "png";
  RunOptions run_opts;
  c_gen->add_option("--plan", gen_plan, "plan.jsonl")->required();
  c_gen->add_option("--backend", backend_name, "mock|http (http reads DATASETCLONE_BACKEND_URL/_TOKEN)")
      ->check(CLI::IsMember({"mock", "http"}))
      ->capture_default_str();
  c_gen->add_option("--workers", run_opts.workers, "Concurrent requests")->capture_default_str();
  c_gen->add_option("--out-dir", gen_out, "Store directory")->required();
  c_gen->add_flag("--resume", run_opts.resume, "Continue an interrupted run");
  c_gen->add_option("--format", format_name, "png|jpeg")->check(CLI::IsMember({"png", "jpeg"}))->capture_default_str();
  c_gen->add_option("--jpeg-quality", run_opts.jpeg_quality, "JPEG quality")->capture_default_str();
  c_gen->add_option("--catalog", gen_catalog, "catalog.json, to record class names in the manifest");
  c_gen->callback([&] {
    inv.out = gen_out / "manifest.jsonl";
    inv.manifest.inputs = {gen_plan};
    inv.run = [&](Invocation& self) {
      const auto plan = read_plan(gen_plan);
      run_opts.format = parse_image_format(format_name);
      std::unique_ptr<Backend> backend;
      if (backend_name == "mock") {
        backend = std::make_unique<MockBackend>();
      } else {
        backend = std::make_unique<HttpBackend>(HttpBackendConfig::from_env());
      }
      std::optional<ClassCatalog> cat;
      if (!gen_catalog.empty()) cat = read_catalog(gen_catalog);
      const auto header = manifest_header_for(plan, cat ? &*cat : nullptr);
      const bool existing = fs::exists(gen_out / "manifest.jsonl");
      DatasetStore store = run_opts.resume && existing ? DatasetStore::open(gen_out)
                                                       : DatasetStore::create(gen_out, header);
      std::size_t last_pct = 0;
      run_opts.on_progress = [&](std::size_t done, std::size_t total) {
        const std::size_t pct = total == 0 ? 100 : done * 10 / total;
        if (pct != last_pct) {
          last_pct = pct;
          spdlog::info("generated {}/{}", done, total);
        }
      };
      const auto rep = run_plan(plan, *backend, store, run_opts);
      self.manifest.config = {{"backend", backend->id()}, {"workers", run_opts.workers},
                              {"resume", run_opts.resume}, {"format", format_name},
                              {"completed", rep.completed}, {"failed", rep.failed},
                              {"skipped", rep.skipped}};
      spdlog::info("completed {} failed {} skipped {}", rep.completed, rep.failed, rep.skipped);
      if (rep.failed > 0) spdlog::warn("{} records failed; rerun with --resume to retry them", rep.failed);
    };
  });

  // verify
  auto* c_verify = app.add_subcommand("verify", "Check a store's manifest against its files");
  fs::path verify_dir, verify_out;
  c_verify->add_option("--manifest", verify_dir, "Store directory")->required();
  c_verify->add_option("--out", verify_out, "Optional JSON report");
  c_verify->callback([&] {
    inv.out = verify_out;
    inv.manifest.inputs = {verify_dir / "manifest.jsonl"};
    inv.run = [&](Invocation& self) {
      const auto rep = verify(verify_dir);
      const auto j = to_json(rep);
      if (!verify_out.empty()) write_json(verify_out, j);
      std::cout << j.dump(2) << "\n";
      self.manifest.config = {{"integrity_errors", rep.integrity_errors()}};
      if (rep.integrity_errors() > 0) {
        fail(ErrorCode::kIntegrity, std::to_string(rep.integrity_errors()) + " integrity errors");
      }
    };
  });

  // train
  auto* c_train = app.add_subcommand("train", "Train an encoder and classifier on a store or image folder");
  fs::path train_data, train_config_path, train_out;
  std::optional<int> epochs_override;
  std::optional<std::uint64_t> seed_override;
  c_train->add_option("--manifest", train_data, "Store directory (or ImageFolder root)")->required();
  c_train->add_option("--config", train_config_path, "train.yaml");
  c_train->add_option("--out", train_out, "Checkpoint directory")->required();
  c_train->add_option("--epochs", epochs_override, "Override config epochs");
  c_train->add_option("--seed", seed_override, "Override config seed");
  c_train->callback([&] {
    inv.out = train_out / "checkpoint.json";
    inv.manifest.inputs = {train_data / "manifest.jsonl"};
    if (!fs::exists(inv.manifest.inputs.front())) inv.manifest.inputs = {train_data};
    if (!train_config_path.empty()) inv.manifest.inputs.push_back(train_config_path);
    inv.run = [&](Invocation& self) {
      TrainConfig cfg = train_config_path.empty() ? TrainConfig{} : load_train_config(train_config_path);
      if (epochs_override) cfg.epochs = *epochs_override;
      if (seed_override) cfg.seed = *seed_override;
      validate(cfg);
      const auto data = DatasetView::open(train_data);
      Checkpoint ck = train(data, cfg);
      if (fs::exists(train_data / "manifest.jsonl")) ck.catalog_name = read_manifest(train_data / "manifest.jsonl").header.catalog_name;
      save_checkpoint(ck, train_out);
      self.manifest.config = to_json(cfg);
    };
  });

  // eval
  auto* c_eval = app.add_subcommand("eval", "Top-k accuracy of a checkpoint on a labeled image set");
  fs::path eval_ckpt, eval_data, mask_file, eval_out;
  std::string topk_csv = "1,5";
  bool mask_logits = true;
  int eval_res = 0;
  std::string eval_model, eval_dataset;
  c_eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory or file")->required();
  c_eval->add_option("--dataset", eval_data, "Store directory or ImageFolder root")->required();
  c_eval->add_option("--topk", topk_csv, "Comma-separated k values")->capture_default_str();
  c_eval->add_option("--class-mask", mask_file, "Classes present in a restricted test set");
  c_eval->add_option("--mask-logits", mask_logits, "Rank only masked classes")->capture_default_str();
  c_eval->add_option("--resolution", eval_res, "Eval resolution (default: checkpoint eval size)");
  c_eval->add_option("--model-name", eval_model, "Label for reports (default: checkpoint dir name)");
  c_eval->add_option("--dataset-name", eval_dataset, "Label for reports (default: dataset dir name)");
  c_eval->add_option("--out", eval_out, "report.json")->required();
  c_eval->callback([&] {
    inv.out = eval_out;
    inv.manifest.inputs = {eval_ckpt, eval_data};
    if (!mask_file.empty()) inv.manifest.inputs.push_back(mask_file);
    inv.run = [&](Invocation& self) {
      Checkpoint ck = load_checkpoint(eval_ckpt);
      const auto data = DatasetView::open(eval_data, &ck.classes);
      std::optional<ClassMask> mask;
      if (!mask_file.empty()) mask = read_class_mask(mask_file, ck.classes);
      EvalOptions eo;
      eo.ks = parse_int_list(topk_csv);
      eo.mask = mask ? &*mask : nullptr;
      eo.mask_logits = mask_logits;
      eo.resolution = eval_res;
      EvalReport rep = evaluate_topk(ck, data, eo);
      rep.model = eval_model.empty() ? label_of(eval_ckpt) : eval_model;
      rep.dataset = eval_dataset.empty() ? label_of(eval_data) : eval_dataset;
      write_json(eval_out, to_json(rep));
      self.manifest.config = {{"topk", eo.ks}, {"mask_logits", mask_logits}, {"resolution", rep.resolution}};
      for (const auto& [k, acc] : rep.accuracy) spdlog::info("top{} = {:.4f}", k, acc);
    };
  });

  // features
  auto* c_feat = app.add_subcommand("features", "Extract frozen encoder features");
  fs::path feat_ckpt, feat_data, feat_out;
  ExtractOptions xo;
  c_feat->add_option("--checkpoint", feat_ckpt, "Checkpoint directory or file")->required();
  c_feat->add_option("--dataset", feat_data, "Store directory or ImageFolder root")->required();
  c_feat->add_option("--resolution", xo.resolution, "Shorter side and crop size")->capture_default_str();
  c_feat->add_option("--workers", xo.workers, "Extraction threads")->capture_default_str();
  c_feat->add_option("--out", feat_out, "feats.bin")->required();
  c_feat->callback([&] {
    inv.out = feat_out;
    inv.manifest.inputs = {feat_ckpt, feat_data};
    inv.run = [&](Invocation& self) {
      const Checkpoint ck = load_checkpoint(feat_ckpt);
      const auto data = DatasetView::open(feat_data);
      const auto fm = extract_features(ck, data, xo);
      write_feature_matrix(fm, feat_out);
      self.manifest.config = {{"resolution", xo.resolution}, {"n", fm.n}, {"d", fm.d},
                              {"skipped", fm.meta.at("skipped").size()}};
    };
  });

  // probe
  auto* c_probe = app.add_subcommand("probe", "Linear-probe transfer accuracy with hyperparameter search");
  fs::path probe_train, probe_test, probe_out;
  ProbeOptions po;
  std::string probe_model, probe_dataset;
  c_probe->add_option("--train-feats", probe_train, "Training FeatureMatrix")->required();
  c_probe->add_option("--test-feats", probe_test, "Test FeatureMatrix")->required();
  c_probe->add_option("--trials", po.n_trials, "Tuning trials")->capture_default_str();
  c_probe->add_option("--seed", po.seed, "Split and search seed")->capture_default_str();
  c_probe->add_option("--sgd-threshold", po.sgd_threshold, "Training rows above which SGD replaces L-BFGS")
      ->capture_default_str();
  c_probe->add_option("--model-name", probe_model, "Label for reports");
  c_probe->add_option("--dataset-name", probe_dataset, "Label for reports");
  c_probe->add_option("--out", probe_out, "report.json")->required();
  c_probe->callback([&] {
    inv.out = probe_out;
    inv.manifest.inputs = {probe_train, probe_test};
    inv.run = [&](Invocation& self) {
      const auto tr = read_feature_matrix(probe_train);
      const auto te = read_feature_matrix(probe_test);
      const auto res = linear_probe(tr, te, po);
      auto j = to_json(res);
      j["model"] = probe_model.empty() ? te.meta.value("encoder_id", std::string{}) : probe_model;
      j["dataset"] = probe_dataset.empty() ? probe_test.stem().string() : probe_dataset;
      write_json(probe_out, j);
      self.manifest.config = {{"trials", po.n_trials}, {"seed", po.seed}, {"solver", res.solver}};
      spdlog::info("probe accuracy {:.4f} ({}, {} trials)", res.accuracy, res.solver, res.trials.size());
    };
  });

  // analyze
  auto* c_an = app.add_subcommand("analyze", "Representation statistics of a FeatureMatrix");
  fs::path an_feats, an_out;
  std::string metrics_csv = "sparsity,intra,redundancy,coding";
  AnalysisParams ap;
  c_an->add_option("--feats", an_feats, "FeatureMatrix")->required();
  c_an->add_option("--metrics", metrics_csv, "sparsity,intra,redundancy,coding")->capture_default_str();
  c_an->add_option("--threshold", ap.threshold, "Sparsity threshold")->capture_default_str();
  c_an->add_option("--eps2", ap.eps2, "Coding length precision")->capture_default_str();
  c_an->add_option("--log-base", ap.log_base, "Coding length log base (default: natural)");
  c_an->add_option("--dataset-group", ap.dataset_group, "Tag stored in the report");
  c_an->add_option("--out", an_out, "metrics.json")->required();
  c_an->callback([&] {
    inv.out = an_out;
    inv.manifest.inputs = {an_feats};
    inv.run = [&](Invocation& self) {
      const auto fm = read_feature_matrix(an_feats);
      if (ap.dataset_group.empty()) ap.dataset_group = an_feats.stem().string();
      const auto rep = analyze(fm, parse_metric_list(metrics_csv), ap);
      write_json(an_out, to_json(rep));
      self.manifest.config = {{"metrics", metrics_csv}, {"threshold", ap.threshold}, {"eps2", ap.eps2}};
      if (rep.zero_rows > 0) spdlog::warn("{} all-zero feature rows", rep.zero_rows);
    };
  });

  // report
  auto* c_rep = app.add_subcommand("report", "Render JSON reports as a Markdown table or spider SVG");
  std::string inputs_csv, style = "table", metric = "top5";
  fs::path rep_out;
  c_rep->add_option("--inputs", inputs_csv, "Comma-separated report JSON files")->required();
  c_rep->add_option("--style", style, "table|spider")->check(CLI::IsMember({"table", "spider"}))->capture_default_str();
  c_rep->add_option("--metric", metric, "Metric plotted by the spider chart")->capture_default_str();
  c_rep->add_option("--out", rep_out, "out.md or out.svg")->required();
  c_rep->callback([&] {
    inv.out = rep_out;
    for (const auto& p : split(inputs_csv, ',')) {
      if (!trim(p).empty()) inv.manifest.inputs.emplace_back(trim(p));
    }
    inv.run = [&](Invocation& self) {
      const auto cells = load_report_cells(self.manifest.inputs);
      const std::string body = style == "table" ? render_table(cells) : render_spider(cells, metric);
      if (rep_out.has_parent_path()) fs::create_directories(rep_out.parent_path());
      write_file_atomic(rep_out, body);
      self.manifest.config = {{"style", style}, {"metric", metric}};
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::debug("kernels: {}", kernels::isa_name(kernels::active().isa));

  inv.manifest.command = app.get_subcommands().front()->get_name();
  inv.manifest.started_at = std::chrono::system_clock::now();
  int code = 0;
  try {
    inv.run(inv);
  } catch (const Error& e) {
    std::cerr << "error: code=" << error_code_name(e.code()) << " message=" << ordered_json(e.what()).dump() << "\n";
    inv.manifest.error = std::string(error_code_name(e.code())) + ": " + e.what();
    code = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: code=E_INTERNAL message=" << ordered_json(e.what()).dump() << "\n";
    inv.manifest.error = std::string("E_INTERNAL: ") + e.what();
    code = 3;
  }
  inv.manifest.finished_at = std::chrono::system_clock::now();
  inv.manifest.exit_code = code;
  if (code == 0 && !inv.out.empty()) inv.manifest.outputs = {inv.out};
  if (!inv.out.empty()) {
    try {
      write_run_manifest(inv.manifest, inv.out);
    } catch (const std::exception& e) {
      spdlog::warn("could not write run manifest: {}", e.what());
    }
  }
  return code;
}
