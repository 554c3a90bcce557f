// melkit CLI: prepare | enhance-er | encode | train | eval | link | report
//
// Every subcommand takes --config <file> (flat key = value text) and an
// optional --seed override. Failures print a machine-readable JSON error line
// to stderr and exit 1; usage errors exit 2.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "melkit/attributes.hpp"
#include "melkit/checkpoint.hpp"
#include "melkit/config.hpp"
#include "melkit/datamodel.hpp"
#include "melkit/erpipeline.hpp"
#include "melkit/feature_store.hpp"
#include "melkit/http_clients.hpp"
#include "melkit/toy_encoder.hpp"
#include "melkit/trainer.hpp"

namespace {

using nlohmann::json;

struct CommonOptions {
  std::string config_path;
  std::optional<long> seed;
};

mel::RunConfig resolved_config(const CommonOptions& common) {
  mel::RunConfig cfg = common.config_path.empty() ? mel::parse_config_text("")
                                                  : mel::load_config(common.config_path);
  if (common.seed) cfg.seed = static_cast<std::uint64_t>(*common.seed);
  return cfg;
}

std::vector<float> to_f32(const Eigen::VectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  return out;
}

void ensure_out_dir(const mel::RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

int cmd_prepare(const CommonOptions& common, const std::string& out_override) {
  const mel::RunConfig cfg = resolved_config(common);
  if (cfg.samples.empty()) throw std::runtime_error("prepare: config key 'samples' is required");
  const auto samples = mel::load_samples(cfg.samples);

  std::optional<mel::FixtureAttributeProvider> provider;
  if (!cfg.attributes.empty()) provider.emplace(cfg.attributes);

  mel::FeatureMap store;
  std::size_t prompts = 0;
  for (const auto& s : samples) {
    store[mel::mention_key(s.sample_id)] =
        to_f32(mel::toy_encode_text(s.mention, cfg.seed, cfg.d_in));
    store[mel::text_key(s.sample_id)] = to_f32(mel::toy_encode_text(s.text, cfg.seed, cfg.d_in));
    if (!provider || !s.image_ref) continue;

    const mel::ImageAttributes attrs = provider->fetch(*s.image_ref);
    for (const auto& face : attrs.faces) {
      const std::string prompt = mel::render_face_prompt(s.mention, face);
      store[mel::face_key(s.sample_id, face.object_index)] =
          to_f32(mel::toy_encode_text(prompt, cfg.seed, cfg.d_in));
      ++prompts;
    }
    const auto kept = mel::filter_identities(attrs.identities, cfg.identity_threshold);
    std::map<int, std::vector<mel::IdentityGuess>> by_object;
    for (const auto& guess : kept) by_object[guess.object_index].push_back(guess);
    for (const auto& [object_index, guesses] : by_object) {
      const std::string prompt = mel::render_identity_prompt(s.mention, guesses);
      store[mel::identity_key(s.sample_id, object_index)] =
          to_f32(mel::toy_encode_text(prompt, cfg.seed, cfg.d_in));
      ++prompts;
    }
  }

  ensure_out_dir(cfg);
  const std::filesystem::path out = out_override.empty()
                                        ? std::filesystem::path(cfg.out_dir) / "text_features.fstore"
                                        : std::filesystem::path(out_override);
  mel::write_feature_store(store, out);
  std::cout << json{{"written", out.string()},
                    {"samples", samples.size()},
                    {"vectors", store.size()},
                    {"prompt_vectors", prompts}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_encode(const CommonOptions& common, const std::string& out_override) {
  const mel::RunConfig cfg = resolved_config(common);
  if (cfg.entities.empty()) throw std::runtime_error("encode: config key 'entities' is required");
  const auto entities = mel::load_entities(cfg.entities);

  mel::FeatureMap store;
  std::size_t skipped = 0;
  for (const auto& e : entities) {
    if (e.er_text.empty()) {
      ++skipped;  // flagged by validate; an entity without ER cannot be encoded
      continue;
    }
    store[mel::entity_key(e.qid)] = to_f32(mel::toy_encode_text(e.er_text, cfg.seed, cfg.d_in));
  }

  ensure_out_dir(cfg);
  const std::filesystem::path out = out_override.empty()
                                        ? std::filesystem::path(cfg.out_dir) / "entity_features.fstore"
                                        : std::filesystem::path(out_override);
  mel::write_feature_store(store, out);
  std::cout << json{{"written", out.string()}, {"entities", store.size()}, {"skipped_empty_er", skipped}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_enhance_er(const CommonOptions& common, const std::string& mode,
                   const std::string& entities_path, const std::string& out_path) {
  const mel::RunConfig cfg = resolved_config(common);
  const auto entities = mel::load_entities(entities_path);

  std::unique_ptr<mel::KbClient> kb;
  if (!cfg.kb_fixture.empty()) {
    kb = std::make_unique<mel::FixtureKbClient>(cfg.kb_fixture);
  } else if (const char* endpoint = std::getenv("MELKIT_KB_ENDPOINT");
             endpoint != nullptr && *endpoint != '\0') {
    kb = std::make_unique<mel::HttpKbClient>(endpoint);
  } else {
    throw std::runtime_error(
        "enhance-er: set config key 'kb_fixture' or environment MELKIT_KB_ENDPOINT");
  }

  std::optional<mel::ErCache> cache;
  if (!cfg.cache_dir.empty()) cache.emplace(cfg.cache_dir);

  mel::CallThrottle kb_throttle(std::chrono::milliseconds(cfg.min_client_interval_ms));
  mel::ThrottledKbClient throttled_kb(*kb, kb_throttle);
  mel::KbClient& kb_ref = cfg.min_client_interval_ms > 0
                              ? static_cast<mel::KbClient&>(throttled_kb)
                              : *kb;

  mel::EnhancementRun run;
  if (mode == "static") {
    run = mel::run_static_enhancement(entities, kb_ref, cfg.max_er_tokens,
                                      cache ? &*cache : nullptr);
  } else {
    std::unique_ptr<mel::LlmClient> llm;
    if (!cfg.llm_fixture.empty()) {
      llm = std::make_unique<mel::FixtureLlmClient>(cfg.llm_fixture);
    } else if (const char* endpoint = std::getenv("MELKIT_LLM_ENDPOINT");
               endpoint != nullptr && *endpoint != '\0') {
      llm = std::make_unique<mel::HttpLlmClient>(endpoint);
    } else {
      throw std::runtime_error(
          "enhance-er: set config key 'llm_fixture' or environment MELKIT_LLM_ENDPOINT");
    }
    mel::CallThrottle llm_throttle(std::chrono::milliseconds(cfg.min_client_interval_ms));
    mel::ThrottledLlmClient throttled_llm(*llm, llm_throttle);
    mel::LlmClient& llm_ref = cfg.min_client_interval_ms > 0
                                  ? static_cast<mel::LlmClient&>(throttled_llm)
                                  : *llm;
    mel::RetryingLlmClient retrying(llm_ref);
    const mel::RefusalDetector detector = mel::RefusalDetector::load(cfg.refusal_patterns);
    run = mel::run_dynamic_enhancement(entities, retrying, kb_ref, detector, cfg.max_er_tokens,
                                       cache ? &*cache : nullptr);
  }

  mel::save_entities(run.entities, out_path);
  std::cout << run.report.to_json() << "\n";
  return 0;
}

struct LoadedRun {
  mel::RunConfig cfg;
  mel::LinkedDataset data;
  mel::FeatureMap features;
};

LoadedRun load_run(const CommonOptions& common) {
  LoadedRun run;
  run.cfg = resolved_config(common);
  if (run.cfg.samples.empty() || run.cfg.entities.empty())
    throw std::runtime_error("config keys 'samples' and 'entities' are required");
  auto samples = mel::load_samples(run.cfg.samples);
  auto entities = mel::load_entities(run.cfg.entities);

  const mel::ValidationReport report = mel::validate_dataset(samples, entities);
  if (report.missing_gold_count > 0) {
    std::string names;
    for (const auto& sid : report.samples_with_missing_gold) {
      if (!names.empty()) names += ", ";
      names += sid;
    }
    throw std::runtime_error("dataset validation failed; samples with unresolved gold: " + names);
  }
  if (report.empty_er_count > 0)
    std::cerr << json{{"warning", "entities with empty enhanced ER (drop candidates)"},
                      {"count", report.empty_er_count}}
                     .dump()
              << "\n";

  std::vector<mel::MentionSample> dev;
  if (!run.cfg.dev_samples.empty()) dev = mel::load_samples(run.cfg.dev_samples);
  run.features = mel::read_feature_stores(run.cfg.feature_store_paths());
  run.data = mel::prepare_dataset(run.cfg, std::move(samples), std::move(dev), std::move(entities));
  return run;
}

int cmd_train(const CommonOptions& common) {
  LoadedRun run = load_run(common);
  ensure_out_dir(run.cfg);
  const std::filesystem::path out_dir(run.cfg.out_dir);

  {
    std::ofstream cfg_out(out_dir / "run_config.txt", std::ios::trunc);
    cfg_out << mel::serialize_config(run.cfg);
  }
  std::ofstream log(out_dir / "loss_log.txt", std::ios::trunc);
  const mel::TrainOutcome<float> outcome =
      mel::train_model<float>(run.cfg, run.data, run.features, &log);

  mel::Checkpoint ckpt;
  ckpt.params = mel::cast_params<float, double>(outcome.best_params);
  ckpt.step = outcome.best_step;
  ckpt.dev_t1 = outcome.best_t1;
  ckpt.signature = mel::model_signature(run.cfg);
  ckpt.config_text = mel::serialize_config(run.cfg);
  const std::filesystem::path ckpt_path = out_dir / "best.ckpt";
  mel::save_checkpoint(ckpt, ckpt_path);

  std::cout << json{{"checkpoint", ckpt_path.string()},
                    {"steps", outcome.steps_run},
                    {"best_step", outcome.best_step},
                    {"best_dev_t1", outcome.best_t1},
                    {"first_loss", outcome.first_loss},
                    {"last_loss", outcome.last_loss}}
                   .dump()
            << "\n";
  return 0;
}

json metrics_to_json(const mel::EvalMetrics& metrics, const mel::RunConfig& cfg,
                     const std::string& dataset, const std::string& split) {
  json topk = json::object();
  for (const auto& [k, acc] : metrics.topk) topk[std::to_string(k)] = acc;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(mel::model_signature(cfg)));
  return json{{"dataset", dataset}, {"split", split},       {"n", metrics.n},
              {"lambda", cfg.lambda}, {"config_hash", hash}, {"topk", topk}};
}

void print_metrics_table(const std::vector<json>& rows) {
  std::printf("%-28s %-8s %6s %6s  %7s %7s %7s %7s\n", "dataset", "split", "n", "lambda", "T@1",
              "T@5", "T@10", "T@20");
  for (const auto& row : rows) {
    const auto& topk = row.at("topk");
    auto col = [&](const char* k) {
      return topk.contains(k) ? topk.at(k).get<double>() * 100.0 : 0.0;
    };
    std::printf("%-28s %-8s %6zu %6d  %7.2f %7.2f %7.2f %7.2f\n",
                row.at("dataset").get<std::string>().c_str(),
                row.at("split").get<std::string>().c_str(), row.at("n").get<std::size_t>(),
                row.at("lambda").get<int>(), col("1"), col("5"), col("10"), col("20"));
  }
}

int cmd_eval(const CommonOptions& common, const std::string& checkpoint_path,
             const std::string& samples_override, const std::string& out_path, int workers) {
  LoadedRun run = [&] {
    if (samples_override.empty()) return load_run(common);
    mel::RunConfig cfg = resolved_config(common);
    cfg.samples = samples_override;
    cfg.dev_samples.clear();
    cfg.dev_fraction = 0.0;  // evaluate the whole file
    LoadedRun r;
    r.cfg = cfg;
    auto samples = mel::load_samples(cfg.samples);
    auto entities = mel::load_entities(cfg.entities);
    r.features = mel::read_feature_stores(cfg.feature_store_paths());
    r.data = mel::prepare_dataset(cfg, std::move(samples), {}, std::move(entities));
    return r;
  }();

  const mel::Checkpoint ckpt =
      mel::load_checkpoint(checkpoint_path, mel::model_signature(run.cfg));
  const mel::ModelParams<float> params = mel::cast_params<double, float>(ckpt.params);

  const bool eval_dev = samples_override.empty() && !run.data.dev.empty();
  const auto& samples = eval_dev ? run.data.dev : run.data.train;
  if (samples.empty()) throw std::runtime_error("eval: no samples to evaluate");
  const mel::EvalMetrics metrics =
      mel::evaluate(params, run.cfg, std::span<const mel::MentionSample>(samples), run.features,
                    run.data.candidates, workers);

  const std::string dataset = samples_override.empty() ? run.cfg.samples : samples_override;
  const json row = metrics_to_json(metrics, run.cfg, dataset, eval_dev ? "dev" : "all");
  print_metrics_table({row});
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    out << row.dump(2) << "\n";
  }
  return 0;
}

int cmd_link(const CommonOptions& common, const std::string& checkpoint_path,
             const std::string& sample_id, std::size_t top_k) {
  LoadedRun run = load_run(common);
  const mel::Checkpoint ckpt =
      mel::load_checkpoint(checkpoint_path, mel::model_signature(run.cfg));
  const mel::ModelParams<float> params = mel::cast_params<double, float>(ckpt.params);

  const mel::MentionSample* sample = nullptr;
  for (const auto* pool : {&run.data.train, &run.data.dev}) {
    for (const auto& s : *pool)
      if (s.sample_id == sample_id) sample = &s;
  }
  if (sample == nullptr) throw std::runtime_error("link: unknown sample_id '" + sample_id + "'");

  const auto entries =
      mel::link_sample(params, run.cfg, *sample, run.features,
                       run.data.candidates.at(sample_id), run.data.entity_by_qid, top_k);
  // One candidate per line: entity name and cosine to two decimals.
  for (const auto& e : entries) std::printf("%s %.2f\n", e.name.c_str(), e.cosine);
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs) {
  std::vector<json> rows;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report: cannot open " + path);
    json row = json::parse(in, nullptr, false);
    if (row.is_discarded()) throw std::runtime_error("report: malformed metrics file " + path);
    rows.push_back(std::move(row));
  }
  print_metrics_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal entity linking toolkit"};
  app.require_subcommand(1);

  CommonOptions common;
  app.add_option("--config", common.config_path, "run config file (key = value lines)");
  app.add_option("--seed", common.seed, "override the config seed");

  auto* prepare = app.add_subcommand("prepare", "encode sample texts and attribute prompts");
  std::string prepare_out;
  prepare->add_option("--out", prepare_out, "output feature store path");

  auto* encode = app.add_subcommand("encode", "encode entity representations");
  std::string encode_out;
  encode->add_option("--out", encode_out, "output feature store path");

  auto* enhance = app.add_subcommand("enhance-er", "build enhanced entity representations");
  std::string mode, enhance_entities, enhance_out;
  enhance->add_option("--mode", mode, "static | dynamic")
      ->required()
      ->check(CLI::IsMember({"static", "dynamic"}));
  enhance->add_option("--entities", enhance_entities, "input entity file")->required();
  enhance->add_option("--out", enhance_out, "output entity file")->required();

  auto* train = app.add_subcommand("train", "train the matcher");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (T@k table)");
  std::string eval_ckpt, eval_samples, eval_out;
  int eval_workers = 1;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--samples", eval_samples, "evaluate this sample file instead of the dev split");
  eval->add_option("--out", eval_out, "write metrics JSON here");
  eval->add_option("--workers", eval_workers, "parallel evaluation workers");

  auto* link = app.add_subcommand("link", "rank candidates for one sample");
  std::string link_ckpt, link_sample_id;
  std::size_t link_top = 5;
  link->add_option("--checkpoint", link_ckpt, "checkpoint file")->required();
  link->add_option("--sample-id", link_sample_id, "sample to link")->required();
  link->add_option("--top", link_top, "how many candidates to print");

  auto* report = app.add_subcommand("report", "merge eval metric files into one table");
  std::vector<std::string> report_inputs;
  report->add_option("--inputs", report_inputs, "metrics JSON files")->required()->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(common, prepare_out);
    if (encode->parsed()) return cmd_encode(common, encode_out);
    if (enhance->parsed()) return cmd_enhance_er(common, mode, enhance_entities, enhance_out);
    if (train->parsed()) return cmd_train(common);
    if (eval->parsed()) return cmd_eval(common, eval_ckpt, eval_samples, eval_out, eval_workers);
    if (link->parsed()) return cmd_link(common, link_ckpt, link_sample_id, link_top);
    if (report->parsed()) return cmd_report(report_inputs);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}
