// Operator surface for the KGT pipeline: dataset prep, structural
// pre-training, text embedding, end-to-end training, evaluation, ablations,
// gamma sweeps, and report rendering.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "kgt/config.hpp"
#include "kgt/embed_client.hpp"
#include "kgt/evaluator.hpp"
#include "kgt/kge.hpp"
#include "kgt/manifest.hpp"
#include "kgt/model.hpp"
#include "kgt/trainer.hpp"

namespace fs = std::filesystem;
using namespace kgt;

namespace {

struct CommonArgs {
  std::string dataset;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string policy = "all-splits";
};

FilterPolicy parse_policy(const std::string& s) {
  if (s == "all-splits") return FilterPolicy::all_splits;
  if (s == "train-only") return FilterPolicy::train_only;
  throw UsageError("unknown filter policy: " + s + " (expected all-splits|train-only)");
}

Config load_config(const std::string& path) {
  Config cfg;
  if (!path.empty()) cfg = Config::load(path);
  cfg.validate_keys(known_config_keys());
  return cfg;
}

KnowledgeGraph load_graph(const std::string& dataset) {
  if (dataset.empty()) throw UsageError("--dataset is required");
  KnowledgeGraph kg = load_dataset(dataset);
  augment_inverses(kg);
  return kg;
}

FeatureMatrix require_features(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw DataError("missing artifact " + path.string() + "; produce it with `kgt " + producer + "`");
  return load_features(path);
}

FeatureBank load_bank(const std::string& text_dir, const std::string& struct_dir) {
  if (text_dir.empty()) throw UsageError("--text-features is required");
  if (struct_dir.empty()) throw UsageError("--struct-features is required");
  FeatureBank bank;
  bank.entity_text = require_features(fs::path(text_dir) / "entity_text.kgtf", "embed-text");
  bank.relation_text = require_features(fs::path(text_dir) / "relation_text.kgtf", "embed-text");
  bank.entity_struct = require_features(fs::path(struct_dir) / "entity_struct.kgtf", "train-kge");
  bank.relation_struct = require_features(fs::path(struct_dir) / "relation_struct.kgtf", "train-kge");
  return bank;
}

ModelConfig model_config_from(const Config& cfg, const CommonArgs& args, const std::string& prompt_mode,
                              const FeatureBank& bank) {
  ModelConfig mc;
  mc.tf.d = cfg.get_uint("d", 128);
  mc.tf.layers = cfg.get_uint("layers", 2);
  mc.tf.heads = cfg.get_uint("heads", 4);
  mc.tf.ffn_mult = cfg.get_uint("ffn_mult", 4);
  mc.tf.max_seq_len = cfg.get_uint("max_seq_len", 128);
  mc.lora_rank = cfg.get_uint("lora_rank", 8);
  mc.text_dropout = cfg.get_double("text_dropout", 0.2);
  mc.struct_dropout = cfg.get_double("struct_dropout", 0.4);
  mc.attn_lora = cfg.get_bool("attn_lora", false);
  mc.attn_lora_rank = cfg.get_uint("attn_lora_rank", 8);
  mc.attn_lora_alpha = cfg.get_double("attn_lora_alpha", 16.0);
  const std::string gm = cfg.get_string("gamma_mode", "learnable");
  if (gm == "learnable")
    mc.scaler_mode = ScalerMode::learnable;
  else if (gm == "fixed")
    mc.scaler_mode = ScalerMode::fixed_ratio;
  else
    throw UsageError("gamma_mode must be learnable|fixed, got " + gm);
  mc.gamma = cfg.get_double("gamma", 1.0);
  mc.prompt_mode = parse_prompt_mode(prompt_mode.empty() ? cfg.get_string("prompt_mode", "minimal")
                                                         : prompt_mode);
  mc.seed = args.seed_set ? args.seed : cfg.get_uint("seed", 0);
  if (cfg.has("d_t") && cfg.get_uint("d_t", 0) != bank.d_t())
    throw DataError("config d_t disagrees with the textual feature files");
  if (cfg.has("d_s") && cfg.get_uint("d_s", 0) != bank.d_s())
    throw DataError("config d_s disagrees with the structural feature files");
  return mc;
}

TrainConfig train_config_from(const Config& cfg, const CommonArgs& args) {
  TrainConfig tc;
  tc.epochs = cfg.get_uint("epochs", 8);
  tc.batch_size = cfg.get_uint("batch_size", 32);
  tc.learning_rate = cfg.get_double("learning_rate", 2e-4);
  tc.beta1 = cfg.get_double("beta1", 0.9);
  tc.beta2 = cfg.get_double("beta2", 0.999);
  tc.adam_eps = cfg.get_double("adam_eps", 1e-8);
  tc.weight_decay = cfg.get_double("weight_decay", 0.0);
  tc.grad_clip_norm = cfg.get_double("grad_clip_norm", 1.0);
  tc.seed = args.seed_set ? args.seed : cfg.get_uint("seed", 0);
  tc.valid_every = cfg.get_uint("valid_every", 0);
  return tc;
}

void print_aggregates(const std::string& tag, const RankAggregates& a) {
  std::printf("%-10s MRR %.4f  H@1 %.4f  H@3 %.4f  H@10 %.4f  (%zu queries)\n", tag.c_str(), a.mrr,
              a.hits1, a.hits3, a.hits10, a.count);
}

// ---- subcommands ----

int cmd_prepare(const CommonArgs& args) {
  load_config(args.config);  // key validation only
  const KnowledgeGraph kg = load_graph(args.dataset);
  const FilterPolicy policy = parse_policy(args.policy);
  const FilterIndex filter = build_filter_index(kg, policy);
  fs::create_directories(args.out);
  RunManifest manifest("prepare", args.out);
  manifest.set("dataset", args.dataset);
  manifest.set("filter_policy", policy_name(policy));

  const fs::path ent_path = fs::path(args.out) / "entities.tsv";
  {
    std::ofstream out(ent_path);
    for (std::size_t e = 0; e < kg.num_entities(); ++e)
      out << e << "\t" << kg.entity_names[e] << "\t" << kg.entity_text[e] << "\n";
  }
  const fs::path rel_path = fs::path(args.out) / "relations.tsv";
  {
    std::ofstream out(rel_path);
    for (std::size_t r = 0; r < kg.num_relations(); ++r)
      out << r << "\t" << kg.relation_names[r] << "\t" << kg.relation_text[r] << "\n";
  }
  const fs::path filter_path = fs::path(args.out) / "filter.tsv";
  {
    std::ofstream out(filter_path);
    for (EntityId h = 0; h < kg.num_entities(); ++h)
      for (RelationId r = 0; r < kg.num_relations(); ++r) {
        const auto tails = filter.tails(h, r);
        if (tails.empty()) continue;
        out << h << "\t" << r;
        for (EntityId t : tails) out << "\t" << t;
        out << "\n";
      }
  }
  manifest.add_output(ent_path);
  manifest.add_output(rel_path);
  manifest.add_output(filter_path);
  manifest.set_uint("entities", kg.num_entities());
  manifest.set_uint("relations_augmented", kg.num_relations());
  manifest.set_uint("train_triples_augmented", kg.train.size());
  manifest.write();
  std::printf("prepared %zu entities, %zu augmented relations, %zu/%zu/%zu triples\n",
              kg.num_entities(), kg.num_relations(), kg.train.size(), kg.valid.size(),
              kg.test.size());
  return 0;
}

int cmd_train_kge(const CommonArgs& args, const std::string& kind) {
  const KnowledgeGraph kg = load_graph(args.dataset);
  const Config cfg = load_config(args.config);
  KgeConfig kc;
  kc.kind = parse_kge_kind(kind.empty() ? cfg.get_string("kge_kind", "tucker") : kind);
  kc.d_s = cfg.get_uint("kge_dim", 256);
  kc.epochs = cfg.get_uint("kge_epochs", 100);
  kc.batch_size = cfg.get_uint("kge_batch_size", 128);
  kc.learning_rate = cfg.get_double("kge_learning_rate", 5e-3);
  kc.negatives_per_positive = cfg.get_uint("kge_negatives", 8);
  kc.margin = cfg.get_double("kge_margin", 1.0);
  kc.seed = args.seed_set ? args.seed : cfg.get_uint("kge_seed", 0);

  KgeModel<float> model = init_kge<float>(kg, kc);
  const KgeTrainResult result = train_kge(model, kg, kc);
  fs::create_directories(args.out);
  save_kge(model, args.out);
  {
    std::ofstream out(fs::path(args.out) / "kge_loss.csv");
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < result.epoch_losses.size(); ++i)
      out << i << "," << result.epoch_losses[i] << "\n";
  }
  RunManifest manifest("train-kge", args.out);
  manifest.set("dataset", args.dataset);
  manifest.set("kind", kge_kind_name(kc.kind));
  manifest.set_uint("seed", kc.seed);
  for (const char* f : {"entity_struct.kgtf", "relation_struct.kgtf", "kge_meta.txt", "kge_loss.csv"})
    manifest.add_output(fs::path(args.out) / f);
  manifest.write();
  if (!result.epoch_losses.empty())
    std::printf("kge %s trained %zu epochs, final loss %.4f\n", kge_kind_name(kc.kind),
                result.epoch_losses.size(), result.epoch_losses.back());
  return 0;
}

int cmd_embed_text(const CommonArgs& args, bool offline, const std::string& cache_dir,
                   std::size_t dim_flag) {
  const KnowledgeGraph kg = load_graph(args.dataset);
  const Config cfg = load_config(args.config);
  fs::create_directories(args.out);

  std::size_t dim = dim_flag ? dim_flag : cfg.get_uint("embed_dim", 1536);
  FeatureMatrix ent, rel;
  if (offline) {
    const std::uint64_t seed = args.seed_set ? args.seed : cfg.get_uint("seed", 0);
    ent = encode_text_deterministic(kg.entity_text, dim, seed);
    rel = encode_text_deterministic(kg.relation_text, dim, seed);
  } else {
    EmbeddingEndpoint ep;
    const char* env_url = std::getenv("KGT_EMBED_ENDPOINT");
    const char* env_model = std::getenv("KGT_EMBED_MODEL");
    const char* env_token = std::getenv("KGT_EMBED_TOKEN");
    ep.url = env_url ? env_url : cfg.get_string("embed_endpoint", "");
    ep.model = env_model ? env_model : cfg.get_string("embed_model", "text-embedding-3-small");
    ep.api_key = env_token ? env_token : "";
    ep.dim = dim;
    ep.batch_size = cfg.get_uint("embed_batch_size", 64);
    ep.max_retries = cfg.get_uint("embed_retries", 3);
    ep.backoff_ms = cfg.get_uint("embed_backoff_ms", 200);
    ep.concurrency = cfg.get_uint("embed_concurrency", 1);
    if (ep.url.empty())
      throw UsageError("no embedding endpoint; set KGT_EMBED_ENDPOINT or config embed_endpoint, or "
                       "pass --offline");
    const fs::path cache = cache_dir.empty() ? fs::path(args.out) / "cache" : fs::path(cache_dir);
    ent = encode_text_remote(kg.entity_text, ep, cache);
    rel = encode_text_remote(kg.relation_text, ep, cache);
  }
  save_features(ent, fs::path(args.out) / "entity_text.kgtf");
  save_features(rel, fs::path(args.out) / "relation_text.kgtf");
  RunManifest manifest("embed-text", args.out);
  manifest.set("dataset", args.dataset);
  manifest.set("mode", offline ? "offline-deterministic" : "remote");
  manifest.set_uint("dim", dim);
  manifest.add_output(fs::path(args.out) / "entity_text.kgtf");
  manifest.add_output(fs::path(args.out) / "relation_text.kgtf");
  manifest.write();
  std::printf("embedded %zu entity texts and %zu relation texts at dim %zu\n", ent.rows, rel.rows, dim);
  return 0;
}

struct TrainArgs {
  std::string text_features, struct_features;
  std::string ablation = "full";
  std::string mode;  // prompt mode override
};

int cmd_train(const CommonArgs& args, const TrainArgs& targs) {
  const AblationSetting setting = parse_ablation(targs.ablation);
  const KnowledgeGraph kg = load_graph(args.dataset);
  const Config cfg = load_config(args.config);
  const FeatureBank bank = load_bank(targs.text_features, targs.struct_features);
  const ModelConfig mc = model_config_from(cfg, args, targs.mode, bank);
  const TrainConfig tc = train_config_from(cfg, args);

  KgtModel<float> model = KgtModel<float>::create(kg, bank, mc);
  apply_ablation(model, setting);

  const FilterPolicy policy = parse_policy(args.policy);
  const FilterIndex filter = build_filter_index(kg, policy);
  std::function<double(const KgtModel<float>&)> probe;
  if (tc.valid_every > 0)
    probe = [&](const KgtModel<float>& m) {
      return evaluate(m, kg, Split::valid, filter, policy).fused.mrr;
    };

  fs::create_directories(args.out);
  const TrainResult result = train(model, tc, args.out, probe);
  RunManifest manifest("train", args.out);
  manifest.set("dataset", args.dataset);
  manifest.set("ablation", targs.ablation);
  manifest.set_uint("seed", tc.seed);
  manifest.set("prompt_mode", prompt_mode_name(mc.prompt_mode));
  manifest.add_output(fs::path(args.out) / "final.ckpt");
  manifest.add_output(fs::path(args.out) / "train_log.csv");
  manifest.write();
  if (!result.epochs.empty())
    std::printf("trained %zu epochs, final loss %.4f\n", result.epochs.size(),
                result.epochs.back().loss);
  return 0;
}

int cmd_eval(const CommonArgs& args, const TrainArgs& targs, const std::string& checkpoint,
             const std::string& split_name_arg) {
  const KnowledgeGraph kg = load_graph(args.dataset);
  const FeatureBank bank = load_bank(targs.text_features, targs.struct_features);
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(checkpoint))
    throw DataError("missing artifact " + checkpoint + "; produce it with `kgt train`");
  const KgtModel<float> model = load_checkpoint<float>(checkpoint, kg, bank);
  const FilterPolicy policy = parse_policy(args.policy);
  const FilterIndex filter = build_filter_index(kg, policy);
  Split split = Split::test;
  if (split_name_arg == "valid")
    split = Split::valid;
  else if (split_name_arg != "test")
    throw UsageError("--split must be valid|test");

  const RankReport report = evaluate(model, kg, split, filter, policy);
  fs::create_directories(args.out);
  const fs::path csv = fs::path(args.out) / ("eval_" + std::string(split_name(split)) + ".csv");
  const fs::path js = fs::path(args.out) / ("eval_" + std::string(split_name(split)) + ".json");
  write_rank_csv(report, kg, csv);
  write_summary_json(report, js);
  RunManifest manifest("eval", args.out);
  manifest.set("dataset", args.dataset);
  manifest.set("checkpoint", checkpoint);
  manifest.set("split", split_name(split));
  manifest.set("filter_policy", policy_name(policy));
  manifest.add_output(csv);
  manifest.add_output(js);
  manifest.write();
  print_aggregates("fused", report.fused);
  if (report.has_text) print_aggregates("text", report.text);
  if (report.has_struct) print_aggregates("struct", report.struct_);
  return 0;
}

int cmd_ablate(const CommonArgs& args, const TrainArgs& targs, const std::string& settings) {
  const KnowledgeGraph kg = load_graph(args.dataset);
  const Config cfg = load_config(args.config);
  const FeatureBank bank = load_bank(targs.text_features, targs.struct_features);
  const FilterPolicy policy = parse_policy(args.policy);
  const FilterIndex filter = build_filter_index(kg, policy);

  std::vector<AblationSetting> chosen;
  if (settings == "all") {
    for (const auto& [setting, name] : ablation_table()) chosen.push_back(setting);
  } else {
    std::string rest = settings;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      chosen.push_back(parse_ablation(rest.substr(0, comma)));
      rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }
  }
  if (chosen.empty()) throw UsageError("--settings selected nothing");

  fs::create_directories(args.out);
  const fs::path report_path = fs::path(args.out) / "ablation_report.csv";
  std::ofstream report(report_path);
  report << "setting,label,mrr,hits1,hits3,hits10\n";
  for (const AblationSetting setting : chosen) {
    const ModelConfig mc = model_config_from(cfg, args, targs.mode, bank);
    const TrainConfig tc = train_config_from(cfg, args);
    KgtModel<float> model = KgtModel<float>::create(kg, bank, mc);
    apply_ablation(model, setting);
    const fs::path sub = fs::path(args.out) / ablation_name(setting);
    train(model, tc, sub);
    const RankReport r = evaluate(model, kg, Split::test, filter, policy);
    report << ablation_name(setting) << "," << ablation_label(setting) << "," << r.fused.mrr << ","
           << r.fused.hits1 << "," << r.fused.hits3 << "," << r.fused.hits10 << "\n";
    std::printf("%-16s (%s) test MRR %.4f H@1 %.4f\n", ablation_name(setting),
                ablation_label(setting), r.fused.mrr, r.fused.hits1);
  }
  report.close();
  RunManifest manifest("ablate", args.out);
  manifest.set("dataset", args.dataset);
  manifest.set("settings", settings);
  manifest.add_output(report_path);
  manifest.write();
  return 0;
}

int cmd_sweep_gamma(const CommonArgs& args, const TrainArgs& targs, const std::string& checkpoint,
                    const std::string& gammas_arg, const std::string& sweep_mode) {
  const KnowledgeGraph kg = load_graph(args.dataset);
  const FeatureBank bank = load_bank(targs.text_features, targs.struct_features);
  const FilterPolicy policy = parse_policy(args.policy);
  const FilterIndex filter = build_filter_index(kg, policy);

  std::vector<double> gammas;
  std::string rest = gammas_arg;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = rest.substr(0, comma);
    if (!item.empty()) gammas.push_back(std::stod(item));
    rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
  }
  if (gammas.empty()) throw UsageError("sweep-gamma: empty gamma list");

  std::vector<GammaPoint> points;
  if (sweep_mode == "rescore") {
    if (checkpoint.empty()) throw UsageError("--checkpoint is required for rescore mode");
    const KgtModel<float> model = load_checkpoint<float>(checkpoint, kg, bank);
    points = sweep_gamma_rescore(model, kg, Split::test, filter, gammas);
  } else if (sweep_mode == "retrain") {
    const Config cfg = load_config(args.config);
    for (double gamma : gammas) {
      Config per = cfg;
      per.set("gamma_mode", "fixed");
      per.set("gamma", std::to_string(gamma));
      const ModelConfig mc = model_config_from(per, args, targs.mode, bank);
      const TrainConfig tc = train_config_from(per, args);
      KgtModel<float> model = KgtModel<float>::create(kg, bank, mc);
      train(model, tc, {});
      const RankReport r = evaluate(model, kg, Split::test, filter, policy);
      points.push_back({gamma, r.fused});
    }
  } else {
    throw UsageError("--sweep-mode must be rescore|retrain");
  }

  fs::create_directories(args.out);
  const fs::path csv = fs::path(args.out) / "gamma_sweep.csv";
  write_gamma_csv(points, csv);
  RunManifest manifest("sweep-gamma", args.out);
  manifest.set("dataset", args.dataset);
  manifest.set("mode", sweep_mode);
  manifest.add_output(csv);
  manifest.write();
  for (const auto& p : points) std::printf("gamma %.2f  MRR %.4f  H@1 %.4f\n", p.gamma, p.fused.mrr,
                                           p.fused.hits1);
  return 0;
}

void render_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::string cell;
    for (char ch : line) {
      if (ch == ',') {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell.push_back(ch);
      }
    }
    cells.push_back(cell);
    rows.push_back(cells);
  }
  if (rows.empty()) return;
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (row.size() > widths.size()) widths.resize(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::printf("== %s ==\n", path.filename().string().c_str());
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      std::printf("%-*s  ", static_cast<int>(widths[i]), row[i].c_str());
    std::printf("\n");
  }
  std::printf("\n");
}

int cmd_report(const std::string& run_dir) {
  if (!fs::exists(run_dir)) throw DataError("run directory not found: " + run_dir);
  bool any = false;
  for (const char* name : {"train_log.csv", "kge_loss.csv", "ablation_report.csv", "gamma_sweep.csv",
                           "eval_test.csv", "eval_valid.csv"}) {
    const fs::path p = fs::path(run_dir) / name;
    if (!fs::exists(p)) continue;
    if (std::string(name).rfind("eval_", 0) == 0) {
      // per-query files are large; show the JSON summary instead
      continue;
    }
    render_csv(p);
    any = true;
  }
  for (const char* name : {"eval_test.json", "eval_valid.json"}) {
    const fs::path p = fs::path(run_dir) / name;
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    std::cout << "== " << name << " ==\n" << in.rdbuf() << "\n";
    any = true;
  }
  if (!any) std::printf("no report files found in %s\n", run_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KGT: dual-stream specialized-token knowledge-graph completion"};
  app.require_subcommand(1);

  CommonArgs common;
  TrainArgs targs;
  std::string kge_kind, checkpoint, split = "test", settings = "all", gammas,
              sweep_mode = "rescore", cache_dir, run_dir;
  bool offline = false;
  std::size_t embed_dim = 0;

  auto add_common = [&](CLI::App* cmd, bool with_out = true) {
    cmd->add_option("--dataset", common.dataset, "dataset directory");
    cmd->add_option("--config", common.config, "key=value config file");
    if (with_out) cmd->add_option("--out", common.out, "run output directory")->required();
    cmd->add_option("--seed", common.seed, "seed override")->each([&](const std::string&) {
      common.seed_set = true;
    });
    cmd->add_option("--policy", common.policy, "filter policy: all-splits|train-only");
  };
  auto add_features = [&](CLI::App* cmd) {
    cmd->add_option("--text-features", targs.text_features, "directory with *_text.kgtf");
    cmd->add_option("--struct-features", targs.struct_features, "directory with *_struct.kgtf");
  };

  auto* prepare = app.add_subcommand("prepare", "load, augment, index a dataset");
  add_common(prepare);

  auto* train_kge_cmd = app.add_subcommand("train-kge", "pre-train structural embeddings");
  add_common(train_kge_cmd);
  train_kge_cmd->add_option("--kind", kge_kind, "tucker|transe");

  auto* embed = app.add_subcommand("embed-text", "encode entity/relation texts");
  add_common(embed);
  embed->add_flag("--offline", offline, "use the deterministic offline encoder");
  embed->add_option("--cache", cache_dir, "embedding cache directory");
  embed->add_option("--dim", embed_dim, "embedding dimension override");

  auto* train_cmd = app.add_subcommand("train", "train the end-to-end model");
  add_common(train_cmd);
  add_features(train_cmd);
  train_cmd->add_option("--ablation", targs.ablation, "ablation setting name");
  train_cmd->add_option("--mode", targs.mode, "prompt mode: minimal|templated");

  auto* eval_cmd = app.add_subcommand("eval", "filtered rank evaluation of a checkpoint");
  add_common(eval_cmd);
  add_features(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  eval_cmd->add_option("--split", split, "valid|test");

  auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation suite");
  add_common(ablate_cmd);
  add_features(ablate_cmd);
  ablate_cmd->add_option("--settings", settings, "all or comma-separated setting names");
  ablate_cmd->add_option("--mode", targs.mode, "prompt mode: minimal|templated");

  auto* sweep_cmd = app.add_subcommand("sweep-gamma", "sweep the logit scaling ratio");
  add_common(sweep_cmd);
  add_features(sweep_cmd);
  sweep_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (rescore mode)");
  sweep_cmd->add_option("--gammas", gammas, "comma-separated gamma list")->required();
  sweep_cmd->add_option("--sweep-mode", sweep_mode, "rescore|retrain");
  sweep_cmd->add_option("--mode", targs.mode, "prompt mode: minimal|templated");

  auto* report_cmd = app.add_subcommand("report", "render stored CSV/JSON reports");
  report_cmd->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
    if (prepare->parsed()) return cmd_prepare(common);
    if (train_kge_cmd->parsed()) return cmd_train_kge(common, kge_kind);
    if (embed->parsed()) return cmd_embed_text(common, offline, cache_dir, embed_dim);
    if (train_cmd->parsed()) return cmd_train(common, targs);
    if (eval_cmd->parsed()) return cmd_eval(common, targs, checkpoint, split);
    if (ablate_cmd->parsed()) return cmd_ablate(common, targs, settings);
    if (sweep_cmd->parsed()) return cmd_sweep_gamma(common, targs, checkpoint, gammas, sweep_mode);
    if (report_cmd->parsed()) return cmd_report(run_dir);
    throw UsageError("no subcommand selected");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
