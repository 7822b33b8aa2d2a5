#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "kgt/model.hpp"
#include "kgt/optim.hpp"

namespace kgt {

// Table of ablation settings: the full model plus the nine single-switch
// variants.
enum class AblationSetting {
  full,
  struct_only,      // 1.1
  text_only,        // 1.2
  no_struct_input,  // 2.1
  no_text_input,    // 2.2
  no_struct_pred,   // 2.3
  no_text_pred,     // 2.4
  no_noise,         // 2.5
  no_rel_temp,      // 2.6
  no_lls,           // 2.7
};

inline const std::vector<std::pair<AblationSetting, const char*>>& ablation_table() {
  static const std::vector<std::pair<AblationSetting, const char*>> table = {
      {AblationSetting::full, "full"},
      {AblationSetting::struct_only, "struct_only"},
      {AblationSetting::text_only, "text_only"},
      {AblationSetting::no_struct_input, "no_struct_input"},
      {AblationSetting::no_text_input, "no_text_input"},
      {AblationSetting::no_struct_pred, "no_struct_pred"},
      {AblationSetting::no_text_pred, "no_text_pred"},
      {AblationSetting::no_noise, "no_noise"},
      {AblationSetting::no_rel_temp, "no_rel_temp"},
      {AblationSetting::no_lls, "no_lls"},
  };
  return table;
}

inline const char* ablation_name(AblationSetting s) {
  for (const auto& [setting, name] : ablation_table())
    if (setting == s) return name;
  throw UsageError("unknown ablation setting");
}

inline const char* ablation_label(AblationSetting s) {
  switch (s) {
    case AblationSetting::full: return "full";
    case AblationSetting::struct_only: return "1.1";
    case AblationSetting::text_only: return "1.2";
    case AblationSetting::no_struct_input: return "2.1";
    case AblationSetting::no_text_input: return "2.2";
    case AblationSetting::no_struct_pred: return "2.3";
    case AblationSetting::no_text_pred: return "2.4";
    case AblationSetting::no_noise: return "2.5";
    case AblationSetting::no_rel_temp: return "2.6";
    case AblationSetting::no_lls: return "2.7";
  }
  return "?";
}

inline AblationSetting parse_ablation(const std::string& name) {
  for (const auto& [setting, n] : ablation_table())
    if (name == n) return setting;
  std::string valid;
  for (const auto& [setting, n] : ablation_table()) valid += std::string(n) + " ";
  throw UsageError("unknown ablation '" + name + "' (valid: " + valid + ")");
}

// Configures a fresh model for one ablation. Single-modality settings
// disable the other modality at both the input gate and the predictor.
template <class T>
void apply_ablation(KgtModel<T>& model, AblationSetting setting) {
  const bool pristine = model.ablation == "full" && model.fusion.text_stream &&
                        model.fusion.struct_stream && model.text_pred && model.struct_pred &&
                        model.fusion.gate.noise_enabled && model.fusion.gate.temp_enabled;
  if (!pristine) throw UsageError("apply_ablation: model already carries overrides");
  switch (setting) {
    case AblationSetting::full: break;
    case AblationSetting::struct_only:
      model.fusion.text_stream = false;
      model.text_pred = false;
      break;
    case AblationSetting::text_only:
      model.fusion.struct_stream = false;
      model.struct_pred = false;
      break;
    case AblationSetting::no_struct_input: model.fusion.struct_stream = false; break;
    case AblationSetting::no_text_input: model.fusion.text_stream = false; break;
    case AblationSetting::no_struct_pred: model.struct_pred = false; break;
    case AblationSetting::no_text_pred: model.text_pred = false; break;
    case AblationSetting::no_noise: model.fusion.gate.noise_enabled = false; break;
    case AblationSetting::no_rel_temp: model.fusion.gate.temp_enabled = false; break;
    case AblationSetting::no_lls: model.scalers.init(ScalerMode::fixed_ratio, T(1)); break;
  }
  model.ablation = ablation_name(setting);
}

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 32;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t valid_every = 0;  // epochs between valid-MRR probes; 0 = off
  bool checkpoint_epochs = true;

  void validate() const {
    if (batch_size == 0) throw UsageError("batch_size must be positive");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0;
  double valid_mrr = -1;  // < 0 when not probed
};

struct TrainResult {
  std::vector<EpochLog> epochs;
};

inline void write_train_log(const std::vector<EpochLog>& logs, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "epoch,loss,valid_mrr\n";
  for (const auto& e : logs) {
    out << e.epoch << "," << e.loss << ",";
    if (e.valid_mrr >= 0) out << e.valid_mrr;
    out << "\n";
  }
}

// One pass of the end-to-end recipe: seeded shuffled batches of augmented
// train queries, mean cross-entropy, clipped adam steps, a checkpoint per
// epoch. valid_probe, when provided, returns the filtered valid MRR.
template <class T>
TrainResult train(KgtModel<T>& model, const TrainConfig& tc,
                  const std::filesystem::path& out_dir = {},
                  const std::function<double(const KgtModel<T>&)>& valid_probe = {}) {
  tc.validate();
  const KnowledgeGraph& kg = *model.kg;
  model.bank->validate_against(kg);

  auto params = model.params();
  AdamConfig<T> ac;
  ac.lr = static_cast<T>(tc.learning_rate);
  ac.beta1 = static_cast<T>(tc.beta1);
  ac.beta2 = static_cast<T>(tc.beta2);
  ac.eps = static_cast<T>(tc.adam_eps);
  ac.weight_decay = static_cast<T>(tc.weight_decay);
  ac.clip_norm = static_cast<T>(tc.grad_clip_norm);
  Adam<T> opt(ac);

  Rng shuffle_rng = Rng(tc.seed).fork(0x5eed);
  Rng model_rng = Rng(tc.seed).fork(0xf02);

  std::vector<std::size_t> order(kg.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    std::size_t seen = 0;
    std::vector<Triple> batch;
    for (std::size_t off = 0; off < order.size(); off += tc.batch_size) {
      const std::size_t end = std::min(order.size(), off + tc.batch_size);
      batch.clear();
      for (std::size_t k = off; k < end; ++k) batch.push_back(kg.train[order[k]]);
      zero_grads(params);
      const T loss = model.train_batch(batch, model_rng);
      if (!std::isfinite(static_cast<double>(loss))) {
        std::string ids;
        for (const Triple& t : batch)
          ids += "(" + std::to_string(t.head) + "," + std::to_string(t.relation) + "," +
                 std::to_string(t.tail) + ") ";
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(off / tc.batch_size) + "; queries: " + ids);
      }
      opt.step(params);
      epoch_loss += static_cast<double>(loss) * static_cast<double>(end - off);
      seen += end - off;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
    if (valid_probe && tc.valid_every > 0 && (epoch + 1) % tc.valid_every == 0)
      log.valid_mrr = valid_probe(model);
    result.epochs.push_back(log);
    if (!out_dir.empty() && tc.checkpoint_epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03zu.ckpt", epoch);
      save_checkpoint(model, out_dir / name);
    }
  }
  if (!out_dir.empty()) {
    save_checkpoint(model, out_dir / "final.ckpt");
    write_train_log(result.epochs, out_dir / "train_log.csv");
  }
  return result;
}

}  // namespace kgt
