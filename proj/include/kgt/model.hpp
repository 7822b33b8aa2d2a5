#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgt/backbone.hpp"
#include "kgt/features.hpp"
#include "kgt/fusion.hpp"
#include "kgt/kg.hpp"
#include "kgt/predictor.hpp"

namespace kgt {

struct ModelConfig {
  TransformerConfig tf;
  std::size_t lora_rank = 8;
  double text_dropout = 0.2;
  double struct_dropout = 0.4;
  bool attn_lora = false;
  std::size_t attn_lora_rank = 8;
  double attn_lora_alpha = 16.0;
  ScalerMode scaler_mode = ScalerMode::learnable;
  double gamma = 1.0;
  PromptMode prompt_mode = PromptMode::minimal;
  std::uint64_t seed = 0;
};

template <class T>
struct ViewLogits {
  std::vector<T> p_t, p_s, fused;
  bool has_text = true, has_struct = true;
};

// The end-to-end model: specialized dual-stream embedding, small decoder
// backbone, and the dual-view decoupled predictor.
template <class T>
struct KgtModel {
  ModelConfig cfg;
  Vocabulary vocab;
  FusionParams<T> fusion;
  Backbone<T> backbone;
  ProjectionBlock<T> head_t, head_s;  // d -> d_t / d -> d_s
  LoraScorer<T> scorer_t, scorer_s;
  LogitScalers<T> scalers;
  bool text_pred = true, struct_pred = true;
  std::string ablation = "full";
  std::string wbase_text_hash, wbase_struct_hash;

  const KnowledgeGraph* kg = nullptr;    // non-owning; callers keep alive
  const FeatureBank* bank = nullptr;

  static KgtModel create(const KnowledgeGraph& kg, const FeatureBank& bank, const ModelConfig& cfg) {
    if (!kg.augmented) throw DataError("model requires an inverse-augmented graph");
    bank.validate_against(kg);
    cfg.tf.validate();
    KgtModel m;
    m.cfg = cfg;
    m.kg = &kg;
    m.bank = &bank;
    m.vocab = extend_vocabulary(kg, default_base_tokens());
    Rng rng(cfg.seed);
    const std::size_t d = cfg.tf.d, d_t = bank.d_t(), d_s = bank.d_s();
    m.fusion.init(d, d_t, d_s, kg.num_relations(), rng, static_cast<T>(cfg.text_dropout),
                  static_cast<T>(cfg.struct_dropout));
    m.backbone.init(m.vocab.base_count(), cfg.tf, rng, cfg.attn_lora, cfg.attn_lora_rank,
                    static_cast<T>(cfg.attn_lora_alpha));
    m.head_t.init("pred.head_t", d, d_t, rng, static_cast<T>(cfg.text_dropout));
    m.head_s.init("pred.head_s", d, d_s, rng, static_cast<T>(cfg.struct_dropout));
    m.scorer_t.init("pred.text", bank.entity_text.template cast<T>(), cfg.lora_rank, rng);
    m.scorer_s.init("pred.struct", bank.entity_struct.template cast<T>(), cfg.lora_rank, rng);
    m.scalers.init(cfg.scaler_mode, static_cast<T>(cfg.gamma));
    m.wbase_text_hash = bank.text_hash();
    m.wbase_struct_hash = bank.struct_hash();
    return m;
  }

  std::size_t num_entities() const { return scorer_t.num_entities(); }

  // Trainable registry under the current ablation flags. The list is stable
  // for the lifetime of a training run.
  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> out = fusion.params();
    for (auto* t : backbone.params()) out.push_back(t);
    if (text_pred) {
      out.push_back(&head_t.weight);
      out.push_back(&head_t.gain);
      out.push_back(&scorer_t.a);
      out.push_back(&scorer_t.b);
    }
    if (struct_pred) {
      out.push_back(&head_s.weight);
      out.push_back(&head_s.gain);
      out.push_back(&scorer_s.a);
      out.push_back(&scorer_s.b);
    }
    out.push_back(&scalers.lambda);
    return out;
  }

  // Every tensor the checkpoint persists, live or not under the ablation.
  std::vector<Tensor<T>*> all_tensors() {
    std::vector<Tensor<T>*> out;
    out.push_back(&fusion.proj_t.weight);
    out.push_back(&fusion.proj_t.gain);
    out.push_back(&fusion.proj_s.weight);
    out.push_back(&fusion.proj_s.gain);
    for (auto* t : fusion.gate.params()) out.push_back(t);
    for (auto* t : backbone.params()) out.push_back(t);
    for (auto* t : {&head_t.weight, &head_t.gain, &head_s.weight, &head_s.gain, &scorer_t.a, &scorer_t.b,
                    &scorer_s.a, &scorer_s.b, &scalers.lambda})
      out.push_back(t);
    return out;
  }

  // ---- forward/backward ----

  struct QueryCache {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId target = 0;
    std::vector<TokenId> tokens;
    std::vector<long> special_slot;  // -1 for base tokens, else embed-cache index
    Mat<T> emb;
    typename Backbone<T>::Cache bb;
    std::vector<T> h_n;
    ProjectionCache<T> hc_t, hc_s;
    std::vector<T> ht, hs;
    LoraCache<T> lc_t, lc_s;
    std::vector<T> p_t, p_s, fused;
  };

  // Deduplicates specialized embeddings per (token, gate relation) pair
  // within a batch.
  struct EmbedBatch {
    std::unordered_map<std::uint64_t, std::size_t> index;
    std::vector<SpecialEmbedCache<T>> entries;
  };

  std::size_t embed_slot(EmbedBatch& eb, TokenId token, RelationId query_rel, bool train,
                         Rng& rng) const {
    const RelationId gate_rel =
        vocab.is_entity_token(token) ? query_rel : vocab.relation_of(token);
    const std::uint64_t key = (static_cast<std::uint64_t>(token) << 32) | gate_rel;
    if (const auto it = eb.index.find(key); it != eb.index.end()) return it->second;
    eb.entries.push_back(embed_special_token<T>(vocab, token, query_rel, *bank, fusion, train, rng));
    eb.index.emplace(key, eb.entries.size() - 1);
    return eb.entries.size() - 1;
  }

  void embed_sequence(QueryCache& qc, EmbedBatch& eb, bool train, Rng& rng) const {
    const std::size_t n = qc.tokens.size();
    qc.emb = Mat<T>(n, cfg.tf.d);
    qc.special_slot.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      const TokenId id = qc.tokens[i];
      if (id >= vocab.size()) throw DataError("embed_sequence: unknown token id");
      if (vocab.is_special(id)) {
        const std::size_t slot = embed_slot(eb, id, qc.relation, train, rng);
        const auto& value = eb.entries[slot].value;
        std::copy(value.begin(), value.end(), qc.emb.row(i).begin());
        qc.special_slot[i] = static_cast<long>(slot);
      } else {
        const auto row = backbone.tok_emb.v.row(id);
        std::copy(row.begin(), row.end(), qc.emb.row(i).begin());
      }
    }
  }

  void forward_query(QueryCache& qc, EmbedBatch& eb, bool train, Rng& rng) const {
    qc.tokens = build_prompt(vocab, *kg, qc.head, qc.relation, cfg.prompt_mode, cfg.tf.max_seq_len);
    embed_sequence(qc, eb, train, rng);
    qc.h_n = backbone.forward(qc.emb, &qc.bb);
    const std::size_t ne = num_entities();
    if (text_pred) {
      qc.ht = project<T>(qc.h_n, head_t, train, rng, &qc.hc_t);
      qc.p_t = lora_score<T>(qc.ht, scorer_t, &qc.lc_t);
    } else {
      qc.p_t.assign(ne, T(0));
    }
    if (struct_pred) {
      qc.hs = project<T>(qc.h_n, head_s, train, rng, &qc.hc_s);
      qc.p_s = lora_score<T>(qc.hs, scorer_s, &qc.lc_s);
    } else {
      qc.p_s.assign(ne, T(0));
    }
    qc.fused = fuse_logits<T>(qc.p_t, qc.p_s, scalers);
  }

  // Backward for one query given d(loss)/d(fused logits); special-token
  // gradients land in the embed batch for a single deferred pass.
  void backward_query(QueryCache& qc, EmbedBatch& eb, std::span<const T> dfused) {
    const std::size_t ne = num_entities();
    std::vector<T> dp_t(ne, T(0)), dp_s(ne, T(0));
    fuse_logits_backward<T>(dfused, qc.p_t, qc.p_s, scalers, dp_t, dp_s);
    std::vector<T> dh_n(cfg.tf.d, T(0));
    if (text_pred) {
      std::vector<T> dht(qc.ht.size(), T(0));
      lora_score_backward<T>(dp_t, qc.lc_t, scorer_t, dht);
      project_backward<T>(dht, qc.hc_t, head_t, dh_n);
    }
    if (struct_pred) {
      std::vector<T> dhs(qc.hs.size(), T(0));
      lora_score_backward<T>(dp_s, qc.lc_s, scorer_s, dhs);
      project_backward<T>(dhs, qc.hc_s, head_s, dh_n);
    }
    Mat<T> demb = backbone.backward(dh_n, qc.bb);
    for (std::size_t i = 0; i < qc.tokens.size(); ++i) {
      if (qc.special_slot[i] >= 0) {
        auto& grad = eb.entries[static_cast<std::size_t>(qc.special_slot[i])].grad;
        axpy(std::span<T>(grad), T(1), std::span<const T>(demb.row(i)));
      } else {
        axpy(backbone.tok_emb.g.row(qc.tokens[i]), T(1), std::span<const T>(demb.row(i)));
      }
    }
  }

  void finish_embed_backward(EmbedBatch& eb) {
    for (auto& entry : eb.entries) embed_special_token_backward<T>(entry, fusion);
  }

  // Mean cross-entropy over a batch of (h, r) -> t queries, with gradient
  // accumulation into the parameter tensors.
  T train_batch(std::span<const Triple> batch, Rng& rng) {
    EmbedBatch eb;
    std::vector<QueryCache> qcs(batch.size());
    T loss = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      qcs[i].head = batch[i].head;
      qcs[i].relation = batch[i].relation;
      qcs[i].target = batch[i].tail;
      forward_query(qcs[i], eb, true, rng);
      loss += ce_loss<T>(qcs[i].fused, qcs[i].target);
    }
    const T inv = T(1) / static_cast<T>(batch.size());
    for (auto& qc : qcs) {
      std::vector<T> dfused = ce_loss_backward<T>(qc.fused, qc.target);
      for (T& g : dfused) g *= inv;
      backward_query(qc, eb, dfused);
    }
    finish_embed_backward(eb);
    return loss * inv;
  }

  // Forward-only mean loss over a batch, matching train_batch's objective.
  // Intended for finite-difference checks with dropout and noise disabled.
  T batch_loss(std::span<const Triple> batch) const {
    Rng rng(0);
    EmbedBatch eb;
    T loss = 0;
    for (const Triple& q : batch) {
      QueryCache qc;
      qc.head = q.head;
      qc.relation = q.relation;
      forward_query(qc, eb, true, rng);
      loss += ce_loss<T>(qc.fused, q.tail);
    }
    return loss / static_cast<T>(batch.size());
  }

  // Deterministic eval-mode scoring of one query.
  ViewLogits<T> score_query(EntityId h, RelationId r) const {
    Rng rng(0);
    EmbedBatch eb;
    QueryCache qc;
    qc.head = h;
    qc.relation = r;
    forward_query(qc, eb, false, rng);
    ViewLogits<T> out;
    out.p_t = std::move(qc.p_t);
    out.p_s = std::move(qc.p_s);
    out.fused = std::move(qc.fused);
    out.has_text = text_pred;
    out.has_struct = struct_pred;
    return out;
  }
};

// ---- checkpointing ----
// "KGTC": u32 version, u64 meta length + key=value text, u64 section count,
// then per section a name and a KGTF blob. W_base is referenced by content
// hash, never duplicated.

inline constexpr char kCkptMagic[4] = {'K', 'G', 'T', 'C'};
inline constexpr std::uint32_t kCkptVersion = 1;

namespace detail {

inline std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint meta line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace detail

template <class T>
void save_checkpoint(const KgtModel<T>& model, const std::filesystem::path& path) {
  std::string meta;
  auto put = [&meta](const std::string& k, const std::string& v) { meta += k + "=" + v + "\n"; };
  const ModelConfig& c = model.cfg;
  put("d", std::to_string(c.tf.d));
  put("layers", std::to_string(c.tf.layers));
  put("heads", std::to_string(c.tf.heads));
  put("ffn_mult", std::to_string(c.tf.ffn_mult));
  put("max_seq_len", std::to_string(c.tf.max_seq_len));
  put("lora_rank", std::to_string(c.lora_rank));
  put("text_dropout", std::to_string(c.text_dropout));
  put("struct_dropout", std::to_string(c.struct_dropout));
  put("attn_lora", c.attn_lora ? "1" : "0");
  put("attn_lora_rank", std::to_string(c.attn_lora_rank));
  put("attn_lora_alpha", std::to_string(c.attn_lora_alpha));
  put("scaler_mode", model.scalers.mode == ScalerMode::learnable ? "learnable" : "fixed_ratio");
  put("gamma", std::to_string(static_cast<double>(model.scalers.gamma)));
  put("prompt_mode", prompt_mode_name(c.prompt_mode));
  put("seed", std::to_string(c.seed));
  put("ablation", model.ablation);
  put("text_stream", model.fusion.text_stream ? "1" : "0");
  put("struct_stream", model.fusion.struct_stream ? "1" : "0");
  put("text_pred", model.text_pred ? "1" : "0");
  put("struct_pred", model.struct_pred ? "1" : "0");
  put("noise", model.fusion.gate.noise_enabled ? "1" : "0");
  put("rel_temp", model.fusion.gate.temp_enabled ? "1" : "0");
  put("wbase_text_hash", model.wbase_text_hash);
  put("wbase_struct_hash", model.wbase_struct_hash);

  auto tensors = const_cast<KgtModel<T>&>(model).all_tensors();
  std::string out;
  out.append(kCkptMagic, 4);
  detail::put_le<std::uint32_t>(out, kCkptVersion);
  detail::put_le<std::uint64_t>(out, meta.size());
  out += meta;
  detail::put_le<std::uint64_t>(out, tensors.size());
  for (const auto* t : tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->name.size()));
    out += t->name;
    const std::string blob = encode_kgtf(t->v.template cast<float>());
    detail::put_le<std::uint64_t>(out, blob.size());
    out += blob;
  }
  detail::atomic_write(path, out);
}

template <class T>
KgtModel<T> load_checkpoint(const std::filesystem::path& path, const KnowledgeGraph& kg,
                            const FeatureBank& bank) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
    throw FormatError("bad checkpoint magic: " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (detail::get_le<std::uint32_t>(p + 4) != kCkptVersion)
    throw FormatError("unsupported checkpoint version");
  std::size_t pos = 8;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw FormatError("truncated checkpoint: " + path.string());
  };
  need(8);
  const auto meta_len = detail::get_le<std::uint64_t>(p + pos);
  pos += 8;
  need(meta_len);
  const auto kv = detail::parse_kv(bytes.substr(pos, meta_len));
  pos += meta_len;

  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("checkpoint meta missing key: " + k);
    return it->second;
  };
  ModelConfig cfg;
  cfg.tf.d = std::stoul(get("d"));
  cfg.tf.layers = std::stoul(get("layers"));
  cfg.tf.heads = std::stoul(get("heads"));
  cfg.tf.ffn_mult = std::stoul(get("ffn_mult"));
  cfg.tf.max_seq_len = std::stoul(get("max_seq_len"));
  cfg.lora_rank = std::stoul(get("lora_rank"));
  cfg.text_dropout = std::stod(get("text_dropout"));
  cfg.struct_dropout = std::stod(get("struct_dropout"));
  cfg.attn_lora = get("attn_lora") == "1";
  cfg.attn_lora_rank = std::stoul(get("attn_lora_rank"));
  cfg.attn_lora_alpha = std::stod(get("attn_lora_alpha"));
  cfg.scaler_mode = get("scaler_mode") == "learnable" ? ScalerMode::learnable : ScalerMode::fixed_ratio;
  cfg.gamma = std::stod(get("gamma"));
  cfg.prompt_mode = parse_prompt_mode(get("prompt_mode"));
  cfg.seed = std::stoull(get("seed"));

  KgtModel<T> model = KgtModel<T>::create(kg, bank, cfg);
  model.ablation = get("ablation");
  model.fusion.text_stream = get("text_stream") == "1";
  model.fusion.struct_stream = get("struct_stream") == "1";
  model.text_pred = get("text_pred") == "1";
  model.struct_pred = get("struct_pred") == "1";
  model.fusion.gate.noise_enabled = get("noise") == "1";
  model.fusion.gate.temp_enabled = get("rel_temp") == "1";
  if (get("wbase_text_hash") != bank.text_hash() || get("wbase_struct_hash") != bank.struct_hash())
    throw DataError("feature bank does not match the checkpoint's W_base hashes");

  std::unordered_map<std::string, Tensor<T>*> by_name;
  for (auto* t : model.all_tensors()) by_name.emplace(t->name, t);
  need(8);
  const auto sections = detail::get_le<std::uint64_t>(p + pos);
  pos += 8;
  for (std::uint64_t s = 0; s < sections; ++s) {
    need(4);
    const auto name_len = detail::get_le<std::uint32_t>(p + pos);
    pos += 4;
    need(name_len);
    const std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    need(8);
    const auto blob_len = detail::get_le<std::uint64_t>(p + pos);
    pos += 8;
    need(blob_len);
    const FeatureMatrix m = decode_kgtf(bytes.substr(pos, blob_len), name);
    pos += blob_len;
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint section for unknown tensor: " + name);
    Tensor<T>& t = *it->second;
    if (m.rows != t.v.rows || m.cols != t.v.cols)
      throw FormatError("checkpoint section shape mismatch for " + name);
    t.v = m.template cast<T>();
  }
  return model;
}

}  // namespace kgt
