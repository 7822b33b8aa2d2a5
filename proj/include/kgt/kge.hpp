#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kgt/core.hpp"
#include "kgt/features.hpp"
#include "kgt/kg.hpp"
#include "kgt/optim.hpp"
#include "kgt/rng.hpp"

namespace kgt {

enum class KgeKind { tucker, transe };

inline const char* kge_kind_name(KgeKind k) { return k == KgeKind::tucker ? "tucker" : "transe"; }

inline KgeKind parse_kge_kind(const std::string& s) {
  if (s == "tucker") return KgeKind::tucker;
  if (s == "transe") return KgeKind::transe;
  throw UsageError("unknown KGE kind: " + s + " (expected tucker|transe)");
}

struct KgeConfig {
  KgeKind kind = KgeKind::tucker;
  std::size_t d_s = 256;
  std::size_t negatives_per_positive = 8;  // transe only
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 5e-3;
  double margin = 1.0;  // transe only
  // TuckER regularizers, following its source recipe.
  double input_dropout = 0.3;
  double hidden_dropout = 0.4;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (d_s == 0) throw UsageError("kge dimension must be positive");
    if (negatives_per_positive < 1) throw UsageError("kge negatives must be >= 1");
    if (batch_size == 0) throw UsageError("kge batch size must be positive");
    for (double p : {input_dropout, hidden_dropout})
      if (p < 0 || p >= 1) throw UsageError("kge dropout rates must lie in [0, 1)");
    if (label_smoothing < 0 || label_smoothing >= 1)
      throw UsageError("kge label smoothing must lie in [0, 1)");
  }
};

// Entity/relation embedding tables plus, for TuckER, the core tensor stored
// with row i holding the d*d slice for entity dimension i.
template <class T>
struct KgeModel {
  KgeKind kind = KgeKind::tucker;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  Tensor<T> entity;    // |E| x d
  Tensor<T> relation;  // |R_aug| x d
  Tensor<T> core;      // d x d*d (tucker only)

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> p{&entity, &relation};
    if (kind == KgeKind::tucker) p.push_back(&core);
    return p;
  }

  // tucker: trilinear contraction of the core with e_h, w_r, e_t.
  // transe: -||e_h + w_r - e_t||_2.
  T score(EntityId h, RelationId r, EntityId t) const {
    const auto eh = entity.v.row(h);
    const auto wr = relation.v.row(r);
    const auto et = entity.v.row(t);
    if (kind == KgeKind::transe) {
      T s = 0;
      for (std::size_t i = 0; i < dim; ++i) {
        const T d = eh[i] + wr[i] - et[i];
        s += d * d;
      }
      return -std::sqrt(s);
    }
    std::vector<T> tmp(dim * dim, T(0));
    for (std::size_t i = 0; i < dim; ++i) axpy<T>(tmp, eh[i], core.v.row(i));
    T s = 0;
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t k = 0; k < dim; ++k) s += wr[j] * tmp[j * dim + k] * et[k];
    return s;
  }

  // Scores against every tail at once; used by training and evaluation.
  void score_all_tails(EntityId h, RelationId r, std::vector<T>& out,
                       std::vector<T>* q_scratch = nullptr) const {
    const std::size_t n = entity.v.rows;
    out.assign(n, T(0));
    const auto eh = entity.v.row(h);
    const auto wr = relation.v.row(r);
    if (kind == KgeKind::transe) {
      for (std::size_t e = 0; e < n; ++e) {
        const auto et = entity.v.row(e);
        T s = 0;
        for (std::size_t i = 0; i < dim; ++i) {
          const T d = eh[i] + wr[i] - et[i];
          s += d * d;
        }
        out[e] = -std::sqrt(s);
      }
      return;
    }
    std::vector<T> local;
    std::vector<T>& q = q_scratch ? *q_scratch : local;
    std::vector<T> tmp(dim * dim, T(0));
    for (std::size_t i = 0; i < dim; ++i) axpy<T>(tmp, eh[i], core.v.row(i));
    q.assign(dim, T(0));
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t k = 0; k < dim; ++k) q[k] += wr[j] * tmp[j * dim + k];
    for (std::size_t e = 0; e < n; ++e) out[e] = dot(entity.v.row(e), q);
  }
};

template <class T>
KgeModel<T> init_kge(const KnowledgeGraph& kg, const KgeConfig& cfg) {
  KgeModel<T> m;
  m.kind = cfg.kind;
  m.dim = cfg.d_s;
  m.seed = cfg.seed;
  Rng rng(cfg.seed);
  const T std_emb = T(1) / std::sqrt(static_cast<T>(cfg.d_s));
  m.entity.init("kge.entity", kg.num_entities(), cfg.d_s);
  m.relation.init("kge.relation", kg.num_relations(), cfg.d_s);
  for (T& v : m.entity.v.a) v = static_cast<T>(rng.normal()) * std_emb;
  for (T& v : m.relation.v.a) v = static_cast<T>(rng.normal()) * std_emb;
  if (cfg.kind == KgeKind::tucker) {
    m.core.init("kge.core", cfg.d_s, cfg.d_s * cfg.d_s);
    for (T& v : m.core.v.a) v = static_cast<T>(rng.normal()) * T(0.5);
  }
  return m;
}

namespace detail {

// Full-softmax cross-entropy over all tails for one (h, r) -> t example,
// with the source recipe's input/hidden dropout and label smoothing.
template <class T>
T tucker_example(KgeModel<T>& m, const Triple& tr, const KgeConfig& cfg, bool train_mode, Rng& rng,
                 std::vector<T>& logits, std::vector<T>& q, std::vector<T>& tmp, std::vector<T>& dq,
                 std::vector<T>& dtmp, std::vector<T>& eh_drop, std::vector<T>& eh_mask,
                 std::vector<T>& q_mask) {
  const std::size_t d = m.dim;
  const std::size_t n = m.entity.v.rows;
  const auto eh = m.entity.v.row(tr.head);
  const auto wr = m.relation.v.row(tr.relation);

  eh_drop.assign(eh.begin(), eh.end());
  eh_mask.clear();
  if (train_mode && cfg.input_dropout > 0) {
    eh_mask.assign(d, T(0));
    const T keep = T(1) - static_cast<T>(cfg.input_dropout);
    for (std::size_t i = 0; i < d; ++i) {
      if (!rng.bernoulli(cfg.input_dropout)) eh_mask[i] = T(1) / keep;
      eh_drop[i] *= eh_mask[i];
    }
  }

  tmp.assign(d * d, T(0));
  for (std::size_t i = 0; i < d; ++i) axpy<T>(tmp, eh_drop[i], m.core.v.row(i));
  q.assign(d, T(0));
  for (std::size_t j = 0; j < d; ++j) {
    const T rj = wr[j];
    for (std::size_t k = 0; k < d; ++k) q[k] += rj * tmp[j * d + k];
  }
  q_mask.clear();
  if (train_mode && cfg.hidden_dropout > 0) {
    q_mask.assign(d, T(0));
    const T keep = T(1) - static_cast<T>(cfg.hidden_dropout);
    for (std::size_t k = 0; k < d; ++k) {
      if (!rng.bernoulli(cfg.hidden_dropout)) q_mask[k] = T(1) / keep;
      q[k] *= q_mask[k];
    }
  }
  logits.assign(n, T(0));
  for (std::size_t e = 0; e < n; ++e) logits[e] = dot(m.entity.v.row(e), q);

  const T lse = log_sum_exp<T>(logits);
  const T ls = train_mode ? static_cast<T>(cfg.label_smoothing) : T(0);
  T loss = -(T(1) - ls) * logits[tr.tail] + lse;
  if (ls > T(0)) {
    T mean_logit = 0;
    for (T v : logits) mean_logit += v;
    loss -= ls * mean_logit / static_cast<T>(n);
  }

  // g = softmax(logits) - smoothed target
  std::vector<T>& g = logits;
  softmax_inplace<T>(std::span<T>(g));
  g[tr.tail] -= T(1) - ls;
  if (ls > T(0))
    for (T& v : g) v -= ls / static_cast<T>(n);

  dq.assign(d, T(0));
  for (std::size_t e = 0; e < n; ++e) {
    if (g[e] == T(0)) continue;
    axpy<T>(m.entity.g.row(e), g[e], std::span<const T>(q));
    axpy<T>(dq, g[e], m.entity.v.row(e));
  }
  if (!q_mask.empty())
    for (std::size_t k = 0; k < d; ++k) dq[k] *= q_mask[k];
  dtmp.assign(d * d, T(0));
  auto drow = m.relation.g.row(tr.relation);
  for (std::size_t j = 0; j < d; ++j) {
    const T rj = wr[j];
    T acc = 0;
    for (std::size_t k = 0; k < d; ++k) {
      dtmp[j * d + k] = rj * dq[k];
      acc += tmp[j * d + k] * dq[k];
    }
    drow[j] += acc;
  }
  auto ehg = m.entity.g.row(tr.head);
  for (std::size_t i = 0; i < d; ++i) {
    axpy<T>(m.core.g.row(i), eh_drop[i], std::span<const T>(dtmp));
    T dh = dot(m.core.v.row(i), std::span<const T>(dtmp));
    if (!eh_mask.empty()) dh *= eh_mask[i];
    ehg[i] += dh;
  }
  return loss;
}

// Margin ranking against uniformly corrupted tails.
template <class T>
T transe_example(KgeModel<T>& m, const Triple& tr, std::size_t negatives, T margin, Rng& rng) {
  const std::size_t d = m.dim;
  const std::size_t n = m.entity.v.rows;
  const auto eh = m.entity.v.row(tr.head);
  const auto wr = m.relation.v.row(tr.relation);
  const auto et = m.entity.v.row(tr.tail);

  std::vector<T> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = eh[i] + wr[i] - et[i];
  const T dist_pos = std::sqrt(std::max(dot(v, v), T(0)));

  T loss = 0;
  std::vector<T> vn(d);
  for (std::size_t k = 0; k < negatives; ++k) {
    const auto neg = static_cast<EntityId>(rng.uniform_int(n));
    const auto en = m.entity.v.row(neg);
    for (std::size_t i = 0; i < d; ++i) vn[i] = eh[i] + wr[i] - en[i];
    const T dist_neg = std::sqrt(std::max(dot(vn, vn), T(0)));
    const T viol = margin + dist_pos - dist_neg;
    if (viol <= T(0)) continue;
    loss += viol;
    if (dist_pos > T(1e-12)) {
      const T s = T(1) / dist_pos;
      axpy(m.entity.g.row(tr.head), s, std::span<const T>(v));
      axpy(m.relation.g.row(tr.relation), s, std::span<const T>(v));
      axpy(m.entity.g.row(tr.tail), -s, std::span<const T>(v));
    }
    if (dist_neg > T(1e-12)) {
      const T s = -T(1) / dist_neg;
      axpy(m.entity.g.row(tr.head), s, std::span<const T>(vn));
      axpy(m.relation.g.row(tr.relation), s, std::span<const T>(vn));
      axpy(m.entity.g.row(neg), -s, std::span<const T>(vn));
    }
  }
  return loss;
}

}  // namespace detail

struct KgeTrainResult {
  std::vector<double> epoch_losses;
};

// Trains on the train split only; deterministic given the seed.
template <class T>
KgeTrainResult train_kge(KgeModel<T>& model, const KnowledgeGraph& kg, const KgeConfig& cfg) {
  if (!kg.augmented) throw DataError("KGE training requires the inverse-augmented graph");
  cfg.validate();
  Rng rng = Rng(cfg.seed).fork(1);
  AdamConfig<T> adam_cfg;
  adam_cfg.lr = static_cast<T>(cfg.learning_rate);
  adam_cfg.clip_norm = T(0);
  Adam<T> opt(adam_cfg);
  auto params = model.params();

  std::vector<std::size_t> order(kg.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  KgeTrainResult result;
  std::vector<T> logits, q, tmp, dq, dtmp, eh_drop, eh_mask, q_mask;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0;
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), off + cfg.batch_size);
      zero_grads(params);
      T batch_loss = 0;
      for (std::size_t k = off; k < end; ++k) {
        const Triple& tr = kg.train[order[k]];
        if (cfg.kind == KgeKind::tucker)
          batch_loss += detail::tucker_example(model, tr, cfg, true, rng, logits, q, tmp, dq, dtmp,
                                               eh_drop, eh_mask, q_mask);
        else
          batch_loss += detail::transe_example(model, tr, cfg.negatives_per_positive,
                                               static_cast<T>(cfg.margin), rng);
      }
      const auto count = static_cast<T>(end - off);
      batch_loss /= count;
      if (!std::isfinite(static_cast<double>(batch_loss)))
        throw NumericError("kge: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(off / cfg.batch_size));
      for (auto* p : params)
        for (T& g : p->g.a) g /= count;
      opt.step(params);
      if (cfg.kind == KgeKind::transe) {
        // Classic unit-ball constraint on entity rows.
        for (std::size_t e = 0; e < model.entity.v.rows; ++e) {
          auto row = model.entity.v.row(e);
          const T n2 = dot(row, row);
          if (n2 > T(1)) {
            const T inv = T(1) / std::sqrt(n2);
            for (T& x : row) x *= inv;
          }
        }
      }
      epoch_loss += static_cast<double>(batch_loss) * (end - off);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

// Raw embedding tables copied out; scaling is left to the projection layer.
template <class T>
std::pair<FeatureMatrix, FeatureMatrix> export_structural_features(const KgeModel<T>& model) {
  return {model.entity.v.template cast<float>(), model.relation.v.template cast<float>()};
}

inline void save_kge_meta(const std::filesystem::path& path, KgeKind kind, std::size_t dim,
                          std::uint64_t seed) {
  std::ofstream out(path);
  out << "kind=" << kge_kind_name(kind) << "\n" << "d_s=" << dim << "\n" << "seed=" << seed << "\n";
}

template <class T>
void save_kge(const KgeModel<T>& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto [ent, rel] = export_structural_features(model);
  save_features(ent, dir / "entity_struct.kgtf");
  save_features(rel, dir / "relation_struct.kgtf");
  if (model.kind == KgeKind::tucker) save_features(model.core.v.template cast<float>(), dir / "core.kgtf");
  save_kge_meta(dir / "kge_meta.txt", model.kind, model.dim, model.seed);
}

}  // namespace kgt
