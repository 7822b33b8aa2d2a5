#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "kgt/core.hpp"
#include "kgt/optim.hpp"
#include "kgt/rng.hpp"
#include "kgt/vocab.hpp"

namespace kgt {

enum class PromptMode { minimal, templated };

inline const char* prompt_mode_name(PromptMode m) {
  return m == PromptMode::minimal ? "minimal" : "templated";
}

inline PromptMode parse_prompt_mode(const std::string& s) {
  if (s == "minimal") return PromptMode::minimal;
  if (s == "templated") return PromptMode::templated;
  throw UsageError("unknown prompt mode: " + s + " (expected minimal|templated)");
}

struct TransformerConfig {
  std::size_t d = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t max_seq_len = 128;
  double rope_base = 10000.0;

  void validate() const {
    if (d == 0 || heads == 0) throw UsageError("backbone dims must be positive");
    if (d % heads != 0) throw UsageError("hidden dim must be divisible by head count");
    if ((d / heads) % 2 != 0) throw UsageError("head dim must be even for rotary positions");
  }

  std::size_t head_dim() const { return d / heads; }
  std::size_t ffn_dim() const { return ffn_mult * d; }
};

// Minimal: [BOS, tok(h), tok(r), QUERY]. Templated: the linguist scaffold
// with a dictionary block (descriptions rendered as scaffold word tokens)
// and the closing sentence "tok(h) tok(r) ?", where ? is the QUERY marker.
inline std::vector<TokenId> build_prompt(const Vocabulary& vocab, const KnowledgeGraph& kg, EntityId h,
                                         RelationId r, PromptMode mode, std::size_t max_seq_len) {
  if (h >= vocab.entity_count) throw DataError("build_prompt: entity id out of range");
  if (r >= vocab.relation_count) throw DataError("build_prompt: relation id out of range");
  std::vector<TokenId> out;
  if (mode == PromptMode::minimal) {
    out = {vocab.bos, vocab.entity_token(h), vocab.relation_token(r), vocab.query};
  } else {
    auto words = [&](const std::string& text) {
      for (const auto& w : tokenize_words(text)) out.push_back(vocab.word(w));
    };
    out.push_back(vocab.bos);
    words("suppose that you are an excellent linguist studying a new three word language for knowledge graph");
    words("given the following dictionary");
    out.push_back(vocab.word(":"));
    words("input type description");
    out.push_back(vocab.entity_token(h));
    words("head entity");
    words(kg.entity_text[h]);
    out.push_back(vocab.relation_token(r));
    words("relation");
    words(kg.relation_text[r]);
    words("please complete the last word");
    out.push_back(vocab.word("("));
    out.push_back(vocab.word("?"));
    out.push_back(vocab.word(")"));
    words("of the sentence");
    out.push_back(vocab.word(":"));
    out.push_back(vocab.entity_token(h));
    out.push_back(vocab.relation_token(r));
    out.push_back(vocab.query);
  }
  if (out.size() > max_seq_len)
    throw DataError("prompt length " + std::to_string(out.size()) + " exceeds max_seq_len " +
                    std::to_string(max_seq_len));
  return out;
}

// Decoder-only transformer: pre-RMSNorm, causal multi-head attention with
// rotary positions, SiLU-gated feed-forward, final RMSNorm. Optionally the
// attention query/value projections carry trainable LoRA adapters over a
// frozen base (scaled by alpha/rank).
template <class T>
struct Backbone {
  TransformerConfig cfg;
  bool attn_lora = false;
  std::size_t lora_rank = 8;
  T lora_alpha = T(16);

  struct Layer {
    Tensor<T> wq, wk, wv, wo;  // d x d
    Tensor<T> attn_gain;       // 1 x d
    Tensor<T> wg, wu;          // d x ffn
    Tensor<T> wd;              // ffn x d
    Tensor<T> ffn_gain;        // 1 x d
    Tensor<T> aq, bq, av, bv;  // LoRA adapters (optional)
  };

  Tensor<T> tok_emb;  // base vocab x d
  std::vector<Layer> layers;
  Tensor<T> final_gain;  // 1 x d

  void init(std::size_t base_vocab, const TransformerConfig& config, Rng& rng, bool lora_mode = false,
            std::size_t rank = 8, T alpha = T(16)) {
    config.validate();
    cfg = config;
    attn_lora = lora_mode;
    lora_rank = rank;
    lora_alpha = alpha;
    const std::size_t d = cfg.d, ffn = cfg.ffn_dim();
    const T sd = T(1) / std::sqrt(static_cast<T>(d));
    const T sf = T(1) / std::sqrt(static_cast<T>(ffn));
    auto fill = [&](Tensor<T>& t, T std) {
      for (T& v : t.v.a) v = static_cast<T>(rng.normal()) * std;
    };
    tok_emb.init("backbone.tok_emb", base_vocab, d);
    fill(tok_emb, sd);
    layers.assign(cfg.layers, {});
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      auto& L = layers[l];
      const std::string p = "backbone.layer" + std::to_string(l) + ".";
      const bool base_trainable = !attn_lora;
      L.wq.init(p + "wq", d, d, base_trainable);
      L.wk.init(p + "wk", d, d, base_trainable);
      L.wv.init(p + "wv", d, d, base_trainable);
      L.wo.init(p + "wo", d, d, base_trainable);
      L.wg.init(p + "wg", d, ffn, base_trainable);
      L.wu.init(p + "wu", d, ffn, base_trainable);
      L.wd.init(p + "wd", ffn, d, base_trainable);
      for (auto* t : {&L.wq, &L.wk, &L.wv, &L.wo, &L.wg, &L.wu}) fill(*t, sd);
      fill(L.wd, sf);
      L.attn_gain.init(p + "attn_gain", 1, d, base_trainable);
      L.ffn_gain.init(p + "ffn_gain", 1, d, base_trainable);
      for (T& v : L.attn_gain.v.a) v = T(1);
      for (T& v : L.ffn_gain.v.a) v = T(1);
      if (attn_lora) {
        const T sr = T(1) / std::sqrt(static_cast<T>(lora_rank));
        L.aq.init(p + "lora_aq", d, lora_rank);
        L.bq.init(p + "lora_bq", lora_rank, d);
        L.av.init(p + "lora_av", d, lora_rank);
        L.bv.init(p + "lora_bv", lora_rank, d);
        fill(L.aq, sr);
        fill(L.av, sr);
      }
    }
    final_gain.init("backbone.final_gain", 1, d);
    for (T& v : final_gain.v.a) v = T(1);
  }

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> out{&tok_emb};
    for (auto& L : layers) {
      for (auto* t : {&L.wq, &L.wk, &L.wv, &L.wo, &L.attn_gain, &L.wg, &L.wu, &L.wd, &L.ffn_gain})
        out.push_back(t);
      if (attn_lora)
        for (auto* t : {&L.aq, &L.bq, &L.av, &L.bv}) out.push_back(t);
    }
    out.push_back(&final_gain);
    return out;
  }

  struct LayerCache {
    Mat<T> x0;             // residual input
    Mat<T> an;             // attention pre-norm output
    std::vector<RmsCache<T>> an_rms;
    Mat<T> q, k, v;        // post-rope q/k, values
    Mat<T> lq, lv;         // an * A for the LoRA path
    std::vector<Mat<T>> probs;  // per head, n x n
    Mat<T> ctx;            // concatenated heads
    Mat<T> fn;             // ffn pre-norm output
    std::vector<RmsCache<T>> fn_rms;
    Mat<T> gpre, upre;     // ffn gate/up pre-activations
  };

  struct Cache {
    std::vector<LayerCache> layers;
    Mat<T> top;  // input to the final norm
    RmsCache<T> final_rms;
  };

  T rope_theta(std::size_t pair) const {
    return static_cast<T>(
        std::pow(cfg.rope_base, -2.0 * static_cast<double>(pair) / static_cast<double>(head_dim())));
  }
  std::size_t head_dim() const { return cfg.head_dim(); }

  void apply_rope(Mat<T>& m, bool inverse) const {
    const std::size_t hd = head_dim();
    for (std::size_t pos = 0; pos < m.rows; ++pos) {
      auto row = m.row(pos);
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        for (std::size_t c = 0; c + 1 < hd; c += 2) {
          const T angle = static_cast<T>(pos) * rope_theta(c / 2);
          const T cs = std::cos(angle), sn = inverse ? -std::sin(angle) : std::sin(angle);
          const T x0 = row[h * hd + c], x1 = row[h * hd + c + 1];
          row[h * hd + c] = x0 * cs - x1 * sn;
          row[h * hd + c + 1] = x0 * sn + x1 * cs;
        }
      }
    }
  }

  // q/k/v projection with the optional LoRA branch; la caches an * A.
  void qv_project(const Mat<T>& an, const Tensor<T>& w, const Tensor<T>* a, const Tensor<T>* b,
                  Mat<T>& out, Mat<T>* la) const {
    out = Mat<T>(an.rows, cfg.d);
    addmm(out, an, w.v);
    if (attn_lora && a && b) {
      *la = Mat<T>(an.rows, lora_rank);
      addmm(*la, an, a->v);
      const T s = lora_alpha / static_cast<T>(lora_rank);
      Mat<T> delta(an.rows, cfg.d);
      addmm(delta, *la, b->v);
      for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += s * delta.a[i];
    }
  }

  // Returns the pre-final-norm hidden states; h_n comes from forward().
  Mat<T> forward_hidden(const Mat<T>& embeddings, Cache* cache) const {
    const std::size_t n = embeddings.rows, d = cfg.d, hd = head_dim();
    if (n == 0) throw DataError("backbone: empty sequence");
    if (embeddings.cols != d) throw DataError("backbone: embedding dim mismatch");
    const T inv_sqrt_hd = T(1) / std::sqrt(static_cast<T>(hd));
    Mat<T> h = embeddings;
    if (cache) cache->layers.assign(layers.size(), {});
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& L = layers[l];
      LayerCache local;
      LayerCache& c = cache ? cache->layers[l] : local;
      c.x0 = h;
      c.an = Mat<T>(n, d);
      c.an_rms.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        rmsnorm<T>(c.x0.row(i), L.attn_gain.v.row(0), c.an.row(i), &c.an_rms[i]);
      qv_project(c.an, L.wq, &L.aq, &L.bq, c.q, &c.lq);
      c.k = Mat<T>(n, d);
      addmm(c.k, c.an, L.wk.v);
      qv_project(c.an, L.wv, &L.av, &L.bv, c.v, &c.lv);
      apply_rope(c.q, false);
      apply_rope(c.k, false);

      c.ctx = Mat<T>(n, d);
      c.probs.assign(cfg.heads, Mat<T>());
      for (std::size_t head = 0; head < cfg.heads; ++head) {
        Mat<T>& probs = c.probs[head];
        probs = Mat<T>(n, n);
        const std::size_t off = head * hd;
        for (std::size_t i = 0; i < n; ++i) {
          auto prow = probs.row(i);
          for (std::size_t j = 0; j <= i; ++j) {
            T s = 0;
            for (std::size_t x = 0; x < hd; ++x) s += c.q(i, off + x) * c.k(j, off + x);
            prow[j] = s * inv_sqrt_hd;
          }
          softmax_inplace<T>(prow.subspan(0, i + 1));
          for (std::size_t j = 0; j <= i; ++j) {
            const T p = prow[j];
            if (p == T(0)) continue;
            for (std::size_t x = 0; x < hd; ++x) c.ctx(i, off + x) += p * c.v(j, off + x);
          }
        }
      }
      Mat<T> x1 = c.x0;
      addmm(x1, c.ctx, L.wo.v);

      c.fn = Mat<T>(n, d);
      c.fn_rms.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        rmsnorm<T>(x1.row(i), L.ffn_gain.v.row(0), c.fn.row(i), &c.fn_rms[i]);
      const std::size_t ffn = cfg.ffn_dim();
      c.gpre = Mat<T>(n, ffn);
      c.upre = Mat<T>(n, ffn);
      addmm(c.gpre, c.fn, L.wg.v);
      addmm(c.upre, c.fn, L.wu.v);
      Mat<T> act(n, ffn);
      for (std::size_t i = 0; i < act.a.size(); ++i) act.a[i] = silu(c.gpre.a[i]) * c.upre.a[i];
      h = std::move(x1);
      addmm(h, act, L.wd.v);
      if (!h.all_finite())
        throw NumericError("backbone: non-finite activation in layer " + std::to_string(l));
    }
    if (cache) cache->top = h;
    return h;
  }

  // Final hidden state of the last position, after the final norm.
  std::vector<T> forward(const Mat<T>& embeddings, Cache* cache = nullptr) const {
    Mat<T> h = forward_hidden(embeddings, cache);
    std::vector<T> out(cfg.d);
    RmsCache<T> local;
    rmsnorm<T>(h.row(h.rows - 1), final_gain.v.row(0), out, cache ? &cache->final_rms : &local);
    return out;
  }

  // All positions through the final norm; evaluation/tests only.
  Mat<T> forward_states(const Mat<T>& embeddings) const {
    Mat<T> h = forward_hidden(embeddings, nullptr);
    Mat<T> out(h.rows, cfg.d);
    for (std::size_t i = 0; i < h.rows; ++i) rmsnorm<T>(h.row(i), final_gain.v.row(0), out.row(i), nullptr);
    return out;
  }

  // Backpropagates d(loss)/d(h_n) to the input embeddings and accumulates
  // parameter gradients.
  Mat<T> backward(std::span<const T> dh_n, const Cache& cache) {
    const std::size_t n = cache.top.rows, d = cfg.d, hd = head_dim();
    const T inv_sqrt_hd = T(1) / std::sqrt(static_cast<T>(hd));
    Mat<T> dh(n, d);
    rmsnorm_backward<T>(dh_n, cache.final_rms, final_gain.v.row(0), dh.row(n - 1), final_gain.g.row(0));

    for (std::size_t li = layers.size(); li-- > 0;) {
      Layer& L = layers[li];
      const LayerCache& c = cache.layers[li];
      const std::size_t ffn = cfg.ffn_dim();

      // ffn block
      Mat<T> dact(n, ffn);
      addmm_bt(dact, dh, L.wd.v);
      Mat<T> act(n, ffn);
      for (std::size_t i = 0; i < act.a.size(); ++i) act.a[i] = silu(c.gpre.a[i]) * c.upre.a[i];
      addmm_at(L.wd.g, act, dh);
      Mat<T> dgpre(n, ffn), dupre(n, ffn);
      for (std::size_t i = 0; i < dact.a.size(); ++i) {
        dgpre.a[i] = dact.a[i] * c.upre.a[i] * silu_grad(c.gpre.a[i]);
        dupre.a[i] = dact.a[i] * silu(c.gpre.a[i]);
      }
      addmm_at(L.wg.g, c.fn, dgpre);
      addmm_at(L.wu.g, c.fn, dupre);
      Mat<T> dfn(n, d);
      addmm_bt(dfn, dgpre, L.wg.v);
      addmm_bt(dfn, dupre, L.wu.v);
      // dh currently holds d(x2); x2 = x1 + ffn(fn(x1)) so the residual
      // gradient carries through and the norm backward adds into it.
      for (std::size_t i = 0; i < n; ++i)
        rmsnorm_backward<T>(dfn.row(i), c.fn_rms[i], L.ffn_gain.v.row(0), dh.row(i), L.ffn_gain.g.row(0));

      // attention block
      Mat<T> dctx(n, d);
      addmm_bt(dctx, dh, L.wo.v);
      addmm_at(L.wo.g, c.ctx, dh);
      Mat<T> dq(n, d), dk(n, d), dv(n, d);
      for (std::size_t head = 0; head < cfg.heads; ++head) {
        const Mat<T>& probs = c.probs[head];
        const std::size_t off = head * hd;
        for (std::size_t i = 0; i < n; ++i) {
          // dprobs then softmax backward, row i attends to j <= i
          T inner = 0;
          std::vector<T> dp(i + 1);
          for (std::size_t j = 0; j <= i; ++j) {
            T s = 0;
            for (std::size_t x = 0; x < hd; ++x) s += dctx(i, off + x) * c.v(j, off + x);
            dp[j] = s;
            inner += s * probs(i, j);
            for (std::size_t x = 0; x < hd; ++x) dv(j, off + x) += probs(i, j) * dctx(i, off + x);
          }
          for (std::size_t j = 0; j <= i; ++j) {
            const T ds = probs(i, j) * (dp[j] - inner) * inv_sqrt_hd;
            if (ds == T(0)) continue;
            for (std::size_t x = 0; x < hd; ++x) {
              dq(i, off + x) += ds * c.k(j, off + x);
              dk(j, off + x) += ds * c.q(i, off + x);
            }
          }
        }
      }
      apply_rope(dq, true);
      apply_rope(dk, true);

      Mat<T> dan(n, d);
      addmm_bt(dan, dk, L.wk.v);
      addmm_at(L.wk.g, c.an, dk);
      auto qv_backward = [&](const Mat<T>& dout, Tensor<T>& w, Tensor<T>* a, Tensor<T>* b,
                             const Mat<T>& la) {
        addmm_bt(dan, dout, w.v);
        addmm_at(w.g, c.an, dout);
        if (attn_lora && a && b) {
          const T s = lora_alpha / static_cast<T>(lora_rank);
          Mat<T> dscaled = dout;
          for (T& x : dscaled.a) x *= s;
          addmm_at(b->g, la, dscaled);
          Mat<T> dla(n, lora_rank);
          addmm_bt(dla, dscaled, b->v);
          addmm_at(a->g, c.an, dla);
          addmm_bt(dan, dla, a->v);
        }
      };
      qv_backward(dq, L.wq, &L.aq, &L.bq, c.lq);
      qv_backward(dv, L.wv, &L.av, &L.bv, c.lv);

      Mat<T> dx0(n, d);
      for (std::size_t i = 0; i < n; ++i)
        rmsnorm_backward<T>(dan.row(i), c.an_rms[i], L.attn_gain.v.row(0), dx0.row(i),
                            L.attn_gain.g.row(0));
      for (std::size_t i = 0; i < dh.a.size(); ++i) dh.a[i] += dx0.a[i];
    }
    return dh;
  }
};

}  // namespace kgt
