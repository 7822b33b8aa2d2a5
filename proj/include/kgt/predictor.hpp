#pragma once

#include <span>
#include <vector>

#include "kgt/core.hpp"
#include "kgt/kg.hpp"
#include "kgt/mlp.hpp"
#include "kgt/optim.hpp"

namespace kgt {

// Full-entity scorer: a frozen pre-trained base plus a trainable low-rank
// correction, p = h * (W_base + A B)^T. B starts at zero so the initial
// scores equal the warm start exactly.
template <class T>
struct LoraScorer {
  Mat<T> base;  // |E| x d_m, frozen
  Tensor<T> a;  // |E| x rank
  Tensor<T> b;  // rank x d_m

  void init(const std::string& name, Mat<T> base_matrix, std::size_t rank, Rng& rng) {
    base = std::move(base_matrix);
    a.init(name + ".lora_a", base.rows, rank);
    b.init(name + ".lora_b", rank, base.cols);
    const T std = T(1) / std::sqrt(static_cast<T>(rank));
    for (T& v : a.v.a) v = static_cast<T>(rng.normal()) * std;
  }

  std::size_t num_entities() const { return base.rows; }
  std::size_t dim() const { return base.cols; }
  std::size_t rank() const { return a.v.cols; }
};

template <class T>
struct LoraCache {
  std::vector<T> h;  // input hidden
  std::vector<T> t;  // h * B^T
};

template <class T>
std::vector<T> lora_score(std::span<const T> h_proj, const LoraScorer<T>& s, LoraCache<T>* cache = nullptr) {
  if (h_proj.size() != s.dim())
    throw DataError("lora_score: hidden dim " + std::to_string(h_proj.size()) + " != scorer dim " +
                    std::to_string(s.dim()));
  LoraCache<T> local;
  LoraCache<T>& c = cache ? *cache : local;
  c.h.assign(h_proj.begin(), h_proj.end());
  c.t.assign(s.rank(), T(0));
  vmt_acc<T>(c.t, h_proj, s.b.v);
  std::vector<T> p(s.num_entities());
  for (std::size_t e = 0; e < p.size(); ++e)
    p[e] = dot(s.base.row(e), h_proj) + dot(s.a.v.row(e), std::span<const T>(c.t));
  return p;
}

template <class T>
void lora_score_backward(std::span<const T> dp, const LoraCache<T>& c, LoraScorer<T>& s,
                         std::span<T> dh_acc) {
  std::vector<T> dt(s.rank(), T(0));
  for (std::size_t e = 0; e < dp.size(); ++e) {
    if (dp[e] == T(0)) continue;
    axpy(dh_acc, dp[e], s.base.row(e));
    axpy<T>(dt, dp[e], s.a.v.row(e));
    axpy(s.a.g.row(e), dp[e], std::span<const T>(c.t));
  }
  outer_acc<T>(s.b.g, dt, c.h);
  vm_acc<T>(dh_acc, dt, s.b.v);
}

enum class ScalerMode { learnable, fixed_ratio };

// Trainable scalars weighting the two logit views. In fixed-ratio mode
// lambda_t = gamma and lambda_s = 1, both frozen.
template <class T>
struct LogitScalers {
  Tensor<T> lambda;  // 1 x 2: [lambda_t, lambda_s]
  ScalerMode mode = ScalerMode::learnable;
  T gamma = T(1);

  void init(ScalerMode m, T g = T(1)) {
    mode = m;
    gamma = g;
    lambda.init("scalers.lambda", 1, 2, m == ScalerMode::learnable);
    lambda.v(0, 0) = m == ScalerMode::fixed_ratio ? g : T(1);
    lambda.v(0, 1) = T(1);
  }

  T lambda_t() const { return lambda.v(0, 0); }
  T lambda_s() const { return lambda.v(0, 1); }
};

template <class T>
std::vector<T> fuse_logits(std::span<const T> p_t, std::span<const T> p_s, const LogitScalers<T>& sc) {
  if (p_t.size() != p_s.size()) throw DataError("fuse_logits: view lengths differ");
  std::vector<T> out(p_t.size());
  const T lt = sc.lambda_t(), ls = sc.lambda_s();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * (lt * p_t[i] + ls * p_s[i]);
  return out;
}

template <class T>
void fuse_logits_backward(std::span<const T> dout, std::span<const T> p_t, std::span<const T> p_s,
                          LogitScalers<T>& sc, std::span<T> dp_t, std::span<T> dp_s) {
  const T lt = sc.lambda_t(), ls = sc.lambda_s();
  T dlt = 0, dls = 0;
  for (std::size_t i = 0; i < dout.size(); ++i) {
    const T g = T(0.5) * dout[i];
    dp_t[i] += g * lt;
    dp_s[i] += g * ls;
    dlt += g * p_t[i];
    dls += g * p_s[i];
  }
  // Frozen scalers carry no gradient at all.
  if (sc.lambda.trainable) {
    sc.lambda.g(0, 0) += dlt;
    sc.lambda.g(0, 1) += dls;
  }
}

// Stable cross-entropy over the entity vocabulary.
template <class T>
T ce_loss(std::span<const T> logits, EntityId target) {
  if (target >= logits.size()) throw DataError("ce_loss: target out of range");
  return -logits[target] + log_sum_exp(logits);
}

// d(loss)/d(logits) = softmax(logits) - onehot(target).
template <class T>
std::vector<T> ce_loss_backward(std::span<const T> logits, EntityId target) {
  std::vector<T> g(logits.begin(), logits.end());
  softmax_inplace<T>(g);
  g[target] -= T(1);
  return g;
}

}  // namespace kgt
