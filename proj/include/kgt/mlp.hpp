#pragma once

#include <span>
#include <vector>

#include "kgt/core.hpp"
#include "kgt/optim.hpp"
#include "kgt/rng.hpp"

namespace kgt {

// Shared block for the modality projectors and the predictor head MLPs:
// RMSNorm(SiLU(Dropout(x) * W)) with a learnable gain and no bias. Dropout
// uses inverted scaling and is active only in train mode.
template <class T>
struct ProjectionBlock {
  Tensor<T> weight;  // in x out
  Tensor<T> gain;    // 1 x out
  T dropout_rate = T(0);

  void init(const std::string& name, std::size_t in, std::size_t out, Rng& rng, T dropout = T(0)) {
    weight.init(name + ".weight", in, out);
    gain.init(name + ".gain", 1, out);
    const T std = T(1) / std::sqrt(static_cast<T>(in));
    for (T& v : weight.v.a) v = static_cast<T>(rng.normal()) * std;
    for (T& v : gain.v.a) v = T(1);
    dropout_rate = dropout;
  }

  std::size_t in_dim() const { return weight.v.rows; }
  std::size_t out_dim() const { return weight.v.cols; }
};

template <class T>
struct ProjectionCache {
  std::vector<T> x_dropped;  // input after dropout
  std::vector<T> drop_scale;  // per-element scale; empty when dropout inactive
  std::vector<T> pre;        // x_dropped * W
  RmsCache<T> rms;
};

template <class T>
std::vector<T> project(std::span<const T> x, const ProjectionBlock<T>& p, bool train_mode, Rng& rng,
                       ProjectionCache<T>* cache = nullptr) {
  if (x.size() != p.in_dim())
    throw DataError("projection input dimension " + std::to_string(x.size()) + " != expected " +
                    std::to_string(p.in_dim()));
  const std::size_t out = p.out_dim();
  ProjectionCache<T> local;
  ProjectionCache<T>& c = cache ? *cache : local;

  c.x_dropped.assign(x.begin(), x.end());
  c.drop_scale.clear();
  if (train_mode && p.dropout_rate > T(0)) {
    c.drop_scale.assign(x.size(), T(0));
    const T keep = T(1) - p.dropout_rate;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!rng.bernoulli(static_cast<double>(p.dropout_rate))) c.drop_scale[i] = T(1) / keep;
      c.x_dropped[i] *= c.drop_scale[i];
    }
  }
  c.pre.assign(out, T(0));
  vm_acc<T>(c.pre, c.x_dropped, p.weight.v);
  std::vector<T> act(out);
  for (std::size_t i = 0; i < out; ++i) act[i] = silu(c.pre[i]);
  std::vector<T> y(out);
  rmsnorm<T>(act, p.gain.v.row(0), y, &c.rms);
  return y;
}

// Accumulates into the block's own gradients; dx_acc may be empty when the
// input gradient is not needed (frozen raw features).
template <class T>
void project_backward(std::span<const T> dy, const ProjectionCache<T>& c, ProjectionBlock<T>& p,
                      std::span<T> dx_acc = {}) {
  const std::size_t out = p.out_dim();
  std::vector<T> dact(out, T(0));
  rmsnorm_backward<T>(dy, c.rms, p.gain.v.row(0), dact, p.gain.g.row(0));
  std::vector<T> dpre(out);
  for (std::size_t i = 0; i < out; ++i) dpre[i] = dact[i] * silu_grad(c.pre[i]);
  outer_acc<T>(p.weight.g, c.x_dropped, dpre);
  if (!dx_acc.empty()) {
    std::vector<T> dxd(p.in_dim(), T(0));
    vmt_acc<T>(dxd, std::span<const T>(dpre), p.weight.v);
    if (c.drop_scale.empty()) {
      for (std::size_t i = 0; i < dxd.size(); ++i) dx_acc[i] += dxd[i];
    } else {
      for (std::size_t i = 0; i < dxd.size(); ++i) dx_acc[i] += dxd[i] * c.drop_scale[i];
    }
  }
}

}  // namespace kgt
