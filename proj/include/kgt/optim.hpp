#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "kgt/core.hpp"

namespace kgt {

// A named parameter with its gradient accumulator. Frozen tensors keep
// trainable = false and are skipped by the optimizer.
template <class T>
struct Tensor {
  std::string name;
  Mat<T> v;
  Mat<T> g;
  bool trainable = true;

  void init(std::string n, std::size_t rows, std::size_t cols, bool train = true) {
    name = std::move(n);
    v = Mat<T>(rows, cols);
    g = Mat<T>(rows, cols);
    trainable = train;
  }
};

template <class T>
void zero_grads(const std::vector<Tensor<T>*>& params) {
  for (auto* p : params) p->g.zero();
}

template <class T>
struct AdamConfig {
  T lr = T(2e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(0);
  T clip_norm = T(1.0);  // global norm; <= 0 disables clipping
};

template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig<T> cfg = {}) : cfg_(cfg) {}

  // Clips the global gradient norm across trainable tensors, then applies
  // one update. Gradients are left untouched for the caller to zero.
  void step(const std::vector<Tensor<T>*>& params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->v.rows, p->v.cols);
        v_.emplace_back(p->v.rows, p->v.cols);
      }
    }
    ++t_;
    T scale = T(1);
    if (cfg_.clip_norm > T(0)) {
      double norm2 = 0;
      for (auto* p : params)
        if (p->trainable)
          for (T g : p->g.a) norm2 += static_cast<double>(g) * g;
      const double norm = std::sqrt(norm2);
      if (norm > static_cast<double>(cfg_.clip_norm)) scale = static_cast<T>(cfg_.clip_norm / norm);
    }
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i];
      if (!p.trainable) continue;
      for (std::size_t k = 0; k < p.v.size(); ++k) {
        const T g = p.g.a[k] * scale;
        m_[i].a[k] = cfg_.beta1 * m_[i].a[k] + (T(1) - cfg_.beta1) * g;
        v_[i].a[k] = cfg_.beta2 * v_[i].a[k] + (T(1) - cfg_.beta2) * g * g;
        const T mhat = m_[i].a[k] / bc1;
        const T vhat = v_[i].a[k] / bc2;
        if (cfg_.weight_decay > T(0)) p.v.a[k] -= cfg_.lr * cfg_.weight_decay * p.v.a[k];
        p.v.a[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig<T> cfg_;
  std::vector<Mat<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace kgt
