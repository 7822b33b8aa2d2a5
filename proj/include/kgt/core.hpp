#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgt {

// Error taxonomy, mapped to CLI exit codes (usage=2, data=3, numeric=4).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct ParseError : DataError {
  using DataError::DataError;
};
struct FormatError : DataError {
  using DataError::DataError;
};
struct NumericError : Error {
  using Error::Error;
};

// Dense row-major matrix. Vectors are 1xN or plain std::vector + spans.
template <class T>
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<T> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), a(r * c, fill) {}

  T& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  std::span<T> row(std::size_t i) { return {a.data() + i * cols, cols}; }
  std::span<const T> row(std::size_t i) const { return {a.data() + i * cols, cols}; }

  std::size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), T(0)); }

  bool all_finite() const {
    for (const T& v : a)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class U>
  Mat<U> cast() const {
    Mat<U> m(rows, cols);
    for (std::size_t i = 0; i < a.size(); ++i) m.a[i] = static_cast<U>(a[i]);
    return m;
  }

  bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && a == o.a; }
};

// The read-only operands are generic so spans, const spans, and vectors all
// deduce cleanly.
template <class X, class Y>
auto dot(const X& x, const Y& y) {
  std::remove_cvref_t<decltype(x[0] * y[0])> s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

template <class T, class X>
void axpy(std::span<T> y, std::type_identity_t<T> a, const X& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// y += x * W, with x of length W.rows and y of length W.cols.
template <class T, class X>
void vm_acc(std::span<T> y, const X& x, const Mat<T>& W) {
  for (std::size_t k = 0; k < W.rows; ++k) {
    const T xv = x[k];
    if (xv == T(0)) continue;
    axpy(y, xv, W.row(k));
  }
}

// y += x * W^T, with x of length W.cols and y of length W.rows.
template <class T, class X>
void vmt_acc(std::span<T> y, const X& x, const Mat<T>& W) {
  for (std::size_t k = 0; k < W.rows; ++k) y[k] += dot(W.row(k), x);
}

// G += outer(x, y), with G of shape x.size() by y.size().
template <class T, class X, class Y>
void outer_acc(Mat<T>& G, const X& x, const Y& y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == T(0)) continue;
    axpy(G.row(i), x[i], y);
  }
}

// C += A * B
template <class T>
void addmm(Mat<T>& C, const Mat<T>& A, const Mat<T>& B) {
  for (std::size_t i = 0; i < A.rows; ++i) vm_acc(C.row(i), A.row(i), B);
}

// C += A^T * B, with A n x k, B n x m, C k x m.
template <class T>
void addmm_at(Mat<T>& C, const Mat<T>& A, const Mat<T>& B) {
  for (std::size_t i = 0; i < A.rows; ++i) outer_acc(C, A.row(i), B.row(i));
}

// C += A * B^T, with A n x m, B k x m, C n x k.
template <class T>
void addmm_bt(Mat<T>& C, const Mat<T>& A, const Mat<T>& B) {
  for (std::size_t i = 0; i < A.rows; ++i) vmt_acc(C.row(i), A.row(i), B);
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
T silu(T x) {
  return x * sigmoid(x);
}

template <class T>
T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

template <class T>
T softplus(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

// In-place stable softmax over a span.
template <class T>
void softmax_inplace(std::span<T> v) {
  T m = -std::numeric_limits<T>::infinity();
  for (T x : v) m = std::max(m, x);
  T s = 0;
  for (T& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (T& x : v) x /= s;
}

template <class T>
T log_sum_exp(std::span<const T> v) {
  T m = -std::numeric_limits<T>::infinity();
  for (T x : v) m = std::max(m, x);
  T s = 0;
  for (T x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline constexpr double kRmsEps = 1e-6;
inline constexpr double kRmsZeroGuard = 1e-12;

// RMSNorm with learnable gain. If the root-mean-square of x falls below the
// zero guard the input passes through unscaled.
template <class T>
struct RmsCache {
  std::vector<T> x;
  T inv = 0;
  bool guarded = false;
};

template <class T>
void rmsnorm(std::span<const T> x, std::span<const T> gain, std::span<T> y, RmsCache<T>* cache = nullptr) {
  const std::size_t d = x.size();
  T ms = 0;
  for (T v : x) ms += v * v;
  ms /= static_cast<T>(d);
  const bool guarded = std::sqrt(ms) < static_cast<T>(kRmsZeroGuard);
  T inv = 0;
  if (guarded) {
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i];
  } else {
    inv = T(1) / std::sqrt(ms + static_cast<T>(kRmsEps));
    for (std::size_t i = 0; i < d; ++i) y[i] = gain[i] * x[i] * inv;
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->inv = inv;
    cache->guarded = guarded;
  }
}

template <class T>
void rmsnorm_backward(std::span<const T> dy, const RmsCache<T>& c, std::span<const T> gain,
                      std::span<T> dx_acc, std::span<T> dgain_acc) {
  const std::size_t d = c.x.size();
  if (c.guarded) {
    for (std::size_t i = 0; i < d; ++i) dx_acc[i] += dy[i];
    return;
  }
  T s = 0;
  for (std::size_t i = 0; i < d; ++i) s += dy[i] * gain[i] * c.x[i];
  const T k = c.inv * c.inv * c.inv * s / static_cast<T>(d);
  for (std::size_t i = 0; i < d; ++i) {
    dx_acc[i] += dy[i] * gain[i] * c.inv - c.x[i] * k;
    dgain_acc[i] += dy[i] * c.x[i] * c.inv;
  }
}

template <class T>
void check_finite(std::span<const T> v, const std::string& what) {
  for (T x : v)
    if (!std::isfinite(static_cast<double>(x))) throw NumericError("non-finite value in " + what);
}

}  // namespace kgt
