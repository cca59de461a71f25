#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace p3o {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor with an optional gradient buffer of identical shape.
// double in gradient-check mode, float in training mode.
template <class T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until zero_grad()

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(size_t(numel(shape)), T(0));
  }
  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(int64_t(data.size()) == numel(shape),
            "tensor data length " + std::to_string(data.size()) +
                " does not match shape " + shape_str(shape));
  }

  static int64_t numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int e : s) {
      require(e > 0, "tensor extent must be positive, got " + std::to_string(e));
      n *= e;
    }
    return n;
  }

  int64_t size() const { return int64_t(data.size()); }
  int dim(int i) const { return shape[size_t(i)]; }
  int ndim() const { return int(shape.size()); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  void zero_grad() { grad.assign(data.size(), T(0)); }
  bool has_grad() const { return !grad.empty(); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int> s, T v) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace p3o
