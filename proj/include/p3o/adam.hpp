#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "p3o/param_store.hpp"

namespace p3o {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam moments, one slot per parameter entry in store order.
template <class T>
struct AdamStateT {
  struct Slot {
    std::string name;
    std::vector<T> m;
    std::vector<T> v;
  };
  int64_t step = 0;
  std::vector<Slot> slots;

  static AdamStateT init(const ParamStoreT<T>& params) {
    AdamStateT st;
    for (const auto& e : params.entries()) {
      st.slots.push_back(Slot{e.name, std::vector<T>(size_t(e.tensor.size()), T(0)),
                              std::vector<T>(size_t(e.tensor.size()), T(0))});
    }
    return st;
  }
};

using AdamState = AdamStateT<float>;

// Applies one update to the trainable entries; frozen entries are untouched
// (bit-identical), including their moment slots.
template <class T>
void adam_step(ParamStoreT<T>& params, AdamStateT<T>& state, double lr,
               const AdamConfig& cfg = {}) {
  require(state.slots.size() == params.entries().size(),
          "adam state does not match parameter store layout");
  state.step += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, double(state.step));
  const double corr2 = 1.0 - std::pow(b2, double(state.step));
  for (size_t i = 0; i < state.slots.size(); ++i) {
    auto& e = params.entries()[i];
    auto& slot = state.slots[i];
    require(slot.name == e.name, "adam slot order mismatch at " + e.name);
    if (!e.trainable) continue;
    require(e.tensor.grad.size() == e.tensor.data.size(),
            "gradient shape mismatch for " + e.name);
    require(slot.m.size() == e.tensor.data.size(), "adam moment shape mismatch for " + e.name);
    T* p = e.tensor.data.data();
    const T* g = e.tensor.grad.data();
    T* m = slot.m.data();
    T* v = slot.v.data();
    const size_t n = e.tensor.data.size();
    for (size_t k = 0; k < n; ++k) {
      m[k] = T(b1 * double(m[k]) + (1.0 - b1) * double(g[k]));
      v[k] = T(b2 * double(v[k]) + (1.0 - b2) * double(g[k]) * double(g[k]));
      const double mhat = double(m[k]) / corr1;
      const double vhat = double(v[k]) / corr2;
      p[k] = T(double(p[k]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace p3o
