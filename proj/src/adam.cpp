#include "acseq/adam.hpp"

#include <cmath>

#include "acseq/errors.hpp"

namespace acseq::core {

void adam_step(ParamStore& store, AdamState& st) {
  if (st.m.size() != store.count()) {
    st.m.assign(store.count(), {});
    st.v.assign(store.count(), {});
    for (ParamId i = 0; i < store.count(); ++i) {
      st.m[i].assign(store[i].size(), 0.0);
      st.v[i].assign(store[i].size(), 0.0);
    }
  }
  for (ParamId i = 0; i < store.count(); ++i) {
    for (double g : store[i].grad) {
      if (!std::isfinite(g)) {
        throw TrainingDiverged("non-finite gradient in parameter " + store[i].name, store[i].name);
      }
    }
  }
  st.t += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (ParamId i = 0; i < store.count(); ++i) {
    Param& p = store[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * g;
      v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.value[k] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
    for (double x : p.value) {
      if (!std::isfinite(x)) throw TrainingDiverged("parameter " + p.name + " became non-finite", p.name);
    }
  }
}

}  // namespace acseq::core
