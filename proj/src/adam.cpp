#include <cmath>

#include "durn/error.hpp"
#include "durn/optim.hpp"

namespace durn {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg) {
  cfg.validate();
  // Check everything first so a missing gradient leaves no partial update.
  for (const auto& e : params.entries()) {
    if (!e.trainable || e.frozen) continue;
    const Tensor* g = grads.find(e.tensor);
    if (!g) throw ContractError("no gradient for parameter '" + e.name + "'");
    if (g->shape() != e.tensor.shape())
      throw ContractError("gradient shape mismatch for parameter '" + e.name + "'");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& e : params.entries()) {
    if (!e.trainable || e.frozen) continue;
    const Tensor& g = *grads.find(e.tensor);
    auto& m = state.m[e.name];
    auto& v = state.v[e.name];
    if (!m.defined()) m = Tensor(e.tensor.shape(), e.tensor.dtype());
    if (!v.defined()) v = Tensor(e.tensor.shape(), e.tensor.dtype());
    dispatch(e.tensor.dtype(), [&](auto tag) {
      using T = decltype(tag);
      T* p = e.tensor.data<T>();
      T* pm = m.data<T>();
      T* pv = v.data<T>();
      const Tensor gc = g.dtype() == e.tensor.dtype() ? g : g.to(e.tensor.dtype());
      const T* pg = gc.data<T>();
      for (std::int64_t i = 0, n = e.tensor.numel(); i < n; ++i) {
        const double gi = pg[i];
        const double mi = cfg.beta1 * pm[i] + (1.0 - cfg.beta1) * gi;
        const double vi = cfg.beta2 * pv[i] + (1.0 - cfg.beta2) * gi * gi;
        pm[i] = static_cast<T>(mi);
        pv[i] = static_cast<T>(vi);
        const double mhat = mi / bc1, vhat = vi / bc2;
        p[i] = static_cast<T>(p[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
      }
    });
  }
}

}  // namespace durn
