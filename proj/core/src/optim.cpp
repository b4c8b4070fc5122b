#include "agb/optim.hpp"

#include <algorithm>
#include <cmath>

namespace agb::ad {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParamSet<T>& params, AdamConfig cfg) {
  AdamState s;
  s.config = cfg;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.size(), T(0));
    s.v.emplace_back(p.value.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(ParamSet<T>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state, double lr,
               Direction direction) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  if (grads.size() != params.size()) throw Error("adam_step: gradient count does not match parameter count");
  if (state.m.size() != params.size()) state = AdamState<T>::zeros_like(params, state.config);
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc_m = 1.0 - std::pow(c.beta_m, t);
  const double bc_v = 1.0 - std::pow(c.beta_v, t);
  const double sign = direction == Direction::minimize ? -1.0 : 1.0;
  std::size_t k = 0;
  for (auto& p : params) {
    const auto& g = grads[k];
    if (g.size() != p.value.size()) throw ShapeError("adam_step: gradient size mismatch for " + p.name);
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double mi = c.beta_m * m[i] + (1.0 - c.beta_m) * gi;
      const double vi = c.beta_v * v[i] + (1.0 - c.beta_v) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = lr * (mi / bc_m) / (std::sqrt(vi / bc_v) + c.eps);
      p.value[i] = static_cast<T>(p.value[i] + sign * step);
    }
    ++k;
  }
}

template <typename T>
void adam_step(ParamSet<T>& params, const BoundParams<T>& bound, const GradientMap<T>& grads, AdamState<T>& state,
               double lr, Direction direction) {
  std::vector<std::vector<T>> ordered;
  ordered.reserve(params.size());
  for (const auto& p : params) {
    const auto& t = bound.at(p.name);
    if (!grads.contains(t)) throw Error("adam_step: missing gradient for parameter " + p.name);
    ordered.push_back(grads.at(t));
  }
  adam_step(params, ordered, state, lr, direction);
}

template <typename T>
void clip_params(ParamSet<T>& params, double c, const std::function<bool(const std::string&)>& select) {
  if (!(c > 0.0)) throw ConfigError("clip_params: c must be positive");
  const T lo = static_cast<T>(-c), hi = static_cast<T>(c);
  for (auto& p : params) {
    if (select && !select(p.name)) continue;
    for (auto& v : p.value) v = std::clamp(v, lo, hi);
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParamSet<float>&, const BoundParams<float>&, const GradientMap<float>&, AdamState<float>&,
                        double, Direction);
template void adam_step(ParamSet<double>&, const BoundParams<double>&, const GradientMap<double>&, AdamState<double>&,
                        double, Direction);
template void adam_step(ParamSet<float>&, const std::vector<std::vector<float>>&, AdamState<float>&, double, Direction);
template void adam_step(ParamSet<double>&, const std::vector<std::vector<double>>&, AdamState<double>&, double,
                        Direction);
template void clip_params(ParamSet<float>&, double, const std::function<bool(const std::string&)>&);
template void clip_params(ParamSet<double>&, double, const std::function<bool(const std::string&)>&);

}  // namespace agb::ad
