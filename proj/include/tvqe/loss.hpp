#pragma once

#include <json.hpp>

#include "tvqe/ops.hpp"

namespace tvqe {

struct LossConfig {
  double alpha = 1.0;
  double beta = 0.0;
  double epsilon = 1e-6;

  void validate() const {
    if (alpha < 0 || beta < 0)
      throw ConfigError("LossConfig: alpha and beta must be >= 0");
    if (!(epsilon > 0)) throw ConfigError("LossConfig: epsilon must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{
      {"alpha", c.alpha}, {"beta", c.beta}, {"epsilon", c.epsilon}};
}

inline void from_json(const nlohmann::json& j, LossConfig& c) {
  if (!j.is_object()) throw ConfigError("loss config must be a JSON object");
  for (auto& [key, val] : j.items()) {
    if (key == "alpha") c.alpha = val.get<double>();
    else if (key == "beta") c.beta = val.get<double>();
    else if (key == "epsilon") c.epsilon = val.get<double>();
    else throw ConfigError("unknown loss config key: " + key);
  }
}

namespace detail {
template <class S>
void check_same_extents(const Tensor<S>& pred, const Tensor<S>& target,
                        const char* who) {
  if (pred.shape() != target.shape())
    throw DimensionError(std::string(who) + ": extent mismatch " +
                         shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
}
}  // namespace detail

// mean over elements of sqrt((pred-target)^2 + epsilon). Smooth at
// pred == target, where it evaluates to sqrt(epsilon) exactly.
template <class S>
Tensor<S> charbonnier_loss(const Tensor<S>& pred, const Tensor<S>& target,
                           double epsilon = 1e-6) {
  detail::check_same_extents(pred, target, "charbonnier_loss");
  if (!(epsilon > 0)) throw ConfigError("charbonnier_loss: epsilon must be > 0");
  auto d = sub(pred, target);
  return mean(sqrt(add_scalar(mul(d, d), epsilon)));
}

template <class S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  detail::check_same_extents(pred, target, "mse_loss");
  auto d = sub(pred, target);
  return mean(mul(d, d));
}

// alpha * charbonnier + beta * mse. The stage settings (1,0) and (0,1)
// reproduce the single losses exactly: scaling by 1 and adding a zero term
// changes no bits.
template <class S>
Tensor<S> combined_loss(const Tensor<S>& pred, const Tensor<S>& target,
                        const LossConfig& cfg) {
  cfg.validate();
  return add(scale(charbonnier_loss(pred, target, cfg.epsilon), cfg.alpha),
             scale(mse_loss(pred, target), cfg.beta));
}

}  // namespace tvqe
