#pragma once

#include "afusion/model.hpp"

namespace afusion {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

// Adam with decoupled weight decay (lr * wd * theta added to the update).
// Frozen parameters are never stepped and never acquire moment state; a
// parameter's bias-correction clock starts at its first actual update.
template <typename S>
class Adam {
 public:
  struct Slot {
    Tensor<S> m, v;
    std::int64_t t = 0;
  };

  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::vector<Slot>& slots() { return slots_; }

  void step(ParamStore<S>& params, double lr) {
    auto& entries = params.entries();
    if (slots_.size() != entries.size()) slots_.resize(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      if (!e.var.requires_grad()) continue;
      Tensor<S>& g = e.var.grad();  // zeros if the loss never touched it
      const S* gd = g.data();
      const Index n = g.numel();
      for (Index k = 0; k < n; ++k)
        if (!std::isfinite(static_cast<double>(gd[k])))
          throw std::runtime_error("adam: non-finite gradient in parameter '" + e.name +
                                   "' at element " + std::to_string(k) +
                                   "; aborting the run");
      Slot& s = slots_[i];
      if (s.t == 0) {
        s.m = Tensor<S>::zeros(g.shape());
        s.v = Tensor<S>::zeros(g.shape());
      }
      ++s.t;
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
      S* md = s.m.data();
      S* vd = s.v.data();
      S* p = e.var.mutable_value().data();
      for (Index k = 0; k < n; ++k) {
        const double gk = gd[k];
        const double m_new = cfg_.beta1 * md[k] + (1.0 - cfg_.beta1) * gk;
        const double v_new = cfg_.beta2 * vd[k] + (1.0 - cfg_.beta2) * gk * gk;
        md[k] = static_cast<S>(m_new);
        vd[k] = static_cast<S>(v_new);
        const double m_hat = m_new / c1;
        const double v_hat = v_new / c2;
        p[k] = static_cast<S>(p[k] - lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                           cfg_.weight_decay * p[k]));
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Slot> slots_;
};

}  // namespace afusion
