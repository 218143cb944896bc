#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lccn/graph.hpp"

namespace lccn {

// Inverse-sqrt learning rate with linear warmup:
//   lr(step) = d^-0.5 * min(step^-0.5, step * warmup^-1.5)
struct NoamSchedule {
  int model_dim = 64;
  int warmup_steps = 4000;

  double lr(long long step) const {
    if (step < 1) throw std::invalid_argument("schedule step starts at 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup_steps);
    return std::pow(static_cast<double>(model_dim), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
  }
};

inline double noam_lr(int model_dim, int warmup_steps, long long step) {
  return NoamSchedule{model_dim, warmup_steps}.lr(step);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Adam with bias correction. Moments are kept per parameter, aligned with
// the registry by index. Grads are consumed but not cleared here.
class Adam {
 public:
  explicit Adam(const ParamRegistry& params, AdamConfig cfg = {}) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Tensor::zeros_like(params.at(i).value()));
      v_.push_back(Tensor::zeros_like(params.at(i).value()));
    }
  }

  long long step_count() const { return step_; }

  void step(ParamRegistry& params, double lr) {
    if (params.size() != m_.size())
      throw std::invalid_argument("optimizer state does not match parameter registry");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = params.at(i);
      Tensor& g = p.grad();
      Tensor& val = p.value();
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t k = 0; k < val.numel(); ++k) {
        const double gk = g.vec()[k];
        m.vec()[k] = cfg_.beta1 * m.vec()[k] + (1.0 - cfg_.beta1) * gk;
        v.vec()[k] = cfg_.beta2 * v.vec()[k] + (1.0 - cfg_.beta2) * gk * gk;
        const double mhat = m.vec()[k] / bc1;
        const double vhat = v.vec()[k] / bc2;
        val.vec()[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long long step_ = 0;
};

inline void adam_step(ParamRegistry& params, Adam& state, double lr) { state.step(params, lr); }

}  // namespace lccn
