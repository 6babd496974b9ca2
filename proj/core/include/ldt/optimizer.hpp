#pragma once

#include <vector>

#include "ldt/encoder.hpp"

namespace ldt {

// Adam with decoupled weight decay, constant learning rate, no warmup.
// Biases and LayerNorm parameters are excluded from decay.
struct AdamWOptions {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options);

  // Applies grads of trainable parameters; frozen parameters never move.
  void step();
  void zero_grad();
  long step_count() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamWOptions opt_;
  std::vector<MatF> m_, v_;
  std::vector<bool> decay_;
  long t_ = 0;
};

}  // namespace ldt
