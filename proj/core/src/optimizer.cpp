#include "ldt/optimizer.hpp"

#include <cmath>

#include "ldt/util.hpp"

namespace ldt {

namespace {

bool wants_decay(const std::string& name) {
  if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) return false;
  if (name.find("LayerNorm") != std::string::npos) return false;
  if (name.find("layer_norm") != std::string::npos) return false;
  return true;
}

}  // namespace

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options)
    : params_(std::move(params)), opt_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(MatF::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(MatF::Zero(p->value.rows(), p->value.cols()));
    decay_.push_back(wants_decay(p->name));
  }
}

void AdamW::step() {
  ++t_;
  const float b1 = static_cast<float>(opt_.beta1);
  const float b2 = static_cast<float>(opt_.beta2);
  const float eps = static_cast<float>(opt_.eps);
  const float lr = static_cast<float>(opt_.learning_rate);
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t_));

  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    if (!p->trainable) continue;
    if (p->value.rows() != m_[i].rows() || p->value.cols() != m_[i].cols())
      fail("optimizer state shape mismatch for ", p->name,
           " (vocabulary extended after optimizer construction?)");
    m_[i] = b1 * m_[i] + (1.0f - b1) * p->grad;
    v_[i] = b2 * v_[i].array() + (1.0f - b2) * p->grad.array().square();
    MatF mhat = m_[i] / bc1;
    MatF vhat = v_[i] / bc2;
    if (decay_[i] && opt_.weight_decay > 0)
      p->value -= lr * static_cast<float>(opt_.weight_decay) * p->value;
    p->value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->grad.setZero();
}

}  // namespace ldt
