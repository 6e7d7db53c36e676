#include "usspine/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace usspine {

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("Adam::step: parameter list changed between steps");
  }
  for (const Parameter* p : params) {
    if (p->grad.empty() || p->grad.shape() != p->value.shape()) {
      throw std::invalid_argument("Adam::step: parameter '" + p->name + "' has no gradient");
    }
  }

  ++t_;
  const Real b1 = config_.beta1, b2 = config_.beta2;
  const Real c1 = 1.0 - std::pow(b1, static_cast<Real>(t_));
  const Real c2 = 1.0 - std::pow(b2, static_cast<Real>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const Real g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const Real mhat = m[i] / c1;
      const Real vhat = v[i] / c2;
      p.value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace usspine
