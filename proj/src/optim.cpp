#include "infoqa/optim.hpp"

#include <cmath>

namespace infoqa {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g[k];
      v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g[k] * g[k];
      w[k] -= opt_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace infoqa
