#pragma once

#include <cstddef>
#include <vector>

#include "infoqa/tensor.hpp"

namespace infoqa {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. step() reads each parameter's gradient (absent
// counts as zero), updates the values in place and clears the gradient.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step();
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions opt_;
  std::size_t t_ = 0;
};

}  // namespace infoqa
