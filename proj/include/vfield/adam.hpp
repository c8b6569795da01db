// Copyright 2026 The vfield Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VFIELD_ADAM_HPP_
#define VFIELD_ADAM_HPP_

#include <cmath>
#include <cstddef>
#include <vector>

namespace vfield {

/// Adam moments for a fixed number of scalar parameters. Call begin_step()
/// once per optimizer step, then update() for every parameter.
class AdamState {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  AdamState(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void begin_step() {
    ++t_;
    c1_ = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    c2_ = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  }

  void update(std::size_t i, double& param, double grad) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad;
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad * grad;
    const double mhat = m_[i] / c1_;
    const double vhat = v_[i] / c2_;
    param -= lr_ * mhat / (std::sqrt(vhat) + kEps);
  }

  std::size_t size() const { return m_.size(); }
  long steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  double lr_;
  long t_ = 0;
  double c1_ = 1.0;
  double c2_ = 1.0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace vfield

#endif  // VFIELD_ADAM_HPP_
