// Copyright 2026 The VarMix Authors. All Rights Reserved.
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

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "varmix/core/errors.hpp"
#include "varmix/core/types.hpp"

namespace varmix {

/// L-infinity perturbation budget: radius, signed step, iteration count, pixel range.
struct AttackBudget {
  double epsilon = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;
  int steps = 10;
  double clamp_min = 0.0;
  double clamp_max = 1.0;

  void validate() const {
    if (!(epsilon >= 0)) throw ConfigError("attack epsilon must be >= 0");
    if (steps < 0) throw ConfigError("attack steps must be >= 0");
    if (steps > 0 && !(alpha > 0)) throw ConfigError("attack alpha must be > 0 when steps > 0");
    if (!(clamp_min < clamp_max)) throw ConfigError("attack clamp range is empty");
  }
  bool operator==(const AttackBudget&) const = default;
};

inline void to_json(nlohmann::json& j, const AttackBudget& b) {
  j = nlohmann::json{{"epsilon", b.epsilon}, {"alpha", b.alpha}, {"steps", b.steps},
                     {"clamp", {b.clamp_min, b.clamp_max}}};
}

inline void from_json(const nlohmann::json& j, AttackBudget& b) {
  const AttackBudget d;
  b.epsilon = j.value("epsilon", d.epsilon);
  b.alpha = j.value("alpha", d.alpha);
  b.steps = j.value("steps", d.steps);
  const auto clamp = j.value("clamp", std::vector<double>{d.clamp_min, d.clamp_max});
  if (clamp.size() != 2) throw ConfigError("attack clamp needs [min, max]");
  b.clamp_min = clamp[0];
  b.clamp_max = clamp[1];
}

/// Projects x_adv onto the epsilon ball around x, then onto the pixel range.
template <typename Scalar>
void project_linf(Matrix<Scalar>& x_adv, const Matrix<Scalar>& x, const AttackBudget& budget) {
  const auto eps = static_cast<Scalar>(budget.epsilon);
  x_adv = x_adv.array()
              .max(x.array() - eps)
              .min(x.array() + eps)
              .max(static_cast<Scalar>(budget.clamp_min))
              .min(static_cast<Scalar>(budget.clamp_max))
              .matrix();
}

/// Elementwise sign with sign(0) = 0.
template <typename Scalar>
Matrix<Scalar> sign_of(const Matrix<Scalar>& g) {
  return g.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0)); });
}

}  // namespace varmix
