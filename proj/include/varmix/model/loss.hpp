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

#include <functional>
#include <vector>

#include "varmix/core/types.hpp"

namespace varmix {

template <typename Scalar>
struct LossResult {
  Scalar value = 0;          // mean over the batch
  Vector<Scalar> per_example;
  Matrix<Scalar> grad;       // d value / d logits
};

/// Maps (logits, targets) to a batch loss and its gradient w.r.t. the logits.
template <typename Scalar>
using LossFn = std::function<LossResult<Scalar>(const Matrix<Scalar>&, const Matrix<Scalar>&)>;

template <typename Scalar>
Matrix<Scalar> log_softmax(const Matrix<Scalar>& logits);

template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits);

template <typename Scalar>
Matrix<Scalar> one_hot(const std::vector<int>& labels, int num_classes);

/// -sum_k y_k log softmax(z)_k per row, averaged over rows.
template <typename Scalar>
LossResult<Scalar> cross_entropy(const Matrix<Scalar>& logits, const Matrix<Scalar>& soft_labels);

/// Shannon entropy of each row of a probability matrix (natural log).
template <typename Scalar>
Vector<Scalar> row_entropy(const Matrix<Scalar>& probs);

}  // namespace varmix
