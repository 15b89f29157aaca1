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

#include "varmix/model/loss.hpp"

#include <cmath>

#include "varmix/core/errors.hpp"

namespace varmix {

template <typename Scalar>
Matrix<Scalar> log_softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const auto e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> one_hot(const std::vector<int>& labels, int num_classes) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw InvalidArgument("label " + std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    out(static_cast<Index>(i), labels[i]) = Scalar(1);
  }
  return out;
}

template <typename Scalar>
LossResult<Scalar> cross_entropy(const Matrix<Scalar>& logits, const Matrix<Scalar>& soft_labels) {
  if (logits.rows() != soft_labels.rows() || logits.cols() != soft_labels.cols()) {
    throw ShapeError("cross_entropy: logits " + std::to_string(logits.rows()) + "x" +
                     std::to_string(logits.cols()) + " vs labels " + std::to_string(soft_labels.rows()) +
                     "x" + std::to_string(soft_labels.cols()));
  }
  if (logits.rows() == 0) throw InvalidArgument("cross_entropy on an empty batch");
  const Matrix<Scalar> logp = log_softmax(logits);
  LossResult<Scalar> r;
  r.per_example = -(soft_labels.array() * logp.array()).rowwise().sum();
  r.value = r.per_example.mean();
  const Scalar n = static_cast<Scalar>(logits.rows());
  // d/dz of -sum y log softmax(z) is softmax(z) * sum(y) - y.
  const Vector<Scalar> mass = soft_labels.rowwise().sum();
  r.grad = ((logp.array().exp().colwise() * mass.array()) - soft_labels.array()).matrix() / n;
  return r;
}

template <typename Scalar>
Vector<Scalar> row_entropy(const Matrix<Scalar>& probs) {
  Vector<Scalar> h(probs.rows());
  for (Index i = 0; i < probs.rows(); ++i) {
    Scalar s = 0;
    for (Index k = 0; k < probs.cols(); ++k)
      if (probs(i, k) > Scalar(0)) s -= probs(i, k) * std::log(probs(i, k));
    h[i] = s;
  }
  return h;
}

#define VARMIX_INSTANTIATE_LOSS(S)                                              \
  template Matrix<S> log_softmax<S>(const Matrix<S>&);                         \
  template Matrix<S> softmax<S>(const Matrix<S>&);                             \
  template Matrix<S> one_hot<S>(const std::vector<int>&, int);                 \
  template LossResult<S> cross_entropy<S>(const Matrix<S>&, const Matrix<S>&); \
  template Vector<S> row_entropy<S>(const Matrix<S>&);

VARMIX_INSTANTIATE_LOSS(float)
VARMIX_INSTANTIATE_LOSS(double)

}  // namespace varmix
