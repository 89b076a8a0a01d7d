/*
 * Copyright 2026 The Myna Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MYNA_OBJECTIVES_HPP_
#define MYNA_OBJECTIVES_HPP_

#include <cstddef>
#include <vector>

#include "myna/autodiff.hpp"
#include "myna/error.hpp"
#include "myna/masking.hpp"

namespace myna::objectives {

struct ObjectiveConfig {
  double tau = 0.1;
  // Average the view-1-anchored and view-2-anchored losses.
  bool symmetrize = true;
  // Off: the denominator holds only the 2N-2 negatives. On: the positive is
  // added to it as well (NT-Xent).
  bool denominator_includes_positive = false;
};

// Contrastive loss over a batch of positive pairs. z1 and z2 are N x P with
// L2-normalized rows; row i of z1 and row i of z2 form a positive pair. For
// anchor z1_i the logits are sim(z1_i, z_j^v) / tau over both views of every
// j; the anchor itself is never a candidate.
//
//   l_i = -sim(z1_i, z2_i)/tau + log sum_{j != i, v} exp(sim(z1_i, z_j^v)/tau)
//
// The result is the mean over anchors (and over both anchor views when
// symmetrized).
template <class T>
ad::Tensor<T> info_nce(const ad::Tensor<T>& z1, const ad::Tensor<T>& z2, const ObjectiveConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw ParameterError("info_nce: tau must be positive");
  if (z1.rank() != 2 || z1.shape() != z2.shape()) {
    throw ShapeError("info_nce: views must be matrices of equal shape");
  }
  const std::size_t n = z1.rows();
  if (n < 2) throw BatchSizeError("info_nce needs at least 2 pairs, got " + std::to_string(n));

  const auto all = ad::concat(std::vector<ad::Tensor<T>>{z1, z2}, 0);  // 2N x P
  const auto all_t = ad::transpose(all);
  const T inv_tau = static_cast<T>(1.0 / cfg.tau);

  // Anchors from `view` (0 or 1) against every row of `all`.
  auto anchored = [&](const ad::Tensor<T>& anchors, std::size_t view) {
    auto logits = ad::scale(ad::matmul(anchors, all_t), inv_tau);  // N x 2N
    std::vector<unsigned char> exclude(n * 2 * n, 0);
    std::vector<std::size_t> positive(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t self = view * n + i;
      const std::size_t pos = (1 - view) * n + i;
      positive[i] = pos;
      exclude[i * 2 * n + self] = 1;
      if (!cfg.denominator_includes_positive) exclude[i * 2 * n + pos] = 1;
    }
    auto lse = ad::logsumexp_rows(logits, std::move(exclude));
    auto pos = ad::pick_per_row(logits, std::move(positive));
    return ad::mean_all(ad::sub(lse, pos));
  };

  auto loss = anchored(z1, 0);
  if (cfg.symmetrize) loss = ad::scale(ad::add(loss, anchored(z2, 1)), T(0.5));
  return loss;
}

// Average of the square-patch and vertical-patch branch losses.
template <class T>
ad::Tensor<T> hybrid_loss(const ad::Tensor<T>& l_square, const ad::Tensor<T>& l_vertical) {
  if (l_square.numel() != 1 || l_vertical.numel() != 1) throw ShapeError("hybrid_loss: scalar losses required");
  return ad::scale(ad::add(l_square, l_vertical), T(0.5));
}

// Masked-patch MSE: mean over the patches NOT in `kept` of the squared error
// against the standardized grid values. Zero when nothing was masked.
template <class T>
ad::Tensor<T> mae_loss(const ad::Tensor<T>& reconstruction, const PatchGrid& target, const TokenSet& kept) {
  if (reconstruction.rank() != 2 || reconstruction.rows() != target.count() ||
      reconstruction.cols() != target.patch_size) {
    throw ShapeError("mae_loss: reconstruction " + ad::shape_str(reconstruction.shape()) +
                     " does not match the target grid");
  }
  std::vector<unsigned char> is_kept(target.count(), 0);
  for (std::size_t idx : kept.kept_indices) is_kept.at(idx) = 1;
  std::vector<std::size_t> masked;
  for (std::size_t i = 0; i < target.count(); ++i) {
    if (!is_kept[i]) masked.push_back(i);
  }
  if (masked.empty()) return ad::Tensor<T>::scalar(T(0));
  std::vector<T> values;
  values.reserve(masked.size() * target.patch_size);
  for (std::size_t idx : masked) values.insert(values.end(), target.patch(idx), target.patch(idx) + target.patch_size);
  auto tgt = ad::Tensor<T>::from({masked.size(), target.patch_size}, std::move(values));
  return ad::mse(ad::gather_rows(reconstruction, std::move(masked)), tgt);
}

}  // namespace myna::objectives

#endif  // MYNA_OBJECTIVES_HPP_
