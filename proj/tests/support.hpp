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

// Shared test helpers: finite-difference gradient oracle, scratch dirs.

#ifndef MYNA_TESTS_SUPPORT_HPP_
#define MYNA_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <unistd.h>
#include <vector>

#include "myna/autodiff.hpp"
#include "myna/random.hpp"
#include "myna/vit.hpp"

namespace myna::testing {

struct Input {
  ad::Shape shape;
  std::vector<double> values;
};

// Values in +-[0.1, 1] so kinks (relu) and near-zero denominators are avoided.
inline Input random_input(ad::Shape shape, Rng& rng) {
  Input in{std::move(shape), {}};
  in.values.resize(ad::numel_of(in.shape));
  for (double& v : in.values) {
    const double mag = 0.1 + 0.9 * uniform01(rng);
    v = uniform01(rng) < 0.5 ? -mag : mag;
  }
  return in;
}

// ||a - n|| / max(||a||, ||n||), 0 when both vanish.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom < 1e-12 ? 0.0 : std::sqrt(diff) / denom;
}

// Float32 analytic gradient vs central differences of the float64
// instantiation of the same function. `f` is a generic callable taking
// std::vector<ad::Tensor<T>> and returning a scalar tensor.
template <class F>
double gradient_error(F&& f, const std::vector<Input>& inputs, double h = 1e-3) {
  std::vector<ad::Tensor<float>> fin;
  for (const auto& in : inputs) {
    fin.push_back(ad::Tensor<float>::from(in.shape, std::vector<float>(in.values.begin(), in.values.end()), true));
  }
  ad::backward(f(fin));

  auto eval = [&](std::size_t which, std::size_t idx, double delta) {
    ad::NoGradGuard guard;
    std::vector<ad::Tensor<double>> din;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      std::vector<double> v = inputs[k].values;
      if (k == which) v[idx] += delta;
      din.push_back(ad::Tensor<double>::from(inputs[k].shape, std::move(v)));
    }
    return f(din).item();
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> numeric(inputs[k].values.size()), analytic(inputs[k].values.size(), 0.0);
    for (std::size_t i = 0; i < numeric.size(); ++i) numeric[i] = (eval(k, i, h) - eval(k, i, -h)) / (2.0 * h);
    if (fin[k].has_grad()) {
      for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = fin[k].grad()[i];
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

// Gradient check over model parameters: analytic float32 gradients of
// `loss(params)` against central differences of the float64 copy, on
// `per_tensor` randomly chosen entries of every parameter tensor.
template <class F>
double model_gradient_error(F&& loss, const vit::ModelParams<float>& params, std::size_t per_tensor,
                            std::uint64_t seed, double h = 1e-3) {
  vit::ModelParams<float> p = vit::cast_params<float>(params, true);
  p.zero_grad();
  ad::backward(loss(p));
  vit::ModelParams<double> d = vit::cast_params<double>(params, false);
  Rng rng = derive_rng(seed, 17);
  std::vector<double> analytic, numeric;
  for (auto& [name, tensor] : d.tensors) {
    const auto& g = p.at(name).grad();
    for (std::size_t s = 0; s < std::min(per_tensor, tensor.numel()); ++s) {
      const std::size_t i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(tensor.numel()));
      const double orig = tensor.data()[i];
      ad::NoGradGuard guard;
      tensor.mutable_data()[i] = orig + h;
      const double up = loss(d).item();
      tensor.mutable_data()[i] = orig - h;
      const double down = loss(d).item();
      tensor.mutable_data()[i] = orig;
      numeric.push_back((up - down) / (2.0 * h));
      analytic.push_back(g.empty() ? 0.0 : g[i]);
    }
  }
  return relative_error(analytic, numeric);
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("myna_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace myna::testing

#endif  // MYNA_TESTS_SUPPORT_HPP_
