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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "varmix/core/budget.hpp"
#include "varmix/data/dataset.hpp"
#include "varmix/model/network.hpp"
#include "varmix/vae/codec.hpp"
#include "varmix/vae/mmd.hpp"

namespace varmix {

enum class VaeArchitecture { kMlp, kConv };

std::string_view to_string(VaeArchitecture arch);
VaeArchitecture vae_architecture_from_string(std::string_view name);

struct VaeConfig {
  VaeArchitecture architecture = VaeArchitecture::kMlp;
  TensorShape image_shape{1, 28, 28};
  Index latent_dim = 16;
  Index hidden = 400;  // mlp hidden units, or base channels of the conv variant
  // With mmd_weight_auto, gamma is set on the first batch so that the MMD term
  // equals mmd_auto_ratio times the reconstruction term, then frozen.
  bool mmd_weight_auto = true;
  double mmd_weight = 1.0;
  double mmd_auto_ratio = 0.1;
  std::vector<double> bandwidth_scales{0.25, 0.5, 1.0, 2.0, 4.0};
  int epochs = 10;
  Index batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  RbfKernel kernel() const { return RbfKernel::for_latent_dim(latent_dim, bandwidth_scales); }
  bool operator==(const VaeConfig&) const = default;
};

void to_json(nlohmann::json& j, const VaeConfig& c);
void from_json(const nlohmann::json& j, VaeConfig& c);

struct VaeEpochLog {
  int epoch = 0;
  double loss = 0;
  double recon = 0;
  double mmd = 0;
};

void to_json(nlohmann::json& j, const VaeEpochLog& e);
void from_json(const nlohmann::json& j, VaeEpochLog& e);

/// Gaussian encoder x -> (mu, log variance) and sigmoid decoder z -> image.
template <typename Scalar>
class Vae final : public LatentCodec<Scalar> {
 public:
  explicit Vae(VaeConfig config);

  const VaeConfig& config() const { return config_; }
  Network<Scalar>& encoder() { return encoder_; }
  const Network<Scalar>& encoder() const { return encoder_; }
  Network<Scalar>& decoder() { return decoder_; }
  const Network<Scalar>& decoder() const { return decoder_; }
  double gamma() const { return gamma_; }
  void set_gamma(double g) { gamma_ = g; }
  std::vector<VaeEpochLog>& curve() { return curve_; }
  const std::vector<VaeEpochLog>& curve() const { return curve_; }

  Index latent_dim() const override { return config_.latent_dim; }
  TensorShape image_shape() const override { return config_.image_shape; }

  /// Encoder output: mean in the first d columns, log variance in the last d.
  Matrix<Scalar> encode(const Matrix<Scalar>& x, Mode mode = Mode::kEval, Tape<Scalar>* tape = nullptr) const;
  Matrix<Scalar> decode(const Matrix<Scalar>& z, Mode mode = Mode::kEval, Tape<Scalar>* tape = nullptr) const;

  Matrix<Scalar> encode_mean(const Matrix<Scalar>& x) const override;
  Matrix<Scalar> decode_mean(const Matrix<Scalar>& z) const override;
  Matrix<Scalar> encode_mean_vjp(const Matrix<Scalar>& x, const Matrix<Scalar>& g) const override;
  Matrix<Scalar> decode_mean_vjp(const Matrix<Scalar>& z, const Matrix<Scalar>& g) const override;

  template <typename To>
  Vae<To> cast() const {
    Vae<To> out(config_);
    out.encoder().params() = encoder_.params().template cast<To>();
    out.decoder().params() = decoder_.params().template cast<To>();
    out.set_gamma(gamma_);
    out.curve() = curve_;
    return out;
  }

 private:
  VaeConfig config_;
  Network<Scalar> encoder_;
  Network<Scalar> decoder_;
  double gamma_;
  std::vector<VaeEpochLog> curve_;
};

/// Reparameterization noise and prior draws for one loss evaluation.
template <typename Scalar>
struct VaeNoise {
  Matrix<Scalar> eps;
  Matrix<Scalar> prior;
};

template <typename Scalar>
VaeNoise<Scalar> draw_vae_noise(Rng& rng, Index n, Index latent_dim);

template <typename Scalar>
struct VaeLossTerms {
  Scalar value = 0;  // gamma * mmd + recon
  Scalar recon = 0;  // mean squared error per element
  Scalar mmd = 0;    // biased MMD(z samples, prior draws)
};

template <typename Scalar>
struct VaeGradients {
  Vector<Scalar> encoder;
  Vector<Scalar> decoder;
  Matrix<Scalar> input;
};

/// Loss in minimization form: gamma * MMD(z, prior) + MSE(decode(z), x) with
/// z = mu + exp(logvar / 2) * eps.
template <typename Scalar>
VaeLossTerms<Scalar> vae_loss(const Vae<Scalar>& vae, const Matrix<Scalar>& x, const VaeNoise<Scalar>& noise,
                              double gamma);

/// Same loss plus parameter gradients and, when requested, the input gradient.
template <typename Scalar>
VaeLossTerms<Scalar> vae_loss_and_grad(const Vae<Scalar>& vae, const Matrix<Scalar>& x,
                                       const VaeNoise<Scalar>& noise, double gamma,
                                       VaeGradients<Scalar>& grads, bool input_grad = false);

template <typename Scalar>
struct VaeTrainHooks {
  std::function<void(const VaeEpochLog&)> on_epoch;
  /// Called with (clean, perturbed) batches during adversarial training.
  std::function<void(const Matrix<Scalar>&, const Matrix<Scalar>&)> on_adversarial_batch;
};

template <typename Scalar>
Vae<Scalar> train_vae(const Dataset& data, const VaeConfig& config, const VaeTrainHooks<Scalar>& hooks = {});

/// Each step first runs PGD on the input to maximize the VAE loss (with that
/// step's noise held fixed), then updates the VAE on the perturbed batch.
template <typename Scalar>
Vae<Scalar> train_vae_adversarial(const Dataset& data, const VaeConfig& config, const AttackBudget& budget,
                                  const VaeTrainHooks<Scalar>& hooks = {});

/// PGD on the VAE loss around x with fixed noise.
template <typename Scalar>
Matrix<Scalar> vae_pgd(const Vae<Scalar>& vae, const Matrix<Scalar>& x, const VaeNoise<Scalar>& noise,
                       double gamma, const AttackBudget& budget);

/// Mean squared error of decode(encode_mean(x)) against x.
template <typename Scalar>
double reconstruction_mse(const LatentCodec<Scalar>& codec, const Matrix<Scalar>& x);

template <typename Scalar>
void save_vae(const std::filesystem::path& path, const Vae<Scalar>& vae,
              const nlohmann::json& meta = nlohmann::json::object());

template <typename Scalar>
Vae<Scalar> load_vae(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace varmix
