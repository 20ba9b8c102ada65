#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "kspdiff/nn.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

/// Convolutional residual denoiser used as the clean-image predictor.
/// Input channels: Re/Im of the noisy sample, a constant t/T channel and,
/// optionally, Re/Im of a conditioning image.
struct DenoiserSpec {
  std::size_t hidden_channels = 32;
  std::size_t layers = 5;
  std::size_t kernel = 3;
  bool residual = true;
  bool batch_norm = false;
  bool conditioned = true;

  std::size_t input_channels() const { return conditioned ? 5 : 3; }
  /// sum over convolutions of k*k*cin*cout + cout, plus 2 per normalized channel
  std::size_t parameter_count() const;

  nlohmann::json to_json() const;
  static DenoiserSpec from_json(const nlohmann::json& j);
};

class Denoiser {
 public:
  explicit Denoiser(DenoiserSpec spec, std::uint64_t seed = 0);

  const DenoiserSpec& spec() const noexcept { return spec_; }
  nn::ModelState& state() noexcept { return net_.state(); }
  const nn::ModelState& state() const noexcept { return net_.state(); }

  /// Predicts y0 from y_t. `cond` may be null only for unconditioned specs.
  ComplexTensor forward(const ComplexTensor& y_t, double t_embed, const ComplexTensor* cond,
                        nn::Mode mode, bool cache = true);
  /// upstream holds dL/dRe + i dL/dIm of the output. Accumulates parameter
  /// gradients and returns the same-form gradient with respect to y_t.
  ComplexTensor backward(const ComplexTensor& upstream);

  /// Batched variants; conds may be empty for unconditioned specs.
  std::vector<ComplexTensor> forward_batch(std::span<const ComplexTensor> y_t, std::span<const double> t_embed,
                                           std::span<const ComplexTensor> conds, nn::Mode mode,
                                           bool cache = true);
  std::vector<ComplexTensor> backward_batch(std::span<const ComplexTensor> upstream);

  bool trained() const noexcept { return trained_; }
  void mark_trained(bool v = true) noexcept { trained_ = v; }

 private:
  DenoiserSpec spec_;
  nn::Sequential net_;
  Shape cached_shape_;
  std::size_t cached_batch_ = 0;
  bool trained_ = false;
};

/// Conditional discriminator D(sample, conditioning) -> (0, 1). Each
/// convolution is followed by ReLU then batch normalization.
struct DiscriminatorSpec {
  std::vector<std::size_t> channels{16, 32, 32, 32};
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;

  std::size_t input_channels() const { return 4; }
  std::size_t parameter_count() const;

  nlohmann::json to_json() const;
  static DiscriminatorSpec from_json(const nlohmann::json& j);
};

class Discriminator {
 public:
  explicit Discriminator(DiscriminatorSpec spec, std::uint64_t seed = 0);

  const DiscriminatorSpec& spec() const noexcept { return spec_; }
  nn::ModelState& state() noexcept { return net_.state(); }
  const nn::ModelState& state() const noexcept { return net_.state(); }

  /// One score per batch element. Train mode normalizes with batch statistics.
  std::vector<double> forward(std::span<const ComplexTensor> samples, std::span<const ComplexTensor> conds,
                              const nn::ForwardOptions& opt);
  /// upstream[i] = dL/dscore_i. Returns dL/dsample_i; parameter gradients are
  /// accumulated when requested.
  std::vector<ComplexTensor> backward(std::span<const double> upstream, bool accumulate_params = true);

  /// d(sum_i score_i)/d sample_i, evaluated at the given inputs. Parameter
  /// gradients are left untouched.
  std::vector<ComplexTensor> input_grad(std::span<const ComplexTensor> samples,
                                        std::span<const ComplexTensor> conds, nn::Mode mode);

 private:
  DiscriminatorSpec spec_;
  nn::Sequential net_;
  std::size_t rows_ = 0, cols_ = 0;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update; gradients are zeroed afterwards. Throws
/// NumericalError naming the block if any gradient is non-finite.
void adam_step(nn::ModelState& state, const AdamConfig& cfg);

/// Checkpoint directory: one tensor file per parameter block (plus Adam
/// moments and running statistics) and an index.json.
void save_checkpoint(const nn::ModelState& state, const nlohmann::json& spec,
                     const std::filesystem::path& dir, bool include_moments = true);
/// Loads into an already-constructed state; block names and shapes must match.
/// Returns the stored spec JSON.
nlohmann::json load_checkpoint(nn::ModelState& state, const std::filesystem::path& dir);

}  // namespace kspdiff
