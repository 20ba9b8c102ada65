#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kspdiff/data_consistency.hpp"
#include "kspdiff/diffusion.hpp"
#include "kspdiff/masks.hpp"
#include "kspdiff/networks.hpp"
#include "kspdiff/objectives.hpp"
#include "kspdiff/phantom.hpp"
#include "kspdiff/stats.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

struct TrainConfig {
  double R = 4.0;
  double center_fraction = 0.04;
  double rho = 0.5;
  RhoMode rho_mode = RhoMode::kFractionOfOmega;
  double lr = 2e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 25;
  std::int64_t max_steps = 0;  ///< 0: run all epochs
  int T = 100;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  int stride = 25;
  double lambda = kDefaultLambda;
  double init_noise_variance = 0.1;
  int t_start = 0;  ///< inference start step; 0 means T/4
  bool penalty_at_real = false;
  LossDomain loss_domain = LossDomain::kKSpace;
  DcOptions dc;
  DenoiserSpec denoiser;
  DiscriminatorSpec discriminator;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument naming the first bad field.
  void validate() const;
  int resolved_t_start() const { return t_start > 0 ? t_start : T / 4; }
  NoiseSchedule schedule() const { return make_schedule(T, beta_1, beta_T); }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One undersampled acquisition. `measured` is [coils, rows, cols] and zero
/// off the Omega columns.
struct SliceData {
  std::uint64_t id = 0;
  ComplexTensor measured;
  SamplingMask omega;
};

SliceData make_slice(std::uint64_t id, const ComplexTensor& image, const SensitivityMaps& sens,
                     const SamplingMask& omega, double noise_std = 0.0, std::uint64_t noise_seed = 0);

/// Per-visit split of a slice into what the model may see and what only the
/// loss may see.
struct PreparedSlice {
  MaskPartition partition;
  ComplexTensor measured_aleph;    ///< model path: measurement restricted to aleph
  ComplexTensor cond;              ///< zero-filled aleph image
  ComplexTensor y0;                ///< start of the real diffusion chain
  ComplexTensor target_upsilon;    ///< loss path only
};

PreparedSlice prepare_slice(const SliceData& slice, const SensitivityMaps& sens, const TrainConfig& cfg,
                            std::uint64_t partition_seed);

/// Everything that enters either network for one slice during a step.
struct ModelInputs {
  std::uint64_t slice = 0;
  int s = 0;                       ///< generator step
  int t = 0;                       ///< paired step s - stride
  const ComplexTensor* y_s = nullptr;
  const ComplexTensor* cond = nullptr;
  const ComplexTensor* measured_aleph = nullptr;
  const ComplexTensor* real = nullptr;   ///< discriminator real sample
  const ComplexTensor* fake = nullptr;   ///< discriminator fake sample
};

/// Replaces the generator: (y_s, s, cond, batch index) -> raw y0 estimate.
using GeneratorFn = std::function<ComplexTensor(const ComplexTensor&, int, const ComplexTensor&, std::size_t)>;

struct StepHooks {
  GeneratorFn oracle;  ///< when set the generator is neither run nor updated
  std::function<void(const ModelInputs&)> observe;
};

/// Generator steps visited during training: stride, 2*stride, ..., T (never below 2).
std::vector<int> training_steps(int T, int stride);

class Trainer {
 public:
  Trainer(TrainConfig cfg, SensitivityMaps sens);

  const TrainConfig& config() const noexcept { return cfg_; }
  const NoiseSchedule& schedule() const noexcept { return sched_; }
  const SensitivityMaps& sensitivities() const noexcept { return sens_; }
  Denoiser& generator() noexcept { return gen_; }
  Discriminator& discriminator() noexcept { return disc_; }
  std::int64_t step() const noexcept { return step_; }

  /// One discriminator update followed by one generator update.
  LossReport train_step(std::span<const SliceData> batch, const StepHooks* hooks = nullptr);

  std::int64_t steps_per_epoch(std::size_t n_slices) const;
  /// Total steps implied by epochs and max_steps.
  std::int64_t planned_steps(std::size_t n_slices) const;
  /// Dataset indices for global step `step` (epoch-wise seeded shuffle).
  std::vector<std::size_t> batch_indices(std::int64_t step, std::size_t n_slices) const;

  /// Runs until `until_step` (exclusive) or planned_steps; callback after every step.
  void fit(std::span<const SliceData> data, std::int64_t until_step = -1,
           const std::function<void(const LossReport&)>& on_step = {});

  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  TrainConfig cfg_;
  SensitivityMaps sens_;
  NoiseSchedule sched_;
  Denoiser gen_;
  Discriminator disc_;
  AdamConfig adam_;
  std::int64_t step_ = 0;
};

struct ReconOptions {
  int t_start = 25;
  int stride = 25;
  double init_noise_variance = 0.1;
  std::uint64_t seed = 0;
  bool require_trained = true;
  DcOptions dc;
  GeneratorFn oracle;

  static ReconOptions from(const TrainConfig& cfg, std::uint64_t seed);
};

struct ReconResult {
  ComplexTensor image;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  nlohmann::json config;
};

/// Strided reverse diffusion from zero-filled data plus mild noise, with
/// data consistency on Omega after every prediction and once at the end.
ReconResult reconstruct(const ComplexTensor& measured, const SamplingMask& omega, const SensitivityMaps& sens,
                        Denoiser& model, const NoiseSchedule& sched, const ReconOptions& opt);

/// Per-slice metrics of `recons` against `truths` (paired by index).
MetricReport evaluate_run(std::span<const ComplexTensor> recons, std::span<const ComplexTensor> truths,
                          std::string method, std::size_t n_boot = kDefaultBootstrap, std::uint64_t seed = 0);

}  // namespace kspdiff
