#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kspdiff/tensor.hpp"

namespace kspdiff::nn {

/// Real NCHW activation tensor.
struct Tensor4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, 0.0) {}

  std::size_t size() const noexcept { return v.size(); }
  std::size_t plane() const noexcept { return h * w; }
  double& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) {
    return v[((i * c + ch) * h + y) * w + x];
  }
  double at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const {
    return v[((i * c + ch) * h + y) * w + x];
  }
  std::span<double> sample(std::size_t i) { return std::span<double>(v).subspan(i * c * h * w, c * h * w); }
  std::span<const double> sample(std::size_t i) const {
    return std::span<const double>(v).subspan(i * c * h * w, c * h * w);
  }
  bool same_dims(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kEval;
  bool cache = true;                 ///< keep what backward needs
  bool update_running_stats = true;  ///< train-mode normalization only
};

struct ParamBlock {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Flat parameter storage shared by all layers of one network, with gradient
/// accumulators, Adam moments and non-trainable buffers (running statistics).
struct ModelState {
  std::vector<double> params;
  std::vector<double> grads;
  std::vector<double> m1;
  std::vector<double> m2;
  std::vector<ParamBlock> blocks;
  std::vector<double> buffers;
  std::vector<ParamBlock> buffer_blocks;
  std::int64_t step = 0;

  std::size_t add_block(std::string name, Shape shape);
  std::size_t add_buffer(std::string name, Shape shape, double init);

  std::span<double> param_span(std::size_t offset, std::size_t n) {
    return std::span<double>(params).subspan(offset, n);
  }
  std::span<double> grad_span(std::size_t offset, std::size_t n) {
    return std::span<double>(grads).subspan(offset, n);
  }
  void zero_grads();
  std::size_t parameter_count() const { return params.size(); }
  /// Name of the block owning flat index i.
  const ParamBlock& block_of(std::size_t i) const;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor4 forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) = 0;
  /// Returns dL/dx; adds dL/dparams into st.grads when accumulate is set.
  virtual Tensor4 backward(const Tensor4& grad_out, ModelState& st, bool accumulate) = 0;
  virtual void initialize(ModelState& st, std::uint64_t seed) { (void)st, (void)seed; }
  virtual void clear_cache() = 0;
};

/// 2-D convolution, square kernel, zero padding.
class Conv2d final : public Layer {
 public:
  Conv2d(ModelState& st, std::string name, std::size_t cin, std::size_t cout, std::size_t kernel,
         std::size_t stride, std::size_t pad);
  Tensor4 forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) override;
  Tensor4 backward(const Tensor4& grad_out, ModelState& st, bool accumulate) override;
  void initialize(ModelState& st, std::uint64_t seed) override;
  void clear_cache() override {
    cols_.clear();
    cached_n_ = 0;
  }

  std::size_t weight_offset() const { return w_off_; }
  std::size_t bias_offset() const { return b_off_; }

 private:
  std::size_t out_extent(std::size_t in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  std::size_t cin_, cout_, k_, stride_, pad_;
  std::size_t w_off_, b_off_;
  std::size_t in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  void im2col(std::span<const double> in, double* cols) const;
  void col2im(const double* cols, std::span<double> out) const;
  std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t in_extent,
                                                  std::size_t n_out) const;

  std::vector<std::vector<double>> cols_;  // im2col per sample
  std::vector<double> scratch_;
  std::size_t cached_n_ = 0;
};

/// Per-channel batch normalization with learned affine transform.
class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(ModelState& st, std::string name, std::size_t channels, double momentum = 0.1,
              double eps = 1e-5);
  Tensor4 forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) override;
  Tensor4 backward(const Tensor4& grad_out, ModelState& st, bool accumulate) override;
  void initialize(ModelState& st, std::uint64_t seed) override;
  void clear_cache() override { xhat_ = {}; }

 private:
  std::size_t c_;
  double momentum_, eps_;
  std::size_t g_off_, b_off_, rm_off_, rv_off_;
  Mode cached_mode_ = Mode::kEval;
  Tensor4 xhat_;
  std::vector<double> inv_std_;
};

class ReLU final : public Layer {
 public:
  Tensor4 forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) override;
  Tensor4 backward(const Tensor4& grad_out, ModelState& st, bool accumulate) override;
  void clear_cache() override { mask_.clear(); }

 private:
  std::vector<std::uint8_t> mask_;
  std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

/// Spatial mean per channel: [N, C, H, W] -> [N, C, 1, 1].
class GlobalAvgPool final : public Layer {
 public:
  Tensor4 forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) override;
  Tensor4 backward(const Tensor4& grad_out, ModelState& st, bool accumulate) override;
  void clear_cache() override { cached_ = false; }

 private:
  std::size_t h_ = 0, w_ = 0;
  bool cached_ = false;
};

/// Fully connected on [N, C, 1, 1].
class Linear final : public Layer {
 public:
  Linear(ModelState& st, std::string name, std::size_t in, std::size_t out);
  Tensor4 forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) override;
  Tensor4 backward(const Tensor4& grad_out, ModelState& st, bool accumulate) override;
  void initialize(ModelState& st, std::uint64_t seed) override;
  void clear_cache() override { x_ = {}; }

 private:
  std::size_t in_, out_, w_off_, b_off_;
  Tensor4 x_;
};

/// Logistic output, clamped so scores stay strictly inside (0, 1).
class Sigmoid final : public Layer {
 public:
  Tensor4 forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) override;
  Tensor4 backward(const Tensor4& grad_out, ModelState& st, bool accumulate) override;
  void clear_cache() override { y_ = {}; }

 private:
  Tensor4 y_;
};

/// Ordered stack of layers sharing one ModelState.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential&) = delete;
  Sequential& operator=(const Sequential&) = delete;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  ModelState& state() noexcept { return state_; }
  const ModelState& state() const noexcept { return state_; }

  void initialize(std::uint64_t seed);
  Tensor4 forward(const Tensor4& x, const ForwardOptions& opt);
  /// Requires a cached forward pass; throws otherwise.
  Tensor4 backward(const Tensor4& grad_out, bool accumulate_params = true);
  void clear_cache();

 private:
  ModelState state_;
  std::vector<std::unique_ptr<Layer>> layers_;
  bool has_cache_ = false;
};

}  // namespace kspdiff::nn
