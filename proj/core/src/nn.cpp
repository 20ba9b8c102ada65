#include "kspdiff/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>

#include "kspdiff/error.hpp"
#include "kspdiff/rng.hpp"

namespace kspdiff::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

void he_uniform(std::span<double> w, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : w) x = u(rng);
}

}  // namespace

std::size_t ModelState::add_block(std::string name, Shape shape) {
  const std::size_t n = shape_numel(shape);
  const std::size_t off = params.size();
  blocks.push_back({std::move(name), std::move(shape), off, n});
  params.resize(off + n, 0.0);
  grads.resize(off + n, 0.0);
  m1.resize(off + n, 0.0);
  m2.resize(off + n, 0.0);
  return off;
}

std::size_t ModelState::add_buffer(std::string name, Shape shape, double init) {
  const std::size_t n = shape_numel(shape);
  const std::size_t off = buffers.size();
  buffer_blocks.push_back({std::move(name), std::move(shape), off, n});
  buffers.resize(off + n, init);
  return off;
}

void ModelState::zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }

const ParamBlock& ModelState::block_of(std::size_t i) const {
  for (const auto& b : blocks)
    if (i >= b.offset && i < b.offset + b.size) return b;
  throw InvalidArgument("parameter index out of range");
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(ModelState& st, std::string name, std::size_t cin, std::size_t cout,
               std::size_t kernel, std::size_t stride, std::size_t pad)
    : cin_(cin), cout_(cout), k_(kernel), stride_(stride), pad_(pad) {
  if (cin == 0 || cout == 0 || kernel == 0 || stride == 0) throw InvalidArgument("degenerate conv");
  w_off_ = st.add_block(name + ".weight", {cout, cin, kernel, kernel});
  b_off_ = st.add_block(name + ".bias", {cout});
}

void Conv2d::initialize(ModelState& st, std::uint64_t seed) {
  const std::size_t fan_in = cin_ * k_ * k_;
  he_uniform(st.param_span(w_off_, cout_ * fan_in), fan_in, derive_seed(seed, {w_off_}));
  std::fill_n(st.params.begin() + static_cast<std::ptrdiff_t>(b_off_), cout_, 0.0);
}

void Conv2d::im2col(std::span<const double> in, double* cols) const {
  const std::size_t P = out_h_ * out_w_;
  for (std::size_t ci = 0; ci < cin_; ++ci)
    for (std::size_t ky = 0; ky < k_; ++ky)
      for (std::size_t kx = 0; kx < k_; ++kx) {
        double* row = cols + ((ci * k_ + ky) * k_ + kx) * P;
        const auto [lo, hi] = valid_range(kx, in_w_, out_w_);
        for (std::size_t oy = 0; oy < out_h_; ++oy) {
          double* dst = row + oy * out_w_;
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h_)) {
            std::fill_n(dst, out_w_, 0.0);
            continue;
          }
          const double* src = in.data() + (ci * in_h_ + static_cast<std::size_t>(iy)) * in_w_;
          std::fill_n(dst, lo, 0.0);
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride_ + kx - pad_];
          std::fill(dst + hi, dst + out_w_, 0.0);
        }
      }
}

void Conv2d::col2im(const double* cols, std::span<double> out) const {
  const std::size_t P = out_h_ * out_w_;
  for (std::size_t ci = 0; ci < cin_; ++ci)
    for (std::size_t ky = 0; ky < k_; ++ky)
      for (std::size_t kx = 0; kx < k_; ++kx) {
        const double* row = cols + ((ci * k_ + ky) * k_ + kx) * P;
        const auto [lo, hi] = valid_range(kx, in_w_, out_w_);
        for (std::size_t oy = 0; oy < out_h_; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h_)) continue;
          double* dst = out.data() + (ci * in_h_ + static_cast<std::size_t>(iy)) * in_w_;
          const double* src = row + oy * out_w_;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * stride_ + kx - pad_] += src[ox];
        }
      }
}

// output columns ox with 0 <= ox*stride + k - pad < in_extent
std::pair<std::size_t, std::size_t> Conv2d::valid_range(std::size_t k, std::size_t in_extent,
                                                        std::size_t n_out) const {
  std::size_t lo = 0;
  if (pad_ > k) lo = (pad_ - k + stride_ - 1) / stride_;
  if (in_extent + pad_ <= k) return {0, 0};
  const std::size_t hi = std::min(n_out, (in_extent - 1 + pad_ - k) / stride_ + 1);
  return {std::min(lo, hi), hi};
}

Tensor4 Conv2d::forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) {
  if (x.c != cin_) throw InvalidArgument("conv input has " + std::to_string(x.c) + " channels, expected " +
                                         std::to_string(cin_));
  if (x.h + 2 * pad_ < k_ || x.w + 2 * pad_ < k_) throw InvalidArgument("conv input smaller than kernel");
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = out_extent(x.h);
  out_w_ = out_extent(x.w);
  const std::size_t K = cin_ * k_ * k_;
  const std::size_t P = out_h_ * out_w_;

  Tensor4 y(x.n, cout_, out_h_, out_w_);
  CMapRow W(st.params.data() + w_off_, static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(K));
  Eigen::Map<const Eigen::VectorXd> b(st.params.data() + b_off_, static_cast<Eigen::Index>(cout_));

  cached_n_ = 0;
  if (opt.cache && cols_.size() < x.n) cols_.resize(x.n);
  for (std::size_t i = 0; i < x.n; ++i) {
    std::vector<double>& cols = opt.cache ? cols_[i] : scratch_;
    cols.resize(K * P);
    im2col(x.sample(i), cols.data());
    CMapRow C(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    MapRow Y(y.sample(i).data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(P));
    Y.noalias() = W * C;
    Y.colwise() += b;
  }
  if (opt.cache) cached_n_ = x.n;
  return y;
}

Tensor4 Conv2d::backward(const Tensor4& g, ModelState& st, bool accumulate) {
  if (cached_n_ == 0 || cached_n_ != g.n) throw InvalidArgument("conv backward without a cached forward pass");
  const std::size_t K = cin_ * k_ * k_;
  const std::size_t P = out_h_ * out_w_;
  CMapRow W(st.params.data() + w_off_, static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(K));
  MapRow dW(st.grads.data() + w_off_, static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(K));

  Tensor4 dx(g.n, cin_, in_h_, in_w_);
  scratch_.resize(K * P);
  for (std::size_t i = 0; i < g.n; ++i) {
    CMapRow G(g.sample(i).data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(P));
    CMapRow C(cols_[i].data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    if (accumulate) {
      dW.noalias() += G * C.transpose();
      for (std::size_t o = 0; o < cout_; ++o) {
        const double* row = g.sample(i).data() + o * P;
        double acc = 0.0;
        for (std::size_t p = 0; p < P; ++p) acc += row[p];
        st.grads[b_off_ + o] += acc;
      }
    }
    MapRow D(scratch_.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    D.noalias() = W.transpose() * G;
    col2im(scratch_.data(), dx.sample(i));
  }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(ModelState& st, std::string name, std::size_t channels, double momentum,
                         double eps)
    : c_(channels), momentum_(momentum), eps_(eps) {
  g_off_ = st.add_block(name + ".gamma", {channels});
  b_off_ = st.add_block(name + ".beta", {channels});
  rm_off_ = st.add_buffer(name + ".running_mean", {channels}, 0.0);
  rv_off_ = st.add_buffer(name + ".running_var", {channels}, 1.0);
}

void BatchNorm2d::initialize(ModelState& st, std::uint64_t) {
  std::fill_n(st.params.begin() + static_cast<std::ptrdiff_t>(g_off_), c_, 1.0);
  std::fill_n(st.params.begin() + static_cast<std::ptrdiff_t>(b_off_), c_, 0.0);
  std::fill_n(st.buffers.begin() + static_cast<std::ptrdiff_t>(rm_off_), c_, 0.0);
  std::fill_n(st.buffers.begin() + static_cast<std::ptrdiff_t>(rv_off_), c_, 1.0);
}

Tensor4 BatchNorm2d::forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) {
  if (x.c != c_) throw InvalidArgument("batch norm channel mismatch");
  const std::size_t P = x.plane();
  const double m = static_cast<double>(x.n * P);
  Tensor4 y(x.n, x.c, x.h, x.w);
  Tensor4 xhat(x.n, x.c, x.h, x.w);
  std::vector<double> inv_std(c_);

  for (std::size_t ch = 0; ch < c_; ++ch) {
    double mean, var;
    if (opt.mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.n; ++i)
        for (std::size_t p = 0; p < P; ++p) s += x.v[(i * c_ + ch) * P + p];
      mean = s / m;
      double ss = 0.0;
      for (std::size_t i = 0; i < x.n; ++i)
        for (std::size_t p = 0; p < P; ++p) {
          const double d = x.v[(i * c_ + ch) * P + p] - mean;
          ss += d * d;
        }
      var = ss / m;
      if (opt.update_running_stats) {
        double& rm = st.buffers[rm_off_ + ch];
        double& rv = st.buffers[rv_off_ + ch];
        rm = (1.0 - momentum_) * rm + momentum_ * mean;
        rv = (1.0 - momentum_) * rv + momentum_ * (m > 1.0 ? ss / (m - 1.0) : var);
      }
    } else {
      mean = st.buffers[rm_off_ + ch];
      var = st.buffers[rv_off_ + ch];
    }
    const double is = 1.0 / std::sqrt(var + eps_);
    inv_std[ch] = is;
    const double gamma = st.params[g_off_ + ch];
    const double beta = st.params[b_off_ + ch];
    for (std::size_t i = 0; i < x.n; ++i)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t idx = (i * c_ + ch) * P + p;
        xhat.v[idx] = (x.v[idx] - mean) * is;
        y.v[idx] = gamma * xhat.v[idx] + beta;
      }
  }
  if (opt.cache) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv_std);
    cached_mode_ = opt.mode;
  }
  return y;
}

Tensor4 BatchNorm2d::backward(const Tensor4& g, ModelState& st, bool accumulate) {
  if (!xhat_.same_dims(g)) throw InvalidArgument("batch norm backward without a cached forward pass");
  const std::size_t P = g.plane();
  const double m = static_cast<double>(g.n * P);
  Tensor4 dx(g.n, g.c, g.h, g.w);
  for (std::size_t ch = 0; ch < c_; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t idx = (i * c_ + ch) * P + p;
        sum_g += g.v[idx];
        sum_gx += g.v[idx] * xhat_.v[idx];
      }
    if (accumulate) {
      st.grads[g_off_ + ch] += sum_gx;
      st.grads[b_off_ + ch] += sum_g;
    }
    const double gamma = st.params[g_off_ + ch];
    const double is = inv_std_[ch];
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t idx = (i * c_ + ch) * P + p;
        if (cached_mode_ == Mode::kTrain)
          dx.v[idx] = gamma * is / m * (m * g.v[idx] - sum_g - xhat_.v[idx] * sum_gx);
        else
          dx.v[idx] = gamma * is * g.v[idx];
      }
  }
  return dx;
}

// ------------------------------------------------------------------ ReLU

Tensor4 ReLU::forward(const Tensor4& x, const ForwardOptions& opt, ModelState&) {
  Tensor4 y = x;
  if (opt.cache) {
    mask_.assign(x.size(), 0);
    n_ = x.n, c_ = x.c, h_ = x.h, w_ = x.w;
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool on = y.v[i] > 0.0;
    if (!on) y.v[i] = 0.0;
    if (opt.cache) mask_[i] = on;
  }
  return y;
}

Tensor4 ReLU::backward(const Tensor4& g, ModelState&, bool) {
  if (mask_.size() != g.size()) throw InvalidArgument("relu backward without a cached forward pass");
  Tensor4 dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!mask_[i]) dx.v[i] = 0.0;
  return dx;
}

// --------------------------------------------------------- GlobalAvgPool

Tensor4 GlobalAvgPool::forward(const Tensor4& x, const ForwardOptions& opt, ModelState&) {
  Tensor4 y(x.n, x.c, 1, 1);
  const std::size_t P = x.plane();
  for (std::size_t i = 0; i < x.n * x.c; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < P; ++p) s += x.v[i * P + p];
    y.v[i] = s / static_cast<double>(P);
  }
  if (opt.cache) {
    h_ = x.h, w_ = x.w;
    cached_ = true;
  }
  return y;
}

Tensor4 GlobalAvgPool::backward(const Tensor4& g, ModelState&, bool) {
  if (!cached_) throw InvalidArgument("pool backward without a cached forward pass");
  Tensor4 dx(g.n, g.c, h_, w_);
  const std::size_t P = h_ * w_;
  for (std::size_t i = 0; i < g.n * g.c; ++i)
    for (std::size_t p = 0; p < P; ++p) dx.v[i * P + p] = g.v[i] / static_cast<double>(P);
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(ModelState& st, std::string name, std::size_t in, std::size_t out) : in_(in), out_(out) {
  w_off_ = st.add_block(name + ".weight", {out, in});
  b_off_ = st.add_block(name + ".bias", {out});
}

void Linear::initialize(ModelState& st, std::uint64_t seed) {
  he_uniform(st.param_span(w_off_, in_ * out_), in_, derive_seed(seed, {w_off_}));
  std::fill_n(st.params.begin() + static_cast<std::ptrdiff_t>(b_off_), out_, 0.0);
}

Tensor4 Linear::forward(const Tensor4& x, const ForwardOptions& opt, ModelState& st) {
  if (x.c * x.h * x.w != in_) throw InvalidArgument("linear input size mismatch");
  Tensor4 y(x.n, out_, 1, 1);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t o = 0; o < out_; ++o) {
      double s = st.params[b_off_ + o];
      for (std::size_t k = 0; k < in_; ++k) s += st.params[w_off_ + o * in_ + k] * x.v[i * in_ + k];
      y.v[i * out_ + o] = s;
    }
  if (opt.cache) x_ = x;
  return y;
}

Tensor4 Linear::backward(const Tensor4& g, ModelState& st, bool accumulate) {
  if (x_.n != g.n || x_.size() == 0) throw InvalidArgument("linear backward without a cached forward pass");
  Tensor4 dx(x_.n, x_.c, x_.h, x_.w);
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t o = 0; o < out_; ++o) {
      const double go = g.v[i * out_ + o];
      if (accumulate) st.grads[b_off_ + o] += go;
      for (std::size_t k = 0; k < in_; ++k) {
        if (accumulate) st.grads[w_off_ + o * in_ + k] += go * x_.v[i * in_ + k];
        dx.v[i * in_ + k] += go * st.params[w_off_ + o * in_ + k];
      }
    }
  return dx;
}

// --------------------------------------------------------------- Sigmoid

Tensor4 Sigmoid::forward(const Tensor4& x, const ForwardOptions& opt, ModelState&) {
  constexpr double lo = 1e-24;
  static const double hi = std::nextafter(1.0, 0.0);
  Tensor4 y = x;
  for (auto& v : y.v) v = std::clamp(1.0 / (1.0 + std::exp(-v)), lo, hi);
  if (opt.cache) y_ = y;
  return y;
}

Tensor4 Sigmoid::backward(const Tensor4& g, ModelState&, bool) {
  if (!y_.same_dims(g)) throw InvalidArgument("sigmoid backward without a cached forward pass");
  Tensor4 dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] *= y_.v[i] * (1.0 - y_.v[i]);
  return dx;
}

// ------------------------------------------------------------ Sequential

void Sequential::initialize(std::uint64_t seed) {
  for (auto& l : layers_) l->initialize(state_, seed);
  state_.zero_grads();
  std::fill(state_.m1.begin(), state_.m1.end(), 0.0);
  std::fill(state_.m2.begin(), state_.m2.end(), 0.0);
  state_.step = 0;
}

Tensor4 Sequential::forward(const Tensor4& x, const ForwardOptions& opt) {
  Tensor4 h = x;
  for (auto& l : layers_) h = l->forward(h, opt, state_);
  has_cache_ = opt.cache;
  return h;
}

Tensor4 Sequential::backward(const Tensor4& grad_out, bool accumulate_params) {
  if (!has_cache_) throw InvalidArgument("backward called without a cached forward pass");
  Tensor4 g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g, state_, accumulate_params);
  return g;
}

void Sequential::clear_cache() {
  for (auto& l : layers_) l->clear_cache();
  has_cache_ = false;
}

}  // namespace kspdiff::nn
