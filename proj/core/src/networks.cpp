#include "kspdiff/networks.hpp"

#include <cmath>

#include "kspdiff/error.hpp"

namespace kspdiff {
namespace {

void put_complex(nn::Tensor4& x, std::size_t i, std::size_t ch, const ComplexTensor& z) {
  const std::size_t P = x.plane();
  double* re = x.v.data() + (i * x.c + ch) * P;
  double* im = re + P;
  for (std::size_t p = 0; p < P; ++p) {
    re[p] = z[p].real();
    im[p] = z[p].imag();
  }
}

ComplexTensor get_complex(const nn::Tensor4& x, std::size_t i, std::size_t ch) {
  ComplexTensor z({x.h, x.w});
  const std::size_t P = x.plane();
  const double* re = x.v.data() + (i * x.c + ch) * P;
  const double* im = re + P;
  for (std::size_t p = 0; p < P; ++p) z[p] = cplx(re[p], im[p]);
  return z;
}

void require_image(const ComplexTensor& z, const char* what) {
  if (z.rank() != 2) throw InvalidArgument(std::string(what) + " must be a 2-D image, got " +
                                           shape_to_string(z.shape()));
}

}  // namespace

// -------------------------------------------------------------- Denoiser

std::size_t DenoiserSpec::parameter_count() const {
  std::size_t total = 0;
  std::size_t cin = input_channels();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t cout = l + 1 == layers ? 2 : hidden_channels;
    total += kernel * kernel * cin * cout + cout;
    if (batch_norm && l + 1 < layers) total += 2 * cout;
    cin = cout;
  }
  return total;
}

nlohmann::json DenoiserSpec::to_json() const {
  return {{"hidden_channels", hidden_channels}, {"layers", layers},         {"kernel", kernel},
          {"residual", residual},               {"batch_norm", batch_norm}, {"conditioned", conditioned}};
}

DenoiserSpec DenoiserSpec::from_json(const nlohmann::json& j) {
  DenoiserSpec s;
  s.hidden_channels = j.value("hidden_channels", s.hidden_channels);
  s.layers = j.value("layers", s.layers);
  s.kernel = j.value("kernel", s.kernel);
  s.residual = j.value("residual", s.residual);
  s.batch_norm = j.value("batch_norm", s.batch_norm);
  s.conditioned = j.value("conditioned", s.conditioned);
  return s;
}

Denoiser::Denoiser(DenoiserSpec spec, std::uint64_t seed) : spec_(spec) {
  if (spec_.layers < 1 || spec_.hidden_channels < 1 || spec_.kernel % 2 == 0)
    throw InvalidArgument("denoiser needs >= 1 layer and an odd kernel");
  auto& st = net_.state();
  std::size_t cin = spec_.input_channels();
  for (std::size_t l = 0; l < spec_.layers; ++l) {
    const bool last = l + 1 == spec_.layers;
    const std::size_t cout = last ? 2 : spec_.hidden_channels;
    net_.add<nn::Conv2d>(st, "conv" + std::to_string(l), cin, cout, spec_.kernel, 1, spec_.kernel / 2);
    if (!last) {
      net_.add<nn::ReLU>();
      if (spec_.batch_norm) net_.add<nn::BatchNorm2d>(st, "bn" + std::to_string(l), cout);
    }
    cin = cout;
  }
  net_.initialize(seed);
}

std::vector<ComplexTensor> Denoiser::forward_batch(std::span<const ComplexTensor> y_t,
                                                   std::span<const double> t_embed,
                                                   std::span<const ComplexTensor> conds, nn::Mode mode,
                                                   bool cache) {
  if (y_t.empty() || t_embed.size() != y_t.size())
    throw InvalidArgument("denoiser batch needs one step embedding per sample");
  if (spec_.conditioned && conds.size() != y_t.size())
    throw InvalidArgument("conditioned denoiser needs one conditioning image per sample");
  const std::size_t n = y_t.size();
  for (std::size_t i = 0; i < n; ++i) {
    require_image(y_t[i], "denoiser input");
    require_same_shape(y_t[0], y_t[i], "denoiser batch");
    if (spec_.conditioned) require_same_shape(y_t[i], conds[i], "denoiser conditioning");
  }
  nn::Tensor4 x(n, spec_.input_channels(), y_t[0].rows(), y_t[0].cols());
  for (std::size_t i = 0; i < n; ++i) {
    put_complex(x, i, 0, y_t[i]);
    std::fill_n(x.v.begin() + static_cast<std::ptrdiff_t>((i * x.c + 2) * x.plane()), x.plane(), t_embed[i]);
    if (spec_.conditioned) put_complex(x, i, 3, conds[i]);
  }
  nn::ForwardOptions opt;
  opt.mode = mode;
  opt.cache = cache;
  nn::Tensor4 y = net_.forward(x, opt);
  std::vector<ComplexTensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(get_complex(y, i, 0));
    if (spec_.residual) out.back() += y_t[i];
  }
  cached_shape_ = cache ? y_t[0].shape() : Shape{};
  cached_batch_ = cache ? n : 0;
  return out;
}

std::vector<ComplexTensor> Denoiser::backward_batch(std::span<const ComplexTensor> upstream) {
  if (cached_shape_.empty()) throw InvalidArgument("denoiser backward without a cached forward pass");
  if (upstream.size() != cached_batch_) throw InvalidArgument("denoiser upstream batch size mismatch");
  for (const auto& u : upstream)
    if (u.shape() != cached_shape_) throw InvalidArgument("denoiser upstream gradient shape mismatch");
  nn::Tensor4 g(upstream.size(), 2, upstream[0].rows(), upstream[0].cols());
  for (std::size_t i = 0; i < upstream.size(); ++i) put_complex(g, i, 0, upstream[i]);
  nn::Tensor4 dx = net_.backward(g, true);
  std::vector<ComplexTensor> out;
  out.reserve(upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    out.push_back(get_complex(dx, i, 0));
    if (spec_.residual) out.back() += upstream[i];
  }
  return out;
}

ComplexTensor Denoiser::forward(const ComplexTensor& y_t, double t_embed, const ComplexTensor* cond,
                                nn::Mode mode, bool cache) {
  if (spec_.conditioned && !cond) throw InvalidArgument("conditioned denoiser needs a conditioning image");
  std::span<const ComplexTensor> c;
  if (spec_.conditioned) c = std::span(cond, 1);
  return forward_batch(std::span(&y_t, 1), std::span(&t_embed, 1), c, mode, cache).front();
}

ComplexTensor Denoiser::backward(const ComplexTensor& upstream) {
  return backward_batch(std::span(&upstream, 1)).front();
}

// --------------------------------------------------------- Discriminator

std::size_t DiscriminatorSpec::parameter_count() const {
  std::size_t total = 0;
  std::size_t cin = input_channels();
  for (auto c : channels) {
    total += kernel * kernel * cin * c + c + 2 * c;
    cin = c;
  }
  return total + cin + 1;
}

nlohmann::json DiscriminatorSpec::to_json() const {
  return {{"channels", channels}, {"kernel", kernel}, {"stride", stride}, {"padding", padding}};
}

DiscriminatorSpec DiscriminatorSpec::from_json(const nlohmann::json& j) {
  DiscriminatorSpec s;
  s.channels = j.value("channels", s.channels);
  s.kernel = j.value("kernel", s.kernel);
  s.stride = j.value("stride", s.stride);
  s.padding = j.value("padding", s.padding);
  return s;
}

Discriminator::Discriminator(DiscriminatorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.channels.empty()) throw InvalidArgument("discriminator needs at least one convolution");
  auto& st = net_.state();
  std::size_t cin = spec_.input_channels();
  for (std::size_t l = 0; l < spec_.channels.size(); ++l) {
    const std::size_t cout = spec_.channels[l];
    net_.add<nn::Conv2d>(st, "conv" + std::to_string(l), cin, cout, spec_.kernel, spec_.stride, spec_.padding);
    net_.add<nn::ReLU>();
    net_.add<nn::BatchNorm2d>(st, "bn" + std::to_string(l), cout);
    cin = cout;
  }
  net_.add<nn::GlobalAvgPool>();
  net_.add<nn::Linear>(st, "head", cin, 1);
  net_.add<nn::Sigmoid>();
  net_.initialize(seed);
}

std::vector<double> Discriminator::forward(std::span<const ComplexTensor> samples,
                                           std::span<const ComplexTensor> conds,
                                           const nn::ForwardOptions& opt) {
  if (samples.empty() || samples.size() != conds.size())
    throw InvalidArgument("discriminator needs matching, non-empty sample and conditioning batches");
  const auto& first = samples.front();
  require_image(first, "discriminator sample");
  nn::Tensor4 x(samples.size(), spec_.input_channels(), first.rows(), first.cols());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_same_shape(first, samples[i], "discriminator batch");
    require_same_shape(first, conds[i], "discriminator conditioning");
    put_complex(x, i, 0, samples[i]);
    put_complex(x, i, 2, conds[i]);
  }
  rows_ = first.rows();
  cols_ = first.cols();
  nn::Tensor4 y = net_.forward(x, opt);
  return y.v;
}

std::vector<ComplexTensor> Discriminator::backward(std::span<const double> upstream, bool accumulate_params) {
  nn::Tensor4 g(upstream.size(), 1, 1, 1);
  std::copy(upstream.begin(), upstream.end(), g.v.begin());
  nn::Tensor4 dx = net_.backward(g, accumulate_params);
  if (dx.n != upstream.size()) throw InvalidArgument("discriminator upstream batch size mismatch");
  std::vector<ComplexTensor> out;
  out.reserve(dx.n);
  for (std::size_t i = 0; i < dx.n; ++i) out.push_back(get_complex(dx, i, 0));
  return out;
}

std::vector<ComplexTensor> Discriminator::input_grad(std::span<const ComplexTensor> samples,
                                                     std::span<const ComplexTensor> conds, nn::Mode mode) {
  nn::ForwardOptions opt;
  opt.mode = mode;
  opt.update_running_stats = false;
  forward(samples, conds, opt);
  const std::vector<double> ones(samples.size(), 1.0);
  return backward(ones, false);
}

// ------------------------------------------------------------------ Adam

void adam_step(nn::ModelState& st, const AdamConfig& cfg) {
  for (std::size_t i = 0; i < st.grads.size(); ++i)
    if (!std::isfinite(st.grads[i]))
      throw NumericalError("non-finite gradient in parameter block '" + st.block_of(i).name + "'");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    const double g = st.grads[i];
    st.m1[i] = cfg.beta1 * st.m1[i] + (1.0 - cfg.beta1) * g;
    st.m2[i] = cfg.beta2 * st.m2[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = st.m1[i] / bc1;
    const double vhat = st.m2[i] / bc2;
    st.params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  st.zero_grads();
}

}  // namespace kspdiff
