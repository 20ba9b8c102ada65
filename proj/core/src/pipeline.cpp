#include "kspdiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "kspdiff/encoding.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/fft.hpp"
#include "kspdiff/metrics.hpp"
#include "kspdiff/rng.hpp"

namespace kspdiff {
namespace {

enum Tag : std::uint64_t { kTagGen = 1, kTagDisc, kTagShuffle, kTagSlice, kTagNoise, kTagRecon };

ComplexTensor gaussian(const Shape& shape, double std, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  ComplexTensor out(shape);
  for (auto& v : out.data()) {
    const double re = g(rng), im = g(rng);
    v = cplx(std * re, std * im);
  }
  return out;
}

const char* rho_mode_name(RhoMode m) { return m == RhoMode::kFractionOfOmega ? "fraction_of_omega" : "aleph_over_upsilon"; }

RhoMode rho_mode_from(const std::string& s) {
  if (s == "fraction_of_omega") return RhoMode::kFractionOfOmega;
  if (s == "aleph_over_upsilon") return RhoMode::kAlephOverUpsilon;
  throw InvalidArgument("unknown rho_mode '" + s + "'");
}

void require_finite(const ComplexTensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericalError("non-finite values in " + what);
}

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw InvalidArgument(m); };
  if (!(R >= 1.0)) bad("R must be >= 1");
  if (!(center_fraction > 0.0 && center_fraction < 1.0)) bad("center_fraction must lie in (0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) bad("rho must lie in (0, 1)");
  if (!(lr > 0.0)) bad("lr must be positive");
  if (batch_size == 0) bad("batch_size must be positive");
  if (epochs == 0 && max_steps <= 0) bad("epochs or max_steps must be positive");
  if (max_steps < 0) bad("max_steps must be non-negative");
  if (T < 2) bad("T must be >= 2");
  if (!(beta_1 > 0.0 && beta_1 <= beta_T && beta_T < 1.0)) bad("need 0 < beta_1 <= beta_T < 1");
  if (stride < 1 || stride > T || T % stride != 0) bad("stride must divide T");
  if (!(lambda >= 0.0)) bad("lambda must be non-negative");
  if (!(init_noise_variance >= 0.0)) bad("init_noise_variance must be non-negative");
  if (t_start < 0 || t_start > T) bad("t_start must lie in [0, T]");
  if (resolved_t_start() < 1) bad("resolved t_start must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"R", R},
          {"center_fraction", center_fraction},
          {"rho", rho},
          {"rho_mode", rho_mode_name(rho_mode)},
          {"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"T", T},
          {"beta_1", beta_1},
          {"beta_T", beta_T},
          {"stride", stride},
          {"lambda", lambda},
          {"init_noise_variance", init_noise_variance},
          {"t_start", t_start},
          {"penalty_at_real", penalty_at_real},
          {"loss_domain", loss_domain == LossDomain::kKSpace ? "kspace" : "image"},
          {"dc_mode", dc.mode == DcMode::kExact ? "exact" : "coil_replace"},
          {"dc_inverted", dc.inverted},
          {"denoiser", denoiser.to_json()},
          {"discriminator", discriminator.to_json()},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.R = j.value("R", c.R);
  c.center_fraction = j.value("center_fraction", c.center_fraction);
  c.rho = j.value("rho", c.rho);
  c.rho_mode = rho_mode_from(j.value("rho_mode", std::string(rho_mode_name(c.rho_mode))));
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.T = j.value("T", c.T);
  c.beta_1 = j.value("beta_1", c.beta_1);
  c.beta_T = j.value("beta_T", c.beta_T);
  c.stride = j.value("stride", c.stride);
  c.lambda = j.value("lambda", c.lambda);
  c.init_noise_variance = j.value("init_noise_variance", c.init_noise_variance);
  c.t_start = j.value("t_start", c.t_start);
  c.penalty_at_real = j.value("penalty_at_real", c.penalty_at_real);
  const std::string dom = j.value("loss_domain", std::string("kspace"));
  if (dom != "kspace" && dom != "image") throw InvalidArgument("loss_domain must be 'kspace' or 'image'");
  c.loss_domain = dom == "kspace" ? LossDomain::kKSpace : LossDomain::kImage;
  const std::string dcm = j.value("dc_mode", std::string("exact"));
  if (dcm != "exact" && dcm != "coil_replace") throw InvalidArgument("dc_mode must be 'exact' or 'coil_replace'");
  c.dc.mode = dcm == "exact" ? DcMode::kExact : DcMode::kCoilReplace;
  c.dc.inverted = j.value("dc_inverted", c.dc.inverted);
  if (j.contains("denoiser")) c.denoiser = DenoiserSpec::from_json(j.at("denoiser"));
  if (j.contains("discriminator")) c.discriminator = DiscriminatorSpec::from_json(j.at("discriminator"));
  c.seed = j.value("seed", c.seed);
  return c;
}

// ------------------------------------------------------------------ data

SliceData make_slice(std::uint64_t id, const ComplexTensor& image, const SensitivityMaps& sens,
                     const SamplingMask& omega, double noise_std, std::uint64_t noise_seed) {
  const EncodingOperator op(sens, omega);
  SliceData s;
  s.id = id;
  s.omega = omega;
  s.measured = add_measurement_noise(encode(image, op), omega, noise_std, noise_seed);
  return s;
}

PreparedSlice prepare_slice(const SliceData& slice, const SensitivityMaps& sens, const TrainConfig& cfg,
                            std::uint64_t partition_seed) {
  if (slice.measured.shape() != sens.maps.shape())
    throw InvalidArgument("slice " + std::to_string(slice.id) + ": measurement " +
                          shape_to_string(slice.measured.shape()) + " does not match sensitivities " +
                          shape_to_string(sens.maps.shape()));
  PreparedSlice p;
  p.partition = partition_mask(slice.omega, cfg.rho, partition_seed, cfg.rho_mode);
  p.measured_aleph = apply_mask(slice.measured, p.partition.aleph);
  p.cond = zero_filled(p.measured_aleph, EncodingOperator(sens, p.partition.aleph));
  p.y0 = p.cond;
  p.target_upsilon = apply_mask(slice.measured, p.partition.upsilon);
  return p;
}

std::vector<int> training_steps(int T, int stride) {
  if (stride < 1 || T < 2) throw InvalidArgument("training_steps needs stride >= 1 and T >= 2");
  std::vector<int> out;
  for (int s = stride; s <= T; s += stride)
    if (s >= 2) out.push_back(s);
  if (out.empty()) throw InvalidArgument("stride leaves no usable generator step");
  return out;
}

// --------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig cfg, SensitivityMaps sens)
    : cfg_(std::move(cfg)),
      sens_(std::move(sens)),
      sched_((cfg_.validate(), cfg_.schedule())),
      gen_(cfg_.denoiser, derive_seed(cfg_.seed, {kTagGen})),
      disc_(cfg_.discriminator, derive_seed(cfg_.seed, {kTagDisc})) {
  adam_.lr = cfg_.lr;
}

LossReport Trainer::train_step(std::span<const SliceData> batch, const StepHooks* hooks) {
  if (batch.empty()) throw InvalidArgument("train_step needs a non-empty batch");
  const std::size_t B = batch.size();
  const double Bd = static_cast<double>(B);
  const int k = cfg_.stride;
  const auto grid = training_steps(cfg_.T, k);
  const bool use_oracle = hooks && hooks->oracle;

  std::vector<PreparedSlice> prep(B);
  std::vector<int> s(B), t(B);
  std::vector<ComplexTensor> y_t(B), y_s(B), conds(B), y0hat(B), fake(B);
  std::vector<Rng> rng;
  rng.reserve(B);
  for (std::size_t i = 0; i < B; ++i) {
    const std::uint64_t seed = derive_seed(cfg_.seed, {kTagSlice, static_cast<std::uint64_t>(step_), i, batch[i].id});
    prep[i] = prepare_slice(batch[i], sens_, cfg_, derive_seed(seed, {0}));
    rng.emplace_back(derive_seed(seed, {1}));
    std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
    s[i] = grid[pick(rng[i])];
    t[i] = s[i] - k;
    const Shape& shp = prep[i].y0.shape();
    const ComplexTensor e1 = gaussian(shp, 1.0, rng[i]);
    const ComplexTensor e2 = gaussian(shp, 1.0, rng[i]);
    y_t[i] = sample_yt(prep[i].y0, t[i], e1, sched_);
    y_s[i] = sample_between(y_t[i], t[i], s[i], e2, sched_);
    conds[i] = prep[i].cond;
  }

  // generator and aleph data consistency
  std::vector<ComplexTensor> raw;
  if (use_oracle) {
    for (std::size_t i = 0; i < B; ++i) raw.push_back(hooks->oracle(y_s[i], s[i], conds[i], i));
  } else {
    std::vector<double> emb(B);
    for (std::size_t i = 0; i < B; ++i) emb[i] = static_cast<double>(s[i]) / cfg_.T;
    raw = gen_.forward_batch(y_s, emb, conds, nn::Mode::kTrain, true);
  }
  std::vector<DcProjector> proj;
  proj.reserve(B);
  std::vector<PosteriorCoefficients> pc(B);
  for (std::size_t i = 0; i < B; ++i) {
    proj.emplace_back(sens_, prep[i].partition.aleph, cfg_.dc);
    y0hat[i] = proj[i].project(raw[i], prep[i].measured_aleph);
    pc[i] = posterior_coefficients(s[i], t[i], sched_);
    const ComplexTensor z = gaussian(y0hat[i].shape(), std::sqrt(pc[i].variance), rng[i]);
    fake[i] = pc[i].c_yt * y_s[i] + pc[i].c_y0 * y0hat[i] + z;
    require_finite(fake[i], "generated sample of slice " + std::to_string(batch[i].id));
    if (hooks && hooks->observe) {
      ModelInputs mi;
      mi.slice = batch[i].id;
      mi.s = s[i];
      mi.t = t[i];
      mi.y_s = &y_s[i];
      mi.cond = &conds[i];
      mi.measured_aleph = &prep[i].measured_aleph;
      mi.real = &y_t[i];
      mi.fake = &fake[i];
      hooks->observe(mi);
    }
  }

  // upsilon reconstruction loss and its gradient with respect to y0hat
  double l_ups = 0.0;
  std::vector<ComplexTensor> g_y0(B);
  for (std::size_t i = 0; i < B; ++i) {
    const double ab = sched_.alpha_bar(s[i]);
    const double sq = std::sqrt(1.0 - ab);
    ComplexTensor ks = fft2c_planes(expand_coils(y_s[i], sens_));
    ks -= std::sqrt(ab) * prep[i].target_upsilon;
    ComplexTensor eps_true = ifft2c_planes((1.0 / sq) * ks);
    const ComplexTensor eps_hat = eps_y0_convert(y_s[i], y0hat[i], s[i], sched_, ConvertDirection::kY0ToEps);
    const ReconLoss rl = recon_loss_upsilon_grad(eps_true, expand_coils(eps_hat, sens_), prep[i].partition.upsilon,
                                                 s[i], sched_, cfg_.loss_domain, &sens_);
    l_ups += rl.value / Bd;
    g_y0[i] = (-std::sqrt(ab) / sq / Bd) * combine_coils(rl.grad_pred, sens_);
  }

  // discriminator update
  const double lam = cfg_.lambda;
  auto& dst = disc_.state();
  dst.zero_grads();
  nn::ForwardOptions train_opt{nn::Mode::kTrain, true, true};
  nn::ForwardOptions probe_opt{nn::Mode::kTrain, true, false};

  const auto d_real = disc_.forward(y_t, conds, train_opt);
  std::vector<double> up(B);
  for (std::size_t i = 0; i < B; ++i) up[i] = -lam / (Bd * d_real[i]);
  disc_.backward(up, true);
  const auto d_fake = disc_.forward(fake, conds, train_opt);
  for (std::size_t i = 0; i < B; ++i) up[i] = lam / (Bd * (1.0 - d_fake[i]));
  disc_.backward(up, true);

  const std::vector<ComplexTensor>& at = cfg_.penalty_at_real ? y_t : fake;
  const auto gx = disc_.input_grad(at, conds, nn::Mode::kTrain);
  std::vector<double> pen(B);
  double gnorm = 0.0, xnorm = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    pen[i] = squared_norm(gx[i]);
    gnorm += pen[i];
    xnorm += squared_norm(at[i]);
  }
  if (lam > 0.0 && gnorm > 0.0) {
    // d/dtheta of 0.5*||grad_x D||^2 as a central difference of parameter
    // gradients along the input gradient direction
    const double h = 1e-4 * std::sqrt(std::max(xnorm, 1e-12) / gnorm);
    std::vector<ComplexTensor> xp(B), xm(B);
    for (std::size_t i = 0; i < B; ++i) {
      xp[i] = at[i] + h * gx[i];
      xm[i] = at[i] - h * gx[i];
    }
    disc_.forward(xp, conds, probe_opt);
    std::fill(up.begin(), up.end(), lam / (2.0 * h * Bd));
    disc_.backward(up, true);
    disc_.forward(xm, conds, probe_opt);
    std::fill(up.begin(), up.end(), -lam / (2.0 * h * Bd));
    disc_.backward(up, true);
  }
  const double l_d = disc_loss(d_real, d_fake, pen);
  adam_step(dst, adam_);

  // generator update
  const auto d_fake2 = disc_.forward(fake, conds, probe_opt);
  for (std::size_t i = 0; i < B; ++i) up[i] = -lam / (Bd * d_fake2[i]);
  const auto g_fake = disc_.backward(up, false);
  const double l_g = gen_loss(d_fake2);

  if (!use_oracle) {
    std::vector<ComplexTensor> g_raw(B);
    for (std::size_t i = 0; i < B; ++i) {
      ComplexTensor g = g_y0[i];
      g += pc[i].c_y0 * g_fake[i];
      g_raw[i] = proj[i].project_linear(g);
    }
    gen_.backward_batch(g_raw);
    adam_step(gen_.state(), adam_);
  } else {
    gen_.state().zero_grads();
  }

  LossReport rep;
  rep.step = step_;
  rep.t = s[0];
  rep.slice = batch[0].id;
  rep.l_upsilon = l_ups;
  rep.l_d = l_d;
  rep.l_g = l_g;
  rep.l_final = total_loss(l_ups, l_d, l_g, lam);
  if (!std::isfinite(rep.l_final)) {
    std::ostringstream os;
    os << "non-finite loss at step " << step_ << " (slice " << rep.slice << ", s=" << rep.t
       << "): l_upsilon=" << l_ups << " l_d=" << l_d << " l_g=" << l_g;
    throw NumericalError(os.str());
  }
  ++step_;
  gen_.mark_trained();
  return rep;
}

std::int64_t Trainer::steps_per_epoch(std::size_t n) const {
  if (n == 0) throw InvalidArgument("empty training set");
  return static_cast<std::int64_t>((n + cfg_.batch_size - 1) / cfg_.batch_size);
}

std::int64_t Trainer::planned_steps(std::size_t n) const {
  const std::int64_t by_epochs = steps_per_epoch(n) * static_cast<std::int64_t>(cfg_.epochs);
  if (cfg_.max_steps > 0) return cfg_.epochs > 0 ? std::min(by_epochs, cfg_.max_steps) : cfg_.max_steps;
  return by_epochs;
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t step, std::size_t n) const {
  const std::int64_t spe = steps_per_epoch(n);
  const auto epoch = static_cast<std::uint64_t>(step / spe);
  const auto b = static_cast<std::size_t>(step % spe);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg_.seed, {kTagShuffle, epoch}));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t lo = b * cfg_.batch_size, hi = std::min(n, lo + cfg_.batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi)};
}

void Trainer::fit(std::span<const SliceData> data, std::int64_t until_step,
                  const std::function<void(const LossReport&)>& on_step) {
  const std::int64_t end = until_step >= 0 ? until_step : planned_steps(data.size());
  std::vector<SliceData> batch;
  while (step_ < end) {
    batch.clear();
    for (auto i : batch_indices(step_, data.size())) batch.push_back(data[i]);
    const LossReport r = train_step(batch);
    if (on_step) on_step(r);
  }
}

void Trainer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_checkpoint(gen_.state(), cfg_.denoiser.to_json(), dir / "generator");
  save_checkpoint(disc_.state(), cfg_.discriminator.to_json(), dir / "discriminator");
  std::ofstream f(dir / "trainer.json");
  f << nlohmann::json{{"step", step_}, {"trained", gen_.trained()}, {"config", cfg_.to_json()}}.dump(2) << '\n';
  if (!f) throw IoError("cannot write " + (dir / "trainer.json").string());
}

void Trainer::load(const std::filesystem::path& dir) {
  std::ifstream f(dir / "trainer.json");
  if (!f) throw IoError("missing " + (dir / "trainer.json").string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed trainer.json: " + std::string(e.what()));
  }
  load_checkpoint(gen_.state(), dir / "generator");
  load_checkpoint(disc_.state(), dir / "discriminator");
  step_ = j.at("step").get<std::int64_t>();
  gen_.mark_trained(j.value("trained", step_ > 0));
}

// ------------------------------------------------------------- inference

ReconOptions ReconOptions::from(const TrainConfig& cfg, std::uint64_t seed) {
  ReconOptions o;
  o.t_start = cfg.resolved_t_start();
  o.stride = cfg.stride;
  o.init_noise_variance = cfg.init_noise_variance;
  o.seed = seed;
  o.dc = cfg.dc;
  return o;
}

ReconResult reconstruct(const ComplexTensor& measured, const SamplingMask& omega, const SensitivityMaps& sens,
                        Denoiser& model, const NoiseSchedule& sched, const ReconOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opt.require_trained && !opt.oracle && !model.trained())
    throw InvalidArgument("reconstruct: model has not been trained (pass require_trained=false to override)");
  if (opt.t_start < 1 || opt.t_start > sched.T()) throw InvalidArgument("t_start must lie in [1, T]");
  if (opt.stride < 1) throw InvalidArgument("stride must be positive");
  if (!(opt.init_noise_variance >= 0.0)) throw InvalidArgument("init noise variance must be non-negative");

  const ComplexTensor y_meas = apply_mask(measured, omega);
  const ComplexTensor zf = zero_filled(y_meas, EncodingOperator(sens, omega));
  const DcProjector proj(sens, omega, opt.dc);
  Rng rng(derive_seed(opt.seed, {kTagRecon}));
  ComplexTensor y = zf + gaussian(zf.shape(), std::sqrt(opt.init_noise_variance), rng);

  ReconResult res;
  int t = opt.t_start;
  while (t > 0) {
    ComplexTensor y0 = opt.oracle ? opt.oracle(y, t, zf, 0)
                                  : model.forward(y, static_cast<double>(t) / sched.T(), &zf, nn::Mode::kEval, false);
    y0 = proj.project(y0, y_meas);
    const int next = std::max(t - opt.stride, 0);
    if (next == 0) {
      y = std::move(y0);
    } else {
      Posterior p = posterior_between(y, y0, t, next, sched);
      y = std::move(p.mean);
      y += gaussian(y.shape(), std::sqrt(p.variance), rng);
    }
    require_finite(y, "reverse step t=" + std::to_string(t));
    ++res.steps;
    t = next;
  }
  res.image = proj.project(y, y_meas);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.config = {{"t_start", opt.t_start},
                {"stride", opt.stride},
                {"init_noise_variance", opt.init_noise_variance},
                {"seed", opt.seed},
                {"dc_mode", opt.dc.mode == DcMode::kExact ? "exact" : "coil_replace"},
                {"dc_inverted", opt.dc.inverted},
                {"schedule", sched.to_json()}};
  return res;
}

MetricReport evaluate_run(std::span<const ComplexTensor> recons, std::span<const ComplexTensor> truths,
                          std::string method, std::size_t n_boot, std::uint64_t seed) {
  if (recons.size() != truths.size())
    throw InvalidArgument("evaluate_run: " + std::to_string(recons.size()) + " reconstructions vs " +
                          std::to_string(truths.size()) + " references");
  if (recons.empty()) throw InvalidArgument("evaluate_run: nothing to evaluate");
  std::vector<double> n(recons.size()), p(recons.size()), s(recons.size());
  for (std::size_t i = 0; i < recons.size(); ++i) {
    n[i] = nmse(truths[i], recons[i]);
    p[i] = psnr(truths[i], recons[i]);
    s[i] = ssim(truths[i], recons[i]);
  }
  return MetricReport::build(std::move(method), std::move(n), std::move(p), std::move(s), n_boot, seed);
}

}  // namespace kspdiff
