#include <gtest/gtest.h>

#include <filesystem>
#include <unistd.h>

#include "gradcheck.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/networks.hpp"

using namespace kspdiff;
namespace fs = std::filesystem;

TEST(Gradients, DenoiserParameters) {
  const auto r = ktest::check_denoiser_params(40, 1e-3, 11);
  EXPECT_EQ(r.failed, 0u) << "worst relative error " << r.worst;
}

TEST(Gradients, DiscriminatorParameters) {
  const auto r = ktest::check_disc_params(40, 1e-3, 12);
  EXPECT_EQ(r.failed, 0u) << "worst relative error " << r.worst;
}

TEST(Gradients, DiscriminatorInput) {
  const auto r = ktest::check_disc_input(40, 1e-3, 13);
  EXPECT_EQ(r.failed, 0u) << "worst relative error " << r.worst;
}

TEST(Gradients, DenoiserInputIncludesResidual) {
  DenoiserSpec spec;
  spec.hidden_channels = 3;
  spec.layers = 2;
  Denoiser d(spec, 3);
  const auto y = ktest::random_tensor({8, 8}, 1), c = ktest::random_tensor({8, 8}, 2);
  const auto w = ktest::random_tensor({8, 8}, 3);
  d.forward(y, 0.5, &c, nn::Mode::kTrain, true);
  const auto g = d.backward(w);
  auto obj = [&](const ComplexTensor& yy) { return inner(w, d.forward(yy, 0.5, &c, nn::Mode::kTrain, false)).real(); };
  for (std::size_t e : {0u, 9u, 27u, 63u}) {
    auto yp = y, ym = y;
    yp[e] += 1e-6;
    ym[e] -= 1e-6;
    EXPECT_LT(ktest::rel_err(g[e].real(), (obj(yp) - obj(ym)) / 2e-6), 1e-4);
  }
}

TEST(Networks, ParameterCounts) {
  DenoiserSpec spec;
  Denoiser d(spec, 1);
  EXPECT_EQ(d.state().parameter_count(), spec.parameter_count());
  // 5*32*9+32 + 3*(32*32*9+32) + 32*2*9+2
  EXPECT_EQ(spec.parameter_count(), 1472u + 3u * 9248u + 578u);
  DiscriminatorSpec ds;
  Discriminator disc(ds, 1);
  EXPECT_EQ(disc.state().parameter_count(), ds.parameter_count());
}

TEST(Networks, DiscriminatorScoresStayInsideUnitInterval) {
  Discriminator d(ktest::tiny_disc(), 2);
  std::vector<ComplexTensor> x{ktest::random_tensor({16, 16}, 1, 1e3)};
  std::vector<ComplexTensor> c{ktest::random_tensor({16, 16}, 2, 1e3)};
  for (int k = 0; k < 3; ++k) {
    const auto s = d.forward(x, c, nn::ForwardOptions{nn::Mode::kEval, false, false});
    EXPECT_GT(s[0], 0.0);
    EXPECT_LT(s[0], 1.0);
    x[0] *= -1.0;
  }
}

TEST(Networks, DeterministicInitialisation) {
  Denoiser a(DenoiserSpec{}, 9), b(DenoiserSpec{}, 9), c(DenoiserSpec{}, 10);
  EXPECT_EQ(a.state().params, b.state().params);
  EXPECT_NE(a.state().params, c.state().params);
}

TEST(Networks, UnconditionedRequiresNoConditioning) {
  DenoiserSpec spec;
  spec.conditioned = false;
  spec.layers = 2;
  Denoiser d(spec, 1);
  const auto y = ktest::random_tensor({8, 8}, 4);
  EXPECT_EQ(d.forward(y, 0.1, nullptr, nn::Mode::kEval, false).shape(), y.shape());
  DenoiserSpec cs;
  cs.layers = 2;
  Denoiser dc(cs, 1);
  EXPECT_THROW(dc.forward(y, 0.1, nullptr, nn::Mode::kEval, false), InvalidArgument);
  EXPECT_THROW(dc.backward(y), InvalidArgument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::ModelState st;
  st.add_block("w", {3});
  st.params = {1.0, 2.0, 3.0};
  st.grads = {0.5, -2.0, 0.0};
  AdamConfig cfg;
  adam_step(st, cfg);
  EXPECT_NEAR(st.params[0], 1.0 - cfg.lr, 1e-9);
  EXPECT_NEAR(st.params[1], 2.0 + cfg.lr, 1e-9);
  EXPECT_DOUBLE_EQ(st.params[2], 3.0);
  EXPECT_EQ(st.step, 1);
  for (double g : st.grads) EXPECT_EQ(g, 0.0);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  nn::ModelState st;
  st.add_block("first", {2});
  st.add_block("second", {2});
  st.grads[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(st, AdamConfig{});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const fs::path dir = fs::temp_directory_path() / ("kspdiff_ckpt_" + std::to_string(::getpid()));
  Discriminator a(ktest::tiny_disc(), 3);
  std::vector<ComplexTensor> x{ktest::random_tensor({16, 16}, 1)}, c{ktest::random_tensor({16, 16}, 2)};
  a.forward(x, c, nn::ForwardOptions{nn::Mode::kTrain, true, true});
  a.backward(std::vector<double>{1.0}, true);
  adam_step(a.state(), AdamConfig{});
  save_checkpoint(a.state(), a.spec().to_json(), dir);
  Discriminator b(ktest::tiny_disc(), 99);
  const auto spec = load_checkpoint(b.state(), dir);
  EXPECT_EQ(spec, a.spec().to_json());
  EXPECT_EQ(b.state().params, a.state().params);
  EXPECT_EQ(b.state().m1, a.state().m1);
  EXPECT_EQ(b.state().m2, a.state().m2);
  EXPECT_EQ(b.state().buffers, a.state().buffers);
  EXPECT_EQ(b.state().step, a.state().step);
  Denoiser wrong(DenoiserSpec{}, 1);
  EXPECT_THROW(load_checkpoint(wrong.state(), dir), Error);
  fs::remove_all(dir);
}
