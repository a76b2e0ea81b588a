#include <cmath>
#include <filesystem>

#include "../support/gradcheck.hpp"
#include "doctest.h"
#include "swnet/nn/model.hpp"
#include "swnet/nn/optim.hpp"

using namespace swnet;
using namespace swnet::nn;
using swnet::testing::gradcheck;
using swnet::testing::project;
using swnet::testing::random_tensor;
using swnet::testing::TensorD;

namespace {

ConvGeometry planar(std::size_t stride, std::size_t pad) {
  return {{1, stride, stride}, {0, pad, pad}};
}

// Direct cross-correlation, N = 1, 2-D.
std::vector<double> reference_conv2d(const TensorD& x, const TensorD& w, const TensorD& b,
                                     std::size_t s, std::size_t p) {
  const std::size_t ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t ho = (h + 2 * p - k) / s + 1, wo = (wd + 2 * p - k) / s + 1;
  std::vector<double> out(co * ho * wo);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        double acc = b.data()[o];
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t e = 0; e < k; ++e) {
              const long y = long(i * s + a) - long(p);
              const long z = long(j * s + e) - long(p);
              if (y < 0 || z < 0 || y >= long(h) || z >= long(wd)) continue;
              acc += w.data()[((o * ci + c) * k + a) * k + e] * x.data()[(c * h + y) * wd + z];
            }
        out[(o * ho + i) * wo + j] = acc;
      }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("tensor basics and the tape") {
  TensorD x({3}, {1.0, -2.0, 3.0}, true);
  const TensorD loss = sum(mul(x, x));
  CHECK(loss.item() == 14.0);
  loss.backward();
  CHECK(x.grad() == std::vector<double>{2.0, -4.0, 6.0});

  TensorD plain({2}, 1.0);
  CHECK_THROWS_AS(sum(plain).backward(), Error);
  try {
    sum(plain).backward();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDetached);
  }
  CHECK_THROWS_AS(mul(x, x).backward(), Error);
  CHECK_THROWS_AS(TensorD({2, 2}, std::vector<double>{1.0}), Error);

  {
    NoGradGuard guard;
    CHECK_FALSE(sum(x).requires_grad());
  }
  CHECK(sum(x).requires_grad());
  CHECK_FALSE(x.detach().requires_grad());
}

TEST_CASE("reused parameters accumulate across unrolled steps") {
  Rng rng(1);
  TensorD w = random_tensor({4}, rng);
  TensorD x0 = random_tensor({4}, rng, false);
  // Three-step chain x_{k+1} = w * x_k; loss is the sum of every step.
  auto chain = [&](int live) {
    TensorD x = x0;
    TensorD total({}, 0.0);
    for (int k = 0; k < 3; ++k) {
      const TensorD wk = (k == live || live < 0) ? w : w.detach();
      x = mul(wk, x);
      total = add(total, sum(x));
    }
    return total;
  };
  w.zero_grad();
  chain(-1).backward();
  const std::vector<double> full = w.grad();
  std::vector<double> parts(4, 0.0);
  for (int k = 0; k < 3; ++k) {
    w.zero_grad();
    chain(k).backward();
    for (std::size_t i = 0; i < 4; ++i) parts[i] += w.grad()[i];
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(full[i] == doctest::Approx(parts[i]).epsilon(1e-12));
}

TEST_CASE("conv2d matches a brute-force oracle and simple identities") {
  Rng rng(2);
  const TensorD x = random_tensor({1, 1, 4, 4}, rng);
  const TensorD w = random_tensor({1, 1, 3, 3}, rng);
  const TensorD b({1}, 0.0);
  for (std::size_t s : {1u, 1u}) {
    for (std::size_t p : {0u, 1u}) {
      const TensorD y = conv(x, w, b, planar(s, p));
      const auto ref = reference_conv2d(x, w, b, s, p);
      REQUIRE(y.numel() == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.data()[i] - ref[i]) < 1e-6);
    }
  }
  const TensorD x2 = random_tensor({1, 3, 7, 7}, rng);
  const TensorD w2 = random_tensor({2, 3, 3, 3}, rng);
  const TensorD b2 = random_tensor({2}, rng);
  const auto ref2 = reference_conv2d(x2, w2, b2, 2, 1);
  const TensorD y2 = conv(x2, w2, b2, planar(2, 1));
  for (std::size_t i = 0; i < ref2.size(); ++i) CHECK(std::abs(y2.data()[i] - ref2[i]) < 1e-9);

  const TensorD one({1, 1, 1, 1}, 1.0);
  CHECK(conv(x, one, b, planar(1, 0)).data() == x.data());

  const TensorD flat({1, 1, 5, 5}, 2.5);
  const TensorD avg({1, 1, 3, 3}, 1.0 / 9.0);
  const TensorD smooth = conv(flat, avg, b, planar(1, 1));
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 1; j < 4; ++j) CHECK(smooth.data()[i * 5 + j] == doctest::Approx(2.5));

  CHECK_THROWS_AS(conv(x2, w, b, planar(1, 1)), Error);
  CHECK_THROWS_AS(conv(random_tensor({1, 1, 4, 4}, rng), w, b, planar(2, 0)), Error);
}

TEST_CASE("transposed convolution shape rule, scatter and adjointness") {
  Rng rng(3);
  const TensorD w({1, 1, 2, 2}, 1.0);
  const TensorD b({1}, 0.0);
  CHECK(conv_transpose(TensorD({1, 1, 8, 8}, 0.0), w, b, planar(2, 0)).dim(2) == 16);

  TensorD unit({1, 1, 3, 3}, 0.0);
  unit.data()[4] = 1.0;
  const TensorD up = conv_transpose(unit, w, b, planar(2, 0));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const bool block = (i == 2 || i == 3) && (j == 2 || j == 3);
      CHECK(up.data()[i * 6 + j] == (block ? 1.0 : 0.0));
    }

  struct Case {
    Shape wshape;
    ConvGeometry g;
    Shape xshape;
  };
  // Tied weights: conv weight (Cout, Cin, k) is the tconv weight (Cin', Cout', k) with Cin'=Cout.
  const std::vector<Case> cases = {
      {{3, 2, 2, 2}, planar(2, 0), {2, 2, 8, 8}},
      {{3, 2, 3, 3}, planar(1, 1), {1, 2, 5, 6}},
      {{2, 4, 2, 3, 3}, {{2, 1, 1}, {0, 1, 1}}, {1, 4, 6, 5, 5}},
  };
  const TensorD zero3({3}, 0.0);
  for (const Case& c : cases) {
    const TensorD wt = random_tensor(c.wshape, rng);
    const TensorD x = random_tensor(c.xshape, rng);
    const TensorD bc(Shape{c.wshape[0]}, 0.0);
    const TensorD bt(Shape{c.wshape[1]}, 0.0);
    const TensorD ax = conv(x, wt, bc, c.g);
    const TensorD y = random_tensor(ax.shape(), rng);
    const TensorD aty = conv_transpose(y, wt, bt, c.g);
    REQUIRE(aty.shape() == x.shape());
    const double lhs = dot(ax.data(), y.data());
    const double rhs = dot(x.data(), aty.data());
    CHECK(std::abs(lhs - rhs) < 1e-6 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("pooling and activations") {
  TensorD x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  const TensorD m = maxpool2d(x);
  CHECK(m.item() == 4.0);
  sum(m).backward();
  CHECK(x.grad() == std::vector<double>{0, 0, 0, 1});

  TensorD ties({1, 1, 2, 2}, 5.0, true);
  sum(maxpool2d(ties)).backward();
  CHECK(ties.grad() == std::vector<double>{1, 0, 0, 0});
  const TensorD flat({1, 2, 4, 6}, 3.0);
  const TensorD pooled = maxpool2d(flat);
  CHECK(pooled.shape() == Shape{1, 2, 2, 3});
  for (double v : pooled.data()) CHECK(v == 3.0);
  CHECK_THROWS_AS(maxpool2d(TensorD({1, 1, 3, 4}, 0.0)), Error);

  const TensorD r = relu(TensorD({2}, {-1.0, 2.0}));
  CHECK(r.data() == std::vector<double>{0.0, 2.0});
  CHECK(selu(TensorD({1}, 0.0)).item() == 0.0);
  CHECK(selu(TensorD({1}, -1e3)).item() == doctest::Approx(-kSeluScale * kSeluAlpha));
  CHECK(kSeluScale * kSeluAlpha == doctest::Approx(1.7581).epsilon(1e-4));
  CHECK(selu(TensorD({1}, 1.0)).item() == doctest::Approx(kSeluScale));
}

TEST_CASE("every layer kind passes central-difference checks") {
  Rng rng(4);
  auto check = [&](const char* name, const std::function<TensorD()>& f, std::vector<TensorD> wrt) {
    const double err = gradcheck(f, std::move(wrt), rng);
    INFO(std::string(name) << " relative error " << err);
    CHECK(err < 1e-5);
  };

  const TensorD x2 = random_tensor({2, 3, 6, 6}, rng);
  const TensorD w2 = random_tensor({4, 3, 3, 3}, rng);
  const TensorD b2 = random_tensor({4}, rng);
  const TensorD r2 = random_tensor({2, 4, 6, 6}, rng, false);
  check("conv2d", [&] { return project(conv(x2, w2, b2, planar(1, 1)), r2); }, {x2, w2, b2});
  const TensorD x7 = random_tensor({1, 3, 7, 7}, rng);
  const TensorD r2s = random_tensor({1, 4, 4, 4}, rng, false);
  check("conv2d stride 2", [&] { return project(conv(x7, w2, b2, planar(2, 1)), r2s); },
        {x7, w2, b2});

  const TensorD wt = random_tensor({3, 2, 2, 2}, rng);
  const TensorD bt = random_tensor({2}, rng);
  const TensorD rt = random_tensor({2, 2, 12, 12}, rng, false);
  check("tconv2d", [&] { return project(conv_transpose(x2, wt, bt, planar(2, 0)), rt); },
        {x2, wt, bt});

  const TensorD x3 = random_tensor({1, 2, 5, 4, 4}, rng);
  const TensorD w3 = random_tensor({3, 2, 2, 3, 3}, rng);
  const TensorD b3 = random_tensor({3}, rng);
  const ConvGeometry g3{{1, 1, 1}, {0, 1, 1}};
  const TensorD r3 = random_tensor({1, 3, 4, 4, 4}, rng, false);
  check("conv3d", [&] { return project(conv(x3, w3, b3, g3), r3); }, {x3, w3, b3});

  const TensorD wt3 = random_tensor({2, 3, 2, 3, 3}, rng);
  const ConvGeometry gt3{{2, 1, 1}, {0, 1, 1}};
  const TensorD rt3 = random_tensor({1, 3, 10, 4, 4}, rng, false);
  check("tconv3d", [&] { return project(conv_transpose(x3, wt3, b3, gt3), rt3); },
        {x3, wt3, b3});

  const TensorD rp = random_tensor({2, 3, 3, 3}, rng, false);
  check("maxpool2d", [&] { return project(maxpool2d(x2), rp); }, {x2});
  const TensorD ra = random_tensor({2, 3, 6, 6}, rng, false);
  check("relu", [&] { return project(relu(x2), ra); }, {x2});
  check("selu", [&] { return project(selu(x2), ra); }, {x2});

  const TensorD y2 = random_tensor({2, 3, 6, 6}, rng);
  check("add", [&] { return project(add(x2, y2), ra); }, {x2, y2});
  check("sub", [&] { return project(sub(x2, y2), ra); }, {x2, y2});
  check("mul", [&] { return project(mul(x2, y2), ra); }, {x2, y2});
  check("scale", [&] { return project(scale(x2, 0.7), ra); }, {x2});

  const TensorD z = random_tensor({2, 1, 6, 6}, rng);
  const TensorD rc = random_tensor({2, 4, 6, 6}, rng, false);
  check("concat", [&] { return project(concat_channels<double>({x2, z}), rc); }, {x2, z});

  const TensorD rs = random_tensor({2, 2, 6, 6}, rng, false);
  check("slice_channels", [&] { return project(slice_channels(x2, 1, 2), rs); }, {x2});

  TensorD mask({1, 3, 6, 6}, 0.0);
  for (std::size_t i = 0; i < mask.numel(); i += 3) mask.data()[i] = 1.0;
  check("masked_fill", [&] { return project(masked_fill(x2, mask, 0.0), ra); }, {x2});

  check("diff_x", [&] { return project(diff_x(x2, 0.25), ra); }, {x2});
  check("diff_y", [&] { return project(diff_y(x2, 0.25), ra); }, {x2});
  check("mean", [&] { return mean(mul(x2, x2)); }, {x2});
  check("mse", [&] { return mse(x2, y2); }, {x2, y2});
}

TEST_CASE("gradient loss values and gradients through a two-layer net") {
  Rng rng(5);
  const TensorD t = random_tensor({1, 1, 8, 8}, rng, false);
  LossConfig cfg;
  cfg.spacing = 1.0 / 8.0;
  CHECK(gradient_loss(t, t, cfg).item() == 0.0);

  TensorD shifted = t.detach();
  for (double& v : shifted.data()) v += 0.3;
  CHECK(gradient_loss(shifted, t, cfg).item() == doctest::Approx(0.95 * 0.09).epsilon(1e-12));

  const TensorD p = random_tensor({1, 1, 8, 8}, rng, false);
  LossConfig plain = cfg;
  plain.lambda = 0.0;
  CHECK(gradient_loss(p, t, plain).item() == doctest::Approx(mse(p, t).item()));

  // Independent derivative oracle on a linear ramp: d/dx of 2x is 2 everywhere.
  TensorD ramp({1, 1, 3, 4}, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) ramp.data()[i * 4 + j] = 2.0 * j * 0.5 + i;
  const TensorD dx = diff_x(ramp, 0.5);
  const TensorD dy = diff_y(ramp, 0.5);
  for (double v : dx.data()) CHECK(v == doctest::Approx(2.0));
  for (double v : dy.data()) CHECK(v == doctest::Approx(2.0));

  const TensorD x = random_tensor({2, 2, 8, 8}, rng, false);
  const TensorD w1 = random_tensor({3, 2, 3, 3}, rng);
  const TensorD b1 = random_tensor({3}, rng);
  const TensorD w2 = random_tensor({1, 3, 3, 3}, rng);
  const TensorD b2 = random_tensor({1}, rng);
  const TensorD target = random_tensor({2, 1, 8, 8}, rng, false);
  auto f = [&] {
    const TensorD h = selu(conv(x, w1, b1, planar(1, 1)));
    return gradient_loss(conv(h, w2, b2, planar(1, 1)), target, cfg);
  };
  CHECK(gradcheck(f, {w1, b1, w2, b2}, rng) < 1e-5);
  CHECK_THROWS_AS(gradient_loss(x, target, cfg), Error);
  LossConfig bad;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("adam and the learning-rate schedule") {
  Tensor<float> w({1}, 0.5f, true);
  std::vector<NamedParameter> params{{"w", w}};
  AdamState state;
  w.grad()[0] = 1.0f;
  adam_step(params, state);
  CHECK(w.data()[0] == doctest::Approx(0.5 - 1e-4).epsilon(1e-7));
  CHECK(state.step == 1);

  Tensor<float> still({3}, 2.0f, true);
  std::vector<NamedParameter> zero{{"still", still}};
  AdamState s2;
  still.grad();
  for (int i = 0; i < 5; ++i) adam_step(zero, s2);
  for (float v : still.data()) CHECK(v == 2.0f);

  w.grad()[0] = NAN;
  try {
    adam_step(params, state);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }

  CHECK(lr_schedule(0) == 1e-4);
  CHECK(lr_schedule(99) == 1e-4);
  CHECK(lr_schedule(100) == doctest::Approx(1e-5));
  CHECK(lr_schedule(250) == doctest::Approx(1e-6));
}

TEST_CASE("model interpreter, initialisation and checkpoints") {
  ModelSpec spec;
  spec.layers = {LayerSpec::conv2d(2, 4, 3, 1, Activation::kRelu),
                 LayerSpec::maxpool2d(4),
                 LayerSpec::conv2d(4, 4, 3, 1, Activation::kRelu),
                 LayerSpec::tconv2d(4, 4, 2, 2),
                 LayerSpec::concat_skip(4, 4),
                 LayerSpec::conv2d(8, 1, 1, 0, Activation::kNone)};
  Rng rng(6);
  Model<float> m(spec, rng);
  CHECK(m.parameter_count() == spec.parameter_count());
  CHECK(m.parameter_count() == (2 * 4 * 9 + 4) + (4 * 4 * 9 + 4) + (4 * 4 * 4 + 4) + (8 + 1));
  for (std::size_t i = 1; i < m.parameters().size(); i += 2) {
    for (float v : m.parameters()[i].data()) CHECK(v == 0.0f);
  }
  const double bound = std::sqrt(6.0 / 18.0);
  for (float v : m.parameters()[0].data()) CHECK(std::abs(v) <= bound);

  Tensor<float> x({1, 2, 8, 8}, 0.0f);
  for (float& v : x.data()) v = static_cast<float>(rng.uniform(-1, 1));
  const auto y = m.forward(x);
  CHECK(y.shape() == Shape{1, 1, 8, 8});

  const auto path = std::filesystem::temp_directory_path() / "swnet_nn_ckpt.wnn";
  save_checkpoint(path, m);
  const Model<float> back = load_checkpoint(path);
  CHECK(back.spec() == m.spec());
  CHECK(back.forward(x).data() == y.data());
  auto bytes = encode_checkpoint(m);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(bytes), Error);
  bytes[0] = 'Z';
  CHECK_THROWS_AS(decode_checkpoint(bytes), Error);
  std::filesystem::remove(path);

  Rng a(9), b(9);
  CHECK(encode_checkpoint(Model<float>(spec, a)) == encode_checkpoint(Model<float>(spec, b)));

  ModelSpec broken = spec;
  broken.layers.pop_back();
  broken.layers.pop_back();
  CHECK_THROWS_AS(broken.validate(), Error);
  CHECK_THROWS_AS(m.forward(Tensor<float>({1, 3, 8, 8}, 0.0f)), Error);
  CHECK_THROWS_AS(m.forward(Tensor<float>({1, 2, 5, 5}, 0.0f)), Error);
}
