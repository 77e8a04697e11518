#include <doctest.h>

#include <cmath>
#include <functional>

#include "lpa/autodiff.hpp"
#include "lpa/nn.hpp"

using namespace lpa;
using nn::Tensor;
using nn::Var;

namespace {

// Central-difference check of d(build())/d(inputs). `build` must rebuild the
// graph from the inputs' current values.
void check_gradients(const std::vector<Var>& inputs, const std::function<Var()>& build,
                     double eps = 1e-6, double tol = 1e-5) {
  Var loss = build();
  REQUIRE(loss->value.size() == 1);
  nn::backward(loss);
  std::vector<Tensor> analytic;
  for (const auto& in : inputs) {
    REQUIRE_FALSE(in->grad.empty());
    analytic.push_back(in->grad);
    in->grad = Tensor();
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& val = inputs[k]->value;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double orig = val[i];
      val[i] = orig + eps;
      const double fp = build()->value[0];
      val[i] = orig - eps;
      const double fm = build()->value[0];
      val[i] = orig;
      const double fd = (fp - fm) / (2 * eps);
      const double an = analytic[k][i];
      const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      if (err >= tol) {
        CAPTURE(k);
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(an);
      }
      REQUIRE(err < tol);
    }
  }
}

Var mk(Tensor t) { return nn::make_var(std::move(t), true); }

}  // namespace

TEST_CASE("elementwise and activation gradients") {
  Rng rng(1);
  Var a = mk(Tensor::randn({3, 4}, rng));
  Var b = mk(Tensor::randn({3, 4}, rng));
  check_gradients({a, b}, [&] {
    Var x = nn::add(nn::mul(a, b), nn::mul_scalar(nn::sub(a, b), 0.7));
    x = nn::leaky_relu(x, 0.2);
    x = nn::add(x, nn::softplus(a));
    x = nn::add(x, nn::sigmoid(b));
    x = nn::add(x, nn::tanh_v(a));
    return nn::mean(nn::square(x));
  });
}

TEST_CASE("exp/log/abs gradients away from kinks") {
  Rng rng(2);
  Tensor ta = Tensor::randn({2, 3}, rng);
  for (std::size_t i = 0; i < ta.size(); ++i) ta[i] = 0.5 + std::abs(ta[i]);  // positive
  Var a = mk(ta);
  check_gradients({a}, [&] {
    return nn::sum(nn::add(nn::log_v(a), nn::mul(nn::exp_v(nn::neg(a)), nn::abs_v(a))));
  });
}

TEST_CASE("matmul, bias, reductions, shape ops") {
  Rng rng(3);
  Var a = mk(Tensor::randn({4, 5}, rng));
  Var w = mk(Tensor::randn({5, 3}, rng));
  Var bias = mk(Tensor::randn({3}, rng));
  check_gradients({a, w, bias}, [&] {
    Var y = nn::linear(a, w, bias);
    y = nn::concat_cols(y, nn::slice_cols(y, 0, 2));
    y = nn::transpose2d(y);
    Var z = nn::mean_rows(nn::reshape(y, {5, 4}));
    return nn::add(nn::sum(nn::sum_cols(y)), nn::mean(z));
  });
}

TEST_CASE("conv2d gradients, stride 1 and 2") {
  Rng rng(4);
  Var x = mk(Tensor::randn({2, 3, 6, 6}, rng));
  Var w1 = mk(Tensor::randn({4, 3, 3, 3}, rng, 0.4));
  Var b1 = mk(Tensor::randn({4}, rng, 0.1));
  Var w2 = mk(Tensor::randn({2, 4, 3, 3}, rng, 0.4));
  Var b2 = mk(Tensor::randn({2}, rng, 0.1));
  check_gradients({x, w1, b1, w2, b2}, [&] {
    Var h = nn::leaky_relu(nn::conv2d(x, w1, b1, 1));
    h = nn::conv2d(h, w2, b2, 2);
    return nn::mean(nn::square(h));
  }, 1e-5, 1e-4);
}

TEST_CASE("upsample, pooling, channel affine, concat ops") {
  Rng rng(5);
  Var x = mk(Tensor::randn({2, 3, 4, 4}, rng));
  Var s = mk(Tensor::randn({2, 3}, rng));
  Var cb = mk(Tensor::randn({3}, rng));
  Var x2 = mk(Tensor::randn({2, 2, 4, 4}, rng));
  check_gradients({x, s, cb, x2}, [&] {
    Var u = nn::upsample2x(x);
    Var v = nn::scale_channels(x, s);
    v = nn::shift_channels(v, s);
    v = nn::add_channel_bias(v, cb);
    Var cat = nn::concat_channels(v, x2);
    return nn::add(nn::mean(u), nn::add(nn::mean(nn::global_avg_pool(cat)), nn::mean(cat)));
  });
}

TEST_CASE("broadcast_batch and concat_batch") {
  Rng rng(6);
  Var a = mk(Tensor::randn({2, 3}, rng));
  Var i1 = mk(Tensor::randn({1, 2, 2, 2}, rng));
  Var i2 = mk(Tensor::randn({1, 2, 2, 2}, rng));
  check_gradients({a, i1, i2}, [&] {
    Var b = nn::broadcast_batch(a, 3);
    Var c = nn::concat_batch({i1, i2});
    return nn::add(nn::mean(nn::square(b)), nn::mean(nn::square(c)));
  });
}

TEST_CASE("softmax cross entropy value and gradient") {
  Rng rng(7);
  Var logits = mk(Tensor::randn({4, 5}, rng));
  const std::vector<int> targets = {0, 3, 2, 4};
  // value against a direct computation
  const Var ce = nn::softmax_cross_entropy(logits, targets);
  for (int i = 0; i < 4; ++i) {
    double mx = -1e18, lse = 0;
    for (int j = 0; j < 5; ++j) mx = std::max(mx, logits->value[(std::size_t)(i * 5 + j)]);
    for (int j = 0; j < 5; ++j) lse += std::exp(logits->value[(std::size_t)(i * 5 + j)] - mx);
    lse = std::log(lse) + mx;
    CHECK(ce->value[(std::size_t)i] ==
          doctest::Approx(lse - logits->value[(std::size_t)(i * 5 + targets[(std::size_t)i])]));
  }
  check_gradients({logits}, [&] {
    return nn::mean(nn::softmax_cross_entropy(logits, targets));
  });
}

TEST_CASE("softmax_rows gradient") {
  Rng rng(8);
  Var logits = mk(Tensor::randn({3, 4}, rng));
  Var weights = mk(Tensor::randn({3, 4}, rng));
  check_gradients({logits, weights}, [&] {
    return nn::sum(nn::mul(nn::softmax_rows(logits), weights));
  });
}

TEST_CASE("grid_sample_plane interpolates and differentiates") {
  Rng rng(9);
  Var plane = mk(Tensor::randn({2, 4, 4}, rng));
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> coords(5, 2);
  coords << -1, -1, 1, 1, 0.1, -0.4, 0.99, -0.99, 2.0, 0.0;  // last clamps
  // corner sample equals the raw grid value
  const Var out = nn::grid_sample_plane(plane, coords);
  CHECK(out->value[0] == doctest::Approx(plane->value[0]));          // (-1,-1) -> (0,0)
  CHECK(out->value[(std::size_t)(1 * 2)] ==
        doctest::Approx(plane->value[(std::size_t)(3 * 4 + 3)]));    // (1,1) -> (3,3)
  check_gradients({plane}, [&] {
    return nn::mean(nn::square(nn::grid_sample_plane(plane, coords)));
  });
}

TEST_CASE("volume_integrate matches a direct quadrature and differentiates") {
  Rng rng(10);
  const int r = 3, s = 5;
  Tensor sig_t = Tensor::randn({r, s}, rng);
  for (std::size_t i = 0; i < sig_t.size(); ++i) sig_t[i] = std::abs(sig_t[i]) * 2.0;
  Var sigma = mk(sig_t);
  Tensor col_t = Tensor::randn({r, s * 3}, rng);
  for (std::size_t i = 0; i < col_t.size(); ++i) col_t[i] = 0.5 + 0.4 * std::tanh(col_t[i]);
  Var color = mk(col_t);
  Tensor t({r, s}), delta({r, s});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < s; ++j) {
      t[(std::size_t)(i * s + j)] = 0.1 + 0.3 * j;
      delta[(std::size_t)(i * s + j)] = 0.3;
    }
  }
  const double far = 2.0;
  const double bg[3] = {0.5, 0.5, 0.5};

  const Var packed = nn::volume_integrate(sigma, color, t, delta, far, bg);
  // direct per-ray quadrature
  for (int i = 0; i < r; ++i) {
    double trans = 1, depth = 0, rgb[3] = {0, 0, 0};
    for (int j = 0; j < s; ++j) {
      const double a = 1 - std::exp(-sigma->value[(std::size_t)(i * s + j)] * 0.3);
      const double w = trans * a;
      for (int c = 0; c < 3; ++c) rgb[c] += w * color->value[(std::size_t)((i * s + j) * 3 + c)];
      depth += w * t[(std::size_t)(i * s + j)];
      trans *= 1 - a;
    }
    for (int c = 0; c < 3; ++c) {
      CHECK(packed->value[(std::size_t)(i * 5 + c)] ==
            doctest::Approx(rgb[c] + trans * bg[c]).epsilon(1e-10));
    }
    CHECK(packed->value[(std::size_t)(i * 5 + 3)] ==
          doctest::Approx(depth + trans * far).epsilon(1e-10));
    CHECK(packed->value[(std::size_t)(i * 5 + 4)] == doctest::Approx(1 - trans).epsilon(1e-10));
  }
  Rng wrng(11);
  const Tensor wmask = Tensor::randn({r, 5}, wrng);
  check_gradients({sigma, color}, [&] {
    return nn::sum(nn::mul_const(nn::volume_integrate(sigma, color, t, delta, far, bg), wmask));
  });
}

TEST_CASE("no-grad mode records nothing") {
  Rng rng(12);
  Var a = mk(Tensor::randn({2, 2}, rng));
  {
    nn::NoGradGuard ng;
    Var y = nn::mean(nn::square(a));
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  Var y = nn::mean(nn::square(a));
  CHECK(y->requires_grad);
}

TEST_CASE("Adam is deterministic and skips empty grads") {
  Rng rng(13);
  auto run = [&](std::uint64_t seed) {
    Rng r2(seed);
    Var w = mk(Tensor::randn({4, 4}, r2));
    nn::Adam adam({w}, 1e-2);
    for (int i = 0; i < 20; ++i) {
      Var loss = nn::mean(nn::square(nn::add_scalar(w, -0.3)));
      adam.zero_grad();
      nn::backward(loss);
      adam.step();
    }
    return w->value.content_hash();
  };
  CHECK(run(100) == run(100));
  CHECK(run(100) != run(101));
}

TEST_CASE("ParamSet save/load round trip is bit exact") {
  Rng rng(14);
  nn::ParamSet ps;
  ps.create("a.w", Tensor::randn({3, 7}, rng));
  ps.create("b.w", Tensor::randn({2, 2, 3, 3}, rng));
  const std::uint64_t h0 = ps.content_hash();
  const std::string path = "/tmp/lpa_paramset_test.bin";
  ps.save(path);
  for (const auto& [name, v] : ps.items()) v->value.fill(0.0);
  CHECK(ps.content_hash() != h0);
  ps.load(path);
  CHECK(ps.content_hash() == h0);
}

TEST_CASE("backward through a shared subgraph accumulates") {
  Rng rng(15);
  Var a = mk(Tensor::randn({2, 2}, rng));
  Var shared = nn::mul_scalar(a, 2.0);
  Var loss = nn::add(nn::sum(shared), nn::sum(nn::square(shared)));
  nn::backward(loss);
  for (std::size_t i = 0; i < a->value.size(); ++i) {
    const double expected = 2.0 + 2.0 * (2.0 * a->value[i]) * 2.0;
    CHECK(a->grad[i] == doctest::Approx(expected));
  }
}
