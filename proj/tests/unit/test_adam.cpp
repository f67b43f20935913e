#include <catch2/catch_amalgamated.hpp>

#include "icevit/adam.hpp"
#include "icevit/common.hpp"

using Catch::Approx;
using icevit::AdamConfig;
using icevit::AdamState;
using icevit::Rng;
using icevit::Tensor;

TEST_CASE("zero gradient leaves fresh parameters unchanged", "[adam]") {
  Rng rng(3);
  std::vector<Tensor> params{icevit::random_tensor({3, 3}, rng), icevit::random_tensor({5}, rng)};
  const auto before = params;
  std::vector<Tensor> grads{Tensor::zeros({3, 3}), Tensor::zeros({5})};
  AdamState state = AdamState::init(params);
  adam_step(params, grads, state);
  REQUIRE(state.t == 1);
  REQUIRE(params[0].data == before[0].data);
  REQUIRE(params[1].data == before[1].data);
}

TEST_CASE("first step moves each element by about lr in the gradient's sign", "[adam]") {
  AdamConfig cfg;
  cfg.lr = 3e-4f;
  Rng rng(9);
  Tensor p = icevit::random_tensor({4, 4}, rng);
  Tensor g = icevit::random_tensor({4, 4}, rng);
  for (auto& v : g.data)
    if (std::abs(v) < 0.05f) v = 0.05f;  // keep eps negligible next to |g|
  std::vector<Tensor> params{p}, grads{g};
  AdamState state = AdamState::init(params, cfg);
  adam_step(params, grads, state);
  for (size_t i = 0; i < p.data.size(); ++i) {
    const double delta = static_cast<double>(params[0].data[i]) - p.data[i];
    const double expect = -cfg.lr * (g.data[i] > 0 ? 1.0 : -1.0);
    REQUIRE(delta == Approx(expect).margin(cfg.lr * 1e-3));
  }
}

TEST_CASE("identical state and gradients give bitwise identical updates", "[adam]") {
  Rng rng(21);
  Tensor p0 = icevit::random_tensor({6, 2}, rng);
  Tensor g0 = icevit::random_tensor({6, 2}, rng);

  auto run = [&]() {
    std::vector<Tensor> params{p0}, grads{g0};
    AdamState st = AdamState::init(params);
    for (int i = 0; i < 10; ++i) adam_step(params, grads, st);
    return params[0].data;
  };
  REQUIRE(run() == run());
}

TEST_CASE("moment estimates track the configured decay rates", "[adam]") {
  AdamConfig cfg;
  std::vector<Tensor> params{Tensor::zeros({1})};
  std::vector<Tensor> grads{Tensor({1}, {2.0f})};
  AdamState st = AdamState::init(params, cfg);
  adam_step(params, grads, st);
  REQUIRE(st.m[0].data[0] == Approx((1.0 - cfg.beta1) * 2.0).margin(1e-7));
  REQUIRE(st.v[0].data[0] == Approx((1.0 - cfg.beta2) * 4.0).margin(1e-7));
  adam_step(params, grads, st);
  REQUIRE(st.t == 2);
  REQUIRE(st.m[0].data[0] ==
          Approx(cfg.beta1 * (1.0 - cfg.beta1) * 2.0 + (1.0 - cfg.beta1) * 2.0).margin(1e-6));
}

TEST_CASE("shape mismatches are rejected", "[adam]") {
  std::vector<Tensor> params{Tensor::zeros({2, 2})};
  AdamState st = AdamState::init(params);
  std::vector<Tensor> bad_grads{Tensor::zeros({2, 3})};
  REQUIRE_THROWS_AS(adam_step(params, bad_grads, st), icevit::ShapeError);
  std::vector<Tensor> too_many{Tensor::zeros({2, 2}), Tensor::zeros({1})};
  REQUIRE_THROWS_AS(adam_step(params, too_many, st), icevit::ShapeError);
}
