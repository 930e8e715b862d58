#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <vector>

#include "oracles.hpp"
#include "pointfuse/layers.hpp"
#include "pointfuse/random.hpp"
#include "pointfuse/tensor.hpp"

using namespace pointfuse;
using nn::Tensor;
using oracles::check_input_gradients;
using oracles::random_tensor;

namespace {

// Weighting by a fixed constant turns an op output into a scalar with a
// nontrivial cotangent at every element.
Tensor wsum(const Tensor& t, const Tensor& w) { return nn::sum(nn::mul(t, w)); }

}  // namespace

TEST_CASE("elementwise op values") {
  const Tensor a = Tensor::from_data({2, 2}, {1.0, -2.0, 3.0, 0.5});
  const Tensor b = Tensor::from_data({2, 2}, {0.5, 4.0, -1.0, 2.0});
  CHECK(nn::add(a, b).data() == std::vector<double>{1.5, 2.0, 2.0, 2.5});
  CHECK(nn::sub(a, b).data() == std::vector<double>{0.5, -6.0, 4.0, -1.5});
  CHECK(nn::mul(a, b).data() == std::vector<double>{0.5, -8.0, -3.0, 1.0});
  CHECK(nn::scale(a, -2.0).data() == std::vector<double>{-2.0, 4.0, -6.0, -1.0});
  CHECK(nn::relu(a).data() == std::vector<double>{1.0, 0.0, 3.0, 0.5});
  CHECK(nn::exp(Tensor::from_data({2}, {0.0, 1.0})).data() ==
        std::vector<double>{1.0, std::exp(1.0)});
  CHECK(nn::sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(nn::sigmoid_value(0.0) == 0.5);
  CHECK_THROWS_AS(nn::add(a, Tensor::from_data({4}, {1, 2, 3, 4})), std::invalid_argument);
}

TEST_CASE("linear layer computes x*W^T + b") {
  const Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor w = Tensor::from_data({2, 3}, {1, 0, -1, 0.5, 0.5, 0.5});
  const Tensor b = Tensor::from_data({2}, {10, -10});
  const Tensor y = nn::linear(x, w, b);
  REQUIRE(y.shape() == nn::Shape{2, 2});
  CHECK(y.at(0, 0) == doctest::Approx(1 * 1 + 2 * 0 + 3 * -1 + 10));
  CHECK(y.at(0, 1) == doctest::Approx(0.5 * (1 + 2 + 3) - 10));
  CHECK(y.at(1, 0) == doctest::Approx(4 - 6 + 10));
  CHECK(y.at(1, 1) == doctest::Approx(0.5 * (4 + 5 + 6) - 10));
}

TEST_CASE("pool, concat, slice, gather values") {
  const Tensor x = Tensor::from_data({2, 3}, {1, 5, 3, 4, 2, 6});
  CHECK(nn::pool(x, nn::PoolMode::kMax, 0).data() == std::vector<double>{4, 5, 6});
  CHECK(nn::pool(x, nn::PoolMode::kMax, 1).data() == std::vector<double>{5, 6});
  CHECK(nn::pool(x, nn::PoolMode::kAvg, 0).data() == std::vector<double>{2.5, 3.5, 4.5});
  CHECK(nn::pool(x, nn::PoolMode::kAvg, 1).data() == std::vector<double>{3.0, 4.0});

  const Tensor y = Tensor::from_data({1, 3}, {7, 8, 9});
  CHECK(nn::concat({x, y}, 0).data() == std::vector<double>{1, 5, 3, 4, 2, 6, 7, 8, 9});
  const Tensor z = Tensor::from_data({2, 1}, {-1, -2});
  CHECK(nn::concat({x, z}, 1).data() == std::vector<double>{1, 5, 3, -1, 4, 2, 6, -2});

  CHECK(nn::slice(x, 1, 1, 2).data() == std::vector<double>{5, 3, 2, 6});
  CHECK(nn::slice(x, 0, 1, 1).data() == std::vector<double>{4, 2, 6});
  CHECK(nn::gather_rows(x, {1, 0, 1}).data() == std::vector<double>{4, 2, 6, 1, 5, 3, 4, 2, 6});
}

TEST_CASE("group pool reduces per group with zeros for empty groups") {
  const Tensor x = Tensor::from_data({3, 2}, {1, 10, 3, 30, 2, 20});
  const std::vector<std::vector<int>> groups = {{0, 2}, {}, {1}};
  const Tensor mx = nn::group_pool(x, groups, nn::PoolMode::kMax);
  CHECK(mx.data() == std::vector<double>{2, 20, 0, 0, 3, 30});
  const Tensor av = nn::group_pool(x, groups, nn::PoolMode::kAvg);
  CHECK(av.data() == std::vector<double>{1.5, 15, 0, 0, 3, 30});
}

TEST_CASE("scatter rows places blocks and rejects overlap") {
  const Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  const Tensor out = nn::scatter_rows(x, {{1, 0}, {0, 2}}, 2, 4);
  CHECK(out.data() == std::vector<double>{0, 0, 3, 4, 1, 2, 0, 0});
  CHECK_THROWS_AS(nn::scatter_rows(x, {{0, 0}, {0, 1}}, 1, 4), std::invalid_argument);
}

TEST_CASE("loss op values") {
  // quadratic branch: e = 0.5, delta = 1 -> 0.5*0.25; linear: e = 3 -> 2.5
  const Tensor p = Tensor::from_data({2}, {0.5, 3.0});
  const Tensor t = Tensor::from_data({2}, {0.0, 0.0});
  CHECK(nn::smooth_l1_loss(p, t, 1.0).item() == doctest::Approx((0.125 + 2.5) / 2.0));
  // the two branch formulas agree at |e| = delta
  const Tensor edge = Tensor::from_data({1}, {2.0});
  const Tensor zero = Tensor::from_data({1}, {0.0});
  CHECK(nn::smooth_l1_loss(edge, zero, 2.0).item() == doctest::Approx(1.0));

  // bce on logits stays finite and exact far into saturation
  const Tensor big = Tensor::from_data({2}, {1000.0, -1000.0});
  const Tensor labels = Tensor::from_data({2}, {1.0, 0.0});
  CHECK(nn::bce_with_logits(big, labels).item() == doctest::Approx(0.0).epsilon(1e-12));
  const Tensor wrong = Tensor::from_data({1}, {-1000.0});
  const Tensor one = Tensor::from_data({1}, {1.0});
  CHECK(nn::bce_with_logits(wrong, one).item() == doctest::Approx(1000.0));
  CHECK(nn::bce_with_logits(Tensor::from_data({1}, {0.0}), one).item() ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("finite differences confirm every op gradient") {
  Rng rng(71);
  auto run = [&](const char* name, const std::function<Tensor()>& loss,
                 const std::vector<Tensor>& inputs) {
    INFO(name);
    const auto s = check_input_gradients(loss, inputs);
    CHECK(s.failures == 0);
    CHECK(s.checked > 0);
  };

  for (int rep = 0; rep < 3; ++rep) {
    {
      const Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4});
      const Tensor w = random_tensor(rng, {3, 4}, 1.0, false);
      run("add", [&] { return wsum(nn::add(a, b), w); }, {a, b});
    }
    {
      const Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4});
      const Tensor w = random_tensor(rng, {3, 4}, 1.0, false);
      run("sub_mul_scale",
          [&] { return wsum(nn::scale(nn::mul(nn::sub(a, b), a), 1.7), w); }, {a, b});
    }
    {
      const Tensor x = random_tensor(rng, {4, 3}), w = random_tensor(rng, {2, 3}),
                   b = random_tensor(rng, {2});
      const Tensor cw = random_tensor(rng, {4, 2}, 1.0, false);
      run("linear", [&] { return wsum(nn::linear(x, w, b), cw); }, {x, w, b});
    }
    {
      const Tensor x = random_tensor(rng, {3, 5});
      const Tensor w = random_tensor(rng, {3, 5}, 1.0, false);
      run("relu", [&] { return wsum(nn::relu(x), w); }, {x});
    }
    {
      const Tensor x = random_tensor(rng, {3, 3});
      const Tensor w = random_tensor(rng, {3, 3}, 1.0, false);
      run("sigmoid_exp", [&] { return wsum(nn::exp(nn::sigmoid(x)), w); }, {x});
    }
    {
      const Tensor a = random_tensor(rng, {2, 3}), b = random_tensor(rng, {1, 3}),
                   c = random_tensor(rng, {3, 2});
      const Tensor w = random_tensor(rng, {3, 3}, 1.0, false);
      run("concat_slice",
          [&] {
            const Tensor rows = nn::concat({a, b}, 0);     // 3 x 3
            const Tensor wide = nn::concat({rows, c}, 1);  // 3 x 5
            return wsum(nn::slice(wide, 1, 1, 3), w);
          },
          {a, b, c});
    }
    {
      const Tensor x = random_tensor(rng, {4, 3});
      const Tensor w1 = random_tensor(rng, {3}, 1.0, false);
      const Tensor w2 = random_tensor(rng, {4}, 1.0, false);
      run("pool_max_avg",
          [&] {
            return nn::add(wsum(nn::pool(x, nn::PoolMode::kMax, 0), w1),
                           wsum(nn::pool(x, nn::PoolMode::kAvg, 1), w2));
          },
          {x});
    }
    {
      const Tensor x = random_tensor(rng, {4, 3});
      const Tensor w = random_tensor(rng, {4, 3}, 1.0, false);
      run("gather_rows", [&] { return wsum(nn::gather_rows(x, {2, 0, 2, 3}), w); }, {x});
    }
    {
      const Tensor x = random_tensor(rng, {5, 3});
      const std::vector<std::vector<int>> groups = {{0, 1, 4}, {}, {2}, {3, 3}};
      const Tensor w1 = random_tensor(rng, {4, 3}, 1.0, false);
      const Tensor w2 = random_tensor(rng, {4, 3}, 1.0, false);
      run("group_pool",
          [&] {
            return nn::add(wsum(nn::group_pool(x, groups, nn::PoolMode::kMax), w1),
                           wsum(nn::group_pool(x, groups, nn::PoolMode::kAvg), w2));
          },
          {x});
    }
    {
      const Tensor x = random_tensor(rng, {2, 3});
      const Tensor w = random_tensor(rng, {3, 6}, 1.0, false);
      run("scatter_rows",
          [&] { return wsum(nn::scatter_rows(x, {{2, 3}, {0, 0}}, 3, 6), w); }, {x});
    }
    {
      const Tensor x = random_tensor(rng, {3, 2});
      run("sum_mean", [&] { return nn::add(nn::sum(x), nn::scale(nn::mean(x), 0.3)); }, {x});
    }
    {
      const Tensor p = random_tensor(rng, {3, 2}, 2.0);
      const Tensor t = random_tensor(rng, {3, 2}, 2.0, false);
      run("smooth_l1", [&] { return nn::smooth_l1_loss(p, t, 1.0); }, {p});
    }
    {
      const Tensor logits = random_tensor(rng, {4, 1}, 3.0);
      std::vector<double> lab(4);
      for (auto& v : lab) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
      const Tensor labels = Tensor::from_data({4, 1}, std::move(lab));
      run("bce", [&] { return nn::bce_with_logits(logits, labels); }, {logits});
    }
  }
}

TEST_CASE("gathering a row twice doubles its gradient") {
  const Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  nn::backward(nn::sum(nn::gather_rows(x, {0, 0, 1})));
  CHECK(x.grad_at(0) == 2.0);
  CHECK(x.grad_at(1) == 2.0);
  CHECK(x.grad_at(2) == 1.0);
  CHECK(x.grad_at(3) == 1.0);
}

TEST_CASE("backward guards") {
  const Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  const Tensor loss = nn::sum(x);
  nn::backward(loss);
  CHECK_THROWS_AS(nn::backward(loss), std::runtime_error);
  CHECK_THROWS_AS(nn::backward(x), std::invalid_argument);  // non-scalar root
}

TEST_CASE("untouched parameters read zero gradient") {
  const Tensor used = Tensor::from_data({2}, {1.0, 2.0}, true);
  const Tensor unused = Tensor::from_data({2}, {3.0, 4.0}, true);
  nn::backward(nn::sum(used));
  CHECK(used.has_grad());
  CHECK(!unused.has_grad());
  CHECK(unused.grad_at(0) == 0.0);
  CHECK(unused.grad_at(1) == 0.0);
  CHECK_THROWS_AS(unused.grad(), std::runtime_error);
}

TEST_CASE("mlp is a relu sandwich with a linear last layer") {
  Rng rng(72);
  nn::ParamStore store;
  const nn::Mlp mlp(store, "m", {3, 4, 2}, rng);
  const Tensor x = random_tensor(rng, {5, 3}, 2.0, false);
  const Tensor manual = nn::linear(
      nn::relu(nn::linear(x, store.find("m.0.w"), store.find("m.0.b"))), store.find("m.1.w"),
      store.find("m.1.b"));
  const Tensor out = mlp.forward(x);
  REQUIRE(out.shape() == manual.shape());
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == manual.data()[i]);
  CHECK(mlp.in_width() == 3);
  CHECK(mlp.out_width() == 2);

  // a single layer stays purely affine: negative outputs survive
  nn::ParamStore store1;
  const nn::Mlp affine(store1, "a", {3, 2}, rng);
  const Tensor y = affine.forward(x);
  const Tensor lin = nn::linear(x, store1.find("a.0.w"), store1.find("a.0.b"));
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == lin.data()[i]);
}

TEST_CASE("param store registry and optimizer steps") {
  Rng rng(73);
  nn::ParamStore store;
  const Tensor a = store.add_param("a", {2, 2}, {1, 2, 3, 4});
  store.make_uniform("b", {3}, 0.5, rng);
  CHECK(store.parameter_count() == 7);
  CHECK_THROWS_AS(store.add_param("a", {1}, {0.0}), std::invalid_argument);
  CHECK_THROWS_AS(store.find("missing"), std::out_of_range);
  for (double v : store.find("b").data()) {
    CHECK(v >= -0.5);
    CHECK(v <= 0.5);
  }

  nn::backward(nn::sum(nn::mul(a, a)));  // d/da = 2a
  store.sgd_step(0.25);
  CHECK(a.data() == std::vector<double>{0.5, 1.0, 1.5, 2.0});
  store.zero_grad();
  CHECK(!a.has_grad());

  // adam first step moves every touched weight by about lr
  const std::vector<double> before = a.data();
  nn::backward(nn::sum(a));
  store.adam_step(0.1);
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(a.data()[i] == doctest::Approx(before[i] - 0.1).epsilon(1e-6));
}

TEST_CASE("param store checkpoint round trip") {
  Rng rng(74);
  nn::ParamStore store;
  store.make_uniform("w", {3, 2}, 1.0, rng);
  store.make_uniform("b", {2}, 1.0, rng);
  const std::vector<double> w = store.find("w").data();
  const std::string path = "tmp_params.bin";
  store.save(path);
  for (auto& v : store.find("w").data()) v = 0.0;
  store.load(path);
  CHECK(store.find("w").data() == w);

  nn::ParamStore other;
  other.make_uniform("w", {2, 2}, 1.0, rng);  // wrong shape
  CHECK_THROWS_AS(other.load(path), std::runtime_error);
  std::remove(path.c_str());
}
