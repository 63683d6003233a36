#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "fd_check.hpp"
#include "ftrl/nn.hpp"
#include "ftrl/ops.hpp"
#include "ftrl/rng.hpp"

using namespace ftrl;
using ftrl::testing::central_differences;
using ftrl::testing::compare_grads;

namespace {

// Builds the graph twice: once for analytic gradients, once per finite
// difference probe. `build` must return a scalar output node.
void check_gradients(std::vector<Tensor> inputs,
                     const std::function<Var(Graph&, std::vector<Var>&)>& build,
                     double rel_tol = 1e-4) {
  std::vector<double> x0;
  for (const Tensor& t : inputs) {
    for (double v : t.data()) x0.push_back(v);
  }

  auto rebuild = [&](const std::vector<double>& x, Graph& g,
                     std::vector<Var>& vars) {
    std::size_t off = 0;
    for (const Tensor& proto : inputs) {
      Tensor t = proto;
      for (double& v : t.mutable_data()) v = x[off++];
      vars.push_back(g.param(std::move(t)));
    }
    return build(g, vars);
  };

  Graph g;
  std::vector<Var> vars;
  Var out = rebuild(x0, g, vars);
  std::vector<Tensor> grads = g.grad(out, vars);
  std::vector<double> analytic;
  for (const Tensor& t : grads) {
    for (double v : t.data()) analytic.push_back(v);
  }

  auto eval = [&](const std::vector<double>& x) {
    Graph gg;
    std::vector<Var> vv;
    return rebuild(x, gg, vv).value().item();
  };
  std::vector<double> numeric = central_differences(eval, x0);

  auto report = compare_grads(analytic, numeric, rel_tol);
  INFO("grad mismatch at flat index " << report.index << ": analytic "
                                      << report.analytic << " vs numeric "
                                      << report.numeric);
  CHECK(report.ok);
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("numerics");

TEST_CASE("tensor construction rejects non-finite and bad shapes") {
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), NonFiniteError);
  CHECK_THROWS_AS(Tensor::from({2}, {1.0}), ContractViolation);
  CHECK_THROWS_AS(Tensor::zeros({0}), ContractViolation);
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 6.0);
  CHECK(t.shape_str() == "[2x3]");
}

TEST_CASE("square function gradient is 2x") {
  Graph g;
  Var x = g.param(Tensor::scalar(3.0));
  Var y = mul(x, x);
  auto grads = g.grad(y, {x});
  CHECK(grads[0].item() == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("sum of softmax is constant: gradient is zero") {
  Graph g;
  Var x = g.param(Tensor::vector({0.3, -1.2, 2.0, 0.7}));
  Var y = sum(softmax(x, 0));
  CHECK(y.value().item() == doctest::Approx(1.0).epsilon(1e-12));
  auto grads = g.grad(y, {x});
  for (double v : grads[0].data()) {
    CHECK(std::abs(v) < 1e-12);
  }
}

TEST_CASE("softmax of equal inputs splits evenly") {
  Graph g;
  Var x = g.constant(Tensor::vector({0.0, 0.0}));
  const Tensor& y = softmax(x, 0).value();
  CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y.at(1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax shift invariance") {
  Graph g;
  Var a = g.constant(Tensor::vector({1.0, 2.0, 3.0}));
  Var b = g.constant(Tensor::vector({1.0 + 17.3, 2.0 + 17.3, 3.0 + 17.3}));
  const Tensor& sa = softmax(a, 0).value();
  const Tensor& sb = softmax(b, 0).value();
  for (int i = 0; i < 3; ++i) {
    CHECK(sa.at(i) == doctest::Approx(sb.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("softmax outputs are a distribution along the axis") {
  Rng rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    Var x = g.constant(random_tensor({4, 5}, rng, -30.0, 30.0));
    for (int axis : {0, 1}) {
      const Tensor& y = softmax(x, axis).value();
      const int slices = axis == 1 ? 4 : 5;
      for (int s = 0; s < slices; ++s) {
        double total = 0.0;
        const int len = axis == 1 ? 5 : 4;
        for (int i = 0; i < len; ++i) {
          const double v = axis == 1 ? y.at(s, i) : y.at(i, s);
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("layer_norm matches direct mean/variance computation") {
  Graph g;
  Var x = g.constant(Tensor::vector({1.0, 2.0, 3.0}));
  const Tensor& y = layer_norm(x, 0, 0.0).value();
  const double r = std::sqrt(1.5);  // sqrt(3/2)
  CHECK(y.at(0) == doctest::Approx(-r).epsilon(1e-12));
  CHECK(y.at(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.at(2) == doctest::Approx(r).epsilon(1e-12));
  CHECK(y.at(2) == doctest::Approx(1.224745).epsilon(1e-6));
}

TEST_CASE("gaussian_log_prob at the mean with unit sigma") {
  Graph g;
  Var x = g.constant(Tensor::vector({0.7}));
  Var m = g.constant(Tensor::vector({0.7}));
  Var s = g.constant(Tensor::vector({0.0}));
  const double lp = gaussian_log_prob(x, m, s).value().at(0);
  CHECK(lp == doctest::Approx(-0.918939).epsilon(1e-6));
  CHECK(lp == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("finite-difference agreement for every primitive") {
  Rng rng(1234);
  for (int trial = 0; trial < 4; ++trial) {
    check_gradients({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      return sum(matmul(v[0], v[1]));
                    });
    check_gradients({random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      return sum(mul(add(v[0], v[1]), sub(v[0], v[1])));
                    });
    check_gradients({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      // row-broadcast add and mul
                      return mean(mul(add(v[0], v[1]), v[1]));
                    });
    check_gradients({random_tensor({5}, rng)},
                    [](Graph&, std::vector<Var>& v) { return sum(tanh(v[0])); });
    check_gradients({random_tensor({5}, rng, -1.0, 1.0)},
                    [](Graph&, std::vector<Var>& v) { return mean(exp(v[0])); });
    check_gradients({random_tensor({5}, rng, 0.2, 2.0)},
                    [](Graph&, std::vector<Var>& v) { return sum(log(v[0])); });
    check_gradients({random_tensor({3, 4}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      return sum(mul(softmax(v[0], 1), softmax(v[0], 0)));
                    });
    check_gradients({random_tensor({3, 4}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      Var y = layer_norm(v[0], 1, 1e-5);
                      return sum(mul(y, y));
                    });
    check_gradients({random_tensor({6}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      Var y = layer_norm(v[0], 0, 0.0);
                      return mean(tanh(y));
                    });
    check_gradients({random_tensor({3, 4}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      return sum(mul(mean_over_rows(v[0]), mean_over_rows(v[0])));
                    });
    check_gradients({random_tensor({3, 4}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      return sum(matmul(v[0], transpose(v[0])));
                    });
    check_gradients({random_tensor({4}, rng), random_tensor({4}, rng),
                     random_tensor({4}, rng, -1.0, 1.0)},
                    [](Graph&, std::vector<Var>& v) {
                      return sum(gaussian_log_prob(v[0], v[1], v[2]));
                    });
    check_gradients({random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      std::vector<Var> parts{v[0], v[1]};
                      return sum(tanh(concat_cols(parts)));
                    });
    check_gradients({random_tensor({2, 3}, rng), random_tensor({3}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      std::vector<Var> parts{v[0], v[1]};
                      Var m = concat_rows(parts);
                      return mean(matmul(m, transpose(m)));
                    });
    check_gradients({random_tensor({4}, rng)},
                    [](Graph&, std::vector<Var>& v) {
                      return mean(add_scalar(scale(v[0], -2.5), 0.75));
                    });
  }
}

TEST_CASE("two-layer network MSE gradient matches finite differences") {
  Rng rng(7);
  std::vector<Tensor> xs, ys;
  for (int i = 0; i < 4; ++i) {
    xs.push_back(random_tensor({3}, rng));
    ys.push_back(random_tensor({2}, rng));
  }
  Tensor w0 = random_tensor({3, 8}, rng, -0.5, 0.5);
  Tensor b0 = random_tensor({8}, rng, -0.1, 0.1);
  Tensor w1 = random_tensor({8, 2}, rng, -0.5, 0.5);
  Tensor b1 = random_tensor({2}, rng, -0.1, 0.1);

  check_gradients({w0, b0, w1, b1}, [&](Graph& g, std::vector<Var>& v) {
    Var loss{};
    for (std::size_t s = 0; s < xs.size(); ++s) {
      Var h = tanh(add(matmul(g.constant(xs[s]), v[0]), v[1]));
      Var out = add(matmul(h, v[2]), v[3]);
      Var d = sub(out, g.constant(ys[s]));
      Var m = mean(mul(d, d));
      loss = (s == 0) ? m : add(loss, m);
    }
    return scale(loss, 1.0 / static_cast<double>(xs.size()));
  });
}

TEST_CASE("clipped surrogate values and saturation") {
  {
    Graph g;
    Var rho = g.param(Tensor::scalar(1.5));
    Var s = clipped_surrogate(rho, 1.0, 0.2);
    CHECK(s.value().item() == doctest::Approx(1.2).epsilon(1e-15));
    auto grads = g.grad(s, {rho});
    CHECK(grads[0].item() == 0.0);  // saturated: exactly zero
  }
  {
    Graph g;
    Var rho = g.param(Tensor::scalar(0.5));
    Var s = clipped_surrogate(rho, -1.0, 0.2);
    CHECK(s.value().item() == doctest::Approx(-0.8).epsilon(1e-15));
    auto grads = g.grad(s, {rho});
    CHECK(grads[0].item() == 0.0);
  }
  {
    Graph g;
    Var rho = g.param(Tensor::scalar(1.0));
    Var s = clipped_surrogate(rho, 0.37, 0.2);
    CHECK(s.value().item() == doctest::Approx(0.37).epsilon(1e-15));
    auto grads = g.grad(s, {rho});
    CHECK(grads[0].item() == doctest::Approx(0.37).epsilon(1e-15));
  }
}

TEST_CASE("grad contract: non-scalar output rejected, disconnected is zero") {
  Graph g;
  Var x = g.param(Tensor::vector({1.0, 2.0}));
  Var y = g.param(Tensor::vector({3.0, 4.0}));
  Var out = sum(mul(x, x));
  CHECK_THROWS_AS((void)g.grad(mul(x, x), {x}), ContractViolation);
  auto grads = g.grad(out, {x, y});
  CHECK(grads[0].at(0) == doctest::Approx(2.0));
  CHECK(grads[1].shape() == y.value().shape());
  for (double v : grads[1].data()) CHECK(v == 0.0);
}

TEST_CASE("graph is reusable: grad does not mutate values") {
  Graph g;
  Var x = g.param(Tensor::vector({0.5, -1.5}));
  Var out = mean(exp(x));
  const Tensor before = out.value();
  auto g1 = g.grad(out, {x});
  auto g2 = g.grad(out, {x});
  CHECK(bit_equal(g1[0], g2[0]));
  CHECK(bit_equal(before, out.value()));
}

TEST_CASE("identical runs are bit-identical") {
  auto run = [] {
    Rng rng(2024);
    ParameterStore store;
    Mlp net(store, "m", {4, 16, 3}, rng);
    Graph g;
    GraphContext ctx(g);
    Tensor input = Tensor::vector({0.1, -0.2, 0.3, 0.9});
    Var out = net.forward(ctx, g.constant(input));
    Var loss = mean(mul(out, out));
    auto grads = ctx.gradients(loss);
    std::vector<Tensor> flat;
    flat.push_back(loss.value());
    for (auto& [p, t] : grads) flat.push_back(t);
    return flat;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bit_equal(a[i], b[i]));
  }
}

TEST_CASE("shape mismatches report both shapes") {
  Graph g;
  Var a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Var b = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  try {
    (void)add(a, b);
    FAIL("expected ContractViolation");
  } catch (const ContractViolation& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
  CHECK_THROWS_AS((void)matmul(a, b), ContractViolation);
}

TEST_CASE("non-finite results fail fast when checks are on") {
  Graph g;
  Var x = g.constant(Tensor::vector({-1.0}));
  CHECK_THROWS_AS((void)log(x), NonFiniteError);
  set_finite_checks(false);
  CHECK_NOTHROW((void)exp(g.constant(Tensor::vector({1000.0}))));
  set_finite_checks(true);
  CHECK_THROWS_AS((void)exp(g.constant(Tensor::vector({1000.0}))), NonFiniteError);
}

TEST_CASE("adam skips frozen parameters") {
  ParameterStore store;
  Parameter& w = store.add("w", Tensor::vector({1.0, 2.0}));
  Parameter& f = store.add("f", Tensor::vector({3.0, 4.0}));
  f.frozen = true;
  const Tensor f_before = f.value;
  Adam opt(AdamConfig{.lr = 0.1});
  std::vector<std::pair<Parameter*, Tensor>> grads{
      {&w, Tensor::vector({1.0, 1.0})}, {&f, Tensor::vector({1.0, 1.0})}};
  opt.step(grads);
  CHECK(bit_equal(f.value, f_before));
  CHECK(w.value.at(0) < 1.0);
}

TEST_CASE("global norm clip rescales to the bound") {
  ParameterStore store;
  Parameter& w = store.add("w", Tensor::vector({0.0, 0.0}));
  std::vector<std::pair<Parameter*, Tensor>> grads{
      {&w, Tensor::vector({3.0, 4.0})}};
  const double norm = clip_global_norm(grads, 0.5);
  CHECK(norm == doctest::Approx(5.0));
  double sq = 0.0;
  for (double v : grads[0].second.data()) sq += v * v;
  CHECK(std::sqrt(sq) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_SUITE_END();
