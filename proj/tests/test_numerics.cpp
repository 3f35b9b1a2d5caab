#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "abpp/adam.hpp"
#include "abpp/conv_ops.hpp"
#include "abpp/gradcheck.hpp"
#include "abpp/nn.hpp"
#include "abpp/ops.hpp"

using namespace abpp;

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor::zeros({3, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::leaf({2, 2}, VecX<double>::Zero(3)), std::invalid_argument);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(t.item(), std::invalid_argument);
}

TEST_CASE("shape mismatch diagnostics name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 4});
  try {
    add(a, b);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[2, 4]") != std::string::npos);
  }
}

TEST_CASE("sigmoid at zero is exactly one half") {
  Tensor x = Tensor::scalar(0.0);
  CHECK(sigmoid(x).item() == 0.5);
}

TEST_CASE("masked softmax puts exactly zero on the masked position") {
  VecX<double> v(3);
  v << 0.0, mask_sentinel<double>(), 0.0;
  Tensor x = Tensor::leaf({1, 3}, v);
  Tensor p = softmax_rows(x);
  CHECK(p.value()[0] == 0.5);
  CHECK(p.value()[1] == 0.0);  // bitwise zero, not merely small
  CHECK(p.value()[2] == 0.5);
}

TEST_CASE("softmax rejects a fully masked row") {
  VecX<double> v = VecX<double>::Constant(4, mask_sentinel<double>());
  Tensor x = Tensor::leaf({1, 4}, v);
  CHECK_THROWS_AS(softmax_rows(x), std::invalid_argument);
}

TEST_CASE("cross entropy of uniform logits is ln(c)") {
  for (Index c : {2, 5, 38}) {
    Tensor x = Tensor::zeros({3, c});
    Tensor l = cross_entropy(x, std::vector<int>(3, 1));
    CHECK(l.item() == doctest::Approx(std::log(double(c))).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy of a certain prediction is zero") {
  VecX<double> v(4);
  v << 80.0, -80.0, -80.0, -80.0;
  Tensor x = Tensor::leaf({1, 4}, v);
  CHECK(cross_entropy(x, {0}).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross entropy input validation") {
  Tensor x = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(cross_entropy(x, {0, 5}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(x, {0}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(x, {0, 1}, {1, 1}), std::invalid_argument);
}

TEST_CASE("layer_norm maps [1,3] to [-1,1]") {
  VecX<double> v(2);
  v << 1.0, 3.0;
  Tensor x = Tensor::leaf({1, 2}, v);
  Tensor gain = Tensor::full({2}, 1.0);
  Tensor bias = Tensor::zeros({2});
  Tensor y = layer_norm(x, gain, bias);
  CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("positional encoding first row is (0, 1, 0, 1, ...)") {
  Tensor pe = positional_encoding(4, 6);
  CHECK(pe.mat()(0, 0) == 0.0);
  CHECK(pe.mat()(0, 1) == 1.0);
  CHECK(pe.mat()(0, 4) == 0.0);
  CHECK(pe.mat()(0, 5) == 1.0);
  CHECK_THROWS_AS(positional_encoding(3, 5), std::invalid_argument);
}

TEST_CASE("backward is rejected on a non-scalar and on a consumed record") {
  Tensor x = Tensor::uniform({2, 2}, *[] { static Rng r(7); return &r; }(), -1, 1, true);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
  Tensor loss = sum_all(y);
  backward(loss);
  CHECK_THROWS_AS(backward(loss), std::logic_error);
}

TEST_CASE("stop_gradient blocks exactly") {
  Rng rng(11);
  Tensor x = Tensor::uniform({3, 3}, rng, -1, 1, true);
  Tensor w = Tensor::uniform({3, 3}, rng, -1, 1, true);
  Tensor loss = sum_all(mul(stop_gradient(x), w));
  backward(loss);
  CHECK(x.grad().cwiseAbs().maxCoeff() == 0.0);
  CHECK((w.grad() - x.value()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("gradients accumulate across records until cleared") {
  Rng rng(3);
  Tensor x = Tensor::uniform({4}, rng, -1, 1, true);
  backward(sum_all(mul(x, x)));
  VecX<double> g1 = x.grad();
  backward(sum_all(mul(x, x)));
  CHECK((x.grad() - 2.0 * g1).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  x.zero_grad();
  CHECK(x.grad().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("no-grad mode records nothing") {
  Rng rng(5);
  Tensor x = Tensor::uniform({2, 2}, rng, -1, 1, true);
  NoGradGuard off;
  Tensor y = sum_all(mul(x, x));
  CHECK_FALSE(y.tracked());
}

TEST_CASE("finite-difference oracle suite passes at tight tolerances") {
  auto cases = run_gradcheck_suite(20260817, 3);
  for (const auto& c : cases) {
    INFO(c.name, " err=", c.max_rel_err, " tol=", c.tolerance);
    CHECK(c.pass);
  }
  CHECK(cases.size() >= 25);
}

TEST_CASE("the oracle flags an injected sign error in a backward rule") {
  // A layer_norm clone whose input gradient has the sign of the variance
  // term flipped; the checker must report a large relative error.
  auto broken_layer_norm = [](Tensor x) {
    const Index r = x.rows(), c = x.cols();
    VecX<double> v(x.numel());
    auto xhat = std::make_shared<MatX<double>>(r, c);
    auto istd = std::make_shared<VecX<double>>(r);
    MatMap<double> out(v.data(), r, c);
    for (Index i = 0; i < r; ++i) {
      const double mu = x.mat().row(i).mean();
      const double var = (x.mat().row(i).array() - mu).square().sum() / double(c);
      (*istd)[i] = 1.0 / std::sqrt(var + 1e-5);
      xhat->row(i) = ((x.mat().row(i).array() - mu) * (*istd)[i]).matrix();
      out.row(i) = xhat->row(i);
    }
    return make_op<double>(
        x.shape(), std::move(v), {x}, [x, xhat, istd, r, c](const VecX<double>& g) mutable {
          ConstMatMap<double> gm(g.data(), r, c);
          MatMap<double> gx = x.grad_accum();
          for (Index i = 0; i < r; ++i) {
            const double mean_g = gm.row(i).mean();
            const double mean_gx = (gm.row(i).array() * xhat->row(i).array()).mean();
            // sign error: "+ xhat * mean_gx" should be "-"
            gx.row(i) += ((gm.row(i).array() - mean_g + xhat->row(i).array() * mean_gx) *
                          (*istd)[i])
                             .matrix();
          }
        });
  };
  Rng rng(99);
  Tensor x = Tensor::uniform({3, 5}, rng, -1, 1, true);
  const double err = finite_diff_check([&] { return sum_all(gelu(broken_layer_norm(x))); }, x);
  CHECK(err > 1e-3);
}

TEST_CASE("adam drives a 1-D quadratic near zero in 200 steps") {
  Params params;
  params.push_back({"w", Tensor::scalar(1.0)});
  params[0].second.node().requires_grad = true;
  params[0].second.node().tracked = true;
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam opt(params, cfg);
  for (int i = 0; i < 200; ++i) {
    zero_grad(params);
    Tensor w = params[0].second;
    Tensor loss = mul(w, w);
    backward(sum_all(loss));
    opt.step(params);
  }
  CHECK(std::abs(params[0].second.item()) < 1e-2);
}

TEST_CASE("adam matches an independent scalar recurrence") {
  // Drive the optimizer with a fixed gradient sequence and replay the
  // textbook update rule by hand.
  const std::vector<double> grads = {0.3, -1.2, 0.05, 2.0, -0.7, 0.0, 0.9};
  AdamConfig cfg;
  cfg.lr = 0.01;
  Params params;
  params.push_back({"w", Tensor::scalar(0.4)});
  Adam opt(params, cfg);

  double w = 0.4, m = 0.0, v = 0.0;
  for (size_t t = 0; t < grads.size(); ++t) {
    params[0].second.zero_grad();
    params[0].second.grad_accum_vec()[0] = grads[t];
    opt.step(params);

    m = cfg.beta1 * m + (1 - cfg.beta1) * grads[t];
    v = cfg.beta2 * v + (1 - cfg.beta2) * grads[t] * grads[t];
    const double mhat = m / (1 - std::pow(cfg.beta1, double(t + 1)));
    const double vhat = v / (1 - std::pow(cfg.beta2, double(t + 1)));
    w -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    CHECK(params[0].second.item() == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("adam first step magnitude is about lr for any gradient scale") {
  for (double scale : {1e-3, 1.0, 1e3}) {
    Params params;
    params.push_back({"w", Tensor::scalar(5.0)});
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam opt(params, cfg);
    params[0].second.grad_accum_vec()[0] = scale;
    opt.step(params);
    CHECK(std::abs(params[0].second.item() - 5.0) ==
          doctest::Approx(cfg.lr).epsilon(1e-3));
  }
}

TEST_CASE("adam with zero gradients from a fresh state is a no-op") {
  Params params;
  params.push_back({"w", Tensor::scalar(2.5)});
  Adam opt(params, {});
  opt.step(params);  // grad buffer never touched -> zeros
  CHECK(params[0].second.item() == 2.5);
}

TEST_CASE("adam names the parameter carrying a NaN gradient") {
  Params params;
  params.push_back({"good", Tensor::scalar(1.0)});
  params.push_back({"vision/backbone/w", Tensor::scalar(1.0)});
  Adam opt(params, {});
  params[1].second.grad_accum_vec()[0] = std::nan("");
  try {
    opt.step(params);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("vision/backbone/w") != std::string::npos);
  }
}

TEST_CASE("ops keep finite data finite") {
  Rng rng(21);
  Tensor a = Tensor::uniform({6, 6}, rng, -50, 50, true);
  for (Tensor t : {sigmoid(a), gelu(a), softmax_rows(a), relu(a)})
    CHECK(t.value().allFinite());
}

TEST_CASE("scalar-templated core instantiates for float") {
  TensorT<float> x = TensorT<float>::scalar(0.0f);
  CHECK(sigmoid(x).item() == 0.5f);
  VecX<float> v(2);
  v << 0.0f, mask_sentinel<float>();
  TensorT<float> row = TensorT<float>::leaf({1, 2}, v);
  auto p = softmax_rows(row);
  CHECK(p.value()[0] == 1.0f);
  CHECK(p.value()[1] == 0.0f);
}
