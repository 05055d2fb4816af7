#include <cmath>
#include <vector>

#include "bifrl/net.hpp"
#include "bifrl/rng.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bifrl;

TEST_CASE("zero-weight network outputs its bias head") {
  Mlp net(3, {8, 8}, 4);  // head dim 2
  // params already zero
  GaussianHead h = gaussian_forward(net, {0.3, -0.5, 2.0});
  CHECK(h.mean[0] == 0.0);
  CHECK(h.mean[1] == 0.0);
  CHECK(h.log_var[0] == doctest::Approx(clamp_logvar(0.0)));
  CHECK(h.log_var[1] == doctest::Approx(clamp_logvar(0.0)));
}

TEST_CASE("forward is deterministic") {
  Rng rng = Rng::seeded(42);
  Mlp net(3, {16}, 6);
  net.init(rng);
  const std::vector<double> x = {0.1, -2.0, 0.7};
  GaussianHead a = gaussian_forward(net, x);
  GaussianHead b = gaussian_forward(net, x);
  CHECK(a.mean == b.mean);
  CHECK(a.log_var == b.log_var);
}

TEST_CASE("one-layer linear net computes Wx + b by hand") {
  // 2x2 instance: W = [[1,2],[3,4]], b = [0.5, -1], x = [2, -1]
  // mean = Wx + b = [1*2+2*(-1)+0.5, 3*2+4*(-1)-1] = [0.5, 1.0]
  Mlp net(2, {}, 2);
  net.params = {1, 2, 3, 4, 0.5, -1};
  MlpCache c;
  const std::vector<double> x = {2, -1};
  const double* y = net.forward(x.data(), 1, c);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(1.0));
}

TEST_CASE("input width mismatch is a configuration error") {
  Mlp net(3, {4}, 2);
  CHECK_THROWS_AS((void)gaussian_forward(net, {1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("gaussian nll frozen values") {
  SUBCASE("mean equals target with unit covariance gives zero") {
    GaussianHead h;
    h.mean = {0.7, -1.2};
    h.log_var = {0.0, 0.0};
    CHECK(gaussian_nll(h, {0.7, -1.2}) == doctest::Approx(0.0));
  }
  SUBCASE("hand-evaluated quadratic form") {
    // mean=[1,0], target=[0,0], Sigma=diag(0.5,2):
    // (1-0)^2/0.5 + 0 + ln 0.5 + ln 2 = 2.0
    GaussianHead h;
    h.mean = {1.0, 0.0};
    h.log_var = {std::log(0.5), std::log(2.0)};
    CHECK(gaussian_nll(h, {0.0, 0.0}) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("symmetric in mean and target for fixed covariance") {
    Rng rng = Rng::seeded(9);
    for (int it = 0; it < 20; ++it) {
      GaussianHead h;
      for (int i = 0; i < 3; ++i) {
        h.mean.push_back(rng.uniform(-2, 2));
        h.log_var.push_back(rng.uniform(-2, 0.4));
      }
      std::vector<double> t = {rng.uniform(-2, 2), rng.uniform(-2, 2),
                               rng.uniform(-2, 2)};
      GaussianHead swapped;
      swapped.mean = t;
      swapped.log_var = h.log_var;
      std::vector<double> tm = h.mean;
      CHECK(gaussian_nll(h, t) ==
            doctest::Approx(gaussian_nll(swapped, tm)).epsilon(1e-12));
    }
  }
  SUBCASE("minimized over mean at mean = target") {
    GaussianHead h;
    h.mean = {0.3, 0.3};
    h.log_var = {-1.0, 0.2};
    const std::vector<double> t = {0.3, 0.3};
    const double at_min = gaussian_nll(h, t);
    for (double d : {-0.1, 0.05, 0.2}) {
      GaussianHead h2 = h;
      h2.mean[0] += d;
      CHECK(gaussian_nll(h2, t) > at_min);
    }
  }
  SUBCASE("dimension mismatch throws") {
    GaussianHead h;
    h.mean = {0.0};
    h.log_var = {0.0};
    CHECK_THROWS_AS((void)gaussian_nll(h, {0.0, 1.0}), std::invalid_argument);
  }
}

TEST_CASE("backward matches central finite differences on random nets") {
  Rng rng = Rng::seeded(1234);
  for (int inst = 0; inst < 20; ++inst) {
    const int in = 1 + rng.uniform_int(4);
    const int d = 1 + rng.uniform_int(3);
    Mlp net(in, {5, 4}, 2 * d);
    net.init(rng);
    const int batch = 1 + rng.uniform_int(4);
    std::vector<double> X(static_cast<size_t>(batch) * in);
    std::vector<double> T(static_cast<size_t>(batch) * d);
    for (auto& v : X) v = rng.uniform(-1.5, 1.5);
    for (auto& v : T) v = rng.uniform(-1.5, 1.5);

    // loss: mean gaussian NLL over the batch
    auto loss_at = [&](const std::vector<double>& p) {
      Mlp tmp = net;
      tmp.params = p;
      MlpCache c;
      const double* Y = tmp.forward(X.data(), batch, c);
      HeadBatch hb = make_head_batch(Y, batch, d);
      double L = 0.0;
      for (int r = 0; r < batch; ++r)
        L += gaussian_nll(hb.mean_row(r), hb.lv_row(r),
                          T.data() + static_cast<size_t>(r) * d, d);
      return L / batch;
    };

    // analytic gradient
    MlpCache c;
    const double* Y = net.forward(X.data(), batch, c);
    HeadBatch hb = make_head_batch(Y, batch, d);
    std::vector<double> dmean(static_cast<size_t>(batch) * d);
    std::vector<double> dlv(static_cast<size_t>(batch) * d);
    for (int r = 0; r < batch; ++r) {
      gaussian_nll_grad(hb.mean_row(r), hb.lv_row(r),
                        T.data() + static_cast<size_t>(r) * d, d,
                        dmean.data() + static_cast<size_t>(r) * d,
                        dlv.data() + static_cast<size_t>(r) * d);
      for (int i = 0; i < d; ++i) {
        dmean[static_cast<size_t>(r) * d + i] /= batch;
        dlv[static_cast<size_t>(r) * d + i] /= batch;
      }
    }
    std::vector<double> dY(static_cast<size_t>(batch) * 2 * d);
    head_grads_to_raw(hb, dmean.data(), dlv.data(), dY.data());
    std::vector<double> grad(net.layout.n_params, 0.0);
    net.backward(c, dY.data(), grad.data(), nullptr);

    auto fd = testsup::finite_diff_grad(loss_at, net.params);
    CHECK(testsup::max_rel_err(grad, fd) < 1e-4);
  }
}

TEST_CASE("input gradients match finite differences") {
  Rng rng = Rng::seeded(777);
  Mlp net(3, {6, 5}, 2);
  net.init(rng);
  std::vector<double> x = {0.4, -0.2, 1.1};
  // loss = sum of outputs squared
  auto loss_at = [&](const std::vector<double>& xx) {
    MlpCache c;
    const double* y = net.forward(xx.data(), 1, c);
    return y[0] * y[0] + y[1] * y[1];
  };
  MlpCache c;
  const double* y = net.forward(x.data(), 1, c);
  std::vector<double> dY = {2 * y[0], 2 * y[1]};
  std::vector<double> dX(3);
  net.backward(c, dY.data(), nullptr, dX.data());
  auto fd = testsup::finite_diff_grad(loss_at, x);
  CHECK(testsup::max_rel_err(dX, fd) < 1e-4);
}

TEST_CASE("constant loss yields zero gradient") {
  Rng rng = Rng::seeded(8);
  Mlp net(2, {4}, 2);
  net.init(rng);
  std::vector<double> x = {1.0, -1.0};
  MlpCache c;
  net.forward(x.data(), 1, c);
  std::vector<double> dY = {0.0, 0.0};
  std::vector<double> grad(net.layout.n_params, 0.0);
  net.backward(c, dY.data(), grad.data(), nullptr);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("nll gradient w.r.t mean vanishes at the target") {
  GaussianHead h;
  h.mean = {0.2, -0.4};
  h.log_var = {-1.0, 0.3};
  std::vector<double> dm(2), dl(2);
  gaussian_nll_grad(h.mean.data(), h.log_var.data(), h.mean.data(), 2,
                    dm.data(), dl.data());
  CHECK(dm[0] == 0.0);
  CHECK(dm[1] == 0.0);
}

TEST_CASE("adam optimizer") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Adam opt(1e-3);
    std::vector<double> p = {1.0, -2.0};
    std::vector<double> g = {0.0, 0.0};
    auto before = p;
    CHECK(opt.step(p, g));
    // m/bc1 = 0, so the update is exactly zero
    CHECK(p == before);
  }
  SUBCASE("first step equals lr times sign-normalized gradient") {
    const double lr = 3e-4, eps = 1e-8;
    Adam opt(lr);
    opt.eps = eps;
    std::vector<double> p = {0.5};
    const double g0 = 0.73;
    std::vector<double> g = {g0};
    CHECK(opt.step(p, g));
    const double expect = 0.5 - lr * g0 / (std::abs(g0) + eps);
    CHECK(p[0] == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("same seed, same trajectory") {
    auto run = [] {
      Rng rng = Rng::seeded(99);
      Mlp net(2, {4}, 2);
      net.init(rng);
      Adam opt(1e-2);
      std::vector<double> x = {0.5, -1.0};
      for (int i = 0; i < 25; ++i) {
        MlpCache c;
        const double* y = net.forward(x.data(), 1, c);
        std::vector<double> dY = {2 * y[0], 2 * (y[1] - 1.0)};
        std::vector<double> grad(net.layout.n_params, 0.0);
        net.backward(c, dY.data(), grad.data(), nullptr);
        opt.step(net.params, grad);
      }
      return net.params;
    };
    CHECK(run() == run());
  }
  SUBCASE("nan gradient rejects the step and counts it") {
    Adam opt(1e-3);
    std::vector<double> p = {1.0};
    std::vector<double> g = {std::nan("")};
    auto before = p;
    CHECK_FALSE(opt.step(p, g));
    CHECK(p == before);
    CHECK(opt.rejected == 1);
  }
}

TEST_CASE("diagonal gaussian sampling") {
  SUBCASE("clamp-min variance collapses the sample onto the mean") {
    GaussianHead h;
    h.mean = {2.0, -3.0};
    h.log_var = {kLogVarMin, kLogVarMin};
    Rng rng = Rng::seeded(4);
    auto s = sample_diag_gaussian(h, rng);
    // sigma = exp(-5) ~ 6.7e-3
    CHECK(std::abs(s[0] - 2.0) < 0.05);
    CHECK(std::abs(s[1] + 3.0) < 0.05);
  }
  SUBCASE("empirical mean of 1e5 draws is within 4 sigma / sqrt(n)") {
    GaussianHead h;
    h.mean = {0.5};
    h.log_var = {std::log(0.25)};  // sigma = 0.5
    Rng rng = Rng::seeded(21);
    const int n = 100000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += sample_diag_gaussian(h, rng)[0];
    const double mean = acc / n;
    CHECK(std::abs(mean - 0.5) < 4.0 * 0.5 / std::sqrt(n));
  }
  SUBCASE("fixed seed reproduces the draw") {
    GaussianHead h;
    h.mean = {0.0, 1.0};
    h.log_var = {0.0, -1.0};
    Rng a = Rng::seeded(7), b = Rng::seeded(7);
    CHECK(sample_diag_gaussian(h, a) == sample_diag_gaussian(h, b));
  }
}

TEST_CASE("log-variance clamp keeps heads in bounds everywhere") {
  for (double raw : {-1e9, -50.0, -10.0, -1.0, 0.0, 0.49, 10.0, 1e9}) {
    const double lv = clamp_logvar(raw);
    CHECK(lv >= kLogVarMin - 1e-9);
    CHECK(lv <= kLogVarMax + 1e-4);  // soft clamp overshoot bound
  }
  // clamp derivative agrees with finite differences
  for (double raw : {-12.0, -3.0, 0.0, 0.4, 2.0}) {
    double d;
    clamp_logvar(raw, &d);
    const double fd =
        (clamp_logvar(raw + 1e-6) - clamp_logvar(raw - 1e-6)) / 2e-6;
    CHECK(d == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("heads respect clamp bounds after optimizer steps") {
  Rng rng = Rng::seeded(31);
  Mlp net(2, {8}, 4);
  net.init(rng);
  Adam opt(0.05);  // aggressive on purpose
  std::vector<double> x = {1.0, 2.0};
  std::vector<double> t = {5.0, -5.0};
  for (int i = 0; i < 200; ++i) {
    MlpCache c;
    const double* Y = net.forward(x.data(), 1, c);
    HeadBatch hb = make_head_batch(Y, 1, 2);
    std::vector<double> dm(2), dl(2);
    gaussian_nll_grad(hb.mean_row(0), hb.lv_row(0), t.data(), 2, dm.data(),
                      dl.data());
    std::vector<double> dY(4);
    head_grads_to_raw(hb, dm.data(), dl.data(), dY.data());
    std::vector<double> grad(net.layout.n_params, 0.0);
    net.backward(c, dY.data(), grad.data(), nullptr);
    opt.step(net.params, grad);

    GaussianHead h = gaussian_forward(net, x);
    for (double lv : h.log_var) {
      CHECK(lv >= kLogVarMin - 1e-9);
      CHECK(lv <= kLogVarMax + 1e-4);
    }
  }
}
