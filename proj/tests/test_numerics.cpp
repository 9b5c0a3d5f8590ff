#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rffi/kernels.hpp"
#include "rffi/layers.hpp"
#include "rffi/rng.hpp"
#include "rffi/tensor.hpp"

using namespace rffi;

namespace {

std::vector<double> random_vec(std::size_t n, RngStream& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Scalar loss over a stack: fixed random projection of the output.
double stack_param_fd(std::vector<LayerSpec> specs,
                      std::vector<std::size_t> in_shape, Mode mode,
                      std::uint64_t seed) {
  LayerStack stack(std::move(specs), "fd");
  RngStream rng = RngStream::derive(seed, "test.fd");
  stack.init_params(rng);
  Tensor x(in_shape);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  Tensor probe = stack.forward(x, mode);
  std::vector<double> r = random_vec(probe.size(), rng);

  std::vector<double> flat = stack.flatten_values();
  auto loss = [&]() {
    stack.assign_values(flat);
    Tensor y = stack.forward(x, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  loss();
  stack.zero_grads();
  Tensor y = stack.forward(x, mode);
  Tensor dy(y.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = r[i];
  stack.backward(dy);
  std::vector<double> analytic = stack.flatten_grads();
  return finite_diff_check(loss, flat.data(), analytic.data(), flat.size(),
                           1e-5);
}

} // namespace

TEST_CASE("tensor shape and accessors") {
  Tensor t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.size() == 24);
  CHECK(t.dim(1) == 3);
  t.at3(1, 2, 3) = 7.5;
  CHECK(t[23] == 7.5);
  Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(m.at2(1, 2) == 6.0);
  m.fill(0.25);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == 0.25);
}

TEST_CASE("sgd update subtracts scaled grads and clears them") {
  std::vector<ParamBlock> blocks;
  blocks.emplace_back("w", 3);
  blocks[0].values = {1.0, 2.0, 3.0};
  blocks[0].grad = {0.5, -0.5, 2.0};
  sgd_update(blocks, 0.1);
  CHECK(blocks[0].values[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(blocks[0].values[1] == doctest::Approx(2.05).epsilon(1e-15));
  CHECK(blocks[0].values[2] == doctest::Approx(2.8).epsilon(1e-15));
  for (double g : blocks[0].grad) CHECK(g == 0.0);
}

TEST_CASE("rng streams are deterministic and purpose-separated") {
  RngStream a = RngStream::derive(42, "alpha");
  RngStream b = RngStream::derive(42, "alpha");
  RngStream c = RngStream::derive(42, "beta");
  RngStream d = RngStream::derive(42, "alpha", 1);
  bool same = true, diff_purpose = false, diff_index = false;
  for (int i = 0; i < 64; ++i) {
    std::uint64_t va = a.next_u64();
    if (va != b.next_u64()) same = false;
    if (va != c.next_u64()) diff_purpose = true;
    if (va != d.next_u64()) diff_index = true;
  }
  CHECK(same);
  CHECK(diff_purpose);
  CHECK(diff_index);
}

TEST_CASE("rng draws respect their supports") {
  RngStream rng = RngStream::derive(7, "test.support");
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double v = rng.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
    CHECK(rng.uniform_int(5) < 5);
  }
}

TEST_CASE("rng shuffle is a permutation") {
  RngStream rng = RngStream::derive(9, "test.shuffle");
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::set<int> seen(v.begin(), v.end());
  CHECK(seen.size() == 50);
}

TEST_CASE("dense forward matches the hand oracle") {
  // y[b,o] = sum_i x[b,i] w[o,i] + b[o]
  std::vector<double> x = {1, 2, 3, -1, 0, 2};
  std::vector<double> w = {0.5, -1, 2, 1, 1, 1};
  std::vector<double> b = {0.25, -0.5};
  std::vector<double> y(4, 0.0);
  kernels::dense_forward(x.data(), w.data(), b.data(), y.data(), 2, 3, 2);
  CHECK(y[0] == doctest::Approx(1 * 0.5 + 2 * -1 + 3 * 2 + 0.25).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(1 + 2 + 3 - 0.5).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(-0.5 + 4 + 0.25).epsilon(1e-15));
  CHECK(y[3] == doctest::Approx(-1 + 2 - 0.5).epsilon(1e-15));
}

TEST_CASE("conv1d forward matches a naive loop") {
  const std::size_t B = 3, Cin = 4, L = 37, Cout = 6, K = 5, S = 2;
  const std::size_t Lout = (L - K) / S + 1;
  RngStream rng = RngStream::derive(11, "test.conv");
  auto x = random_vec(B * Cin * L, rng);
  auto w = random_vec(Cout * Cin * K, rng);
  auto b = random_vec(Cout, rng);
  std::vector<double> y(B * Cout * Lout, 0.0);
  kernels::conv1d_forward(x.data(), w.data(), b.data(), y.data(), B, Cin, L,
                          Cout, K, S);
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t t = 0; t < Lout; ++t) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < Cin; ++ci)
          for (std::size_t k = 0; k < K; ++k)
            acc += x[(bi * Cin + ci) * L + t * S + k] *
                   w[(co * Cin + ci) * K + k];
        CHECK(y[(bi * Cout + co) * Lout + t] ==
              doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("relu clamps and uses subgradient zero at the kink") {
  std::vector<double> x = {-1.0, 0.0, 2.5};
  std::vector<double> y(3), dx(3);
  std::vector<double> dy = {1.0, 1.0, 1.0};
  kernels::relu_forward(x.data(), y.data(), 3);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.5);
  kernels::relu_backward(x.data(), dy.data(), dx.data(), 3);
  CHECK(dx[0] == 0.0);
  CHECK(dx[1] == 0.0);
  CHECK(dx[2] == 1.0);
}

TEST_CASE("gap forward averages over length") {
  std::vector<double> x = {1, 2, 3, 4, 10, 20, 30, 40};
  std::vector<double> y(2, 0.0);
  kernels::gap_forward(x.data(), y.data(), 1, 2, 4);
  CHECK(y[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(25.0).epsilon(1e-15));
}

TEST_CASE("softmax rows are simplex points and shift-invariant") {
  RngStream rng = RngStream::derive(3, "test.softmax");
  const std::size_t B = 4, N = 7;
  auto x = random_vec(B * N, rng, 3.0);
  std::vector<double> y(B * N), y2(B * N);
  kernels::softmax_forward(x.data(), y.data(), B, N);
  auto xs = x;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < N; ++j) xs[b * N + j] += 1000.0;
  kernels::softmax_forward(xs.data(), y2.data(), B, N);
  for (std::size_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      CHECK(y[b * N + j] > 0.0);
      s += y[b * N + j];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < N; ++j)
      CHECK(y2[b * N + j] == doctest::Approx(y[b * N + j]).epsilon(1e-9));
  }
}

TEST_CASE("batchnorm train mode uses biased batch stats and momentum 0.1") {
  LayerStack stack({LayerSpec::batchnorm(2)}, "bn");
  RngStream rng = RngStream::derive(5, "test.bn");
  stack.init_params(rng);
  auto& layer = stack.layers()[0];
  layer.params[0].values = {2.0, 0.5};   // gamma
  layer.params[1].values = {1.0, -1.0};  // beta

  const std::size_t B = 2, C = 2, L = 3;
  Tensor x({B, C, L}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Tensor y = stack.forward(x, Mode::Train);

  // Channel stats over batch and length, biased variance.
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) mean += x.at3(b, c, l);
    mean /= double(B * L);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) {
        double d = x.at3(b, c, l) - mean;
        var += d * d;
      }
    var /= double(B * L);
    double gamma = layer.params[0].values[c];
    double beta = layer.params[1].values[c];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) {
        double expect =
            gamma * (x.at3(b, c, l) - mean) / std::sqrt(var + LayerStack::kBnEps) +
            beta;
        CHECK(y.at3(b, c, l) == doctest::Approx(expect).epsilon(1e-12));
      }
    CHECK(layer.running_mean[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
    CHECK(layer.running_var[c] ==
          doctest::Approx(0.9 * 1.0 + 0.1 * var).epsilon(1e-12));
  }

  // Infer mode reads the running statistics, not the batch.
  Tensor z = stack.forward(x, Mode::Infer);
  for (std::size_t c = 0; c < C; ++c) {
    double gamma = layer.params[0].values[c];
    double beta = layer.params[1].values[c];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) {
        double expect = gamma * (x.at3(b, c, l) - layer.running_mean[c]) /
                            std::sqrt(layer.running_var[c] + LayerStack::kBnEps) +
                        beta;
        CHECK(z.at3(b, c, l) == doctest::Approx(expect).epsilon(1e-12));
      }
  }
}

TEST_CASE("finite_diff_check flags a wrong gradient") {
  // f(v) = v0^2 + 3 v1, grad = (2 v0, 3).
  std::vector<double> v = {1.5, -0.75};
  auto loss = [&]() { return v[0] * v[0] + 3.0 * v[1]; };
  std::vector<double> good = {2.0 * v[0], 3.0};
  std::vector<double> bad = {2.0 * v[0] + 1.0, 3.0};
  CHECK(finite_diff_check(loss, v.data(), good.data(), 2, 1e-5) < 1e-7);
  CHECK(finite_diff_check(loss, v.data(), bad.data(), 2, 1e-5) > 0.1);
}

TEST_CASE("stack gradients pass finite differences per layer kind") {
  CHECK(stack_param_fd({LayerSpec::dense(6, 4)}, {3, 6}, Mode::Train, 101) <
        1e-6);
  CHECK(stack_param_fd({LayerSpec::conv1d(2, 3, 3, 2), LayerSpec::relu()},
                       {2, 2, 11}, Mode::Train, 102) < 1e-6);
  CHECK(stack_param_fd({LayerSpec::conv1d(2, 4, 5, 2), LayerSpec::batchnorm(4),
                        LayerSpec::relu(), LayerSpec::gap()},
                       {3, 2, 17}, Mode::Infer, 103) < 1e-6);
  CHECK(stack_param_fd({LayerSpec::dense(5, 4), LayerSpec::softmax()}, {4, 5},
                       Mode::Train, 104) < 1e-6);
}

TEST_CASE("parallel and serial kernels agree bit for bit") {
  RngStream rng = RngStream::derive(77, "test.par");
  const std::size_t B = 5, I = 17, O = 9;
  const std::size_t Cin = 4, L = 37, Cout = 6, K = 5, S = 2;
  const std::size_t Lout = (L - K) / S + 1;
  const std::size_t BC = 4, CC = 3, LC = 25;

  auto xd = random_vec(B * I, rng);
  auto wd = random_vec(O * I, rng);
  auto bd = random_vec(O, rng);
  auto dyd = random_vec(B * O, rng);
  auto xc = random_vec(B * Cin * L, rng);
  auto wc = random_vec(Cout * Cin * K, rng);
  auto bc = random_vec(Cout, rng);
  auto dyc = random_vec(B * Cout * Lout, rng);
  auto xb = random_vec(BC * CC * LC, rng);
  auto gb = random_vec(CC, rng);
  auto bb = random_vec(CC, rng);
  auto dyb = random_vec(BC * CC * LC, rng);

#ifdef _OPENMP
  const int thread_counts[] = {1, 2, 3, 7};
#else
  const int thread_counts[] = {1};
#endif
  for (int nt : thread_counts) {
    CAPTURE(nt);
#ifdef _OPENMP
    omp_set_num_threads(nt);
#endif
    {
      std::vector<double> yp(B * O), ys(B * O);
      kernels::dense_forward(xd.data(), wd.data(), bd.data(), yp.data(), B, I, O);
      kernels_serial::dense_forward(xd.data(), wd.data(), bd.data(), ys.data(),
                                    B, I, O);
      CHECK(bit_equal(yp, ys));
      std::vector<double> dxp(B * I), dwp(O * I), dbp(O);
      std::vector<double> dxs(B * I), dws(O * I), dbs(O);
      kernels::dense_backward(xd.data(), wd.data(), dyd.data(), dxp.data(),
                              dwp.data(), dbp.data(), B, I, O);
      kernels_serial::dense_backward(xd.data(), wd.data(), dyd.data(),
                                     dxs.data(), dws.data(), dbs.data(), B, I,
                                     O);
      CHECK(bit_equal(dxp, dxs));
      CHECK(bit_equal(dwp, dws));
      CHECK(bit_equal(dbp, dbs));
    }
    {
      std::vector<double> yp(B * Cout * Lout), ys(B * Cout * Lout);
      kernels::conv1d_forward(xc.data(), wc.data(), bc.data(), yp.data(), B,
                              Cin, L, Cout, K, S);
      kernels_serial::conv1d_forward(xc.data(), wc.data(), bc.data(), ys.data(),
                                     B, Cin, L, Cout, K, S);
      CHECK(bit_equal(yp, ys));
      std::vector<double> dxp(B * Cin * L), dwp(Cout * Cin * K), dbp(Cout);
      std::vector<double> dxs(B * Cin * L), dws(Cout * Cin * K), dbs(Cout);
      kernels::conv1d_backward(xc.data(), wc.data(), dyc.data(), dxp.data(),
                               dwp.data(), dbp.data(), B, Cin, L, Cout, K, S);
      kernels_serial::conv1d_backward(xc.data(), wc.data(), dyc.data(),
                                      dxs.data(), dws.data(), dbs.data(), B,
                                      Cin, L, Cout, K, S);
      CHECK(bit_equal(dxp, dxs));
      CHECK(bit_equal(dwp, dws));
      CHECK(bit_equal(dbp, dbs));
    }
    {
      std::vector<double> mp(CC), vp(CC), ms(CC), vs(CC);
      kernels::batchnorm_stats(xb.data(), BC, CC, LC, mp.data(), vp.data());
      kernels_serial::batchnorm_stats(xb.data(), BC, CC, LC, ms.data(),
                                      vs.data());
      CHECK(bit_equal(mp, ms));
      CHECK(bit_equal(vp, vs));
      std::vector<double> yp(BC * CC * LC), xhp(BC * CC * LC);
      std::vector<double> ys(BC * CC * LC), xhs(BC * CC * LC);
      kernels::batchnorm_forward(xb.data(), gb.data(), bb.data(), mp.data(),
                                 vp.data(), 1e-5, yp.data(), xhp.data(), BC, CC,
                                 LC);
      kernels_serial::batchnorm_forward(xb.data(), gb.data(), bb.data(),
                                        ms.data(), vs.data(), 1e-5, ys.data(),
                                        xhs.data(), BC, CC, LC);
      CHECK(bit_equal(yp, ys));
      CHECK(bit_equal(xhp, xhs));
      std::vector<double> dxp(BC * CC * LC), dgp(CC), dbp2(CC);
      std::vector<double> dxs(BC * CC * LC), dgs(CC), dbs2(CC);
      kernels::batchnorm_backward(xhp.data(), gb.data(), vp.data(), 1e-5,
                                  dyb.data(), dxp.data(), dgp.data(),
                                  dbp2.data(), BC, CC, LC, true);
      kernels_serial::batchnorm_backward(xhs.data(), gb.data(), vs.data(), 1e-5,
                                         dyb.data(), dxs.data(), dgs.data(),
                                         dbs2.data(), BC, CC, LC, true);
      CHECK(bit_equal(dxp, dxs));
      CHECK(bit_equal(dgp, dgs));
      CHECK(bit_equal(dbp2, dbs2));
    }
    {
      std::vector<double> yp(BC * CC), ys(BC * CC);
      kernels::gap_forward(xb.data(), yp.data(), BC, CC, LC);
      kernels_serial::gap_forward(xb.data(), ys.data(), BC, CC, LC);
      CHECK(bit_equal(yp, ys));
      std::vector<double> rp(BC * CC * LC), rs(BC * CC * LC);
      std::vector<double> yr = random_vec(BC * CC, rng);
      kernels::gap_backward(yr.data(), rp.data(), BC, CC, LC);
      kernels_serial::gap_backward(yr.data(), rs.data(), BC, CC, LC);
      CHECK(bit_equal(rp, rs));
    }
    {
      std::vector<double> yp(B * O), ys(B * O), dxp(B * O), dxs(B * O);
      kernels::softmax_forward(dyd.data(), yp.data(), B, O);
      kernels_serial::softmax_forward(dyd.data(), ys.data(), B, O);
      CHECK(bit_equal(yp, ys));
      kernels::softmax_backward(yp.data(), dyd.data(), dxp.data(), B, O);
      kernels_serial::softmax_backward(ys.data(), dyd.data(), dxs.data(), B, O);
      CHECK(bit_equal(dxp, dxs));
      std::vector<double> rp(B * O), rs(B * O);
      kernels::relu_forward(dyd.data(), rp.data(), B * O);
      kernels_serial::relu_forward(dyd.data(), rs.data(), B * O);
      CHECK(bit_equal(rp, rs));
      kernels::relu_backward(dyd.data(), yp.data(), rp.data(), B * O);
      kernels_serial::relu_backward(dyd.data(), ys.data(), rs.data(), B * O);
      CHECK(bit_equal(rp, rs));
    }
  }
}
