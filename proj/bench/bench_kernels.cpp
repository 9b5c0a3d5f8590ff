#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "rffi/kernels.hpp"
#include "rffi/riei.hpp"
#include "rffi/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> filled(std::size_t n, rffi::RngStream& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double time_call(const std::function<void()>& fn) {
  fn();
  int reps = 1;
  double elapsed = 0.0;
  for (;;) {
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    if (elapsed >= 0.2 || reps >= 1 << 20) break;
    reps *= (elapsed < 0.01) ? 10 : 2;
  }
  return elapsed / reps;
}

struct Row {
  std::string name;
  double flops = 0.0;
  std::function<void()> par;
  std::function<void()> ser;
  const std::vector<double>* out_par = nullptr;
  const std::vector<double>* out_ser = nullptr;
};

void report(const Row& row) {
  const double tp = time_call(row.par);
  const double ts = time_call(row.ser);
  bool match = true;
  if (row.out_par && row.out_ser) {
    row.par();
    row.ser();
    match = row.out_par->size() == row.out_ser->size() &&
            std::memcmp(row.out_par->data(), row.out_ser->data(),
                        row.out_par->size() * sizeof(double)) == 0;
  }
  std::printf("%-34s %9.3f %9.3f %8.2f %8.2f %7.2fx  %s\n", row.name.c_str(),
              tp * 1e3, ts * 1e3, row.flops / tp * 1e-9, row.flops / ts * 1e-9,
              ts / tp, match ? "bitwise" : "MISMATCH");
}

struct ConvShape {
  std::size_t B, Cin, L, Cout, K, S;
  std::size_t lout() const { return (L - K) / S + 1; }
  std::size_t macs() const { return B * Cout * lout() * Cin * K; }
};

void bench_conv(const ConvShape& s, rffi::RngStream& rng) {
  const std::size_t Lout = s.lout();
  auto x = filled(s.B * s.Cin * s.L, rng);
  auto w = filled(s.Cout * s.Cin * s.K, rng);
  auto b = filled(s.Cout, rng);
  auto dy = filled(s.B * s.Cout * Lout, rng);
  std::vector<double> yp(s.B * s.Cout * Lout), ys(yp.size());
  std::vector<double> dxp(x.size()), dxs(x.size()), dwp(w.size()),
      dws(w.size()), dbp(s.Cout), dbs(s.Cout);

  char name[96];
  std::snprintf(name, sizeof name, "conv1d fwd %zux%zux%zu c%zu k%zu s%zu",
                s.B, s.Cin, s.L, s.Cout, s.K, s.S);
  Row fwd;
  fwd.name = name;
  fwd.flops = 2.0 * s.macs();
  fwd.par = [&, s] {
    rffi::kernels::conv1d_forward(x.data(), w.data(), b.data(), yp.data(), s.B,
                                  s.Cin, s.L, s.Cout, s.K, s.S);
  };
  fwd.ser = [&, s] {
    rffi::kernels_serial::conv1d_forward(x.data(), w.data(), b.data(),
                                         ys.data(), s.B, s.Cin, s.L, s.Cout,
                                         s.K, s.S);
  };
  fwd.out_par = &yp;
  fwd.out_ser = &ys;
  report(fwd);

  std::snprintf(name, sizeof name, "conv1d bwd %zux%zux%zu c%zu k%zu s%zu",
                s.B, s.Cin, s.L, s.Cout, s.K, s.S);
  Row bwd;
  bwd.name = name;
  bwd.flops = 4.0 * s.macs();
  bwd.par = [&, s] {
    std::memset(dwp.data(), 0, dwp.size() * sizeof(double));
    std::memset(dbp.data(), 0, dbp.size() * sizeof(double));
    rffi::kernels::conv1d_backward(x.data(), w.data(), dy.data(), dxp.data(),
                                   dwp.data(), dbp.data(), s.B, s.Cin, s.L,
                                   s.Cout, s.K, s.S);
  };
  bwd.ser = [&, s] {
    std::memset(dws.data(), 0, dws.size() * sizeof(double));
    std::memset(dbs.data(), 0, dbs.size() * sizeof(double));
    rffi::kernels_serial::conv1d_backward(x.data(), w.data(), dy.data(),
                                          dxs.data(), dws.data(), dbs.data(),
                                          s.B, s.Cin, s.L, s.Cout, s.K, s.S);
  };
  bwd.out_par = &dxp;
  bwd.out_ser = &dxs;
  report(bwd);
}

void bench_dense(std::size_t B, std::size_t I, std::size_t O,
                 rffi::RngStream& rng) {
  auto x = filled(B * I, rng);
  auto w = filled(O * I, rng);
  auto b = filled(O, rng);
  auto dy = filled(B * O, rng);
  std::vector<double> yp(B * O), ys(B * O), dxp(B * I), dxs(B * I),
      dwp(O * I), dws(O * I), dbp(O), dbs(O);

  char name[96];
  std::snprintf(name, sizeof name, "dense fwd %zux%zu->%zu", B, I, O);
  Row fwd;
  fwd.name = name;
  fwd.flops = 2.0 * B * I * O;
  fwd.par = [&] {
    rffi::kernels::dense_forward(x.data(), w.data(), b.data(), yp.data(), B, I,
                                 O);
  };
  fwd.ser = [&] {
    rffi::kernels_serial::dense_forward(x.data(), w.data(), b.data(),
                                        ys.data(), B, I, O);
  };
  fwd.out_par = &yp;
  fwd.out_ser = &ys;
  report(fwd);

  std::snprintf(name, sizeof name, "dense bwd %zux%zu->%zu", B, I, O);
  Row bwd;
  bwd.name = name;
  bwd.flops = 4.0 * B * I * O;
  bwd.par = [&] {
    std::memset(dwp.data(), 0, dwp.size() * sizeof(double));
    std::memset(dbp.data(), 0, dbp.size() * sizeof(double));
    rffi::kernels::dense_backward(x.data(), w.data(), dy.data(), dxp.data(),
                                  dwp.data(), dbp.data(), B, I, O);
  };
  bwd.ser = [&] {
    std::memset(dws.data(), 0, dws.size() * sizeof(double));
    std::memset(dbs.data(), 0, dbs.size() * sizeof(double));
    rffi::kernels_serial::dense_backward(x.data(), w.data(), dy.data(),
                                         dxs.data(), dws.data(), dbs.data(), B,
                                         I, O);
  };
  bwd.out_par = &dxp;
  bwd.out_ser = &dxs;
  report(bwd);
}

void bench_bn(std::size_t B, std::size_t C, std::size_t L,
              rffi::RngStream& rng) {
  auto x = filled(B * C * L, rng);
  auto gamma = filled(C, rng);
  auto beta = filled(C, rng);
  auto dy = filled(B * C * L, rng);
  std::vector<double> mean(C), var(C), yp(x.size()), ys(x.size()),
      xhat(x.size()), dxp(x.size()), dxs(x.size()), dgp(C), dgs(C), dbp(C),
      dbs(C);
  rffi::kernels::batchnorm_stats(x.data(), B, C, L, mean.data(), var.data());
  rffi::kernels::batchnorm_forward(x.data(), gamma.data(), beta.data(),
                                   mean.data(), var.data(), 1e-5, yp.data(),
                                   xhat.data(), B, C, L);

  char name[96];
  std::snprintf(name, sizeof name, "batchnorm fwd %zux%zux%zu", B, C, L);
  Row fwd;
  fwd.name = name;
  fwd.flops = 6.0 * x.size();
  fwd.par = [&] {
    rffi::kernels::batchnorm_stats(x.data(), B, C, L, mean.data(), var.data());
    rffi::kernels::batchnorm_forward(x.data(), gamma.data(), beta.data(),
                                     mean.data(), var.data(), 1e-5, yp.data(),
                                     xhat.data(), B, C, L);
  };
  fwd.ser = [&] {
    rffi::kernels_serial::batchnorm_stats(x.data(), B, C, L, mean.data(),
                                          var.data());
    rffi::kernels_serial::batchnorm_forward(x.data(), gamma.data(),
                                            beta.data(), mean.data(),
                                            var.data(), 1e-5, ys.data(),
                                            xhat.data(), B, C, L);
  };
  fwd.out_par = &yp;
  fwd.out_ser = &ys;
  report(fwd);

  std::snprintf(name, sizeof name, "batchnorm bwd %zux%zux%zu", B, C, L);
  Row bwd;
  bwd.name = name;
  bwd.flops = 9.0 * x.size();
  bwd.par = [&] {
    std::memset(dgp.data(), 0, C * sizeof(double));
    std::memset(dbp.data(), 0, C * sizeof(double));
    rffi::kernels::batchnorm_backward(xhat.data(), gamma.data(), var.data(),
                                      1e-5, dy.data(), dxp.data(), dgp.data(),
                                      dbp.data(), B, C, L, true);
  };
  bwd.ser = [&] {
    std::memset(dgs.data(), 0, C * sizeof(double));
    std::memset(dbs.data(), 0, C * sizeof(double));
    rffi::kernels_serial::batchnorm_backward(xhat.data(), gamma.data(),
                                             var.data(), 1e-5, dy.data(),
                                             dxs.data(), dgs.data(),
                                             dbs.data(), B, C, L, true);
  };
  bwd.out_par = &dxp;
  bwd.out_ser = &dxs;
  report(bwd);
}

rffi::riei::Batch random_batch(std::size_t n, std::size_t L, std::size_t M,
                               std::size_t K, rffi::RngStream& rng) {
  rffi::riei::Batch batch;
  batch.x = rffi::Tensor({n, 2, L});
  for (double& v : batch.x.vec()) v = rng.normal();
  batch.emitter.resize(n);
  batch.receiver.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.emitter[i] = 1 + static_cast<int>(rng.uniform_int(M));
    batch.receiver[i] = 1 + static_cast<int>(rng.uniform_int(K));
  }
  return batch;
}

void bench_steps(rffi::RngStream& rng) {
  const std::size_t M = 6, K = 4, L = 256, B = 64;
  auto arch = rffi::riei::Architecture::standard(M, K);
  rffi::riei::RieiParams model(arch);
  rffi::RngStream init(7);
  model.init(init);
  rffi::riei::TrainConfig cfg;
  auto batch = random_batch(B, L, M, K, rng);

  const double tc = time_call([&] { rffi::riei::classifier_step(model, batch, cfg); });
  const double tf = time_call([&] { rffi::riei::feature_step(model, batch, cfg); });
  const double te = time_call([&] {
    rffi::riei::fed_forward(model, batch.x, rffi::Mode::Infer);
  });
  std::printf("%-34s %9.3f ms/call\n", "classifier_step b=64", tc * 1e3);
  std::printf("%-34s %9.3f ms/call\n", "feature_step b=64", tf * 1e3);
  std::printf("%-34s %9.3f ms/call\n", "fed_forward eval b=64", te * 1e3);
}

}  // namespace

int main() {
  rffi::RngStream rng(42);
  std::printf("%-34s %9s %9s %8s %8s %8s\n", "kernel", "par ms", "ser ms",
              "par GF", "ser GF", "speedup");
  bench_conv({64, 2, 256, 16, 7, 2}, rng);
  bench_conv({64, 16, 125, 32, 5, 2}, rng);
  bench_conv({64, 32, 61, 32, 3, 2}, rng);
  bench_dense(64, 32, 64, rng);
  bench_dense(64, 32, 32, rng);
  bench_bn(64, 16, 125, rng);
  bench_bn(64, 32, 61, rng);
  std::printf("\n");
  bench_steps(rng);
  return 0;
}
