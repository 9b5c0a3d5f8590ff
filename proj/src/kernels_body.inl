// Kernel bodies shared by rffi::kernels and rffi::kernels_serial. The
// including file defines RFFI_PAR_FOR as an OpenMP parallel-for pragma or as
// nothing. Each parallel iteration writes a disjoint slice of the output and
// performs its inner work in a fixed order that does not depend on the
// thread count, so both builds give bit-identical results. Parameter
// gradients (dw, db, dgamma, dbeta) are accumulated with +=; input gradients
// (dx) are overwritten.
//
// Reductions use eight fixed accumulator lanes (lane = index mod 8) folded
// by a fixed tree. The lane assignment is part of the kernel contract: it
// keeps long dependency chains off the critical path without introducing
// any thread-dependent summation order.

inline double lane_fold(const double* acc) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline void lane_sum(const double* a, std::size_t n, double* acc) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j];
  for (; i < n; ++i) acc[i & 7] += a[i];
}

inline double blocked_sum(const double* a, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  lane_sum(a, n, acc);
  return lane_fold(acc);
}

inline double blocked_dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  for (; i < n; ++i) acc[i & 7] += a[i] * b[i];
  return lane_fold(acc);
}

void dense_forward(const double* x, const double* w, const double* b,
                   double* y, std::size_t B, std::size_t I, std::size_t O) {
  const std::int64_t total = static_cast<std::int64_t>(B * O);
  RFFI_PAR_FOR
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const std::size_t bi = static_cast<std::size_t>(idx) / O;
    const std::size_t o = static_cast<std::size_t>(idx) % O;
    y[idx] = b[o] + blocked_dot(x + bi * I, w + o * I, I);
  }
}

void dense_backward(const double* x, const double* w, const double* dy,
                    double* dx, double* dw, double* db, std::size_t B,
                    std::size_t I, std::size_t O) {
  {
    // Each batch row owns one dx row; contributions arrive in ascending o.
    const std::int64_t total = static_cast<std::int64_t>(B);
    RFFI_PAR_FOR
    for (std::int64_t bi = 0; bi < total; ++bi) {
      const double* dyr = dy + static_cast<std::size_t>(bi) * O;
      double* dxr = dx + static_cast<std::size_t>(bi) * I;
      for (std::size_t i = 0; i < I; ++i) dxr[i] = 0.0;
      for (std::size_t o = 0; o < O; ++o) {
        const double d = dyr[o];
        const double* wr = w + o * I;
        for (std::size_t i = 0; i < I; ++i) dxr[i] += d * wr[i];
      }
    }
  }
  {
    // Each output owns its dw row and db entry; contributions arrive in
    // ascending bi.
    const std::int64_t total = static_cast<std::int64_t>(O);
    RFFI_PAR_FOR
    for (std::int64_t oi = 0; oi < total; ++oi) {
      const std::size_t o = static_cast<std::size_t>(oi);
      double* dwr = dw + o * I;
      double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      for (std::size_t bi = 0; bi < B; ++bi) {
        const double d = dy[bi * O + o];
        const double* xr = x + bi * I;
        for (std::size_t i = 0; i < I; ++i) dwr[i] += d * xr[i];
        acc[bi & 7] += d;
      }
      db[o] += lane_fold(acc);
    }
  }
}

void conv1d_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t B, std::size_t Cin, std::size_t L,
                    std::size_t Cout, std::size_t K, std::size_t S) {
  const std::size_t Lout = (L - K) / S + 1;
  const std::int64_t total = static_cast<std::int64_t>(B * Cout);
  // Each (batch, channel) pair owns one output row; per element the
  // accumulation order is bias, then (ci, k) ascending.
  RFFI_PAR_FOR
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const std::size_t bi = static_cast<std::size_t>(idx) / Cout;
    const std::size_t co = static_cast<std::size_t>(idx) % Cout;
    double* yr = y + static_cast<std::size_t>(idx) * Lout;
    for (std::size_t t = 0; t < Lout; ++t) yr[t] = b[co];
    for (std::size_t ci = 0; ci < Cin; ++ci) {
      const double* xr = x + (bi * Cin + ci) * L;
      const double* wr = w + (co * Cin + ci) * K;
      for (std::size_t k = 0; k < K; ++k) {
        const double wv = wr[k];
        const double* xk = xr + k;
        for (std::size_t t = 0; t < Lout; ++t) yr[t] += wv * xk[t * S];
      }
    }
  }
}

void conv1d_backward(const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db, std::size_t B,
                     std::size_t Cin, std::size_t L, std::size_t Cout,
                     std::size_t K, std::size_t S) {
  const std::size_t Lout = (L - K) / S + 1;
  {
    // Each (batch, channel) pair owns one dx row; per element the
    // contributions arrive in (co, k) ascending order. Positions are
    // grouped by k mod S so every inner loop writes unit-stride into a
    // phase buffer; rows too long for the buffer fall back to strided
    // stores, which are still disjoint for a fixed k.
    constexpr std::size_t kPhaseBuf = 2048;
    const std::int64_t total = static_cast<std::int64_t>(B * Cin);
    RFFI_PAR_FOR
    for (std::int64_t idx = 0; idx < total; ++idx) {
      const std::size_t bi = static_cast<std::size_t>(idx) / Cin;
      const std::size_t ci = static_cast<std::size_t>(idx) % Cin;
      double* dxr = dx + static_cast<std::size_t>(idx) * L;
      if ((L + S - 1) / S <= kPhaseBuf) {
        double tmp[kPhaseBuf];
        for (std::size_t p = 0; p < S && p < L; ++p) {
          const std::size_t mlen = (L - p + S - 1) / S;
          for (std::size_t m = 0; m < mlen; ++m) tmp[m] = 0.0;
          for (std::size_t co = 0; co < Cout; ++co) {
            const double* dyr = dy + (bi * Cout + co) * Lout;
            const double* wr = w + (co * Cin + ci) * K;
            for (std::size_t k = p; k < K; k += S) {
              const double wv = wr[k];
              double* dst = tmp + (k - p) / S;
              for (std::size_t t = 0; t < Lout; ++t) dst[t] += dyr[t] * wv;
            }
          }
          for (std::size_t m = 0; m < mlen; ++m) dxr[p + m * S] = tmp[m];
        }
      } else {
        for (std::size_t n = 0; n < L; ++n) dxr[n] = 0.0;
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* dyr = dy + (bi * Cout + co) * Lout;
          const double* wr = w + (co * Cin + ci) * K;
          for (std::size_t k = 0; k < K; ++k) {
            const double wv = wr[k];
            double* dn = dxr + k;
            for (std::size_t t = 0; t < Lout; ++t) dn[t * S] += dyr[t] * wv;
          }
        }
      }
    }
  }
  {
    // Each output channel owns its dw rows and db entry; contributions
    // arrive in (bi, t) ascending order.
    const std::int64_t total = static_cast<std::int64_t>(Cout);
    RFFI_PAR_FOR
    for (std::int64_t coi = 0; coi < total; ++coi) {
      const std::size_t co = static_cast<std::size_t>(coi);
      double* dwc = dw + co * Cin * K;
      double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      for (std::size_t bi = 0; bi < B; ++bi) {
        const double* dyr = dy + (bi * Cout + co) * Lout;
        const double* xb = x + bi * Cin * L;
        for (std::size_t t = 0; t < Lout; ++t) {
          const double d = dyr[t];
          const double* xt = xb + t * S;
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const double* xk = xt + ci * L;
            double* dwr = dwc + ci * K;
            for (std::size_t k = 0; k < K; ++k) dwr[k] += d * xk[k];
          }
          acc[t & 7] += d;
        }
      }
      db[co] += lane_fold(acc);
    }
  }
}

void relu_forward(const double* x, double* y, std::size_t n) {
  const std::int64_t total = static_cast<std::int64_t>(n);
  RFFI_PAR_FOR
  for (std::int64_t i = 0; i < total; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
  // Subgradient at 0 is 0.
  const std::int64_t total = static_cast<std::int64_t>(n);
  RFFI_PAR_FOR
  for (std::int64_t i = 0; i < total; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void batchnorm_stats(const double* x, std::size_t B, std::size_t C,
                     std::size_t L, double* mean, double* var) {
  const std::int64_t total = static_cast<std::int64_t>(C);
  const double m = static_cast<double>(B * L);
  RFFI_PAR_FOR
  for (std::int64_t ci = 0; ci < total; ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    double sacc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t bi = 0; bi < B; ++bi)
      lane_sum(x + (bi * C + c) * L, L, sacc);
    const double mu = lane_fold(sacc) / m;
    double vacc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t bi = 0; bi < B; ++bi) {
      const double* xr = x + (bi * C + c) * L;
      std::size_t l = 0;
      for (; l + 8 <= L; l += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
          const double d = xr[l + j] - mu;
          vacc[j] += d * d;
        }
      }
      for (; l < L; ++l) {
        const double d = xr[l] - mu;
        vacc[l & 7] += d * d;
      }
    }
    mean[c] = mu;
    var[c] = lane_fold(vacc) / m;  // biased
  }
}

void batchnorm_forward(const double* x, const double* gamma,
                       const double* beta, const double* mean,
                       const double* var, double eps, double* y, double* xhat,
                       std::size_t B, std::size_t C, std::size_t L) {
  const std::int64_t total = static_cast<std::int64_t>(B * C);
  RFFI_PAR_FOR
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const std::size_t c = static_cast<std::size_t>(idx) % C;
    const double inv_std = 1.0 / std::sqrt(var[c] + eps);
    const double mu = mean[c];
    const double g = gamma[c];
    const double be = beta[c];
    const double* xr = x + static_cast<std::size_t>(idx) * L;
    double* xhr = xhat + static_cast<std::size_t>(idx) * L;
    double* yr = y + static_cast<std::size_t>(idx) * L;
    for (std::size_t l = 0; l < L; ++l) {
      const double xh = (xr[l] - mu) * inv_std;
      xhr[l] = xh;
      yr[l] = g * xh + be;
    }
  }
}

void batchnorm_backward(const double* xhat, const double* gamma,
                        const double* var, double eps, const double* dy,
                        double* dx, double* dgamma, double* dbeta,
                        std::size_t B, std::size_t C, std::size_t L,
                        bool batch_stats) {
  const std::int64_t total = static_cast<std::int64_t>(C);
  const double m = static_cast<double>(B * L);
  RFFI_PAR_FOR
  for (std::int64_t ci = 0; ci < total; ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    const double inv_std = 1.0 / std::sqrt(var[c] + eps);
    double dyacc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    double dxhacc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t bi = 0; bi < B; ++bi) {
      const std::size_t base = (bi * C + c) * L;
      const double* dyr = dy + base;
      const double* xhr = xhat + base;
      std::size_t l = 0;
      for (; l + 8 <= L; l += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
          dyacc[j] += dyr[l + j];
          dxhacc[j] += dyr[l + j] * xhr[l + j];
        }
      }
      for (; l < L; ++l) {
        dyacc[l & 7] += dyr[l];
        dxhacc[l & 7] += dyr[l] * xhr[l];
      }
    }
    const double sum_dy = lane_fold(dyacc);
    const double sum_dy_xhat = lane_fold(dxhacc);
    dgamma[c] += sum_dy_xhat;
    dbeta[c] += sum_dy;
    if (batch_stats) {
      // Gradient through the batch mean and variance.
      const double scale = gamma[c] * inv_std / m;
      for (std::size_t bi = 0; bi < B; ++bi) {
        const std::size_t base = (bi * C + c) * L;
        for (std::size_t l = 0; l < L; ++l)
          dx[base + l] = scale * (m * dy[base + l] - sum_dy -
                                  xhat[base + l] * sum_dy_xhat);
      }
    } else {
      const double scale = gamma[c] * inv_std;
      for (std::size_t bi = 0; bi < B; ++bi) {
        const std::size_t base = (bi * C + c) * L;
        for (std::size_t l = 0; l < L; ++l) dx[base + l] = scale * dy[base + l];
      }
    }
  }
}

void gap_forward(const double* x, double* y, std::size_t B, std::size_t C,
                 std::size_t L) {
  const std::int64_t total = static_cast<std::int64_t>(B * C);
  RFFI_PAR_FOR
  for (std::int64_t idx = 0; idx < total; ++idx)
    y[idx] = blocked_sum(x + static_cast<std::size_t>(idx) * L, L) /
             static_cast<double>(L);
}

void gap_backward(const double* dy, double* dx, std::size_t B, std::size_t C,
                  std::size_t L) {
  const std::int64_t total = static_cast<std::int64_t>(B * C * L);
  RFFI_PAR_FOR
  for (std::int64_t idx = 0; idx < total; ++idx)
    dx[idx] = dy[static_cast<std::size_t>(idx) / L] / static_cast<double>(L);
}

void softmax_forward(const double* x, double* y, std::size_t B,
                     std::size_t N) {
  const std::int64_t total = static_cast<std::int64_t>(B);
  RFFI_PAR_FOR
  for (std::int64_t bi = 0; bi < total; ++bi) {
    const double* xr = x + static_cast<std::size_t>(bi) * N;
    double* yr = y + static_cast<std::size_t>(bi) * N;
    double mx = xr[0];
    for (std::size_t j = 1; j < N; ++j)
      if (xr[j] > mx) mx = xr[j];
    double sum = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < N; ++j) yr[j] /= sum;
  }
}

void softmax_backward(const double* y, const double* dy, double* dx,
                      std::size_t B, std::size_t N) {
  const std::int64_t total = static_cast<std::int64_t>(B);
  RFFI_PAR_FOR
  for (std::int64_t bi = 0; bi < total; ++bi) {
    const double* yr = y + static_cast<std::size_t>(bi) * N;
    const double* dyr = dy + static_cast<std::size_t>(bi) * N;
    double* dxr = dx + static_cast<std::size_t>(bi) * N;
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) s += dyr[j] * yr[j];
    for (std::size_t j = 0; j < N; ++j) dxr[j] = yr[j] * (dyr[j] - s);
  }
}
