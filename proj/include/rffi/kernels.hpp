#ifndef RFFI_KERNELS_HPP
#define RFFI_KERNELS_HPP

#include <cstddef>

// Numeric kernels used by the layer dispatcher. Two implementations share
// one per-element code path: rffi::kernels runs the outer loops under
// OpenMP, rffi::kernels_serial runs them on one thread. Every output
// element is computed by identical code with identical summation order, so
// the two namespaces produce bit-identical results and the parallel kernels
// are deterministic for any thread count.
//
// Layouts (row-major):
//   dense    x[B,I]        w[O,I]        y[B,O]
//   conv1d   x[B,Cin,L]    w[Cout,Cin,K] y[B,Cout,Lout], Lout=(L-K)/S+1
//   bn/gap   x[B,C,L]
//   softmax  x[B,N] row-wise

#define RFFI_DECLARE_KERNELS                                                   \
  void dense_forward(const double* x, const double* w, const double* b,       \
                     double* y, std::size_t B, std::size_t I, std::size_t O); \
  void dense_backward(const double* x, const double* w, const double* dy,     \
                      double* dx, double* dw, double* db, std::size_t B,       \
                      std::size_t I, std::size_t O);                           \
  void conv1d_forward(const double* x, const double* w, const double* b,       \
                      double* y, std::size_t B, std::size_t Cin,               \
                      std::size_t L, std::size_t Cout, std::size_t K,          \
                      std::size_t S);                                          \
  void conv1d_backward(const double* x, const double* w, const double* dy,     \
                       double* dx, double* dw, double* db, std::size_t B,      \
                       std::size_t Cin, std::size_t L, std::size_t Cout,       \
                       std::size_t K, std::size_t S);                          \
  void relu_forward(const double* x, double* y, std::size_t n);                \
  void relu_backward(const double* x, const double* dy, double* dx,            \
                     std::size_t n);                                           \
  void batchnorm_stats(const double* x, std::size_t B, std::size_t C,          \
                       std::size_t L, double* mean, double* var);              \
  void batchnorm_forward(const double* x, const double* gamma,                 \
                         const double* beta, const double* mean,               \
                         const double* var, double eps, double* y,             \
                         double* xhat, std::size_t B, std::size_t C,           \
                         std::size_t L);                                       \
  void batchnorm_backward(const double* xhat, const double* gamma,             \
                          const double* var, double eps, const double* dy,     \
                          double* dx, double* dgamma, double* dbeta,           \
                          std::size_t B, std::size_t C, std::size_t L,         \
                          bool batch_stats);                                   \
  void gap_forward(const double* x, double* y, std::size_t B, std::size_t C,   \
                   std::size_t L);                                             \
  void gap_backward(const double* dy, double* dx, std::size_t B,               \
                    std::size_t C, std::size_t L);                             \
  void softmax_forward(const double* x, double* y, std::size_t B,              \
                       std::size_t N);                                         \
  void softmax_backward(const double* y, const double* dy, double* dx,         \
                        std::size_t B, std::size_t N);

namespace rffi::kernels {
RFFI_DECLARE_KERNELS
}

namespace rffi::kernels_serial {
RFFI_DECLARE_KERNELS
}

#undef RFFI_DECLARE_KERNELS

#endif
