#include "rffi/kernels.hpp"

#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#define RFFI_PAR_FOR _Pragma("omp parallel for schedule(static)")
#else
#define RFFI_PAR_FOR
#endif

namespace rffi::kernels {
#include "kernels_body.inl"
}
