#include "rffi/kernels.hpp"

#include <cmath>
#include <cstdint>

#define RFFI_PAR_FOR

namespace rffi::kernels_serial {
#include "kernels_body.inl"
}
