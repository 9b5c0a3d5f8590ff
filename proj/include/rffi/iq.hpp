#ifndef RFFI_IQ_HPP
#define RFFI_IQ_HPP

#include <complex>
#include <vector>

namespace rffi {

using CVec = std::vector<std::complex<double>>;

// Mean power (mean squared magnitude).
double mean_power(const CVec& v);
// Root-mean-square magnitude.
double rms(const CVec& v);

} // namespace rffi

#endif
