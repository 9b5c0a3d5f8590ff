#ifndef RFFI_DATASET_IO_HPP
#define RFFI_DATASET_IO_HPP

#include <string>

#include "rffi/synth.hpp"

namespace rffi::io {

// RFFD binary layout, all little-endian:
//   "RFFD" magic, u32 version=1, u32 M, u32 K, u32 L, u32 count  (24 bytes)
//   then count records: u16 emitter, u16 receiver, 2*L f32 interleaved
//   (I0, Q0, I1, Q1, ...), so each record is 4 + 8*L bytes.
// Labels are 1-based and must lie within the declared M, K.
void save_dataset(const std::string& path, const synth::Dataset& ds);
synth::Dataset load_dataset(const std::string& path);

} // namespace rffi::io

#endif
