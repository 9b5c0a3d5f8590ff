#include "rffi/dataset_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "bytes.hpp"
#include "rffi/errors.hpp"

namespace rffi::io {

void save_dataset(const std::string& path, const synth::Dataset& ds) {
  std::vector<unsigned char> buf;
  const std::size_t count = ds.total();
  buf.reserve(24 + count * (4 + 8 * ds.L));
  buf.insert(buf.end(), {'R', 'F', 'F', 'D'});
  bytes::put_u32(buf, 1);
  bytes::put_u32(buf, static_cast<std::uint32_t>(ds.M));
  bytes::put_u32(buf, static_cast<std::uint32_t>(ds.K));
  bytes::put_u32(buf, static_cast<std::uint32_t>(ds.L));
  bytes::put_u32(buf, static_cast<std::uint32_t>(count));
  for (const auto& recv : ds.per_receiver)
    for (const auto& sample : recv) {
      if (sample.frame.size() != ds.L)
        throw InvalidInputError("save_dataset: frame length mismatch");
      bytes::put_u16(buf, static_cast<std::uint16_t>(sample.emitter));
      bytes::put_u16(buf, static_cast<std::uint16_t>(sample.receiver));
      for (const auto& s : sample.frame) {
        bytes::put_f32(buf, static_cast<float>(s.real()));
        bytes::put_f32(buf, static_cast<float>(s.imag()));
      }
    }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInputError("save_dataset: cannot open " + path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw InvalidInputError("save_dataset: write failed for " + path);
}

synth::Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw InvalidInputError("load_dataset: cannot open " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw InvalidInputError("load_dataset: read failed for " + path);

  bytes::Reader r(buf.data(), buf.size());
  r.need(4, "magic");
  if (std::memcmp(buf.data(), "RFFD", 4) != 0)
    throw InvalidInputError("dataset: bad magic at byte offset 0");
  r.str(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw InvalidInputError("dataset: unsupported version " +
                            std::to_string(version) + " at byte offset 4");
  const std::uint32_t M = r.u32("M");
  const std::uint32_t K = r.u32("K");
  const std::uint32_t L = r.u32("frame_len");
  const std::uint32_t count = r.u32("count");
  if (M < 1 || K < 1 || L < 1)
    throw InvalidInputError("dataset: M, K, L must be positive");
  const std::size_t expected =
      24 +
      static_cast<std::size_t>(count) * (4 + 8 * static_cast<std::size_t>(L));
  if (buf.size() != expected)
    throw InvalidInputError(
        "dataset: file length " + std::to_string(buf.size()) +
        " does not match expected " + std::to_string(expected) +
        " (truncation at byte offset " + std::to_string(buf.size()) + ")");

  synth::Dataset ds;
  ds.M = M;
  ds.K = K;
  ds.L = L;
  ds.per_receiver.resize(K);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t rec_off = r.offset();
    const std::uint16_t emitter = r.u16("emitter label");
    const std::uint16_t receiver = r.u16("receiver label");
    if (emitter < 1 || emitter > M)
      throw InvalidInputError(
          "dataset: emitter label " + std::to_string(emitter) +
          " out of range at byte offset " + std::to_string(rec_off));
    if (receiver < 1 || receiver > K)
      throw InvalidInputError(
          "dataset: receiver label " + std::to_string(receiver) +
          " out of range at byte offset " + std::to_string(rec_off + 2));
    synth::LabeledSample sample;
    sample.emitter = emitter;
    sample.receiver = receiver;
    sample.frame.resize(L);
    for (std::uint32_t j = 0; j < L; ++j) {
      const float re = r.f32("I sample");
      const float im = r.f32("Q sample");
      sample.frame[j] = {static_cast<double>(re), static_cast<double>(im)};
    }
    ds.per_receiver[receiver - 1].push_back(std::move(sample));
  }
  return ds;
}

} // namespace rffi::io
